//! Matrix Market files and seeded workload generators.

use crate::golden::DenseMatrix;
use crate::spmv::{to_csc, CscMatrix, SpmvError};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum MatrixIoError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported Matrix Market format: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Matrix(#[from] SpmvError),
    #[error("infeasible nonzero range: {0}")]
    InfeasibleRange(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn parse_err(line: usize, msg: impl Into<String>) -> MatrixIoError {
    MatrixIoError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Coordinate-form sparse matrix with zero-based indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, f32)>,
}

impl TripletMatrix {
    pub fn to_csc(&self) -> Result<CscMatrix, SpmvError> {
        to_csc(self.nrows, self.ncols, &self.entries)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Field {
    Real,
    Integer,
    Pattern,
}

/// Reads a coordinate Matrix Market document. Symmetric matrices are
/// expanded; pattern matrices get value `1.0`.
pub fn read_matrix_market(text: &str) -> Result<TripletMatrix, MatrixIoError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let tokens: Vec<String> = header
        .split_whitespace()
        .map(str::to_ascii_lowercase)
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(1, "expected `%%MatrixMarket matrix ...` header"));
    }
    if tokens[2] != "coordinate" {
        return Err(MatrixIoError::Unsupported(tokens[2].clone()));
    }
    let field = match tokens[3].as_str() {
        "real" | "double" => Field::Real,
        "integer" => Field::Integer,
        "pattern" => Field::Pattern,
        other => return Err(MatrixIoError::Unsupported(other.to_string())),
    };
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(MatrixIoError::Unsupported(other.to_string())),
    };

    let mut data = lines.filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('%'));
    let (size_line, size) = data
        .next()
        .ok_or_else(|| parse_err(2, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<Result<_, _>>()
        .map_err(|_| parse_err(size_line, "size line must hold three integers"))?;
    let [nrows, ncols, nnz] = dims[..] else {
        return Err(parse_err(size_line, "size line must hold three integers"));
    };

    let mut entries = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
    let mut seen = 0;
    for (line, l) in data {
        seen += 1;
        if seen > nnz {
            return Err(parse_err(line, format!("more than {nnz} entries")));
        }
        let mut t = l.split_whitespace();
        let mut index = |what: &str, bound: usize| -> Result<usize, MatrixIoError> {
            let v: usize = t
                .next()
                .ok_or_else(|| parse_err(line, format!("missing {what} index")))?
                .parse()
                .map_err(|_| parse_err(line, format!("bad {what} index")))?;
            if v == 0 || v > bound {
                return Err(parse_err(
                    line,
                    format!("{what} index {v} out of range 1..={bound}"),
                ));
            }
            Ok(v - 1)
        };
        let r = index("row", nrows)?;
        let c = index("column", ncols)?;
        let v = match field {
            Field::Pattern => 1.0,
            _ => {
                let tok = t.next().ok_or_else(|| parse_err(line, "missing value"))?;
                let v: f64 = tok
                    .parse()
                    .map_err(|_| parse_err(line, format!("bad value `{tok}`")))?;
                if field == Field::Integer && v.fract() != 0.0 {
                    return Err(parse_err(line, format!("non-integer value `{tok}`")));
                }
                v as f32
            }
        };
        if t.next().is_some() {
            return Err(parse_err(line, "trailing tokens"));
        }
        entries.push((r, c, v));
        if symmetric && r != c {
            entries.push((c, r, v));
        }
    }
    if seen < nnz {
        return Err(parse_err(
            text.lines().count(),
            format!("expected {nnz} entries, found {seen}"),
        ));
    }
    Ok(TripletMatrix {
        nrows,
        ncols,
        entries,
    })
}

pub fn load_matrix_market(path: &Path) -> Result<TripletMatrix, MatrixIoError> {
    let text = std::fs::read_to_string(path).map_err(|source| MatrixIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_matrix_market(&text)
}

/// General real coordinate form, one-based, values in shortest round-trip
/// notation.
pub fn write_matrix_market(m: &CscMatrix) -> String {
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(out, "{} {} {}", m.nrows, m.ncols, m.nnz());
    for (r, c, v) in m.to_triplets() {
        let _ = writeln!(out, "{} {} {:?}", r + 1, c + 1, v);
    }
    out
}

fn small_int(rng: &mut ChaCha8Rng) -> f32 {
    rng.gen_range(-8i32..=8) as f32
}

/// Seeded `n x n` matrix of small integers in `[-8, 8]`.
pub fn gen_dense(n: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n * n).map(|_| small_int(&mut rng)).collect();
    DenseMatrix::from_rows(n, n, values).expect("n*n values")
}

/// Seeded vector of small integers in `[-8, 8]`.
pub fn gen_vector(n: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| small_int(&mut rng)).collect()
}

fn column_matrix(nrows: usize, counts: &[usize], rng: &mut ChaCha8Rng) -> CscMatrix {
    let mut col_ptr = Vec::with_capacity(counts.len() + 1);
    col_ptr.push(0u32);
    let mut row_idx = Vec::new();
    let mut values = Vec::new();
    for &k in counts {
        let mut rows = sample(rng, nrows, k).into_vec();
        rows.sort_unstable();
        for r in rows {
            row_idx.push(r as u32);
            values.push(loop {
                let v = small_int(rng);
                if v != 0.0 {
                    break v;
                }
            });
        }
        col_ptr.push(row_idx.len() as u32);
    }
    CscMatrix::new(nrows, counts.len(), values, row_idx, col_ptr)
        .expect("generated CSC is canonical")
}

/// Seeded `m x n` sparse matrix; each column holds a uniform count of
/// distinct rows drawn from `range`.
pub fn gen_sparse(
    m: usize,
    n: usize,
    range: (usize, usize),
    seed: u64,
) -> Result<TripletMatrix, MatrixIoError> {
    let (lo, hi) = range;
    if lo > hi || hi > m {
        return Err(MatrixIoError::InfeasibleRange(format!(
            "[{lo}, {hi}] with {m} rows"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts: Vec<usize> = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
    Ok(triplets(&column_matrix(m, &counts, &mut rng)))
}

/// Seeded `m x n` matrix with exactly `nnz` nonzeros whose per-column counts
/// span exactly `range`.
pub fn gen_sparse_exact(
    m: usize,
    n: usize,
    nnz: usize,
    range: (usize, usize),
    seed: u64,
) -> Result<CscMatrix, MatrixIoError> {
    let (lo, hi) = range;
    // the first two columns are pinned to the ends of the range
    let feasible = lo <= hi
        && hi <= m
        && match n {
            0 => nnz == 0,
            1 => lo == hi && nnz == lo,
            _ => lo + hi + (n - 2) * lo <= nnz && nnz <= lo + hi + (n - 2) * hi,
        };
    if !feasible {
        return Err(MatrixIoError::InfeasibleRange(format!(
            "{nnz} nonzeros in {n} columns of [{lo}, {hi}] with {m} rows"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: Vec<usize> = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
    let pinned = n.min(2);
    if n >= 2 {
        counts[0] = lo;
        counts[1] = hi;
    }
    let mut total: usize = counts.iter().sum();
    // nudge random unpinned columns until the total matches
    while total != nnz {
        let j = rng.gen_range(pinned..n);
        if total < nnz && counts[j] < hi {
            counts[j] += 1;
            total += 1;
        } else if total > nnz && counts[j] > lo {
            counts[j] -= 1;
            total -= 1;
        }
    }
    Ok(column_matrix(m, &counts, &mut rng))
}

fn triplets(m: &CscMatrix) -> TripletMatrix {
    TripletMatrix {
        nrows: m.nrows,
        ncols: m.ncols,
        entries: m.to_triplets(),
    }
}

/// Shape of one of the reference sparse benchmark matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseBenchmark {
    pub name: &'static str,
    pub nrows: usize,
    pub ncols: usize,
    pub nnz: usize,
    pub nnz_per_col: (usize, usize),
    /// Measured hardware time in microseconds.
    pub hw_time_us: f64,
    /// Measured time of the embedded ARM core in microseconds.
    pub arm_time_us: f64,
}

pub const SPARSE_BENCHMARKS: [SparseBenchmark; 4] = [
    SparseBenchmark {
        name: "Maragal_2",
        nrows: 555,
        ncols: 350,
        nnz: 4357,
        nnz_per_col: (0, 139),
        hw_time_us: 94.0,
        arm_time_us: 128.0,
    },
    SparseBenchmark {
        name: "flower_5_4",
        nrows: 5226,
        ncols: 14721,
        nnz: 43942,
        nnz_per_col: (1, 3),
        hw_time_us: 1077.0,
        arm_time_us: 1644.0,
    },
    SparseBenchmark {
        name: "BIBD_14_7",
        nrows: 91,
        ncols: 3432,
        nnz: 72072,
        nnz_per_col: (21, 21),
        hw_time_us: 1438.0,
        arm_time_us: 2055.0,
    },
    SparseBenchmark {
        name: "lp_pilot87",
        nrows: 2030,
        ncols: 6680,
        nnz: 74949,
        nnz_per_col: (1, 96),
        hw_time_us: 1647.0,
        arm_time_us: 2222.0,
    },
];

pub fn sparse_benchmark(name: &str) -> Option<&'static SparseBenchmark> {
    let key = name.to_ascii_lowercase();
    SPARSE_BENCHMARKS.iter().find(|b| {
        let n = b.name.to_ascii_lowercase();
        n == key || (n == "lp_pilot87" && key == "ld_pilot87")
    })
}

impl SparseBenchmark {
    /// Synthetic stand-in with the benchmark's shape and nonzero profile.
    pub fn stand_in(&self, seed: u64) -> CscMatrix {
        gen_sparse_exact(self.nrows, self.ncols, self.nnz, self.nnz_per_col, seed)
            .expect("reference shapes are consistent")
    }
}
