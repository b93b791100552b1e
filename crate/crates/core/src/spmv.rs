//! Sparse matrix-vector multiplication `y = A x` on the overlay.
//!
//! `A` lives in external memory in compressed sparse column form. The DMA
//! streams the matrix column by column: for column `j` it reads the next
//! column pointer, `x[j]`, and the column's values and row indices, then puts
//! the packet on the network. Rows are owned round-robin (row `i` belongs to
//! core `i mod p`); each core keeps the partial sums of its own rows in local
//! memory and picks its nonzeros out of the packet. When the stream ends
//! every core writes its rows of `y` back.

use crate::arch::ArchConfig;
use crate::sim::{
    Action, BufId, BufferKind, Delivery, Dep, FmaOp, Layout, MemoryImage, Owner, Program, Segment,
    TxnId,
};

/// DMA staging slots between the read channel and the network.
pub const STAGING_SLOTS: usize = 16;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SpmvError {
    #[error("entry ({row}, {col}) outside a {nrows}x{ncols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },
    #[error("malformed CSC: {0}")]
    Malformed(String),
    #[error("no nonzeros")]
    NoNonzeros,
    #[error("region `{region}` holds {actual} words, expected {expected}")]
    RegionMismatch {
        region: String,
        expected: usize,
        actual: usize,
    },
    #[error("{rows} partial sums per core exceed local memory of {limit} words")]
    LocalMemory { rows: usize, limit: usize },
}

/// Compressed sparse column matrix: values and row indices stored column by
/// column, with `col_ptr[j]..col_ptr[j+1]` delimiting column `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub values: Vec<f32>,
    pub row_idx: Vec<u32>,
    pub col_ptr: Vec<u32>,
}

impl CscMatrix {
    pub fn new(
        nrows: usize,
        ncols: usize,
        values: Vec<f32>,
        row_idx: Vec<u32>,
        col_ptr: Vec<u32>,
    ) -> Result<Self, SpmvError> {
        let m = CscMatrix {
            nrows,
            ncols,
            values,
            row_idx,
            col_ptr,
        };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<(), SpmvError> {
        let bad = |s: &str| Err(SpmvError::Malformed(s.to_string()));
        if self.col_ptr.len() != self.ncols + 1 {
            return bad("col_ptr must have ncols + 1 entries");
        }
        if self.col_ptr[0] != 0 {
            return bad("col_ptr[0] must be 0");
        }
        if self.col_ptr[self.ncols] as usize != self.values.len()
            || self.values.len() != self.row_idx.len()
        {
            return bad("col_ptr[ncols] must equal the number of nonzeros");
        }
        for j in 0..self.ncols {
            let (s, e) = (self.col_ptr[j], self.col_ptr[j + 1]);
            if s > e {
                return bad("col_ptr must be non-decreasing");
            }
            let rows = &self.row_idx[s as usize..e as usize];
            if rows.iter().any(|&r| r as usize >= self.nrows) {
                return bad("row index out of range");
            }
            if rows.windows(2).any(|w| w[0] >= w[1]) {
                return bad("row indices must strictly increase within a column");
            }
        }
        Ok(())
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn column(&self, j: usize) -> std::ops::Range<usize> {
        self.col_ptr[j] as usize..self.col_ptr[j + 1] as usize
    }

    /// Smallest and largest number of nonzeros in a column.
    pub fn nnz_per_col_range(&self) -> (usize, usize) {
        let counts = (0..self.ncols).map(|j| self.column(j).len());
        let min = counts.clone().min().unwrap_or(0);
        let max = counts.max().unwrap_or(0);
        (min, max)
    }

    pub fn to_triplets(&self) -> Vec<(usize, usize, f32)> {
        let mut t = Vec::with_capacity(self.nnz());
        for j in 0..self.ncols {
            for k in self.column(j) {
                t.push((self.row_idx[k] as usize, j, self.values[k]));
            }
        }
        t
    }
}

/// Builds the canonical CSC form; duplicate entries are summed in input
/// order.
pub fn to_csc(
    nrows: usize,
    ncols: usize,
    triplets: &[(usize, usize, f32)],
) -> Result<CscMatrix, SpmvError> {
    for &(row, col, _) in triplets {
        if row >= nrows || col >= ncols {
            return Err(SpmvError::IndexOutOfRange {
                row,
                col,
                nrows,
                ncols,
            });
        }
    }
    let mut order: Vec<usize> = (0..triplets.len()).collect();
    order.sort_by_key(|&i| (triplets[i].1, triplets[i].0));
    let mut values: Vec<f32> = Vec::with_capacity(triplets.len());
    let mut row_idx: Vec<u32> = Vec::with_capacity(triplets.len());
    let mut col_ptr = vec![0u32; ncols + 1];
    let mut last: Option<(usize, usize)> = None;
    for i in order {
        let (r, c, v) = triplets[i];
        if last == Some((r, c)) {
            *values.last_mut().unwrap() += v;
        } else {
            values.push(v);
            row_idx.push(r as u32);
            col_ptr[c + 1] += 1;
            last = Some((r, c));
        }
    }
    for j in 0..ncols {
        col_ptr[j + 1] += col_ptr[j];
    }
    CscMatrix::new(nrows, ncols, values, row_idx, col_ptr)
}

/// Round-robin ownership of rows by cores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowAssignment {
    pub p: usize,
    pub rows_per_core: Vec<usize>,
    pub nnz_per_core: Vec<usize>,
}

impl RowAssignment {
    pub fn owner(&self, row: usize) -> usize {
        row % self.p
    }
}

/// Assigns row `i` to core `i mod p`. Nonzero counts are filled in by
/// [`assign_rows_for`].
pub fn assign_rows(nrows: usize, p: usize) -> RowAssignment {
    assert!(p >= 1, "at least one core");
    let rows_per_core = (0..p).map(|c| (nrows + p - 1 - c) / p).collect();
    RowAssignment {
        p,
        rows_per_core,
        nnz_per_core: vec![0; p],
    }
}

pub fn assign_rows_for(csc: &CscMatrix, p: usize) -> RowAssignment {
    let mut a = assign_rows(csc.nrows, p);
    for &r in &csc.row_idx {
        a.nnz_per_core[r as usize % p] += 1;
    }
    a
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadBalance {
    /// Share of all nonzeros per core; sums to one.
    pub fractions: Vec<f64>,
    pub min: f64,
    pub max: f64,
    /// Largest share over the mean share.
    pub imbalance: f64,
}

pub fn load_balance(csc: &CscMatrix, a: &RowAssignment) -> Result<LoadBalance, SpmvError> {
    if csc.nnz() == 0 {
        return Err(SpmvError::NoNonzeros);
    }
    let mut counts = vec![0usize; a.p];
    for &r in &csc.row_idx {
        counts[a.owner(r as usize)] += 1;
    }
    let total = csc.nnz() as f64;
    let fractions: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    let min = fractions.iter().copied().fold(f64::INFINITY, f64::min);
    let max = fractions.iter().copied().fold(0.0, f64::max);
    Ok(LoadBalance {
        imbalance: max * a.p as f64,
        fractions,
        min,
        max,
    })
}

/// Where the operands of a sparse product live in external memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpmvLayout {
    pub col_ptr: usize,
    pub row_idx: usize,
    pub values: usize,
    pub x: usize,
    pub y: usize,
}

/// Lays out `csc`, `x` and a zeroed `y` in a fresh memory image.
pub fn spmv_memory(csc: &CscMatrix, x: &[f32]) -> (MemoryImage, SpmvLayout) {
    let mut mem = MemoryImage::new();
    let layout = SpmvLayout {
        col_ptr: mem.add_region("col_ptr", csc.col_ptr.clone(), Layout::Array),
        row_idx: mem.add_region("row_idx", csc.row_idx.clone(), Layout::Array),
        values: mem.add_f32_region("values", &csc.values, Layout::Array),
        x: mem.add_f32_region("x", x, Layout::Array),
        y: mem.add_region("y", vec![0; csc.nrows], Layout::Array),
    };
    (mem, layout)
}

fn check_region(
    mem: &MemoryImage,
    name: &str,
    base: usize,
    expected: usize,
) -> Result<(), SpmvError> {
    let actual = mem
        .regions()
        .iter()
        .find(|r| r.base == base && r.name == name)
        .map(|r| r.len);
    match actual {
        Some(a) if a == expected => Ok(()),
        other => Err(SpmvError::RegionMismatch {
            region: name.to_string(),
            expected,
            actual: other.unwrap_or(0),
        }),
    }
}

/// Words the DMA reads for a product: two per nonzero, every column pointer
/// and every element of `x`.
pub fn predicted_reads(csc: &CscMatrix) -> u64 {
    2 * csc.nnz() as u64 + (csc.ncols as u64 + 1) + csc.ncols as u64
}

pub fn build_spmv_schedule(
    csc: &CscMatrix,
    mem: &MemoryImage,
    layout: &SpmvLayout,
    cfg: &ArchConfig,
) -> Result<Program, SpmvError> {
    check_region(mem, "col_ptr", layout.col_ptr, csc.ncols + 1)?;
    check_region(mem, "row_idx", layout.row_idx, csc.nnz())?;
    check_region(mem, "values", layout.values, csc.nnz())?;
    check_region(mem, "x", layout.x, csc.ncols)?;
    check_region(mem, "y", layout.y, csc.nrows)?;

    let p = cfg.num_cores as usize;
    let rows_local = csc.nrows.div_ceil(p);
    if rows_local > cfg.local_mem_words as usize {
        return Err(SpmvError::LocalMemory {
            rows: rows_local,
            limit: cfg.local_mem_words as usize,
        });
    }
    let depth = cfg.input_fifo_depth as usize;
    let (_, max_col) = csc.nnz_per_col_range();
    let packet_words = 3 + 2 * max_col;
    let slot_words = 1 + 2 * max_col;

    let mut prog = Program::new("spmv");
    prog.meta.insert("nrows".into(), csc.nrows.to_string());
    prog.meta.insert("ncols".into(), csc.ncols.to_string());
    prog.meta.insert("nnz".into(), csc.nnz().to_string());
    prog.outputs.push("y".into());

    let stage: Vec<BufId> = (0..STAGING_SLOTS)
        .map(|s| {
            prog.buffer(
                Owner::Dma,
                &format!("stage{s}"),
                packet_words,
                BufferKind::Staging,
            )
        })
        .collect();
    let input: Vec<BufId> = (0..p)
        .map(|c| {
            prog.buffer(
                Owner::Core(c as u32),
                "in",
                depth * slot_words,
                BufferKind::Input,
            )
        })
        .collect();
    let ypart: Vec<BufId> = (0..p)
        .map(|c| prog.buffer(Owner::Core(c as u32), "y", rows_local, BufferKind::Local))
        .collect();

    let mut stage_reader: Vec<Option<TxnId>> = vec![None; STAGING_SLOTS];
    let mut last_load: Option<TxnId> = None;
    // per core: packets received so far and the compute that consumed each FIFO slot
    let mut received = vec![0usize; p];
    let mut fifo_reader: Vec<Vec<Option<TxnId>>> = vec![vec![None; depth]; p];
    let mut last_compute: Vec<Option<TxnId>> = vec![None; p];
    let mut per_core: Vec<Vec<usize>> = vec![Vec::new(); p];

    for j in 0..csc.ncols {
        let slot = j % STAGING_SLOTS;
        let col = csc.column(j);
        let k = col.len();
        let mut src = Vec::with_capacity(4);
        let head = if j == 0 {
            src.push(Segment::new(layout.col_ptr, 2));
            2
        } else {
            src.push(Segment::new(layout.col_ptr + j + 1, 1));
            1
        };
        src.push(Segment::new(layout.x + j, 1));
        src.push(Segment::new(layout.values + col.start, k));
        src.push(Segment::new(layout.row_idx + col.start, k));
        let mut deps: Vec<Dep> = stage_reader[slot].map(Dep::done).into_iter().collect();
        if let Some(prev) = last_load {
            deps.push(Dep::done(prev));
        }
        let load = prog.push(
            Action::DmaLoad {
                src,
                dst: stage[slot],
                dst_offset: 0,
            },
            deps,
        );
        stage_reader[slot] = Some(load);
        last_load = Some(load);
        if k == 0 {
            continue;
        }

        for list in per_core.iter_mut() {
            list.clear();
        }
        for (i, kk) in col.clone().enumerate() {
            per_core[csc.row_idx[kk] as usize % p].push(i);
        }
        let x_off = head;
        let v_off = head + 1;
        let r_off = head + 1 + k;
        let mut dests = Vec::new();
        let mut deliveries = Vec::new();
        let mut deps = vec![Dep::done(load)];
        for c in 0..p {
            if per_core[c].is_empty() {
                continue;
            }
            dests.push(c as u32);
            let fifo = received[c] % depth;
            let base = fifo * slot_words;
            if let Some(prev) = fifo_reader[c][fifo] {
                deps.push(Dep::done(prev));
            }
            deliveries.push(Delivery {
                src_offset: x_off,
                dst: input[c],
                dst_offset: base,
                len: 1,
            });
            for (n, &i) in per_core[c].iter().enumerate() {
                deliveries.push(Delivery {
                    src_offset: v_off + i,
                    dst: input[c],
                    dst_offset: base + 1 + 2 * n,
                    len: 1,
                });
                deliveries.push(Delivery {
                    src_offset: r_off + i,
                    dst: input[c],
                    dst_offset: base + 2 + 2 * n,
                    len: 1,
                });
            }
        }
        let bcast = prog.push(
            Action::Broadcast {
                src: stage[slot],
                dests: dests.clone(),
                words: 1 + 2 * k,
                deliveries,
            },
            deps,
        );
        stage_reader[slot] = Some(bcast);
        for &c in &dests {
            let c = c as usize;
            let fifo = received[c] % depth;
            let mut deps = vec![Dep::done(bcast)];
            deps.extend(last_compute[c].map(Dep::done));
            let fma = prog.push(
                Action::ComputeFma {
                    core: c as u32,
                    op: FmaOp::SparseColumn {
                        input: input[c],
                        input_offset: fifo * slot_words,
                        pairs: per_core[c].len(),
                        row_divisor: p as u32,
                        acc: ypart[c],
                    },
                },
                deps,
            );
            fifo_reader[c][fifo] = Some(fma);
            last_compute[c] = Some(fma);
            received[c] += 1;
        }
    }

    for c in 0..p {
        let rows = (c..csc.nrows).step_by(p);
        let n = rows.len();
        let dst = rows.map(|r| Segment::new(layout.y + r, 1)).collect();
        prog.push(
            Action::DmaStore {
                src: ypart[c],
                src_offset: 0,
                dst,
            },
            last_compute[c].map(Dep::done).into_iter().collect(),
        );
        debug_assert!(n <= rows_local);
    }
    Ok(prog)
}
