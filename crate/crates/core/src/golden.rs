//! Reference results, written for clarity rather than speed.
//!
//! Accumulation orders are fixed so that "bit-exact" has a meaning:
//! - [`matmul_ref`] accumulates each element over `k` ascending with a fused
//!   multiply-add starting from `+0.0`.
//! - [`spmv_ref`] walks columns in ascending order and, within a column, the
//!   stored order, fusing each product into its row.
//!
//! [`replay_ref`] re-executes a program's data movement in topological order
//! with its own interpreter, ignoring timing entirely.

use crate::sim::{topo_order, Action, FmaOp, MemoryImage, Program, SimError};
use crate::spmv::CscMatrix;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    /// Row-major values.
    pub values: Vec<f32>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DimensionError {
    #[error("dimension mismatch: {0}")]
    Mismatch(String),
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        DenseMatrix {
            nrows,
            ncols,
            values: vec![0.0; nrows * ncols],
        }
    }

    pub fn from_rows(nrows: usize, ncols: usize, values: Vec<f32>) -> Result<Self, DimensionError> {
        if values.len() != nrows * ncols {
            return Err(DimensionError::Mismatch(format!(
                "{} values for a {nrows}x{ncols} matrix",
                values.len()
            )));
        }
        Ok(DenseMatrix {
            nrows,
            ncols,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.ncols + j]
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = Self::zeros(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                t.values[j * self.nrows + i] = self.get(i, j);
            }
        }
        t
    }
}

pub fn matmul_ref(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, DimensionError> {
    if a.ncols != b.nrows {
        return Err(DimensionError::Mismatch(format!(
            "{}x{} times {}x{}",
            a.nrows, a.ncols, b.nrows, b.ncols
        )));
    }
    let mut c = DenseMatrix::zeros(a.nrows, b.ncols);
    for i in 0..a.nrows {
        for j in 0..b.ncols {
            let mut acc = 0.0f32;
            for k in 0..a.ncols {
                acc = a.get(i, k).mul_add(b.get(k, j), acc);
            }
            c.values[i * c.ncols + j] = acc;
        }
    }
    Ok(c)
}

pub fn spmv_ref(a: &CscMatrix, x: &[f32]) -> Result<Vec<f32>, DimensionError> {
    if x.len() != a.ncols {
        return Err(DimensionError::Mismatch(format!(
            "vector of length {} for {} columns",
            x.len(),
            a.ncols
        )));
    }
    let mut y = vec![0.0f32; a.nrows];
    for (j, &xj) in x.iter().enumerate() {
        for k in a.col_ptr[j] as usize..a.col_ptr[j + 1] as usize {
            let r = a.row_idx[k] as usize;
            y[r] = a.values[k].mul_add(xj, y[r]);
        }
    }
    Ok(y)
}

fn f(w: u32) -> f32 {
    f32::from_bits(w)
}

/// Replays `program` on a copy of `mem` and returns every output region.
pub fn replay_ref(
    program: &Program,
    mem: &MemoryImage,
) -> Result<BTreeMap<String, Vec<u32>>, SimError> {
    let order = topo_order(program)?;
    let mut mem = mem.clone();
    let mut bufs: Vec<Vec<u32>> = program.buffers.iter().map(|b| vec![0; b.words]).collect();
    for id in order {
        match &program.txns[id].action {
            Action::DmaLoad {
                src,
                dst,
                dst_offset,
            } => {
                let mut o = *dst_offset;
                for s in src {
                    for a in s.addr..s.addr + s.len {
                        let w = *mem.words().get(a).ok_or(SimError::OutOfRegion {
                            txn: id,
                            addr: a,
                            len: 1,
                        })?;
                        bufs[dst.0][o] = w;
                        o += 1;
                    }
                }
            }
            Action::DmaStore {
                src,
                src_offset,
                dst,
            } => {
                let mut o = *src_offset;
                for s in dst {
                    for a in s.addr..s.addr + s.len {
                        if a >= mem.len() {
                            return Err(SimError::OutOfRegion {
                                txn: id,
                                addr: a,
                                len: 1,
                            });
                        }
                        mem.write(a, &[bufs[src.0][o]]);
                        o += 1;
                    }
                }
            }
            Action::Broadcast {
                src, deliveries, ..
            } => {
                for d in deliveries {
                    for k in 0..d.len {
                        bufs[d.dst.0][d.dst_offset + k] = bufs[src.0][d.src_offset + k];
                    }
                }
            }
            Action::ComputeFma { op, .. } => match *op {
                FmaOp::OuterProduct {
                    a,
                    b,
                    c,
                    y,
                    x,
                    z,
                    init,
                } => {
                    if init {
                        bufs[c.0][..y * x].fill(0f32.to_bits());
                    }
                    for kk in 0..z {
                        for i in 0..y {
                            for j in 0..x {
                                let prod = f(bufs[a.0][kk * y + i])
                                    .mul_add(f(bufs[b.0][kk * x + j]), f(bufs[c.0][i * x + j]));
                                bufs[c.0][i * x + j] = prod.to_bits();
                            }
                        }
                    }
                }
                FmaOp::SparseColumn {
                    input,
                    input_offset,
                    pairs,
                    row_divisor,
                    acc,
                } => {
                    let xj = f(bufs[input.0][input_offset]);
                    for k in 0..pairs {
                        let v = f(bufs[input.0][input_offset + 1 + 2 * k]);
                        let r = (bufs[input.0][input_offset + 2 + 2 * k] / row_divisor) as usize;
                        bufs[acc.0][r] = v.mul_add(xj, f(bufs[acc.0][r])).to_bits();
                    }
                }
                FmaOp::Dot { a, b, acc, len } => {
                    for i in 0..len {
                        let s = f(bufs[a.0][i]).mul_add(f(bufs[b.0][i]), f(bufs[acc.0][0]));
                        bufs[acc.0][0] = s.to_bits();
                    }
                }
            },
            Action::Barrier => {}
        }
    }
    let mut out = BTreeMap::new();
    for name in &program.outputs {
        out.insert(name.clone(), mem.region_words(name)?.to_vec());
    }
    Ok(out)
}
