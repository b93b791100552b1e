//! Functional side of a transaction: the data it moves or computes.

use super::memory::MemoryImage;
use super::program::{Action, BufId, FmaOp, Program};

/// External memory plus every declared buffer, zero-initialized.
#[derive(Debug, Clone)]
pub(crate) struct Machine {
    pub mem: MemoryImage,
    pub bufs: Vec<Vec<u32>>,
}

impl Machine {
    pub fn new(program: &Program, mem: &MemoryImage) -> Self {
        Machine {
            mem: mem.clone(),
            bufs: program.buffers.iter().map(|b| vec![0; b.words]).collect(),
        }
    }

    fn two(&mut self, a: BufId, b: BufId) -> (&[u32], &mut [u32]) {
        assert_ne!(a, b, "source and destination buffers alias");
        if a.0 < b.0 {
            let (lo, hi) = self.bufs.split_at_mut(b.0);
            (&lo[a.0], &mut hi[0])
        } else {
            let (lo, hi) = self.bufs.split_at_mut(a.0);
            (&hi[0], &mut lo[b.0])
        }
    }

    pub fn apply(&mut self, action: &Action) {
        match action {
            Action::DmaLoad {
                src,
                dst,
                dst_offset,
            } => {
                let buf = &mut self.bufs[dst.0];
                let mut o = *dst_offset;
                for s in src {
                    buf[o..o + s.len].copy_from_slice(self.mem.read(s.addr, s.len));
                    o += s.len;
                }
            }
            Action::DmaStore {
                src,
                src_offset,
                dst,
            } => {
                let buf = &self.bufs[src.0];
                let mut o = *src_offset;
                for s in dst {
                    self.mem.write(s.addr, &buf[o..o + s.len]);
                    o += s.len;
                }
            }
            Action::Broadcast {
                src, deliveries, ..
            } => {
                for d in deliveries {
                    let (from, to) = self.two(*src, d.dst);
                    to[d.dst_offset..d.dst_offset + d.len]
                        .copy_from_slice(&from[d.src_offset..d.src_offset + d.len]);
                }
            }
            Action::ComputeFma { op, .. } => self.fma(op),
            Action::Barrier => {}
        }
    }

    fn fma(&mut self, op: &FmaOp) {
        match *op {
            FmaOp::OuterProduct {
                a,
                b,
                c,
                y,
                x,
                z,
                init,
            } => {
                let av: Vec<f32> = self.bufs[a.0][..y * z]
                    .iter()
                    .map(|w| f32::from_bits(*w))
                    .collect();
                let bv: Vec<f32> = self.bufs[b.0][..z * x]
                    .iter()
                    .map(|w| f32::from_bits(*w))
                    .collect();
                let cb = &mut self.bufs[c.0][..y * x];
                let mut cv: Vec<f32> = if init {
                    vec![0.0; y * x]
                } else {
                    cb.iter().map(|w| f32::from_bits(*w)).collect()
                };
                for kk in 0..z {
                    let brow = &bv[kk * x..(kk + 1) * x];
                    for i in 0..y {
                        let aik = av[kk * y + i];
                        let crow = &mut cv[i * x..(i + 1) * x];
                        for (cij, bkj) in crow.iter_mut().zip(brow) {
                            *cij = aik.mul_add(*bkj, *cij);
                        }
                    }
                }
                for (w, v) in cb.iter_mut().zip(&cv) {
                    *w = v.to_bits();
                }
            }
            FmaOp::SparseColumn {
                input,
                input_offset,
                pairs,
                row_divisor,
                acc,
            } => {
                let (inp, accb) = self.two(input, acc);
                let packet = &inp[input_offset..input_offset + 1 + 2 * pairs];
                let xj = f32::from_bits(packet[0]);
                for pair in packet[1..].chunks_exact(2) {
                    let v = f32::from_bits(pair[0]);
                    let r = (pair[1] / row_divisor) as usize;
                    accb[r] = v.mul_add(xj, f32::from_bits(accb[r])).to_bits();
                }
            }
            FmaOp::Dot { a, b, acc, len } => {
                let mut s = f32::from_bits(self.bufs[acc.0][0]);
                for i in 0..len {
                    let av = f32::from_bits(self.bufs[a.0][i]);
                    let bv = f32::from_bits(self.bufs[b.0][i]);
                    s = av.mul_add(bv, s);
                }
                self.bufs[acc.0][0] = s.to_bits();
            }
        }
    }
}
