//! Static checks run before a program is simulated or replayed.

use super::memory::MemoryImage;
use super::program::{Action, BufId, BufferKind, FmaOp, Owner, Program, TxnId};
use super::SimError;
use crate::arch::ArchConfig;
use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Topological order with the lowest ready id first.
pub fn topo_order(program: &Program) -> Result<Vec<TxnId>, SimError> {
    let n = program.txns.len();
    let mut indeg = vec![0usize; n];
    let mut out: Vec<Vec<TxnId>> = vec![Vec::new(); n];
    for t in &program.txns {
        for d in &t.deps {
            if d.id >= n || d.id == t.id {
                return Err(SimError::BadDependency {
                    txn: t.id,
                    dep: d.id,
                });
            }
            indeg[t.id] += 1;
            out[d.id].push(t.id);
        }
    }
    let mut heap: BinaryHeap<Reverse<TxnId>> =
        (0..n).filter(|&i| indeg[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = heap.pop() {
        order.push(i);
        for &j in &out[i] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                heap.push(Reverse(j));
            }
        }
    }
    if order.len() < n {
        let txn = (0..n).find(|&i| indeg[i] > 0).unwrap();
        return Err(SimError::CyclicDependency { txn });
    }
    Ok(order)
}

struct Checker<'a> {
    program: &'a Program,
    cfg: &'a ArchConfig,
    mem: &'a MemoryImage,
}

impl Checker<'_> {
    fn buf(&self, txn: TxnId, id: BufId, offset: usize, len: usize) -> Result<(), SimError> {
        let decl = self
            .program
            .buffers
            .get(id.0)
            .ok_or(SimError::UnknownBuffer { txn, buffer: id.0 })?;
        if offset + len > decl.words {
            return Err(SimError::BufferBounds {
                txn,
                buffer: decl.name.clone(),
                owner: decl.owner.to_string(),
            });
        }
        Ok(())
    }

    fn owned_by(&self, txn: TxnId, id: BufId, core: u32) -> Result<(), SimError> {
        let decl = &self.program.buffers[id.0];
        if decl.owner != Owner::Core(core) {
            return Err(SimError::WrongOwner {
                txn,
                buffer: decl.name.clone(),
                core,
            });
        }
        Ok(())
    }

    fn core(&self, txn: TxnId, core: u32) -> Result<(), SimError> {
        if core >= self.cfg.num_cores {
            return Err(SimError::UnknownCore { txn, core });
        }
        Ok(())
    }

    fn segments(&self, txn: TxnId, segs: &[super::program::Segment]) -> Result<(), SimError> {
        for s in segs {
            if s.len > 0 && self.mem.region_of(s.addr, s.len).is_none() {
                return Err(SimError::OutOfRegion {
                    txn,
                    addr: s.addr,
                    len: s.len,
                });
            }
        }
        Ok(())
    }

    fn txn(&self, id: TxnId) -> Result<(), SimError> {
        let t = &self.program.txns[id];
        match &t.action {
            Action::DmaLoad {
                src,
                dst,
                dst_offset,
            } => {
                self.segments(id, src)?;
                self.buf(id, *dst, *dst_offset, t.action.payload() as usize)?;
            }
            Action::DmaStore {
                src,
                src_offset,
                dst,
            } => {
                self.segments(id, dst)?;
                self.buf(id, *src, *src_offset, t.action.payload() as usize)?;
            }
            Action::Broadcast {
                src,
                dests,
                deliveries,
                ..
            } => {
                for &d in dests {
                    self.core(id, d)?;
                }
                for d in deliveries {
                    self.buf(id, *src, d.src_offset, d.len)?;
                    self.buf(id, d.dst, d.dst_offset, d.len)?;
                    if d.dst == *src {
                        return Err(SimError::Aliased { txn: id });
                    }
                    match self.program.buffers[d.dst.0].owner {
                        Owner::Core(c) if dests.contains(&c) => {}
                        _ => {
                            return Err(SimError::WrongOwner {
                                txn: id,
                                buffer: self.program.buffers[d.dst.0].name.clone(),
                                core: u32::MAX,
                            })
                        }
                    }
                }
            }
            Action::ComputeFma { core, op } => {
                self.core(id, *core)?;
                for b in op.buffers() {
                    self.owned_by(id, b, *core)?;
                }
                match *op {
                    FmaOp::OuterProduct {
                        a, b, c, y, x, z, ..
                    } => {
                        self.buf(id, a, 0, y * z)?;
                        self.buf(id, b, 0, z * x)?;
                        self.buf(id, c, 0, y * x)?;
                        if c == a || c == b {
                            return Err(SimError::Aliased { txn: id });
                        }
                    }
                    FmaOp::SparseColumn {
                        input,
                        input_offset,
                        pairs,
                        row_divisor,
                        acc,
                    } => {
                        self.buf(id, input, input_offset, 1 + 2 * pairs)?;
                        if input == acc || row_divisor == 0 {
                            return Err(SimError::Aliased { txn: id });
                        }
                    }
                    FmaOp::Dot { a, b, acc, len } => {
                        self.buf(id, a, 0, len)?;
                        self.buf(id, b, 0, len)?;
                        self.buf(id, acc, 0, 1)?;
                        if acc == a || acc == b {
                            return Err(SimError::Aliased { txn: id });
                        }
                    }
                }
            }
            Action::Barrier => {}
        }
        Ok(())
    }
}

/// Checks dependencies, memory regions, buffer bounds and core-local memory
/// footprints. Returns the replay order on success.
pub fn validate_program(
    program: &Program,
    cfg: &ArchConfig,
    mem: &MemoryImage,
) -> Result<Vec<TxnId>, SimError> {
    let order = topo_order(program)?;
    let checker = Checker { program, cfg, mem };
    for decl in &program.buffers {
        if let Owner::Core(c) = decl.owner {
            if c >= cfg.num_cores {
                return Err(SimError::UnknownCore {
                    txn: usize::MAX,
                    core: c,
                });
            }
        }
    }
    for (core, words) in program.local_footprint() {
        if words > cfg.local_mem_words as usize {
            let txn = program
                .txns
                .iter()
                .find(|t| touches_core(program, &t.action, core))
                .map(|t| t.id)
                .unwrap_or(usize::MAX);
            return Err(SimError::LocalMemoryOverflow {
                txn,
                core,
                words,
                limit: cfg.local_mem_words as usize,
            });
        }
    }
    for t in &program.txns {
        checker.txn(t.id)?;
    }
    Ok(order)
}

fn touches_core(program: &Program, action: &Action, core: u32) -> bool {
    let local = |b: &BufId| {
        let d = &program.buffers[b.0];
        d.owner == Owner::Core(core) && d.kind == BufferKind::Local
    };
    match action {
        Action::DmaLoad { dst, .. } => local(dst),
        Action::DmaStore { src, .. } => local(src),
        Action::Broadcast { deliveries, .. } => deliveries.iter().any(|d| local(&d.dst)),
        Action::ComputeFma { core: c, .. } => *c == core,
        Action::Barrier => false,
    }
}
