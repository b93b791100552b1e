//! Blocked dense matrix multiplication `C = A B` for square `n x n` operands.
//!
//! Each core owns a `y x x` block of `C`; the `p` cores together cover a
//! `y x (x p)` stripe. For every step the DMA fetches a `y x z` piece of `A`
//! and broadcasts it to all cores, then fetches a `z x (x p)` piece of `B`
//! and scatters `x` columns to each core. Cores keep two `z x x` buffers for
//! `B` so the next piece can arrive while the current one is in use.
//!
//! `A` is kept column-major in external memory, so a piece of one column is
//! a contiguous burst.

use crate::arch::ArchConfig;
use crate::golden::{DenseMatrix, DimensionError};
use crate::sim::{
    Action, BufId, BufferKind, Delivery, Dep, FmaOp, Layout, MemoryImage, Owner, Program, Segment,
    TxnId,
};

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("infeasible plan: {0}")]
    Infeasible(String),
    #[error("plan does not match the problem: {0}")]
    Mismatch(String),
}

/// Block sizes for one problem size, core count and local memory size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockPlan {
    pub n: usize,
    pub p: usize,
    /// Local memory per core, in words.
    pub local_words: usize,
    /// Columns of `C` per core.
    pub x: usize,
    /// Rows of `C` per block.
    pub y: usize,
    /// Columns of `A` (rows of `B`) per step.
    pub z: usize,
}

impl BlockPlan {
    pub fn new(
        n: usize,
        p: usize,
        local_words: usize,
        x: usize,
        y: usize,
        z: usize,
    ) -> Result<Self, PlanError> {
        let bad = |m: String| Err(PlanError::Infeasible(m));
        if p == 0 || x == 0 || y == 0 || z == 0 {
            return bad("block sizes and core count must be positive".into());
        }
        if n < x * p {
            return bad("n < x·p".into());
        }
        if !n.is_multiple_of(x * p) {
            return bad(format!("x·p = {} does not divide n = {n}", x * p));
        }
        if !n.is_multiple_of(y) {
            return bad(format!("y = {y} does not divide n = {n}"));
        }
        if !n.is_multiple_of(z) {
            return bad(format!("z = {z} does not divide n = {n}"));
        }
        let plan = BlockPlan {
            n,
            p,
            local_words,
            x,
            y,
            z,
        };
        if plan.footprint() > local_words {
            return bad(format!(
                "footprint {} words exceeds local memory of {local_words}",
                plan.footprint()
            ));
        }
        Ok(plan)
    }

    pub fn with_z(self, z: usize) -> Result<Self, PlanError> {
        Self::new(self.n, self.p, self.local_words, self.x, self.y, z)
    }

    /// Local words per core: two `B` buffers and the `C` block.
    pub fn footprint(&self) -> usize {
        2 * self.z * self.x + self.x * self.y
    }

    pub fn row_blocks(&self) -> usize {
        self.n / self.y
    }

    pub fn col_groups(&self) -> usize {
        self.n / (self.x * self.p)
    }

    pub fn steps_per_group(&self) -> usize {
        self.n / self.z
    }
}

/// Words moved between external memory and the chip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrafficCount {
    pub reads_a: u64,
    pub reads_b: u64,
    pub writes_c: u64,
}

impl TrafficCount {
    pub fn total(&self) -> u64 {
        self.reads_a + self.reads_b + self.writes_c
    }
}

pub fn predict_traffic(plan: &BlockPlan) -> TrafficCount {
    let n3 = (plan.n as u64).pow(3);
    TrafficCount {
        reads_a: n3 / (plan.x * plan.p) as u64,
        reads_b: n3 / plan.y as u64,
        writes_c: (plan.n as u64).pow(2),
    }
}

/// Real-valued block sizes `(x, y)` minimizing traffic for `z = 1`.
pub fn real_optimum(local_words: usize, p: usize) -> (f64, f64) {
    let y = ((p * local_words) as f64).sqrt();
    (local_words as f64 / (2.0 + y), y)
}

/// Traffic of a real-valued plan with `z = 1`.
pub fn closed_form_traffic(n: f64, p: f64, x: f64, y: f64) -> f64 {
    n.powi(3) / (x * p) + n.powi(3) / y + n * n
}

fn divisors(n: usize) -> Vec<usize> {
    let mut d: Vec<usize> = (1..)
        .take_while(|i| i * i <= n)
        .filter(|i| n.is_multiple_of(*i))
        .flat_map(|i| [i, n / i])
        .collect();
    d.sort_unstable();
    d.dedup();
    d
}

/// Largest `x` for block height `y` that divides the columns evenly and fits.
fn widest_x(n: usize, p: usize, local_words: usize, y: usize) -> Option<usize> {
    let limit = local_words / (2 + y);
    (1..=limit.min(n / p))
        .rev()
        .find(|x| n.is_multiple_of(x * p))
}

/// Chooses the feasible block plan with the least traffic, preferring the
/// height closest to the real optimum on ties.
pub fn plan_blocks(local_words: usize, p: usize, n: usize) -> Result<BlockPlan, PlanError> {
    if p == 0 {
        return Err(PlanError::Infeasible("no cores".into()));
    }
    if n < p {
        return Err(PlanError::Infeasible("n < x·p".into()));
    }
    let (_, y_opt) = real_optimum(local_words, p);
    let mut best: Option<(u64, f64, BlockPlan)> = None;
    for y in divisors(n) {
        let Some(x) = widest_x(n, p, local_words, y) else {
            continue;
        };
        let plan = BlockPlan::new(n, p, local_words, x, y, 1)?;
        let cost = predict_traffic(&plan).total();
        let dist = (y as f64 - y_opt).abs();
        let better = match &best {
            None => true,
            Some((c, d, _)) => cost < *c || (cost == *c && dist < *d),
        };
        if better {
            best = Some((cost, dist, plan));
        }
    }
    best.map(|(_, _, p)| p).ok_or_else(|| {
        PlanError::Infeasible(format!(
            "no block fits {local_words} words of local memory for n = {n}, p = {p}"
        ))
    })
}

/// Where the operands live in external memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseLayout {
    pub n: usize,
    /// `A`, column-major.
    pub a: usize,
    /// `B`, row-major.
    pub b: usize,
    /// `C`, row-major.
    pub c: usize,
}

pub fn dense_memory(
    a: &DenseMatrix,
    b: &DenseMatrix,
) -> Result<(MemoryImage, DenseLayout), DimensionError> {
    let n = a.nrows;
    if a.ncols != n || b.nrows != n || b.ncols != n {
        return Err(DimensionError::Mismatch(format!(
            "expected square operands of one size, got {}x{} and {}x{}",
            a.nrows, a.ncols, b.nrows, b.ncols
        )));
    }
    let mut mem = MemoryImage::new();
    let layout = DenseLayout {
        n,
        a: mem.add_f32_region(
            "A",
            &a.transpose().values,
            Layout::ColMajor { rows: n, cols: n },
        ),
        b: mem.add_f32_region("B", &b.values, Layout::RowMajor { rows: n, cols: n }),
        c: mem.add_region("C", vec![0; n * n], Layout::RowMajor { rows: n, cols: n }),
    };
    Ok((mem, layout))
}

/// Compute bursts of one step, one per core.
struct Step {
    computes: Vec<TxnId>,
}

pub fn build_dense_schedule(
    plan: &BlockPlan,
    cfg: &ArchConfig,
    layout: &DenseLayout,
) -> Result<Program, PlanError> {
    if plan.p != cfg.num_cores as usize {
        return Err(PlanError::Mismatch(format!(
            "plan for {} cores on a {}-core machine",
            plan.p, cfg.num_cores
        )));
    }
    if plan.n != layout.n {
        return Err(PlanError::Mismatch(format!(
            "plan for n = {} but operands are {}x{}",
            plan.n, layout.n, layout.n
        )));
    }
    if plan.footprint() > cfg.local_mem_words as usize {
        return Err(PlanError::Infeasible(format!(
            "footprint {} words exceeds local memory of {}",
            plan.footprint(),
            cfg.local_mem_words
        )));
    }
    let BlockPlan { n, p, x, y, z, .. } = *plan;
    let xp = x * p;

    let mut prog = Program::new("dense");
    for (k, v) in [("n", n), ("x", x), ("y", y), ("z", z)] {
        prog.meta.insert(k.into(), v.to_string());
    }
    prog.outputs.push("C".into());

    let stage_a = prog.buffer(Owner::Dma, "stage.A", y * z, BufferKind::Staging);
    let stage_b = prog.buffer(Owner::Dma, "stage.B", z * xp, BufferKind::Staging);
    let core = |c: usize| Owner::Core(c as u32);
    let in_a: Vec<_> = (0..p)
        .map(|c| prog.buffer(core(c), "inA", y * z, BufferKind::Input))
        .collect();
    let b_buf: Vec<[BufId; 2]> = (0..p)
        .map(|c| {
            [
                prog.buffer(core(c), "B0", z * x, BufferKind::Local),
                prog.buffer(core(c), "B1", z * x, BufferKind::Local),
            ]
        })
        .collect();
    let c_buf: Vec<_> = (0..p)
        .map(|c| prog.buffer(core(c), "C", y * x, BufferKind::Local))
        .collect();

    // global step index -> (row block, column group, step within group)
    let per_group = plan.steps_per_group();
    let groups: Vec<(usize, usize)> = (0..plan.row_blocks())
        .flat_map(|ib| (0..plan.col_groups()).map(move |jb| (ib, jb)))
        .collect();
    let total = groups.len() * per_group;
    let locate = |s: usize| (groups[s / per_group], s % per_group);

    let all_done = |ids: &[TxnId]| ids.iter().map(|&i| Dep::done(i)).collect::<Vec<_>>();

    let mut steps: Vec<Step> = Vec::with_capacity(total);
    let mut b_bcasts: Vec<TxnId> = Vec::with_capacity(total);
    let mut stores: Vec<TxnId> = Vec::new();

    let b_buf = &b_buf;
    let push_b = |prog: &mut Program, s: usize, steps: &[Step], b_bcasts: &mut Vec<TxnId>| {
        let ((_, jb), k) = locate(s);
        let j0 = jb * xp;
        let src = (0..z)
            .map(|kk| Segment::new(layout.b + (k * z + kk) * n + j0, xp))
            .collect();
        let deps = b_bcasts
            .last()
            .map(|&b| vec![Dep::done(b)])
            .unwrap_or_default();
        let load = prog.push(
            Action::DmaLoad {
                src,
                dst: stage_b,
                dst_offset: 0,
            },
            deps,
        );
        let mut deps = vec![Dep::done(load)];
        if s >= 2 {
            deps.extend(all_done(&steps[s - 2].computes));
        }
        let slot = s % 2;
        let deliveries = (0..p)
            .flat_map(|c| {
                (0..z).map(move |kk| Delivery {
                    src_offset: kk * xp + c * x,
                    dst: b_buf[c][slot],
                    dst_offset: kk * x,
                    len: x,
                })
            })
            .collect();
        let bcast = prog.push(
            Action::Broadcast {
                src: stage_b,
                dests: (0..p as u32).collect(),
                words: z * xp,
                deliveries,
            },
            deps,
        );
        b_bcasts.push(bcast);
    };

    push_b(&mut prog, 0, &steps, &mut b_bcasts);
    for s in 0..total {
        let ((ib, jb), k) = locate(s);
        let (i0, j0) = (ib * y, jb * xp);
        let prev = steps
            .last()
            .map(|st| all_done(&st.computes))
            .unwrap_or_default();

        let src = (0..z)
            .map(|kk| Segment::new(layout.a + (k * z + kk) * n + i0, y))
            .collect();
        let load_a = prog.push(
            Action::DmaLoad {
                src,
                dst: stage_a,
                dst_offset: 0,
            },
            prev.clone(),
        );
        let mut deps = vec![Dep::done(load_a)];
        deps.extend(prev);
        let bcast_a = prog.push(
            Action::Broadcast {
                src: stage_a,
                dests: (0..p as u32).collect(),
                words: y * z,
                deliveries: (0..p)
                    .map(|c| Delivery {
                        src_offset: 0,
                        dst: in_a[c],
                        dst_offset: 0,
                        len: y * z,
                    })
                    .collect(),
            },
            deps,
        );
        if s + 1 < total {
            push_b(&mut prog, s + 1, &steps, &mut b_bcasts);
        }

        let computes = (0..p)
            .map(|c| {
                let mut deps = vec![Dep::first_word(bcast_a), Dep::done(b_bcasts[s])];
                if let Some(st) = steps.last() {
                    deps.push(Dep::done(st.computes[c]));
                }
                if k == 0 && !stores.is_empty() {
                    deps.push(Dep::done(stores[stores.len() - p + c]));
                }
                prog.push(
                    Action::ComputeFma {
                        core: c as u32,
                        op: FmaOp::OuterProduct {
                            a: in_a[c],
                            b: b_buf[c][s % 2],
                            c: c_buf[c],
                            y,
                            x,
                            z,
                            init: k == 0,
                        },
                    },
                    deps,
                )
            })
            .collect::<Vec<_>>();

        if k + 1 == per_group {
            for (c, &fma) in computes.iter().enumerate() {
                let dst = (0..y)
                    .map(|i| Segment::new(layout.c + (i0 + i) * n + j0 + c * x, x))
                    .collect();
                stores.push(prog.push(
                    Action::DmaStore {
                        src: c_buf[c],
                        src_offset: 0,
                        dst,
                    },
                    vec![Dep::done(fma)],
                ));
            }
        }
        steps.push(Step { computes });
    }
    Ok(prog)
}
