//! Shared test support: an independent brute-force scheduler and generators
//! for random machines and race-free random programs.

#![allow(dead_code)]

use manycore::arch::{validate, ArchConfig, DmaConfig, Interconnect, Topology};
use manycore::dense::{build_dense_schedule, dense_memory, predict_traffic, BlockPlan};
use manycore::golden::{matmul_ref, replay_ref};
use manycore::matio::{gen_dense, gen_sparse, gen_vector};
use manycore::sim::{
    simulate, simulate_with, Action, BufId, BufferKind, Delivery, Dep, DepPoint, FmaOp, Layout,
    MemoryImage, Owner, Program, Segment, SimOptions, SimReport, TraceRow,
};
use manycore::spmv::{build_spmv_schedule, spmv_memory};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// Ticks per cycle. Every rate the generators pick divides it, so the
/// oracle works in exact integers.
const Q: u64 = 4;

/// Start and end cycle of every transaction, as decided by the oracle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub start: Vec<u64>,
    pub end: Vec<u64>,
    pub makespan: u64,
}

/// Burst cache and stream tracker, in integer ticks.
pub struct Port {
    line_words: usize,
    capacity: usize,
    /// (first address, fill start tick), oldest first.
    lines: Vec<(usize, u64)>,
    /// (last address, last use) per stream; the stalest is dropped.
    streams: Vec<(usize, u64)>,
    clock: u64,
    mem_free: u64,
    mem_word: u64,
    lat: u64,
}

impl Port {
    pub fn new(d: &DmaConfig) -> Self {
        let r = d.read_words_per_cycle;
        assert!(
            [1.0, 2.0, 4.0].contains(&r),
            "oracle needs a read rate dividing {Q}"
        );
        Port {
            line_words: d.cacheline_words as usize,
            capacity: d.cachelines as usize,
            lines: Vec::new(),
            streams: Vec::new(),
            clock: 0,
            mem_free: 0,
            mem_word: (Q as f64 / r) as u64,
            lat: d.mem_latency_cycles as u64 * Q,
        }
    }

    fn stream_continues(&mut self, addr: usize) -> bool {
        self.clock += 1;
        let continues = addr > 0 && self.streams.iter().any(|s| s.0 == addr - 1);
        self.streams.retain(|s| s.0 != addr);
        if continues {
            let s = self.streams.iter_mut().find(|s| s.0 == addr - 1).unwrap();
            *s = (addr, self.clock);
            return true;
        }
        if self.streams.len() == self.capacity {
            let stalest = (0..self.streams.len())
                .min_by_key(|&i| self.streams[i].1)
                .unwrap();
            self.streams.remove(stalest);
        }
        self.streams.push((addr, self.clock));
        false
    }

    /// Returns (first word, duration) in cycles.
    pub fn load(&mut self, start: u64, addrs: &[usize]) -> (u64, u64) {
        let t0 = start * Q;
        let mut t = t0;
        let mut first = None;
        for &a in addrs {
            let streaming = self.stream_continues(a);
            let cached = self
                .lines
                .iter()
                .find(|&&(base, _)| base <= a && a < base + self.line_words)
                .copied();
            t = match cached {
                Some((base, fill)) => (t + Q).max(fill + (a - base + 1) as u64 * self.mem_word),
                None => {
                    let issue = t.max(self.mem_free) + if streaming { 0 } else { self.lat };
                    if self.lines.len() == self.capacity {
                        self.lines.remove(0);
                    }
                    self.lines.push((a, issue));
                    self.mem_free = issue + self.line_words as u64 * self.mem_word;
                    issue + Q.max(self.mem_word)
                }
            };
            first.get_or_insert(t);
        }
        let cycles = |ticks: u64| (ticks - t0).div_ceil(Q);
        (cycles(first.unwrap_or(t0)), cycles(t))
    }
}

/// Hardware a transaction occupies, named independently of the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Unit {
    Reader,
    Writer,
    Fma(u32),
    Shared,
    Out(i64),
    In(u32),
    Wire(i64, u32),
}

fn node(p: &Program, b: BufId) -> i64 {
    match p.buffers[b.0].owner {
        Owner::Dma => -1,
        Owner::Core(c) => c as i64,
    }
}

/// (units, first word, duration) for everything except loads.
fn fixed_timing(p: &Program, cfg: &ArchConfig, a: &Action) -> (Vec<Unit>, u64, u64) {
    match a {
        Action::DmaStore { dst, .. } => {
            let w = cfg.dma.write_words_per_cycle;
            assert!(
                w == w.trunc() && w >= 1.0,
                "oracle needs an integer write rate"
            );
            let words: u64 = dst.iter().map(|s| s.len as u64).sum();
            let d = words.div_ceil(w as u64);
            (vec![Unit::Writer], d.min(1), d)
        }
        Action::Broadcast {
            src, dests, words, ..
        } => {
            let words = *words as u64;
            let ic = cfg.interconnect;
            let flits = words.div_ceil(ic.link_width_words as u64);
            let hop = ic.hop_latency_cycles as u64;
            let from = node(p, *src);
            let (units, first, d) = match ic.topology {
                Topology::BusBroadcast => (vec![Unit::Shared], 1, flits),
                Topology::Ring => {
                    // positions: DMA at 0, core c at c + 1
                    let ring = cfg.num_cores as i64 + 1;
                    let far = dests
                        .iter()
                        .map(|&c| (c as i64 + 1 - (from + 1)).rem_euclid(ring) as u64)
                        .max()
                        .unwrap_or(0);
                    (vec![Unit::Shared], far * hop + 1, far * hop + flits)
                }
                Topology::Crossbar => {
                    let mut u = vec![Unit::Out(from)];
                    u.extend(dests.iter().map(|&c| Unit::In(c)));
                    (u, hop + 1, hop + flits)
                }
                Topology::PointToPoint => (
                    dests.iter().map(|&c| Unit::Wire(from, c)).collect(),
                    hop + 1,
                    hop + flits,
                ),
            };
            if words == 0 {
                (units, 0, 0)
            } else {
                (units, first, d)
            }
        }
        Action::ComputeFma { core, op } => {
            let k = op.count();
            let lat = cfg.fma_latency_cycles as u64;
            let d = if k == 0 { 0 } else { k + lat - 1 };
            (vec![Unit::Fma(*core)], lat.min(d), d)
        }
        Action::Barrier => (Vec::new(), 0, 0),
        Action::DmaLoad { .. } => (vec![Unit::Reader], 0, 0),
    }
}

/// Brute-force list scheduler: steps through every cycle and, in rounds,
/// starts transactions in id order whenever their dependencies are met and
/// their units are idle. Completions made visible inside a cycle take
/// effect in the next round of that cycle.
pub fn oracle_schedule(p: &Program, cfg: &ArchConfig) -> Schedule {
    let n = p.txns.len();
    let mut port = Port::new(&cfg.dma);
    let mut start: Vec<Option<u64>> = vec![None; n];
    let mut first = vec![0u64; n];
    let mut end = vec![0u64; n];
    let mut idle_at: HashMap<Unit, u64> = HashMap::new();
    let mut left = n;
    let mut t = 0u64;
    while left > 0 {
        loop {
            let eligible: Vec<usize> = (0..n)
                .filter(|&i| start[i].is_none())
                .filter(|&i| {
                    p.txns[i].deps.iter().all(|d| {
                        start[d.id].is_some()
                            && match d.on {
                                DepPoint::Done => end[d.id] <= t,
                                DepPoint::FirstWord => first[d.id] <= t,
                            }
                    })
                })
                .collect();
            let mut launched = false;
            let mut claimed: Vec<Unit> = Vec::new();
            for i in eligible {
                let action = &p.txns[i].action;
                let (units, f, d) = fixed_timing(p, cfg, action);
                let busy = |u: &Unit| claimed.contains(u) || idle_at.get(u).is_some_and(|&b| b > t);
                if units.iter().any(busy) {
                    continue;
                }
                let (f, d) = match action {
                    Action::DmaLoad { src, .. } => {
                        let addrs: Vec<usize> =
                            src.iter().flat_map(|s| s.addr..s.addr + s.len).collect();
                        port.load(t, &addrs)
                    }
                    _ => (f, d),
                };
                for u in units {
                    // held for the rest of the round even by zero-length work
                    idle_at.insert(u, t + d);
                    claimed.push(u);
                }
                start[i] = Some(t);
                first[i] = t + f;
                end[i] = t + d;
                left -= 1;
                launched = true;
            }
            if !launched {
                break;
            }
        }
        t += 1;
        assert!(t < 50_000_000, "oracle did not finish");
    }
    let start: Vec<u64> = start.into_iter().map(Option::unwrap).collect();
    let makespan = end.iter().copied().max().unwrap_or(0);
    Schedule {
        start,
        end,
        makespan,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A small random machine whose rates the oracle handles exactly.
pub fn random_config(r: &mut ChaCha8Rng) -> ArchConfig {
    let p = r.gen_range(1..=4);
    let topology = *[
        Topology::BusBroadcast,
        Topology::Ring,
        Topology::Crossbar,
        Topology::PointToPoint,
    ]
    .choose(r)
    .unwrap();
    let cfg = ArchConfig {
        num_cores: p,
        cores_per_cluster: p,
        local_mem_words: 256,
        cluster_shared_mem_words: 0,
        clock_hz: 100_000_000,
        interconnect: Interconnect {
            topology,
            hop_latency_cycles: r.gen_range(1..=3),
            link_width_words: r.gen_range(1..=2),
        },
        dma: DmaConfig {
            cachelines: r.gen_range(1..=4),
            cacheline_words: r.gen_range(1..=8),
            read_words_per_cycle: *[1.0, 2.0, 4.0].choose(r).unwrap(),
            write_words_per_cycle: *[1.0, 2.0].choose(r).unwrap(),
            mem_latency_cycles: r.gen_range(0..=40),
        },
        fma_latency_cycles: r.gen_range(1..=6),
        input_fifo_depth: 4,
    };
    assert!(validate(&cfg).is_empty());
    cfg
}

/// Tracks who last wrote and who read each buffer or memory region so every
/// conflicting pair of transactions is ordered.
#[derive(Default)]
struct Hazards {
    writer: HashMap<String, usize>,
    readers: HashMap<String, Vec<usize>>,
}

impl Hazards {
    fn deps(&self, reads: &[String], writes: &[String]) -> Vec<usize> {
        let mut d = Vec::new();
        for k in reads.iter().chain(writes) {
            d.extend(self.writer.get(k));
        }
        for k in writes {
            d.extend(self.readers.get(k).into_iter().flatten());
        }
        d
    }

    fn record(&mut self, id: usize, reads: &[String], writes: &[String]) {
        for k in reads {
            self.readers.entry(k.clone()).or_default().push(id);
        }
        for k in writes {
            self.writer.insert(k.clone(), id);
            self.readers.remove(k);
        }
    }
}

const IN_WORDS: usize = 64;
const OUT_WORDS: usize = 32;

struct Bufs {
    stage: [BufId; 2],
    /// Per core: a (8), b (8), c (16), acc (1), input (16).
    core: Vec<[BufId; 5]>,
}

fn key(b: BufId) -> String {
    format!("buf{}", b.0)
}

/// A random program of `len` transactions on `cfg`, race free, with every
/// dependency pointing at a lower id.
pub fn random_program(r: &mut ChaCha8Rng, cfg: &ArchConfig, len: usize) -> (Program, MemoryImage) {
    let mut mem = MemoryImage::new();
    let input: Vec<f32> = (0..IN_WORDS)
        .map(|_| r.gen_range(-4i32..=4) as f32)
        .collect();
    let in_base = mem.add_f32_region("in", &input, Layout::Array);
    let out_base = mem.add_region("out", vec![0; OUT_WORDS], Layout::Array);

    let mut p = Program::new("random");
    p.outputs = vec!["out".into()];
    let stage = [
        p.buffer(Owner::Dma, "s0", 16, BufferKind::Staging),
        p.buffer(Owner::Dma, "s1", 16, BufferKind::Staging),
    ];
    let core = (0..cfg.num_cores)
        .map(|c| {
            let o = Owner::Core(c);
            [
                p.buffer(o, "a", 8, BufferKind::Local),
                p.buffer(o, "b", 8, BufferKind::Local),
                p.buffer(o, "c", 16, BufferKind::Local),
                p.buffer(o, "acc", 1, BufferKind::Local),
                p.buffer(o, "in", 16, BufferKind::Input),
            ]
        })
        .collect();
    let bufs = Bufs { stage, core };
    let mut hz = Hazards::default();

    for id in 0..len {
        let (action, reads, writes) = random_action(r, cfg, &bufs, in_base, out_base);
        let mut deps: Vec<Dep> = hz
            .deps(&reads, &writes)
            .into_iter()
            .map(|d| random_point(r, d))
            .collect();
        if id > 0 {
            for _ in 0..r.gen_range(0..=2) {
                let d = r.gen_range(0..id);
                deps.push(random_point(r, d));
            }
        }
        deps.sort_by_key(|d| (d.id, d.on == DepPoint::Done));
        deps.dedup_by_key(|d| d.id);
        hz.record(id, &reads, &writes);
        p.push(action, deps);
    }
    (p, mem)
}

fn random_point(r: &mut ChaCha8Rng, id: usize) -> Dep {
    if r.gen_bool(0.3) {
        Dep::first_word(id)
    } else {
        Dep::done(id)
    }
}

fn segments(r: &mut ChaCha8Rng, base: usize, region: usize, total: usize) -> Vec<Segment> {
    let mut left = total;
    let mut segs = Vec::new();
    while left > 0 {
        let len = r.gen_range(1..=left);
        let addr = base + r.gen_range(0..=region - len);
        segs.push(Segment::new(addr, len));
        left -= len;
    }
    segs
}

fn random_action(
    r: &mut ChaCha8Rng,
    cfg: &ArchConfig,
    bufs: &Bufs,
    in_base: usize,
    out_base: usize,
) -> (Action, Vec<String>, Vec<String>) {
    let c = r.gen_range(0..cfg.num_cores) as usize;
    let [a, b, cb, acc, _] = bufs.core[c];
    match r.gen_range(0..10) {
        0..=2 => {
            let (dst, cap) = if r.gen_bool(0.6) {
                (bufs.stage[r.gen_range(0..2)], 16)
            } else {
                ([a, b][r.gen_range(0..2)], 8)
            };
            let words = r.gen_range(0..=cap);
            let src = segments(r, in_base, IN_WORDS, words);
            let dst_offset = r.gen_range(0..=cap - words);
            (
                Action::DmaLoad {
                    src,
                    dst,
                    dst_offset,
                },
                vec!["in".into()],
                vec![key(dst)],
            )
        }
        3 => {
            let words = r.gen_range(0..=16);
            let dst = segments(r, out_base, OUT_WORDS, words);
            (
                Action::DmaStore {
                    src: cb,
                    src_offset: r.gen_range(0..=16 - words),
                    dst,
                },
                vec![key(cb)],
                vec!["out".into()],
            )
        }
        4..=5 => {
            let src = bufs.stage[r.gen_range(0..2)];
            let mut dests: Vec<u32> = (0..cfg.num_cores).filter(|_| r.gen_bool(0.6)).collect();
            if dests.is_empty() {
                dests.push(c as u32);
            }
            let words = r.gen_range(0..=8);
            let deliveries: Vec<Delivery> = dests
                .iter()
                .map(|&d| {
                    let dst = bufs.core[d as usize][r.gen_range(0..2)];
                    Delivery {
                        src_offset: r.gen_range(0..=16 - words),
                        dst,
                        dst_offset: r.gen_range(0..=8 - words),
                        len: words,
                    }
                })
                .collect();
            let writes = deliveries.iter().map(|d| key(d.dst)).collect();
            (
                Action::Broadcast {
                    src,
                    dests,
                    words,
                    deliveries,
                },
                vec![key(src)],
                writes,
            )
        }
        6..=7 => {
            let (y, x, z) = (r.gen_range(1..=4), r.gen_range(1..=4), r.gen_range(1..=2));
            let op = FmaOp::OuterProduct {
                a,
                b,
                c: cb,
                y,
                x,
                z,
                init: r.gen_bool(0.3),
            };
            (
                Action::ComputeFma { core: c as u32, op },
                vec![key(a), key(b), key(cb)],
                vec![key(cb)],
            )
        }
        8 => {
            let op = FmaOp::Dot {
                a,
                b,
                acc,
                len: r.gen_range(0..=8),
            };
            (
                Action::ComputeFma { core: c as u32, op },
                vec![key(a), key(b), key(acc)],
                vec![key(acc)],
            )
        }
        _ => (Action::Barrier, Vec::new(), Vec::new()),
    }
}

fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|d| n.is_multiple_of(*d)).collect()
}

/// A random feasible block plan for a small dense product on `cfg`.
pub fn random_plan(r: &mut ChaCha8Rng, cfg: &ArchConfig) -> BlockPlan {
    let p = cfg.num_cores as usize;
    let n = p * r.gen_range(1..=4);
    let x = *divisors(n / p).choose(r).unwrap();
    let y = *divisors(n).choose(r).unwrap();
    let z = *divisors(n).choose(r).unwrap();
    BlockPlan::new(n, p, cfg.local_mem_words as usize, x, y, z).expect("small plans fit")
}

fn compare_schedule(
    prog: &Program,
    cfg: &ArchConfig,
    trace: &[TraceRow],
    what: &str,
) -> Result<(), String> {
    let want = oracle_schedule(prog, cfg);
    for row in trace {
        let (s, e) = (want.start[row.id], want.end[row.id]);
        if (row.start, row.end) != (s, e) {
            return Err(format!(
                "{what}: txn {} ({}) simulated [{}, {}), oracle [{s}, {e})",
                row.id, row.kind, row.start, row.end
            ));
        }
    }
    let end = trace.iter().map(|r| r.end).max().unwrap_or(0);
    if end != want.makespan {
        return Err(format!(
            "{what}: makespan {end} vs oracle {}",
            want.makespan
        ));
    }
    Ok(())
}

fn run_traced(
    prog: &Program,
    cfg: &ArchConfig,
    mem: &MemoryImage,
) -> Result<(SimReport, Vec<TraceRow>), String> {
    let opts = SimOptions {
        functional: true,
        trace: true,
    };
    let (rep, trace) = simulate_with(prog, cfg, mem, opts).map_err(|e| e.to_string())?;
    Ok((rep, trace.expect("trace requested")))
}

fn same_as_replay(
    prog: &Program,
    mem: &MemoryImage,
    rep: &SimReport,
    what: &str,
) -> Result<(), String> {
    let replay = replay_ref(prog, mem).map_err(|e| e.to_string())?;
    if replay != rep.results {
        return Err(format!("{what}: simulated results differ from the replay"));
    }
    Ok(())
}

/// Largest program the oracle is asked to schedule.
pub const ORACLE_LIMIT: usize = 50;

/// One randomized case: a random program and a small kernel, both checked
/// against the oracle, the replay and for determinism. Dense kernels also
/// check the traffic prediction.
pub fn check_case(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let cfg = random_config(&mut r);

    let len = r.gen_range(1..=ORACLE_LIMIT);
    let (prog, mem) = random_program(&mut r, &cfg, len);
    let (rep, trace) = run_traced(&prog, &cfg, &mem)?;
    compare_schedule(&prog, &cfg, &trace, "random program")?;
    same_as_replay(&prog, &mem, &rep, "random program")?;
    let again = simulate(&prog, &cfg, &mem).map_err(|e| e.to_string())?;
    if again.to_json() != rep.to_json() {
        return Err("random program: two runs disagree".into());
    }

    let (prog, mem) = if seed.is_multiple_of(2) {
        let plan = random_plan(&mut r, &cfg);
        let (a, b) = (gen_dense(plan.n, seed), gen_dense(plan.n, seed ^ 1));
        let (mem, layout) = dense_memory(&a, &b).map_err(|e| e.to_string())?;
        let prog = build_dense_schedule(&plan, &cfg, &layout).map_err(|e| e.to_string())?;
        let rep = simulate(&prog, &cfg, &mem).map_err(|e| e.to_string())?;
        let t = predict_traffic(&plan);
        let got =
            |m: &std::collections::BTreeMap<String, u64>, k: &str| m.get(k).copied().unwrap_or(0);
        let counted = (
            got(&rep.traffic.region_reads, "A"),
            got(&rep.traffic.region_reads, "B"),
            got(&rep.traffic.region_writes, "C"),
        );
        if counted != (t.reads_a, t.reads_b, t.writes_c) {
            return Err(format!(
                "{plan:?}: counted traffic {counted:?}, predicted {t:?}"
            ));
        }
        let want: Vec<u32> = matmul_ref(&a, &b)
            .unwrap()
            .values
            .iter()
            .map(|v| v.to_bits())
            .collect();
        if rep.results["C"] != want {
            return Err(format!("{plan:?}: product differs from the reference"));
        }
        (prog, mem)
    } else {
        let (m, n) = (r.gen_range(1..=24), r.gen_range(1..=24));
        let hi = r.gen_range(0..=m.min(6));
        let csc = gen_sparse(m, n, (r.gen_range(0..=hi), hi), seed)
            .and_then(|t| Ok(t.to_csc()?))
            .map_err(|e| e.to_string())?;
        let x = gen_vector(n, seed);
        let (mem, layout) = spmv_memory(&csc, &x);
        let prog = build_spmv_schedule(&csc, &mem, &layout, &cfg).map_err(|e| e.to_string())?;
        (prog, mem)
    };
    let (rep, trace) = run_traced(&prog, &cfg, &mem)?;
    same_as_replay(&prog, &mem, &rep, &prog.name)?;
    if prog.len() <= 4 * ORACLE_LIMIT {
        compare_schedule(&prog, &cfg, &trace, &prog.name)?;
    }
    Ok(())
}
