use super::cache::DmaReadPort;
use super::exec::Machine;
use super::memory::MemoryImage;
use super::network::{network_delay, Node, Resource};
use super::program::{Action, DepPoint, Owner, Program, TxnId};
use super::validate::validate_program;
use super::{SimError, SimReport, TraceRow, Traffic};
use crate::arch::{peak_flops, ArchConfig};
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Execute functional actions. Timing never depends on data, so this can
    /// be switched off for timing-only sweeps.
    pub functional: bool,
    pub trace: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            functional: true,
            trace: false,
        }
    }
}

pub fn simulate(
    program: &Program,
    cfg: &ArchConfig,
    mem: &MemoryImage,
) -> Result<SimReport, SimError> {
    simulate_with(program, cfg, mem, SimOptions::default()).map(|(r, _)| r)
}

/// Static per-transaction data resolved before the run.
struct Prepared {
    resources: Vec<usize>,
    /// Fixed timing (duration, first word) for everything but DMA loads.
    fixed: Option<(u64, u64)>,
}

struct Engine<'a> {
    program: &'a Program,
    cfg: &'a ArchConfig,
    prep: Vec<Prepared>,
    resource_names: Vec<Resource>,
    busy_until: Vec<u64>,
    busy: Vec<u64>,
    pending: Vec<usize>,
    /// For each transaction, dependents waiting on (first word, done).
    waiters: Vec<[Vec<TxnId>; 2]>,
    events: BinaryHeap<Reverse<(u64, TxnId, u8)>>,
    ready: BTreeSet<TxnId>,
    port: DmaReadPort,
    machine: Option<Machine>,
    traffic: Traffic,
    region_of_txn: Vec<Vec<(String, u64)>>,
    trace: Option<Vec<TraceRow>>,
    end: u64,
}

const FIRST: u8 = 0;
const DONE: u8 = 1;

impl<'a> Engine<'a> {
    fn new(
        program: &'a Program,
        cfg: &'a ArchConfig,
        mem: &MemoryImage,
        opts: SimOptions,
    ) -> Result<Self, SimError> {
        validate_program(program, cfg, mem)?;
        let n = program.txns.len();
        let mut index: HashMap<Resource, usize> = HashMap::new();
        let mut resource_names = Vec::new();
        let mut intern = |r: Resource| {
            *index.entry(r).or_insert_with(|| {
                resource_names.push(r);
                resource_names.len() - 1
            })
        };
        // every core and both DMA channels are always reported
        intern(Resource::DmaRead);
        intern(Resource::DmaWrite);
        for c in 0..cfg.num_cores {
            intern(Resource::Core(c));
        }

        let fma_lat = cfg.fma_latency_cycles as u64;
        let mut prep = Vec::with_capacity(n);
        let mut region_of_txn = Vec::with_capacity(n);
        for t in &program.txns {
            let mut regions = Vec::new();
            let (res, fixed): (Vec<Resource>, Option<(u64, u64)>) = match &t.action {
                Action::DmaLoad { src, .. } => {
                    for s in src.iter().filter(|s| s.len > 0) {
                        let r = mem.region_of(s.addr, s.len).expect("validated");
                        regions.push((r.name.clone(), s.len as u64));
                    }
                    (vec![Resource::DmaRead], None)
                }
                Action::DmaStore { dst, .. } => {
                    for s in dst.iter().filter(|s| s.len > 0) {
                        let r = mem.region_of(s.addr, s.len).expect("validated");
                        regions.push((r.name.clone(), s.len as u64));
                    }
                    let words = t.action.payload();
                    let d = (words as f64 / cfg.dma.write_words_per_cycle).ceil() as u64;
                    let first = if words == 0 {
                        0
                    } else {
                        (1.0 / cfg.dma.write_words_per_cycle).ceil() as u64
                    };
                    (vec![Resource::DmaWrite], Some((d, first.min(d))))
                }
                Action::Broadcast {
                    src, dests, words, ..
                } => {
                    let source = match program.buffers[src.0].owner {
                        Owner::Dma => Node::Dma,
                        Owner::Core(c) => Node::Core(c),
                    };
                    let nt = network_delay(cfg, source, dests, *words as u64)?;
                    (nt.resources, Some((nt.duration, nt.first_word)))
                }
                Action::ComputeFma { core, op } => {
                    let k = op.count();
                    let d = if k == 0 { 0 } else { k + fma_lat - 1 };
                    (vec![Resource::Core(*core)], Some((d, fma_lat.min(d))))
                }
                Action::Barrier => (Vec::new(), Some((0, 0))),
            };
            let resources = res.into_iter().map(&mut intern).collect();
            prep.push(Prepared { resources, fixed });
            region_of_txn.push(regions);
        }

        let mut pending = vec![0; n];
        let mut waiters: Vec<[Vec<TxnId>; 2]> = vec![[Vec::new(), Vec::new()]; n];
        for t in &program.txns {
            pending[t.id] = t.deps.len();
            for d in &t.deps {
                let slot = match d.on {
                    DepPoint::FirstWord => 0,
                    DepPoint::Done => 1,
                };
                waiters[d.id][slot].push(t.id);
            }
        }
        let ready = (0..n).filter(|&i| pending[i] == 0).collect();
        let nres = resource_names.len();
        Ok(Engine {
            program,
            cfg,
            prep,
            resource_names,
            busy_until: vec![0; nres],
            busy: vec![0; nres],
            pending,
            waiters,
            events: BinaryHeap::new(),
            ready,
            port: DmaReadPort::new(&cfg.dma),
            machine: opts.functional.then(|| Machine::new(program, mem)),
            traffic: Traffic::default(),
            region_of_txn,
            trace: opts.trace.then(Vec::new),
            end: 0,
        })
    }

    fn start(&mut self, id: TxnId, t: u64) {
        let txn = &self.program.txns[id];
        let (duration, first) = match self.prep[id].fixed {
            Some(f) => f,
            None => {
                let Action::DmaLoad { src, .. } = &txn.action else {
                    unreachable!("only loads have dynamic timing")
                };
                let lt = self
                    .port
                    .load(t, src.iter().flat_map(|s| s.addr..s.addr + s.len));
                self.traffic.cache_hits += lt.hits;
                self.traffic.cache_misses += lt.misses;
                (lt.duration, lt.first_word)
            }
        };
        match txn.kind() {
            super::Kind::DmaLoad => {
                self.traffic.words_read += txn.action.payload();
                for (r, w) in &self.region_of_txn[id] {
                    *self.traffic.region_reads.entry(r.clone()).or_insert(0) += w;
                }
            }
            super::Kind::DmaStore => {
                self.traffic.words_written += txn.action.payload();
                for (r, w) in &self.region_of_txn[id] {
                    *self.traffic.region_writes.entry(r.clone()).or_insert(0) += w;
                }
            }
            _ => {}
        }
        if let Some(m) = self.machine.as_mut() {
            m.apply(&txn.action);
        }
        for &r in &self.prep[id].resources {
            self.busy_until[r] = t + duration;
            self.busy[r] += duration;
        }
        self.events.push(Reverse((t + first, id, FIRST)));
        self.events.push(Reverse((t + duration, id, DONE)));
        self.end = self.end.max(t + duration);
        if let Some(tr) = self.trace.as_mut() {
            let resource = self.prep[id]
                .resources
                .iter()
                .map(|&r| self.resource_names[r].to_string())
                .collect::<Vec<_>>()
                .join("+");
            tr.push(TraceRow {
                id,
                kind: txn.kind(),
                resource,
                start: t,
                end: t + duration,
            });
        }
    }

    fn run(&mut self) {
        let mut t = 0u64;
        loop {
            while let Some(&Reverse((et, id, point))) = self.events.peek() {
                if et > t {
                    break;
                }
                self.events.pop();
                let idx = point as usize;
                for k in 0..self.waiters[id][idx].len() {
                    let w = self.waiters[id][idx][k];
                    self.pending[w] -= 1;
                    if self.pending[w] == 0 {
                        self.ready.insert(w);
                    }
                }
            }
            let mut started = Vec::new();
            for &id in &self.ready {
                if self.prep[id]
                    .resources
                    .iter()
                    .all(|&r| self.busy_until[r] <= t)
                {
                    // claim the resources now so later ids in this scan see them busy
                    started.push(id);
                    for &r in &self.prep[id].resources {
                        self.busy_until[r] = u64::MAX;
                    }
                }
            }
            for &id in &started {
                self.ready.remove(&id);
                self.start(id, t);
            }
            match self.events.peek() {
                Some(&Reverse((et, _, _))) => t = et.max(t),
                None => break,
            }
        }
        debug_assert!(self.ready.is_empty(), "ready transactions left unstarted");
    }

    fn report(self) -> (SimReport, Option<Vec<TraceRow>>) {
        let cfg = self.cfg;
        let fmas = self.program.fma_count();
        let flops = 2 * fmas;
        let secs = self.end as f64 / cfg.clock_hz as f64;
        let gflops = if self.end == 0 {
            0.0
        } else {
            flops as f64 / secs / 1e9
        };
        let peak = peak_flops(cfg) / 1e9;
        let busy: BTreeMap<String, u64> = self
            .resource_names
            .iter()
            .zip(&self.busy)
            .map(|(r, b)| (r.to_string(), *b))
            .collect();
        let mut results = BTreeMap::new();
        if let Some(m) = &self.machine {
            for name in &self.program.outputs {
                if let Ok(w) = m.mem.region_words(name) {
                    results.insert(name.clone(), w.to_vec());
                }
            }
        }
        let report = SimReport {
            program: self.program.name.clone(),
            num_cores: cfg.num_cores,
            clock_hz: cfg.clock_hz,
            total_cycles: self.end,
            wall_time_s: secs,
            fmas,
            flops,
            gflops,
            peak_gflops: peak,
            efficiency: gflops / peak,
            traffic: self.traffic,
            busy,
            results,
        };
        (report, self.trace)
    }
}

/// Simulates with explicit options; returns the trace when requested.
pub fn simulate_with(
    program: &Program,
    cfg: &ArchConfig,
    mem: &MemoryImage,
    opts: SimOptions,
) -> Result<(SimReport, Option<Vec<TraceRow>>), SimError> {
    let mut engine = Engine::new(program, cfg, mem, opts)?;
    engine.run();
    Ok(engine.report())
}
