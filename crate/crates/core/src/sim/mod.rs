//! Transaction-level discrete-event simulator.
//!
//! A [`Program`] is a DAG of transactions, each bound to one or more
//! serially occupied resources: the DMA read channel, the DMA write channel,
//! the interconnect, or a core's FMA pipeline. [`simulate`] runs the program
//! against a [`MemoryImage`], executing every transaction's functional action
//! when it starts and timing it with the rules below.
//!
//! Scheduling: at each cycle, completions are applied first, then the ready
//! transactions are visited in increasing id order and each one starts if
//! all of its resources are free. A transaction is ready once every
//! dependency has reached the point it waits for (first word or done).
//!
//! Durations:
//! - `DmaLoad`: delivered through the burst cache, see [`cache::DmaReadPort`].
//! - `DmaStore`: `ceil(words / write_words_per_cycle)`.
//! - `Broadcast`: [`network::network_delay`].
//! - `ComputeFma`: `k + fma_latency_cycles - 1` for a burst of `k` FMAs.
//! - `Barrier`: zero.

pub mod cache;
mod engine;
pub(crate) mod exec;
pub mod memory;
pub mod network;
pub mod program;
mod validate;

pub use cache::{
    cache_access, DmaCacheState, DmaReadPort, LoadTiming, Outcome, DELIVERY_WORDS_PER_CYCLE,
};
pub use engine::{simulate, simulate_with, SimOptions};
pub use memory::{Layout, MemoryImage, Region};
pub use network::{network_delay, Node, Resource};
pub use program::{
    Action, BufId, BufferDecl, BufferKind, Delivery, Dep, DepPoint, FmaOp, Kind, Owner, Program,
    Segment, Transaction, TxnId,
};
pub use validate::{topo_order, validate_program};

use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("transaction {txn}: cyclic dependency")]
    CyclicDependency { txn: TxnId },
    #[error("transaction {txn}: dependency on unknown or self transaction {dep}")]
    BadDependency { txn: TxnId, dep: TxnId },
    #[error("transaction {txn}: access of {len} words at {addr} is outside every memory region")]
    OutOfRegion { txn: TxnId, addr: usize, len: usize },
    #[error("transaction {txn}: core {core} local memory overflow ({words} words > {limit})")]
    LocalMemoryOverflow {
        txn: TxnId,
        core: u32,
        words: usize,
        limit: usize,
    },
    #[error("transaction {txn}: access past the end of buffer {owner}.{buffer}")]
    BufferBounds {
        txn: TxnId,
        buffer: String,
        owner: String,
    },
    #[error("transaction {txn}: unknown buffer #{buffer}")]
    UnknownBuffer { txn: TxnId, buffer: usize },
    #[error("transaction {txn}: buffer {buffer} is not owned by core {core}")]
    WrongOwner {
        txn: TxnId,
        buffer: String,
        core: u32,
    },
    #[error("transaction {txn}: source and destination overlap")]
    Aliased { txn: TxnId },
    #[error("transaction {txn}: unknown core {core}")]
    UnknownCore { txn: TxnId, core: u32 },
    #[error("unknown destination core {0}")]
    UnknownDestination(u32),
    #[error("unknown memory region `{0}`")]
    UnknownRegion(String),
    #[error("unknown resource `{0}`")]
    UnknownResource(String),
    #[error("zero-length run")]
    ZeroLengthRun,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Traffic {
    pub words_read: u64,
    pub words_written: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    /// Words read per memory region.
    pub region_reads: BTreeMap<String, u64>,
    /// Words written per memory region.
    pub region_writes: BTreeMap<String, u64>,
}

impl Traffic {
    pub fn hit_rate(&self) -> f64 {
        let n = self.cache_hits + self.cache_misses;
        if n == 0 {
            0.0
        } else {
            self.cache_hits as f64 / n as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub program: String,
    pub num_cores: u32,
    pub clock_hz: u64,
    pub total_cycles: u64,
    pub wall_time_s: f64,
    pub fmas: u64,
    pub flops: u64,
    pub gflops: f64,
    pub peak_gflops: f64,
    pub efficiency: f64,
    pub traffic: Traffic,
    /// Busy cycles per resource, keyed by resource name.
    pub busy: BTreeMap<String, u64>,
    /// Final contents of the program's output regions.
    pub results: BTreeMap<String, Vec<u32>>,
}

impl SimReport {
    /// Fraction of the run during which `resource` was busy.
    pub fn utilization(&self, resource: &str) -> Result<f64, SimError> {
        let busy = *self
            .busy
            .get(resource)
            .ok_or_else(|| SimError::UnknownResource(resource.to_string()))?;
        if self.total_cycles == 0 {
            return Err(SimError::ZeroLengthRun);
        }
        Ok(busy as f64 / self.total_cycles as f64)
    }

    /// Share of the FMA issue slots of all cores that were used. Pipeline
    /// fill is not counted; see [`SimReport::core_occupancy`].
    pub fn core_utilization(&self) -> Result<f64, SimError> {
        if self.total_cycles == 0 {
            return Err(SimError::ZeroLengthRun);
        }
        Ok(self.fmas as f64 / (self.total_cycles as f64 * self.num_cores as f64))
    }

    /// Mean fraction of the run the cores were occupied, pipeline fill
    /// included.
    pub fn core_occupancy(&self) -> Result<f64, SimError> {
        if self.total_cycles == 0 {
            return Err(SimError::ZeroLengthRun);
        }
        let busy: u64 = (0..self.num_cores)
            .map(|c| self.busy.get(&format!("core{c}")).copied().unwrap_or(0))
            .sum();
        Ok(busy as f64 / (self.total_cycles as f64 * self.num_cores as f64))
    }

    pub fn result_f32(&self, region: &str) -> Option<Vec<f32>> {
        self.results
            .get(region)
            .map(|w| w.iter().map(|b| f32::from_bits(*b)).collect())
    }

    /// Canonical byte form, used to check run-to-run determinism.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// One executed transaction, for the optional trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRow {
    pub id: TxnId,
    pub kind: Kind,
    pub resource: String,
    pub start: u64,
    pub end: u64,
}

pub fn write_trace<W: Write>(rows: &[TraceRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "id,kind,resource,start,end")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.id, r.kind, r.resource, r.start, r.end
        )?;
    }
    Ok(())
}
