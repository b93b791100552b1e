//! Transaction-level simulator and design-space exploration toolkit for a
//! many-core overlay built from soft FMA cores, a shared DMA engine with a
//! burst cache, and a configurable on-chip network.
//!
//! The pieces:
//! - [`arch`]: architecture parameters, their JSON form and the FPGA
//!   resource model.
//! - [`sim`]: programs of dependent transactions and the discrete-event
//!   engine that times them.
//! - [`dense`] and [`spmv`]: the two kernels, each a planner plus a schedule
//!   builder.
//! - [`golden`]: reference results used to check the simulator.
//! - [`matio`]: Matrix Market I/O and seeded workload generators.
//! - [`dse`]: sweeps over architecture parameters.

pub mod arch;
pub mod dense;
pub mod dse;
pub mod golden;
pub mod matio;
pub mod sim;
pub mod spmv;

pub use arch::{
    estimate_resources, load_config, parse_config, peak_flops, serialize_config, validate,
    with_override, with_overrides, ArchConfig, ConfigError, ResourceEstimate, Topology,
};
pub use dense::{build_dense_schedule, plan_blocks, predict_traffic, BlockPlan, TrafficCount};
pub use golden::{matmul_ref, replay_ref, spmv_ref, DenseMatrix};
pub use sim::{simulate, MemoryImage, Program, SimError, SimReport};
pub use spmv::{build_spmv_schedule, to_csc, CscMatrix};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    struct Intro;
    #[doc = include_str!("../../../book/src/architecture.md")]
    struct Architecture;
    #[doc = include_str!("../../../book/src/simulator.md")]
    struct Simulator;
    #[doc = include_str!("../../../book/src/dense.md")]
    struct Dense;
    #[doc = include_str!("../../../book/src/spmv.md")]
    struct Spmv;
    #[doc = include_str!("../../../book/src/calibration.md")]
    struct Calibration;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
