//! Running kernels end to end and sweeping architecture parameters.
//!
//! A run goes plan, schedule, simulate, and then checks the result against
//! the reference. A sweep takes the cross product of per-key value lists over
//! a base configuration and runs every kernel at every point; points run in
//! parallel but rows come back in enumeration order.

use crate::arch::{parse_config, with_overrides, ArchConfig, ConfigError};
use crate::dense::{build_dense_schedule, dense_memory, plan_blocks, BlockPlan, PlanError};
use crate::golden::{matmul_ref, spmv_ref, DimensionError};
use crate::matio::{
    gen_dense, gen_sparse, gen_vector, load_matrix_market, sparse_benchmark, MatrixIoError,
};
use crate::sim::{simulate_with, SimError, SimOptions, SimReport, TraceRow};
use crate::spmv::{build_spmv_schedule, spmv_memory, CscMatrix, SpmvError};
use rayon::prelude::*;
use serde::Deserialize;
use std::io::Write;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Spmv(#[from] SpmvError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Dimension(#[from] DimensionError),
    #[error(transparent)]
    Matrix(#[from] MatrixIoError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("empty sweep axis `{0}`")]
    EmptyAxis(String),
    #[error("sweep has no kernels")]
    NoKernels,
    #[error("malformed sweep document: {0}")]
    BadSweep(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Execute the data movement and compare with the reference.
    pub verify: bool,
    pub trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            verify: true,
            trace: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KernelRun {
    pub report: SimReport,
    /// Block plan, for dense runs.
    pub plan: Option<BlockPlan>,
    /// `Some(true)` when the result matched the reference bit for bit.
    pub verified: Option<bool>,
    pub trace: Option<Vec<TraceRow>>,
}

/// Multiplies two seeded `n x n` matrices.
pub fn run_dense(
    cfg: &ArchConfig,
    n: usize,
    seed: u64,
    opts: RunOptions,
) -> Result<KernelRun, RunError> {
    let plan = plan_blocks(cfg.local_mem_words as usize, cfg.num_cores as usize, n)?;
    run_dense_plan(cfg, &plan, seed, opts)
}

pub fn run_dense_plan(
    cfg: &ArchConfig,
    plan: &BlockPlan,
    seed: u64,
    opts: RunOptions,
) -> Result<KernelRun, RunError> {
    let a = gen_dense(plan.n, seed);
    let b = gen_dense(plan.n, seed.wrapping_add(1));
    let (mem, layout) = dense_memory(&a, &b)?;
    let prog = build_dense_schedule(plan, cfg, &layout)?;
    let sim = SimOptions {
        functional: opts.verify,
        trace: opts.trace,
    };
    let (report, trace) = simulate_with(&prog, cfg, &mem, sim)?;
    let verified = if opts.verify {
        let want = matmul_ref(&a, &b)?;
        let got = report.result_f32("C").unwrap_or_default();
        Some(bits(&got) == bits(&want.values))
    } else {
        None
    };
    Ok(KernelRun {
        report,
        plan: Some(*plan),
        verified,
        trace,
    })
}

/// Multiplies `csc` by a seeded vector.
pub fn run_spmv(
    cfg: &ArchConfig,
    csc: &CscMatrix,
    seed: u64,
    opts: RunOptions,
) -> Result<KernelRun, RunError> {
    let x = gen_vector(csc.ncols, seed);
    let (mem, layout) = spmv_memory(csc, &x);
    let prog = build_spmv_schedule(csc, &mem, &layout, cfg)?;
    let sim = SimOptions {
        functional: opts.verify,
        trace: opts.trace,
    };
    let (report, trace) = simulate_with(&prog, cfg, &mem, sim)?;
    let verified = if opts.verify {
        let want = spmv_ref(csc, &x)?;
        let got = report.result_f32("y").unwrap_or_default();
        Some(bits(&got) == bits(&want))
    } else {
        None
    };
    Ok(KernelRun {
        report,
        plan: None,
        verified,
        trace,
    })
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|f| f.to_bits()).collect()
}

/// Resolves a matrix argument: an existing Matrix Market file, a reference
/// benchmark name (synthetic stand-in), or `gen:M:N:LO:HI`.
pub fn resolve_matrix(spec: &str, seed: u64) -> Result<(String, CscMatrix), RunError> {
    let path = Path::new(spec);
    if path.is_file() {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| spec.to_string());
        return Ok((name, load_matrix_market(path)?.to_csc()?));
    }
    if let Some(b) = sparse_benchmark(spec) {
        return Ok((b.name.to_string(), b.stand_in(seed)));
    }
    if let Some(rest) = spec.strip_prefix("gen:") {
        let nums: Result<Vec<usize>, _> = rest.split(':').map(str::parse).collect();
        if let Ok(&[m, n, lo, hi]) = nums.as_deref() {
            return Ok((
                spec.to_string(),
                gen_sparse(m, n, (lo, hi), seed)?.to_csc()?,
            ));
        }
        return Err(MatrixIoError::InfeasibleRange(format!(
            "bad generator spec `{spec}`, expected gen:M:N:LO:HI"
        ))
        .into());
    }
    Err(MatrixIoError::Io {
        path: spec.to_string(),
        source: std::io::Error::new(
            std::io::ErrorKind::NotFound,
            "no such file or benchmark name",
        ),
    }
    .into())
}

/// One swept parameter and the values it takes.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpec {
    Dense {
        n: usize,
    },
    /// Matrix file, benchmark name or generator spec, see [`resolve_matrix`].
    Spmv {
        matrix: String,
    },
}

/// A sweep: base configuration, axes, kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: ArchConfig,
    pub axes: Vec<SweepAxis>,
    pub kernels: Vec<KernelSpec>,
    pub seed: u64,
}

/// On-disk sweep document. `base` is a configuration document; when it is
/// absent the configuration given on the command line is used.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepDocument {
    #[serde(default)]
    pub base: Option<serde_json::Value>,
    pub axes: Vec<SweepAxis>,
    pub kernels: Vec<KernelSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<String>,
}

impl SweepDocument {
    /// Parses a sweep document; `fallback` is the base when it names none.
    /// Returns the spec and the output path, if any.
    pub fn parse(
        text: &str,
        fallback: &ArchConfig,
    ) -> Result<(SweepSpec, Option<String>), RunError> {
        let doc: SweepDocument =
            serde_json::from_str(text).map_err(|e| RunError::BadSweep(e.to_string()))?;
        let base = match &doc.base {
            Some(v) => parse_config(&v.to_string())?,
            None => fallback.clone(),
        };
        let spec = SweepSpec {
            base,
            axes: doc.axes,
            kernels: doc.kernels,
            seed: doc.seed,
        };
        Ok((spec, doc.output))
    }
}

impl SweepSpec {
    /// Number of (configuration, kernel) points.
    pub fn size(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product::<usize>() * self.kernels.len()
    }

    /// Every configuration of the cross product, first axis outermost. A
    /// single-cluster base stays single-cluster when `num_cores` changes,
    /// unless `cores_per_cluster` is itself swept.
    pub fn points(&self) -> Result<Vec<Result<ArchConfig, ConfigError>>, RunError> {
        if let Some(a) = self.axes.iter().find(|a| a.values.is_empty()) {
            return Err(RunError::EmptyAxis(a.key.clone()));
        }
        if self.kernels.is_empty() {
            return Err(RunError::NoKernels);
        }
        let single_cluster = self.base.cores_per_cluster == self.base.num_cores
            && !self.axes.iter().any(|a| a.key == "cores_per_cluster");
        let mut combos: Vec<Vec<&serde_json::Value>> = vec![Vec::new()];
        for axis in &self.axes {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    axis.values.iter().map(move |v| {
                        let mut c = c.clone();
                        c.push(v);
                        c
                    })
                })
                .collect();
        }
        Ok(combos
            .into_iter()
            .map(|values| {
                let mut set: Vec<(&str, &serde_json::Value)> = Vec::new();
                for (axis, v) in self.axes.iter().zip(values) {
                    if axis.key == "num_cores" && single_cluster {
                        set.push(("cores_per_cluster", v));
                    }
                    set.push((&axis.key, v));
                }
                with_overrides(&self.base, set)
            })
            .collect())
    }
}

/// One line of the report CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub kernel: &'static str,
    /// `n` for dense runs, the matrix name for sparse runs.
    pub workload: String,
    pub p: u32,
    pub local_words: u32,
    pub clock_hz: u64,
    pub plan: Option<BlockPlan>,
    pub cycles: u64,
    pub time_s: f64,
    pub gflops: f64,
    pub efficiency: f64,
    pub words_read: u64,
    pub words_written: u64,
    pub cache_hit_rate: f64,
    pub error: String,
}

pub const REPORT_HEADER: [&str; 16] = [
    "kernel",
    "n|matrix",
    "p",
    "L_words",
    "clock_hz",
    "x",
    "y",
    "z",
    "cycles",
    "time_s",
    "gflops",
    "efficiency",
    "words_read",
    "words_written",
    "cache_hit_rate",
    "error",
];

impl ReportRow {
    pub fn from_run(
        kernel: &'static str,
        workload: String,
        cfg: &ArchConfig,
        run: &KernelRun,
    ) -> Self {
        let r = &run.report;
        let error = match run.verified {
            Some(false) => "golden mismatch".to_string(),
            _ => String::new(),
        };
        ReportRow {
            kernel,
            workload,
            p: cfg.num_cores,
            local_words: cfg.local_mem_words,
            clock_hz: cfg.clock_hz,
            plan: run.plan,
            cycles: r.total_cycles,
            time_s: r.wall_time_s,
            gflops: r.gflops,
            efficiency: r.efficiency,
            words_read: r.traffic.words_read,
            words_written: r.traffic.words_written,
            cache_hit_rate: r.traffic.hit_rate(),
            error,
        }
    }

    pub fn failed(
        kernel: &'static str,
        workload: String,
        cfg: Option<&ArchConfig>,
        error: String,
    ) -> Self {
        ReportRow {
            kernel,
            workload,
            p: cfg.map_or(0, |c| c.num_cores),
            local_words: cfg.map_or(0, |c| c.local_mem_words),
            clock_hz: cfg.map_or(0, |c| c.clock_hz),
            plan: None,
            cycles: 0,
            time_s: 0.0,
            gflops: 0.0,
            efficiency: 0.0,
            words_read: 0,
            words_written: 0,
            cache_hit_rate: 0.0,
            error,
        }
    }

    fn record(&self) -> Vec<String> {
        let dim = |f: fn(&BlockPlan) -> usize| {
            self.plan
                .as_ref()
                .map(|p| f(p).to_string())
                .unwrap_or_default()
        };
        vec![
            self.kernel.to_string(),
            self.workload.clone(),
            self.p.to_string(),
            self.local_words.to_string(),
            self.clock_hz.to_string(),
            dim(|p| p.x),
            dim(|p| p.y),
            dim(|p| p.z),
            self.cycles.to_string(),
            format!("{:.9}", self.time_s),
            format!("{:.4}", self.gflops),
            format!("{:.4}", self.efficiency),
            self.words_read.to_string(),
            self.words_written.to_string(),
            format!("{:.4}", self.cache_hit_rate),
            self.error.clone(),
        ]
    }
}

pub fn write_report<W: Write>(rows: &[ReportRow], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(REPORT_HEADER)?;
    for r in rows {
        out.write_record(r.record())?;
    }
    out.flush()?;
    Ok(())
}

/// Runs every point of the sweep. Failures become rows with the error column
/// set; the outer error is reserved for a malformed spec.
pub fn run_sweep(spec: &SweepSpec, opts: RunOptions) -> Result<Vec<ReportRow>, RunError> {
    let configs = spec.points()?;
    let matrices: Vec<Option<Result<(String, CscMatrix), String>>> = spec
        .kernels
        .iter()
        .map(|k| match k {
            KernelSpec::Dense { .. } => None,
            KernelSpec::Spmv { matrix } => {
                Some(resolve_matrix(matrix, spec.seed).map_err(|e| e.to_string()))
            }
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..spec.kernels.len()).map(move |k| (c, k)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(c, k)| {
            let (kernel, workload) = match &spec.kernels[k] {
                KernelSpec::Dense { n } => ("dense", n.to_string()),
                KernelSpec::Spmv { matrix } => match &matrices[k] {
                    Some(Ok((name, _))) => ("spmv", name.clone()),
                    _ => ("spmv", matrix.clone()),
                },
            };
            let cfg = match &configs[c] {
                Ok(cfg) => cfg,
                Err(e) => return ReportRow::failed(kernel, workload, None, e.to_string()),
            };
            let run = match (&spec.kernels[k], &matrices[k]) {
                (KernelSpec::Dense { n }, _) => run_dense(cfg, *n, spec.seed, opts),
                (_, Some(Ok((_, m)))) => run_spmv(cfg, m, spec.seed, opts),
                (_, Some(Err(e))) => {
                    return ReportRow::failed(kernel, workload, Some(cfg), e.clone())
                }
                (_, None) => unreachable!("sparse kernels always resolve a matrix"),
            };
            match run {
                Ok(run) => ReportRow::from_run(kernel, workload, cfg, &run),
                Err(e) => ReportRow::failed(kernel, workload, Some(cfg), e.to_string()),
            }
        })
        .collect();
    Ok(rows)
}
