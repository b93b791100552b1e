use clap::{Parser, Subcommand};
use manycore::arch::{
    estimate_resources, load_config, peak_flops, serialize_config, ArchConfig, ConfigError,
};
use manycore::dense::{build_dense_schedule, dense_memory, plan_blocks, predict_traffic};
use manycore::dse::{
    resolve_matrix, run_dense, run_spmv, run_sweep, write_report, KernelRun, ReportRow, RunError,
    RunOptions, SweepDocument,
};
use manycore::golden::replay_ref;
use manycore::matio::{gen_dense, gen_vector, MatrixIoError};
use manycore::sim::{simulate, write_trace, SimError, SimReport};
use manycore::spmv::{assign_rows_for, build_spmv_schedule, load_balance, spmv_memory, SpmvError};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Simulator and design-space exploration for a many-core FMA overlay.
#[derive(Parser)]
#[command(name = "manycore", version)]
struct Cli {
    /// Architecture configuration (JSON). Defaults to the built-in 16-core instance.
    #[arg(long, global = true, env = "MANYCORE_CONFIG")]
    config: Option<PathBuf>,
    /// Seed for generated matrices and vectors.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Write a per-transaction trace (CSV) to this path.
    #[arg(long, global = true)]
    trace: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration document and print its canonical form.
    Validate {
        /// Configuration file; overrides --config.
        path: Option<PathBuf>,
    },
    /// Estimate FPGA resources and peak throughput.
    Estimate,
    /// Run dense matrix multiplication on seeded n x n operands.
    RunDense {
        #[arg(long)]
        n: usize,
        /// Skip functional execution and the reference check.
        #[arg(long)]
        no_verify: bool,
        /// Also write the report row to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run sparse matrix-vector multiplication.
    RunSpmv {
        /// Matrix Market file, benchmark name (e.g. BIBD_14_7) or gen:M:N:LO:HI.
        #[arg(long)]
        matrix: String,
        #[arg(long)]
        no_verify: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Print the per-core nonzero balance as CSV.
        #[arg(long)]
        balance: bool,
    },
    /// Run every point of a sweep document and write the report CSV.
    Sweep {
        spec: PathBuf,
        /// Output CSV; overrides the document's `output`. Defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check simulation against the references and the independent replay.
    Verify {
        /// Dense problem size.
        #[arg(long, conflicts_with = "matrix")]
        n: Option<usize>,
        /// Sparse matrix, as for run-spmv.
        #[arg(long)]
        matrix: Option<String>,
    },
    /// Print the default configuration document.
    PrintDefaults,
}

enum Failure {
    Config(String),
    Infeasible(String),
    Mismatch(String),
    Io(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Mismatch(_) => 4,
            Failure::Io(_) => 5,
            Failure::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m)
            | Failure::Infeasible(m)
            | Failure::Mismatch(m)
            | Failure::Io(m)
            | Failure::Other(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Io(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let msg = e.to_string();
        match e {
            RunError::Config(c) => c.into(),
            RunError::Plan(_)
            | RunError::Spmv(SpmvError::LocalMemory { .. })
            | RunError::Sim(SimError::LocalMemoryOverflow { .. }) => Failure::Infeasible(msg),
            RunError::Matrix(MatrixIoError::Io { .. }) => Failure::Io(msg),
            RunError::Matrix(_)
            | RunError::BadSweep(_)
            | RunError::EmptyAxis(_)
            | RunError::NoKernels => Failure::Config(msg),
            _ => Failure::Other(msg),
        }
    }
}

macro_rules! from_run {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                RunError::from(e).into()
            }
        }
    )*};
}
from_run!(
    manycore::dense::PlanError,
    SpmvError,
    SimError,
    MatrixIoError,
    manycore::golden::DimensionError
);

fn config(cli: &Cli) -> Result<ArchConfig, Failure> {
    match &cli.config {
        Some(p) => Ok(load_config(p)?),
        None => Ok(ArchConfig::default()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn report<W: Write>(rows: &[ReportRow], w: W) -> Result<(), Failure> {
    write_report(rows, w).map_err(|e| Failure::Io(e.to_string()))
}

fn print_report(r: &SimReport) {
    println!("cycles          {}", r.total_cycles);
    println!("time            {:.6} s", r.wall_time_s);
    println!(
        "gflops          {:.3} (peak {:.1})",
        r.gflops, r.peak_gflops
    );
    println!("efficiency      {:.2}%", r.efficiency * 100.0);
    println!("words read      {}", r.traffic.words_read);
    println!("words written   {}", r.traffic.words_written);
    println!("cache hit rate  {:.4}", r.traffic.hit_rate());
    if let (Ok(u), Ok(o)) = (r.core_utilization(), r.core_occupancy()) {
        println!(
            "core issue      {:.2}% (occupied {:.2}%)",
            u * 100.0,
            o * 100.0
        );
    }
    if let Ok(d) = r.utilization("dma_read") {
        println!("dma read busy   {:.2}%", d * 100.0);
    }
}

fn finish_run(
    cli: &Cli,
    row: ReportRow,
    run: &KernelRun,
    csv: Option<&Path>,
) -> Result<(), Failure> {
    print_report(&run.report);
    match run.verified {
        Some(true) => println!("verified        bit-exact against the reference"),
        Some(false) => {}
        None => println!("verified        skipped"),
    }
    let rows = [row];
    report(&rows, io::stdout().lock())?;
    if let Some(path) = csv {
        report(&rows, create(path)?)?;
    }
    if let (Some(path), Some(trace)) = (&cli.trace, &run.trace) {
        let mut w = create(path)?;
        write_trace(trace, &mut w)?;
        w.flush()?;
    }
    if run.verified == Some(false) {
        return Err(Failure::Mismatch(
            "golden mismatch: simulated result differs from the reference".into(),
        ));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let opts = |no_verify: bool| RunOptions {
        verify: !no_verify,
        trace: cli.trace.is_some(),
    };
    match &cli.command {
        Command::Validate { path } => {
            let cfg = match path {
                Some(p) => load_config(p)?,
                None => config(cli)?,
            };
            print!("{}", serialize_config(&cfg));
            eprintln!("configuration is valid");
        }
        Command::Estimate => {
            let cfg = config(cli)?;
            let e = estimate_resources(&cfg);
            let flag = if e.extrapolated {
                " (uncalibrated extrapolation)"
            } else {
                ""
            };
            println!(
                "{} LUTs, {} DSPs, {} BRAMs, {:.1} GFLOPs peak{flag}",
                e.luts,
                e.dsps,
                e.brams,
                peak_flops(&cfg) / 1e9
            );
        }
        Command::RunDense { n, no_verify, csv } => {
            let cfg = config(cli)?;
            let run = run_dense(&cfg, *n, cli.seed, opts(*no_verify))?;
            let plan = run.plan.expect("dense runs carry a plan");
            let t = predict_traffic(&plan);
            println!(
                "plan            x={} y={} z={} (footprint {} words)",
                plan.x,
                plan.y,
                plan.z,
                plan.footprint()
            );
            println!(
                "traffic         A {} + B {} + C {} words",
                t.reads_a, t.reads_b, t.writes_c
            );
            let row = ReportRow::from_run("dense", n.to_string(), &cfg, &run);
            finish_run(cli, row, &run, csv.as_deref())?;
        }
        Command::RunSpmv {
            matrix,
            no_verify,
            csv,
            balance,
        } => {
            let cfg = config(cli)?;
            let (name, m) = resolve_matrix(matrix, cli.seed)?;
            println!(
                "matrix          {name}: {}x{}, {} nonzeros",
                m.nrows,
                m.ncols,
                m.nnz()
            );
            if *balance {
                let lb = load_balance(&m, &assign_rows_for(&m, cfg.num_cores as usize))?;
                println!("core,fraction");
                for (c, f) in lb.fractions.iter().enumerate() {
                    println!("{c},{f:.4}");
                }
            }
            let run = run_spmv(&cfg, &m, cli.seed, opts(*no_verify))?;
            let row = ReportRow::from_run("spmv", name, &cfg, &run);
            finish_run(cli, row, &run, csv.as_deref())?;
        }
        Command::Sweep { spec, output } => {
            let text = std::fs::read_to_string(spec)
                .map_err(|e| Failure::Io(format!("{}: {e}", spec.display())))?;
            let (sweep, doc_output) = SweepDocument::parse(&text, &config(cli)?)?;
            eprintln!("sweep: {} points", sweep.size());
            let rows = run_sweep(
                &sweep,
                RunOptions {
                    verify: false,
                    trace: false,
                },
            )?;
            let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
            match output.clone().or(doc_output.map(PathBuf::from)) {
                Some(path) => {
                    report(&rows, create(&path)?)?;
                    eprintln!("wrote {} rows to {}", rows.len(), path.display());
                }
                None => report(&rows, io::stdout().lock())?,
            }
            if failed > 0 {
                eprintln!("{failed} points failed; see the error column");
            }
        }
        Command::Verify { n, matrix } => {
            let cfg = config(cli)?;
            let (label, reference, prog, mem, output) = match (n, matrix) {
                (Some(n), None) => {
                    let plan =
                        plan_blocks(cfg.local_mem_words as usize, cfg.num_cores as usize, *n)?;
                    let (a, b) = (
                        gen_dense(*n, cli.seed),
                        gen_dense(*n, cli.seed.wrapping_add(1)),
                    );
                    let (mem, layout) = dense_memory(&a, &b)?;
                    let prog = build_dense_schedule(&plan, &cfg, &layout)?;
                    let want = manycore::golden::matmul_ref(&a, &b)?.values;
                    (format!("dense n={n}"), want, prog, mem, "C")
                }
                (None, Some(spec)) => {
                    let (name, m) = resolve_matrix(spec, cli.seed)?;
                    let x = gen_vector(m.ncols, cli.seed);
                    let (mem, layout) = spmv_memory(&m, &x);
                    let prog = build_spmv_schedule(&m, &mem, &layout, &cfg)?;
                    let want = manycore::golden::spmv_ref(&m, &x)?;
                    (format!("spmv {name}"), want, prog, mem, "y")
                }
                _ => {
                    return Err(Failure::Config(
                        "verify needs exactly one of --n or --matrix".into(),
                    ))
                }
            };
            let report = simulate(&prog, &cfg, &mem)?;
            let replay = replay_ref(&prog, &mem)?;
            let simulated = &report.results[output];
            let want: Vec<u32> = reference.iter().map(|v| v.to_bits()).collect();
            let vs_ref = *simulated == want;
            let vs_replay = *simulated == replay[output];
            println!(
                "{label}: reference {}, replay {}",
                verdict(vs_ref),
                verdict(vs_replay)
            );
            if !(vs_ref && vs_replay) {
                return Err(Failure::Mismatch("golden mismatch".into()));
            }
        }
        Command::PrintDefaults => print!("{}", serialize_config(&ArchConfig::default())),
    }
    Ok(())
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "match"
    } else {
        "MISMATCH"
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
