//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and fails if any criterion fails.
//!
//! Sparse inputs are the synthetic stand-ins unless `MANYCORE_MATRICES`
//! names a directory holding `<name>.mtx` files.

mod common;

use manycore::arch::{estimate_resources, peak_flops, ArchConfig};
use manycore::dense::{
    build_dense_schedule, closed_form_traffic, dense_memory, plan_blocks, predict_traffic,
    real_optimum, BlockPlan,
};
use manycore::dse::{run_dense, run_spmv, RunOptions};
use manycore::golden::replay_ref;
use manycore::matio::{gen_dense, gen_vector, load_matrix_market, SPARSE_BENCHMARKS};
use manycore::sim::simulate;
use manycore::spmv::{assign_rows_for, build_spmv_schedule, load_balance, spmv_memory, CscMatrix};
use std::path::PathBuf;

const SEED: u64 = 42;

// Tolerances.
const DENSE_CYCLES_TOL: f64 = 0.10;
const EFFICIENCY_TOL_PP: f64 = 5.0;
const GFLOPS_TOL: f64 = 0.10;
const SPMV_TIME_TOL: f64 = 0.25;
const BIBD_CYCLES_PER_NNZ: (f64, f64) = (1.9, 2.3);
const BALANCE_RANGE: (f64, f64) = (0.20, 0.30);
const SCALING_TOL: f64 = 0.10;
const PLANNER_TOL: f64 = 0.05;
const ORACLE_CASES: u64 = 500;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(got: f64, want: f64) -> f64 {
    (got - want).abs() / want
}

fn dense_16() -> Outcome {
    let run = run_dense(&ArchConfig::default(), 1024, SEED, RunOptions::default())
        .map_err(|e| e.to_string())?;
    let r = &run.report;
    let cycles = r.total_cycles as f64;
    let eff = r.efficiency * 100.0;
    check(
        run.verified == Some(true)
            && rel(cycles, 77_772_668.0) <= DENSE_CYCLES_TOL
            && (eff - 86.0).abs() <= EFFICIENCY_TOL_PP,
        format!(
            "p=16 n=1024: {} cycles ({:+.1}% vs 77,772,668), efficiency {eff:.1}% (target 86), bit-exact {:?}",
            r.total_cycles,
            (cycles / 77_772_668.0 - 1.0) * 100.0,
            run.verified
        ),
    )
}

fn dense_32() -> Outcome {
    let run = run_dense(
        &ArchConfig::baseline_32core(),
        1024,
        SEED,
        RunOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let r = &run.report;
    let eff = r.efficiency * 100.0;
    check(
        run.verified == Some(true)
            && (eff - 84.0).abs() <= EFFICIENCY_TOL_PP
            && rel(r.gflops, 13.5) <= GFLOPS_TOL,
        format!(
            "p=32 n=1024: efficiency {eff:.1}% (target 84), {:.2} GFLOPs (target 13.5), bit-exact {:?}",
            r.gflops, run.verified
        ),
    )
}

fn resources() -> Outcome {
    let a = estimate_resources(&ArchConfig::default());
    let b = estimate_resources(&ArchConfig::baseline_32core());
    let got = (
        (a.luts, a.dsps, a.brams, peak_flops(&ArchConfig::default())),
        (
            b.luts,
            b.dsps,
            b.brams,
            peak_flops(&ArchConfig::baseline_32core()),
        ),
    );
    check(
        got == ((24_390, 71, 140, 8e9), (46_576, 135, 140, 16e9)),
        format!("16 cores {:?}, 32 cores {:?}", got.0, got.1),
    )
}

/// The four reference sparse inputs: real files when available.
fn sparse_inputs() -> Result<Vec<(&'static str, f64, CscMatrix)>, String> {
    let dir = std::env::var_os("MANYCORE_MATRICES").map(PathBuf::from);
    SPARSE_BENCHMARKS
        .iter()
        .map(|b| {
            let file = dir.as_ref().map(|d| d.join(format!("{}.mtx", b.name)));
            let m = match file.filter(|f| f.is_file()) {
                Some(f) => load_matrix_market(&f)
                    .and_then(|t| Ok(t.to_csc()?))
                    .map_err(|e| e.to_string())?,
                None => b.stand_in(SEED),
            };
            Ok((b.name, b.hw_time_us, m))
        })
        .collect()
}

fn spmv_times() -> Outcome {
    let cfg = ArchConfig::spmv_2core();
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, want_us, m) in sparse_inputs()? {
        let run = run_spmv(&cfg, &m, SEED, RunOptions::default()).map_err(|e| e.to_string())?;
        let us = run.report.wall_time_s * 1e6;
        ok &= run.verified == Some(true) && rel(us, want_us) <= SPMV_TIME_TOL;
        let x = gen_vector(m.ncols, SEED);
        let (mem, layout) = spmv_memory(&m, &x);
        let prog = build_spmv_schedule(&m, &mem, &layout, &cfg).map_err(|e| e.to_string())?;
        let replay = replay_ref(&prog, &mem).map_err(|e| e.to_string())?;
        ok &= replay["y"]
            .iter()
            .map(|w| f32::from_bits(*w))
            .collect::<Vec<_>>()
            == run.report.result_f32("y").unwrap();
        let mut part = format!(
            "{name} {us:.0} us ({:+.0}% vs {want_us})",
            (us / want_us - 1.0) * 100.0
        );
        if name == "BIBD_14_7" {
            let per_nnz = run.report.total_cycles as f64 / m.nnz() as f64;
            ok &= (BIBD_CYCLES_PER_NNZ.0..=BIBD_CYCLES_PER_NNZ.1).contains(&per_nnz);
            part += &format!(", {per_nnz:.2} cycles/nnz");
        }
        parts.push(part);
    }
    check(ok, parts.join("; "))
}

fn balance() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, _, m) in sparse_inputs()? {
        let lb = load_balance(&m, &assign_rows_for(&m, 4)).map_err(|e| e.to_string())?;
        ok &= lb
            .fractions
            .iter()
            .all(|f| (BALANCE_RANGE.0..=BALANCE_RANGE.1).contains(f));
        parts.push(format!("{name} [{:.3}, {:.3}]", lb.min, lb.max));
    }
    check(ok, parts.join("; "))
}

fn marginal_scaling() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, _, m) in sparse_inputs()? {
        let times: Vec<f64> = [2, 4, 8]
            .iter()
            .map(|&p| {
                let cfg = ArchConfig {
                    num_cores: p,
                    cores_per_cluster: p,
                    ..ArchConfig::spmv_2core()
                };
                let opts = RunOptions {
                    verify: false,
                    trace: false,
                };
                run_spmv(&cfg, &m, SEED, opts).map(|r| r.report.wall_time_s)
            })
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let lo = times.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = times.iter().cloned().fold(0.0, f64::max);
        let spread = hi / lo - 1.0;
        ok &= spread < SCALING_TOL;
        parts.push(format!("{name} {:.1}%", spread * 100.0));
    }
    check(
        ok,
        format!("spread over p in {{2,4,8}}: {}", parts.join(", ")),
    )
}

/// Least traffic over every feasible integer block shape, by brute force.
fn brute_force_min(local: usize, p: usize, n: usize) -> Option<u64> {
    let mut best = None;
    for x in 1..=n {
        for y in 1..=n {
            if BlockPlan::new(n, p, local, x, y, 1).is_ok() {
                let n = n as u64;
                let t = n * n * n / (x as u64 * p as u64) + n * n * n / y as u64 + n * n;
                best = Some(best.map_or(t, |b: u64| b.min(t)));
            }
        }
    }
    best
}

fn planner() -> Outcome {
    let mut checked = 0u64;
    let mut worst = 0.0f64;
    for local in 1..=256 {
        for p in 1..=8 {
            for n in 1..=64 {
                let planned = plan_blocks(local, p, n)
                    .ok()
                    .map(|b| predict_traffic(&b).total());
                match (planned, brute_force_min(local, p, n)) {
                    (None, None) => {}
                    (Some(t), Some(best)) => worst = worst.max(t as f64 / best as f64 - 1.0),
                    (a, b) => {
                        return Err(format!(
                            "L={local} p={p} n={n}: planner {a:?}, brute force {b:?}"
                        ))
                    }
                }
                checked += 1;
            }
        }
    }
    // the real-valued optimum beats every point on the footprint boundary
    let mut grid_ok = true;
    for (local, p) in [(64, 1), (256, 4), (4096, 32), (8192, 16)] {
        let (x0, y0) = real_optimum(local, p);
        let n = 1024.0;
        let at = |y: f64| closed_form_traffic(n, p as f64, local as f64 / (2.0 + y), y);
        let best = at(y0);
        grid_ok &= (x0 - local as f64 / (2.0 + y0)).abs() < 1e-9;
        grid_ok &=
            (1..200_000).all(|i| at(i as f64 * local as f64 / 200_000.0) >= best * (1.0 - 1e-12));
    }
    check(
        worst <= PLANNER_TOL && grid_ok,
        format!(
            "{checked} cases, worst excess {:.2}%, real optimum minimal on grid: {grid_ok}",
            worst * 100.0
        ),
    )
}

fn oracle_suite() -> Outcome {
    for seed in 0..ORACLE_CASES {
        common::check_case(seed).map_err(|e| format!("case {seed}: {e}"))?;
    }
    Ok(format!(
        "{ORACLE_CASES} random cases: replay bit-match, traffic, oracle makespan, determinism"
    ))
}

fn z_invariance() -> Outcome {
    let cfg = ArchConfig {
        num_cores: 4,
        cores_per_cluster: 4,
        local_mem_words: 512,
        ..ArchConfig::default()
    };
    let n = 32;
    let (a, b) = (gen_dense(n, SEED), gen_dense(n, SEED + 1));
    let (mem, layout) = dense_memory(&a, &b).map_err(|e| e.to_string())?;
    let mut seen = Vec::new();
    for z in [1, 2, 4] {
        let plan = BlockPlan::new(n, 4, 512, 4, 16, z).map_err(|e| e.to_string())?;
        let prog = build_dense_schedule(&plan, &cfg, &layout).map_err(|e| e.to_string())?;
        let r = simulate(&prog, &cfg, &mem).map_err(|e| e.to_string())?;
        let t = predict_traffic(&plan);
        let counted = (
            r.traffic.region_reads["A"],
            r.traffic.region_reads["B"],
            r.traffic.region_writes["C"],
        );
        if counted != (t.reads_a, t.reads_b, t.writes_c) {
            return Err(format!("z={z}: counted {counted:?}, predicted {t:?}"));
        }
        seen.push(t);
    }
    check(
        seen.windows(2).all(|w| w[0] == w[1]),
        format!("x=4 y=16, z in {{1,2,4}}: {:?}", seen[0]),
    )
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("dense, 16 cores", dense_16),
        ("dense, 32 cores", dense_32),
        ("resource model", resources),
        ("sparse timings", spmv_times),
        ("load balance", balance),
        ("marginal scaling", marginal_scaling),
        ("planner optimality", planner),
        ("oracle suite", oracle_suite),
        ("z invariance", z_invariance),
    ];
    let results: Vec<Outcome> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria.iter().map(|(_, f)| s.spawn(f)).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut failed = 0;
    for (i, ((name, _), result)) in criteria.iter().zip(&results).enumerate() {
        match result {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
