//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Run with `cargo test -p xybook-cli --test acceptance`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use tempfile::TempDir;

use xybook::calib::{
    solve, solve_normal_equations, BlockToeplitz, BlockToeplitzSystem, DesignMoments, SolveMethod,
};
use xybook::evaluate::{evaluate, train_len, EvalOptions};
use xybook::ingest::{extract_xy, write_log};
use xybook::models::{
    fit_regression, simulate_path, BasisSpec, CoeffBlock, ResidualLaw, SideModel, Verdict, YLink,
};
use xybook::passage::{critical_queue, estimate_p, MCParams};
use xybook::reconstruct::{reconstruct_stream, TransitionKind};
use xybook::synth::{random_log, SynthConfig};
use xybook::{BookState, LagBuffer, Tick, XYModel, XySeries};

/// Outcome of one criterion: pass flag and a one-line detail.
type Check = (bool, String);

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

// ---------------------------------------------------------------- 1 and 2

struct ReplayTally {
    logs: usize,
    events: u64,
    mismatches: u64,
    spread_jumps: u64,
    narrow_at_one: u64,
}

/// Spread changes beyond one tick, and narrowings from a one-tick spread.
fn spread_breaches(start: &BookState, trs: &[xybook::Transition]) -> (u64, u64) {
    let mut prev = *start;
    let (mut jumps, mut narrow1) = (0, 0);
    for tr in trs {
        let s = tr.state_after;
        if (s.spread_ticks() - prev.spread_ticks()).abs() > 1 {
            jumps += 1;
        }
        if matches!(tr.kind, TransitionKind::NarrowAsk | TransitionKind::NarrowBid) && prev.spread_ticks() < 2 {
            narrow1 += 1;
        }
        prev = s;
    }
    (jumps, narrow1)
}

fn fuzz_logs() -> (ReplayTally, f64) {
    let t = Instant::now();
    let per_log: Vec<(u64, u64, u64, u64)> = (0..1000u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0000 + i);
            let events = if i == 0 { 100_000 } else { rng.random_range(1..=100_000) };
            let cfg = SynthConfig {
                events,
                p_deplete: rng.random_range(0.0..0.5),
                p_inside: rng.random_range(0.0..0.5),
                max_qty: rng.random_range(1..=60),
                max_spread: rng.random_range(1..=10),
                ..SynthConfig::default()
            };
            let raw = random_log(&cfg, &mut rng);
            let Ok((series, report)) = extract_xy(&raw) else {
                return (events as u64, 1, 0, 0);
            };
            if report.dropped() != 0 || series.segments.len() != 1 || series.len() != events {
                return (events as u64, 1, 0, 0);
            }
            let seg = &series.segments[0];
            let Ok(trs) = reconstruct_stream(&seg.start, &seg.events) else {
                return (events as u64, 1, 0, 0);
            };
            let mut bad = u64::from(seg.start != raw[0].state());
            bad += trs
                .iter()
                .zip(&raw[1..])
                .filter(|(tr, snap)| tr.state_after != snap.state())
                .count() as u64;
            let (jumps, narrow1) = spread_breaches(&seg.start, &trs);
            (events as u64, bad, jumps, narrow1)
        })
        .collect();
    let mut tally = ReplayTally {
        logs: per_log.len(),
        events: 0,
        mismatches: 0,
        spread_jumps: 0,
        narrow_at_one: 0,
    };
    for (n, bad, j, n1) in per_log {
        tally.events += n;
        tally.mismatches += bad;
        tally.spread_jumps += j;
        tally.narrow_at_one += n1;
    }
    (tally, t.elapsed().as_secs_f64())
}

fn criterion_1(tally: &ReplayTally, secs: f64) -> Check {
    let ok = tally.logs == 1000 && tally.mismatches == 0 && secs < 60.0;
    (
        ok,
        format!(
            "{} logs, {} events, {} state mismatches, {secs:.1}s (limit 60s)",
            tally.logs, tally.events, tally.mismatches
        ),
    )
}

fn criterion_2(tally: &ReplayTally) -> Check {
    // also replay simulated paths of a model that places orders inside the spread
    let model = XYModel::iid(&[-3, -2, -1, 1, 2, 3], 0.5, YLink::fixed(4, 0.4));
    let (mut jumps, mut narrow1, mut n) = (tally.spread_jumps, tally.narrow_at_one, tally.events);
    for seed in 0..20 {
        let start = BookState::new(1000, 1003, 5, 5).unwrap();
        let mut hist = LagBuffer::filled(1, [1.0, 1.0]);
        let path = simulate_path(&model, &start, &mut hist, 50_000, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let trs: Vec<_> = path.into_iter().map(|(_, t)| t).collect();
        let (j, n1) = spread_breaches(&start, &trs);
        jumps += j;
        narrow1 += n1;
        n += trs.len() as u64;
    }
    (
        jumps == 0 && narrow1 == 0,
        format!("{n} transitions, {jumps} spread changes beyond one tick, {narrow1} narrowings at spread 1"),
    )
}

// ---------------------------------------------------------------- 3 and 4

fn criterion_3() -> Check {
    let t = Instant::now();
    let model = XYModel::iid(&[1, -1], 0.5, YLink::fixed(10, 0.0));
    let state = BookState::new(100, 101, 10, 10).unwrap();
    let e = estimate_p(&state, &model, &LagBuffer::filled(1, [1.0, 1.0]), 100_000, 10_000, 2024).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let dev = (e.p_up - 0.5).abs();
    (
        dev <= 3.0 * e.half_width && secs < 30.0,
        format!(
            "p_up {:.5}, |p_up-0.5| {dev:.5} vs 3*half_width {:.5}, censored {:.4}, {secs:.1}s (limit 30s)",
            e.p_up,
            3.0 * e.half_width,
            e.censored
        ),
    )
}

fn criterion_4() -> Check {
    let model = XYModel::iid(&[-3, -2, -1, 1, 2, 3], 0.5, YLink::fixed(4, 0.3));
    let hist = LagBuffer::filled(1, [1.0, 1.0]);
    let (n_paths, horizon, seed) = (5_000, 5_000, 77);
    let mut breaks = 0;
    for spread in [1, 3] {
        let mut prev = u64::MAX;
        for q_a in 1..=20 {
            let s = BookState::new(100, 100 + spread, 6, q_a).unwrap();
            let e = estimate_p(&s, &model, &hist, n_paths, horizon, seed).unwrap();
            if e.n_up > prev {
                breaks += 1;
            }
            prev = e.n_up;
        }
    }
    let mc = MCParams {
        n_paths,
        horizon,
        seed,
        max_queue: 4096,
    };
    let base = BookState::new(100, 101, 1, 1).unwrap();
    let q_star: Vec<i64> = (1..=20)
        .map(|q_b| critical_queue(&base, &model, &hist, q_b, &mc).unwrap())
        .collect();
    let q_breaks = q_star.windows(2).filter(|w| w[1] < w[0]).count();
    (
        breaks == 0 && q_breaks == 0,
        format!("{breaks} increases of p_up over q_a=1..20 (spreads 1, 3); q* = {q_star:?}"),
    )
}

// ---------------------------------------------------------------- 5 and 6

fn random_blocks(rng: &mut ChaCha8Rng, d: usize, p: usize) -> Vec<DMatrix<f64>> {
    // autocovariances of a random vector MA(q), plus 0.1 I at lag 0
    let q = rng.random_range(0..=p.min(8));
    let b: Vec<DMatrix<f64>> = (0..=q).map(|_| DMatrix::from_fn(d, d, |_, _| normal(rng))).collect();
    (0..p)
        .map(|k| {
            let mut r = DMatrix::zeros(d, d);
            for j in 0..(q + 1).saturating_sub(k) {
                r += &b[j + k] * b[j].transpose();
            }
            if k == 0 {
                r += DMatrix::identity(d, d) * 0.1;
            }
            r
        })
        .collect()
}

fn dense_from_blocks(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let d = blocks[0].nrows();
    DMatrix::from_fn(blocks.len() * d, blocks.len() * d, |r, c| {
        let (i, a, j, b) = (r / d, r % d, c / d, c % d);
        if j >= i {
            blocks[j - i][(a, b)]
        } else {
            blocks[i - j][(b, a)]
        }
    })
}

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5005);
    let (mut worst_diff, mut worst_res) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let d = rng.random_range(1..=4);
        let p = rng.random_range(1..=64);
        let blocks = random_blocks(&mut rng, d, p);
        let rhs = DMatrix::from_fn(p * d, rng.random_range(1..=3), |_, _| normal(&mut rng));
        let dense = dense_from_blocks(&blocks);
        let oracle = dense.clone().lu().solve(&rhs).expect("SPD");
        let sys = BlockToeplitzSystem::new(BlockToeplitz::new(blocks).unwrap(), rhs.clone()).unwrap();
        let x = solve(&sys, SolveMethod::Levinson).unwrap();
        worst_diff = worst_diff.max((&x - &oracle).norm() / oracle.norm());
        worst_res = worst_res.max((&dense * &x - &rhs).norm() / rhs.norm());
    }
    let m = [DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 0.5)];
    let ar1 = solve_normal_equations(&DesignMoments::yule_walker(&m).unwrap(), SolveMethod::Levinson).unwrap();
    let hand = (ar1.blocks[0][(0, 0)] - 0.5).abs();
    (
        worst_diff <= 1e-8 && worst_res <= 1e-8 && hand <= 1e-12,
        format!("max rel diff {worst_diff:.2e}, max residual {worst_res:.2e} (limit 1e-8); AR(1) error {hand:.1e} (limit 1e-12)"),
    )
}

/// Autocovariances of a causal AR(p) from its MA(inf) weights.
fn ar_autocovariances(a: &[f64], max_lag: usize) -> Vec<f64> {
    let terms = 4000;
    let mut psi = vec![0.0; terms];
    psi[0] = 1.0;
    for j in 1..terms {
        psi[j] = (1..=a.len().min(j)).map(|i| a[i - 1] * psi[j - i]).sum();
    }
    (0..=max_lag).map(|k| (0..terms - k).map(|j| psi[j] * psi[j + k]).sum()).collect()
}

fn criterion_6() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut x = 0.0;
    let pairs: Vec<[f64; 2]> = (0..100_000)
        .map(|_| {
            x = 0.5 * x + normal(&mut rng);
            [x, normal(&mut rng)]
        })
        .collect();
    let reg = fit_regression(&[pairs], &BasisSpec::identity(1), 0.0, SolveMethod::Levinson).unwrap();
    let ar1 = reg.coeffs[0].data[0];

    // roots 0.5 and -0.3
    let a = [0.2, 0.15];
    let gamma = ar_autocovariances(&a, 2);
    let m: Vec<DMatrix<f64>> = gamma.iter().map(|&g| DMatrix::from_element(1, 1, g)).collect();
    let sol = solve_normal_equations(&DesignMoments::yule_walker(&m).unwrap(), SolveMethod::Levinson).unwrap();
    let ar2_err = (0..2).map(|i| (sol.blocks[i][(0, 0)] - a[i]).abs()).fold(0.0, f64::max);
    (
        (ar1 - 0.5).abs() <= 0.02 && ar2_err <= 1e-6,
        format!("AR(1) estimate {ar1:.4} (0.5 +- 0.02); AR(2) max error {ar2_err:.1e} (limit 1e-6)"),
    )
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Check {
    let basis = BasisSpec::parse("identity,tanh:0.5", 2).unwrap();
    let blocks = vec![
        CoeffBlock {
            rows: 2,
            cols: 4,
            data: vec![0.2, 0.05, 0.3, 0.0, 0.1, 0.1, 0.0, 0.2],
        },
        CoeffBlock {
            rows: 2,
            cols: 4,
            data: vec![-0.1, 0.0, 0.1, 0.05, 0.0, 0.1, 0.05, 0.0],
        },
    ];
    let m = XYModel::from_parts(
        basis,
        [0.5, 1.0],
        blocks,
        ResidualLaw::gaussian_from(&[[1.0, 0.0], [-1.0, 2.0], [0.0, -2.0]]),
        SideModel::constant(0.5, 8),
        YLink::fixed(3, 0.0),
    )
    .unwrap();
    let certified = m.stability.verdict == Verdict::ContractiveCertified;
    let Some(k) = m.stability.halving_steps(2) else {
        return (false, format!("contractive model not certified: {:?}", m.stability));
    };
    let mut h1 = LagBuffer::filled(2, [50.0, -40.0]);
    let mut h2 = LagBuffer::filled(2, [-30.0, 25.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut dist = vec![h1.distance(&h2)];
    for _ in 0..400 {
        let eps = m.residual.draw(&mut rng);
        let z1 = m.iterate(&h1, eps).unwrap();
        let z2 = m.iterate(&h2, eps).unwrap();
        h1.push(z1);
        h2.push(z2);
        dist.push(h1.distance(&h2));
    }
    let halving_breaks = (0..dist.len() - k).filter(|&t| dist[t + k] > 0.5 * dist[t]).count();

    let explosive = XYModel::from_parts(
        BasisSpec::identity(1),
        [0.0; 2],
        vec![CoeffBlock {
            rows: 2,
            cols: 2,
            data: vec![1.1, 0.0, 0.0, 1.1],
        }],
        ResidualLaw::zero(),
        SideModel::constant(0.5, 2),
        YLink::fixed(1, 0.0),
    )
    .unwrap();
    let flagged = explosive.stability.verdict == Verdict::Uncertified;
    (
        certified && halving_breaks == 0 && flagged,
        format!(
            "margin {:?}, distance halves every {k} steps with {halving_breaks} exceptions over 400 steps; 1.1 I verdict {:?}",
            m.stability.lipschitz_margin, explosive.stability.verdict
        ),
    )
}

// ---------------------------------------------------------------- 8

fn generator() -> XYModel {
    XYModel::from_parts(
        BasisSpec::identity(1),
        [0.0, 0.0],
        vec![CoeffBlock {
            rows: 2,
            cols: 2,
            data: vec![0.5, 0.0, 0.0, 0.0],
        }],
        ResidualLaw::Gaussian {
            mean: [0.0; 2],
            chol: [[2.0, 0.0], [0.0, 0.0]],
        },
        SideModel::constant(0.5, 2),
        YLink {
            reinit_ask: (1..=10).collect(),
            reinit_bid: (1..=10).collect(),
            p_inside_ask: 0.3,
            p_inside_bid: 0.3,
        },
    )
    .unwrap()
}

fn self_simulated(n: usize, seed: u64) -> XySeries {
    let start = BookState::new(1000, 1001, 5, 5).unwrap();
    let mut hist = LagBuffer::filled(1, [1.0, 5.0]);
    let path = simulate_path(&generator(), &start, &mut hist, n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    XySeries::single("0.01".parse().unwrap(), start, path.into_iter().map(|(e, _)| e).collect())
}

fn criterion_8() -> Check {
    let series = self_simulated(100_000, 8);
    let opts = EvalOptions {
        n_paths: 100,
        horizon: 500,
        seed: 88,
        ..EvalOptions::default()
    };
    let train = series.truncated(train_len(series.len(), opts.split));
    let model = XYModel::fit(&train, BasisSpec::identity(1), 0.0).unwrap();
    let m = evaluate(&series, &model, &opts).unwrap();
    let (dir, flow) = (m.direction.unwrap(), m.flow.unwrap());
    let shuffled = evaluate(
        &series,
        &model,
        &EvalOptions {
            shuffle_labels: Some(888),
            ..opts
        },
    )
    .unwrap()
    .direction
    .unwrap();
    let null_dev = (shuffled.hit_rate - 0.5).abs();
    (
        dir.lift_vs_coin_flip > 0.0 && flow.mse_lift > 0.0 && null_dev <= 3.0 * shuffled.sigma,
        format!(
            "hit rate {:.4} over {} moves (lift vs coin {:.4}), MSE lift {:.4}; shuffled hit rate {:.4}, |dev| {null_dev:.4} vs 3 sigma {:.4}",
            dir.hit_rate,
            dir.n_moves,
            dir.lift_vs_coin_flip,
            flow.mse_lift,
            shuffled.hit_rate,
            3.0 * shuffled.sigma
        ),
    )
}

// ---------------------------------------------------------------- 9

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_xybook"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)));
    }
    Ok(o.stdout)
}

fn criterion_9() -> Result<Check, String> {
    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let d = dir.path();
    let p = |name: &str| d.join(name).to_str().unwrap().to_string();
    let log = random_log(
        &SynthConfig {
            events: 6000,
            ..SynthConfig::default()
        },
        &mut ChaCha8Rng::seed_from_u64(9),
    );
    write_log(
        BufWriter::new(File::create(d.join("log.csv")).unwrap()),
        &log,
        "0.01".parse::<Tick>().unwrap(),
    )
    .unwrap();
    run_cli(&["ingest", &p("log.csv"), "--tick", "0.01", "--out", &p("xy.csv")])?;
    run_cli(&["calibrate", &p("xy.csv"), "--out", &p("model.json"), "--lag", "2", "--split", "0.5"])?;

    let commands: [(&str, Vec<String>); 3] = [
        (
            "predict",
            ["predict", "--model", &p("model.json"), "--qb", "5", "--qa", "8", "--paths", "20000", "--horizon", "2000", "--qstar", "--max-queue", "512"]
                .map(String::from)
                .to_vec(),
        ),
        (
            "simulate",
            ["simulate", "--model", &p("model.json"), "--events", "20000"].map(String::from).to_vec(),
        ),
        (
            "evaluate",
            ["evaluate", &p("xy.csv"), "--model", &p("model.json"), "--paths", "100", "--horizon", "500"]
                .map(String::from)
                .to_vec(),
        ),
    ];
    let mut notes = Vec::new();
    let mut all_same = true;
    for (name, args) in &commands {
        let mut outputs = Vec::new();
        for (run, threads) in ["1", "4", "4"].iter().enumerate() {
            let mut a: Vec<&str> = args.iter().map(String::as_str).collect();
            a.extend(["--seed", "2024", "--threads", threads]);
            let sim_out = p(&format!("sim_{run}.csv"));
            if *name == "simulate" {
                a.extend(["--out", &sim_out]);
            }
            let mut bytes = run_cli(&a)?;
            if *name == "simulate" {
                bytes.extend(fs::read(Path::new(&sim_out)).map_err(|e| e.to_string())?);
            }
            outputs.push(bytes);
        }
        let same = outputs.windows(2).all(|w| w[0] == w[1]) && !outputs[0].is_empty();
        all_same &= same;
        notes.push(format!("{name} {}", if same { "identical" } else { "DIFFERS" }));
    }
    Ok((all_same, format!("{} (threads 1, 4, 4)", notes.join(", "))))
}

// ----------------------------------------------------------------

fn guarded<F: FnOnce() -> Check>(f: F) -> Check {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(c) => c,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    }
}

fn main() -> ExitCode {
    panic::set_hook(Box::new(|_| {}));
    let mut results: Vec<Check> = Vec::new();
    let fuzz = panic::catch_unwind(fuzz_logs).ok();
    match &fuzz {
        Some((tally, secs)) => {
            results.push(guarded(|| criterion_1(tally, *secs)));
            results.push(guarded(|| criterion_2(tally)));
        }
        None => {
            results.push((false, "log fuzzing panicked".into()));
            results.push((false, "log fuzzing panicked".into()));
        }
    }
    results.push(guarded(criterion_3));
    results.push(guarded(criterion_4));
    results.push(guarded(criterion_5));
    results.push(guarded(criterion_6));
    results.push(guarded(criterion_7));
    results.push(guarded(criterion_8));
    results.push(guarded(|| criterion_9().unwrap_or_else(|e| (false, e))));

    let mut failed = 0;
    for (i, (ok, detail)) in results.iter().enumerate() {
        println!("criterion {}: {} {detail}", i + 1, if *ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
