//! Acceptance suite (runs without the libtest harness so its output is never
//! captured). Criteria run sequentially, one PASS/FAIL line each; the process
//! exits nonzero if any criterion fails.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bufnet::dcsolve::SolveOptions;
use bufnet::gains::{
    conditional_linf_gain, empirical_gain, empirical_generator, l1_gain, linf_gain, sample_mode_path,
    simulate_mjls, stability_check, GainNorm, InitialMode, InputSignal, SimulationConfig,
};
use bufnet::instances;
use bufnet::netmodel::{MarkovChain, SwitchedSystem, TuningParams};
use bufnet::posylog::{Monomial, Posynomial};
use bufnet::problems::{optimize, CostModel, ProblemKind};

struct Outcome {
    pass: bool,
    detail: String,
    /// Numbers produced by the criterion, compared bitwise on reruns.
    fingerprint: Vec<f64>,
}

fn outcome(pass: bool, detail: String, fingerprint: Vec<f64>) -> Outcome {
    Outcome {
        pass,
        detail,
        fingerprint,
    }
}

/// Independent oracle: `‖G_out (−A)⁻¹ G_in‖` for one mode, through a dense
/// inverse.
fn static_map(sys: &SwitchedSystem) -> DMatrix<f64> {
    let m = sys.mode(0);
    let inv = (-&m.a).try_inverse().expect("stable matrix is invertible");
    &m.g_out * inv * &m.g_in
}

fn max_col_sum(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.sum()).fold(0.0, f64::max)
}

fn max_row_sum(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.sum()).fold(0.0, f64::max)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn e1_system(beta: f64, delta: f64) -> SwitchedSystem {
    let net = instances::e1();
    net.switched_system(&TuningParams {
        beta: vec![beta],
        delta: vec![delta],
    })
    .unwrap()
}

fn criterion_1() -> Outcome {
    let sys = e1_system(1.0, 1.0);
    let g1 = l1_gain(&sys).unwrap().gamma;
    let ginf = linf_gain(&sys).unwrap().gamma;
    let s = static_map(&sys);
    let (o1, oinf) = (max_col_sum(&s), max_row_sum(&s));
    let pass = (g1 - o1).abs() <= 1e-6 && (ginf - oinf).abs() <= 1e-6 && (o1 - 2.0).abs() < 1e-12 && (oinf - 1.0).abs() < 1e-12;
    outcome(pass, format!("l1 {g1:.9} (oracle {o1}), linf {ginf:.9} (oracle {oinf})"), vec![g1, ginf])
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut fp = Vec::new();
    for seed in 0..20 {
        let (net, p) = instances::random_single_mode(seed);
        let sys = net.switched_system(&p).unwrap();
        let s = static_map(&sys);
        let g1 = l1_gain(&sys).unwrap().gamma;
        let ginf = linf_gain(&sys).unwrap().gamma;
        worst = worst.max(rel(g1, max_col_sum(&s))).max(rel(ginf, max_row_sum(&s)));
        fp.extend([g1, ginf]);
    }
    outcome(worst <= 1e-6, format!("20 instances, worst relative gap {worst:.2e}"), fp)
}

fn criterion_3() -> Outcome {
    const TRAJ: usize = 10_000;
    let mut worst: f64 = 0.0;
    let mut fp = Vec::new();
    let mut lines = Vec::new();
    for seed in 0..10 {
        let (net, p) = instances::random_two_mode(seed);
        let sys = net.switched_system(&p).unwrap();
        let abscissa = stability_check(&sys).abscissa;
        let horizon = 8.0 / abscissa.abs();

        let mut cfg = SimulationConfig::new(horizon, TRAJ, 1000 + seed);
        cfg.initial_mode = InitialMode::Uniform;
        cfg.step_fraction = 0.02;
        cfg.grid_intervals = 400;
        let impulse = InputSignal::impulse(sys.inputs(), 0, horizon * 1e-4);
        let batch = simulate_mjls(&sys, &impulse, &cfg).unwrap();
        let est = empirical_gain(&batch, GainNorm::L1).unwrap();
        let mc1 = est.by_initial_mode.iter().map(|m| m.estimate).fold(0.0, f64::max);
        let lp1 = l1_gain(&sys).unwrap().gamma;

        cfg.initial_mode = InitialMode::Stationary;
        let constant = InputSignal::Constant(vec![1.0; sys.inputs()]);
        let batch = simulate_mjls(&sys, &constant, &cfg).unwrap();
        let mcinf = conditional_linf_gain(&batch, 100).unwrap().estimate;
        let lpinf = linf_gain(&sys).unwrap().gamma;

        let (d1, dinf) = (rel(mc1, lp1), rel(mcinf, lpinf));
        worst = worst.max(d1).max(dinf);
        lines.push(format!("{seed}:{d1:.3}/{dinf:.3}"));
        fp.extend([mc1, mcinf]);
    }
    outcome(
        worst <= 0.05,
        format!("worst relative gap {worst:.4} (l1/linf per seed {})", lines.join(" ")),
        fp,
    )
}

fn solve_opts(seed: u64) -> SolveOptions {
    SolveOptions {
        seed,
        ..SolveOptions::default()
    }
}

/// Grid search over `(0, 2]²` with step 0.01 using the dense oracle.
fn e1_grid<F: Fn(f64, f64, &DMatrix<f64>) -> Option<f64>>(score: F) -> f64 {
    let mut best = f64::INFINITY;
    for i in 1..=200 {
        for j in 1..=200 {
            let (b, d) = (i as f64 * 0.01, j as f64 * 0.01);
            if let Some(v) = score(b, d, &static_map(&e1_system(b, d))) {
                best = best.min(v);
            }
        }
    }
    best
}

fn criterion_4() -> (Outcome, Duration, Duration) {
    let net = instances::e1();
    let t = Instant::now();
    let r1 = optimize(&net, &CostModel::linear(&net).with_budget(3.0), ProblemKind::L1, &solve_opts(0)).unwrap();
    let t1 = t.elapsed();
    let t = Instant::now();
    let r2 = optimize(&net, &CostModel::linear(&net).with_gamma_bound(1.0), ProblemKind::Linf, &solve_opts(0)).unwrap();
    let t2 = t.elapsed();
    let grid_gamma = e1_grid(|b, d, s| (b + d <= 3.0 + 1e-12).then(|| max_col_sum(s)));
    let grid_cost = e1_grid(|b, d, s| (max_row_sum(s) <= 1.0 + 1e-12).then_some(b + d));
    let pass = rel(r1.solver_value, 4.0 / 3.0) <= 0.01
        && rel(r1.solver_value, grid_gamma) <= 0.01
        && rel(r2.cost, 2.0) <= 0.01
        && rel(r2.cost, grid_cost) <= 0.01
        && t1.as_secs_f64() < 30.0
        && t2.as_secs_f64() < 30.0;
    (
        outcome(
            pass,
            format!(
                "gamma {:.6} (grid {grid_gamma:.6}, {:.2}s), cost {:.6} (grid {grid_cost:.6}, {:.2}s)",
                r1.solver_value,
                t1.as_secs_f64(),
                r2.cost,
                t2.as_secs_f64()
            ),
            vec![r1.solver_value, r2.cost],
        ),
        t1,
        t2,
    )
}

fn criterion_5() -> Outcome {
    let net = instances::e1();
    let gammas: Vec<f64> = [2.2, 2.6, 3.0, 3.4]
        .iter()
        .map(|&b| {
            optimize(&net, &CostModel::linear(&net).with_budget(b), ProblemKind::L1, &solve_opts(0))
                .unwrap()
                .solver_value
        })
        .collect();
    let pass = gammas.windows(2).all(|w| w[1] < w[0] - 1e-6);
    outcome(pass, format!("gammas {gammas:.6?}"), gammas)
}

fn criterion_6() -> Outcome {
    let mut wins = 0;
    let mut fp = Vec::new();
    let mut lines = Vec::new();
    for seed in 0..10 {
        let net = instances::random_multi_out(seed);
        let full = 2.0 * (net.destinations().len() + net.edges().len()) as f64;
        let cost = CostModel::linear(&net).with_budget(0.3 * full);
        let opts = SolveOptions {
            multistarts: 8,
            ..solve_opts(seed)
        };
        let dc = optimize(&net, &cost, ProblemKind::L1, &opts).map(|r| r.solver_value);
        let gp = optimize(&net, &cost, ProblemKind::GpBaseline, &opts).map(|r| r.solver_value);
        match (dc, gp) {
            (Ok(dc), Ok(gp)) => {
                if dc <= gp + 1e-6 {
                    wins += 1;
                }
                lines.push(format!("{seed}:{:.3}", dc / gp));
                fp.extend([dc, gp]);
            }
            (dc, gp) => lines.push(format!("{seed}:error dc={:?} gp={:?}", dc.err(), gp.err())),
        }
    }
    outcome(wins >= 9, format!("dc <= gp on {wins}/10 (dc/gp {})", lines.join(" ")), fp)
}

fn random_posynomial(rng: &mut ChaCha8Rng, vars: usize) -> Posynomial {
    let terms = rng.gen_range(1..=4);
    let monos = (0..terms)
        .map(|_| {
            let exps: Vec<(usize, f64)> = (0..vars).map(|i| (i, rng.gen_range(-2.0..2.0))).collect();
            Monomial::new(rng.gen_range(0.1..3.0), exps).unwrap()
        })
        .collect();
    Posynomial::new(monos).unwrap()
}

fn hygiene_gradient() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let f = random_posynomial(&mut rng, 3).log_transform();
        let w: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (_, g) = f.value_grad(&w);
        for i in 0..3 {
            let h = 1e-5;
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[i] += h;
            wm[i] -= h;
            let fd = (f.value(&wp) - f.value(&wm)) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs() / g[i].abs().max(1.0));
        }
    }
    if worst <= 1e-5 {
        Ok(format!("grad {worst:.1e}"))
    } else {
        Err(format!("gradient mismatch {worst:.2e}"))
    }
}

fn hygiene_tangent() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..10 {
        let f = random_posynomial(&mut rng, 3).log_transform();
        let w0: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let t = f.tangent(&w0);
        for _ in 0..1000 {
            let w: Vec<f64> = (0..3).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let (fv, tv) = (f.value(&w), t.eval(&w));
            if fv < tv - 1e-10 * fv.abs().max(1.0) {
                return Err(format!("case {case}: tangent {tv} above function {fv}"));
            }
        }
    }
    Ok("tangent 10x1000".into())
}

fn hygiene_positivity() -> Result<String, String> {
    let mut lowest = f64::INFINITY;
    for seed in 0..5 {
        let (net, p) = instances::random_two_mode(seed);
        let sys = net.switched_system(&p).unwrap();
        let mut cfg = SimulationConfig::new(5.0, 200, seed);
        cfg.initial_state = Some(vec![0.5; sys.n()]);
        let batch = simulate_mjls(&sys, &InputSignal::impulse(sys.inputs(), 0, 0.01), &cfg).unwrap();
        lowest = lowest.min(batch.min_state);
    }
    if lowest >= -1e-9 {
        Ok(format!("min state {lowest:.1e}"))
    } else {
        Err(format!("negative state {lowest:e}"))
    }
}

fn hygiene_conservation() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let (net, p) = instances::random_two_mode(seed);
        let net = net.with_alpha(0.7).unwrap();
        let sys = net.switched_system_unchecked(&vec![0.0; p.beta.len()], &p.delta).unwrap();
        let x0: Vec<f64> = (0..sys.n()).map(|i| 1.0 + i as f64).collect();
        let total: f64 = x0.iter().sum();
        let mut cfg = SimulationConfig::new(5.0, 50, seed);
        cfg.initial_state = Some(x0);
        cfg.keep_paths = 50;
        let batch = simulate_mjls(&sys, &InputSignal::Zero, &cfg).unwrap();
        for path in &batch.paths {
            for x in &path.states {
                worst = worst.max((x.iter().sum::<f64>() - total).abs() / total);
            }
        }
    }
    if worst <= 1e-9 {
        Ok(format!("mass drift {worst:.1e}"))
    } else {
        Err(format!("mass drift {worst:e}"))
    }
}

fn hygiene_sampler() -> Result<String, String> {
    let rows = vec![vec![-1.5, 1.0, 0.5], vec![0.3, -0.5, 0.2], vec![2.0, 1.0, -3.0]];
    let chain = MarkovChain::from_rows(&rows).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut paths = Vec::new();
    let mut jumps = 0;
    while jumps < 100_000 {
        let path = sample_mode_path(&chain, paths.len() % 3, 100.0, &mut rng);
        jumps += path.modes.len() - 1;
        paths.push(path);
    }
    let (rates, se) = empirical_generator(&paths, 3);
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                worst = worst.max((rates[(i, j)] - rows[i][j]).abs() / se[(i, j)]);
            }
        }
    }
    if worst <= 3.0 {
        Ok(format!("{jumps} jumps, worst {worst:.2} sigma"))
    } else {
        Err(format!("rate off by {worst:.2} sigma"))
    }
}

fn criterion_7() -> Outcome {
    let checks = [
        hygiene_gradient(),
        hygiene_tangent(),
        hygiene_positivity(),
        hygiene_conservation(),
        hygiene_sampler(),
    ];
    let pass = checks.iter().all(Result::is_ok);
    let detail = checks
        .iter()
        .map(|c| match c {
            Ok(s) => s.clone(),
            Err(s) => format!("FAILED {s}"),
        })
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, detail, Vec::new())
}

fn criterion_9() -> Outcome {
    let net = instances::desk_scale(0);
    let full = 2.0 * (net.destinations().len() + net.edges().len()) as f64;
    let cost = CostModel::linear(&net).with_budget(0.3 * full);
    let t = Instant::now();
    let r = optimize(&net, &cost, ProblemKind::L1, &solve_opts(0));
    let secs = t.elapsed().as_secs_f64();
    match r {
        Ok(r) => outcome(
            secs < 600.0,
            format!("gamma {:.6}, certified {:.6}, {secs:.1}s", r.solver_value, r.verified_gain),
            vec![r.solver_value],
        ),
        Err(e) => outcome(false, format!("{e} after {secs:.1}s"), Vec::new()),
    }
}

fn timed<F: FnOnce() -> Outcome>(f: F) -> (Outcome, Duration) {
    let t = Instant::now();
    let o = f();
    (o, t.elapsed())
}

fn first_pass() -> Vec<(u32, &'static str, Outcome, Duration, Option<f64>)> {
    let mut out = Vec::new();
    let (o, d) = timed(criterion_1);
    out.push((1, "E1 exact gains", o, d, Some(1.0)));
    let (o, d) = timed(criterion_2);
    out.push((2, "LP matches resolvent oracle", o, d, Some(10.0)));
    let (o, d) = timed(criterion_3);
    out.push((3, "Monte Carlo matches LP gains", o, d, Some(300.0)));
    let ((o, _, _), d) = {
        let t = Instant::now();
        let r = criterion_4();
        (r, t.elapsed())
    };
    // per-solve limits are checked inside
    out.push((4, "E1 budget and gain-bound optima", o, d, None));
    let (o, d) = timed(criterion_5);
    out.push((5, "budget monotonicity", o, d, None));
    let (o, d) = timed(criterion_6);
    out.push((6, "DC no worse than GP baseline", o, d, Some(600.0)));
    out
}

fn main() {
    let mut all_pass = true;
    let mut report = |id: u32, name: &str, o: &Outcome, d: Duration, limit: Option<f64>| {
        let in_time = limit.map_or(true, |l| d.as_secs_f64() < l);
        let pass = o.pass && in_time;
        all_pass &= pass;
        let limit = limit.map_or(String::new(), |l| format!(" [limit {l}s]"));
        println!(
            "{} criterion {id}: {name}: {} ({:.2}s{limit})",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            d.as_secs_f64()
        );
    };

    let first = first_pass();
    for (id, name, o, d, limit) in &first {
        report(*id, name, o, *d, *limit);
    }
    let (o, d) = timed(criterion_7);
    report(7, "numerical hygiene", &o, d, None);

    let (second, d) = {
        let t = Instant::now();
        let s = first_pass();
        (s, t.elapsed())
    };
    let mismatched: Vec<u32> = first
        .iter()
        .zip(&second)
        .filter(|(a, b)| {
            a.2.fingerprint.len() != b.2.fingerprint.len()
                || a.2.fingerprint.iter().zip(&b.2.fingerprint).any(|(x, y)| x.to_bits() != y.to_bits())
        })
        .map(|(a, _)| a.0)
        .collect();
    let o = outcome(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            "criteria 1-6 reproduced bit for bit".into()
        } else {
            format!("outputs differ for criteria {mismatched:?}")
        },
        Vec::new(),
    );
    report(8, "determinism", &o, d, None);

    let (o, d) = timed(criterion_9);
    report(9, "desk-scale optimize", &o, d, Some(600.0));

    if !all_pass {
        eprintln!("acceptance criteria failed");
        std::process::exit(1);
    }
}
