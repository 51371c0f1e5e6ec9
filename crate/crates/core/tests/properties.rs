use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use bufnet::dcsolve::SolveOptions;
use bufnet::gains::{l1_gain, linf_gain, resolvent_gain, simulate_mjls, stability_check, GainNorm, InputSignal, SimulationConfig};
use bufnet::instances;
use bufnet::netmodel::{adjacency, assemble_system, decompose_a, metzler_check, BufferNetwork, TuningParams};
use bufnet::posylog::{linearize_concave, Monomial, Posynomial};
use bufnet::problems::{build_l1_problem, build_linf_problem, extract_solution, optimize, CostModel, ProblemKind};

fn params_within(net: &BufferNetwork, unit: &[f64]) -> TuningParams {
    let b = net.bounds();
    let mut it = unit.iter().cycle();
    TuningParams {
        beta: b.beta_bar.iter().map(|&bar| bar * (0.05 + 0.95 * it.next().unwrap())).collect(),
        delta: b.delta_bar.iter().map(|&bar| bar * (0.05 + 0.95 * it.next().unwrap())).collect(),
    }
}

fn arb_net() -> impl Strategy<Value = BufferNetwork> {
    (0u64..500, any::<bool>()).prop_map(|(seed, multi)| {
        if multi {
            instances::random_multi_out(seed)
        } else {
            instances::random_single_mode(seed).0
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn state_matrix_structure(net in arb_net(), unit in prop::collection::vec(0.0f64..1.0, 1..16)) {
        let p = params_within(&net, &unit);
        for m in 0..net.modes() {
            let sys = assemble_system(&net, &p, m).unwrap();
            let (ao, ad) = decompose_a(&net, &p, m).unwrap();
            prop_assert_eq!(&sys.a, &(&ao - &ad));
            prop_assert!(metzler_check(&sys.a));
            prop_assert!(sys.g_in.iter().all(|&x| x >= 0.0) && sys.g_out.iter().all(|&x| x >= 0.0));
            for c in 0..net.n() {
                let sum: f64 = sys.a.column(c).sum();
                let expected = net.destination_slot(c).map_or(0.0, |k| -p.beta[k]);
                prop_assert!((sum - expected).abs() <= 1e-12 * (1.0 + sys.a.column(c).amax()));
            }
            let adj = adjacency(net.graph(m));
            for &d in net.destinations() {
                prop_assert!(adj.column(d).iter().all(|&x| x == 0.0));
            }
            for &o in net.origins() {
                prop_assert!(adj.row(o).iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn certificates_hold_and_match_resolvent(seed in 0u64..1000) {
        let (net, p) = instances::random_single_mode(seed);
        let sys = net.switched_system(&p).unwrap();
        for norm in [GainNorm::L1, GainNorm::Linf] {
            let r = match norm {
                GainNorm::L1 => l1_gain(&sys).unwrap(),
                GainNorm::Linf => linf_gain(&sys).unwrap(),
            };
            prop_assert!(r.max_residual <= 1e-8);
            prop_assert!(r.certificates.iter().all(|v| v.iter().all(|&x| x > 0.0)));
            let oracle = resolvent_gain(&sys, norm).unwrap();
            prop_assert!((r.gamma - oracle).abs() <= 1e-6 * oracle);
        }
    }

    #[test]
    fn e1_gain_is_monotone(b1 in 0.1f64..2.0, b2 in 0.1f64..2.0, d1 in 0.1f64..2.0, d2 in 0.1f64..2.0) {
        let net = instances::e1();
        let g = |b: f64, d: f64| l1_gain(&net.switched_system(&TuningParams { beta: vec![b], delta: vec![d] }).unwrap()).unwrap().gamma;
        let (blo, bhi) = (b1.min(b2), b1.max(b2));
        let (dlo, dhi) = (d1.min(d2), d1.max(d2));
        prop_assert!(g(bhi, dlo) <= g(blo, dlo) + 1e-9);
        prop_assert!(g(blo, dhi) <= g(blo, dlo) + 1e-9);
        prop_assert!((g(blo, dlo) - (1.0 / blo + 1.0 / dlo)).abs() <= 1e-6 * g(blo, dlo));
    }

    #[test]
    fn two_mode_states_stay_nonnegative(seed in 0u64..200) {
        let (net, p) = instances::random_two_mode(seed);
        let sys = net.switched_system(&p).unwrap();
        let mut cfg = SimulationConfig::new(4.0, 16, seed);
        cfg.initial_state = Some(vec![0.3; sys.n()]);
        let batch = simulate_mjls(&sys, &InputSignal::Constant(vec![1.0; sys.inputs()]), &cfg).unwrap();
        prop_assert!(batch.min_state >= -1e-9);
    }

    #[test]
    fn log_of_monomial_product_is_sum(
        c1 in 0.1f64..5.0, c2 in 0.1f64..5.0,
        a in prop::collection::vec(-2.0f64..2.0, 3), b in prop::collection::vec(-2.0f64..2.0, 3),
        w in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let m1 = Monomial::dense(c1, &a).unwrap();
        let m2 = Monomial::dense(c2, &b).unwrap();
        let prod = Posynomial::from(m1.mul(&m2)).log_transform();
        let sum = Posynomial::from(m1).log_transform().value(&w) + Posynomial::from(m2).log_transform().value(&w);
        prop_assert!(prod.is_affine());
        prop_assert!((prod.value(&w) - sum).abs() <= 1e-12 * (1.0 + sum.abs()));
    }

    #[test]
    fn concave_linearization_stays_below(
        terms in prop::collection::vec((0.1f64..3.0, prop::collection::vec(-2.0f64..2.0, 4)), 1..6),
        w0 in prop::collection::vec(-2.0f64..2.0, 4),
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let q = Posynomial::new(terms.iter().map(|(c, a)| Monomial::dense(*c, a).unwrap()).collect()).unwrap();
        let t = linearize_concave(&q, &w0);
        let lq = q.log_transform();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            let w: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let f = lq.value(&w);
            prop_assert!(t.eval(&w) <= f + 1e-10 * (1.0 + f.abs()));
        }
    }
}

/// Physical form of the row inequality of mode `m`:
/// `vᵀA_m + Σ_j π_mj v_jᵀ + 1ᵀG_out`.
fn physical_rows(net: &BufferNetwork, p: &TuningParams, v: &[DVector<f64>], m: usize) -> DVector<f64> {
    let sys = net.switched_system(p).unwrap();
    let pi = net.chain().rates();
    let mut row = sys.mode(m).a.transpose() * &v[m];
    for (j, vj) in v.iter().enumerate() {
        row += vj * pi[(m, j)];
    }
    let g_out = &sys.mode(m).g_out;
    row + g_out.transpose() * DVector::from_element(g_out.nrows(), 1.0)
}

/// `A_m v_m + Σ_j π_mj v_j + G_in 1`.
fn physical_cols(net: &BufferNetwork, p: &TuningParams, v: &[DVector<f64>], m: usize) -> DVector<f64> {
    let sys = net.switched_system(p).unwrap();
    let pi = net.chain().rates();
    let mut col = &sys.mode(m).a * &v[m];
    for (j, vj) in v.iter().enumerate() {
        col += vj * pi[(m, j)];
    }
    let g_in: &DMatrix<f64> = &sys.mode(m).g_in;
    col + g_in * DVector::from_element(g_in.ncols(), 1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn program_constraints_match_physical_inequalities(
        seed in 0u64..300,
        unit in prop::collection::vec(0.0f64..1.0, 1..16),
        nus in prop::collection::vec(-2.0f64..2.0, 20),
        alpha in prop_oneof![Just(0.0), 0.1f64..1.0],
    ) {
        let net = instances::random_multi_out(seed).with_alpha(alpha).unwrap();
        let p = params_within(&net, &unit);
        let cost = CostModel::linear(&net).with_budget(10.0).with_gamma_bound(1.0);
        for linf in [false, true] {
            let (prog, map) = if linf {
                build_linf_problem(&net, &cost).unwrap()
            } else {
                build_l1_problem(&net, &cost).unwrap()
            };
            let mut w = vec![0.0; map.len];
            let mut k = 0;
            for block in &map.nu {
                for &i in block {
                    w[i] = nus[k % nus.len()];
                    k += 1;
                }
            }
            for (s, &i) in map.phi.iter().enumerate() {
                w[i] = p.beta[s].ln();
            }
            for (s, &i) in map.eta.iter().enumerate() {
                w[i] = p.delta[s].ln();
            }
            let back = extract_solution(&w, &map).unwrap();
            for (a, b) in back.beta.iter().chain(&back.delta).zip(p.beta.iter().chain(&p.delta)) {
                prop_assert!((a - b).abs() <= 1e-14 * b);
            }
            let v: Vec<DVector<f64>> = map
                .nu
                .iter()
                .map(|b| DVector::from_iterator(b.len(), b.iter().map(|&i| w[i].exp())))
                .collect();
            let ev = |f: &Posynomial| f.eval(&w.iter().map(|x| x.exp()).collect::<Vec<_>>()).unwrap();
            for c in prog.constraints() {
                let diff = ev(&c.p) - ev(&c.q);
                let scale = ev(&c.p) + ev(&c.q);
                let label = c.label.as_str();
                let parse = |s: &str| -> (usize, usize) {
                    let inner = &s[s.find('[').unwrap() + 1..s.len() - 1];
                    let (a, b) = inner.split_once(',').unwrap();
                    (a.parse().unwrap(), b.parse().unwrap())
                };
                if label.starts_with("row[") {
                    let (m, col) = parse(label);
                    let phys = physical_rows(&net, &p, &v, m)[col];
                    prop_assert!((diff - phys).abs() <= 1e-10 * scale, "{}: {} vs {}", label, diff, phys);
                } else if label.starts_with("col[") {
                    let (m, r) = parse(label);
                    let phys = physical_cols(&net, &p, &v, m)[r];
                    prop_assert!((diff - phys).abs() <= 1e-10 * scale, "{}: {} vs {}", label, diff, phys);
                }
            }
        }
    }
}

#[test]
fn gp_baseline_is_never_better_on_the_fork() {
    let net = instances::fork3();
    let opts = SolveOptions {
        multistarts: 4,
        ..SolveOptions::default()
    };
    for budget in [2.5, 3.0, 4.0] {
        let cost = CostModel::linear(&net).with_budget(budget);
        let dc = optimize(&net, &cost, ProblemKind::L1, &opts).unwrap();
        let gp = optimize(&net, &cost, ProblemKind::GpBaseline, &opts).unwrap();
        assert!(gp.solver_value >= dc.solver_value - 1e-9, "{budget}: gp {} dc {}", gp.solver_value, dc.solver_value);
        let p = &gp.params;
        assert!((p.delta[0] - p.delta[1]).abs() < 1e-12);
    }
}

#[test]
fn optimized_two_mode_parameters_are_stable_and_certified() {
    let net = instances::e2();
    for (kind, cost) in [
        (ProblemKind::L1, CostModel::linear(&net).with_budget(3.0)),
        (ProblemKind::Linf, CostModel::linear(&net).with_gamma_bound(1.2)),
    ] {
        let r = optimize(&net, &cost, kind, &SolveOptions::default()).unwrap();
        let sys = net.switched_system(&r.params).unwrap();
        assert!(stability_check(&sys).stable);
        match kind {
            ProblemKind::L1 => assert!(l1_gain(&sys).unwrap().gamma <= r.solver_value + 1e-6),
            _ => assert!(linf_gain(&sys).unwrap().gamma <= 1.2 * (1.0 + 1e-6)),
        }
        for row in &r.solution.trace.rows {
            assert!(row.merit <= row.merit_prev + 1e-9 * (1.0 + row.merit_prev.abs()), "{row:?}");
        }
    }
}

#[test]
fn large_budget_drives_parameters_to_their_bounds() {
    let net = instances::e1();
    let r = optimize(&net, &CostModel::linear(&net).with_budget(100.0), ProblemKind::L1, &SolveOptions::default()).unwrap();
    assert!((r.params.beta[0] - 2.0).abs() < 1e-6 && (r.params.delta[0] - 2.0).abs() < 1e-6);
    assert!((r.solver_value - 1.0).abs() < 1e-6);
}
