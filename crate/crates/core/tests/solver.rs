use dyncausal::basis::{build_knots, BasisConfig};
use dyncausal::datagen::{
    derive_seed, draw_noise, ground_truth, simulate_lsem, simulate_scenario, simulate_with_noise,
    NoiseKind, Scenario, ScenarioSpec, StrengthFn,
};
use dyncausal::model::{CoefficientSet, PanelTensor};
use dyncausal::solver::{
    enforce_treatment_mask, fit, h1, h1_gradient, h2, h2_star, predict_next, score, score_gradient,
    SolverConfig,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn s1f1(seed: u64) -> ScenarioSpec {
    ScenarioSpec::new(Scenario::S1, StrengthFn::Cosine, seed)
}

fn desk_basis(d: usize, t_len: usize) -> BasisConfig {
    BasisConfig::for_fit(d + 1, t_len, 2, 2).unwrap()
}

#[test]
fn s1f1_recovers_single_edge() {
    // pointwise spline standard error is about 0.13 at this size, so the
    // weight error is checked as a root-mean-square averaged over seeds
    let (mut exact, mut rms_sum) = (0, 0.0);
    for r in 0..10 {
        let (data, _) = simulate_lsem(&s1f1(derive_seed(0, r))).unwrap();
        let res = fit(&data, &desk_basis(0, 10), 0, &SolverConfig::default()).unwrap();
        assert!(res.converged);
        let mut sq = 0.0;
        let mut all_exact = true;
        for (i, &t) in res.graphs.times.iter().enumerate() {
            let edges: Vec<_> = res.graphs.adjacency(i).edges().collect();
            all_exact &= edges == vec![(0, 4)];
            sq += (res.graphs.b[i][(0, 4)] - StrengthFn::Cosine.eval(t)).powi(2);
        }
        exact += usize::from(all_exact);
        rms_sum += (sq / res.graphs.len() as f64).sqrt();
    }
    assert!(exact >= 9, "{exact} of 10 exact");
    assert!(rms_sum / 10.0 <= 0.15, "mean rms {}", rms_sum / 10.0);
}

#[test]
fn noiseless_constant_weight_is_least_squares() {
    let w = 0.7;
    let spec = ScenarioSpec {
        p: 3,
        ..ScenarioSpec::new(Scenario::S1, StrengthFn::Constant(w), 3)
    };
    let truth = ground_truth(&spec).unwrap();
    let noise = draw_noise(
        spec.t_len,
        spec.m,
        spec.p,
        1.0,
        NoiseKind::Gaussian,
        Some(&[1.0, 0.0, 0.0]),
        3,
    )
    .unwrap();
    let data = simulate_with_noise(&truth, &noise).unwrap();
    let basis = build_knots(1.0, 11.0, 0, 0).unwrap();
    let res = fit(&data, &basis, 0, &SolverConfig::default()).unwrap();
    for b in &res.graphs.b {
        assert!((b[(0, 2)] - w).abs() < 1e-6, "{}", b[(0, 2)]);
    }
}

#[test]
fn pure_noise_gives_empty_graphs() {
    let cfg = SolverConfig::default();
    let mut empty = 0;
    for r in 0..30 {
        let spec = ScenarioSpec::new(Scenario::S1, StrengthFn::Constant(0.0), derive_seed(11, r));
        let (data, _) = simulate_lsem(&spec).unwrap();
        let res = fit(&data, &desk_basis(0, 10), 0, &cfg).unwrap();
        if (0..res.graphs.len()).all(|i| res.graphs.adjacency(i).edge_count() == 0) {
            empty += 1;
        }
    }
    assert!(empty >= 27, "{empty} of 30 empty");
}

#[test]
fn mediator_permutation_equivariance() {
    let spec = ScenarioSpec::new(Scenario::S2, StrengthFn::Cosine, 5);
    let (data, _) = simulate_lsem(&spec).unwrap();
    let perm = [0, 3, 1, 2, 4];
    let permuted = data.permute_variables(&perm).unwrap();
    let cfg = SolverConfig::default();
    let a = fit(&data, &desk_basis(0, 10), 0, &cfg).unwrap();
    let b = fit(&permuted, &desk_basis(0, 10), 0, &cfg).unwrap();
    for (ba, bb) in a.graphs.b.iter().zip(&b.graphs.b) {
        for i in 0..5 {
            for j in 0..5 {
                let diff = (ba[(perm[i], perm[j])] - bb[(i, j)]).abs();
                assert!(diff <= 1e-9, "({i},{j}) differs by {diff}");
            }
        }
    }
}

#[test]
fn fitted_graphs_are_acyclic_and_masked() {
    for scenario in [Scenario::S2, Scenario::Svar2] {
        let spec = ScenarioSpec::new(scenario, StrengthFn::Cosine, 9);
        let (data, _) = simulate_scenario(&spec).unwrap();
        let res = fit(
            &data,
            &desk_basis(spec.d, 10),
            spec.d,
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(h2(&res.coef), 0.0);
        assert_eq!(h2_star(&res.coef), 0.0);
        assert!(res.final_h1 <= 1e-8);
        for i in 0..res.graphs.len() {
            assert!(res.graphs.adjacency(i).is_acyclic());
        }
        let g = res.graphs_with_prediction();
        assert!(g.adjacency(g.len() - 1).is_acyclic());
        let mut min_h1 = f64::INFINITY;
        for rec in &res.trace {
            assert!(rec.min_h1 <= min_h1);
            min_h1 = rec.min_h1;
        }
    }
}

#[test]
fn constant_coefficients_predict_last_estimate() {
    let basis = desk_basis(0, 10);
    let mut coef = CoefficientSet::zeros(3, 0, basis.clone());
    for k in 0..basis.n_basis() {
        coef.gamma[(k * 3, 2)] = 0.6;
        coef.gamma[(k * 3 + 1, 2)] = -0.3;
    }
    let truth = dyncausal::datagen::GroundTruth {
        graphs: coef
            .to_graphs(&(1..=10).map(f64::from).collect::<Vec<_>>(), 0.2)
            .unwrap(),
        edge_kinds: vec![None; 9],
        d: 0,
    };
    let noise = draw_noise(10, 40, 3, 1.0, NoiseKind::Gaussian, None, 1).unwrap();
    let data = simulate_with_noise(&truth, &noise).unwrap();
    let res = fit(
        &data,
        &build_knots(1.0, 11.0, 0, 0).unwrap(),
        0,
        &SolverConfig::default(),
    )
    .unwrap();
    let (pred, w) = predict_next(&res);
    assert!(w.is_none());
    assert!((&pred - res.graphs.b.last().unwrap()).abs().max() < 1e-9);
}

#[test]
fn zero_coefficients_predict_zero() {
    let basis = desk_basis(0, 10);
    let coef = CoefficientSet::zeros(4, 0, basis);
    assert_eq!(coef.b_at(11.0).unwrap(), DMatrix::zeros(4, 4));
}

#[test]
fn rejects_too_many_basis_functions() {
    let (data, _) = simulate_lsem(&s1f1(1)).unwrap();
    let basis = BasisConfig::for_fit(1, 10, 9, 2).unwrap();
    assert!(fit(&data, &basis, 0, &SolverConfig::default()).is_err());
}

fn random_coef<R: Rng>(p: usize, d: usize, basis: &BasisConfig, rng: &mut R) -> CoefficientSet {
    let k = basis.n_basis();
    let gamma = DMatrix::from_fn(p * k, p, |_, _| rng.random_range(-0.8..0.8));
    let tau = (d > 0).then(|| DMatrix::from_fn(p * d * k, p, |_, _| rng.random_range(-0.8..0.8)));
    CoefficientSet::new(gamma, tau, basis.clone(), d).unwrap()
}

fn random_panel<R: Rng>(t_len: usize, m: usize, p: usize, rng: &mut R) -> PanelTensor {
    PanelTensor::from_fn(t_len, m, p, |_, _, _| rng.random_range(-2.0..2.0)).unwrap()
}

#[test]
fn score_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let (t_len, m, p) = (3, 2, 2);
        let basis = build_knots(1.0, 3.0, 0, 1).unwrap();
        let coef = random_coef(p, 0, &basis, &mut rng);
        let data = random_panel(t_len, m, p, &mut rng);
        let mut total = 0.0;
        for t in 1..=t_len {
            let b = coef.b_at(t as f64).unwrap();
            for u in 0..m {
                for j in 0..p {
                    let mut pred = 0.0;
                    for i in 0..p {
                        pred += data.get(t, u, i) * b[(i, j)];
                    }
                    total += (data.get(t, u, j) - pred).powi(2);
                }
            }
        }
        let expected = total / (2.0 * (t_len * m * p) as f64);
        assert!((score(&coef, &data).unwrap() - expected).abs() < 1e-12);
    }
}

#[test]
fn score_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let basis = desk_basis(1, 6);
    let coef = random_coef(3, 1, &basis, &mut rng);
    let data = random_panel(6, 4, 3, &mut rng);
    let g = score_gradient(&coef, &data).unwrap();
    let step = 1e-5;
    for r in 0..coef.gamma.nrows() {
        for c in 0..3 {
            let (mut hi, mut lo) = (coef.clone(), coef.clone());
            hi.gamma[(r, c)] += step;
            lo.gamma[(r, c)] -= step;
            let fd = (score(&hi, &data).unwrap() - score(&lo, &data).unwrap()) / (2.0 * step);
            assert!((fd - g.gamma[(r, c)]).abs() <= 1e-6 * fd.abs().max(1.0));
        }
    }
}

#[test]
fn masked_h1_gradient_entries_are_dropped() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let basis = desk_basis(0, 10);
    let coef = enforce_treatment_mask(&random_coef(4, 0, &basis, &mut rng));
    let times: Vec<f64> = (1..=10).map(f64::from).collect();
    assert!(h1(&coef, &times, 0.25).unwrap() > 0.0);
    let g = h1_gradient(&coef, &times, 0.25).unwrap();
    // the gradient is proportional to B entrywise, so masked coordinates vanish
    for r in 0..g.nrows() {
        assert_eq!(g[(r, 0)], 0.0);
        if r % 4 == 3 {
            assert!(g.row(r).iter().all(|&v| v == 0.0));
        }
    }
}
