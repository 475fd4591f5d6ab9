use htlab::dynamics::{
    sgdm_step, sgdm_transition_matrix, Dataset, GradientModel, NeighborPair, OptimizerConfig,
    TrajectoryState,
};
use htlab::experiments::surrogate_loss;
use htlab::quadratic_theory::{
    bound_generalization, bound_wasserstein_p, decay_factor, mu_eigenvalues, rank_two_decomposition,
    sigma_theta_min, BoundInputs,
};
use htlab::stable_noise::char_fn;
use htlab::wasserstein::{wp_exact_small, w1_exact_1d, EmpiricalMeasure};
use htlab::StableParams;
use proptest::prelude::*;

fn matrix(n: usize, d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n * d)
}

fn cloud(m: usize, k: usize) -> impl Strategy<Value = EmpiricalMeasure> {
    prop::collection::vec(-5.0f64..5.0, m * k).prop_map(move |v| EmpiricalMeasure::new(v, m, k).unwrap())
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(m - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, m - 1);
            out.push(q);
        }
    }
    out
}

fn brute_force_wp(a: &EmpiricalMeasure, b: &EmpiricalMeasure, p: f64) -> f64 {
    let m = a.len();
    let cost = |i: usize, j: usize| -> f64 {
        a.point(i)
            .iter()
            .zip(b.point(j))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
            .powf(p)
    };
    let best = permutations(m)
        .iter()
        .map(|perm| perm.iter().enumerate().map(|(i, &j)| cost(i, j)).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    (best / m as f64).powf(1.0 / p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn mu_identities(kappa in 1e-6f64..50.0, gamma in 1e-3f64..20.0) {
        let (lo, hi) = mu_eigenvalues(kappa, gamma).unwrap();
        let k2 = kappa * kappa;
        prop_assert!(lo > 0.0 && lo <= hi);
        prop_assert!((lo * hi - k2).abs() <= 1e-10 * k2.max(1.0));
        let trace = gamma * gamma + k2 + 1.0;
        prop_assert!((lo + hi - trace).abs() <= 1e-12 * trace);
        prop_assert!(lo <= k2 * (1.0 + 1e-12));
        prop_assert!(lo <= 1.0 + 1e-12);
    }

    #[test]
    fn trace_identity_and_reconstruction(
        x in prop::collection::vec(-3.0f64..3.0, 1..8),
        shift in prop::collection::vec(-3.0f64..3.0, 8),
    ) {
        let d = x.len();
        let x_hat: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let r = rank_two_decomposition(&x, &x_hat).unwrap();
        let nx: f64 = x.iter().map(|v| v * v).sum();
        let nh: f64 = x_hat.iter().map(|v| v * v).sum();
        prop_assert!((r.sigma1 + r.sigma2 - (nx - nh)).abs() < 1e-10);
        let rec = r.reconstruct();
        for i in 0..d {
            for j in 0..d {
                let want = x[i] * x[j] - x_hat[i] * x_hat[j];
                prop_assert!((rec[i * d + j] - want).abs() < 1e-10, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn sigma_min_below_theta_min(
        (n, d, vals, row) in (1usize..6).prop_flat_map(|d| {
            (2 * d..=3 * d + 4).prop_flat_map(move |n| (Just(n), Just(d), matrix(n, d), matrix(1, d)))
        }),
        gamma in 0.01f64..8.0,
    ) {
        let base = Dataset::from_row_major(&vals, n, d).unwrap();
        let Ok(pair) = NeighborPair::new(base, 0, &row) else { return Ok(()); };
        match sigma_theta_min(&pair, gamma) {
            Ok((sigma, theta)) => prop_assert!(sigma <= theta + 1e-12, "{sigma} > {theta}"),
            Err(htlab::Error::SingularGram { .. }) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn bound_decreases_in_rate(r1 in 1e-3f64..5.0, r2 in 1e-3f64..5.0, alpha in 1.05f64..1.95, d in 1usize..20) {
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let inputs = BoundInputs { alpha, d, n: 50, ..BoundInputs::default() };
        prop_assert!(bound_generalization(&inputs, lo).unwrap() >= bound_generalization(&inputs, hi).unwrap());
        prop_assert!(bound_wasserstein_p(&inputs, lo).unwrap() >= bound_wasserstein_p(&inputs, hi).unwrap());
    }

    #[test]
    fn decay_factor_positive_and_decreasing(x in 1e-4f64..50.0, dx in 1e-3f64..5.0) {
        let a = decay_factor(x).unwrap();
        let b = decay_factor(x + dx).unwrap();
        prop_assert!(a > 0.0 && b > 0.0);
        prop_assert!(b < a);
    }

    #[test]
    fn char_fn_in_unit_interval_and_decreasing(alpha in 1.01f64..=2.0, scale in 0.1f64..3.0, u in 0.0f64..5.0) {
        let p = StableParams::new(alpha, scale).unwrap();
        let a = char_fn(&p, u);
        let b = char_fn(&p, u + 0.1);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b <= a);
    }

    #[test]
    fn sgdm_step_is_affine(
        vals in matrix(6, 3),
        theta in prop::collection::vec(-3.0f64..3.0, 3),
        v in prop::collection::vec(-3.0f64..3.0, 3),
        eta in 0.001f64..0.5,
        gamma in 0.0f64..5.0,
        beta in 0.1f64..2.0,
    ) {
        let data = Dataset::from_row_major(&vals, 6, 3).unwrap();
        let cfg = OptimizerConfig { beta, ..OptimizerConfig::sgdm(eta, gamma, 1, None) };
        let state = TrajectoryState::new(theta.clone(), v.clone()).unwrap();
        let next = sgdm_step(&state, &cfg, &GradientModel::Quadratic, &data, &[0.0; 3], 1).unwrap();
        let m = sgdm_transition_matrix(&cfg, &data);
        let y = nalgebra::DVector::from_vec(state.stacked());
        let my = &m * y;
        for (i, want) in next.stacked().iter().enumerate() {
            prop_assert!((my[i] - want).abs() < 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn surrogate_loss_is_one_lipschitz_on_unit_rows(
        vals in matrix(10, 4),
        t1 in prop::collection::vec(-5.0f64..5.0, 4),
        t2 in prop::collection::vec(-5.0f64..5.0, 4),
    ) {
        let rows: Vec<Vec<f64>> = vals
            .chunks(4)
            .map(|r| {
                let n = r.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
                r.iter().map(|x| x / n).collect()
            })
            .collect();
        let data = Dataset::from_rows(&rows).unwrap();
        let diff = t1.iter().zip(&t2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let gap = (surrogate_loss(&t1, &data).unwrap() - surrogate_loss(&t2, &data).unwrap()).abs();
        prop_assert!(gap <= diff + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_matches_brute_force(
        (a, b) in (1usize..=6, 1usize..=3).prop_flat_map(|(m, k)| (cloud(m, k), cloud(m, k))),
        p in prop::sample::select(vec![1.0, 1.5, 2.0, 3.0]),
    ) {
        let exact = wp_exact_small(&a, &b, p).unwrap();
        let brute = brute_force_wp(&a, &b, p);
        prop_assert!((exact - brute).abs() < 1e-12 * (1.0 + brute), "{exact} vs {brute}");
    }

    #[test]
    fn metric_axioms(
        (a, b, c) in (1usize..=8, 1usize..=3).prop_flat_map(|(m, k)| (cloud(m, k), cloud(m, k), cloud(m, k))),
        p in prop::sample::select(vec![1.0, 2.0]),
    ) {
        let ab = wp_exact_small(&a, &b, p).unwrap();
        let ba = wp_exact_small(&b, &a, p).unwrap();
        let bc = wp_exact_small(&b, &c, p).unwrap();
        let ac = wp_exact_small(&a, &c, p).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12 * (1.0 + ab));
        prop_assert!(wp_exact_small(&a, &a, p).unwrap().abs() < 1e-12);
        prop_assert!(ac <= ab + bc + 1e-10);
    }

    #[test]
    fn scaling(
        (a, b) in (1usize..=8, 1usize..=3).prop_flat_map(|(m, k)| (cloud(m, k), cloud(m, k))),
        c in -4.0f64..4.0,
    ) {
        let base = wp_exact_small(&a, &b, 1.0).unwrap();
        let scaled = wp_exact_small(&a.scaled(c), &b.scaled(c), 1.0).unwrap();
        prop_assert!((scaled - c.abs() * base).abs() < 1e-10 * (1.0 + base));
    }

    #[test]
    fn point_masses(x in prop::collection::vec(-5.0f64..5.0, 3), y in prop::collection::vec(-5.0f64..5.0, 3)) {
        let a = EmpiricalMeasure::from_points(std::slice::from_ref(&x)).unwrap();
        let b = EmpiricalMeasure::from_points(std::slice::from_ref(&y)).unwrap();
        let want = x.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        prop_assert!((wp_exact_small(&a, &b, 1.0).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn one_d_solver_agrees_with_assignment((a, b) in (1usize..=40).prop_flat_map(|m| (cloud(m, 1), cloud(m, 1)))) {
        let sorted = w1_exact_1d(&a, &b).unwrap();
        let assign = wp_exact_small(&a, &b, 1.0).unwrap();
        prop_assert!((sorted - assign).abs() < 1e-12 * (1.0 + sorted));
    }
}
