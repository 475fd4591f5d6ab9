//! Acceptance suite. Each test prints one `[PASS]` or `[FAIL]` line for its
//! criterion and then asserts on that outcome.
//!
//! `cargo test -p htlab --test acceptance -- --nocapture`

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use htlab::config::RunConfig;
use htlab::dynamics::{Dataset, NeighborPair};
use htlab::experiments::{
    gap_csv_string, gap_ordering, gen_synthetic, perturb_row, run_discretization_study,
    run_stability_study, run_sweep, DiscretizationOptions, DistanceEstimator, GapRecord,
    StabilityOptions, SweepGrid,
};
use htlab::linalg::momentum_drift_matrix;
use htlab::quadratic_theory::{
    decay_factor, gamma_sweep, mu_eigenvalues, spectral_summary, unit_ball_volume, BoundInputs,
};
use htlab::stable_noise::{char_fn_tolerance, tail_index_estimate};
use htlab::wasserstein::{w1_exact_1d, wp_exact_small, EmpiricalMeasure};
use htlab::{Algorithm, OptimizerConfig, RngStream, StableParams};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

const SEED: u64 = 20_240_601;

fn report(n: u32, title: &str, pass: bool, detail: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {n}: {title} | {detail}");
    assert!(pass, "criterion {n} failed: {detail}");
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

struct Instance {
    pair: NeighborPair,
    gamma: f64,
}

fn random_instances() -> Vec<Instance> {
    let mut rng = RngStream::new(SEED, 1).rng();
    (0..200)
        .map(|_| {
            let d = rng.random_range(1..=16);
            let n = rng.random_range(2 * d..=64);
            let vals: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
            let base = Dataset::from_row_major(&vals, n, d).unwrap();
            let row: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let index = rng.random_range(0..n);
            // (0, 8]
            let gamma = 8.0 * (1.0 - rng.random::<f64>());
            Instance {
                pair: NeighborPair::new(base, index, &row).unwrap(),
                gamma,
            }
        })
        .collect()
}

fn svd_min(data: &Dataset, gamma: f64) -> f64 {
    let a = momentum_drift_matrix(data.gram(), gamma);
    a.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

#[test]
fn criterion_01_spectral_oracle() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for inst in &random_instances() {
        let closed = spectral_summary(&inst.pair, inst.gamma).unwrap().sigma_min;
        let numeric = svd_min(&inst.pair.base, inst.gamma).min(svd_min(&inst.pair.perturbed, inst.gamma));
        worst = worst.max((closed - numeric).abs() / numeric);
    }
    let elapsed = start.elapsed();
    report(
        1,
        "closed-form sigma_min vs numeric SVD of the drift matrix",
        worst <= 1e-8 && within(elapsed, 10),
        format!("200 instances, max rel err {worst:.3e} (tol 1e-8), {:.2}s (limit 10s)", elapsed.as_secs_f64()),
    );
}

#[test]
fn criterion_02_sigma_below_theta() {
    let mut worst_gap = f64::NEG_INFINITY;
    let mut mu_violations = 0;
    for inst in &random_instances() {
        let s = spectral_summary(&inst.pair, inst.gamma).unwrap();
        worst_gap = worst_gap.max(s.sigma_min - s.theta_min);
        for spec in [&s.base, &s.perturbed] {
            for (k, m) in spec.kappa.iter().zip(&spec.mu_minus) {
                if *m > k * k {
                    mu_violations += 1;
                }
            }
        }
    }
    report(
        2,
        "sigma_min <= theta_min and mu_minus <= kappa^2",
        worst_gap <= 1e-12 && mu_violations == 0,
        format!("max(sigma_min - theta_min) = {worst_gap:.3e} (tol 1e-12), mu violations {mu_violations}"),
    );
}

#[test]
fn criterion_03_gamma_monotonicity() {
    let start = Instant::now();
    let root = RngStream::new(SEED, 3);
    let base = gen_synthetic(100, 4, 1.0, root.derive(1)).unwrap();
    let pair = perturb_row(base, 0, 1.0, root.derive(2)).unwrap();
    let inputs = BoundInputs {
        alpha: 1.7,
        d: 4,
        n: 100,
        ..BoundInputs::default()
    };
    let gammas: Vec<f64> = (1..=32).map(|i| 0.25 * i as f64).collect();
    let rows = gamma_sweep(&pair, &gammas, &inputs).unwrap();
    let sigma_dec = rows.windows(2).all(|w| w[1].sigma_min < w[0].sigma_min);
    let bound_inc = rows.windows(2).all(|w| w[1].bound_sgdm > w[0].bound_sgdm);
    let dominates = rows.iter().all(|r| r.bound_sgdm >= r.bound_sgd);
    let elapsed = start.elapsed();
    report(
        3,
        "sigma_min decreasing, bound_SGDm increasing and >= bound_SGD over gamma",
        sigma_dec && bound_inc && dominates && within(elapsed, 5),
        format!(
            "32 gammas, sigma decreasing {sigma_dec}, bound increasing {bound_inc}, dominates {dominates}, ratio at gamma=8 {:.3}, {:.3}s (limit 5s)",
            rows[31].bound_sgdm / rows[31].bound_sgd,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_04_point_checks() {
    let (lo, hi) = mu_eigenvalues(1.0, 1.0).unwrap();
    // eigenvalues of [[1, -1], [-1, 2]]
    let oracle = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 2.0]).symmetric_eigen();
    let mut ev: Vec<f64> = oracle.eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    let s5 = 5f64.sqrt();
    let mu_err = (lo - (3.0 - s5) / 2.0)
        .abs()
        .max((hi - (3.0 + s5) / 2.0).abs())
        .max((lo - ev[0]).abs())
        .max((hi - ev[1]).abs());
    let vol_err = (unit_ball_volume(3).unwrap().volume - 4.0 * std::f64::consts::PI / 3.0).abs();
    let h_err = (decay_factor(1.0).unwrap() - 2.4715177646857693).abs();
    report(
        4,
        "closed-form point values",
        mu_err <= 1e-12 && vol_err <= 1e-12 && h_err <= 1e-10,
        format!("mu(1,1) err {mu_err:.2e}, V_3 err {vol_err:.2e}, h(1) err {h_err:.2e}"),
    );
}

#[test]
fn criterion_05_sampler_fidelity() {
    let start = Instant::now();
    const N: usize = 1_000_000;
    const D: usize = 4;
    let tol = char_fn_tolerance(N);
    let us = [0.25, 0.5, 1.0, 2.0];
    let mut worst_cf = 0.0f64;
    let mut worst_iso = 0.0f64;
    for (i, alpha) in [1.2, 1.5, 1.8, 2.0].into_iter().enumerate() {
        let params = StableParams::new(alpha, 1.0).unwrap();
        let mut rng = RngStream::new(SEED, 50 + i as u64).rng();
        let xs: Vec<f64> = (0..N).map(|_| params.sample(&mut rng)).collect();
        let mut vecs = vec![0.0; N * D];
        for row in vecs.chunks_exact_mut(D) {
            params.sample_isotropic_into(&mut rng, row);
        }
        for u in us {
            let emp = xs.iter().map(|x| (u * x).cos()).sum::<f64>() / N as f64;
            let theory = (-u.powf(alpha)).exp();
            worst_cf = worst_cf.max((emp - theory).abs());
            let c = u / 2f64.sqrt();
            let (mut axis, mut diag) = (0.0, 0.0);
            for row in vecs.chunks_exact(D) {
                axis += (u * row[0]).cos();
                diag += (c * (row[1] + row[2])).cos();
            }
            worst_iso = worst_iso.max((axis - diag).abs() / N as f64);
        }
    }
    let mut hill = Vec::new();
    for (i, alpha) in [1.3, 1.5, 1.8].into_iter().enumerate() {
        let params = StableParams::new(alpha, 1.0).unwrap();
        let mut rng = RngStream::new(SEED, 60 + i as u64).rng();
        let xs: Vec<f64> = (0..N).map(|_| params.sample(&mut rng)).collect();
        hill.push((alpha, tail_index_estimate(&xs, 0.002).unwrap()));
    }
    let hill_ok = hill.iter().all(|(a, est)| (a - est).abs() <= 0.15);
    let elapsed = start.elapsed();
    report(
        5,
        "stable sampler characteristic function, isotropy and tail index",
        worst_cf <= tol && worst_iso <= tol && hill_ok && within(elapsed, 120),
        format!(
            "16 points, max cf dev {worst_cf:.4}, max isotropy dev {worst_iso:.4} (tol {tol:.4}), hill {hill:.3?} (tol 0.15), {:.1}s (limit 120s)",
            elapsed.as_secs_f64()
        ),
    );
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

fn brute_force(a: &EmpiricalMeasure, b: &EmpiricalMeasure, p: f64, perms: &[Vec<usize>]) -> f64 {
    let cost = |i: usize, j: usize| -> f64 {
        let sq: f64 = a.point(i).iter().zip(b.point(j)).map(|(x, y)| (x - y) * (x - y)).sum();
        sq.sqrt().powf(p)
    };
    let best = perms
        .iter()
        .map(|perm| perm.iter().enumerate().map(|(i, &j)| cost(i, j)).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    (best / a.len() as f64).powf(1.0 / p)
}

fn random_cloud<R: Rng>(rng: &mut R, m: usize, k: usize) -> EmpiricalMeasure {
    let v: Vec<f64> = (0..m * k).map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0).collect();
    EmpiricalMeasure::new(v, m, k).unwrap()
}

#[test]
fn criterion_06_wasserstein_exactness() {
    let start = Instant::now();
    let mut rng = RngStream::new(SEED, 6).rng();
    let perms: Vec<Vec<Vec<usize>>> = (0..=7).map(permutations).collect();
    let mut worst_exact = 0.0f64;
    for _ in 0..100 {
        let m = rng.random_range(1..=7);
        let k = rng.random_range(1..=4);
        let p = [1.0, 1.5, 2.0, 3.0][rng.random_range(0..4)];
        let a = random_cloud(&mut rng, m, k);
        let b = random_cloud(&mut rng, m, k);
        let exact = wp_exact_small(&a, &b, p).unwrap();
        worst_exact = worst_exact.max((exact - brute_force(&a, &b, p, &perms[m])).abs());
    }
    let mut worst_1d = 0.0f64;
    for _ in 0..100 {
        let m = rng.random_range(1..=200);
        let a = random_cloud(&mut rng, m, 1);
        let b = random_cloud(&mut rng, m, 1);
        let diff = w1_exact_1d(&a, &b).unwrap() - wp_exact_small(&a, &b, 1.0).unwrap();
        worst_1d = worst_1d.max(diff.abs());
    }
    let elapsed = start.elapsed();
    report(
        6,
        "assignment solver vs brute force, sorted 1-D vs assignment",
        worst_exact <= 1e-12 && worst_1d <= 1e-12 && within(elapsed, 30),
        format!(
            "100 + 100 trials, max err {worst_exact:.2e} / {worst_1d:.2e} (tol 1e-12), {:.2}s (limit 30s)",
            elapsed.as_secs_f64()
        ),
    );
}

fn default_sgdm(alpha: f64) -> OptimizerConfig {
    let mut section = RunConfig::default().optimizer;
    section.algorithm = Algorithm::Sgdm;
    section.alpha = alpha;
    section.to_config().unwrap()
}

#[test]
fn criterion_07_stability_scaling() {
    let start = Instant::now();
    let table = run_stability_study(
        &[250, 500, 1000, 2000],
        &default_sgdm(1.7),
        200,
        SEED,
        &StabilityOptions::default(),
    )
    .unwrap();
    let elapsed = start.elapsed();
    let means: Vec<(usize, f64)> = table.rows.iter().map(|r| (r.n, r.mean_distance)).collect();
    let slope = table.slope.unwrap_or(f64::NAN);
    report(
        7,
        "coupled distance scales like 1/n",
        (-1.3..=-0.7).contains(&slope) && !table.low_confidence && within(elapsed, 300),
        format!(
            "slope {slope:.3} (range [-1.3, -0.7]), means {means:?}, {:.1}s (limit 300s)",
            elapsed.as_secs_f64()
        ),
    );
}

fn sweep_grid() -> SweepGrid {
    SweepGrid {
        alphas: vec![1.6, 1.8],
        sigma_a: vec![0.5, 1.0, 2.0],
        dims: vec![100],
        gammas: vec![0.0, 2.5, 5.0],
        etas: vec![0.05],
        n_train: 1000,
        seeds: 50,
        ..SweepGrid::default()
    }
}

fn serial_sweep() -> &'static (Vec<GapRecord>, Duration) {
    static SWEEP: OnceLock<(Vec<GapRecord>, Duration)> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let start = Instant::now();
        let rows = run_sweep(&sweep_grid(), SEED, 1).unwrap();
        (rows, start.elapsed())
    })
}

#[test]
fn criterion_08_sgd_smaller_gap() {
    let start = Instant::now();
    let records = run_sweep(&sweep_grid(), SEED, 8).unwrap();
    let elapsed = start.elapsed();
    let checks = gap_ordering(&records);
    let mut cells = Vec::new();
    let mut all_ordered = true;
    let mut all_significant = true;
    for c in &checks {
        let st = c.sgd_vs_largest_gamma.unwrap();
        let significant = st.p_value < 0.05 && st.wins > st.losses;
        all_ordered &= c.increasing_in_gamma;
        all_significant &= significant;
        let medians: Vec<String> = c.medians.iter().map(|(g, m)| format!("{g}:{m:.3}")).collect();
        cells.push(format!(
            "a={} s={} [{}] sign {}-{} p={:.1e}",
            c.alpha,
            c.sigma_a,
            medians.join(" "),
            st.wins,
            st.losses,
            st.p_value
        ));
    }
    report(
        8,
        "median gap SGD < SGDm(2.5) < SGDm(5) per cell, SGD vs SGDm(5) sign test p < 0.05",
        checks.len() == 6 && all_ordered && all_significant && within(elapsed, 900),
        format!(
            "ordered in all cells {all_ordered}, significant in all cells {all_significant}, {:.1}s (limit 900s); {}",
            elapsed.as_secs_f64(),
            cells.join("; ")
        ),
    );
}

#[test]
fn criterion_10_determinism() {
    let parallel = run_sweep(&sweep_grid(), SEED, 8).unwrap();
    let (serial, serial_time) = serial_sweep();
    let a = gap_csv_string(serial);
    let b = gap_csv_string(&parallel);
    report(
        10,
        "sweep CSV byte-identical for parallelism 1 and 8",
        a.as_bytes() == b.as_bytes(),
        format!("{} rows, {} bytes, serial run {:.1}s", serial.len(), a.len(), serial_time.as_secs_f64()),
    );
}

#[test]
fn criterion_09_discretization_trend() {
    let start = Instant::now();
    let opts = DiscretizationOptions {
        horizon: 100.0,
        d: 4,
        estimator: DistanceEstimator::ExactW1,
        ..DiscretizationOptions::default()
    };
    let table = run_discretization_study(
        &[0.2, 0.1, 0.05, 0.025, 0.0125],
        &default_sgdm(1.5),
        500,
        SEED,
        &opts,
    )
    .unwrap();
    let elapsed = start.elapsed();
    let rows: Vec<String> = table
        .rows
        .iter()
        .map(|r| format!("{}:{:.4}+-{:.4}", r.eta, r.distance, r.std_err))
        .collect();
    report(
        9,
        "W1 to the reference cloud non-increasing in eta within 2 SE",
        table.non_increasing_within(2.0) && within(elapsed, 600),
        format!(
            "{} floor {:.4}+-{:.4}, {:.1}s (limit 600s)",
            rows.join(" "),
            table.noise_floor.distance,
            table.noise_floor.std_err,
            elapsed.as_secs_f64()
        ),
    );
}
