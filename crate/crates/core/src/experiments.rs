//! End-to-end studies: the synthetic generalization-gap sweep, the `1/n`
//! stability scaling, and the step-size discretization trend.
//!
//! Randomness is keyed so that comparisons are paired: within one sweep,
//! every friction value for a given `(σ_A, d, seed)` sees the same training
//! and test sets, and every friction value for a given `(α, σ_A, d, η, seed)`
//! sees the same raw noise sequence.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    run_coupled_pair, run_to_end, Algorithm, Dataset, GradientModel, NeighborPair, NoiseTimeScale,
    OptimizerConfig, TrajectoryState,
};
use crate::error::{Error, Result};
use crate::quadratic_theory::rank_two_decomposition;
use crate::rng::RngStream;
use crate::stable_noise::StableParams;
use crate::wasserstein::{
    mean_and_std_err, sliced_w1_detail, wp_exact_small, EmpiricalMeasure, MAX_EXACT_SAMPLES,
};

const TAG_TRAIN: u64 = 1;
const TAG_TEST: u64 = 2;
const TAG_NOISE: u64 = 3;
const TAG_DIRECTION: u64 = 4;
const TAG_STABILITY: u64 = 5;
const TAG_DISCRETIZATION: u64 = 6;
const TAG_SECOND_REFERENCE: u64 = 7;
const TAG_BOOTSTRAP: u64 = 8;
const TAG_DATA: u64 = 9;

pub const GAP_CSV_HEADER: &str =
    "alpha,sigmaA,d,gamma,eta,algorithm,seed,train_loss,test_loss,gap,diverged";

/// Float formatting used in every data file: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `n × d` matrix of independent `N(0, σ_A²)` entries, drawn row by row
/// (so datasets from one stream share their leading rows).
pub fn gen_synthetic(n: usize, d: usize, sigma_a: f64, stream: RngStream) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::invalid("n, d", "must be >= 1"));
    }
    if !(sigma_a > 0.0 && sigma_a.is_finite()) {
        return Err(Error::invalid("sigmaA", format!("must be > 0, got {sigma_a}")));
    }
    let mut rng = stream.rng();
    let values: Vec<f64> = (0..n * d)
        .map(|_| sigma_a * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Dataset::from_row_major(&values, n, d)
}

/// `(1/n) Σ |θᵀx_i|`.
pub fn surrogate_loss(theta: &[f64], data: &Dataset) -> Result<f64> {
    let proj = data.project(theta)?;
    Ok(proj.iter().map(|p| p.abs()).sum::<f64>() / data.n() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub alphas: Vec<f64>,
    #[serde(rename = "sigmaA")]
    pub sigma_a: Vec<f64>,
    pub dims: Vec<usize>,
    /// `0` selects plain SGD.
    pub gammas: Vec<f64>,
    pub etas: Vec<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub steps: usize,
    pub seeds: usize,
    pub scale_match: bool,
    pub zeta: f64,
    pub beta: f64,
    pub noise_time_scale: NoiseTimeScale,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            alphas: vec![1.6, 1.8, 1.9],
            sigma_a: vec![1.0],
            dims: vec![50, 100],
            gammas: vec![0.0, 2.5, 5.0],
            etas: vec![0.05],
            n_train: 1000,
            n_test: 10_000,
            steps: 2000,
            seeds: 50,
            scale_match: true,
            zeta: 1.0,
            beta: 1.0,
            noise_time_scale: NoiseTimeScale::Eta,
        }
    }
}

/// One point of a [`SweepGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub alpha: f64,
    #[serde(rename = "sigmaA")]
    pub sigma_a: f64,
    pub d: usize,
    pub gamma: f64,
    pub eta: f64,
}

impl Cell {
    pub fn algorithm(&self) -> Algorithm {
        if self.gamma == 0.0 {
            Algorithm::Sgd
        } else {
            Algorithm::Sgdm
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        let nonempty = [
            ("alphas", self.alphas.is_empty()),
            ("sigmaA", self.sigma_a.is_empty()),
            ("dims", self.dims.is_empty()),
            ("gammas", self.gammas.is_empty()),
            ("etas", self.etas.is_empty()),
        ];
        if let Some((name, _)) = nonempty.iter().find(|(_, empty)| *empty) {
            return Err(Error::invalid(name, "list must be nonempty"));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 1.0 && **a < 2.0)) {
            return Err(Error::AlphaOutOfRange {
                value: *a,
                range: "(1,2)",
            });
        }
        if self.sigma_a.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("sigmaA", "entries must be > 0"));
        }
        if self.dims.contains(&0) {
            return Err(Error::invalid("dims", "entries must be >= 1"));
        }
        if self.gammas.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::invalid("gammas", "entries must be >= 0"));
        }
        if self.etas.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::invalid("etas", "entries must be > 0"));
        }
        if self.n_train == 0 || self.n_test == 0 || self.steps == 0 || self.seeds == 0 {
            return Err(Error::invalid("n_train/n_test/steps/seeds", "must be >= 1"));
        }
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return Err(Error::invalid("zeta", "must be >= 0"));
        }
        if !(self.beta > 0.0) {
            return Err(Error::invalid("beta", "must be > 0"));
        }
        Ok(())
    }

    /// Cells in lexicographic order `(alpha, sigmaA, d, gamma, eta)`.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &alpha in &self.alphas {
            for &sigma_a in &self.sigma_a {
                for &d in &self.dims {
                    for &gamma in &self.gammas {
                        for &eta in &self.etas {
                            out.push(Cell {
                                alpha,
                                sigma_a,
                                d,
                                gamma,
                                eta,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn task_count(&self) -> usize {
        self.cells().len() * self.seeds
    }

    pub fn optimizer_config(&self, cell: &Cell) -> Result<OptimizerConfig> {
        let noise = if self.zeta > 0.0 {
            Some(StableParams::new(cell.alpha, self.zeta)?)
        } else {
            None
        };
        let cfg = OptimizerConfig {
            eta: cell.eta,
            gamma: cell.gamma,
            beta: self.beta,
            steps: self.steps,
            noise,
            scale_match: self.scale_match,
            algorithm: cell.algorithm(),
            noise_time_scale: self.noise_time_scale,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRecord {
    pub alpha: f64,
    #[serde(rename = "sigmaA")]
    pub sigma_a: f64,
    pub d: usize,
    pub gamma: f64,
    pub eta: f64,
    pub algorithm: Algorithm,
    pub seed: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub gap: f64,
    pub diverged: bool,
}

impl GapRecord {
    pub fn cell(&self) -> Cell {
        Cell {
            alpha: self.alpha,
            sigma_a: self.sigma_a,
            d: self.d,
            gamma: self.gamma,
            eta: self.eta,
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            fmt_f64(self.alpha),
            fmt_f64(self.sigma_a),
            self.d,
            fmt_f64(self.gamma),
            fmt_f64(self.eta),
            self.algorithm.label(),
            self.seed,
            fmt_f64(self.train_loss),
            fmt_f64(self.test_loss),
            fmt_f64(self.gap),
            self.diverged
        )
    }
}

/// Train on a fresh training set and record the surrogate gap.
/// Divergence is recorded in the row, not returned as an error.
pub fn run_gap_cell(grid: &SweepGrid, cell: &Cell, seed: usize, master_seed: u64) -> Result<GapRecord> {
    let cfg = grid.optimizer_config(cell)?;
    let root = RngStream::new(master_seed, 0);
    let data_key = root.derive_path(&[TAG_DATA, cell.sigma_a.to_bits(), cell.d as u64, seed as u64]);
    let train = gen_synthetic(grid.n_train, cell.d, cell.sigma_a, data_key.derive(TAG_TRAIN))?;
    let noise_stream = root.derive_path(&[
        TAG_NOISE,
        cell.alpha.to_bits(),
        cell.sigma_a.to_bits(),
        cell.d as u64,
        cell.eta.to_bits(),
        seed as u64,
    ]);
    let record = |train_loss: f64, test_loss: f64, diverged: bool| GapRecord {
        alpha: cell.alpha,
        sigma_a: cell.sigma_a,
        d: cell.d,
        gamma: cell.gamma,
        eta: cell.eta,
        algorithm: cell.algorithm(),
        seed,
        train_loss,
        test_loss,
        gap: test_loss - train_loss,
        diverged,
    };
    let init = TrajectoryState::zeros(cell.d);
    match run_to_end(&init, &cfg, &GradientModel::Quadratic, &train, noise_stream) {
        Ok(end) => {
            let test = gen_synthetic(grid.n_test, cell.d, cell.sigma_a, data_key.derive(TAG_TEST))?;
            let train_loss = surrogate_loss(&end.theta, &train)?;
            let test_loss = surrogate_loss(&end.theta, &test)?;
            if train_loss.is_finite() && test_loss.is_finite() {
                Ok(record(train_loss, test_loss, false))
            } else {
                Ok(record(f64::NAN, f64::NAN, true))
            }
        }
        Err(Error::Diverged { step }) => {
            log::warn!("cell {cell:?} seed {seed} diverged at step {step}");
            Ok(record(f64::NAN, f64::NAN, true))
        }
        Err(e) => Err(e),
    }
}

/// Every `(cell, seed)` pair, returned in lexicographic order regardless of
/// scheduling. At most `parallelism` tasks run at once.
pub fn run_sweep(grid: &SweepGrid, master_seed: u64, parallelism: usize) -> Result<Vec<GapRecord>> {
    grid.validate()?;
    let cells = grid.cells();
    let tasks: Vec<(Cell, usize)> = cells
        .iter()
        .flat_map(|c| (0..grid.seeds).map(move |s| (*c, s)))
        .collect();
    log::info!(
        "sweep: {} cells x {} seeds = {} runs on {} threads",
        cells.len(),
        grid.seeds,
        tasks.len(),
        parallelism.max(1)
    );
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let records: Result<Vec<GapRecord>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(cell, seed)| run_gap_cell(grid, cell, *seed, master_seed))
            .collect()
    });
    let records = records?;
    let diverged = records.iter().filter(|r| r.diverged).count();
    if diverged > 0 {
        log::warn!("sweep: {diverged} of {} runs diverged", records.len());
    }
    Ok(records)
}

pub fn write_gap_csv<W: Write>(records: &[GapRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{GAP_CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.csv_line())?;
    }
    Ok(())
}

pub fn gap_csv_string(records: &[GapRecord]) -> String {
    let mut buf = Vec::new();
    write_gap_csv(records, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("CSV is ASCII")
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    #[serde(flatten)]
    pub cell: Cell,
    pub algorithm: Algorithm,
    pub runs: usize,
    pub diverged: usize,
    pub median_gap: f64,
    pub q25_gap: f64,
    pub q75_gap: f64,
}

/// Median and interquartile range of the gap per cell, over non-diverged runs.
pub fn summarize(records: &[GapRecord]) -> Vec<CellSummary> {
    let mut out: Vec<CellSummary> = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let cell = records[start].cell();
        let end = records[start..]
            .iter()
            .position(|r| r.cell() != cell)
            .map_or(records.len(), |p| start + p);
        let group = &records[start..end];
        let mut gaps: Vec<f64> = group.iter().filter(|r| !r.diverged).map(|r| r.gap).collect();
        gaps.sort_by(f64::total_cmp);
        out.push(CellSummary {
            cell,
            algorithm: cell.algorithm(),
            runs: group.len(),
            diverged: group.len() - gaps.len(),
            median_gap: quantile_sorted(&gaps, 0.5),
            q25_gap: quantile_sorted(&gaps, 0.25),
            q75_gap: quantile_sorted(&gaps, 0.75),
        });
        start = end;
    }
    out
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SignTest {
    /// Pairs where the second value is larger.
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// Two-sided exact binomial p-value over non-tied pairs.
    pub p_value: f64,
}

/// Paired sign test of `H0: P(b > a) = 1/2`.
pub fn sign_test(pairs: &[(f64, f64)]) -> SignTest {
    let wins = pairs.iter().filter(|(a, b)| b > a).count();
    let losses = pairs.iter().filter(|(a, b)| b < a).count();
    let ties = pairs.len() - wins - losses;
    let n = wins + losses;
    let k = wins.min(losses);
    // P(X <= k) for X ~ Bin(n, 1/2), accumulated in log space
    let ln_half_n = n as f64 * 0.5f64.ln();
    let mut ln_choose = 0.0;
    let mut tail = 0.0;
    for i in 0..=k {
        if i > 0 {
            ln_choose += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        tail += (ln_choose + ln_half_n).exp();
    }
    SignTest {
        wins,
        losses,
        ties,
        p_value: (2.0 * tail).min(1.0),
    }
}

/// Gap ordering across friction values for one `(α, σ_A, d, η)` group.
#[derive(Debug, Clone, Serialize)]
pub struct OrderingCheck {
    pub alpha: f64,
    #[serde(rename = "sigmaA")]
    pub sigma_a: f64,
    pub d: usize,
    pub eta: f64,
    /// `(gamma, median gap)` in increasing `gamma`.
    pub medians: Vec<(f64, f64)>,
    /// Medians strictly increase with `gamma` (SGD first).
    pub increasing_in_gamma: bool,
    /// Plain SGD has the smallest median of the group.
    pub sgd_smallest: bool,
    /// Seed-paired sign test of SGD against the largest friction value.
    pub sgd_vs_largest_gamma: Option<SignTest>,
}

pub fn gap_ordering(records: &[GapRecord]) -> Vec<OrderingCheck> {
    let mut keys: Vec<(f64, f64, usize, f64)> = Vec::new();
    for r in records {
        let key = (r.alpha, r.sigma_a, r.d, r.eta);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(alpha, sigma_a, d, eta)| {
            let group: Vec<&GapRecord> = records
                .iter()
                .filter(|r| (r.alpha, r.sigma_a, r.d, r.eta) == (alpha, sigma_a, d, eta))
                .collect();
            let mut gammas: Vec<f64> = Vec::new();
            for r in &group {
                if !gammas.contains(&r.gamma) {
                    gammas.push(r.gamma);
                }
            }
            gammas.sort_by(f64::total_cmp);
            let gaps_for = |g: f64| -> Vec<&GapRecord> {
                group.iter().copied().filter(|r| r.gamma == g && !r.diverged).collect()
            };
            let medians: Vec<(f64, f64)> = gammas
                .iter()
                .map(|&g| {
                    let v: Vec<f64> = gaps_for(g).iter().map(|r| r.gap).collect();
                    (g, median(&v))
                })
                .collect();
            let increasing_in_gamma = medians.windows(2).all(|w| w[1].1 > w[0].1);
            let sgd_smallest = medians.first().is_some_and(|(g, m)| {
                *g == 0.0 && medians[1..].iter().all(|(_, other)| other > m)
            });
            let sgd_vs_largest_gamma = match (gammas.first(), gammas.last()) {
                (Some(&0.0), Some(&top)) if top > 0.0 => {
                    let sgd = gaps_for(0.0);
                    let mom = gaps_for(top);
                    let pairs: Vec<(f64, f64)> = sgd
                        .iter()
                        .filter_map(|a| mom.iter().find(|b| b.seed == a.seed).map(|b| (a.gap, b.gap)))
                        .collect();
                    Some(sign_test(&pairs))
                }
                _ => None,
            };
            OrderingCheck {
                alpha,
                sigma_a,
                d,
                eta,
                medians,
                increasing_in_gamma,
                sgd_smallest,
                sgd_vs_largest_gamma,
            }
        })
        .collect()
}

/// Uniformly random unit vector in `R^d`.
pub fn random_unit_vector(d: usize, stream: RngStream) -> Vec<f64> {
    let mut rng = stream.rng();
    loop {
        let mut u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            u.iter_mut().for_each(|x| *x /= norm);
            return u;
        }
    }
}

/// Neighbour of `base` with row `index` moved by `delta` along a random
/// unit direction drawn from `stream`.
pub fn perturb_row(base: Dataset, index: usize, delta: f64, stream: RngStream) -> Result<NeighborPair> {
    if index >= base.n() {
        return Err(Error::invalid("changed_index", format!("{index} >= n = {}", base.n())));
    }
    let u = random_unit_vector(base.d(), stream);
    let x_hat: Vec<f64> = base.row(index).iter().zip(&u).map(|(x, ui)| x + delta * ui).collect();
    NeighborPair::new(base, index, &x_hat)
}

/// Knobs of the stability study beyond the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityOptions {
    pub d: usize,
    #[serde(rename = "sigmaA")]
    pub sigma_a: f64,
    /// Replacement row is `x_0 + delta · u` with `u` a random unit vector.
    pub delta: f64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            d: 4,
            sigma_a: 1.0,
            delta: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityRow {
    pub n: usize,
    pub rho: f64,
    pub abs_sigma_sum: f64,
    pub mean_distance: f64,
    pub std_err: f64,
    pub replicates: usize,
    pub diverged: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityTable {
    pub rows: Vec<StabilityRow>,
    /// Least-squares slope of `ln(mean distance)` against `ln n`; `None`
    /// when any mean is zero.
    pub slope: Option<f64>,
    pub low_confidence: bool,
}

/// Replicates below this flag the fitted slope as low-confidence.
pub const MIN_CONFIDENT_REPLICATES: usize = 30;

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Mean synchronously-coupled distance between the chains on `X_n` and a
/// one-row perturbation of it, for each `n`.
///
/// Rows of all datasets come from one stream, so every `n` perturbs the
/// same `x_0` in the same direction, and replicate `r` uses the same noise
/// sequence at every `n`.
pub fn run_stability_study(
    n_list: &[usize],
    cfg: &OptimizerConfig,
    replicates: usize,
    master_seed: u64,
    opts: &StabilityOptions,
) -> Result<StabilityTable> {
    cfg.validate()?;
    if n_list.is_empty() {
        return Err(Error::Empty("n list"));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("n", "list must be strictly increasing"));
    }
    if let Some(n) = n_list.iter().find(|n| **n < 50) {
        return Err(Error::invalid("n", format!("entries must be >= 50, got {n}")));
    }
    if replicates == 0 {
        return Err(Error::invalid("replicates", "must be >= 1"));
    }
    if !(opts.delta >= 0.0 && opts.delta.is_finite()) {
        return Err(Error::invalid("delta", "must be >= 0"));
    }
    let root = RngStream::new(master_seed, 0);
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let base = gen_synthetic(n, opts.d, opts.sigma_a, root.derive(TAG_DATA))?;
        let pair = perturb_row(base, 0, opts.delta, root.derive(TAG_DIRECTION))?;
        let abs_sigma_sum = rank_two_decomposition(&pair.x(), &pair.x_hat())?.abs_sigma_sum();
        let init = TrajectoryState::zeros(opts.d);
        let outcomes: Vec<Result<f64>> = (0..replicates)
            .into_par_iter()
            .map(|r| {
                let stream = root.derive_path(&[TAG_STABILITY, r as u64]);
                run_coupled_pair(&pair, &init, cfg, &GradientModel::Quadratic, stream, cfg.steps)
                    .map(|(a, b)| a.distance(&b))
            })
            .collect();
        let mut dists = Vec::with_capacity(replicates);
        let mut diverged = 0;
        for o in outcomes {
            match o {
                Ok(d) => dists.push(d),
                Err(Error::Diverged { .. }) => diverged += 1,
                Err(e) => return Err(e),
            }
        }
        if diverged > 0 {
            log::warn!("stability n={n}: {diverged} replicates diverged");
        }
        let (mean_distance, std_err) = if dists.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            mean_and_std_err(&dists)
        };
        rows.push(StabilityRow {
            n,
            rho: pair.rho,
            abs_sigma_sum,
            mean_distance,
            std_err,
            replicates: dists.len(),
            diverged,
        });
    }
    let slope = if rows.len() >= 2 && rows.iter().all(|r| r.mean_distance > 0.0) {
        let x: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.mean_distance.ln()).collect();
        Some(ls_slope(&x, &y))
    } else {
        None
    };
    Ok(StabilityTable {
        rows,
        slope,
        low_confidence: replicates < MIN_CONFIDENT_REPLICATES,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceEstimator {
    /// Exact `W₁` by assignment; needs `replicates <= 512`.
    ExactW1,
    SlicedW1 { projections: usize },
}

impl DistanceEstimator {
    pub fn label(&self) -> &'static str {
        match self {
            DistanceEstimator::ExactW1 => "exact-W1",
            DistanceEstimator::SlicedW1 { .. } => "sliced-W1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizationOptions {
    /// Physical time `T = steps · η`, held fixed across step sizes.
    pub horizon: f64,
    pub n: usize,
    pub d: usize,
    #[serde(rename = "sigmaA")]
    pub sigma_a: f64,
    pub estimator: DistanceEstimator,
    pub bootstrap: usize,
    /// `(θ₀, v₀)`; zeros when absent.
    #[serde(skip)]
    pub init: Option<TrajectoryState>,
}

impl Default for DiscretizationOptions {
    fn default() -> Self {
        Self {
            horizon: 100.0,
            n: 200,
            d: 4,
            sigma_a: 1.0,
            estimator: DistanceEstimator::ExactW1,
            bootstrap: 20,
            init: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiscretizationRow {
    pub eta: f64,
    pub steps: usize,
    pub distance: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiscretizationTable {
    pub estimator: &'static str,
    pub reference_eta: f64,
    pub replicates: usize,
    /// One row per non-reference step size, in the given (decreasing) order.
    pub rows: Vec<DiscretizationRow>,
    /// Distance between two independent clouds at the reference step size.
    pub noise_floor: DiscretizationRow,
}

impl DiscretizationTable {
    /// Whether each distance is at most the previous (larger-η) one plus
    /// `k` standard errors of the difference.
    pub fn non_increasing_within(&self, k: f64) -> bool {
        self.rows.windows(2).all(|w| {
            let se = (w[0].std_err.powi(2) + w[1].std_err.powi(2)).sqrt();
            w[1].distance <= w[0].distance + k * se
        })
    }
}

fn end_state_cloud(
    cfg: &OptimizerConfig,
    data: &Dataset,
    init: &TrajectoryState,
    replicates: usize,
    stream: RngStream,
) -> Result<EmpiricalMeasure> {
    let states: Vec<Result<Vec<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let end = run_to_end(init, cfg, &GradientModel::Quadratic, data, stream.derive(r as u64))?;
            Ok(match cfg.algorithm {
                Algorithm::Sgd => end.theta,
                Algorithm::Sgdm => end.stacked(),
            })
        })
        .collect();
    let states: Vec<Vec<f64>> = states.into_iter().collect::<Result<_>>()?;
    EmpiricalMeasure::from_points(&states)
}

fn resample(cloud: &EmpiricalMeasure, idx: &[usize]) -> EmpiricalMeasure {
    let pts: Vec<Vec<f64>> = idx.iter().map(|&i| cloud.point(i).to_vec()).collect();
    EmpiricalMeasure::from_points(&pts).expect("resampled cloud is valid")
}

fn cloud_distance(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    estimator: DistanceEstimator,
    stream: RngStream,
) -> Result<f64> {
    match estimator {
        DistanceEstimator::ExactW1 => wp_exact_small(a, b, 1.0),
        DistanceEstimator::SlicedW1 { projections } => {
            Ok(sliced_w1_detail(a, b, projections, stream)?.mean)
        }
    }
}

/// Distance with a bootstrap standard error.
fn distance_with_error(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    estimator: DistanceEstimator,
    bootstrap: usize,
    stream: RngStream,
) -> Result<(f64, f64)> {
    let point = cloud_distance(a, b, estimator, stream.derive(0))?;
    if bootstrap < 2 {
        return Ok((point, f64::NAN));
    }
    let m = a.len();
    let boots: Vec<Result<f64>> = (0..bootstrap)
        .into_par_iter()
        .map(|i| {
            let s = stream.derive_path(&[TAG_BOOTSTRAP, i as u64]);
            let mut rng = s.rng();
            let ia: Vec<usize> = (0..m).map(|_| rng.random_range(0..m)).collect();
            let ib: Vec<usize> = (0..m).map(|_| rng.random_range(0..m)).collect();
            cloud_distance(&resample(a, &ia), &resample(b, &ib), estimator, s.derive(1))
        })
        .collect();
    let boots: Vec<f64> = boots.into_iter().collect::<Result<_>>()?;
    let mean = boots.iter().sum::<f64>() / bootstrap as f64;
    let var = boots.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (bootstrap - 1) as f64;
    Ok((point, var.sqrt()))
}

/// Distance between end-state clouds at each step size and at the
/// smallest (reference) step size, with the physical horizon held fixed.
pub fn run_discretization_study(
    eta_list: &[f64],
    cfg_base: &OptimizerConfig,
    replicates: usize,
    master_seed: u64,
    opts: &DiscretizationOptions,
) -> Result<DiscretizationTable> {
    if eta_list.len() < 2 {
        return Err(Error::invalid("etas", "need at least one step size plus the reference"));
    }
    if eta_list.windows(2).any(|w| w[1] >= w[0]) || eta_list.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::invalid("etas", "must be positive and strictly decreasing"));
    }
    if replicates < 2 {
        return Err(Error::invalid("replicates", "must be >= 2"));
    }
    if opts.estimator == DistanceEstimator::ExactW1 && replicates > MAX_EXACT_SAMPLES {
        return Err(Error::TooLarge {
            what: "replicates (exact W1)",
            got: replicates,
            limit: MAX_EXACT_SAMPLES,
        });
    }
    if !(opts.horizon > 0.0) {
        return Err(Error::invalid("horizon", "must be > 0"));
    }
    let root = RngStream::new(master_seed, 0);
    let data = gen_synthetic(opts.n, opts.d, opts.sigma_a, root.derive(TAG_DATA))?;
    let init = opts.init.clone().unwrap_or_else(|| TrajectoryState::zeros(opts.d));
    if init.dim() != opts.d {
        return Err(Error::DimensionMismatch {
            expected: opts.d,
            got: init.dim(),
        });
    }
    let steps_for = |eta: f64| ((opts.horizon / eta).round() as usize).max(1);
    let cfg_for = |eta: f64| -> Result<OptimizerConfig> {
        let cfg = OptimizerConfig {
            eta,
            steps: steps_for(eta),
            ..*cfg_base
        };
        cfg.validate()?;
        Ok(cfg)
    };

    let reference_eta = *eta_list.last().expect("len >= 2");
    let ref_cfg = cfg_for(reference_eta)?;
    let reference = end_state_cloud(
        &ref_cfg,
        &data,
        &init,
        replicates,
        root.derive_path(&[TAG_DISCRETIZATION, reference_eta.to_bits()]),
    )?;
    let mut rows = Vec::new();
    for (i, &eta) in eta_list[..eta_list.len() - 1].iter().enumerate() {
        let cfg = cfg_for(eta)?;
        let cloud = end_state_cloud(
            &cfg,
            &data,
            &init,
            replicates,
            root.derive_path(&[TAG_DISCRETIZATION, eta.to_bits()]),
        )?;
        let (distance, std_err) = distance_with_error(
            &cloud,
            &reference,
            opts.estimator,
            opts.bootstrap,
            root.derive_path(&[TAG_BOOTSTRAP, i as u64]),
        )?;
        log::info!("discretization eta={eta}: {} = {distance:.4e} ± {std_err:.2e}", opts.estimator.label());
        rows.push(DiscretizationRow {
            eta,
            steps: cfg.steps,
            distance,
            std_err,
        });
    }
    let second = end_state_cloud(
        &ref_cfg,
        &data,
        &init,
        replicates,
        root.derive_path(&[TAG_SECOND_REFERENCE, reference_eta.to_bits()]),
    )?;
    let (distance, std_err) = distance_with_error(
        &second,
        &reference,
        opts.estimator,
        opts.bootstrap,
        root.derive_path(&[TAG_BOOTSTRAP, u64::MAX]),
    )?;
    Ok(DiscretizationTable {
        estimator: opts.estimator.label(),
        reference_eta,
        replicates,
        rows,
        noise_floor: DiscretizationRow {
            eta: reference_eta,
            steps: ref_cfg.steps,
            distance,
            std_err,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_moments_and_determinism() {
        let data = gen_synthetic(100_000, 1, 1.0, RngStream::new(3, 0)).unwrap();
        let xs: Vec<f64> = data.points().iter().copied().collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
        assert!((0.99..=1.01).contains(&sd), "sd {sd}");
        let again = gen_synthetic(100_000, 1, 1.0, RngStream::new(3, 0)).unwrap();
        assert_eq!(data.points(), again.points());
        assert!(gen_synthetic(10, 2, 0.0, RngStream::new(3, 0)).is_err());
    }

    #[test]
    fn synthetic_rows_are_prefix_stable() {
        let a = gen_synthetic(50, 3, 1.0, RngStream::new(4, 0)).unwrap();
        let b = gen_synthetic(80, 3, 1.0, RngStream::new(4, 0)).unwrap();
        for i in 0..50 {
            assert_eq!(a.row(i), b.row(i));
        }
    }

    #[test]
    fn surrogate_examples() {
        let data = Dataset::from_rows(&[vec![1.0, 0.0], vec![-2.0, 0.0]]).unwrap();
        assert_eq!(surrogate_loss(&[0.0, 0.0], &data).unwrap(), 0.0);
        assert_eq!(surrogate_loss(&[1.0, 0.0], &data).unwrap(), 1.5);
        assert!(surrogate_loss(&[1.0], &data).is_err());
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert!(quantile_sorted(&[], 0.5).is_nan());
    }

    #[test]
    fn sign_test_values() {
        // 10 of 10 wins: p = 2 / 1024
        let pairs: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, i as f64 + 1.0)).collect();
        let t = sign_test(&pairs);
        assert_eq!((t.wins, t.losses, t.ties), (10, 0, 0));
        assert!((t.p_value - 2.0 / 1024.0).abs() < 1e-15);
        // balanced: p = 1
        let t = sign_test(&[(0.0, 1.0), (1.0, 0.0)]);
        assert_eq!(t.p_value, 1.0);
        // 8 of 10: P(X <= 2) = 56/1024, two-sided 112/1024
        let mut pairs: Vec<(f64, f64)> = (0..8).map(|_| (0.0, 1.0)).collect();
        pairs.extend([(1.0, 0.0), (1.0, 0.0), (0.5, 0.5)]);
        let t = sign_test(&pairs);
        assert_eq!(t.ties, 1);
        assert!((t.p_value - 112.0 / 1024.0).abs() < 1e-14);
    }

    #[test]
    fn ls_slope_exact_line() {
        let x = [1.0, 2.0, 3.0];
        let y = [5.0, 3.0, 1.0];
        assert!((ls_slope(&x, &y) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn grid_validation_and_order() {
        let mut g = SweepGrid {
            alphas: vec![1.5],
            sigma_a: vec![1.0, 2.0],
            dims: vec![3],
            gammas: vec![0.0, 1.0],
            etas: vec![0.1],
            seeds: 2,
            ..SweepGrid::default()
        };
        g.validate().unwrap();
        let cells = g.cells();
        assert_eq!(cells.len(), 4);
        assert_eq!((cells[0].sigma_a, cells[0].gamma), (1.0, 0.0));
        assert_eq!((cells[1].sigma_a, cells[1].gamma), (1.0, 1.0));
        assert_eq!(cells[2].sigma_a, 2.0);
        assert_eq!(g.task_count(), 8);
        g.alphas = vec![2.0];
        assert!(g.validate().is_err());
        g.alphas = vec![];
        assert!(g.validate().is_err());
    }

    #[test]
    fn csv_formatting() {
        let r = GapRecord {
            alpha: 1.5,
            sigma_a: 1.0,
            d: 3,
            gamma: 0.0,
            eta: 0.05,
            algorithm: Algorithm::Sgd,
            seed: 7,
            train_loss: 0.25,
            test_loss: f64::NAN,
            gap: f64::NAN,
            diverged: true,
        };
        let line = r.csv_line();
        assert!(line.starts_with("1.5000000000000000e0,1.0000000000000000e0,3,0.0000000000000000e0,"));
        assert!(line.ends_with(",SGD,7,2.5000000000000000e-1,NaN,NaN,true"));
        let csv = gap_csv_string(&[r]);
        assert!(csv.starts_with(GAP_CSV_HEADER));
        assert!(csv.ends_with('\n'));
    }
}
