//! Heavy-tailed SGD and SGD-with-momentum recursions.
//!
//! SGD:   `θ' = θ − ηβ ∇F̂(θ) + ξ`
//! SGDm:  `v' = v − ηγ v − ηβ ∇F̂(θ) + ξ`,  `θ' = θ + η v'`
//!
//! `ξ` is a rotationally symmetric α-stable vector whose scale is set by
//! [`OptimizerConfig::step_noise`]. For the quadratic model the gradient is
//! `(1/n) XᵀX θ`, i.e. the empirical risk is `(1/2n) Σ (θᵀx_i)²`.

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::stable_noise::StableParams;

/// Training matrix `X_n` with rows `x_i`.
#[derive(Clone)]
pub struct Dataset {
    points: DMatrix<f64>,
    gram: OnceLock<DMatrix<f64>>,
}

impl fmt::Debug for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dataset")
            .field("n", &self.n())
            .field("d", &self.d())
            .finish()
    }
}

impl Dataset {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::Empty("dataset"));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        Ok(Self {
            points,
            gram: OnceLock::new(),
        })
    }

    /// Build from `n * d` values laid out row by row.
    pub fn from_row_major(values: &[f64], n: usize, d: usize) -> Result<Self> {
        if values.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                got: values.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n, d, values))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_major(&flat, n, d)
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn d(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.points.row(i).iter().copied().collect()
    }

    /// `(1/n) XᵀX`, computed once.
    pub fn gram(&self) -> &DMatrix<f64> {
        self.gram.get_or_init(|| {
            let mut g = self.points.tr_mul(&self.points);
            g /= self.n() as f64;
            // exact symmetry for the eigensolver
            let gt = g.transpose();
            (g + gt) * 0.5
        })
    }

    /// Copy with row `i` replaced.
    pub fn with_row_replaced(&self, i: usize, row: &[f64]) -> Result<Self> {
        if i >= self.n() {
            return Err(Error::invalid("changed_index", format!("{i} >= n = {}", self.n())));
        }
        if row.len() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                got: row.len(),
            });
        }
        let mut points = self.points.clone();
        for (j, &x) in row.iter().enumerate() {
            points[(i, j)] = x;
        }
        Self::new(points)
    }

    /// `X θ` as a vector of length n.
    pub fn project(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(theta.len())?;
        let t = nalgebra::DVectorView::from_slice(theta, theta.len());
        Ok((&self.points * t).iter().copied().collect())
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                got,
            });
        }
        Ok(())
    }
}

/// Two datasets differing in at most one row.
#[derive(Debug, Clone)]
pub struct NeighborPair {
    pub base: Dataset,
    pub perturbed: Dataset,
    pub changed_index: usize,
    /// `(1/n) Σ |x_i − x̂_i|`, i.e. `|x_i − x̂_i| / n` for neighbours.
    pub rho: f64,
}

impl NeighborPair {
    /// Replace row `changed_index` of `base` with `new_row`.
    pub fn new(base: Dataset, changed_index: usize, new_row: &[f64]) -> Result<Self> {
        let perturbed = base.with_row_replaced(changed_index, new_row)?;
        let old = base.row(changed_index);
        let dist = old
            .iter()
            .zip(new_row)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let rho = dist / base.n() as f64;
        Ok(Self {
            base,
            perturbed,
            changed_index,
            rho,
        })
    }

    /// Pair of identical datasets (`rho = 0`).
    pub fn identical(base: Dataset) -> Self {
        Self {
            perturbed: base.clone(),
            base,
            changed_index: 0,
            rho: 0.0,
        }
    }

    /// Validate two given datasets as neighbours.
    pub fn from_datasets(base: Dataset, perturbed: Dataset) -> Result<Self> {
        if base.n() != perturbed.n() {
            return Err(Error::DimensionMismatch {
                expected: base.n(),
                got: perturbed.n(),
            });
        }
        if base.d() != perturbed.d() {
            return Err(Error::DimensionMismatch {
                expected: base.d(),
                got: perturbed.d(),
            });
        }
        let differing: Vec<usize> = (0..base.n())
            .filter(|&i| base.points.row(i) != perturbed.points.row(i))
            .collect();
        match differing.as_slice() {
            [] => Ok(Self::identical(base)),
            [i] => {
                let row = perturbed.row(*i);
                Self::new(base, *i, &row)
            }
            _ => Err(Error::invalid(
                "perturbed",
                format!("datasets differ in {} rows, expected at most one", differing.len()),
            )),
        }
    }

    pub fn x(&self) -> Vec<f64> {
        self.base.row(self.changed_index)
    }

    pub fn x_hat(&self) -> Vec<f64> {
        self.perturbed.row(self.changed_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sgd,
    Sgdm,
}

impl Algorithm {
    pub fn label(&self) -> &'static str {
        match self {
            Algorithm::Sgd => "SGD",
            Algorithm::Sgdm => "SGDM",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Time span represented by one step's noise increment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseTimeScale {
    /// Increment of `L` over time `η`: scale `ζ η^{1/α}`.
    #[default]
    Eta,
    /// Unit-time increment `L_{k+1} − L_k`: scale `ζ`.
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizerConfig {
    pub eta: f64,
    pub gamma: f64,
    pub beta: f64,
    pub steps: usize,
    /// `None` runs the noise-free recursion.
    pub noise: Option<StableParams>,
    pub scale_match: bool,
    pub algorithm: Algorithm,
    pub noise_time_scale: NoiseTimeScale,
}

impl OptimizerConfig {
    pub fn sgd(eta: f64, steps: usize, noise: Option<StableParams>) -> Self {
        Self {
            eta,
            gamma: 0.0,
            beta: 1.0,
            steps,
            noise,
            scale_match: false,
            algorithm: Algorithm::Sgd,
            noise_time_scale: NoiseTimeScale::Eta,
        }
    }

    pub fn sgdm(eta: f64, gamma: f64, steps: usize, noise: Option<StableParams>) -> Self {
        Self {
            gamma,
            algorithm: Algorithm::Sgdm,
            ..Self::sgd(eta, steps, noise)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta", format!("must be > 0, got {}", self.eta)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("beta", format!("must be > 0, got {}", self.beta)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid("gamma", format!("must be >= 0, got {}", self.gamma)));
        }
        if self.algorithm == Algorithm::Sgdm && self.gamma <= 0.0 {
            return Err(Error::invalid("gamma", "SGDm requires gamma > 0"));
        }
        Ok(())
    }

    /// Law of the per-step increment `ζ ξ_{k+1}` actually added to the
    /// update (to `θ` for SGD, to `v` for SGDm).
    pub fn step_noise(&self) -> Option<StableParams> {
        let p = self.noise?;
        let mut factor = match self.noise_time_scale {
            NoiseTimeScale::Eta => self.eta.powf(1.0 / p.alpha()),
            NoiseTimeScale::Unit => 1.0,
        };
        if self.scale_match && self.algorithm == Algorithm::Sgdm {
            factor /= self.eta;
        }
        // factor > 0 and finite for validated eta, so this cannot fail
        p.rescaled(factor).ok()
    }
}

/// `(θ, v)`; `v` stays zero for SGD.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryState {
    pub theta: Vec<f64>,
    pub v: Vec<f64>,
}

impl TrajectoryState {
    pub fn zeros(d: usize) -> Self {
        Self {
            theta: vec![0.0; d],
            v: vec![0.0; d],
        }
    }

    pub fn new(theta: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if theta.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: theta.len(),
                got: v.len(),
            });
        }
        Ok(Self { theta, v })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// Euclidean distance between the stacked `(θ, v)` vectors.
    pub fn distance(&self, other: &TrajectoryState) -> f64 {
        self.theta
            .iter()
            .zip(&other.theta)
            .chain(self.v.iter().zip(&other.v))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// `θ` followed by `v`.
    pub fn stacked(&self) -> Vec<f64> {
        self.theta.iter().chain(&self.v).copied().collect()
    }
}

/// Per-example gradient callback: `(θ, x, out)` writes `∇_θ f(θ, x)` into `out`.
pub type GradientFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;

#[derive(Clone, Default)]
pub enum GradientModel {
    /// `f(θ, x) = ½ (θᵀx)²`, so `∇F̂ = (1/n) XᵀX θ`.
    #[default]
    Quadratic,
    Pluggable(Arc<GradientFn>),
}

impl fmt::Debug for GradientModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GradientModel::Quadratic => f.write_str("Quadratic"),
            GradientModel::Pluggable(_) => f.write_str("Pluggable(..)"),
        }
    }
}

impl GradientModel {
    pub fn pluggable<F>(f: F) -> Self
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        GradientModel::Pluggable(Arc::new(f))
    }

    fn gradient_into(&self, theta: &[f64], data: &Dataset, out: &mut [f64]) {
        match self {
            GradientModel::Quadratic => {
                let g = data.gram();
                // G is symmetric, so (Gθ)_i is column i dotted with θ.
                for (i, o) in out.iter_mut().enumerate() {
                    *o = g.column(i).iter().zip(theta).map(|(a, b)| a * b).sum();
                }
            }
            GradientModel::Pluggable(f) => {
                out.iter_mut().for_each(|o| *o = 0.0);
                let mut buf = vec![0.0; theta.len()];
                let mut x = vec![0.0; data.d()];
                for i in 0..data.n() {
                    for (j, xj) in x.iter_mut().enumerate() {
                        *xj = data.points[(i, j)];
                    }
                    f(theta, &x, &mut buf);
                    for (o, b) in out.iter_mut().zip(&buf) {
                        *o += b;
                    }
                }
                let n = data.n() as f64;
                out.iter_mut().for_each(|o| *o /= n);
            }
        }
    }
}

/// `∇F̂(θ, X) = (1/n) Σ ∇f(θ, x_i)`.
pub fn grad_empirical_risk(model: &GradientModel, theta: &[f64], data: &Dataset) -> Result<Vec<f64>> {
    data.check_dim(theta.len())?;
    let mut out = vec![0.0; theta.len()];
    model.gradient_into(theta, data, &mut out);
    Ok(out)
}

fn check_step_inputs(state: &TrajectoryState, data: &Dataset, noise: &[f64]) -> Result<()> {
    data.check_dim(state.theta.len())?;
    data.check_dim(state.v.len())?;
    data.check_dim(noise.len())
}

/// One SGDm step. `noise` is the full increment added to `v`.
pub fn sgdm_step(
    state: &TrajectoryState,
    cfg: &OptimizerConfig,
    model: &GradientModel,
    data: &Dataset,
    noise: &[f64],
    step_index: usize,
) -> Result<TrajectoryState> {
    check_step_inputs(state, data, noise)?;
    let mut next = state.clone();
    let mut grad = vec![0.0; state.dim()];
    sgdm_update(&mut next, cfg, model, data, noise, &mut grad);
    finite_or_diverged(next, step_index)
}

/// One SGD step. `noise` is added to `θ`.
pub fn sgd_step(
    state: &TrajectoryState,
    cfg: &OptimizerConfig,
    model: &GradientModel,
    data: &Dataset,
    noise: &[f64],
    step_index: usize,
) -> Result<TrajectoryState> {
    check_step_inputs(state, data, noise)?;
    let mut next = state.clone();
    let mut grad = vec![0.0; state.dim()];
    sgd_update(&mut next, cfg, model, data, noise, &mut grad);
    finite_or_diverged(next, step_index)
}

fn finite_or_diverged(state: TrajectoryState, step: usize) -> Result<TrajectoryState> {
    if state.is_finite() {
        Ok(state)
    } else {
        Err(Error::Diverged { step })
    }
}

fn sgdm_update(
    s: &mut TrajectoryState,
    cfg: &OptimizerConfig,
    model: &GradientModel,
    data: &Dataset,
    noise: &[f64],
    grad: &mut [f64],
) {
    model.gradient_into(&s.theta, data, grad);
    let (eta, decay) = (cfg.eta, 1.0 - cfg.eta * cfg.gamma);
    let drift = cfg.eta * cfg.beta;
    for i in 0..s.theta.len() {
        s.v[i] = decay * s.v[i] - drift * grad[i] + noise[i];
        s.theta[i] += eta * s.v[i];
    }
}

fn sgd_update(
    s: &mut TrajectoryState,
    cfg: &OptimizerConfig,
    model: &GradientModel,
    data: &Dataset,
    noise: &[f64],
    grad: &mut [f64],
) {
    model.gradient_into(&s.theta, data, grad);
    let drift = cfg.eta * cfg.beta;
    for i in 0..s.theta.len() {
        s.theta[i] += -drift * grad[i] + noise[i];
    }
}

/// Dispatches on `cfg.algorithm`.
pub fn step(
    state: &TrajectoryState,
    cfg: &OptimizerConfig,
    model: &GradientModel,
    data: &Dataset,
    noise: &[f64],
    step_index: usize,
) -> Result<TrajectoryState> {
    match cfg.algorithm {
        Algorithm::Sgd => sgd_step(state, cfg, model, data, noise, step_index),
        Algorithm::Sgdm => sgdm_step(state, cfg, model, data, noise, step_index),
    }
}

/// The affine one-step map of SGDm on the quadratic model, acting on the
/// stacked `(θ, v)`:
/// `[[I − η²βG, η(1−ηγ)I], [−ηβG, (1−ηγ)I]]`.
pub fn sgdm_transition_matrix(cfg: &OptimizerConfig, data: &Dataset) -> DMatrix<f64> {
    let d = data.d();
    let g = data.gram();
    let (eta, beta, decay) = (cfg.eta, cfg.beta, 1.0 - cfg.eta * cfg.gamma);
    let mut m = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            let id = if i == j { 1.0 } else { 0.0 };
            m[(i, j)] = id - eta * eta * beta * g[(i, j)];
            m[(d + i, j)] = -eta * beta * g[(i, j)];
        }
        m[(i, d + i)] = eta * decay;
        m[(d + i, d + i)] = decay;
    }
    m
}

/// Generator of per-step noise vectors for one chain.
pub(crate) struct NoiseSource {
    params: Option<StableParams>,
    rng: crate::rng::StreamRng,
}

impl NoiseSource {
    pub(crate) fn new(cfg: &OptimizerConfig, stream: RngStream) -> Self {
        Self {
            params: cfg.step_noise(),
            rng: stream.rng(),
        }
    }

    pub(crate) fn fill(&mut self, out: &mut [f64]) {
        match &self.params {
            Some(p) => p.sample_isotropic_into(&mut self.rng, out),
            None => out.iter_mut().for_each(|x| *x = 0.0),
        }
    }
}

fn check_run_inputs(init: &TrajectoryState, cfg: &OptimizerConfig, data: &Dataset) -> Result<()> {
    cfg.validate()?;
    data.check_dim(init.theta.len())?;
    data.check_dim(init.v.len())
}

/// Iterate the configured recursion for `cfg.steps` steps.
///
/// States after steps `k` with `k % record_every == 0` are recorded, and
/// the final state always is. `record_every = 0` records only the final
/// state.
pub fn run_trajectory(
    init: &TrajectoryState,
    cfg: &OptimizerConfig,
    model: &GradientModel,
    data: &Dataset,
    stream: RngStream,
    record_every: usize,
) -> Result<Vec<TrajectoryState>> {
    check_run_inputs(init, cfg, data)?;
    if cfg.steps == 0 {
        return Err(Error::invalid("steps", "must be >= 1"));
    }
    let mut recorded = Vec::new();
    let mut noise_src = NoiseSource::new(cfg, stream);
    let mut state = init.clone();
    let mut noise = vec![0.0; data.d()];
    let mut grad = vec![0.0; data.d()];
    for k in 1..=cfg.steps {
        noise_src.fill(&mut noise);
        match cfg.algorithm {
            Algorithm::Sgd => sgd_update(&mut state, cfg, model, data, &noise, &mut grad),
            Algorithm::Sgdm => sgdm_update(&mut state, cfg, model, data, &noise, &mut grad),
        }
        if !state.is_finite() {
            return Err(Error::Diverged { step: k });
        }
        if k == cfg.steps || (record_every > 0 && k % record_every == 0) {
            recorded.push(state.clone());
        }
    }
    Ok(recorded)
}

/// Final state only.
pub fn run_to_end(
    init: &TrajectoryState,
    cfg: &OptimizerConfig,
    model: &GradientModel,
    data: &Dataset,
    stream: RngStream,
) -> Result<TrajectoryState> {
    let mut states = run_trajectory(init, cfg, model, data, stream, 0)?;
    Ok(states.pop().expect("final state is always recorded"))
}

/// Drive the chains on `pair.base` and `pair.perturbed` with the same noise
/// realisation (synchronous coupling) for `steps` steps.
pub fn run_coupled_pair(
    pair: &NeighborPair,
    init: &TrajectoryState,
    cfg: &OptimizerConfig,
    model: &GradientModel,
    stream: RngStream,
    steps: usize,
) -> Result<(TrajectoryState, TrajectoryState)> {
    check_run_inputs(init, cfg, &pair.base)?;
    let d = pair.base.d();
    let mut noise_src = NoiseSource::new(cfg, stream);
    let mut a = init.clone();
    let mut b = init.clone();
    let mut noise = vec![0.0; d];
    let mut grad = vec![0.0; d];
    for k in 1..=steps {
        noise_src.fill(&mut noise);
        match cfg.algorithm {
            Algorithm::Sgd => {
                sgd_update(&mut a, cfg, model, &pair.base, &noise, &mut grad);
                sgd_update(&mut b, cfg, model, &pair.perturbed, &noise, &mut grad);
            }
            Algorithm::Sgdm => {
                sgdm_update(&mut a, cfg, model, &pair.base, &noise, &mut grad);
                sgdm_update(&mut b, cfg, model, &pair.perturbed, &noise, &mut grad);
            }
        }
        if !a.is_finite() || !b.is_finite() {
            log::debug!("coupled pair diverged at step {k}");
            return Err(Error::Diverged { step: k });
        }
    }
    Ok((a, b))
}
