//! Closed-form spectra and stability/generalization bounds for the
//! quadratic loss.
//!
//! With `G = (1/n) XᵀX` and eigenvalues `κ_i`, the momentum drift matrix
//! `A = [[0, −I], [G, γI]]` satisfies `A Aᵀ ≅ ⊕_i T_i` with
//! `T_i = [[1, −γ], [−γ, γ² + κ_i²]]`, whose eigenvalues are
//!
//! ```text
//! μ_{i,±} = (γ² + κ_i² + 1 ± sqrt((γ² + κ_i² + 1)² − 4κ_i²)) / 2.
//! ```
//!
//! The singular values of `A` are `sqrt(μ_{i,±})`. Since `T_i − I` has a
//! non-positive determinant, `μ_{i,−} ≤ 1` and, with `μ_− μ_+ = κ²`,
//! `μ_{i,−} ≤ κ_i²`. Hence `σ_min ≤ θ_min`.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::dynamics::{Dataset, NeighborPair};
use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigen, sym2_eigen};

/// Gram matrices with a smallest eigenvalue at or below this are singular.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Largest dimension accepted by [`gram_eigenvalues`].
pub const MAX_GRAM_DIM: usize = 4096;

/// Eigenvalues of `(1/n) XᵀX`, ascending, clamped at zero.
pub fn gram_eigenvalues(data: &Dataset) -> Result<Vec<f64>> {
    if data.d() > MAX_GRAM_DIM {
        return Err(Error::TooLarge {
            what: "d",
            got: data.d(),
            limit: MAX_GRAM_DIM,
        });
    }
    let g = data.gram();
    let eig = jacobi_eigen(g)?;
    let gnorm = g.norm();
    let residual = eig.max_residual(g);
    if residual > 1e-10 * gnorm.max(f64::MIN_POSITIVE) {
        // Jacobi converges far below this; reaching here means bad input.
        return Err(Error::invalid(
            "data",
            format!("eigensolver residual {residual:.3e} exceeds 1e-10 |G|"),
        ));
    }
    Ok(eig
        .values
        .into_iter()
        .map(|k| {
            debug_assert!(k >= -1e-12 * gnorm.max(1.0));
            k.max(0.0)
        })
        .collect())
}

/// `(μ_−, μ_+)`, the eigenvalues of `[[1, −γ], [−γ, γ² + κ²]]`.
pub fn mu_eigenvalues(kappa: f64, gamma: f64) -> Result<(f64, f64)> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", format!("must be > 0, got {gamma}")));
    }
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::invalid("kappa", format!("must be >= 0, got {kappa}")));
    }
    Ok(mu_pair(kappa, gamma))
}

/// No validation; `gamma = 0` is allowed here as the limiting case.
fn mu_pair(kappa: f64, gamma: f64) -> (f64, f64) {
    let g2 = gamma * gamma;
    let k2 = kappa * kappa;
    let trace = g2 + k2 + 1.0;
    // (trace² − 4κ²) factored so it is non-negative term by term
    let disc = (g2 + (kappa - 1.0).powi(2)) * (g2 + (kappa + 1.0).powi(2));
    debug_assert!(disc >= 0.0);
    let mu_plus = 0.5 * (trace + disc.sqrt());
    // κ²/μ_+ avoids the cancellation in (trace − sqrt(disc))/2
    let mu_minus = if mu_plus > 0.0 { k2 / mu_plus } else { 0.0 };
    (mu_minus, mu_plus)
}

/// Per-dataset spectral quantities.
#[derive(Debug, Clone, Serialize)]
pub struct DatasetSpectrum {
    pub kappa: Vec<f64>,
    pub mu_minus: Vec<f64>,
    pub mu_plus: Vec<f64>,
}

impl DatasetSpectrum {
    pub fn new(data: &Dataset, gamma: f64) -> Result<Self> {
        let kappa = gram_eigenvalues(data)?;
        let mut mu_minus = Vec::with_capacity(kappa.len());
        let mut mu_plus = Vec::with_capacity(kappa.len());
        for &k in &kappa {
            let (lo, hi) = mu_eigenvalues(k, gamma)?;
            mu_minus.push(lo);
            mu_plus.push(hi);
        }
        Ok(Self {
            kappa,
            mu_minus,
            mu_plus,
        })
    }

    pub fn theta_min(&self) -> f64 {
        self.kappa.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sigma_min(&self) -> f64 {
        self.mu_minus
            .iter()
            .map(|m| m.sqrt())
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralSummary {
    pub gamma: f64,
    pub base: DatasetSpectrum,
    pub perturbed: DatasetSpectrum,
    pub theta_min: f64,
    pub sigma_min: f64,
}

/// Spectra of both datasets plus the pairwise minima. Errors if either Gram
/// matrix is singular.
pub fn spectral_summary(pair: &NeighborPair, gamma: f64) -> Result<SpectralSummary> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", format!("must be > 0, got {gamma}")));
    }
    let base = DatasetSpectrum::new(&pair.base, gamma)?;
    let perturbed = DatasetSpectrum::new(&pair.perturbed, gamma)?;
    let theta_min = base.theta_min().min(perturbed.theta_min());
    if theta_min <= SINGULAR_TOL {
        return Err(Error::SingularGram {
            min_eigenvalue: theta_min,
        });
    }
    let sigma_min = base.sigma_min().min(perturbed.sigma_min());
    Ok(SpectralSummary {
        gamma,
        base,
        perturbed,
        theta_min,
        sigma_min,
    })
}

/// `(σ_min, θ_min)` for a neighbouring pair.
pub fn sigma_theta_min(pair: &NeighborPair, gamma: f64) -> Result<(f64, f64)> {
    let s = spectral_summary(pair, gamma)?;
    Ok((s.sigma_min, s.theta_min))
}

/// `x xᵀ − x̂ x̂ᵀ = σ1 v1 v1ᵀ + σ2 v2 v2ᵀ` with `σ1 ≥ σ2`.
#[derive(Debug, Clone, Serialize)]
pub struct RankTwoPerturbation {
    pub sigma1: f64,
    pub sigma2: f64,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    /// `x xᵀ = x̂ x̂ᵀ`; both weights are zero.
    pub degenerate: bool,
}

impl RankTwoPerturbation {
    pub fn abs_sigma_sum(&self) -> f64 {
        (self.sigma1 + self.sigma2).abs()
    }

    /// `σ1 v1 v1ᵀ + σ2 v2 v2ᵀ` as a dense row-major `d × d` array.
    pub fn reconstruct(&self) -> Vec<f64> {
        let d = self.v1.len();
        let mut m = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                m[i * d + j] =
                    self.sigma1 * self.v1[i] * self.v1[j] + self.sigma2 * self.v2[i] * self.v2[j];
            }
        }
        m
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Any unit vector orthogonal to unit `u`; zero when `d = 1`.
fn orthogonal_unit(u: &[f64]) -> Vec<f64> {
    let d = u.len();
    if d < 2 {
        return vec![0.0; d];
    }
    // the coordinate axis least aligned with u
    let k = (0..d)
        .min_by(|&i, &j| u[i].abs().total_cmp(&u[j].abs()))
        .unwrap_or(0);
    let mut w: Vec<f64> = u.iter().map(|&ui| -u[k] * ui).collect();
    w[k] += 1.0;
    let n = norm(&w);
    w.iter().map(|x| x / n).collect()
}

/// Decompose `x xᵀ − x̂ x̂ᵀ` by solving the 2×2 problem on `span{x, x̂}`.
pub fn rank_two_decomposition(x: &[f64], x_hat: &[f64]) -> Result<RankTwoPerturbation> {
    let d = x.len();
    if x_hat.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x_hat.len(),
        });
    }
    if d == 0 {
        return Err(Error::Empty("vector"));
    }
    if x.iter().chain(x_hat).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("perturbation vectors"));
    }
    let (nx, nh) = (norm(x), norm(x_hat));
    let scale = nx.max(nh);
    let zero = |v1: Vec<f64>| {
        let v2 = orthogonal_unit(&v1);
        RankTwoPerturbation {
            sigma1: 0.0,
            sigma2: 0.0,
            v1,
            v2,
            degenerate: true,
        }
    };
    if scale == 0.0 {
        let mut e1 = vec![0.0; d];
        e1[0] = 1.0;
        return Ok(zero(e1));
    }

    // Orthonormal basis (e1, e2) with x = a e1, x̂ = b e1 + c e2.
    let (first, second, swapped) = if nx >= nh { (x, x_hat, false) } else { (x_hat, x, true) };
    let nf = norm(first);
    let e1: Vec<f64> = first.iter().map(|v| v / nf).collect();
    let b = dot(second, &e1);
    let resid: Vec<f64> = second.iter().zip(&e1).map(|(s, e)| s - b * e).collect();
    let c = norm(&resid);
    let collinear = c <= 1e-14 * scale;
    let e2 = if collinear {
        orthogonal_unit(&e1)
    } else {
        resid.iter().map(|r| r / c).collect()
    };
    let c = if collinear { 0.0 } else { c };
    // first firstᵀ − second secondᵀ in the (e1, e2) basis
    let sign = if swapped { -1.0 } else { 1.0 };
    let p = sign * (nf * nf - b * b);
    let q = sign * (-b * c);
    let r = sign * (-c * c);
    if p == 0.0 && q == 0.0 && r == 0.0 {
        return Ok(zero(e1));
    }
    let (l1, l2, u1, u2) = sym2_eigen(p, q, r);
    let lift = |u: [f64; 2]| -> Vec<f64> {
        e1.iter().zip(&e2).map(|(a, b)| u[0] * a + u[1] * b).collect()
    };
    let mut v1 = lift(u1);
    let mut v2 = lift(u2);
    if d == 1 {
        v2 = vec![0.0];
    }
    // snap rounding-level weights to zero in the rank-one case
    let (mut s1, mut s2) = (l1, l2);
    let tiny = 1e-14 * scale * scale;
    if s1.abs() <= tiny {
        s1 = 0.0;
    }
    if s2.abs() <= tiny {
        s2 = 0.0;
    }
    if d == 1 {
        v1 = vec![1.0];
        s1 = x[0] * x[0] - x_hat[0] * x_hat[0];
        s2 = 0.0;
    }
    Ok(RankTwoPerturbation {
        sigma1: s1,
        sigma2: s2,
        v1,
        v2,
        degenerate: s1 == 0.0 && s2 == 0.0,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BallVolume {
    pub volume: f64,
    pub ln_volume: f64,
}

/// `V_d = π^{d/2} / Γ(d/2 + 1)`, computed in log space. `volume` underflows
/// to 0 for very large `d`; `ln_volume` stays accurate.
pub fn unit_ball_volume(d: usize) -> Result<BallVolume> {
    if d == 0 || d > 2000 {
        return Err(Error::invalid("d", format!("must be in [1, 2000], got {d}")));
    }
    let half = d as f64 / 2.0;
    let ln_volume = half * std::f64::consts::PI.ln() - ln_gamma(half + 1.0);
    Ok(BallVolume {
        volume: ln_volume.exp(),
        ln_volume,
    })
}

/// `h(x) = (1 − e^{−x})/x + e^{−x}(1/x + 2/x² + 2/x³)`.
pub fn decay_factor(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::invalid("x", format!("must be > 0, got {x}")));
    }
    let first = -(-x).exp_m1() / x;
    let inv = 1.0 / x;
    let second = (-x).exp() * (inv + 2.0 * inv * inv + 2.0 * inv * inv * inv);
    Ok(first + second)
}

/// Inputs shared by the closed-form bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    /// Lipschitz constant of the surrogate loss.
    pub lipschitz: f64,
    pub zeta: f64,
    pub abs_sigma_sum: f64,
    pub y0_norm: f64,
    pub n: usize,
    pub d: usize,
    pub alpha: f64,
    pub p: f64,
    /// Stand-in for the unspecified universal constants `C` and `C(p)`.
    pub c_universal: f64,
}

impl Default for BoundInputs {
    fn default() -> Self {
        Self {
            lipschitz: 1.0,
            zeta: 1.0,
            abs_sigma_sum: 1.0,
            y0_norm: 1.0,
            n: 1,
            d: 1,
            alpha: 1.5,
            p: 1.0,
            c_universal: 1.0,
        }
    }
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0 && self.alpha < 2.0) {
            return Err(Error::AlphaOutOfRange {
                value: self.alpha,
                range: "(1,2)",
            });
        }
        if !(self.p >= 1.0 && self.p < self.alpha) {
            return Err(Error::invalid(
                "p",
                format!("must satisfy 1 <= p < alpha = {}, got {}", self.alpha, self.p),
            ));
        }
        if self.n == 0 {
            return Err(Error::invalid("n", "must be >= 1"));
        }
        for (name, v) in [
            ("lipschitz", self.lipschitz),
            ("zeta", self.zeta),
            ("abs_sigma_sum", self.abs_sigma_sum),
            ("y0_norm", self.y0_norm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(self.c_universal > 0.0 && self.c_universal.is_finite()) {
            return Err(Error::invalid("c_universal", "must be > 0"));
        }
        Ok(())
    }

    fn prefactor(&self) -> f64 {
        self.zeta * self.abs_sigma_sum * self.y0_norm / self.n as f64
    }
}

fn check_rate(rate_min: f64) -> Result<()> {
    if !(rate_min > 0.0 && rate_min.is_finite()) {
        return Err(Error::invalid("rate_min", format!("must be > 0, got {rate_min}")));
    }
    Ok(())
}

/// Generalization bound for a Lipschitz surrogate. `rate_min` is `σ_min`
/// for SGDm and `θ_min` for SGD.
pub fn bound_generalization(inputs: &BoundInputs, rate_min: f64) -> Result<f64> {
    inputs.validate()?;
    check_rate(rate_min)?;
    let vd = unit_ball_volume(inputs.d)?;
    let alpha = inputs.alpha;
    let first = 4.0 * (0.5 * vd.ln_volume).exp() / (rate_min.powf(1.5) * (2.0 - alpha).sqrt());
    let second = inputs.c_universal * vd.volume / (alpha - 1.0) * decay_factor(rate_min)?;
    Ok(inputs.lipschitz * inputs.prefactor() * (first + second))
}

/// `p`-Wasserstein stability bound between the two stationary laws.
pub fn bound_wasserstein_p(inputs: &BoundInputs, rate_min: f64) -> Result<f64> {
    inputs.validate()?;
    check_rate(rate_min)?;
    let vd = unit_ball_volume(inputs.d)?;
    let (alpha, p) = (inputs.alpha, inputs.p);
    let first = 4.0 * (0.5 * vd.ln_volume).exp() / (rate_min.powf(1.5) * (2.0 - alpha).sqrt());
    let second = inputs.c_universal
        * (vd.volume / (alpha - p)).powf(1.0 / p)
        * decay_factor(rate_min)?.powf(1.0 / p);
    Ok(inputs.prefactor() * (first + second))
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaRow {
    pub gamma: f64,
    pub sigma_min: f64,
    pub theta_min: f64,
    pub bound_sgdm: f64,
    pub bound_sgd: f64,
}

/// Bounds for SGDm over a friction grid alongside the (γ-free) SGD bound.
pub fn gamma_sweep(pair: &NeighborPair, gammas: &[f64], inputs: &BoundInputs) -> Result<Vec<GammaRow>> {
    if gammas.is_empty() {
        return Err(Error::Empty("gamma list"));
    }
    if gammas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("gammas", "must be strictly increasing"));
    }
    if let Some(g) = gammas.iter().find(|g| !(**g > 0.0)) {
        return Err(Error::invalid("gammas", format!("entries must be > 0, got {g}")));
    }
    let first = spectral_summary(pair, gammas[0])?;
    let theta_min = first.theta_min;
    let bound_sgd = bound_generalization(inputs, theta_min)?;
    let kappas: Vec<f64> = first
        .base
        .kappa
        .iter()
        .chain(&first.perturbed.kappa)
        .copied()
        .collect();
    gammas
        .iter()
        .map(|&gamma| {
            let sigma_min = kappas
                .iter()
                .map(|&k| mu_pair(k, gamma).0.sqrt())
                .fold(f64::INFINITY, f64::min);
            Ok(GammaRow {
                gamma,
                sigma_min,
                theta_min,
                bound_sgdm: bound_generalization(inputs, sigma_min)?,
                bound_sgd,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_pair() -> NeighborPair {
        let s = 2f64.sqrt();
        NeighborPair::identical(Dataset::from_rows(&[vec![s, 0.0], vec![0.0, s]]).unwrap())
    }

    #[test]
    fn gram_eigenvalue_examples() {
        let x = Dataset::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let k = gram_eigenvalues(&x).unwrap();
        assert!((k[0] - 0.5).abs() < 1e-15 && (k[1] - 0.5).abs() < 1e-15);
        let x = Dataset::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let k = gram_eigenvalues(&x).unwrap();
        assert!(k[0].abs() < 1e-12);
        assert!((k[1] - 25.0).abs() < 1e-12);
    }

    #[test]
    fn mu_examples() {
        let (lo, hi) = mu_eigenvalues(1.0, 1.0).unwrap();
        let s5 = 5f64.sqrt();
        assert!((lo - (3.0 - s5) / 2.0).abs() < 1e-15);
        assert!((hi - (3.0 + s5) / 2.0).abs() < 1e-15);
        // γ → 0 with κ = 1: μ_- = 1 = κ²
        let (lo0, _) = mu_pair(1.0, 0.0);
        assert!((lo0 - 1.0).abs() < 1e-15);
        assert!(mu_eigenvalues(1.0, 0.0).is_err());
    }

    #[test]
    fn sigma_theta_identity_fixture() {
        let (sigma, theta) = sigma_theta_min(&identity_pair(), 1.0).unwrap();
        assert!((theta - 1.0).abs() < 1e-14);
        assert!((sigma - ((3.0 - 5f64.sqrt()) / 2.0).sqrt()).abs() < 1e-14);
        assert!((sigma - 0.6180339887498949).abs() < 1e-12);
    }

    #[test]
    fn singular_gram_rejected() {
        let x = Dataset::from_rows(&[vec![1.0, 2.0, 3.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let pair = NeighborPair::identical(x);
        assert!(matches!(sigma_theta_min(&pair, 1.0), Err(Error::SingularGram { .. })));
    }

    #[test]
    fn rank_two_examples() {
        let r = rank_two_decomposition(&[2.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert!((r.sigma1 - 3.0).abs() < 1e-14 && r.sigma2 == 0.0);
        assert!((r.v1[0].abs() - 1.0).abs() < 1e-14);
        assert!(!r.degenerate);

        let r = rank_two_decomposition(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((r.sigma1 - 1.0).abs() < 1e-14);
        assert!((r.sigma2 + 1.0).abs() < 1e-14);
        assert!((r.sigma1 + r.sigma2).abs() < 1e-14);

        let r = rank_two_decomposition(&[1.0, 2.0], &[-1.0, -2.0]).unwrap();
        assert!(r.degenerate);
        let r = rank_two_decomposition(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!(r.degenerate && r.sigma1 == 0.0 && r.sigma2 == 0.0);
    }

    #[test]
    fn rank_two_one_dimensional() {
        let r = rank_two_decomposition(&[3.0], &[1.0]).unwrap();
        assert_eq!(r.sigma1, 8.0);
        assert_eq!(r.reconstruct(), vec![8.0]);
    }

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(1).unwrap().volume - 2.0).abs() < 1e-14);
        assert!((unit_ball_volume(2).unwrap().volume - std::f64::consts::PI).abs() < 1e-14);
        let v3 = unit_ball_volume(3).unwrap().volume;
        assert!((v3 - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-12 * v3);
        let big = unit_ball_volume(2000).unwrap();
        assert!(big.ln_volume < -3000.0);
        assert!(unit_ball_volume(0).is_err());
    }

    #[test]
    fn decay_factor_values() {
        // (1 − e^{-1}) + 5 e^{-1}
        let e = (-1f64).exp();
        let want = 1.0 - e + 5.0 * e;
        assert!((decay_factor(1.0).unwrap() - want).abs() < 1e-15);
        assert!((decay_factor(1.0).unwrap() - 2.4715177646857693).abs() < 1e-10);
        assert!(decay_factor(10.0).unwrap() < decay_factor(1.0).unwrap());
        assert!(decay_factor(0.0).is_err());
        assert!(decay_factor(-1.0).is_err());
        assert!(decay_factor(1e-8).unwrap() > 1e20);
        let grid: Vec<f64> = (1..=100).map(|i| decay_factor(i as f64 / 10.0).unwrap()).collect();
        assert!(grid.windows(2).all(|w| w[1] < w[0]));
    }

    fn example_inputs() -> BoundInputs {
        BoundInputs {
            n: 100,
            d: 2,
            alpha: 1.5,
            ..BoundInputs::default()
        }
    }

    #[test]
    fn generalization_bound_point_value() {
        // (1/100)·(4 sqrt(π)/sqrt(0.5) + (π/0.5)·h(1))
        let pi = std::f64::consts::PI;
        let h1 = 1.0 - (-1f64).exp() + 5.0 * (-1f64).exp();
        let want = (4.0 * pi.sqrt() / 0.5f64.sqrt() + pi / 0.5 * h1) / 100.0;
        let got = bound_generalization(&example_inputs(), 1.0).unwrap();
        assert!((got - want).abs() < 1e-14);
        // rounded hand evaluation; the exact value is 0.2555552
        assert!((got - 0.255545).abs() < 2e-5);
        assert!((got - 0.2555552).abs() < 1e-7);
    }

    #[test]
    fn bound_zero_when_trace_preserved() {
        let inputs = BoundInputs {
            abs_sigma_sum: 0.0,
            ..example_inputs()
        };
        assert_eq!(bound_generalization(&inputs, 0.3).unwrap(), 0.0);
        assert_eq!(bound_wasserstein_p(&inputs, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn bound_alpha_range() {
        for alpha in [1.0, 2.0, 0.5] {
            let inputs = BoundInputs {
                alpha,
                ..example_inputs()
            };
            assert!(matches!(
                bound_generalization(&inputs, 1.0),
                Err(Error::AlphaOutOfRange { .. })
            ));
        }
        let inputs = BoundInputs {
            p: 1.5,
            ..example_inputs()
        };
        assert!(bound_wasserstein_p(&inputs, 1.0).is_err());
    }

    #[test]
    fn wasserstein_p1_matches_generalization_over_l() {
        let inputs = BoundInputs {
            lipschitz: 3.5,
            zeta: 0.7,
            d: 5,
            ..example_inputs()
        };
        let g = bound_generalization(&inputs, 0.4).unwrap();
        let w = bound_wasserstein_p(&inputs, 0.4).unwrap();
        assert!((g / 3.5 - w).abs() < 1e-12 * w);
    }

    #[test]
    fn wasserstein_p_blows_up_near_alpha() {
        let at = |p: f64| {
            bound_wasserstein_p(
                &BoundInputs {
                    p,
                    ..example_inputs()
                },
                1.0,
            )
            .unwrap()
        };
        assert!(at(1.4999) > 10.0 * at(1.0));
        assert!(at(1.49999) > at(1.4999));
    }

    #[test]
    fn gamma_sweep_single_and_ordering() {
        let pair = identity_pair();
        let inputs = example_inputs();
        let rows = gamma_sweep(&pair, &[1.0], &inputs).unwrap();
        assert_eq!(rows.len(), 1);
        let (s, t) = sigma_theta_min(&pair, 1.0).unwrap();
        assert_eq!(rows[0].sigma_min, s);
        assert_eq!(rows[0].theta_min, t);
        assert_eq!(rows[0].bound_sgdm, bound_generalization(&inputs, s).unwrap());

        let rows = gamma_sweep(&pair, &[0.5, 1.0, 2.0, 4.0], &inputs).unwrap();
        assert!(rows.windows(2).all(|w| w[1].sigma_min < w[0].sigma_min));
        assert!(rows.iter().all(|r| r.bound_sgdm >= r.bound_sgd));
        assert!(gamma_sweep(&pair, &[], &inputs).is_err());
        assert!(gamma_sweep(&pair, &[2.0, 1.0], &inputs).is_err());
    }
}
