//! Symmetric α-stable sampling.
//!
//! Scalar draws use the symmetric Chambers–Mallows–Stuck construction.
//! Rotationally symmetric vectors use Gaussian subordination:
//! `X = scale · sqrt(2 S) · Z` with `Z ~ N(0, I_d)` and `S` a positive
//! (α/2)-stable variable with Laplace transform `E exp(-s S) = exp(-s^{α/2})`.
//! Conditioning on `S` gives `E exp(i<u,X>) = E exp(-S scale² |u|²)
//! = exp(-scale^α |u|^α)`, i.e. the isotropic law, which is *not* the same
//! as drawing each coordinate independently.

use std::f64::consts::PI;

use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Tail index and scale of a symmetric α-stable law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StableParams {
    alpha: f64,
    scale: f64,
}

impl StableParams {
    /// `1 < alpha <= 2` and `scale > 0`. `alpha = 2` is the Gaussian
    /// `N(0, 2 scale²)`.
    pub fn new(alpha: f64, scale: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(Error::AlphaOutOfRange {
                value: alpha,
                range: "(1,2]",
            });
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid("scale", format!("must be > 0, got {scale}")));
        }
        Ok(Self { alpha, scale })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Same tail index, scale multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.alpha, self.scale * factor)
    }

    /// `exp(-scale^α · u^α)`.
    pub fn char_fn(&self, u_norm: f64) -> f64 {
        char_fn(self, u_norm)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.scale * standard_sas(self.alpha, rng)
    }

    /// Fill `out` with one rotationally symmetric draw in `out.len()` dimensions.
    pub fn sample_isotropic_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let s = positive_stable(self.alpha / 2.0, rng);
        let radius = self.scale * (2.0 * s).sqrt();
        for x in out.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x = radius * z;
        }
    }
}

/// Standard SαS(1) via Chambers–Mallows–Stuck, symmetric case.
fn standard_sas<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    let v = PI * (u - 0.5);
    let w: f64 = rng.sample(Exp1);
    if alpha == 2.0 {
        return 2.0 * v.sin() * w.sqrt();
    }
    let a = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha);
    a * b
}

/// Positive stable variable with `E exp(-s S) = exp(-s^a)`, `0 < a <= 1`
/// (Kanter's representation). `a = 1` is the point mass at 1.
fn positive_stable<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a >= 1.0 {
        return 1.0;
    }
    let u: f64 = rng.sample(Open01);
    let v = PI * u;
    let w: f64 = rng.sample(Exp1);
    let lead = (a * v).sin() / v.sin().powf(1.0 / a);
    lead * (((1.0 - a) * v).sin() / w).powf((1.0 - a) / a)
}

/// One scalar SαS(scale) variate.
pub fn sample_scalar_sas<R: Rng + ?Sized>(params: &StableParams, rng: &mut R) -> f64 {
    params.sample(rng)
}

/// One `d`-dimensional rotationally symmetric α-stable vector.
pub fn sample_isotropic_stable<R: Rng + ?Sized>(
    params: &StableParams,
    d: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::invalid("d", "dimension must be >= 1"));
    }
    let mut out = vec![0.0; d];
    params.sample_isotropic_into(rng, &mut out);
    Ok(out)
}

/// Draw `count` scalar variates from a stream.
pub fn sample_scalar_batch(params: &StableParams, count: usize, stream: RngStream) -> Vec<f64> {
    let mut rng = stream.rng();
    (0..count).map(|_| params.sample(&mut rng)).collect()
}

/// Characteristic function of SαS(scale) at `|u| = u_norm`.
pub fn char_fn(params: &StableParams, u_norm: f64) -> f64 {
    debug_assert!(u_norm >= 0.0);
    (-(params.scale * u_norm).powf(params.alpha)).exp()
}

/// Real part of the empirical characteristic function, `mean cos(u x)`.
pub fn empirical_char_fn(samples: &[f64], u: f64) -> f64 {
    samples.iter().map(|x| (u * x).cos()).sum::<f64>() / samples.len() as f64
}

/// Real part of the empirical characteristic function of vector samples
/// stored row-major with `d` columns.
pub fn empirical_char_fn_vec(samples: &[f64], d: usize, u: &[f64]) -> f64 {
    assert_eq!(u.len(), d);
    let rows = samples.len() / d;
    let sum: f64 = samples
        .chunks_exact(d)
        .map(|x| x.iter().zip(u).map(|(a, b)| a * b).sum::<f64>().cos())
        .sum();
    sum / rows as f64
}

pub const HILL_MIN_SAMPLES: usize = 100;

/// Hill estimate of the tail index from the top `k_fraction` order
/// statistics of `|samples|`.
pub fn tail_index_estimate(samples: &[f64], k_fraction: f64) -> Result<f64> {
    if samples.len() < HILL_MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: HILL_MIN_SAMPLES,
            got: samples.len(),
        });
    }
    if !(k_fraction > 0.0 && k_fraction <= 0.25) {
        return Err(Error::invalid(
            "k_fraction",
            format!("must be in (0, 0.25], got {k_fraction}"),
        ));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("samples"));
    }
    let mut abs: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    let n = abs.len();
    let k = ((k_fraction * n as f64).floor() as usize).max(2);
    // Partition so that abs[..k] holds the k largest and abs[k] is the (k+1)-th.
    abs.select_nth_unstable_by(k, |a, b| b.total_cmp(a));
    let threshold = abs[k];
    if threshold <= 0.0 {
        return Err(Error::invalid("samples", "tail threshold is zero"));
    }
    let sum_log: f64 = abs[..k].iter().map(|x| (x / threshold).ln()).sum();
    Ok(k as f64 / sum_log)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic KS rejection threshold at significance `level`.
pub fn ks_critical_value(n: usize, m: usize, level: f64) -> f64 {
    let c = (-(level / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Tolerance used by the characteristic-function checks: `3/sqrt(N) + 0.005`.
pub fn char_fn_tolerance(n: usize) -> f64 {
    3.0 / (n as f64).sqrt() + 0.005
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub observed: f64,
    pub expected: f64,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckLine {
    fn new(name: String, observed: f64, expected: f64, tolerance: f64) -> Self {
        let deviation = (observed - expected).abs();
        Self {
            name,
            observed,
            expected,
            deviation,
            tolerance,
            pass: deviation < tolerance,
        }
    }
}

/// Settings for the sampler validation battery.
#[derive(Debug, Clone, Serialize)]
pub struct NoiseCheckConfig {
    pub alpha: f64,
    pub scale: f64,
    pub samples: usize,
    pub dim: usize,
    pub u_grid: Vec<f64>,
    pub k_fraction: f64,
    pub hill_tolerance: f64,
}

impl NoiseCheckConfig {
    pub const MIN_SAMPLES: usize = 10_000;

    pub fn new(alpha: f64, samples: usize) -> Self {
        Self {
            alpha,
            scale: 1.0,
            samples,
            dim: 4,
            u_grid: vec![0.25, 0.5, 1.0, 2.0],
            k_fraction: 0.002,
            hill_tolerance: 0.15,
        }
    }
}

/// Characteristic-function grid, isotropy and tail-index checks for one α.
pub fn noise_check(cfg: &NoiseCheckConfig, stream: RngStream) -> Result<Vec<CheckLine>> {
    let params = StableParams::new(cfg.alpha, cfg.scale)?;
    if cfg.samples < NoiseCheckConfig::MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: NoiseCheckConfig::MIN_SAMPLES,
            got: cfg.samples,
        });
    }
    if cfg.dim < 2 {
        return Err(Error::invalid("dim", "isotropy check needs dim >= 2"));
    }
    let tol = char_fn_tolerance(cfg.samples);
    let mut lines = Vec::new();

    let scalar = sample_scalar_batch(&params, cfg.samples, stream.derive(0));
    for &u in &cfg.u_grid {
        lines.push(CheckLine::new(
            format!("charfn_scalar_u={u}"),
            empirical_char_fn(&scalar, u),
            params.char_fn(u),
            tol,
        ));
    }

    let d = cfg.dim;
    let mut rng = stream.derive(1).rng();
    let mut vecs = vec![0.0; cfg.samples * d];
    for row in vecs.chunks_exact_mut(d) {
        params.sample_isotropic_into(&mut rng, row);
    }
    for &u in &cfg.u_grid {
        let mut axis = vec![0.0; d];
        axis[0] = u;
        let mut diag = vec![0.0; d];
        diag[0] = u / 2f64.sqrt();
        diag[1] = u / 2f64.sqrt();
        let along_axis = empirical_char_fn_vec(&vecs, d, &axis);
        let along_diag = empirical_char_fn_vec(&vecs, d, &diag);
        lines.push(CheckLine::new(
            format!("charfn_isotropic_u={u}"),
            along_axis,
            params.char_fn(u),
            tol,
        ));
        lines.push(CheckLine::new(
            format!("isotropy_u={u}"),
            along_axis,
            along_diag,
            tol,
        ));
    }

    if cfg.alpha < 2.0 {
        let est = tail_index_estimate(&scalar, cfg.k_fraction)?;
        lines.push(CheckLine::new(
            "hill_tail_index".into(),
            est,
            cfg.alpha,
            cfg.hill_tolerance,
        ));
    }
    Ok(lines)
}
