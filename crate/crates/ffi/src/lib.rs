//! C ABI for the htlab library.
//!
//! Every fallible function returns an [`HtlabStatus`] and writes results
//! through out-pointers. On failure a message is available from
//! [`htlab_last_error_message`] on the calling thread. Handles are opaque
//! and must be released with the matching `_free` function.
//!
//! Arrays are passed as pointer plus length; multi-dimensional data is
//! row-major.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use htlab::dynamics::{
    run_coupled_pair, run_to_end, Algorithm, Dataset, GradientModel, NeighborPair, NoiseTimeScale,
    OptimizerConfig, TrajectoryState,
};
use htlab::quadratic_theory::{
    bound_generalization, bound_wasserstein_p, decay_factor, gram_eigenvalues, mu_eigenvalues,
    rank_two_decomposition, sigma_theta_min, unit_ball_volume, BoundInputs,
};
use htlab::wasserstein::{sliced_w1, w1_exact_1d, wp_exact_small, EmpiricalMeasure};
use htlab::{Error, RngStream, StableParams};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HtlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Singular = 4,
    Diverged = 5,
    TooLarge = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HtlabAlgorithm {
    Sgd = 0,
    Sgdm = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HtlabNoiseTimeScale {
    /// Per-step scale `zeta * eta^(1/alpha)`.
    Eta = 0,
    /// Per-step scale `zeta`.
    Unit = 1,
}

/// Optimizer settings. `zeta = 0` disables the noise.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HtlabOptimizerConfig {
    pub algorithm: HtlabAlgorithm,
    pub eta: f64,
    pub gamma: f64,
    pub beta: f64,
    pub steps: usize,
    pub alpha: f64,
    pub zeta: f64,
    pub scale_match: bool,
    pub noise_time_scale: HtlabNoiseTimeScale,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HtlabBoundInputs {
    pub lipschitz: f64,
    pub zeta: f64,
    pub abs_sigma_sum: f64,
    pub y0_norm: f64,
    pub n: usize,
    pub d: usize,
    pub alpha: f64,
    pub p: f64,
    pub c_universal: f64,
}

/// Opaque training set.
pub struct HtlabDataset {
    inner: Dataset,
}

/// Opaque pair of datasets differing in one row.
pub struct HtlabPair {
    inner: NeighborPair,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(HtlabStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::DimensionMismatch { .. } => HtlabStatus::DimensionMismatch,
            Error::SingularGram { .. } => HtlabStatus::Singular,
            Error::Diverged { .. } => HtlabStatus::Diverged,
            Error::TooLarge { .. } => HtlabStatus::TooLarge,
            _ => HtlabStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> HtlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            HtlabStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            HtlabStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(HtlabStatus::NullPointer, format!("null pointer: {what}"))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn checked_len(a: usize, b: usize) -> Result<usize, Failure> {
    a.checked_mul(b)
        .ok_or_else(|| Failure(HtlabStatus::TooLarge, "size overflow".into()))
}

impl HtlabOptimizerConfig {
    fn to_config(self) -> Result<OptimizerConfig, Failure> {
        let noise = if self.zeta == 0.0 {
            None
        } else {
            Some(StableParams::new(self.alpha, self.zeta)?)
        };
        let cfg = OptimizerConfig {
            eta: self.eta,
            gamma: self.gamma,
            beta: self.beta,
            steps: self.steps,
            noise,
            scale_match: self.scale_match,
            algorithm: match self.algorithm {
                HtlabAlgorithm::Sgd => Algorithm::Sgd,
                HtlabAlgorithm::Sgdm => Algorithm::Sgdm,
            },
            noise_time_scale: match self.noise_time_scale {
                HtlabNoiseTimeScale::Eta => NoiseTimeScale::Eta,
                HtlabNoiseTimeScale::Unit => NoiseTimeScale::Unit,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl From<HtlabBoundInputs> for BoundInputs {
    fn from(b: HtlabBoundInputs) -> Self {
        BoundInputs {
            lipschitz: b.lipschitz,
            zeta: b.zeta,
            abs_sigma_sum: b.abs_sigma_sum,
            y0_norm: b.y0_norm,
            n: b.n,
            d: b.d,
            alpha: b.alpha,
            p: b.p,
            c_universal: b.c_universal,
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn htlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn htlab_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Default bound inputs (`L = zeta = |sigma1+sigma2| = |Y0| = n = d = p = C = 1`, `alpha = 1.5`).
#[no_mangle]
pub extern "C" fn htlab_bound_inputs_default() -> HtlabBoundInputs {
    let b = BoundInputs::default();
    HtlabBoundInputs {
        lipschitz: b.lipschitz,
        zeta: b.zeta,
        abs_sigma_sum: b.abs_sigma_sum,
        y0_norm: b.y0_norm,
        n: b.n,
        d: b.d,
        alpha: b.alpha,
        p: b.p,
        c_universal: b.c_universal,
    }
}

/// `exp(-(scale * u_norm)^alpha)`.
#[no_mangle]
pub unsafe extern "C" fn htlab_char_fn(alpha: f64, scale: f64, u_norm: f64, result: *mut f64) -> HtlabStatus {
    guard(|| {
        let r = out(result, "result")?;
        *r = StableParams::new(alpha, scale)?.char_fn(u_norm);
        Ok(())
    })
}

/// `count` isotropic stable vectors of dimension `d` into `result` (`count * d` values).
#[no_mangle]
pub unsafe extern "C" fn htlab_sample_isotropic(
    alpha: f64,
    scale: f64,
    d: usize,
    count: usize,
    master_seed: u64,
    stream_id: u64,
    result: *mut f64,
) -> HtlabStatus {
    guard(|| {
        if d == 0 {
            return Err(Failure(HtlabStatus::InvalidArgument, "d must be >= 1".into()));
        }
        let params = StableParams::new(alpha, scale)?;
        let buf = output(result, checked_len(count, d)?, "result")?;
        let mut rng = RngStream::new(master_seed, stream_id).rng();
        for row in buf.chunks_exact_mut(d) {
            params.sample_isotropic_into(&mut rng, row);
        }
        Ok(())
    })
}

/// Eigenvalues `(mu_minus, mu_plus)` of the momentum system for one Gram eigenvalue.
#[no_mangle]
pub unsafe extern "C" fn htlab_mu_eigenvalues(
    kappa: f64,
    gamma: f64,
    mu_minus: *mut f64,
    mu_plus: *mut f64,
) -> HtlabStatus {
    guard(|| {
        let lo = out(mu_minus, "mu_minus")?;
        let hi = out(mu_plus, "mu_plus")?;
        (*lo, *hi) = mu_eigenvalues(kappa, gamma)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn htlab_unit_ball_volume(d: usize, result: *mut f64) -> HtlabStatus {
    guard(|| {
        *out(result, "result")? = unit_ball_volume(d)?.volume;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn htlab_decay_factor(x: f64, result: *mut f64) -> HtlabStatus {
    guard(|| {
        *out(result, "result")? = decay_factor(x)?;
        Ok(())
    })
}

/// Generalization bound at `rate_min` (sigma_min for SGDm, theta_min for SGD).
#[no_mangle]
pub unsafe extern "C" fn htlab_bound_generalization(
    inputs: *const HtlabBoundInputs,
    rate_min: f64,
    result: *mut f64,
) -> HtlabStatus {
    guard(|| {
        let inputs = inputs.as_ref().ok_or_else(|| null("inputs"))?;
        *out(result, "result")? = bound_generalization(&(*inputs).into(), rate_min)?;
        Ok(())
    })
}

/// `p`-Wasserstein stability bound at `rate_min`.
#[no_mangle]
pub unsafe extern "C" fn htlab_bound_wasserstein_p(
    inputs: *const HtlabBoundInputs,
    rate_min: f64,
    result: *mut f64,
) -> HtlabStatus {
    guard(|| {
        let inputs = inputs.as_ref().ok_or_else(|| null("inputs"))?;
        *out(result, "result")? = bound_wasserstein_p(&(*inputs).into(), rate_min)?;
        Ok(())
    })
}

/// Copy an `n x d` row-major matrix into a new dataset handle.
#[no_mangle]
pub unsafe extern "C" fn htlab_dataset_new(
    values: *const f64,
    n: usize,
    d: usize,
    dataset: *mut *mut HtlabDataset,
) -> HtlabStatus {
    guard(|| {
        let slot = out(dataset, "dataset")?;
        let vals = input(values, checked_len(n, d)?, "values")?;
        let inner = Dataset::from_row_major(vals, n, d)?;
        *slot = Box::into_raw(Box::new(HtlabDataset { inner }));
        Ok(())
    })
}

/// Release a dataset handle; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn htlab_dataset_free(dataset: *mut HtlabDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

#[no_mangle]
pub unsafe extern "C" fn htlab_dataset_shape(
    dataset: *const HtlabDataset,
    n: *mut usize,
    d: *mut usize,
) -> HtlabStatus {
    guard(|| {
        let ds = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        *out(n, "n")? = ds.inner.n();
        *out(d, "d")? = ds.inner.d();
        Ok(())
    })
}

/// Ascending eigenvalues of the Gram matrix into `result` (length `len >= d`).
#[no_mangle]
pub unsafe extern "C" fn htlab_dataset_gram_eigenvalues(
    dataset: *const HtlabDataset,
    result: *mut f64,
    len: usize,
) -> HtlabStatus {
    guard(|| {
        let ds = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        let d = ds.inner.d();
        if len < d {
            return Err(Error::DimensionMismatch { expected: d, got: len }.into());
        }
        let vals = gram_eigenvalues(&ds.inner)?;
        output(result, d, "result")?.copy_from_slice(&vals);
        Ok(())
    })
}

/// Pair of `base` and a copy with row `changed_index` replaced by `new_row` (length `d`).
#[no_mangle]
pub unsafe extern "C" fn htlab_pair_new(
    base: *const HtlabDataset,
    changed_index: usize,
    new_row: *const f64,
    d: usize,
    pair: *mut *mut HtlabPair,
) -> HtlabStatus {
    guard(|| {
        let slot = out(pair, "pair")?;
        let ds = base.as_ref().ok_or_else(|| null("base"))?;
        let row = input(new_row, d, "new_row")?;
        let inner = NeighborPair::new(ds.inner.clone(), changed_index, row)?;
        *slot = Box::into_raw(Box::new(HtlabPair { inner }));
        Ok(())
    })
}

/// Release a pair handle; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn htlab_pair_free(pair: *mut HtlabPair) {
    if !pair.is_null() {
        drop(Box::from_raw(pair));
    }
}

/// `rho = |x - x_hat| / n`.
#[no_mangle]
pub unsafe extern "C" fn htlab_pair_rho(pair: *const HtlabPair, result: *mut f64) -> HtlabStatus {
    guard(|| {
        let p = pair.as_ref().ok_or_else(|| null("pair"))?;
        *out(result, "result")? = p.inner.rho;
        Ok(())
    })
}

/// `sigma_min` (momentum system) and `theta_min` (Gram) over both datasets.
#[no_mangle]
pub unsafe extern "C" fn htlab_pair_sigma_theta_min(
    pair: *const HtlabPair,
    gamma: f64,
    sigma_min: *mut f64,
    theta_min: *mut f64,
) -> HtlabStatus {
    guard(|| {
        let p = pair.as_ref().ok_or_else(|| null("pair"))?;
        let s = out(sigma_min, "sigma_min")?;
        let t = out(theta_min, "theta_min")?;
        (*s, *t) = sigma_theta_min(&p.inner, gamma)?;
        Ok(())
    })
}

/// Weights of `x x^T - x_hat x_hat^T = sigma1 v1 v1^T + sigma2 v2 v2^T`.
#[no_mangle]
pub unsafe extern "C" fn htlab_pair_rank_two(
    pair: *const HtlabPair,
    sigma1: *mut f64,
    sigma2: *mut f64,
    degenerate: *mut bool,
) -> HtlabStatus {
    guard(|| {
        let p = pair.as_ref().ok_or_else(|| null("pair"))?;
        let r = rank_two_decomposition(&p.inner.x(), &p.inner.x_hat())?;
        *out(sigma1, "sigma1")? = r.sigma1;
        *out(sigma2, "sigma2")? = r.sigma2;
        *out(degenerate, "degenerate")? = r.degenerate;
        Ok(())
    })
}

unsafe fn measure(p: *const f64, m: usize, k: usize, what: &str) -> Result<EmpiricalMeasure, Failure> {
    let vals = input(p, checked_len(m, k)?, what)?;
    Ok(EmpiricalMeasure::new(vals.to_vec(), m, k)?)
}

/// Exact W1 between two scalar samples of size `m`.
#[no_mangle]
pub unsafe extern "C" fn htlab_w1_1d(a: *const f64, b: *const f64, m: usize, result: *mut f64) -> HtlabStatus {
    guard(|| {
        let r = out(result, "result")?;
        *r = w1_exact_1d(&measure(a, m, 1, "a")?, &measure(b, m, 1, "b")?)?;
        Ok(())
    })
}

/// Exact `W_p` between two uniform clouds of `m` points in `R^k` (row-major).
#[no_mangle]
pub unsafe extern "C" fn htlab_wp_exact(
    a: *const f64,
    b: *const f64,
    m: usize,
    k: usize,
    p: f64,
    result: *mut f64,
) -> HtlabStatus {
    guard(|| {
        let r = out(result, "result")?;
        *r = wp_exact_small(&measure(a, m, k, "a")?, &measure(b, m, k, "b")?, p)?;
        Ok(())
    })
}

/// Sliced W1 surrogate with `projections` random directions.
#[no_mangle]
pub unsafe extern "C" fn htlab_sliced_w1(
    a: *const f64,
    b: *const f64,
    m: usize,
    k: usize,
    projections: usize,
    master_seed: u64,
    result: *mut f64,
) -> HtlabStatus {
    guard(|| {
        let r = out(result, "result")?;
        *r = sliced_w1(
            &measure(a, m, k, "a")?,
            &measure(b, m, k, "b")?,
            projections,
            RngStream::new(master_seed, 0),
        )?;
        Ok(())
    })
}

/// Run the configured optimizer from `(theta, v)` in place (both length `d`).
#[no_mangle]
pub unsafe extern "C" fn htlab_run_to_end(
    dataset: *const HtlabDataset,
    config: *const HtlabOptimizerConfig,
    theta: *mut f64,
    v: *mut f64,
    d: usize,
    master_seed: u64,
    stream_id: u64,
) -> HtlabStatus {
    guard(|| {
        let ds = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        let cfg = config.as_ref().ok_or_else(|| null("config"))?.to_config()?;
        let th = output(theta, d, "theta")?;
        let vv = output(v, d, "v")?;
        let init = TrajectoryState::new(th.to_vec(), vv.to_vec())?;
        let end = run_to_end(
            &init,
            &cfg,
            &GradientModel::Quadratic,
            &ds.inner,
            RngStream::new(master_seed, stream_id),
        )?;
        th.copy_from_slice(&end.theta);
        vv.copy_from_slice(&end.v);
        Ok(())
    })
}

/// Distance between the two synchronously coupled chains after `config.steps`
/// steps from the origin.
#[no_mangle]
pub unsafe extern "C" fn htlab_run_coupled_pair(
    pair: *const HtlabPair,
    config: *const HtlabOptimizerConfig,
    master_seed: u64,
    stream_id: u64,
    distance: *mut f64,
) -> HtlabStatus {
    guard(|| {
        let p = pair.as_ref().ok_or_else(|| null("pair"))?;
        let cfg = config.as_ref().ok_or_else(|| null("config"))?.to_config()?;
        let r = out(distance, "distance")?;
        let init = TrajectoryState::zeros(p.inner.base.d());
        let (a, b) = run_coupled_pair(
            &p.inner,
            &init,
            &cfg,
            &GradientModel::Quadratic,
            RngStream::new(master_seed, stream_id),
            cfg.steps,
        )?;
        *r = a.distance(&b);
        Ok(())
    })
}
