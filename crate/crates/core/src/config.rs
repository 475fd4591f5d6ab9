//! Run configuration files: TOML with one section per subsystem.
//!
//! ```toml
//! [run]
//! master_seed = 42
//! parallelism = 8
//!
//! [grid]
//! alphas = [1.6, 1.8]
//! gammas = [0.0, 2.5, 5.0]
//! ```
//!
//! Every section and key is optional; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{Algorithm, NoiseTimeScale, OptimizerConfig};
use crate::error::{Error, Result};
use crate::experiments::{DiscretizationOptions, DistanceEstimator, StabilityOptions, SweepGrid};
use crate::quadratic_theory::BoundInputs;
use crate::stable_noise::StableParams;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "HTLAB_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "htlab-out";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub grid: SweepGrid,
    pub optimizer: OptimizerSection,
    pub bounds: BoundsSection,
    pub stability: StabilitySection,
    pub discretization: DiscretizationSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub master_seed: u64,
    pub out_dir: Option<PathBuf>,
    pub parallelism: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            master_seed: 0,
            out_dir: None,
            parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub algorithm: Algorithm,
    pub eta: f64,
    pub gamma: f64,
    pub beta: f64,
    pub steps: usize,
    pub alpha: f64,
    /// `0` disables the noise.
    pub zeta: f64,
    pub scale_match: bool,
    pub noise_time_scale: NoiseTimeScale,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Sgdm,
            eta: 0.05,
            gamma: 1.0,
            beta: 1.0,
            steps: 2000,
            alpha: 1.7,
            zeta: 1.0,
            scale_match: true,
            noise_time_scale: NoiseTimeScale::Eta,
        }
    }
}

impl OptimizerSection {
    pub fn to_config(&self) -> Result<OptimizerConfig> {
        let noise = if self.zeta > 0.0 {
            Some(StableParams::new(self.alpha, self.zeta)?)
        } else if self.zeta == 0.0 {
            None
        } else {
            return Err(Error::invalid("zeta", "must be >= 0"));
        };
        let cfg = OptimizerConfig {
            eta: self.eta,
            gamma: if self.algorithm == Algorithm::Sgd { 0.0 } else { self.gamma },
            beta: self.beta,
            steps: self.steps,
            noise,
            scale_match: self.scale_match,
            algorithm: self.algorithm,
            noise_time_scale: self.noise_time_scale,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    pub lipschitz: f64,
    pub c_universal: f64,
    pub p: f64,
    pub y0_norm: f64,
}

impl Default for BoundsSection {
    fn default() -> Self {
        let b = BoundInputs::default();
        Self {
            lipschitz: b.lipschitz,
            c_universal: b.c_universal,
            p: b.p,
            y0_norm: b.y0_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySection {
    pub n: Vec<usize>,
    pub replicates: usize,
    pub d: usize,
    #[serde(rename = "sigmaA")]
    pub sigma_a: f64,
    pub delta: f64,
}

impl Default for StabilitySection {
    fn default() -> Self {
        let o = StabilityOptions::default();
        Self {
            n: vec![250, 500, 1000, 2000],
            replicates: 200,
            d: o.d,
            sigma_a: o.sigma_a,
            delta: o.delta,
        }
    }
}

impl StabilitySection {
    pub fn options(&self) -> StabilityOptions {
        StabilityOptions {
            d: self.d,
            sigma_a: self.sigma_a,
            delta: self.delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Exact,
    Sliced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizationSection {
    /// Decreasing; the last entry is the reference step size.
    pub etas: Vec<f64>,
    pub replicates: usize,
    pub horizon: f64,
    pub n: usize,
    pub d: usize,
    #[serde(rename = "sigmaA")]
    pub sigma_a: f64,
    pub estimator: EstimatorKind,
    pub projections: usize,
    pub bootstrap: usize,
}

impl Default for DiscretizationSection {
    fn default() -> Self {
        let o = DiscretizationOptions::default();
        Self {
            etas: vec![0.2, 0.1, 0.05, 0.025, 0.0125],
            replicates: 500,
            horizon: o.horizon,
            n: o.n,
            d: o.d,
            sigma_a: o.sigma_a,
            estimator: EstimatorKind::Exact,
            projections: 200,
            bootstrap: o.bootstrap,
        }
    }
}

impl DiscretizationSection {
    pub fn options(&self) -> DiscretizationOptions {
        DiscretizationOptions {
            horizon: self.horizon,
            n: self.n,
            d: self.d,
            sigma_a: self.sigma_a,
            estimator: match self.estimator {
                EstimatorKind::Exact => DistanceEstimator::ExactW1,
                EstimatorKind::Sliced => DistanceEstimator::SlicedW1 {
                    projections: self.projections,
                },
            },
            bootstrap: self.bootstrap,
            init: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Explicit setting, then the environment variable, then the default.
    pub fn output_dir(&self) -> PathBuf {
        self.run
            .out_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_parse() {
        let cfg = RunConfig::from_toml_str(
            r#"
            [run]
            master_seed = 42
            parallelism = 3

            [grid]
            alphas = [1.6, 1.8]
            sigmaA = [0.5]
            seeds = 5
            noise_time_scale = "unit"

            [optimizer]
            algorithm = "sgd"
            eta = 0.1

            [discretization]
            estimator = "sliced"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.run.master_seed, 42);
        assert_eq!(cfg.run.parallelism, 3);
        assert_eq!(cfg.grid.alphas, vec![1.6, 1.8]);
        assert_eq!(cfg.grid.sigma_a, vec![0.5]);
        assert_eq!(cfg.grid.seeds, 5);
        assert_eq!(cfg.grid.noise_time_scale, NoiseTimeScale::Unit);
        assert_eq!(cfg.grid.dims, SweepGrid::default().dims);
        assert_eq!(cfg.optimizer.algorithm, Algorithm::Sgd);
        let opt = cfg.optimizer.to_config().unwrap();
        assert_eq!(opt.gamma, 0.0);
        assert_eq!(cfg.discretization.estimator, EstimatorKind::Sliced);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            RunConfig::from_toml_str("[grid]\nalpha = [1.5]\n"),
            Err(Error::Config(_))
        ));
        assert!(RunConfig::from_toml_str("[gird]\n").is_err());
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.run.master_seed = 9;
        cfg.grid.gammas = vec![0.0, 1.0];
        let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn explicit_out_dir_wins() {
        let mut cfg = RunConfig::default();
        cfg.run.out_dir = Some(PathBuf::from("/tmp/x"));
        assert_eq!(cfg.output_dir(), PathBuf::from("/tmp/x"));
    }
}
