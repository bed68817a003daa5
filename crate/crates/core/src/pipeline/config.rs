use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::covstats::{BoundaryMode, HorizonRule};
use crate::fitkit::FitRange;
use crate::linalg::PowerIterConfig;

/// Every tolerance, range, grid and seed of a run. Missing TOML keys take
/// the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub covstats: CovstatsConfig,
    pub power: PowerConfig,
    pub beta_fit: BetaFitConfig,
    pub gamma_fit: GammaFitConfig,
    pub asymptote: AsymptoteConfig,
    pub horizon: HorizonConfig,
    pub theory: TheoryConfig,
    pub collapse: CollapseConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovstatsConfig {
    pub min_lag: usize,
    pub max_lag: usize,
    pub boundary: BoundaryMode,
}

impl Default for CovstatsConfig {
    fn default() -> Self {
        Self {
            min_lag: 1,
            max_lag: 512,
            boundary: BoundaryMode::Wall,
        }
    }
}

impl CovstatsConfig {
    pub fn lags(&self) -> Vec<usize> {
        (self.min_lag..=self.max_lag).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Fail with a numerical error when any lag does not converge.
    pub require_convergence: bool,
}

impl Default for PowerConfig {
    fn default() -> Self {
        let d = PowerIterConfig::default();
        Self {
            tol: d.tol,
            max_iters: d.max_iters,
            seed: d.seed,
            require_convergence: true,
        }
    }
}

impl PowerConfig {
    pub fn iter_config(&self) -> PowerIterConfig {
        PowerIterConfig {
            tol: self.tol,
            max_iters: self.max_iters,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BetaFitConfig {
    /// Lag window of the power-law fit; all lags when absent.
    pub range: Option<[f64; 2]>,
    pub mask_outliers: bool,
    pub outlier_window: usize,
    pub outlier_z: f64,
    /// Also fit a two-stage law and report its short-lag exponent.
    pub broken: bool,
    /// Fits below this R² are flagged.
    pub low_r2: f64,
}

impl Default for BetaFitConfig {
    fn default() -> Self {
        Self {
            range: None,
            mask_outliers: false,
            outlier_window: 5,
            outlier_z: 3.0,
            broken: false,
            low_r2: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaFitConfig {
    /// Small-`n` window of the entropy-decay fit.
    pub range: [f64; 2],
}

impl Default for GammaFitConfig {
    fn default() -> Self {
        Self { range: [1.0, 16.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsymptoteConfig {
    pub grid_step: f64,
    pub h_min: f64,
    pub min_ratio: f64,
    /// Per-`n` decay fits are attempted for `n = 1..=max_n`.
    pub max_n: usize,
}

impl Default for AsymptoteConfig {
    fn default() -> Self {
        Self {
            grid_step: 0.01,
            h_min: 0.0,
            min_ratio: 10.0,
            max_n: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonConfig {
    pub enabled: bool,
    pub tol_ratio: f64,
    /// Explicit prefix sizes; otherwise `num_prefixes` log-spaced sizes from
    /// a thousandth to a tenth of the stream.
    pub prefixes: Option<Vec<usize>>,
    pub num_prefixes: usize,
    pub max_lag: usize,
    pub min_pairs: u64,
    pub rule: HorizonRule,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            tol_ratio: 0.5,
            prefixes: None,
            num_prefixes: 9,
            max_lag: 64,
            min_pairs: 1,
            rule: HorizonRule::Contiguous,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub h_inf: f64,
    /// Threshold constant; calibrated from the horizon stage when absent.
    pub c: Option<f64>,
    /// Token-count window of the autoregressive-loss fit; all counts when absent.
    pub alpha_range: Option<[f64; 2]>,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            h_inf: 0.0,
            c: None,
            alpha_range: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollapseConfig {
    pub num_bins: usize,
    pub scan: bool,
    pub gamma_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
}

impl Default for CollapseConfig {
    fn default() -> Self {
        Self {
            num_bins: 32,
            scan: false,
            gamma_grid: Vec::new(),
            beta_grid: Vec::new(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(s).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.covstats.min_lag == 0 || self.covstats.min_lag > self.covstats.max_lag {
            return bad(format!(
                "lag range {}..{} must satisfy 1 ≤ min ≤ max",
                self.covstats.min_lag, self.covstats.max_lag
            ));
        }
        if !(self.power.tol > 0.0) || self.power.max_iters == 0 {
            return bad("power iteration needs tol > 0 and max_iters > 0".into());
        }
        if let Some([lo, hi]) = self.beta_fit.range {
            FitRange::new(lo, hi).map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        FitRange::new(self.gamma_fit.range[0], self.gamma_fit.range[1])
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if !(self.asymptote.grid_step > 0.0) || !(self.asymptote.min_ratio >= 0.0) {
            return bad("asymptote grid step must be positive and min_ratio nonnegative".into());
        }
        if !(self.horizon.tol_ratio > 0.0) {
            return bad("horizon tol_ratio must be positive".into());
        }
        if let Some([lo, hi]) = self.theory.alpha_range {
            FitRange::new(lo, hi).map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if !(self.theory.h_inf >= 0.0) || self.theory.c.is_some_and(|c| !(c > 0.0)) {
            return bad("h_inf must be nonnegative and c positive".into());
        }
        if self.collapse.num_bins == 0 {
            return bad("collapse needs at least one bin".into());
        }
        if self.beta_fit.outlier_window < 3 || self.beta_fit.outlier_window % 2 == 0 {
            return bad(format!("outlier window {} must be odd and at least 3", self.beta_fit.outlier_window));
        }
        Ok(())
    }
}
