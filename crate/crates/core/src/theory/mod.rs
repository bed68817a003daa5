//! Closed-form scaling predictions and the learning-curve ansatz.
//!
//! A language is summarized by the entropy-decay exponent `γ`
//! (`H_n − H_∞ ∝ n^−γ`) and the correlation-decay exponent `β`
//! (`‖C(n)‖_op ∝ n^−β`). Lag `n` becomes resolvable from `P` training tokens
//! once `P ≥ P*_n = c² n^{2β}`, so the prediction horizon grows like
//! `n*(P) = (P/c²)^{1/(2β)}` and the autoregressive loss decays like
//! `P^−min(δ, γ/2β)`.

mod analysis;
mod ansatz;
mod curves;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analysis::{
    calibrate_threshold_constant, decompose_loss, differential_losses, excess_losses, Decomposition,
    ExcessEntry, ExcessTable, ThresholdCalibration,
};
pub use ansatz::{synthesize_curves, AnsatzSpec, DeltaSpec, TransitionShape};
pub use curves::{LossCurve, LossCurveSet, LossRecord, MonotonicityViolation, LOSS_CSV_HEADER};

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("{name} must be positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("{name} must be nonnegative and finite, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("curve has a gap in n between {after} and {next}")]
    Gap { after: usize, next: usize },
    #[error("no conditional entropy supplied for n = {n}")]
    MissingEntropy { n: usize },
    #[error("invalid ansatz: {0}")]
    InvalidSpec(String),
    #[error("loss table line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn positive<T: Scalar>(name: &'static str, v: T) -> Result<T, TheoryError> {
    if v > T::zero() && v.is_finite() {
        Ok(v)
    } else {
        Err(TheoryError::NotPositive {
            name,
            value: v.to_f64_lossy(),
        })
    }
}

pub(crate) fn nonnegative<T: Scalar>(name: &'static str, v: T) -> Result<T, TheoryError> {
    if v >= T::zero() && v.is_finite() {
        Ok(v)
    } else {
        Err(TheoryError::Negative {
            name,
            value: v.to_f64_lossy(),
        })
    }
}

/// The per-language constants entering every prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanguageExponents<T> {
    pub gamma: T,
    pub beta: T,
    pub h_inf: T,
    /// Entropy with no context (the unigram entropy).
    pub h_0: T,
    /// Threshold constant `c` in `P*_n = c² n^{2β}`.
    pub c: T,
}

impl<T: Scalar> LanguageExponents<T> {
    pub fn validate(&self) -> Result<(), TheoryError> {
        positive("gamma", self.gamma)?;
        positive("beta", self.beta)?;
        positive("c", self.c)?;
        nonnegative("h_inf", self.h_inf)?;
        nonnegative("h_0", self.h_0)?;
        Ok(())
    }

    pub fn alpha(&self) -> Result<T, TheoryError> {
        predict_alpha(self.gamma, self.beta)
    }
}

/// Data-scaling exponent `α_D = γ / (2β)`.
pub fn predict_alpha<T: Scalar>(gamma: T, beta: T) -> Result<T, TheoryError> {
    let gamma = positive("gamma", gamma)?;
    let beta = positive("beta", beta)?;
    Ok(gamma / (T::lit(2.0) * beta))
}

/// `P*_n = c² n^{2β}`, the tokens needed to resolve lag `n`.
pub fn data_threshold<T: Scalar>(n: T, beta: T, c: T) -> Result<T, TheoryError> {
    if !(n >= T::one()) || !n.is_finite() {
        return Err(TheoryError::NotPositive {
            name: "n (at least 1)",
            value: n.to_f64_lossy(),
        });
    }
    let beta = positive("beta", beta)?;
    let c = positive("c", c)?;
    Ok(c * c * n.powf(T::lit(2.0) * beta))
}

/// `n*(P) = (P / c²)^{1/(2β)}`, the inverse of [`data_threshold`].
pub fn horizon<T: Scalar>(p: T, beta: T, c: T) -> Result<T, TheoryError> {
    if !(p >= T::one()) || !p.is_finite() {
        return Err(TheoryError::NotPositive {
            name: "P (at least 1)",
            value: p.to_f64_lossy(),
        });
    }
    let beta = positive("beta", beta)?;
    let c = positive("c", c)?;
    Ok((p / (c * c)).powf(T::one() / (T::lit(2.0) * beta)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `γ/2β < δ`: the horizon bottleneck dominates.
    HorizonLimited,
    /// `γ/2β = δ`: logarithmic correction.
    Marginal,
    /// `δ < γ/2β`: learning within the horizon dominates.
    WithinHorizonLimited,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeClassification<T> {
    pub regime: Regime,
    pub predicted_exponent: T,
    pub log_correction: bool,
}

/// Relative tolerance for treating `δ` and `γ/2β` as equal.
pub const MARGINAL_REL_TOL: f64 = 1e-12;

/// Predicted exponent `min(δ, γ/2β)` and its regime.
pub fn classify_regime<T: Scalar>(gamma: T, beta: T, delta: T) -> Result<RegimeClassification<T>, TheoryError> {
    let alpha = predict_alpha(gamma, beta)?;
    let delta = positive("delta", delta)?;
    let scale = alpha.max(delta);
    let (regime, exponent) = if (alpha - delta).abs() <= T::lit(MARGINAL_REL_TOL) * scale {
        (Regime::Marginal, alpha.min(delta))
    } else if alpha < delta {
        (Regime::HorizonLimited, alpha)
    } else {
        (Regime::WithinHorizonLimited, delta)
    };
    Ok(RegimeClassification {
        regime,
        predicted_exponent: exponent,
        log_correction: regime == Regime::Marginal,
    })
}

/// Summary of a scaling analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub gamma: f64,
    pub beta: f64,
    pub alpha_pred: f64,
    pub c: Option<f64>,
    pub delta_table: Vec<(usize, f64)>,
    pub regime: Option<RegimeClassification<f64>>,
    pub decomposition: Vec<Decomposition<f64>>,
}
