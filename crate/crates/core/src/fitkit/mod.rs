//! Log-log fits: pure power laws, decay-to-asymptote power laws with a
//! grid-searched asymptote, broken power laws, and a robust spike mask.
//!
//! Fit ranges are explicit inputs and are echoed in every result. All R²
//! values are computed on log-scale residuals of the points inside the range.

mod asymptote;
mod broken;
mod io;
mod outliers;
mod power_law;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use asymptote::{fit_asymptote, AsymptoteFit, AsymptoteGrid, AsymptoteOptions};
pub use broken::{fit_broken_power_law, BrokenPowerLawFit};
pub use io::{read_points_csv, read_points_jsonl, FitReport, JsonlColumn, WeightedPoints};
pub use outliers::{apply_mask, outlier_mask, OutlierOptions};
pub use power_law::{bootstrap_power_law, fit_power_law, fit_power_law_weighted, PowerLawFit};

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("need at least {needed} points inside the fit range, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("point {index} is not strictly positive (x = {x}, y = {y})")]
    NonPositive { index: usize, x: f64, y: f64 },
    #[error("weights must be positive and match the number of points")]
    BadWeights,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("no admissible asymptote on grid [{h_min}, {h_max}) step {step}: every candidate has H ≥ min(y) = {min_y}")]
    NoAdmissibleAsymptote { h_min: f64, h_max: f64, step: f64, min_y: f64 },
    #[error("no candidate breakpoint leaves {needed} points on each side")]
    NoValidBreakpoint { needed: usize },
    #[error("window must be odd and at least 3, got {0}")]
    InvalidWindow(usize),
    #[error("invalid fit range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("malformed input line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Inclusive `[lo, hi]` window on x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitRange<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> FitRange<T> {
    pub fn new(lo: T, hi: T) -> Result<Self, FitError> {
        if !(lo <= hi) || lo.is_nan() || hi.is_nan() {
            return Err(FitError::InvalidRange {
                lo: lo.to_f64_lossy(),
                hi: hi.to_f64_lossy(),
            });
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Smallest range covering every x in `points`.
    pub fn covering(points: &[(T, T)]) -> Option<Self> {
        let lo = points.iter().map(|p| p.0).fold(T::infinity(), T::min);
        let hi = points.iter().map(|p| p.0).fold(T::neg_infinity(), T::max);
        (lo <= hi).then_some(Self { lo, hi })
    }
}

impl std::str::FromStr for FitRange<f64> {
    type Err = String;
    /// Parses `A:B`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(':').ok_or_else(|| format!("range `{s}` is not A:B"))?;
        let lo: f64 = a.trim().parse().map_err(|e| format!("bad range start: {e}"))?;
        let hi: f64 = b.trim().parse().map_err(|e| format!("bad range end: {e}"))?;
        FitRange::new(lo, hi).map_err(|e| e.to_string())
    }
}

/// Weighted least squares `y ≈ a + b x`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LineFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r2: T,
    pub sse: T,
}

/// Ordinary (or weighted) least squares. `r2 = 1 − SSE/SST`, with
/// `r2 = 0` for data of zero spread in y.
pub(crate) fn line_fit<T: Scalar>(xs: &[T], ys: &[T], ws: Option<&[T]>) -> Result<LineFit<T>, FitError> {
    let n = xs.len();
    let w = |i: usize| ws.map_or(T::one(), |w| w[i]);
    let sw: T = (0..n).map(w).sum();
    let mx = (0..n).map(|i| w(i) * xs[i]).sum::<T>() / sw;
    let my = (0..n).map(|i| w(i) * ys[i]).sum::<T>() / sw;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    let mut syy = T::zero();
    for i in 0..n {
        let dx = xs[i] - mx;
        let dy = ys[i] - my;
        sxx = sxx + w(i) * dx * dx;
        sxy = sxy + w(i) * dx * dy;
        syy = syy + w(i) * dy * dy;
    }
    if sxx == T::zero() {
        return Err(FitError::Degenerate("all x values coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: T = (0..n)
        .map(|i| {
            let r = ys[i] - (intercept + slope * xs[i]);
            w(i) * r * r
        })
        .sum();
    let r2 = if syy == T::zero() {
        T::zero()
    } else {
        (T::one() - sse / syy).max(T::zero()).min(T::one())
    };
    Ok(LineFit {
        slope,
        intercept,
        r2,
        sse,
    })
}

pub(crate) fn check_positive<T: Scalar>(points: &[(T, T)]) -> Result<(), FitError> {
    for (index, &(x, y)) in points.iter().enumerate() {
        if !(x > T::zero() && y > T::zero()) || !x.is_finite() || !y.is_finite() {
            return Err(FitError::NonPositive {
                index,
                x: x.to_f64_lossy(),
                y: y.to_f64_lossy(),
            });
        }
    }
    Ok(())
}
