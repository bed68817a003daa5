use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{line_fit, FitError, FitRange};
use crate::scalar::Scalar;

/// Candidate asymptotes `h_min + k·step` for `k = 0, 1, …` strictly below
/// `h_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoteGrid<T> {
    pub h_min: T,
    pub h_max: T,
    pub step: T,
}

impl<T: Scalar> AsymptoteGrid<T> {
    pub const DEFAULT_STEP: f64 = 1e-2;

    /// `[0, min y)` with step `0.01`.
    pub fn default_for(points: &[(T, T)]) -> Self {
        let min_y = points.iter().map(|p| p.1).fold(T::infinity(), T::min);
        Self {
            h_min: T::zero(),
            h_max: min_y,
            step: T::lit(Self::DEFAULT_STEP),
        }
    }

    pub fn candidates(&self) -> Vec<T> {
        let mut out = Vec::new();
        if !(self.step > T::zero()) {
            return out;
        }
        let mut k = 0usize;
        loop {
            let h = self.h_min + T::from_usize_lossy(k) * self.step;
            if h >= self.h_max {
                break;
            }
            out.push(h);
            k += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoteOptions<T> {
    /// Defaults to [`AsymptoteGrid::default_for`] the selected points.
    pub grid: Option<AsymptoteGrid<T>>,
    /// Keep only points with `P ≥ min_ratio · threshold`.
    pub min_ratio: T,
    /// The data threshold `P*` of the curve; no restriction when `None`.
    pub threshold: Option<T>,
}

impl<T: Scalar> Default for AsymptoteOptions<T> {
    fn default() -> Self {
        Self {
            grid: None,
            min_ratio: T::lit(10.0),
            threshold: None,
        }
    }
}

/// `y ≈ exp(log_prefactor) · x^(−delta) + asymptote`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoteFit<T> {
    pub asymptote: T,
    pub delta: T,
    pub log_prefactor: T,
    pub r2: T,
    pub grid_step: T,
    pub fit_range: FitRange<T>,
    pub num_points: usize,
    pub candidates_evaluated: usize,
}

impl<T: Scalar> AsymptoteFit<T> {
    pub fn predict(&self, x: T) -> T {
        (self.log_prefactor - self.delta * x.ln()).exp() + self.asymptote
    }
}

const MIN_ASYMPTOTE_POINTS: usize = 4;

/// Exhaustive grid search over the asymptote `H`: for each candidate with
/// every `y > H`, regress `ln(y − H)` on `ln x` and keep the candidate with the
/// largest R². Ties go to the smallest `H`.
pub fn fit_asymptote<T: Scalar>(points: &[(T, T)], opts: &AsymptoteOptions<T>) -> Result<AsymptoteFit<T>, FitError> {
    let selected: Vec<(T, T)> = match opts.threshold {
        Some(t) => points.iter().copied().filter(|p| p.0 >= opts.min_ratio * t).collect(),
        None => points.to_vec(),
    };
    if selected.len() < MIN_ASYMPTOTE_POINTS {
        return Err(FitError::TooFewPoints {
            needed: MIN_ASYMPTOTE_POINTS,
            got: selected.len(),
        });
    }
    for (index, &(x, y)) in selected.iter().enumerate() {
        if !(x > T::zero()) || !y.is_finite() {
            return Err(FitError::NonPositive {
                index,
                x: x.to_f64_lossy(),
                y: y.to_f64_lossy(),
            });
        }
    }
    let first = selected[0].1;
    if selected.iter().all(|p| p.1 == first) {
        return Err(FitError::Degenerate(format!(
            "constant data y = {first}: no decay to fit"
        )));
    }
    let grid = opts.grid.unwrap_or_else(|| AsymptoteGrid::default_for(&selected));
    let min_y = selected.iter().map(|p| p.1).fold(T::infinity(), T::min);
    let lx: Vec<T> = selected.iter().map(|p| p.0.ln()).collect();
    let candidates = grid.candidates();

    let scored: Vec<Option<(T, super::LineFit<T>)>> = candidates
        .par_iter()
        .map(|&h| {
            if !(h < min_y) {
                return None;
            }
            let ly: Vec<T> = selected.iter().map(|p| (p.1 - h).ln()).collect();
            line_fit(&lx, &ly, None).ok().map(|f| (h, f))
        })
        .collect();

    let mut best: Option<(T, super::LineFit<T>)> = None;
    for (h, f) in scored.into_iter().flatten() {
        if best.as_ref().is_none_or(|(_, b)| f.r2 > b.r2) {
            best = Some((h, f));
        }
    }
    let (h, f) = best.ok_or_else(|| FitError::NoAdmissibleAsymptote {
        h_min: grid.h_min.to_f64_lossy(),
        h_max: grid.h_max.to_f64_lossy(),
        step: grid.step.to_f64_lossy(),
        min_y: min_y.to_f64_lossy(),
    })?;
    Ok(AsymptoteFit {
        asymptote: h,
        delta: -f.slope,
        log_prefactor: f.intercept,
        r2: f.r2,
        grid_step: grid.step,
        fit_range: FitRange::covering(&selected).expect("nonempty"),
        num_points: selected.len(),
        candidates_evaluated: candidates.len(),
    })
}
