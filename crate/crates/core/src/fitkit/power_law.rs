use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_positive, line_fit, FitError, FitRange};
use crate::scalar::Scalar;

/// `y ≈ exp(log_prefactor) · x^(−exponent)`; decaying data has a positive
/// exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit<T> {
    pub exponent: T,
    pub log_prefactor: T,
    pub r2: T,
    pub fit_range: FitRange<T>,
    pub num_points: usize,
}

impl<T: Scalar> PowerLawFit<T> {
    pub fn predict(&self, x: T) -> T {
        (self.log_prefactor - self.exponent * x.ln()).exp()
    }
}

pub(crate) const MIN_POWER_LAW_POINTS: usize = 3;

/// Ordinary least squares on `(ln x, ln y)` over the points with x inside
/// `range` (all points when `None`).
pub fn fit_power_law<T: Scalar>(points: &[(T, T)], range: Option<FitRange<T>>) -> Result<PowerLawFit<T>, FitError> {
    fit_inner(points, None, range)
}

/// Weighted variant; one positive weight per point.
pub fn fit_power_law_weighted<T: Scalar>(
    points: &[(T, T)],
    weights: &[T],
    range: Option<FitRange<T>>,
) -> Result<PowerLawFit<T>, FitError> {
    if weights.len() != points.len() || weights.iter().any(|&w| !(w > T::zero()) || !w.is_finite()) {
        return Err(FitError::BadWeights);
    }
    fit_inner(points, Some(weights), range)
}

fn fit_inner<T: Scalar>(
    points: &[(T, T)],
    weights: Option<&[T]>,
    range: Option<FitRange<T>>,
) -> Result<PowerLawFit<T>, FitError> {
    let range = match range {
        Some(r) => r,
        None => FitRange::covering(points).ok_or(FitError::TooFewPoints {
            needed: MIN_POWER_LAW_POINTS,
            got: 0,
        })?,
    };
    let keep: Vec<usize> = (0..points.len()).filter(|&i| range.contains(points[i].0)).collect();
    if keep.len() < MIN_POWER_LAW_POINTS {
        return Err(FitError::TooFewPoints {
            needed: MIN_POWER_LAW_POINTS,
            got: keep.len(),
        });
    }
    let inside: Vec<(T, T)> = keep.iter().map(|&i| points[i]).collect();
    check_positive(&inside)?;
    let lx: Vec<T> = inside.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<T> = inside.iter().map(|p| p.1.ln()).collect();
    let w: Option<Vec<T>> = weights.map(|w| keep.iter().map(|&i| w[i]).collect());
    let line = line_fit(&lx, &ly, w.as_deref())?;
    Ok(PowerLawFit {
        exponent: -line.slope,
        log_prefactor: line.intercept,
        r2: line.r2,
        fit_range: range,
        num_points: inside.len(),
    })
}

/// Seeded resampling hook: refits `resamples` bootstrap draws (with
/// replacement) of the in-range points. Draws that fail to fit are dropped.
pub fn bootstrap_power_law<T: Scalar>(
    points: &[(T, T)],
    range: Option<FitRange<T>>,
    resamples: usize,
    seed: u64,
) -> Vec<PowerLawFit<T>> {
    let inside: Vec<(T, T)> = match range {
        Some(r) => points.iter().copied().filter(|p| r.contains(p.0)).collect(),
        None => points.to_vec(),
    };
    if inside.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..resamples)
        .filter_map(|_| {
            let draw: Vec<(T, T)> = (0..inside.len())
                .map(|_| *inside.choose(&mut rng).expect("nonempty"))
                .collect();
            fit_power_law(&draw, range).ok()
        })
        .collect()
}
