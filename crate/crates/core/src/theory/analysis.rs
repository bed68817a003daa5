use serde::{Deserialize, Serialize};

use super::{horizon, positive, LanguageExponents, LossCurve, LossCurveSet, TheoryError};
use crate::fitkit::fit_power_law;
use crate::scalar::Scalar;

/// `Δ_n = L_n − L_{n−1}` along a curve given as `(n, L_n)` pairs sorted by `n`.
/// The first horizon has no difference.
pub fn differential_losses<T: Scalar>(curve: &[(usize, T)]) -> Result<Vec<(usize, T)>, TheoryError> {
    curve
        .windows(2)
        .map(|w| {
            if w[1].0 != w[0].0 + 1 {
                return Err(TheoryError::Gap {
                    after: w[0].0,
                    next: w[1].0,
                });
            }
            Ok((w[1].0, w[1].1 - w[0].1))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcessEntry<T> {
    pub dataset: String,
    pub arch: String,
    pub context: usize,
    pub tokens: T,
    pub n: usize,
    /// `E_n(P) = Δ_n(P) − (H_n − H_{n−1})`.
    pub excess: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcessTable<T> {
    /// Entries with `P ≥ P*_n`.
    pub entries: Vec<ExcessEntry<T>>,
    /// Entries whose excess is below `−tolerance`, a sign that the supplied
    /// `H_n` are misestimated.
    pub violations: Vec<ExcessEntry<T>>,
}

/// Excess losses over the conditional-entropy drops, restricted to
/// `P ≥ P*_n`. `entropies[n]` is `H_n`; `threshold(n)` is `P*_n`.
pub fn excess_losses<T: Scalar, F: Fn(usize) -> T>(
    curves: &LossCurveSet<T>,
    entropies: &[T],
    threshold: F,
    tolerance: T,
) -> Result<ExcessTable<T>, TheoryError> {
    let mut entries = Vec::new();
    let mut violations = Vec::new();
    for curve in curves.curves() {
        for (n, delta) in differential_losses(&curve.points)? {
            if curve.tokens < threshold(n) {
                continue;
            }
            let dh = entropy(entropies, n)? - entropy(entropies, n - 1)?;
            let entry = ExcessEntry {
                dataset: curve.dataset.clone(),
                arch: curve.arch.clone(),
                context: curve.context,
                tokens: curve.tokens,
                n,
                excess: delta - dh,
            };
            if entry.excess < -tolerance {
                violations.push(entry.clone());
            }
            entries.push(entry);
        }
    }
    Ok(ExcessTable { entries, violations })
}

fn entropy<T: Scalar>(h: &[T], n: usize) -> Result<T, TheoryError> {
    h.get(n).copied().ok_or(TheoryError::MissingEntropy { n })
}

/// Per-`P` split of the loss into the entropy at the horizon and the excess
/// accumulated below it: `H_{n*(P)}` and `Σ_{n ≤ n*(P)} E_n(P)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition<T> {
    pub tokens: T,
    /// Continuous `n*(P)`.
    pub horizon: T,
    /// `⌊n*(P)⌋`, the last horizon counted.
    pub n_star: usize,
    pub boundary_term: Option<T>,
    pub excess_sum: Option<T>,
    /// `excess_sum / boundary_term`.
    pub ratio: Option<T>,
    /// `excess_sum / (boundary_term − H_∞)`.
    pub ratio_above_asymptote: Option<T>,
    /// Mean of `L_n` over the curve.
    pub autoregressive_loss: T,
    /// The same sum with the `(T − (n−1))/T` weights on `Δ_n` dropped, which
    /// leaves the loss at the largest horizon.
    pub autoregressive_loss_dropped: T,
    /// The curve does not cover `n = 1..=n_star`.
    pub missing: bool,
}

/// Splits every curve at its horizon `n*(P)`. A curve without an `n = 0`
/// record is taken to start from `L_0 = H_0`.
pub fn decompose_loss<T: Scalar>(
    curves: &LossCurveSet<T>,
    exponents: &LanguageExponents<T>,
    entropies: &[T],
) -> Result<Vec<Decomposition<T>>, TheoryError> {
    exponents.validate()?;
    curves
        .curves()
        .iter()
        .map(|curve| decompose_one(curve, exponents, entropies))
        .collect()
}

fn decompose_one<T: Scalar>(
    curve: &LossCurve<T>,
    exponents: &LanguageExponents<T>,
    entropies: &[T],
) -> Result<Decomposition<T>, TheoryError> {
    let n_cont = horizon(curve.tokens.max(T::one()), exponents.beta, exponents.c)?;
    let n_star = n_cont.floor().to_usize().unwrap_or(usize::MAX);
    let autoregressive_loss = curve.autoregressive_loss();
    let autoregressive_loss_dropped = curve.points.last().expect("curves are nonempty").1;

    let mut sum = T::zero();
    let mut prev_l = match curve.loss_at(0) {
        Some(l) => l,
        None => entropy(entropies, 0)?,
    };
    let mut prev_h = entropy(entropies, 0)?;
    let mut missing = false;
    for n in 1..=n_star.min(curve.points.last().map_or(0, |p| p.0) + 1) {
        let (Some(l), Some(&h)) = (curve.loss_at(n), entropies.get(n)) else {
            missing = true;
            break;
        };
        sum = sum + (l - prev_l) - (h - prev_h);
        prev_l = l;
        prev_h = h;
    }
    if n_star > curve.points.last().map_or(0, |p| p.0) {
        missing = true;
    }
    let (boundary, excess) = if missing {
        (None, None)
    } else {
        (Some(entropy(entropies, n_star)?), Some(sum))
    };
    let div = |num: Option<T>, den: Option<T>| match (num, den) {
        (Some(a), Some(b)) if b != T::zero() => Some(a / b),
        _ => None,
    };
    Ok(Decomposition {
        tokens: curve.tokens,
        horizon: n_cont,
        n_star,
        boundary_term: boundary,
        excess_sum: excess,
        ratio: div(excess, boundary),
        ratio_above_asymptote: div(excess, boundary.map(|b| b - exponents.h_inf)),
        autoregressive_loss,
        autoregressive_loss_dropped,
        missing,
    })
}

/// Threshold constant `c` from measured `(P, n*)` pairs with `β` held fixed,
/// plus the unconstrained slope of `ln n*` on `ln P` for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCalibration<T> {
    pub c: T,
    pub fixed_slope: T,
    pub free_slope: Option<T>,
    pub free_r2: Option<T>,
    pub num_points: usize,
}

pub fn calibrate_threshold_constant<T: Scalar>(
    points: &[(T, T)],
    beta: T,
) -> Result<ThresholdCalibration<T>, TheoryError> {
    let beta = positive("beta", beta)?;
    if points.is_empty() {
        return Err(TheoryError::InvalidSpec("no (P, n*) points to calibrate from".into()));
    }
    let two = T::lit(2.0);
    let mut acc = T::zero();
    for &(p, n) in points {
        positive("P", p)?;
        positive("n*", n)?;
        acc = acc + (p.ln() - two * beta * n.ln()) / two;
    }
    let log_c = acc / T::from_usize_lossy(points.len());
    let free = fit_power_law(points, None).ok();
    Ok(ThresholdCalibration {
        c: log_c.exp(),
        fixed_slope: T::one() / (two * beta),
        free_slope: free.map(|f| -f.exponent),
        free_r2: free.map(|f| f.r2),
        num_points: points.len(),
    })
}
