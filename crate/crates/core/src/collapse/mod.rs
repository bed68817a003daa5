//! Rescaling `P → P / n^{2β}`, `L_n → n^γ L_n` and a scale-free measure of
//! how well the rescaled curves fall onto one master curve.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{log_space, Scalar};
use crate::theory::LossCurveSet;

#[derive(Debug, Error)]
pub enum CollapseError {
    #[error("{name} must be positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("need at least two curves, got {0}")]
    TooFewCurves(usize),
    #[error("rescaled curves share no support: [{lo}, {hi}]")]
    NoOverlap { lo: f64, hi: f64 },
    #[error("bin count must be positive")]
    NoBins,
    #[error("scan grids must be nonempty")]
    EmptyGrid,
}

/// One `n`-curve after rescaling, with points sorted by `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledCurve<T> {
    pub dataset: String,
    pub arch: String,
    pub context: usize,
    pub n: usize,
    /// `(P / n^{2β}, n^γ (L_n − shift))`.
    pub points: Vec<(T, T)>,
}

fn positive<T: Scalar>(name: &'static str, v: T) -> Result<T, CollapseError> {
    if v > T::zero() && v.is_finite() {
        Ok(v)
    } else {
        Err(CollapseError::NotPositive {
            name,
            value: v.to_f64_lossy(),
        })
    }
}

/// Groups records by `(dataset, arch, T, n)` and rescales each group. The
/// `shift` is subtracted from every loss before scaling (`0` for the direct
/// form, `H_∞` for the asymptote-subtracted form).
pub fn rescale<T: Scalar>(
    curves: &LossCurveSet<T>,
    gamma: T,
    beta: T,
    shift: T,
) -> Result<Vec<RescaledCurve<T>>, CollapseError> {
    let gamma = positive("gamma", gamma)?;
    let beta = positive("beta", beta)?;
    let mut groups: std::collections::BTreeMap<(String, String, usize, usize), Vec<(T, T)>> = Default::default();
    for r in &curves.records {
        groups
            .entry((r.dataset.clone(), r.arch.clone(), r.context, r.n))
            .or_default()
            .push((r.tokens, r.loss));
    }
    Ok(groups
        .into_iter()
        .map(|((dataset, arch, context, n), mut pts)| {
            pts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite P"));
            let nn = T::from_usize_lossy(n);
            let x_scale = nn.powf(T::lit(2.0) * beta);
            let y_scale = nn.powf(gamma);
            RescaledCurve {
                dataset,
                arch,
                context,
                n,
                points: pts.into_iter().map(|(p, l)| (p / x_scale, y_scale * (l - shift))).collect(),
            }
        })
        .collect())
}

/// Value at `x` by piecewise-linear interpolation in `(ln x, ln y)`; falls
/// back to linear in `y` when a bracketing value is not positive.
pub fn interpolate<T: Scalar>(points: &[(T, T)], x: T) -> Option<T> {
    let first = points.first()?;
    let last = points.last()?;
    if x < first.0 || x > last.0 {
        return None;
    }
    let k = points.partition_point(|p| p.0 < x);
    if k < points.len() && points[k].0 == x {
        return Some(points[k].1);
    }
    let (x0, y0) = points[k - 1];
    let (x1, y1) = points[k];
    let t = (x.ln() - x0.ln()) / (x1.ln() - x0.ln());
    Some(if y0 > T::zero() && y1 > T::zero() {
        (y0.ln() + t * (y1.ln() - y0.ln())).exp()
    } else {
        y0 + t * (y1 - y0)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MasterBin<T> {
    /// Geometric center of the bin.
    pub x: T,
    pub mean: T,
    /// Population standard deviation across curves.
    pub spread: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveResidual<T> {
    pub n: usize,
    /// Mean over bins of `(y − mean) / mean`.
    pub mean_relative: T,
    pub max_abs_relative: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dispersion<T> {
    pub score: T,
    pub support: (T, T),
    pub master_curve: Vec<MasterBin<T>>,
    pub per_curve_residuals: Vec<CurveResidual<T>>,
}

/// Mean over log-spaced bins of the shared support of the cross-curve
/// coefficient of variation, each curve evaluated at the bin center.
pub fn dispersion<T: Scalar>(family: &[RescaledCurve<T>], num_bins: usize) -> Result<Dispersion<T>, CollapseError> {
    if num_bins == 0 {
        return Err(CollapseError::NoBins);
    }
    let family: Vec<&RescaledCurve<T>> = family.iter().filter(|c| !c.points.is_empty()).collect();
    if family.len() < 2 {
        return Err(CollapseError::TooFewCurves(family.len()));
    }
    let lo = family.iter().map(|c| c.points[0].0).fold(T::neg_infinity(), T::max);
    let hi = family
        .iter()
        .map(|c| c.points[c.points.len() - 1].0)
        .fold(T::infinity(), T::min);
    if !(lo < hi) || !(lo > T::zero()) {
        return Err(CollapseError::NoOverlap {
            lo: lo.to_f64_lossy(),
            hi: hi.to_f64_lossy(),
        });
    }
    let edges = log_space(lo, hi, num_bins + 1);
    let centers: Vec<T> = edges.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
    let values: Vec<Vec<T>> = family
        .iter()
        .map(|c| {
            centers
                .iter()
                .map(|&x| interpolate(&c.points, x).expect("center inside shared support"))
                .collect()
        })
        .collect();
    let m = T::from_usize_lossy(family.len());
    let mut master_curve = Vec::with_capacity(num_bins);
    let mut total = T::zero();
    for (b, &x) in centers.iter().enumerate() {
        let first = values[0][b];
        let (mean, spread) = if values.iter().all(|v| v[b] == first) {
            (first, T::zero())
        } else {
            let mean = values.iter().map(|v| v[b]).sum::<T>() / m;
            let var = values.iter().map(|v| (v[b] - mean) * (v[b] - mean)).sum::<T>() / m;
            (mean, var.sqrt())
        };
        total = total + if spread == T::zero() { T::zero() } else { spread / mean.abs() };
        master_curve.push(MasterBin { x, mean, spread });
    }
    let per_curve_residuals = family
        .iter()
        .zip(&values)
        .map(|(c, v)| {
            let rel: Vec<T> = v
                .iter()
                .zip(&master_curve)
                .map(|(&y, bin)| if bin.mean == T::zero() { T::zero() } else { (y - bin.mean) / bin.mean })
                .collect();
            CurveResidual {
                n: c.n,
                mean_relative: rel.iter().copied().sum::<T>() / T::from_usize_lossy(rel.len()),
                max_abs_relative: rel.iter().map(|r| r.abs()).fold(T::zero(), T::max),
            }
        })
        .collect();
    Ok(Dispersion {
        score: total / T::from_usize_lossy(num_bins),
        support: (lo, hi),
        master_curve,
        per_curve_residuals,
    })
}

/// Collapse quality at one `(γ, β)`, for the direct form and, when an
/// asymptote is supplied, the asymptote-subtracted form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport<T> {
    pub gamma_used: T,
    pub beta_used: T,
    pub num_bins: usize,
    pub dispersion_score: T,
    pub master_curve: Vec<MasterBin<T>>,
    pub per_curve_residuals: Vec<CurveResidual<T>>,
    pub h_inf: Option<T>,
    pub subtracted: Option<Dispersion<T>>,
}

pub fn collapse_report<T: Scalar>(
    curves: &LossCurveSet<T>,
    gamma: T,
    beta: T,
    h_inf: Option<T>,
    num_bins: usize,
) -> Result<CollapseReport<T>, CollapseError> {
    let direct = dispersion(&rescale(curves, gamma, beta, T::zero())?, num_bins)?;
    let subtracted = match h_inf {
        Some(h) => Some(dispersion(&rescale(curves, gamma, beta, h)?, num_bins)?),
        None => None,
    };
    Ok(CollapseReport {
        gamma_used: gamma,
        beta_used: beta,
        num_bins,
        dispersion_score: direct.score,
        master_curve: direct.master_curve,
        per_curve_residuals: direct.per_curve_residuals,
        h_inf,
        subtracted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentScan<T> {
    pub gammas: Vec<T>,
    pub betas: Vec<T>,
    /// `scores[i][j]` at `(gammas[i], betas[j])`; `None` where the
    /// rescaled curves share no support.
    pub scores: Vec<Vec<Option<T>>>,
    pub best_gamma: T,
    pub best_beta: T,
    pub best_score: T,
}

/// Dispersion over the full `(γ, β)` grid, evaluated in parallel. Ties in the
/// minimum go to the lexicographically smallest `(γ, β)`.
pub fn exponent_scan<T: Scalar>(
    curves: &LossCurveSet<T>,
    gamma_grid: &[T],
    beta_grid: &[T],
    shift: T,
    num_bins: usize,
) -> Result<ExponentScan<T>, CollapseError> {
    if gamma_grid.is_empty() || beta_grid.is_empty() {
        return Err(CollapseError::EmptyGrid);
    }
    let cells: Vec<(usize, usize)> = (0..gamma_grid.len())
        .flat_map(|i| (0..beta_grid.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<T, CollapseError>> = cells
        .par_iter()
        .map(|&(i, j)| Ok(dispersion(&rescale(curves, gamma_grid[i], beta_grid[j], shift)?, num_bins)?.score))
        .collect();

    let mut scores = vec![vec![None; beta_grid.len()]; gamma_grid.len()];
    let mut best: Option<(T, T, T)> = None;
    let mut first_err = None;
    for (&(i, j), r) in cells.iter().zip(results) {
        match r {
            Ok(s) => {
                scores[i][j] = Some(s);
                let cand = (s, gamma_grid[i], beta_grid[j]);
                let better = match best {
                    None => true,
                    Some(b) => (cand.0, cand.1, cand.2) < (b.0, b.1, b.2),
                };
                if better {
                    best = Some(cand);
                }
            }
            Err(e @ (CollapseError::NotPositive { .. } | CollapseError::TooFewCurves(_) | CollapseError::NoBins)) => {
                return Err(e)
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let (best_score, best_gamma, best_beta) = match best {
        Some(b) => b,
        None => return Err(first_err.unwrap_or(CollapseError::EmptyGrid)),
    };
    Ok(ExponentScan {
        gammas: gamma_grid.to_vec(),
        betas: beta_grid.to_vec(),
        scores,
        best_gamma,
        best_beta,
        best_score,
    })
}
