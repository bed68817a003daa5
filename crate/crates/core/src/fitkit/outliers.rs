use serde::{Deserialize, Serialize};

use super::{check_positive, FitError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierOptions<T> {
    /// Odd, at least 3.
    pub window: usize,
    pub z_thresh: T,
    /// Floor on the robust scale so exact power laws do not mask round-off.
    pub min_scale: T,
}

impl<T: Scalar> Default for OutlierOptions<T> {
    fn default() -> Self {
        Self {
            window: 5,
            z_thresh: T::lit(3.0),
            min_scale: T::lit(1e-2),
        }
    }
}

/// Flags points whose log residual against a running-median log-log trend
/// exceeds `z_thresh` robust deviations.
///
/// The trend is a global repeated-median slope in log-log space plus a
/// centered running median of the detrended values; the robust deviation is
/// `1.4826 · MAD` of the residuals, floored at `min_scale`. The mask is
/// returned in input order.
pub fn outlier_mask<T: Scalar>(points: &[(T, T)], opts: &OutlierOptions<T>) -> Result<Vec<bool>, FitError> {
    if opts.window < 3 || opts.window % 2 == 0 {
        return Err(FitError::InvalidWindow(opts.window));
    }
    check_positive(points)?;
    let n = points.len();
    if n < 3 {
        return Ok(vec![false; n]);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a].0.partial_cmp(&points[b].0).expect("finite"));
    let lx: Vec<T> = order.iter().map(|&i| points[i].0.ln()).collect();
    let ly: Vec<T> = order.iter().map(|&i| points[i].1.ln()).collect();

    let slope = repeated_median_slope(&lx, &ly);
    let detrended: Vec<T> = lx.iter().zip(&ly).map(|(&x, &y)| y - slope * x).collect();
    let half = opts.window / 2;
    let resid: Vec<T> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            detrended[i] - median(detrended[lo..hi].to_vec())
        })
        .collect();
    let mad = median(resid.iter().map(|r| r.abs()).collect());
    let scale = (T::lit(1.4826) * mad).max(opts.min_scale);

    let mut mask = vec![false; n];
    for (k, &i) in order.iter().enumerate() {
        mask[i] = resid[k].abs() > opts.z_thresh * scale;
    }
    Ok(mask)
}

/// Points whose mask entry is `false`.
pub fn apply_mask<T: Copy>(points: &[(T, T)], mask: &[bool]) -> Vec<(T, T)> {
    points.iter().zip(mask).filter(|(_, &m)| !m).map(|(p, _)| *p).collect()
}

fn median<T: Scalar>(mut v: Vec<T>) -> T {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / T::lit(2.0)
    }
}

fn repeated_median_slope<T: Scalar>(x: &[T], y: &[T]) -> T {
    let per_point: Vec<T> = (0..x.len())
        .filter_map(|i| {
            let slopes: Vec<T> = (0..x.len())
                .filter(|&j| j != i && x[j] != x[i])
                .map(|j| (y[j] - y[i]) / (x[j] - x[i]))
                .collect();
            (!slopes.is_empty()).then(|| median(slopes))
        })
        .collect();
    if per_point.is_empty() {
        T::zero()
    } else {
        median(per_point)
    }
}
