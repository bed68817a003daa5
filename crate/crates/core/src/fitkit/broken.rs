use serde::{Deserialize, Serialize};

use super::{check_positive, line_fit, FitError, FitRange};
use crate::scalar::Scalar;

/// Two independent log-log segments joined at `breakpoint`. The left
/// segment holds `x ≤ breakpoint`; its exponent is the short-range one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrokenPowerLawFit<T> {
    pub breakpoint: T,
    pub exponent_left: T,
    pub exponent_right: T,
    pub log_prefactor_left: T,
    pub log_prefactor_right: T,
    pub r2_total: T,
    pub num_left: usize,
    pub num_right: usize,
    pub fit_range: FitRange<T>,
}

const MIN_SIDE_POINTS: usize = 3;

/// Tries every candidate breakpoint (every data x when `None`), skipping those
/// with fewer than three points on a side, and keeps the one with the
/// smallest total squared log residual. Ties go to the earliest candidate.
pub fn fit_broken_power_law<T: Scalar>(points: &[(T, T)], candidates: Option<&[T]>) -> Result<BrokenPowerLawFit<T>, FitError> {
    check_positive(points)?;
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
    let lx: Vec<T> = sorted.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<T> = sorted.iter().map(|p| p.1.ln()).collect();

    let owned;
    let candidates = match candidates {
        Some(c) => c,
        None => {
            let mut xs: Vec<T> = sorted.iter().map(|p| p.0).collect();
            xs.dedup();
            owned = xs;
            &owned[..]
        }
    };

    let mut best: Option<(T, T, super::LineFit<T>, super::LineFit<T>, usize)> = None;
    for &b in candidates {
        let split = sorted.partition_point(|p| p.0 <= b);
        if split < MIN_SIDE_POINTS || sorted.len() - split < MIN_SIDE_POINTS {
            continue;
        }
        let (Ok(left), Ok(right)) = (
            line_fit(&lx[..split], &ly[..split], None),
            line_fit(&lx[split..], &ly[split..], None),
        ) else {
            continue;
        };
        let sse = left.sse + right.sse;
        if best.as_ref().is_none_or(|(_, s, ..)| sse < *s) {
            best = Some((b, sse, left, right, split));
        }
    }
    let (breakpoint, sse, left, right, split) = best.ok_or(FitError::NoValidBreakpoint {
        needed: MIN_SIDE_POINTS,
    })?;

    let n = T::from_usize_lossy(ly.len());
    let mean = ly.iter().copied().sum::<T>() / n;
    let sst: T = ly.iter().map(|&y| (y - mean) * (y - mean)).sum();
    let r2_total = if sst == T::zero() {
        T::zero()
    } else {
        (T::one() - sse / sst).max(T::zero()).min(T::one())
    };
    Ok(BrokenPowerLawFit {
        breakpoint,
        exponent_left: -left.slope,
        exponent_right: -right.slope,
        log_prefactor_left: left.intercept,
        log_prefactor_right: right.intercept,
        r2_total,
        num_left: split,
        num_right: sorted.len() - split,
        fit_range: FitRange::covering(&sorted).expect("nonempty"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_recovery() {
        let pts: Vec<(f64, f64)> = (1..=200)
            .map(|x| {
                let x = x as f64;
                let y = if x <= 30.0 { x.powf(-0.9) } else { 30f64.powf(0.4) * x.powf(-1.3) };
                (x, y)
            })
            .collect();
        let f = fit_broken_power_law(&pts, None).unwrap();
        assert!((f.breakpoint - 30.0).abs() <= 1.0, "{}", f.breakpoint);
        assert!((f.exponent_left - 0.9).abs() < 1e-9);
        assert!((f.exponent_right - 1.3).abs() < 1e-9);
        assert!(f.r2_total > 1.0 - 1e-12);
    }

    #[test]
    fn single_law_has_equal_exponents() {
        let pts: Vec<(f64, f64)> = (1..=50).map(|x| (x as f64, (x as f64).powf(-0.6))).collect();
        let f = fit_broken_power_law(&pts, Some(&[7.0, 20.0])).unwrap();
        assert!((f.exponent_left - f.exponent_right).abs() < 1e-6);
    }

    #[test]
    fn all_candidates_skipped() {
        let pts: Vec<(f64, f64)> = (1..=8).map(|x| (x as f64, 1.0 / x as f64)).collect();
        assert!(matches!(
            fit_broken_power_law(&pts, Some(&[1.0, 2.0, 6.0, 100.0])),
            Err(FitError::NoValidBreakpoint { needed: 3 })
        ));
    }
}
