use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{covariance_from_counts, operator_norm, BoundaryMode, CooccurrenceCounts, CovStatsError, LagCounter};
use crate::linalg::{Difference, PowerIterConfig};
use crate::scalar::Scalar;
use crate::tokenizer::TokenStream;

/// Which lags count toward the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonRule {
    /// Largest `n` such that every requested lag up to `n` meets the
    /// tolerance. Robust to isolated lags that pass by chance.
    #[default]
    Contiguous,
    /// Largest lag meeting the tolerance, regardless of the lags below it.
    LargestPassing,
}

/// Horizon estimate for one prefix size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRow<T> {
    pub prefix: usize,
    /// Running maximum of the raw horizon; `None` while no lag qualifies.
    pub horizon: Option<usize>,
    pub raw_horizon: Option<usize>,
    /// Set when the raw value fell below an earlier prefix's horizon.
    pub dipped: bool,
    /// `‖Ĉ_P(n) − C(n)‖_op` per lag; `None` marks a missing cell.
    pub distances: Vec<Option<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport<T> {
    pub lags: Vec<usize>,
    pub tol_ratio: T,
    pub rule: HorizonRule,
    /// `‖C(n)‖_op` of the full stream, per lag (`None` when the lag is empty).
    pub full_op_norms: Vec<Option<T>>,
    pub rows: Vec<HorizonRow<T>>,
    /// All full-stream norms vanish, so no horizon is defined.
    pub degenerate: bool,
}

impl<T: Scalar> HorizonReport<T> {
    /// `(P, n*)` pairs with a defined horizon.
    pub fn points(&self) -> Vec<(T, T)> {
        self.rows
            .iter()
            .filter_map(|r| r.horizon.map(|h| (T::from_usize_lossy(r.prefix), T::from_usize_lossy(h))))
            .collect()
    }
}

/// For each prefix size `P`, the largest lag `n` with
/// `‖Ĉ_P(n) − C(n)‖_op ≤ tol_ratio · ‖C(n)‖_op`, where `C` is estimated on the
/// whole stream and `Ĉ_P` on its first `P` tokens. Under
/// [`HorizonRule::Contiguous`] every smaller requested lag must pass too.
///
/// Prefix counts come from one pass with snapshots. Cells whose prefix holds
/// fewer than `min_pairs` pairs are missing. Reported horizons are made
/// nondecreasing in `P` by a running maximum, with `dipped` marking rows where
/// that changed the raw value.
#[allow(clippy::too_many_arguments)]
pub fn empirical_horizon<T: Scalar>(
    stream: &TokenStream,
    prefix_sizes: &[usize],
    lags: &[usize],
    tol_ratio: T,
    min_pairs: u64,
    cfg: &PowerIterConfig,
    mode: BoundaryMode,
    rule: HorizonRule,
) -> Result<HorizonReport<T>, CovStatsError> {
    let total = stream.total_tokens();
    if total == 0 {
        return Err(CovStatsError::EmptyStream);
    }
    if prefix_sizes.is_empty()
        || prefix_sizes.windows(2).any(|w| w[0] > w[1])
        || prefix_sizes[0] == 0
        || *prefix_sizes.last().expect("nonempty") > total
    {
        return Err(CovStatsError::BadPrefixes { total });
    }
    let vocab = stream.vocab_size() as usize;
    let mut counter = LagCounter::new(lags, vocab, mode)?;
    let sorted_lags = counter.lags().to_vec();

    let ids = stream.ids();
    let mut snapshots: Vec<Vec<CooccurrenceCounts>> = Vec::with_capacity(prefix_sizes.len());
    let mut pos = 0;
    for &p in prefix_sizes {
        counter.extend(&ids[pos..p]);
        pos = p;
        snapshots.push(counter.snapshot());
    }
    counter.extend(&ids[pos..]);
    let full = counter.snapshot();

    let full_ops: Vec<Option<_>> = full
        .iter()
        .map(|c| covariance_from_counts::<T>(c).ok())
        .collect();
    let full_op_norms: Vec<Option<T>> = full_ops
        .par_iter()
        .map(|op| op.as_ref().map(|op| operator_norm(op, cfg).value))
        .collect();
    let degenerate = full_op_norms.iter().all(|n| n.is_none_or(|v| v == T::zero()));

    let mut rows = Vec::with_capacity(prefix_sizes.len());
    let mut best: Option<usize> = None;
    for (&p, snap) in prefix_sizes.iter().zip(&snapshots) {
        let distances: Vec<Option<T>> = snap
            .par_iter()
            .zip(full_ops.par_iter())
            .map(|(c, full_op)| {
                let full_op = full_op.as_ref()?;
                if c.num_pairs < min_pairs.max(1) {
                    return None;
                }
                let prefix_op = covariance_from_counts::<T>(c).ok()?;
                let diff = Difference {
                    lhs: &prefix_op,
                    rhs: full_op,
                };
                Some(operator_norm(&diff, cfg).value)
            })
            .collect();
        let passing = sorted_lags
            .iter()
            .zip(&distances)
            .zip(&full_op_norms)
            .map(|((&lag, d), norm)| match (d, norm) {
                (Some(d), Some(norm)) => (lag, *norm > T::zero() && *d <= tol_ratio * *norm),
                _ => (lag, false),
            });
        let raw = if degenerate {
            None
        } else {
            match rule {
                HorizonRule::Contiguous => passing.take_while(|&(_, ok)| ok).map(|(lag, _)| lag).last(),
                HorizonRule::LargestPassing => passing.filter(|&(_, ok)| ok).map(|(lag, _)| lag).max(),
            }
        };
        let dipped = matches!((raw, best), (r, Some(b)) if r.is_none_or(|r| r < b));
        best = match (best, raw) {
            (Some(b), Some(r)) => Some(b.max(r)),
            (b, r) => b.or(r),
        };
        rows.push(HorizonRow {
            prefix: p,
            horizon: best,
            raw_horizon: raw,
            dipped,
            distances,
        });
    }

    Ok(HorizonReport {
        lags: sorted_lags,
        tol_ratio,
        rule,
        full_op_norms,
        rows,
        degenerate,
    })
}
