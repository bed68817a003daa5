//! Lag-`n` token–token covariance `C(n)` from exact co-occurrence counts:
//! streaming counts, an implicit covariance operator, its operator and
//! Frobenius norms, and the empirical data-dependent horizon.

mod counts;
mod horizon;
mod operator;

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use counts::{count_pairs, empty_lags, BoundaryMode, CooccurrenceCounts, LagCounter};
pub use horizon::{empirical_horizon, HorizonReport, HorizonRow, HorizonRule};
pub use operator::{covariance_from_counts, frobenius_norm, CovarianceOperator};

use crate::linalg::{top_singular_value, LinearOperator, PowerIterConfig, SpectralEstimate};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum CovStatsError {
    #[error("token stream is empty")]
    EmptyStream,
    #[error("no lags requested")]
    NoLags,
    #[error("lag {0} is invalid; lags must be positive")]
    InvalidLag(usize),
    #[error("lag {lag} has no pairs: every document is shorter than the lag")]
    EmptyCounts { lag: usize },
    #[error("prefix sizes must be sorted, positive and at most the stream length {total}")]
    BadPrefixes { total: usize },
    #[error("operator norm {op} exceeds Frobenius norm {frob} at lag {lag}")]
    NormOrdering { lag: usize, op: f64, frob: f64 },
    #[error("malformed summary line {line}: {source}")]
    BadSummary { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `‖C‖_op` by power iteration on `CᵀC`.
pub fn operator_norm<T: Scalar, A: LinearOperator<T> + ?Sized>(op: &A, cfg: &PowerIterConfig) -> SpectralEstimate<T> {
    top_singular_value(op, cfg)
}

/// Per-lag record written as one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagCovarianceSummary<T> {
    pub lag: usize,
    pub op_norm: T,
    pub frob_norm: T,
    pub num_pairs: u64,
    pub iters: usize,
    pub residual: T,
    #[serde(default = "yes")]
    pub converged: bool,
}

fn yes() -> bool {
    true
}

// op ≤ frob holds exactly in real arithmetic; this absorbs rounding.
const NORM_ORDER_SLACK: f64 = 1e-9;

/// Norms for one lag. Fails on empty counts and on a violated `op ≤ frob`.
pub fn summarize_lag<T: Scalar>(
    counts: &CooccurrenceCounts,
    cfg: &PowerIterConfig,
) -> Result<LagCovarianceSummary<T>, CovStatsError> {
    let op = covariance_from_counts::<T>(counts)?;
    let est = operator_norm(&op, cfg);
    let frob = op.frobenius_norm();
    if est.value > frob * (T::one() + T::lit(NORM_ORDER_SLACK)) {
        return Err(CovStatsError::NormOrdering {
            lag: counts.lag,
            op: est.value.to_f64_lossy(),
            frob: frob.to_f64_lossy(),
        });
    }
    Ok(LagCovarianceSummary {
        lag: counts.lag,
        op_norm: est.value,
        frob_norm: frob,
        num_pairs: counts.num_pairs,
        iters: est.iters,
        residual: est.residual,
        converged: est.converged,
    })
}

/// Norms for every nonempty lag, computed in parallel. Empty lags are skipped;
/// callers list them with [`empty_lags`].
pub fn summarize<T: Scalar>(
    counts: &[CooccurrenceCounts],
    cfg: &PowerIterConfig,
) -> Result<Vec<LagCovarianceSummary<T>>, CovStatsError> {
    counts
        .par_iter()
        .filter(|c| !c.is_empty())
        .map(|c| summarize_lag(c, cfg))
        .collect()
}

pub fn write_summaries<T: Scalar + Serialize, W: Write>(
    summaries: &[LagCovarianceSummary<T>],
    mut w: W,
) -> Result<(), CovStatsError> {
    for s in summaries {
        let line = serde_json::to_string(s).map_err(|e| CovStatsError::Io(e.into()))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summaries<T: Scalar + for<'de> Deserialize<'de>, R: BufRead>(
    r: R,
) -> Result<Vec<LagCovarianceSummary<T>>, CovStatsError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| CovStatsError::BadSummary { line: i + 1, source })?);
    }
    Ok(out)
}
