//! The loss-curve table shared with training harnesses: one record per
//! `(dataset, arch, T, P, n)` with the loss in nats.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TheoryError;
use crate::scalar::Scalar;

pub const LOSS_CSV_HEADER: [&str; 6] = ["dataset", "arch", "T", "P", "n", "loss"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord<T> {
    pub dataset: String,
    pub arch: String,
    /// Context length `T`.
    pub context: usize,
    /// Training tokens `P`.
    pub tokens: T,
    /// Horizon `n`.
    pub n: usize,
    /// `L_n` in nats.
    pub loss: T,
}

/// One curve `n ↦ L_n` at fixed `(dataset, arch, T, P)`, sorted by `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCurve<T> {
    pub dataset: String,
    pub arch: String,
    pub context: usize,
    pub tokens: T,
    pub points: Vec<(usize, T)>,
}

impl<T: Scalar> LossCurve<T> {
    pub fn loss_at(&self, n: usize) -> Option<T> {
        self.points
            .binary_search_by_key(&n, |p| p.0)
            .ok()
            .map(|i| self.points[i].1)
    }

    /// Mean of `L_n` over the curve's horizons.
    pub fn autoregressive_loss(&self) -> T {
        let n = T::from_usize_lossy(self.points.len());
        self.points.iter().map(|p| p.1).sum::<T>() / n
    }
}

/// A loss increase along `n` larger than the declared tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    pub dataset: String,
    pub arch: String,
    pub context: usize,
    pub tokens: f64,
    pub n: usize,
    pub increase: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossCurveSet<T> {
    pub records: Vec<LossRecord<T>>,
}

impl<T: Scalar> LossCurveSet<T> {
    pub fn new(records: Vec<LossRecord<T>>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Groups records into curves ordered by `(dataset, arch, T, P)`.
    pub fn curves(&self) -> Vec<LossCurve<T>> {
        let mut idx: Vec<usize> = (0..self.records.len()).collect();
        let key = |r: &LossRecord<T>| (r.dataset.clone(), r.arch.clone(), r.context);
        idx.sort_by(|&a, &b| {
            let (ra, rb) = (&self.records[a], &self.records[b]);
            key(ra)
                .cmp(&key(rb))
                .then(ra.tokens.partial_cmp(&rb.tokens).expect("finite P"))
                .then(ra.n.cmp(&rb.n))
        });
        let mut out: Vec<LossCurve<T>> = Vec::new();
        for i in idx {
            let r = &self.records[i];
            match out.last_mut() {
                Some(c) if c.dataset == r.dataset && c.arch == r.arch && c.context == r.context && c.tokens == r.tokens => {
                    c.points.push((r.n, r.loss))
                }
                _ => out.push(LossCurve {
                    dataset: r.dataset.clone(),
                    arch: r.arch.clone(),
                    context: r.context,
                    tokens: r.tokens,
                    points: vec![(r.n, r.loss)],
                }),
            }
        }
        out
    }

    /// Increases of `L_n` in `n` above `tolerance`; reported, never rejected.
    pub fn monotonicity_violations(&self, tolerance: T) -> Vec<MonotonicityViolation> {
        let mut out = Vec::new();
        for c in self.curves() {
            for w in c.points.windows(2) {
                let inc = w[1].1 - w[0].1;
                if inc > tolerance {
                    out.push(MonotonicityViolation {
                        dataset: c.dataset.clone(),
                        arch: c.arch.clone(),
                        context: c.context,
                        tokens: c.tokens.to_f64_lossy(),
                        n: w[1].0,
                        increase: inc.to_f64_lossy(),
                    });
                }
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TheoryError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(LOSS_CSV_HEADER)?;
        for r in &self.records {
            wr.write_record([
                r.dataset.clone(),
                r.arch.clone(),
                r.context.to_string(),
                format_tokens(r.tokens.to_f64_lossy()),
                r.n.to_string(),
                format!("{:.9e}", r.loss.to_f64_lossy()),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Strict reader: exact header, six fields per row, finite values,
    /// nonnegative losses, `T ≥ 1`, `P > 0`, no duplicate records.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, TheoryError> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header = rd.headers()?.clone();
        if header.iter().map(str::trim).ne(LOSS_CSV_HEADER) {
            return Err(TheoryError::Schema {
                line: 1,
                message: format!("header must be `{}`, found `{}`", LOSS_CSV_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut records = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (i, row) in rd.records().enumerate() {
            let line = i + 2;
            let row = row?;
            let bad = |message: String| TheoryError::Schema { line, message };
            if row.len() != 6 {
                return Err(bad(format!("expected 6 fields, found {}", row.len())));
            }
            let context: usize = row[2].trim().parse().map_err(|e| bad(format!("T: {e}")))?;
            let tokens: f64 = row[3].trim().parse().map_err(|e| bad(format!("P: {e}")))?;
            let n: usize = row[4].trim().parse().map_err(|e| bad(format!("n: {e}")))?;
            let loss: f64 = row[5].trim().parse().map_err(|e| bad(format!("loss: {e}")))?;
            if context == 0 {
                return Err(bad("T must be at least 1".into()));
            }
            if !(tokens.is_finite() && tokens > 0.0) {
                return Err(bad(format!("P must be positive and finite, found {tokens}")));
            }
            if !(loss.is_finite() && loss >= 0.0) {
                return Err(bad(format!("loss must be nonnegative and finite, found {loss}")));
            }
            let key = (row[0].to_string(), row[1].to_string(), context, tokens.to_bits(), n);
            if !seen.insert(key) {
                return Err(bad("duplicate (dataset, arch, T, P, n) record".into()));
            }
            records.push(LossRecord {
                dataset: row[0].to_string(),
                arch: row[1].to_string(),
                context,
                tokens: T::lit(tokens),
                n,
                loss: T::lit(loss),
            });
        }
        Ok(Self { records })
    }

    pub fn save(&self, path: &Path) -> Result<(), TheoryError> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self, TheoryError> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Integral token counts print without exponent or fraction.
fn format_tokens(p: f64) -> String {
    if p.fract() == 0.0 && p.abs() < 1e15 {
        format!("{p:.0}")
    } else {
        format!("{p:e}")
    }
}
