//! Synthetic corpora with known correlation structure, used as ground truth
//! for the measurement pipeline.
//!
//! Three processes are available: i.i.d. draws, first-order Markov chains
//! (whose lagged covariances are known in closed form, see
//! [`analytic_covariance`]) and a power-law copy process whose correlations
//! decay algebraically with the lag.

mod markov;

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use markov::{analytic_covariance, check_ergodic, stationary_distribution};

use crate::tokenizer::TokenStream;

/// Row sums of transition matrices and base laws must be within this of 1.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Upper end of the copy-lag distribution.
pub const DEFAULT_MAX_LAG: usize = 1024;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("markov chain is not ergodic: {0}")]
    NotErgodic(String),
    #[error("spec file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Process {
    /// Independent draws from `probs` (uniform when absent).
    Iid {
        #[serde(default)]
        probs: Option<Vec<f64>>,
    },
    /// Order-1 chain; the first token of each document is drawn from the
    /// stationary law.
    Markov { transition: Vec<Vec<f64>> },
    /// Each token is, with probability `copy_prob`, a copy of the token
    /// `ℓ` positions back, `P(ℓ) ∝ ℓ^−(1 + lag_exponent)` on
    /// `1..=max_lag`; a copy is replaced by a fresh draw with probability
    /// `noise_prob`. Fresh tokens come from `base` (uniform when absent), as
    /// do copies reaching before the document start.
    PowerlawCopy {
        copy_prob: f64,
        lag_exponent: f64,
        #[serde(default)]
        noise_prob: f64,
        #[serde(default)]
        base: Option<Vec<f64>>,
        #[serde(default = "default_max_lag")]
        max_lag: usize,
    },
}

fn default_max_lag() -> usize {
    DEFAULT_MAX_LAG
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DocLength {
    /// One document holding the whole stream.
    #[default]
    Single,
    Fixed { length: usize },
    /// Uniform on `min..=max`.
    Uniform { min: usize, max: usize },
    /// Geometric with the given mean (at least 1).
    Geometric { mean: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Number of content symbols; the emitted stream appends EOS as id `V`.
    pub vocab_size: usize,
    /// Content tokens, excluding EOS separators.
    pub length: usize,
    pub seed: u64,
    pub process: Process,
    #[serde(default)]
    pub doc_length: DocLength,
}

fn check_law(name: &str, p: &[f64], v: usize) -> Result<(), SynthError> {
    if p.len() != v {
        return Err(SynthError::InvalidSpec(format!("{name} has {} entries, expected {v}", p.len())));
    }
    if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(SynthError::InvalidSpec(format!("{name} has entries outside [0, 1]")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PROB_SUM_TOL {
        return Err(SynthError::InvalidSpec(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

fn unit(name: &str, x: f64) -> Result<(), SynthError> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(SynthError::InvalidSpec(format!("{name} = {x} is not a probability")))
    }
}

impl SynthSpec {
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let spec: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let v = self.vocab_size;
        if v == 0 || v >= u32::MAX as usize {
            return Err(SynthError::InvalidSpec(format!("vocab_size {v} out of range")));
        }
        match &self.process {
            Process::Iid { probs } => {
                if let Some(p) = probs {
                    check_law("probs", p, v)?;
                }
            }
            Process::Markov { transition } => {
                if transition.len() != v {
                    return Err(SynthError::InvalidSpec(format!(
                        "transition has {} rows, expected {v}",
                        transition.len()
                    )));
                }
                for (i, row) in transition.iter().enumerate() {
                    check_law(&format!("transition row {i}"), row, v)?;
                }
                check_ergodic(transition)?;
            }
            Process::PowerlawCopy {
                copy_prob,
                lag_exponent,
                noise_prob,
                base,
                max_lag,
            } => {
                unit("copy_prob", *copy_prob)?;
                unit("noise_prob", *noise_prob)?;
                if !lag_exponent.is_finite() {
                    return Err(SynthError::InvalidSpec("lag_exponent must be finite".into()));
                }
                if *max_lag == 0 {
                    return Err(SynthError::InvalidSpec("max_lag must be positive".into()));
                }
                if let Some(p) = base {
                    check_law("base", p, v)?;
                }
            }
        }
        match self.doc_length {
            DocLength::Fixed { length: 0 } => Err(SynthError::InvalidSpec("fixed document length must be positive".into())),
            DocLength::Uniform { min, max } if min == 0 || min > max => {
                Err(SynthError::InvalidSpec(format!("uniform document lengths need 1 ≤ min ≤ max, got {min}..{max}")))
            }
            DocLength::Geometric { mean } if !(mean >= 1.0) => {
                Err(SynthError::InvalidSpec(format!("geometric mean length must be at least 1, got {mean}")))
            }
            _ => Ok(()),
        }
    }

    fn document_lengths(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::new();
        let mut left = self.length;
        while left > 0 {
            let len = match self.doc_length {
                DocLength::Single => left,
                DocLength::Fixed { length } => length,
                DocLength::Uniform { min, max } => rng.random_range(min..=max),
                DocLength::Geometric { mean } => {
                    // support {1, 2, …} with the requested mean
                    let p = 1.0 / mean;
                    let mut k = 1;
                    while !rng.random_bool(p) {
                        k += 1;
                    }
                    k
                }
            };
            let len = len.min(left);
            out.push(len);
            left -= len;
        }
        out
    }
}

/// Samplers shared by every document.
enum Sampler {
    Iid(Option<WeightedIndex<f64>>),
    Markov {
        start: WeightedIndex<f64>,
        rows: Vec<WeightedIndex<f64>>,
    },
    Copy {
        copy_prob: f64,
        noise_prob: f64,
        lags: WeightedIndex<f64>,
        base: Option<WeightedIndex<f64>>,
    },
}

fn weighted(p: &[f64]) -> Result<WeightedIndex<f64>, SynthError> {
    WeightedIndex::new(p).map_err(|e| SynthError::InvalidSpec(e.to_string()))
}

impl Sampler {
    fn new(spec: &SynthSpec) -> Result<Self, SynthError> {
        Ok(match &spec.process {
            Process::Iid { probs } => Self::Iid(probs.as_deref().map(weighted).transpose()?),
            Process::Markov { transition } => Self::Markov {
                start: weighted(&stationary_distribution(transition)?)?,
                rows: transition.iter().map(|r| weighted(r)).collect::<Result<_, _>>()?,
            },
            Process::PowerlawCopy {
                copy_prob,
                lag_exponent,
                noise_prob,
                base,
                max_lag,
            } => {
                let w: Vec<f64> = (1..=*max_lag).map(|l| (l as f64).powf(-(1.0 + lag_exponent))).collect();
                Self::Copy {
                    copy_prob: *copy_prob,
                    noise_prob: *noise_prob,
                    lags: weighted(&w)?,
                    base: base.as_deref().map(weighted).transpose()?,
                }
            }
        })
    }

    fn fresh(base: &Option<WeightedIndex<f64>>, v: usize, rng: &mut ChaCha8Rng) -> u32 {
        match base {
            Some(w) => w.sample(rng) as u32,
            None => rng.random_range(0..v as u32),
        }
    }

    fn document(&self, len: usize, v: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
        let mut doc = Vec::with_capacity(len);
        match self {
            Self::Iid(w) => doc.extend((0..len).map(|_| Self::fresh(w, v, rng))),
            Self::Markov { start, rows } => {
                let mut s = start.sample(rng);
                doc.push(s as u32);
                for _ in 1..len {
                    s = rows[s].sample(rng);
                    doc.push(s as u32);
                }
            }
            Self::Copy {
                copy_prob,
                noise_prob,
                lags,
                base,
            } => {
                for t in 0..len {
                    let tok = if rng.random_bool(*copy_prob) {
                        let lag = lags.sample(rng) + 1;
                        if lag <= t && !rng.random_bool(*noise_prob) {
                            doc[t - lag]
                        } else {
                            Self::fresh(base, v, rng)
                        }
                    } else {
                        Self::fresh(base, v, rng)
                    };
                    doc.push(tok);
                }
            }
        }
        doc
    }
}

/// Generates the corpus described by `spec`: content ids `0..V`, documents
/// separated by EOS (`V`). Document lengths come from the seed's stream 0;
/// document `i` is generated from stream `i + 1`, so the output does not
/// depend on thread scheduling.
pub fn generate(spec: &SynthSpec) -> Result<TokenStream, SynthError> {
    spec.validate()?;
    let sampler = Sampler::new(spec)?;
    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    let lengths = spec.document_lengths(&mut master);
    let v = spec.vocab_size;
    let docs: Vec<Vec<u32>> = lengths
        .par_iter()
        .enumerate()
        .map(|(i, &len)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64 + 1);
            sampler.document(len, v, &mut rng)
        })
        .collect();
    Ok(TokenStream::from_documents(&docs, (v + 1) as u32).expect("ids below vocab_size"))
}
