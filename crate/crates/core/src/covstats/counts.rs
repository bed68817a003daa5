use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use super::CovStatsError;
use crate::tokenizer::TokenStream;

/// Exact lag-`n` pair counts over valid positions.
///
/// `pairs` holds `(μ, ν, count)` sorted by `(μ, ν)`, counting positions `i`
/// with `x_i = μ` and `x_{i+n} = ν`. `left` and `right` are the marginals of
/// those same positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CooccurrenceCounts {
    pub lag: usize,
    pub vocab_size: usize,
    pub pairs: Vec<(u32, u32, u64)>,
    pub left: Vec<u64>,
    pub right: Vec<u64>,
    pub num_pairs: u64,
}

impl CooccurrenceCounts {
    pub fn empty(lag: usize, vocab_size: usize) -> Self {
        Self {
            lag,
            vocab_size,
            pairs: Vec::new(),
            left: vec![0; vocab_size],
            right: vec![0; vocab_size],
            num_pairs: 0,
        }
    }

    fn from_pairs(lag: usize, vocab_size: usize, pairs: Vec<(u32, u32, u64)>) -> Self {
        let mut left = vec![0u64; vocab_size];
        let mut right = vec![0u64; vocab_size];
        let mut total = 0u64;
        for &(a, b, c) in &pairs {
            left[a as usize] += c;
            right[b as usize] += c;
            total += c;
        }
        Self {
            lag,
            vocab_size,
            pairs,
            left,
            right,
            num_pairs: total,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.num_pairs == 0
    }

    pub fn pair_count(&self, mu: u32, nu: u32) -> u64 {
        self.pairs
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&(mu, nu)))
            .map(|i| self.pairs[i].2)
            .unwrap_or(0)
    }

    /// Exact addition of counts from a disjoint shard at the same lag.
    pub fn merge(&mut self, other: &CooccurrenceCounts) {
        assert_eq!(self.lag, other.lag, "merging different lags");
        assert_eq!(self.vocab_size, other.vocab_size);
        let mut out = Vec::with_capacity(self.pairs.len() + other.pairs.len());
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.pairs, &other.pairs);
        while i < a.len() || j < b.len() {
            let take_a = j >= b.len() || (i < a.len() && (a[i].0, a[i].1) <= (b[j].0, b[j].1));
            let take_b = i >= a.len() || (j < b.len() && (b[j].0, b[j].1) <= (a[i].0, a[i].1));
            if take_a && take_b {
                out.push((a[i].0, a[i].1, a[i].2 + b[j].2));
                i += 1;
                j += 1;
            } else if take_a {
                out.push(a[i]);
                i += 1;
            } else {
                out.push(b[j]);
                j += 1;
            }
        }
        self.pairs = out;
        for (x, y) in self.left.iter_mut().zip(&other.left) {
            *x += y;
        }
        for (x, y) in self.right.iter_mut().zip(&other.right) {
            *x += y;
        }
        self.num_pairs += other.num_pairs;
    }
}

/// Whether pair windows may straddle an EOS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// EOS is a wall: pairs never cross documents.
    #[default]
    Wall,
    /// EOS tokens are dropped and documents concatenated (sensitivity checks only).
    Cross,
}

// Dense tables are used while V² · |lags| stays under this many cells.
const DENSE_CELL_LIMIT: usize = 1 << 24;

enum Table {
    Dense(Vec<u64>),
    Sparse(FxHashMap<u64, u64>),
}

/// Single-pass counter for several lags at once, backed by a ring buffer of
/// the last `max(lags) + 1` tokens.
pub struct LagCounter {
    lags: Vec<usize>,
    vocab_size: usize,
    eos: u32,
    mode: BoundaryMode,
    ring: Vec<u32>,
    head: usize,
    filled: usize,
    tables: Vec<Table>,
}

impl LagCounter {
    pub fn new(lags: &[usize], vocab_size: usize, mode: BoundaryMode) -> Result<Self, CovStatsError> {
        if lags.is_empty() {
            return Err(CovStatsError::NoLags);
        }
        if let Some(&bad) = lags.iter().find(|&&l| l == 0) {
            return Err(CovStatsError::InvalidLag(bad));
        }
        let mut sorted = lags.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let max_lag = *sorted.last().expect("nonempty");
        let dense = vocab_size.saturating_mul(vocab_size).saturating_mul(sorted.len()) <= DENSE_CELL_LIMIT;
        let tables = sorted
            .iter()
            .map(|_| {
                if dense {
                    Table::Dense(vec![0; vocab_size * vocab_size])
                } else {
                    Table::Sparse(FxHashMap::default())
                }
            })
            .collect();
        Ok(Self {
            lags: sorted,
            vocab_size,
            eos: vocab_size.saturating_sub(1) as u32,
            mode,
            ring: vec![0; max_lag + 1],
            head: 0,
            filled: 0,
            tables,
        })
    }

    pub fn lags(&self) -> &[usize] {
        &self.lags
    }

    #[inline]
    pub fn push(&mut self, token: u32) {
        if token == self.eos {
            if self.mode == BoundaryMode::Wall {
                self.filled = 0;
            }
            return;
        }
        let size = self.ring.len();
        let v = self.vocab_size as u64;
        for (k, &lag) in self.lags.iter().enumerate() {
            if lag > self.filled {
                break;
            }
            let left = self.ring[(self.head + size - lag) % size];
            match &mut self.tables[k] {
                Table::Dense(t) => t[left as usize * self.vocab_size + token as usize] += 1,
                Table::Sparse(m) => *m.entry(left as u64 * v + token as u64).or_insert(0) += 1,
            }
        }
        self.ring[self.head] = token;
        self.head = (self.head + 1) % size;
        self.filled = (self.filled + 1).min(size);
    }

    pub fn extend(&mut self, tokens: &[u32]) {
        for &t in tokens {
            self.push(t);
        }
    }

    /// Current counts, one entry per lag in ascending lag order.
    pub fn snapshot(&self) -> Vec<CooccurrenceCounts> {
        let v = self.vocab_size;
        self.lags
            .iter()
            .zip(&self.tables)
            .map(|(&lag, table)| {
                let pairs = match table {
                    Table::Dense(t) => t
                        .iter()
                        .enumerate()
                        .filter(|&(_, &c)| c > 0)
                        .map(|(i, &c)| ((i / v) as u32, (i % v) as u32, c))
                        .collect(),
                    Table::Sparse(m) => {
                        let mut p: Vec<_> = m
                            .iter()
                            .map(|(&k, &c)| ((k / v as u64) as u32, (k % v as u64) as u32, c))
                            .collect();
                        p.sort_unstable();
                        p
                    }
                };
                CooccurrenceCounts::from_pairs(lag, v, pairs)
            })
            .collect()
    }
}

/// Counts lag pairs for every lag in `lags` in one pass over the stream.
///
/// Under [`BoundaryMode::Wall`] the stream is sharded at document boundaries
/// and the shards are counted in parallel, then merged by exact addition.
/// Lags that no document is long enough to contain come back empty; use
/// [`empty_lags`] to list them.
pub fn count_pairs(
    stream: &TokenStream,
    lags: &[usize],
    mode: BoundaryMode,
) -> Result<Vec<CooccurrenceCounts>, CovStatsError> {
    if stream.is_empty() {
        return Err(CovStatsError::EmptyStream);
    }
    let vocab_size = stream.vocab_size() as usize;
    LagCounter::new(lags, vocab_size, mode)?;
    let ids = stream.ids();

    let shards: Vec<&[u32]> = match mode {
        BoundaryMode::Cross => vec![ids],
        BoundaryMode::Wall => {
            let threads = rayon::current_num_threads().max(1);
            let target = ids.len().div_ceil(threads * 4).max(1 << 16);
            let eos = stream.eos();
            let mut out = Vec::new();
            let mut start = 0;
            while start < ids.len() {
                let mut end = (start + target).min(ids.len());
                while end < ids.len() && ids[end - 1] != eos {
                    end += 1;
                }
                out.push(&ids[start..end]);
                start = end;
            }
            out
        }
    };

    let partials: Vec<Vec<CooccurrenceCounts>> = shards
        .par_iter()
        .map(|shard| {
            let mut c = LagCounter::new(lags, vocab_size, mode).expect("lags validated");
            c.extend(shard);
            c.snapshot()
        })
        .collect();
    let mut iter = partials.into_iter();
    let mut total = iter.next().expect("at least one shard");
    for part in iter {
        for (t, p) in total.iter_mut().zip(&part) {
            t.merge(p);
        }
    }
    Ok(total)
}

/// Lags whose counts hold no pairs at all.
pub fn empty_lags(counts: &[CooccurrenceCounts]) -> Vec<usize> {
    counts.iter().filter(|c| c.is_empty()).map(|c| c.lag).collect()
}
