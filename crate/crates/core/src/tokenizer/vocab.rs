use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use super::bytemap::{bytes_to_string, string_to_bytes};
use super::{normalize_document, pretokenize, DocSplit, TokenStream, TokenizerError, BASE_SYMBOLS};

pub const VOCAB_FORMAT_VERSION: u32 = 1;

/// A trained byte-level BPE vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    /// Merge rules in training order, as (left id, right id).
    merges: Vec<(u32, u32)>,
    /// Byte content of every non-special id.
    tokens: Vec<Vec<u8>>,
    token_to_id: HashMap<Vec<u8>, u32>,
    /// (left, right) -> (rank, merged id).
    ranks: FxHashMap<(u32, u32), (u32, u32)>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    version: u32,
    size: usize,
    merges: Vec<[String; 2]>,
    specials: Specials,
}

#[derive(Serialize, Deserialize)]
struct Specials {
    eos: u32,
}

impl Vocabulary {
    fn base() -> Self {
        let tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        let token_to_id = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            merges: Vec::new(),
            tokens,
            token_to_id,
            ranks: FxHashMap::default(),
        }
    }

    /// Appends a merge rule and returns the id of its result. A merge whose
    /// byte string already exists reuses that id instead of growing the table.
    fn push_merge(&mut self, left: u32, right: u32) -> u32 {
        let mut bytes = self.tokens[left as usize].clone();
        bytes.extend_from_slice(&self.tokens[right as usize]);
        let id = match self.token_to_id.get(&bytes) {
            Some(&id) => id,
            None => {
                let id = self.tokens.len() as u32;
                self.tokens.push(bytes.clone());
                self.token_to_id.insert(bytes, id);
                id
            }
        };
        let rank = self.merges.len() as u32;
        self.merges.push((left, right));
        self.ranks.entry((left, right)).or_insert((rank, id));
        id
    }

    /// Total number of ids including EOS.
    pub fn size(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn eos(&self) -> u32 {
        self.tokens.len() as u32
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    /// Byte content of a token; `None` for EOS or out-of-range ids.
    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    /// Printable form of a token, as stored in the vocabulary file.
    pub fn token_str(&self, id: u32) -> Option<String> {
        self.token_bytes(id).map(bytes_to_string)
    }

    /// Id of a token given in its printable form.
    pub fn id_of(&self, token: &str) -> Option<u32> {
        string_to_bytes(token).and_then(|b| self.token_to_id.get(&b).copied())
    }

    /// Encodes one pre-tokenized word by applying merges in rank order.
    pub fn encode_word(&self, word: &[u8]) -> Vec<u32> {
        let mut syms: Vec<u32> = word.iter().map(|&b| b as u32).collect();
        while syms.len() > 1 {
            let best = syms
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0], w[1])).copied())
                .min_by_key(|&(rank, _)| rank);
            let Some((rank, merged)) = best else { break };
            let (l, r) = self.merges[rank as usize];
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == l && syms[i + 1] == r {
                    out.push(merged);
                    i += 2;
                } else {
                    out.push(syms[i]);
                    i += 1;
                }
            }
            syms = out;
        }
        syms
    }

    pub fn to_json(&self) -> Result<String, TokenizerError> {
        let file = VocabFile {
            version: VOCAB_FORMAT_VERSION,
            size: self.size(),
            merges: self
                .merges
                .iter()
                .map(|&(l, r)| {
                    [
                        bytes_to_string(&self.tokens[l as usize]),
                        bytes_to_string(&self.tokens[r as usize]),
                    ]
                })
                .collect(),
            specials: Specials { eos: self.eos() },
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Rebuilds a vocabulary from its JSON form, checking size and EOS id.
    pub fn from_json(json: &str) -> Result<Self, TokenizerError> {
        let file: VocabFile = serde_json::from_str(json)?;
        if file.version != VOCAB_FORMAT_VERSION {
            return Err(TokenizerError::BadVocabulary(format!(
                "unsupported version {}",
                file.version
            )));
        }
        let mut vocab = Self::base();
        for [l, r] in &file.merges {
            let lookup = |s: &str| {
                vocab
                    .id_of(s)
                    .ok_or_else(|| TokenizerError::BadVocabulary(format!("merge references unknown token {s:?}")))
            };
            let (li, ri) = (lookup(l)?, lookup(r)?);
            vocab.push_merge(li, ri);
        }
        if vocab.size() != file.size || vocab.eos() != file.specials.eos {
            return Err(TokenizerError::BadVocabulary(format!(
                "declared size {} / eos {} but merges yield size {} / eos {}",
                file.size,
                file.specials.eos,
                vocab.size(),
                vocab.eos()
            )));
        }
        Ok(vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TokenizerError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TokenizerError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Heap entry: highest count first, then the lexicographically smallest
/// (left bytes, right bytes).
#[derive(PartialEq, Eq)]
struct Candidate {
    count: u64,
    key: Reverse<(Vec<u8>, Vec<u8>)>,
    pair: (u32, u32),
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| self.key.cmp(&other.key))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn word_pairs(syms: &[u32]) -> impl Iterator<Item = (u32, u32)> + '_ {
    syms.windows(2).map(|w| (w[0], w[1]))
}

/// Trains a byte-level BPE vocabulary with exactly `vocab_size` ids
/// (256 bytes, merged tokens, EOS).
///
/// Each step merges the most frequent adjacent pair, breaking count ties by
/// the lexicographically smallest (left, right) byte strings, so training is
/// a deterministic function of the corpus.
pub fn train_bpe<S: AsRef<str> + Sync>(documents: &[S], vocab_size: usize) -> Result<Vocabulary, TokenizerError> {
    let minimum = BASE_SYMBOLS + 1;
    if vocab_size < minimum {
        return Err(TokenizerError::VocabTooSmall {
            requested: vocab_size,
            minimum,
        });
    }

    let word_counts: HashMap<Vec<u8>, u64> = documents
        .par_iter()
        .map(|d| {
            let norm = normalize_document(d.as_ref());
            let mut local: HashMap<Vec<u8>, u64> = HashMap::new();
            for w in pretokenize(&norm) {
                *local.entry(w.to_vec()).or_default() += 1;
            }
            local
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        });
    if word_counts.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    let mut words: Vec<(Vec<u32>, u64)> = word_counts
        .into_iter()
        .map(|(w, c)| (w.into_iter().map(u32::from).collect(), c))
        .collect();
    words.sort_unstable();

    let mut vocab = Vocabulary::base();
    let mut pair_counts: FxHashMap<(u32, u32), u64> = FxHashMap::default();
    let mut where_: FxHashMap<(u32, u32), FxHashSet<usize>> = FxHashMap::default();
    for (idx, (syms, c)) in words.iter().enumerate() {
        for p in word_pairs(syms) {
            *pair_counts.entry(p).or_default() += c;
            where_.entry(p).or_default().insert(idx);
        }
    }
    let candidate = |vocab: &Vocabulary, pair: (u32, u32), count: u64| Candidate {
        count,
        key: Reverse((
            vocab.tokens[pair.0 as usize].clone(),
            vocab.tokens[pair.1 as usize].clone(),
        )),
        pair,
    };
    let mut heap: BinaryHeap<Candidate> = pair_counts
        .iter()
        .map(|(&p, &c)| candidate(&vocab, p, c))
        .collect();

    while vocab.size() < vocab_size {
        let Some(top) = heap.pop() else { break };
        let current = pair_counts.get(&top.pair).copied().unwrap_or(0);
        if current != top.count {
            continue;
        }
        if current == 0 {
            break;
        }
        let (l, r) = top.pair;
        let merged = vocab.push_merge(l, r);

        let mut touched: FxHashSet<(u32, u32)> = FxHashSet::default();
        let mut affected: Vec<usize> = where_.remove(&top.pair).into_iter().flatten().collect();
        affected.sort_unstable();
        for idx in affected {
            let (syms, c) = &mut words[idx];
            if !syms.windows(2).any(|w| w[0] == l && w[1] == r) {
                continue;
            }
            for p in word_pairs(syms) {
                let e = pair_counts.get_mut(&p).expect("pair counted");
                *e -= *c;
                touched.insert(p);
            }
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == l && syms[i + 1] == r {
                    out.push(merged);
                    i += 2;
                } else {
                    out.push(syms[i]);
                    i += 1;
                }
            }
            *syms = out;
            for p in word_pairs(syms) {
                *pair_counts.entry(p).or_default() += *c;
                where_.entry(p).or_default().insert(idx);
                touched.insert(p);
            }
        }
        let mut touched: Vec<_> = touched.into_iter().collect();
        touched.sort_unstable();
        for p in touched {
            let c = pair_counts[&p];
            if c == 0 {
                pair_counts.remove(&p);
            } else {
                heap.push(candidate(&vocab, p, c));
            }
        }
    }

    if vocab.size() < vocab_size {
        return Err(TokenizerError::CorpusTooSmall {
            requested: vocab_size,
            achievable: vocab.size(),
        });
    }
    Ok(vocab)
}

/// Encodes documents in parallel and joins them with one EOS between
/// consecutive documents. Empty documents (after normalization) are dropped.
pub fn encode_documents<S: AsRef<str> + Sync>(documents: &[S], vocab: &Vocabulary) -> TokenStream {
    const SHARD: usize = 256;
    let shards: Vec<Vec<Vec<u32>>> = documents
        .par_chunks(SHARD)
        .map(|chunk| {
            let mut cache: HashMap<Vec<u8>, Vec<u32>> = HashMap::new();
            chunk
                .iter()
                .filter_map(|d| {
                    let norm = normalize_document(d.as_ref());
                    if norm.is_empty() {
                        return None;
                    }
                    let mut ids = Vec::new();
                    for w in pretokenize(&norm) {
                        let enc = cache.entry(w.to_vec()).or_insert_with(|| vocab.encode_word(w));
                        ids.extend_from_slice(enc);
                    }
                    Some(ids)
                })
                .collect()
        })
        .collect();

    let eos = vocab.eos();
    let mut ids = Vec::new();
    for doc in shards.into_iter().flatten() {
        if !ids.is_empty() {
            ids.push(eos);
        }
        ids.extend(doc);
    }
    TokenStream::new(ids, vocab.size() as u32).expect("encoder emits in-range ids")
}

/// Splits raw text into documents and encodes them.
pub fn encode(text: &str, vocab: &Vocabulary, split: &DocSplit) -> TokenStream {
    encode_documents(&split.split(text), vocab)
}

/// Decodes a stream back to its normalized documents.
pub fn decode_documents(stream: &TokenStream, vocab: &Vocabulary) -> Result<Vec<String>, TokenizerError> {
    if stream.vocab_size() as usize != vocab.size() {
        return Err(TokenizerError::BadStream(format!(
            "stream vocabulary size {} does not match vocabulary size {}",
            stream.vocab_size(),
            vocab.size()
        )));
    }
    stream
        .documents()
        .map(|doc| {
            let mut bytes = Vec::new();
            for &id in doc {
                bytes.extend_from_slice(vocab.token_bytes(id).ok_or(TokenizerError::IdOutOfRange {
                    id,
                    vocab_size: stream.vocab_size(),
                })?);
            }
            String::from_utf8(bytes).map_err(|_| TokenizerError::InvalidUtf8)
        })
        .collect()
}
