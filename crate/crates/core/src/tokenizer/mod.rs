//! Text to token streams: NFC normalization, whitespace pre-tokenization and
//! byte-level BPE.
//!
//! Every document is normalized to NFC and its whitespace runs collapse to a
//! single space. Words after the first carry a leading space byte, which is the
//! word-start marker. The base alphabet is all 256 bytes, so encoding never
//! meets an unknown symbol. Ids `0..256` are the bytes, merged tokens follow
//! in merge order, and the last id `V - 1` is the end-of-sequence token that
//! separates documents.

mod bytemap;
mod stream;
mod vocab;

use std::borrow::Cow;

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

pub use stream::{TokenStream, TOKEN_STREAM_MAGIC, TOKEN_STREAM_VERSION};
pub use vocab::{decode_documents, encode, encode_documents, train_bpe, Vocabulary, VOCAB_FORMAT_VERSION};

/// Number of base symbols (one per byte value).
pub const BASE_SYMBOLS: usize = 256;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("corpus is empty after normalization")]
    EmptyCorpus,
    #[error("vocab_size {requested} is below the minimum {minimum} (256 byte symbols + EOS)")]
    VocabTooSmall { requested: usize, minimum: usize },
    #[error("corpus supports at most {achievable} vocabulary entries, {requested} requested")]
    CorpusTooSmall { requested: usize, achievable: usize },
    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    IdOutOfRange { id: u32, vocab_size: u32 },
    #[error("malformed vocabulary file: {0}")]
    BadVocabulary(String),
    #[error("malformed token stream: {0}")]
    BadStream(String),
    #[error("decoded bytes are not valid UTF-8")]
    InvalidUtf8,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// How a raw text source is cut into documents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DocSplit {
    /// The whole input is one document.
    Whole,
    /// One document per non-blank line.
    Lines,
    /// Documents separated by one or more blank lines.
    BlankLines,
    /// Documents separated by a literal marker such as `<|endoftext|>`.
    Delimiter(String),
}

impl DocSplit {
    /// Splits `text` into raw (unnormalized) documents, dropping empty ones.
    pub fn split<'a>(&self, text: &'a str) -> Vec<&'a str> {
        let raw: Vec<&str> = match self {
            DocSplit::Whole => vec![text],
            DocSplit::Lines => text.lines().collect(),
            DocSplit::BlankLines => {
                let mut docs = Vec::new();
                let mut start: Option<usize> = None;
                let mut end = 0;
                let mut offset = 0;
                for line in text.split_inclusive('\n') {
                    let blank = line.trim().is_empty();
                    if blank {
                        if let Some(s) = start.take() {
                            docs.push(&text[s..end]);
                        }
                    } else {
                        if start.is_none() {
                            start = Some(offset);
                        }
                        end = offset + line.len();
                    }
                    offset += line.len();
                }
                if let Some(s) = start {
                    docs.push(&text[s..end]);
                }
                docs
            }
            DocSplit::Delimiter(d) => text.split(d.as_str()).collect(),
        };
        raw.into_iter().filter(|d| !d.trim().is_empty()).collect()
    }
}

impl std::str::FromStr for DocSplit {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "whole" => DocSplit::Whole,
            "line" | "lines" => DocSplit::Lines,
            "blank" | "blank-lines" => DocSplit::BlankLines,
            other => match other.strip_prefix("delim:") {
                Some(d) if !d.is_empty() => DocSplit::Delimiter(d.to_string()),
                _ => return Err(format!("unknown document split `{s}` (whole|lines|blank|delim:<marker>)")),
            },
        })
    }
}

/// NFC-normalizes a document and collapses whitespace runs to one space,
/// trimming both ends. This is the text that decoding reproduces exactly.
pub fn normalize_document(doc: &str) -> String {
    let nfc: Cow<'_, str> = if doc.is_ascii() {
        Cow::Borrowed(doc)
    } else {
        Cow::Owned(doc.nfc().collect())
    };
    let mut out = String::with_capacity(nfc.len());
    for word in nfc.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Pre-tokenizes a normalized document into byte words, marking every word
/// after the first with a leading space.
pub fn pretokenize(normalized: &str) -> impl Iterator<Item = &[u8]> {
    // After normalization words are separated by exactly one space, so each
    // word keeps the space in front of it.
    let bytes = normalized.as_bytes();
    let mut starts = vec![0usize];
    starts.extend(
        bytes
            .iter()
            .enumerate()
            .filter(|&(i, &b)| b == b' ' && i > 0)
            .map(|(i, _)| i),
    );
    let n = starts.len();
    (0..n).filter_map(move |k| {
        let s = starts[k];
        let e = if k + 1 < n { starts[k + 1] } else { bytes.len() };
        (e > s).then(|| &bytes[s..e])
    })
}
