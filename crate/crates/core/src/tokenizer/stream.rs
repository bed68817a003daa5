use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::TokenizerError;

pub const TOKEN_STREAM_MAGIC: [u8; 4] = *b"LSTK";
pub const TOKEN_STREAM_VERSION: u32 = 1;

/// A corpus as a flat id sequence. The last id of the vocabulary (`V - 1`) is
/// EOS and separates documents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenStream {
    ids: Vec<u32>,
    vocab_size: u32,
}

impl TokenStream {
    /// Validates that every id is below `vocab_size`.
    pub fn new(ids: Vec<u32>, vocab_size: u32) -> Result<Self, TokenizerError> {
        if vocab_size == 0 {
            return Err(TokenizerError::BadStream("vocabulary size must be positive".into()));
        }
        if let Some(&id) = ids.iter().find(|&&i| i >= vocab_size) {
            return Err(TokenizerError::IdOutOfRange { id, vocab_size });
        }
        Ok(Self { ids, vocab_size })
    }

    /// Joins documents of symbol ids (each `< vocab_size - 1`) with EOS.
    pub fn from_documents<I, D>(docs: I, vocab_size: u32) -> Result<Self, TokenizerError>
    where
        I: IntoIterator<Item = D>,
        D: AsRef<[u32]>,
    {
        let eos = vocab_size.saturating_sub(1);
        let mut ids = Vec::new();
        for (k, d) in docs.into_iter().enumerate() {
            if k > 0 {
                ids.push(eos);
            }
            let d = d.as_ref();
            if let Some(&bad) = d.iter().find(|&&i| i >= eos) {
                return Err(TokenizerError::IdOutOfRange { id: bad, vocab_size: eos });
            }
            ids.extend_from_slice(d);
        }
        Self::new(ids, vocab_size)
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn into_ids(self) -> Vec<u32> {
        self.ids
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn eos(&self) -> u32 {
        self.vocab_size - 1
    }

    pub fn total_tokens(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Positions holding EOS, strictly increasing.
    pub fn doc_boundaries(&self) -> Vec<usize> {
        let eos = self.eos();
        self.ids
            .iter()
            .enumerate()
            .filter(|&(_, &t)| t == eos)
            .map(|(i, _)| i)
            .collect()
    }

    /// Documents as slices between EOS markers (EOS excluded).
    pub fn documents(&self) -> impl Iterator<Item = &[u32]> {
        let eos = self.eos();
        let empty = self.ids.is_empty();
        self.ids.split(move |&t| t == eos).filter(move |_| !empty)
    }

    pub fn num_documents(&self) -> usize {
        if self.ids.is_empty() {
            0
        } else {
            self.doc_boundaries().len() + 1
        }
    }

    pub fn longest_document(&self) -> usize {
        self.documents().map(<[u32]>::len).max().unwrap_or(0)
    }

    /// The first `len` tokens as a new stream.
    pub fn prefix(&self, len: usize) -> TokenStream {
        TokenStream {
            ids: self.ids[..len.min(self.ids.len())].to_vec(),
            vocab_size: self.vocab_size,
        }
    }

    /// Count of each id over the stream.
    pub fn histogram(&self) -> Vec<u64> {
        let mut h = vec![0u64; self.vocab_size as usize];
        for &t in &self.ids {
            h[t as usize] += 1;
        }
        h
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), TokenizerError> {
        w.write_all(&TOKEN_STREAM_MAGIC)?;
        w.write_all(&TOKEN_STREAM_VERSION.to_le_bytes())?;
        w.write_all(&self.vocab_size.to_le_bytes())?;
        w.write_all(&(self.ids.len() as u64).to_le_bytes())?;
        for &id in &self.ids {
            w.write_all(&id.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, TokenizerError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != TOKEN_STREAM_MAGIC {
            return Err(TokenizerError::BadStream(format!("bad magic {magic:?}")));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != TOKEN_STREAM_VERSION {
            return Err(TokenizerError::BadStream(format!("unsupported version {version}")));
        }
        r.read_exact(&mut b4)?;
        let vocab_size = u32::from_le_bytes(b4);
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let total = u64::from_le_bytes(b8) as usize;
        let mut raw = Vec::new();
        r.read_to_end(&mut raw)?;
        if raw.len() != total * 4 {
            return Err(TokenizerError::BadStream(format!(
                "header declares {total} tokens but payload holds {} bytes",
                raw.len()
            )));
        }
        let ids = raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(ids, vocab_size)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TokenizerError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TokenizerError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_layout() {
        let s = TokenStream::new(vec![1, 2, 4, 3], 5).unwrap();
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"LSTK");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 5);
        assert_eq!(u64::from_le_bytes(buf[12..20].try_into().unwrap()), 4);
        assert_eq!(buf.len(), 20 + 16);
        assert_eq!(TokenStream::read_from(&buf[..]).unwrap(), s);
    }

    #[test]
    fn truncated_payload_rejected() {
        let s = TokenStream::new(vec![1, 2, 3], 5).unwrap();
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        buf.pop();
        assert!(TokenStream::read_from(&buf[..]).is_err());
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(matches!(
            TokenStream::new(vec![0, 7], 5),
            Err(TokenizerError::IdOutOfRange { id: 7, .. })
        ));
    }

    #[test]
    fn documents_and_boundaries() {
        let s = TokenStream::from_documents([vec![0, 1], vec![2], vec![1, 1, 0]], 4).unwrap();
        assert_eq!(s.ids(), &[0, 1, 3, 2, 3, 1, 1, 0]);
        assert_eq!(s.doc_boundaries(), vec![2, 4]);
        assert_eq!(s.documents().collect::<Vec<_>>(), vec![&[0, 1][..], &[2], &[1, 1, 0]]);
        assert_eq!(s.num_documents(), 3);
        assert_eq!(s.longest_document(), 3);
        let empty = TokenStream::new(vec![], 4).unwrap();
        assert_eq!(empty.documents().count(), 0);
    }
}
