//! Token streams: `"TOKS"`, u32 LE version (1), u32 LE vocab size, u64 LE
//! count, then `count` u32 LE token ids.

use std::path::Path;

use super::{Result, TensorStoreError};

const MAGIC: &[u8; 4] = b"TOKS";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenStream {
    vocab_size: u32,
    tokens: Vec<u32>,
}

impl TokenStream {
    /// Fails if any token is `>= vocab_size` or the vocabulary is empty.
    pub fn new(vocab_size: u32, tokens: Vec<u32>) -> Result<Self> {
        if vocab_size == 0 {
            return Err(TensorStoreError::ZeroVocab);
        }
        if let Some((index, &token)) = tokens.iter().enumerate().find(|(_, &t)| t >= vocab_size) {
            return Err(TensorStoreError::TokenOutOfRange {
                index,
                token,
                vocab_size,
            });
        }
        Ok(Self { vocab_size, tokens })
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Sub-stream over `range`, keeping the vocabulary.
    pub fn slice(&self, range: std::ops::Range<usize>) -> TokenStream {
        TokenStream {
            vocab_size: self.vocab_size,
            tokens: self.tokens[range].to_vec(),
        }
    }
}

pub fn encode_tokens(stream: &TokenStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * stream.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&stream.vocab_size.to_le_bytes());
    out.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    for t in &stream.tokens {
        out.extend_from_slice(&t.to_le_bytes());
    }
    out
}

pub fn decode_tokens(bytes: &[u8]) -> Result<TokenStream> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(TensorStoreError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(TensorStoreError::TruncatedPayload {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let version = u32_at(4);
    if version != VERSION {
        return Err(TensorStoreError::UnsupportedVersion(version));
    }
    let vocab_size = u32_at(8);
    let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let payload = &bytes[HEADER_LEN..];
    let expected = count
        .checked_mul(4)
        .and_then(|n| usize::try_from(n).ok())
        .unwrap_or(usize::MAX);
    if payload.len() < expected {
        return Err(TensorStoreError::TruncatedPayload {
            expected,
            actual: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(TensorStoreError::TrailingBytes(payload.len() - expected));
    }
    let tokens = payload
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    TokenStream::new(vocab_size, tokens)
}

pub fn read_tokens(path: impl AsRef<Path>) -> Result<TokenStream> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| TensorStoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_tokens(&bytes)
}

pub fn write_tokens(stream: &TokenStream, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_tokens(stream)).map_err(|source| TensorStoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_stream_round_trips() {
        let s = TokenStream::new(64, vec![0, 1, 2]).unwrap();
        let bytes = encode_tokens(&s);
        assert_eq!(&bytes[..4], b"TOKS");
        assert_eq!(bytes.len(), 20 + 12);
        assert_eq!(decode_tokens(&bytes).unwrap(), s);
    }

    #[test]
    fn out_of_range_token_is_rejected() {
        assert!(matches!(
            TokenStream::new(64, vec![3, 64]),
            Err(TensorStoreError::TokenOutOfRange { index: 1, token: 64, .. })
        ));
        let mut bytes = encode_tokens(&TokenStream::new(65, vec![64]).unwrap());
        bytes[8..12].copy_from_slice(&64u32.to_le_bytes());
        assert!(matches!(decode_tokens(&bytes), Err(TensorStoreError::TokenOutOfRange { .. })));
    }

    #[test]
    fn empty_stream_is_valid() {
        let s = TokenStream::new(8, vec![]).unwrap();
        let back = decode_tokens(&encode_tokens(&s)).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.vocab_size(), 8);
    }

    #[test]
    fn framing_errors() {
        assert!(matches!(decode_tokens(b"TOKX"), Err(TensorStoreError::BadMagic)));
        let mut bytes = encode_tokens(&TokenStream::new(8, vec![1, 2, 3]).unwrap());
        bytes.truncate(bytes.len() - 2);
        assert!(matches!(decode_tokens(&bytes), Err(TensorStoreError::TruncatedPayload { .. })));
        let mut bytes = encode_tokens(&TokenStream::new(8, vec![1]).unwrap());
        bytes[4] = 2;
        assert!(matches!(decode_tokens(&bytes), Err(TensorStoreError::UnsupportedVersion(2))));
    }
}
