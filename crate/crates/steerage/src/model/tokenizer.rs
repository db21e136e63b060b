//! Greedy longest-match tokenizer with byte fallback.
//!
//! The vocab file is UTF-8, one token per line, line number = id. Ids
//! `[n_tokens, n_tokens + 256)` are reserved for raw bytes, so any byte
//! string round-trips exactly.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::archive::write_atomic;

pub const BYTE_FALLBACK_COUNT: usize = 256;

#[derive(Debug, Clone)]
pub struct Tokenizer {
    tokens: Vec<String>,
    /// Token ids grouped by first byte, longest token first.
    by_first_byte: Vec<Vec<u32>>,
}

impl Tokenizer {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut by_first_byte = vec![Vec::new(); 256];
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(Error::Data(format!("vocab line {id} is empty")));
            }
            if tok.contains('\n') {
                return Err(Error::Data(format!("vocab token {id} contains a newline")));
            }
            by_first_byte[tok.as_bytes()[0] as usize].push(id as u32);
        }
        for bucket in &mut by_first_byte {
            bucket.sort_by(|&a, &b| {
                tokens[b as usize]
                    .len()
                    .cmp(&tokens[a as usize].len())
                    .then(a.cmp(&b))
            });
        }
        Ok(Self {
            tokens,
            by_first_byte,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut tokens: Vec<String> = text.lines().map(str::to_string).collect();
        // A trailing blank line is a formatting artifact, not a token.
        while tokens.last().is_some_and(String::is_empty) {
            tokens.pop();
        }
        if let Some(i) = tokens.iter().position(String::is_empty) {
            return Err(Error::Data(format!("vocab line {i} is empty")));
        }
        Self::new(tokens)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for tok in &self.tokens {
            out.push_str(tok);
            out.push('\n');
        }
        write_atomic(path, out.as_bytes())
    }

    /// Number of named tokens, excluding the byte-fallback range.
    pub fn n_tokens(&self) -> usize {
        self.tokens.len()
    }

    /// Full id space: named tokens plus 256 byte ids.
    pub fn vocab_size(&self) -> usize {
        self.tokens.len() + BYTE_FALLBACK_COUNT
    }

    pub fn byte_token(&self, byte: u8) -> u32 {
        (self.tokens.len() + byte as usize) as u32
    }

    /// Greedy longest-match against the vocab; unmatched bytes fall back to
    /// their byte tokens.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let bytes = text.as_bytes();
        let mut ids = Vec::new();
        let mut pos = 0;
        while pos < bytes.len() {
            let first = bytes[pos] as usize;
            let matched = self.by_first_byte[first]
                .iter()
                .copied()
                .find(|&id| bytes[pos..].starts_with(self.tokens[id as usize].as_bytes()));
            match matched {
                Some(id) => {
                    pos += self.tokens[id as usize].len();
                    ids.push(id);
                }
                None => {
                    ids.push(self.byte_token(bytes[pos]));
                    pos += 1;
                }
            }
        }
        ids
    }

    pub fn detokenize_bytes(&self, ids: &[u32]) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for &id in ids {
            let id = id as usize;
            if id < self.tokens.len() {
                out.extend_from_slice(self.tokens[id].as_bytes());
            } else if id < self.vocab_size() {
                out.push((id - self.tokens.len()) as u8);
            } else {
                return Err(Error::TokenOutOfRange {
                    id: id as u32,
                    vocab: self.vocab_size(),
                });
            }
        }
        Ok(out)
    }

    pub fn detokenize(&self, ids: &[u32]) -> Result<String> {
        let bytes = self.detokenize_bytes(ids)?;
        String::from_utf8(bytes)
            .map_err(|e| Error::Data(format!("detokenized to invalid UTF-8: {e}")))
    }
}
