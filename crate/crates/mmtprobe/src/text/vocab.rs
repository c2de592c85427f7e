//! Word-level vocabularies with fixed reserved ids.

use crate::error::{Error, Result};
use crate::text::tokenizer::MASK_TOKEN;
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;
pub const MASK_ID: usize = 4;

/// Reserved surface forms, in id order. The mask token's surface form is
/// the literal `[v]`.
pub const RESERVED: [&str; 5] = ["<pad>", "<s>", "</s>", "<unk>", MASK_TOKEN];

/// Token ↔ id map. Ids are contiguous from 0, reserved entries first,
/// then corpus tokens by descending frequency (ties lexicographic), so
/// identical corpora always produce identical vocabularies.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Build from tokenized sentences; every token is kept (no frequency
    /// cutoff).
    pub fn build<'a, I>(sentences: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut freq: HashMap<&str, usize> = HashMap::new();
        let mut seen_any = false;
        for sentence in sentences {
            seen_any = true;
            for tok in sentence {
                if !RESERVED.contains(&tok.as_str()) {
                    *freq.entry(tok).or_insert(0) += 1;
                }
            }
        }
        if !seen_any {
            return Err(Error::contract("cannot build a vocabulary from an empty corpus"));
        }
        let mut entries: Vec<(&str, usize)> = freq.into_iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut id_to_token: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(entries.into_iter().map(|(t, _)| t.to_string()));
        Ok(Self::from_tokens(id_to_token))
    }

    fn from_tokens(id_to_token: Vec<String>) -> Self {
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            token_to_id,
            id_to_token,
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    /// Id of `token`, or [`UNK_ID`] for out-of-vocabulary tokens.
    pub fn encode(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.id_to_token[id]
    }

    /// Content hash; checkpoints carry it so decoding refuses mismatched
    /// vocabularies.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.id_to_token {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        hex(&h.finalize())
    }

    /// One token per line, id = line number.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        for t in &self.id_to_token {
            writeln!(f, "{t}")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let mut tokens = Vec::new();
        for line in BufReader::new(f).lines() {
            tokens.push(line?);
        }
        if tokens.len() < RESERVED.len()
            || RESERVED.iter().zip(&tokens).any(|(r, t)| r != t)
        {
            return Err(Error::Format {
                offset: 0,
                msg: format!("vocabulary file {} lacks the reserved header", path.display()),
            });
        }
        Ok(Self::from_tokens(tokens))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentences(lines: &[&str]) -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| l.split_whitespace().map(String::from).collect())
            .collect()
    }

    #[test]
    fn ids_follow_frequency_then_lexicographic() {
        let s = sentences(&["a b", "a"]);
        let v = Vocabulary::build(s.iter().map(|s| s.as_slice())).unwrap();
        assert_eq!(v.id("a"), Some(5));
        assert_eq!(v.id("b"), Some(6));
        assert_eq!(v.len(), 7);
    }

    #[test]
    fn mask_token_always_present() {
        let s = sentences(&["plain text only"]);
        let v = Vocabulary::build(s.iter().map(|s| s.as_slice())).unwrap();
        assert_eq!(v.id(MASK_TOKEN), Some(MASK_ID));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let s: Vec<Vec<String>> = Vec::new();
        assert!(Vocabulary::build(s.iter().map(|s| s.as_slice())).is_err());
    }

    #[test]
    fn oov_encodes_to_unk() {
        let s = sentences(&["a"]);
        let v = Vocabulary::build(s.iter().map(|s| s.as_slice())).unwrap();
        assert_eq!(v.encode("zebra"), UNK_ID);
    }

    #[test]
    fn stable_across_rebuilds_and_roundtrips_through_disk() {
        let s = sentences(&["c b a", "b c", "c"]);
        let v1 = Vocabulary::build(s.iter().map(|s| s.as_slice())).unwrap();
        let v2 = Vocabulary::build(s.iter().map(|s| s.as_slice())).unwrap();
        assert_eq!(v1.content_hash(), v2.content_hash());
        // c(3) before b(2) before a(1)
        assert_eq!(v1.id("c"), Some(5));
        assert_eq!(v1.id("b"), Some(6));
        assert_eq!(v1.id("a"), Some(7));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        v1.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(loaded.content_hash(), v1.content_hash());
    }
}
