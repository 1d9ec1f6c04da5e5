use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{tokenize, DialogueRecord, TokenSequence};
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;

/// Surface forms of the reserved ids, in id order.
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

/// Token/id bijection with the four reserved ids at the front.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Ranks tokens by frequency (ties lexicographic) and keeps the top
    /// `max_size - 4` after the reserved entries.
    pub fn build<I, S>(documents: I, max_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if max_size < 5 {
            return Err(Error::Config(format!("vocabulary max_size must be >= 5, got {max_size}")));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut n_docs = 0usize;
        for doc in documents {
            n_docs += 1;
            for tok in tokenize(doc.as_ref()) {
                if RESERVED.contains(&tok) {
                    continue;
                }
                *counts.entry(tok.to_string()).or_default() += 1;
            }
        }
        if n_docs == 0 {
            return Err(Error::Config("cannot build a vocabulary from an empty corpus".into()));
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size - RESERVED.len());
        Self::from_tokens(RESERVED.iter().map(|s| s.to_string()).chain(ranked.into_iter().map(|(t, _)| t)).collect())
    }

    /// Builds from the posts and responses of a corpus.
    pub fn from_records(records: &[DialogueRecord], max_size: usize) -> Result<Self> {
        Self::build(records.iter().flat_map(|r| [r.post.as_str(), r.response.as_str()]), max_size)
    }

    /// `tokens` must start with the reserved entries.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::Integrity("vocabulary must start with the reserved tokens".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Integrity(format!("duplicate vocabulary entry '{t}'")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Surface tokens for ids, stopping at EOS and skipping PAD/BOS.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .take_while(|&&id| id != EOS)
            .filter(|&&id| id != PAD && id != BOS)
            .map(|&id| self.token(id).unwrap_or(RESERVED[UNK]).to_string())
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }
}

/// Maps surface tokens to ids; out-of-vocabulary tokens become UNK.
pub fn encode_text(tokens: &[&str], vocab: &Vocabulary) -> Result<TokenSequence> {
    if tokens.is_empty() {
        return Err(Error::InvalidInput("cannot encode an empty utterance".into()));
    }
    Ok(TokenSequence(tokens.iter().map(|t| vocab.id(t).unwrap_or(UNK)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_order_and_reserved_ids() {
        let v = Vocabulary::build(["a b", "a"], 10).unwrap();
        assert_eq!(v.tokens(), ["<pad>", "<unk>", "<bos>", "<eos>", "a", "b"]);
        assert_eq!(v.id("a"), Some(4));
    }

    #[test]
    fn truncation_keeps_most_frequent() {
        let v = Vocabulary::build(["x y z", "y", "y z"], 5).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.token(4), Some("y"));
        assert_eq!(v.id("z"), None);
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = Vocabulary::build(["b a c", "c"], 10).unwrap();
        assert_eq!(&v.tokens()[4..], ["c", "a", "b"]);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(Vocabulary::build(Vec::<&str>::new(), 10), Err(Error::Config(_))));
        assert!(matches!(Vocabulary::build(["a"], 4), Err(Error::Config(_))));
    }

    #[test]
    fn unk_rule_and_empty_input() {
        let v = Vocabulary::build(["a b", "a"], 10).unwrap();
        assert_eq!(encode_text(&["a", "zzz"], &v).unwrap().0, vec![4, 1]);
        assert!(encode_text(&[], &v).is_err());
    }

    #[test]
    fn decode_inverts_encode_for_known_tokens() {
        let v = Vocabulary::build(["the cat sat", "on the mat"], 50).unwrap();
        let toks = ["the", "mat", "sat"];
        let ids = encode_text(&toks, &v).unwrap();
        assert_eq!(v.decode(&ids.0), toks);
    }

    #[test]
    fn save_load() {
        let dir = tempfile::tempdir().unwrap();
        let v = Vocabulary::build(["q w e", "w"], 20).unwrap();
        v.save(dir.path().join("vocab.txt")).unwrap();
        assert_eq!(Vocabulary::load(dir.path().join("vocab.txt")).unwrap(), v);
    }
}
