//! Conversation corpora: the JSON-lines record format, vocabulary, embedding
//! tables, synthetic generation and emotion-interaction-pattern counts.

mod eip;
mod embedding;
mod synthetic;
mod vocab;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::emotion::{EmotionCategory, EmotionVector};
use crate::error::{Error, Result};

pub use eip::{analyze_eip, transition_frequencies, EipMatrix, EipMode};
pub use embedding::{init_embedding_table, load_embeddings, EmbeddingKind, EmbeddingTable};
pub use synthetic::{generate_synthetic_corpus, SyntheticSpec};
pub use vocab::{encode_text, Vocabulary, BOS, EOS, PAD, RESERVED, UNK};

/// One line of a corpus file.
///
/// Label lists are sets; `post_primary` / `response_primary` optionally name
/// the primary label. Without them the lowest category index wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueRecord {
    pub post: String,
    pub response: String,
    pub post_emotions: Vec<EmotionCategory>,
    pub response_emotions: Vec<EmotionCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_primary: Option<EmotionCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_primary: Option<EmotionCategory>,
}

impl DialogueRecord {
    pub fn post_tokens(&self) -> Vec<&str> {
        tokenize(&self.post)
    }

    pub fn response_tokens(&self) -> Vec<&str> {
        tokenize(&self.response)
    }

    pub fn post_label(&self) -> Result<EmotionVector> {
        EmotionVector::label(&self.post_emotions)
    }

    pub fn response_label(&self) -> Result<EmotionVector> {
        EmotionVector::label(&self.response_emotions)
    }

    pub fn primary_post_emotion(&self) -> Option<EmotionCategory> {
        primary_of(self.post_primary, &self.post_emotions)
    }

    pub fn primary_response_emotion(&self) -> Option<EmotionCategory> {
        primary_of(self.response_primary, &self.response_emotions)
    }
}

fn primary_of(explicit: Option<EmotionCategory>, labels: &[EmotionCategory]) -> Option<EmotionCategory> {
    match explicit {
        Some(p) if labels.contains(&p) => Some(p),
        _ => labels.iter().copied().min(),
    }
}

/// Whitespace tokenization. Segmentation is the dataset producer's job.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Vocabulary ids of one utterance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence(pub Vec<usize>);

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }
}

/// An encoded post/response pair with multi-hot labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversationPair {
    pub post: TokenSequence,
    pub response: TokenSequence,
    pub post_emotion: EmotionVector,
    pub response_emotion: EmotionVector,
}

impl ConversationPair {
    pub fn encode(record: &DialogueRecord, vocab: &Vocabulary, max_len: usize) -> Result<Self> {
        let mut post = encode_text(&record.post_tokens(), vocab)?;
        let mut response = encode_text(&record.response_tokens(), vocab)?;
        post.0.truncate(max_len);
        response.0.truncate(max_len);
        Ok(ConversationPair {
            post,
            response,
            post_emotion: record.post_label()?,
            response_emotion: record.response_label()?,
        })
    }
}

pub fn encode_corpus(records: &[DialogueRecord], vocab: &Vocabulary, max_len: usize) -> Result<Vec<ConversationPair>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| ConversationPair::encode(r, vocab, max_len).map_err(|e| Error::InvalidInput(format!("corpus record {}: {e}", i + 1))))
        .collect()
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<DialogueRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DialogueRecord = serde_json::from_str(&line).map_err(|e| Error::format(path.display(), i + 1, e.to_string()))?;
        if record.post_emotions.is_empty() || record.response_emotions.is_empty() {
            return Err(Error::format(path.display(), i + 1, "emotion label lists must be non-empty"));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn write_corpus(path: impl AsRef<Path>, records: &[DialogueRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use EmotionCategory::*;

    fn record(post_emotions: Vec<EmotionCategory>, primary: Option<EmotionCategory>) -> DialogueRecord {
        DialogueRecord {
            post: "a b".into(),
            response: "c".into(),
            post_emotions,
            response_emotions: vec![Other],
            post_primary: primary,
            response_primary: None,
        }
    }

    #[test]
    fn primary_defaults_to_lowest_index() {
        assert_eq!(record(vec![Sad, Happy], None).primary_post_emotion(), Some(Happy));
        assert_eq!(record(vec![Sad, Happy], Some(Sad)).primary_post_emotion(), Some(Sad));
        // an explicit primary outside the label set is ignored
        assert_eq!(record(vec![Sad, Happy], Some(Angry)).primary_post_emotion(), Some(Happy));
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let recs = vec![record(vec![Like], None), record(vec![Angry, Sad], Some(Sad))];
        write_corpus(&path, &recs).unwrap();
        assert_eq!(read_corpus(&path).unwrap(), recs);
    }

    #[test]
    fn bad_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(
            &path,
            "{\"post\":\"a\",\"response\":\"b\",\"post_emotions\":[\"Like\"],\"response_emotions\":[\"Sad\"]}\nnot json\n",
        )
        .unwrap();
        match read_corpus(&path) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
