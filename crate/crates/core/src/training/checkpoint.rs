//! Checkpoint directories: `manifest.json`, `params.bin` (little-endian f32
//! in manifest order) and, when a vocabulary is attached, `vocab.txt`.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};

pub const CHECKPOINT_FORMAT: &str = "emochat-checkpoint/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PAYLOAD_FILE: &str = "params.bin";
pub const VOCAB_FILE: &str = "vocab.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    /// Every model tensor.
    Full,
    /// Only the tensors of the plain seq2seq route.
    Seq2seq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Byte offset into the payload.
    pub offset: usize,
}

/// Position of the batch-shuffling generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub kind: CheckpointKind,
    pub step: usize,
    pub seed: u64,
    pub model: ModelConfig,
    pub train: Option<TrainConfig>,
    pub rng: Option<RngState>,
    /// Free-form record of the configuration that produced the checkpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_config: Option<serde_json::Value>,
    pub tensors: IndexMap<String, TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub tensors: IndexMap<String, StoredTensor>,
    pub vocab: Option<Vocabulary>,
}

/// Metadata supplied by the caller when saving.
#[derive(Debug, Clone)]
pub struct CheckpointMeta {
    pub kind: CheckpointKind,
    pub step: usize,
    pub seed: u64,
    pub train: Option<TrainConfig>,
    pub rng: Option<RngState>,
    pub effective_config: Option<serde_json::Value>,
}

impl CheckpointMeta {
    pub fn new(kind: CheckpointKind, step: usize, seed: u64) -> Self {
        CheckpointMeta {
            kind,
            step,
            seed,
            train: None,
            rng: None,
            effective_config: None,
        }
    }
}

fn selected_tensors(model: &Model, kind: CheckpointKind) -> Vec<crate::params::ParamId> {
    match kind {
        CheckpointKind::Full => model.params.iter().map(|(id, _)| id).collect(),
        CheckpointKind::Seq2seq => {
            let mut ids = model.generator.seq2seq_param_ids();
            ids.sort();
            ids
        }
    }
}

pub fn save_checkpoint(dir: impl AsRef<Path>, model: &Model, vocab: Option<&Vocabulary>, meta: CheckpointMeta) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tensors = IndexMap::new();
    let mut payload = Vec::new();
    for id in selected_tensors(model, meta.kind) {
        let t = model.params.get(id);
        tensors.insert(
            t.name.clone(),
            TensorEntry {
                shape: t.shape.clone(),
                dtype: "f32".into(),
                offset: payload.len(),
            },
        );
        for &x in &t.data {
            payload.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: CHECKPOINT_FORMAT.into(),
        kind: meta.kind,
        step: meta.step,
        seed: meta.seed,
        model: model.config.clone(),
        train: meta.train,
        rng: meta.rng,
        effective_config: meta.effective_config,
        tensors,
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    let payload_path = dir.join(PAYLOAD_FILE);
    fs::write(&payload_path, payload).map_err(|e| Error::io(&payload_path, e))?;
    if let Some(v) = vocab {
        v.save(dir.join(VOCAB_FILE))?;
    }
    Ok(())
}

pub fn read_checkpoint(dir: impl AsRef<Path>) -> Result<Checkpoint> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(Error::Integrity(format!("unsupported checkpoint format '{}'", manifest.format)));
    }
    let payload_path = dir.join(PAYLOAD_FILE);
    let payload = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    let mut tensors = IndexMap::new();
    let mut expected = 0usize;
    for (name, entry) in &manifest.tensors {
        if entry.dtype != "f32" {
            return Err(Error::Integrity(format!("tensor '{name}' has unsupported dtype '{}'", entry.dtype)));
        }
        if entry.offset != expected {
            return Err(Error::Integrity(format!(
                "tensor '{name}' starts at byte {}, expected {expected}",
                entry.offset
            )));
        }
        let n: usize = entry.shape.iter().product();
        let end = entry.offset + 4 * n;
        if end > payload.len() {
            return Err(Error::Integrity(format!("payload truncated inside tensor '{name}'")));
        }
        let data = payload[entry.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        tensors.insert(
            name.clone(),
            StoredTensor {
                shape: entry.shape.clone(),
                data,
            },
        );
        expected = end;
    }
    if expected != payload.len() {
        return Err(Error::Integrity(format!(
            "payload has {} bytes, manifest describes {expected}",
            payload.len()
        )));
    }
    let vocab_path = dir.join(VOCAB_FILE);
    let vocab = if vocab_path.exists() {
        Some(Vocabulary::load(&vocab_path)?)
    } else {
        None
    };
    Ok(Checkpoint { manifest, tensors, vocab })
}

impl Checkpoint {
    /// Copies every stored tensor into `model` by name.
    pub fn apply_to(&self, model: &mut Model) -> Result<()> {
        for (name, t) in &self.tensors {
            model.params.assign(name, &t.shape, &t.data)?;
        }
        Ok(())
    }

    /// Rebuilds the model recorded in a full checkpoint.
    pub fn to_model(&self) -> Result<Model> {
        if self.manifest.kind != CheckpointKind::Full {
            return Err(Error::Integrity(
                "a seq2seq checkpoint holds only part of the model; use it to warm-start".into(),
            ));
        }
        let mut model = Model::new(self.manifest.model.clone(), self.manifest.seed)?;
        if let Some((_, t)) = model.params.iter().find(|(_, t)| !self.tensors.contains_key(&t.name)) {
            return Err(Error::Integrity(format!("checkpoint is missing tensor '{}'", t.name)));
        }
        self.apply_to(&mut model)?;
        Ok(model)
    }
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<(Model, Checkpoint)> {
    let ckpt = read_checkpoint(dir)?;
    let model = ckpt.to_model()?;
    Ok((model, ckpt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Preset;

    fn model() -> Model {
        Model::new(ModelConfig::preset(Preset::Tiny, 24), 5).unwrap()
    }

    #[test]
    fn full_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let m = model();
        save_checkpoint(dir.path(), &m, None, CheckpointMeta::new(CheckpointKind::Full, 7, 5)).unwrap();
        let (back, ckpt) = load_model(dir.path()).unwrap();
        assert_eq!(ckpt.manifest.step, 7);
        for ((_, a), (_, b)) in m.params.iter().zip(back.params.iter()) {
            assert_eq!(a.name, b.name);
            let bits_a: Vec<u64> = a.data.iter().map(|x| x.to_bits()).collect();
            let bits_b: Vec<u64> = b.data.iter().map(|x| x.to_bits()).collect();
            assert_eq!(bits_a, bits_b, "{}", a.name);
        }
    }

    #[test]
    fn seq2seq_checkpoint_excludes_selector_and_emotion() {
        let dir = tempfile::tempdir().unwrap();
        let m = model();
        save_checkpoint(dir.path(), &m, None, CheckpointMeta::new(CheckpointKind::Seq2seq, 0, 5)).unwrap();
        let ckpt = read_checkpoint(dir.path()).unwrap();
        assert!(ckpt.tensors.contains_key("embedding.semantic"));
        assert!(ckpt.tensors.contains_key("generator.attn.w_dec"));
        assert!(!ckpt.tensors.keys().any(|k| k.starts_with("selector.")));
        assert!(!ckpt.tensors.contains_key("generator.attn.w_emo"));
        assert!(!ckpt.tensors.contains_key("generator.emotion_embedding"));
        assert!(!ckpt.tensors.keys().any(|k| k.contains(".emo_")));
        assert!(ckpt.to_model().is_err());
    }

    #[test]
    fn truncated_payload_is_an_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &model(), None, CheckpointMeta::new(CheckpointKind::Full, 0, 5)).unwrap();
        let p = dir.path().join(PAYLOAD_FILE);
        let mut bytes = fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 4);
        fs::write(&p, bytes).unwrap();
        assert!(matches!(read_checkpoint(dir.path()), Err(Error::Integrity(_))));
    }

    #[test]
    fn missing_directory_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_checkpoint(dir.path().join("nope")), Err(Error::Io { .. })));
    }
}
