//! Run configuration: built-in defaults, then an INI file, then flags.

use std::path::{Path, PathBuf};

use emochat::corpus::EipMode;
use emochat::selector::{EmotionLossForm, KlDirection};
use emochat::training::TrainConfig;
use emochat::{ModelConfig, Preset};
use ini::Ini;
use serde_json::{json, Value};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub preset: Preset,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,

    pub corpus: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub semantic_embeddings: Option<PathBuf>,
    pub emotional_embeddings: Option<PathBuf>,
    pub vocab_size: Option<usize>,
    pub max_len: usize,
    pub max_decode_len: usize,

    pub train: TrainConfig,
    pub loss_form: EmotionLossForm,
    pub kl_direction: KlDirection,
    pub kl_stop_recognition: bool,
    pub share_fusion: bool,

    pub pairs: usize,
    pub noise_rate: f64,
    pub transition: String,

    pub hypotheses: Option<PathBuf>,
    pub references: Option<PathBuf>,
    pub human_scores: Option<PathBuf>,
    pub ratings: Option<PathBuf>,
    pub eip_mode: EipMode,
    pub samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            preset: Preset::Desk,
            checkpoint: None,
            out: PathBuf::from("out"),
            corpus: None,
            validation: None,
            semantic_embeddings: None,
            emotional_embeddings: None,
            vocab_size: None,
            max_len: 30,
            max_decode_len: 30,
            train: TrainConfig::default(),
            loss_form: EmotionLossForm::PositiveTerm,
            kl_direction: KlDirection::PriorRecognition,
            kl_stop_recognition: false,
            share_fusion: false,
            pairs: 1000,
            noise_rate: 0.1,
            transition: "4,0,3,2,1,5".into(),
            hypotheses: None,
            references: None,
            human_scores: None,
            ratings: None,
            eip_mode: EipMode::Primary,
            samples: 500,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.trim().parse().map_err(|_| format!("invalid value '{value}' for '{key}'"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(format!("invalid boolean '{value}' for '{key}'")),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let t = &mut self.train;
        match key.trim() {
            "seed" => {
                self.seed = parse(key, value)?;
                t.seed = self.seed;
            }
            "preset" => self.preset = value.trim().parse().map_err(|e: emochat::Error| e.to_string())?,
            "checkpoint" => self.checkpoint = opt_path(value),
            "out" => self.out = PathBuf::from(value.trim()),
            "corpus" => self.corpus = opt_path(value),
            "validation" => self.validation = opt_path(value),
            "semantic_embeddings" => self.semantic_embeddings = opt_path(value),
            "emotional_embeddings" => self.emotional_embeddings = opt_path(value),
            "vocab_size" => self.vocab_size = Some(parse(key, value)?),
            "max_len" => self.max_len = parse(key, value)?,
            "max_decode_len" => self.max_decode_len = parse(key, value)?,
            "alpha" => t.alpha = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "max_steps" => t.max_steps = parse(key, value)?,
            "clip_norm" => {
                let v = value.trim();
                t.clip_norm = if v.eq_ignore_ascii_case("none") || v == "0" {
                    None
                } else {
                    Some(parse(key, v)?)
                };
            }
            "pretrain_steps" => t.pretrain_steps = parse(key, value)?,
            "log_every" => t.log_every = parse(key, value)?,
            "eval_every" => t.eval_every = parse(key, value)?,
            "checkpoint_every" => t.checkpoint_every = parse(key, value)?,
            "loss_form" => {
                self.loss_form = match value.trim() {
                    "positive_term" => EmotionLossForm::PositiveTerm,
                    "binary_cross_entropy" | "bce" => EmotionLossForm::BinaryCrossEntropy,
                    other => return Err(format!("unknown loss_form '{other}'")),
                }
            }
            "kl_direction" => {
                self.kl_direction = match value.trim() {
                    "prior_recognition" => KlDirection::PriorRecognition,
                    "recognition_prior" => KlDirection::RecognitionPrior,
                    other => return Err(format!("unknown kl_direction '{other}'")),
                }
            }
            "kl_stop_recognition" => self.kl_stop_recognition = parse_bool(key, value)?,
            "share_fusion" => self.share_fusion = parse_bool(key, value)?,
            "pairs" => self.pairs = parse(key, value)?,
            "noise_rate" => self.noise_rate = parse(key, value)?,
            "transition" => self.transition = value.trim().to_string(),
            "hypotheses" => self.hypotheses = opt_path(value),
            "references" => self.references = opt_path(value),
            "human_scores" => self.human_scores = opt_path(value),
            "ratings" => self.ratings = opt_path(value),
            "eip_mode" => {
                self.eip_mode = match value.trim() {
                    "primary" => EipMode::Primary,
                    "dual" => EipMode::Dual,
                    other => return Err(format!("unknown eip_mode '{other}'")),
                }
            }
            "samples" => self.samples = parse(key, value)?,
            other => return Err(format!("unknown configuration key '{other}'")),
        }
        Ok(())
    }

    /// Applies every key of an INI file. Section headers are ignored; the
    /// file is read as one flat key space.
    pub fn load_file(&mut self, path: &Path) -> Result<(), String> {
        let ini = Ini::load_from_file(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        for (_, props) in ini.iter() {
            for (k, v) in props.iter() {
                self.set(k, v).map_err(|e| format!("{}: {e}", path.display()))?;
            }
        }
        Ok(())
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        let mut c = ModelConfig::preset(self.preset, vocab_size);
        c.max_decode_len = self.max_decode_len;
        c.selector.loss_form = self.loss_form;
        c.selector.kl_direction = self.kl_direction;
        c.selector.kl_stop_recognition = self.kl_stop_recognition;
        c.selector.share_fusion = self.share_fusion;
        c
    }

    pub fn vocab_limit(&self) -> usize {
        let cap = ModelConfig::vocab_limit(self.preset);
        self.vocab_size.map_or(cap, |v| v.min(cap))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// Flat JSON echo of every setting.
    pub fn to_json(&self) -> Value {
        let p = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        json!({
            "seed": self.seed,
            "preset": self.preset,
            "checkpoint": p(&self.checkpoint),
            "out": self.out.display().to_string(),
            "corpus": p(&self.corpus),
            "validation": p(&self.validation),
            "semantic_embeddings": p(&self.semantic_embeddings),
            "emotional_embeddings": p(&self.emotional_embeddings),
            "vocab_size": self.vocab_size,
            "max_len": self.max_len,
            "max_decode_len": self.max_decode_len,
            "train": self.train_config(),
            "loss_form": self.loss_form,
            "kl_direction": self.kl_direction,
            "kl_stop_recognition": self.kl_stop_recognition,
            "share_fusion": self.share_fusion,
            "pairs": self.pairs,
            "noise_rate": self.noise_rate,
            "transition": self.transition,
            "hypotheses": p(&self.hypotheses),
            "references": p(&self.references),
            "human_scores": p(&self.human_scores),
            "ratings": p(&self.ratings),
            "eip_mode": format!("{:?}", self.eip_mode).to_lowercase(),
            "samples": self.samples,
        })
    }
}
