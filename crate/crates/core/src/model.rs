//! The full model: dual embedding tables, emotion selector and generator.

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{init_embedding_table, ConversationPair, EmbeddingKind, EmbeddingTable};
use crate::emotion::EmotionVector;
use crate::error::{shape_check, Error, Result};
use crate::generator::{DecoderTrace, Generator};
use crate::params::{Grads, ModelParams, ParamId};
use crate::selector::{Selector, SelectorOptions};
use crate::tape::{sigmoid, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Tiny,
    Desk,
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tiny" => Ok(Preset::Tiny),
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::Config(format!("unknown preset '{other}' (expected tiny, desk or paper)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub attn_dim: usize,
    pub emotion_dim: usize,
    pub kl_dim: usize,
    pub max_decode_len: usize,
    pub selector: SelectorOptions,
}

impl ModelConfig {
    /// Preset sizes. The vocabulary size comes from the corpus and is capped
    /// at the preset's limit.
    pub fn preset(preset: Preset, vocab_size: usize) -> Self {
        let (dim, emo, kl, cap) = match preset {
            Preset::Tiny => (8, 8, 8, 32),
            Preset::Desk => (32, 32, 64, 512),
            Preset::Paper => (256, 200, 64, 40000),
        };
        let embed_dim = if preset == Preset::Paper { 200 } else { dim };
        ModelConfig {
            vocab_size: vocab_size.min(cap),
            embed_dim,
            hidden_dim: dim,
            layers: 2,
            attn_dim: dim,
            emotion_dim: emo,
            kl_dim: kl,
            max_decode_len: 30,
            selector: SelectorOptions::default(),
        }
    }

    pub fn vocab_limit(preset: Preset) -> usize {
        Self::preset(preset, usize::MAX).vocab_size
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("layers", self.layers),
            ("attn_dim", self.attn_dim),
            ("emotion_dim", self.emotion_dim),
            ("kl_dim", self.kl_dim),
            ("max_decode_len", self.max_decode_len),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.vocab_size < 5 {
            return Err(Error::Config("vocab_size must be at least 5".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub semantic: ParamId,
    pub emotional: ParamId,
    pub selector: Selector,
    pub generator: Generator,
}

/// Mean loss terms over a batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    #[serde(rename = "L_total")]
    pub total: f64,
    #[serde(rename = "L_p")]
    pub post: f64,
    #[serde(rename = "L_r")]
    pub prior: f64,
    #[serde(rename = "L_r'")]
    pub recognition: f64,
    #[serde(rename = "L_KL")]
    pub kl: f64,
    #[serde(rename = "L_NLL")]
    pub nll: f64,
}

impl LossComponents {
    /// `L_p + L_r + L_r' + L_KL`
    pub fn emotion(&self) -> f64 {
        self.post + self.prior + self.recognition + self.kl
    }
}

/// Plain values of both selector paths for one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorOutput {
    pub pooled_prior: Vec<f64>,
    pub pooled_intermediate: Vec<f64>,
    pub pooled_recognition: Vec<f64>,
    pub gate_prior: Vec<f64>,
    pub gate_recognition: Vec<f64>,
    pub fused_prior: Vec<f64>,
    pub fused_recognition: Vec<f64>,
    pub post_emotion: EmotionVector,
    pub prior_emotion: EmotionVector,
    pub recognition_emotion: EmotionVector,
    pub losses: LossComponents,
}

struct PairGraph {
    prior: crate::selector::PriorNodes,
    recognition: crate::selector::RecognitionNodes,
    terms: crate::selector::SelectorLossNodes,
    nll: Var,
    total: Var,
}

fn probabilities(tape: &Tape, logits: Var) -> Result<EmotionVector> {
    let p: Vec<f64> = tape.value(logits).iter().map(|&x| sigmoid(x)).collect();
    EmotionVector::from_slice(&p)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

impl Model {
    /// Fresh model with every tensor drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let v = config.vocab_size;
        let d = config.embed_dim;
        let semantic = init_embedding_table(v, d, EmbeddingKind::Semantic, seed);
        let emotional = init_embedding_table(v, d, EmbeddingKind::Emotional, seed);
        Self::with_embeddings(config, seed, semantic, emotional)
    }

    pub fn with_embeddings(config: ModelConfig, seed: u64, semantic: EmbeddingTable, emotional: EmbeddingTable) -> Result<Self> {
        config.validate()?;
        for t in [&semantic, &emotional] {
            shape_check(t.dim == config.embed_dim && t.rows() == config.vocab_size, || {
                format!(
                    "embedding table is {}x{}, model expects {}x{}",
                    t.rows(),
                    t.dim,
                    config.vocab_size,
                    config.embed_dim
                )
            })?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::new();
        let (v, d, h) = (config.vocab_size, config.embed_dim, config.hidden_dim);
        let semantic_id = params.insert("embedding.semantic", vec![v, d], semantic.data);
        let emotional_id = params.insert("embedding.emotional", vec![v, d], emotional.data);
        let selector = Selector::new(
            &mut params,
            d,
            h,
            config.layers,
            config.attn_dim,
            config.kl_dim,
            config.selector,
            &mut rng,
        );
        let generator = Generator::new(
            &mut params,
            semantic_id,
            v,
            d,
            h,
            config.layers,
            config.attn_dim,
            config.emotion_dim,
            &mut rng,
        );
        Ok(Model {
            config,
            params,
            semantic: semantic_id,
            emotional: emotional_id,
            selector,
            generator,
        })
    }

    fn check_tokens(&self, ids: &[usize], what: &str) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::InvalidInput(format!("{what} is empty")));
        }
        if let Some(&bad) = ids.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::InvalidInput(format!("{what} contains id {bad} outside the vocabulary")));
        }
        Ok(())
    }

    fn rows(tape: &mut Tape, table: ParamId, ids: &[usize]) -> Vec<Var> {
        ids.iter().map(|&i| tape.row(table, i)).collect()
    }

    fn pair_graph(&self, tape: &mut Tape, pair: &ConversationPair, alpha: f64) -> Result<PairGraph> {
        let (post, response) = (pair.post.ids(), pair.response.ids());
        self.check_tokens(post, "post")?;
        self.check_tokens(response, "response")?;
        let post_emo = Self::rows(tape, self.emotional, post);
        let post_sem = Self::rows(tape, self.semantic, post);
        let resp_sem = Self::rows(tape, self.semantic, response);
        let h_e = self.selector.intermediate.encode(tape, &post_sem)?.pooled;
        let prior = self.selector.prior_with_intermediate(tape, &post_emo, h_e)?;
        let recognition = self.selector.recognition_with_intermediate(tape, &resp_sem, h_e)?;
        let terms = self
            .selector
            .losses(tape, &prior, &recognition, &pair.post_emotion, &pair.response_emotion)?;
        // the recognition prediction drives the decoder during training
        let e_hat = tape.sigmoid(recognition.response_logits);
        let input = self.generator.emotion_input(tape, e_hat);
        let nll = self.generator.nll(tape, post, response, Some(&input))?;
        let a = tape.scale(terms.total, alpha);
        let b = tape.scale(nll, 1.0 - alpha);
        let total = tape.add(a, b);
        Ok(PairGraph {
            prior,
            recognition,
            terms,
            nll,
            total,
        })
    }

    fn components(tape: &Tape, g: &PairGraph) -> LossComponents {
        LossComponents {
            total: tape.scalar(g.total),
            post: tape.scalar(g.terms.post),
            prior: tape.scalar(g.terms.prior),
            recognition: tape.scalar(g.terms.recognition),
            kl: tape.scalar(g.terms.kl),
            nll: tape.scalar(g.nll),
        }
    }

    /// `alpha * L_e + (1 - alpha) * L_NLL`, averaged over the batch.
    pub fn total_loss(&self, batch: &[ConversationPair], alpha: f64) -> Result<LossComponents> {
        check_alpha(alpha)?;
        mean_over(batch, |pair| {
            let mut tape = Tape::new(&self.params);
            let g = self.pair_graph(&mut tape, pair, alpha)?;
            Ok(Self::components(&tape, &g))
        })
    }

    /// Batch-mean loss and its gradient with respect to every tensor.
    pub fn loss_and_grads(&self, batch: &[ConversationPair], alpha: f64) -> Result<(LossComponents, Grads)> {
        check_alpha(alpha)?;
        let mut grads = self.params.zeros_like();
        let scale = 1.0 / batch.len().max(1) as f64;
        let report = mean_over(batch, |pair| {
            let mut tape = Tape::new(&self.params);
            let g = self.pair_graph(&mut tape, pair, alpha)?;
            tape.backward(g.total, scale, &mut grads);
            Ok(Self::components(&tape, &g))
        })?;
        Ok((report, grads))
    }

    /// Batch-mean NLL of the plain seq2seq route (no emotion input).
    pub fn seq2seq_loss_and_grads(&self, batch: &[ConversationPair]) -> Result<(f64, Grads)> {
        let mut grads = self.params.zeros_like();
        let scale = 1.0 / batch.len().max(1) as f64;
        let report = mean_over(batch, |pair| {
            self.check_tokens(pair.post.ids(), "post")?;
            self.check_tokens(pair.response.ids(), "response")?;
            let mut tape = Tape::new(&self.params);
            let nll = self.generator.nll(&mut tape, pair.post.ids(), pair.response.ids(), None)?;
            tape.backward(nll, scale, &mut grads);
            Ok(LossComponents {
                total: tape.scalar(nll),
                nll: tape.scalar(nll),
                ..Default::default()
            })
        })?;
        Ok((report.nll, grads))
    }

    pub fn seq2seq_loss(&self, batch: &[ConversationPair]) -> Result<f64> {
        let r = mean_over(batch, |pair| {
            self.check_tokens(pair.post.ids(), "post")?;
            self.check_tokens(pair.response.ids(), "response")?;
            let mut tape = Tape::new(&self.params);
            let nll = self.generator.nll(&mut tape, pair.post.ids(), pair.response.ids(), None)?;
            Ok(LossComponents {
                nll: tape.scalar(nll),
                ..Default::default()
            })
        })?;
        Ok(r.nll)
    }

    pub fn selector_output(&self, pair: &ConversationPair, alpha: f64) -> Result<SelectorOutput> {
        check_alpha(alpha)?;
        let mut tape = Tape::new(&self.params);
        let g = self.pair_graph(&mut tape, pair, alpha)?;
        let v = |x: Var| tape.value(x).to_vec();
        Ok(SelectorOutput {
            pooled_prior: v(g.prior.pooled_prior),
            pooled_intermediate: v(g.prior.pooled_intermediate),
            pooled_recognition: v(g.recognition.pooled_recognition),
            gate_prior: v(g.prior.gate),
            gate_recognition: v(g.recognition.gate),
            fused_prior: v(g.prior.fused),
            fused_recognition: v(g.recognition.fused),
            post_emotion: probabilities(&tape, g.prior.post_logits)?,
            prior_emotion: probabilities(&tape, g.prior.response_logits)?,
            recognition_emotion: probabilities(&tape, g.recognition.response_logits)?,
            losses: Self::components(&tape, &g),
        })
    }

    /// Prior-path predictions `(e_hat_p, e_hat_r)` for a post.
    pub fn predict(&self, post: &[usize]) -> Result<(EmotionVector, EmotionVector)> {
        self.check_tokens(post, "post")?;
        let mut tape = Tape::new(&self.params);
        let emo = Self::rows(&mut tape, self.emotional, post);
        let sem = Self::rows(&mut tape, self.semantic, post);
        let nodes = self.selector.prior_forward(&mut tape, &emo, &sem)?;
        Ok((probabilities(&tape, nodes.post_logits)?, probabilities(&tape, nodes.response_logits)?))
    }

    /// Recognition-path prediction `e_hat_r'`.
    pub fn recognize(&self, post: &[usize], response: &[usize]) -> Result<EmotionVector> {
        self.check_tokens(post, "post")?;
        self.check_tokens(response, "response")?;
        let mut tape = Tape::new(&self.params);
        let post_sem = Self::rows(&mut tape, self.semantic, post);
        let resp_sem = Self::rows(&mut tape, self.semantic, response);
        let nodes = self.selector.recognition_forward(&mut tape, &post_sem, &resp_sem)?;
        probabilities(&tape, nodes.response_logits)
    }

    /// Prior emotion prediction and the greedy response it conditions.
    pub fn respond(&self, post: &[usize], max_len: usize) -> Result<(EmotionVector, Vec<usize>)> {
        let (_, e_r) = self.predict(post)?;
        let out = self.generator.greedy_decode(&self.params, post, Some(&e_r), max_len)?;
        Ok((e_r, out))
    }

    /// Greedy decoding through the plain seq2seq route.
    pub fn respond_seq2seq(&self, post: &[usize], max_len: usize) -> Result<Vec<usize>> {
        self.check_tokens(post, "post")?;
        self.generator.greedy_decode(&self.params, post, None, max_len)
    }

    /// Teacher-forced decoder values; `None` selects the plain seq2seq route.
    pub fn decoder_trace(&self, post: &[usize], response: &[usize], emotion: Option<&EmotionVector>) -> Result<DecoderTrace> {
        self.check_tokens(post, "post")?;
        self.generator.trace(&self.params, post, response, emotion)
    }
}

fn mean_over<F>(batch: &[ConversationPair], mut f: F) -> Result<LossComponents>
where
    F: FnMut(&ConversationPair) -> Result<LossComponents>,
{
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let mut acc = LossComponents::default();
    for pair in batch {
        let c = f(pair)?;
        acc.total += c.total;
        acc.post += c.post;
        acc.prior += c.prior;
        acc.recognition += c.recognition;
        acc.kl += c.kl;
        acc.nll += c.nll;
    }
    let n = batch.len() as f64;
    Ok(LossComponents {
        total: acc.total / n,
        post: acc.post / n,
        prior: acc.prior / n,
        recognition: acc.recognition / n,
        kl: acc.kl / n,
        nll: acc.nll / n,
    })
}
