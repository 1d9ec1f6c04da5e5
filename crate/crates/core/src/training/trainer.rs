use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, RngState};
use super::metrics::StepRecord;
use super::sgd::sgd_step;
use super::TrainConfig;
use crate::corpus::ConversationPair;
use crate::emotion::EmotionVector;
use crate::error::{Error, Result};
use crate::evaluation::{emotion_accuracy, AccuracyMode};
use crate::model::{LossComponents, Model};

const TRAIN_STREAM: u64 = 21;
const PRETRAIN_STREAM: u64 = 22;

/// Hooks called while training.
pub trait TrainObserver {
    fn on_record(&mut self, _record: &StepRecord) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _step: usize, _model: &Model, _rng: &RngState) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

/// Epoch-wise shuffled index stream.
struct Batcher {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
    seed: u64,
    stream: u64,
}

impl Batcher {
    fn new(n: usize, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Batcher {
            order,
            pos: 0,
            rng,
            seed,
            stream,
        }
    }

    fn next_batch(&mut self, data: &[ConversationPair], size: usize) -> Vec<ConversationPair> {
        let mut out = Vec::with_capacity(size);
        for _ in 0..size.min(data.len()) {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(data[self.order[self.pos]].clone());
            self.pos += 1;
        }
        out
    }

    fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            stream: self.stream,
            word_pos: self.rng.get_word_pos().to_string(),
        }
    }
}

fn check_finite(step: usize, losses: &LossComponents) -> Result<()> {
    let named = [
        ("L_total", losses.total),
        ("L_p", losses.post),
        ("L_r", losses.prior),
        ("L_r'", losses.recognition),
        ("L_KL", losses.kl),
        ("L_NLL", losses.nll),
    ];
    if let Some((name, v)) = named.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Divergence {
            step,
            detail: format!("{name} = {v}"),
        });
    }
    Ok(())
}

/// Prior-path and recognition-path response-emotion accuracy.
pub fn selector_accuracy(model: &Model, pairs: &[ConversationPair]) -> Result<(f64, f64)> {
    let mut prior = Vec::with_capacity(pairs.len());
    let mut recog = Vec::with_capacity(pairs.len());
    let mut gold = Vec::with_capacity(pairs.len());
    for p in pairs {
        prior.push(model.predict(p.post.ids())?.1);
        recog.push(model.recognize(p.post.ids(), p.response.ids())?);
        gold.push(p.response_emotion);
    }
    Ok((
        emotion_accuracy(&prior, &gold, AccuracyMode::ArgmaxInGold)?,
        emotion_accuracy(&recog, &gold, AccuracyMode::ArgmaxInGold)?,
    ))
}

/// Prior `e_hat_r` and recognition `e_hat_r'` for each pair.
pub fn emotion_samples(model: &Model, pairs: &[ConversationPair]) -> Result<(Vec<EmotionVector>, Vec<EmotionVector>)> {
    let mut prior = Vec::with_capacity(pairs.len());
    let mut recog = Vec::with_capacity(pairs.len());
    for p in pairs {
        prior.push(model.predict(p.post.ids())?.1);
        recog.push(model.recognize(p.post.ids(), p.response.ids())?);
    }
    Ok((prior, recog))
}

/// Mini-batch SGD on the composite loss. Accuracy is measured on
/// `validation`, or on the training pairs when none are given.
pub fn train(
    model: &mut Model,
    data: &[ConversationPair],
    validation: Option<&[ConversationPair]>,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<Vec<StepRecord>> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("training corpus is empty".into()));
    }
    let eval_set = validation.unwrap_or(data);
    let mut batcher = Batcher::new(data.len(), config.seed, TRAIN_STREAM);
    let mut records = Vec::new();
    for step in 1..=config.max_steps {
        let batch = batcher.next_batch(data, config.batch_size);
        let (losses, grads) = model.loss_and_grads(&batch, config.alpha)?;
        check_finite(step, &losses)?;
        sgd_step(&mut model.params, &grads, config.learning_rate, config.clip_norm)?;
        let evaluate = config.eval_every > 0 && step % config.eval_every == 0;
        if step % config.log_every == 0 || evaluate {
            let (acc_prior, acc_recognition) = if evaluate {
                let (a, b) = selector_accuracy(model, eval_set)?;
                (Some(a), Some(b))
            } else {
                (None, None)
            };
            let record = StepRecord {
                step,
                losses,
                acc_prior,
                acc_recognition,
            };
            observer.on_record(&record)?;
            records.push(record);
        }
        let periodic = config.checkpoint_every > 0 && step % config.checkpoint_every == 0;
        if periodic || step == config.max_steps {
            observer.on_checkpoint(step, model, &batcher.state())?;
        }
    }
    Ok(records)
}

/// Trains the plain seq2seq route on NLL alone for `pretrain_steps` steps.
/// The emotion input is absent, which is the same computation as a zero
/// emotion vector with the emotion attention term at zero. Returns the
/// batch NLL of every step.
pub fn pretrain_seq2seq(model: &mut Model, data: &[ConversationPair], config: &TrainConfig, on_step: &mut dyn FnMut(usize, f64)) -> Result<Vec<f64>> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("training corpus is empty".into()));
    }
    let mut batcher = Batcher::new(data.len(), config.seed, PRETRAIN_STREAM);
    let mut curve = Vec::with_capacity(config.pretrain_steps);
    for step in 1..=config.pretrain_steps {
        let batch = batcher.next_batch(data, config.batch_size);
        let (nll, grads) = model.seq2seq_loss_and_grads(&batch)?;
        if !nll.is_finite() {
            return Err(Error::Divergence {
                step,
                detail: format!("L_NLL = {nll}"),
            });
        }
        sgd_step(&mut model.params, &grads, config.learning_rate, config.clip_norm)?;
        on_step(step, nll);
        curve.push(nll);
    }
    Ok(curve)
}

/// Copies the seq2seq tensors of `ckpt` into `model` and zeroes the emotion
/// attention weight, so that with a zero emotion vector the generator
/// reproduces the pretrained network exactly.
pub fn warm_start(model: &mut Model, ckpt: &Checkpoint) -> Result<()> {
    let wanted: Vec<String> = model
        .generator
        .seq2seq_param_ids()
        .into_iter()
        .map(|id| model.params.get(id).name.clone())
        .collect();
    for name in &wanted {
        let t = ckpt
            .tensors
            .get(name)
            .ok_or_else(|| Error::Integrity(format!("warm-start checkpoint is missing '{name}'")))?;
        model.params.assign(name, &t.shape, &t.data)?;
    }
    let w3 = model.generator.attention.w_emo;
    model.params.get_mut(w3).data.fill(0.0);
    Ok(())
}
