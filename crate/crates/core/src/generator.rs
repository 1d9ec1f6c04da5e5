//! Emotion-biased attention decoder.
//!
//! Per step `t` with previous fused state `s'_{t-1}` and emotion embedding
//! `V_e = W_e e_hat`:
//!
//! ```text
//! s_t  = GRU(s'_{t-1}, [y_{t-1}; V_e])
//! u_i  = v . tanh(W_1 h_i + (W_2 s_t + W_3 V_e))
//! a    = softmax(u)            c_t = sum_i a_i h_i
//! s'_t = W_4 [s_t; c_t]        logits = W_out s'_t + b_out
//! ```
//!
//! With more than one decoder layer, `s'_{t-1}` is the previous state of the
//! top layer and lower layers keep their own recurrent state. Passing no
//! emotion (`None`) runs the plain seq2seq-attention route: the emotion
//! terms are skipped entirely. With `W_3 = 0` and a zero emotion vector the
//! two routes agree bit-for-bit, because every emotion term is then an exact
//! `+0.0`.

use rand_chacha::ChaCha8Rng;

use crate::corpus::{BOS, EOS};
use crate::emotion::{EmotionVector, NUM_EMOTIONS};
use crate::encoders::GruStack;
use crate::error::{shape_check, Error, Result};
use crate::params::{ModelParams, ParamId};
use crate::selector::Linear;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy)]
pub struct Attention {
    pub v: ParamId,
    pub w_enc: ParamId,
    pub w_dec: ParamId,
    pub w_emo: ParamId,
}

#[derive(Debug, Clone)]
pub struct Generator {
    /// Semantic embedding table, shared with the selector.
    pub embedding: ParamId,
    pub encoder: GruStack,
    /// `d_e x K`
    pub emotion_embedding: ParamId,
    pub attention: Attention,
    pub decoder: GruStack,
    /// `h x h`, maps the last encoder state to the initial decoder state.
    pub bridge: ParamId,
    /// `h x 2h`
    pub out_fuse: ParamId,
    pub output: Linear,
}

/// Encoder side of one post, on the tape.
#[derive(Debug, Clone)]
pub struct EncodedPost {
    pub states: Vec<Var>,
    /// `W_1 h_i`, computed once per post.
    pub keys: Vec<Var>,
    pub mask: Vec<bool>,
    pub initial: Var,
}

#[derive(Debug, Clone)]
pub struct DecoderState {
    /// States of all layers below the top.
    pub lower: Vec<Var>,
    /// `s'` of the previous step.
    pub fused: Var,
}

#[derive(Debug, Clone)]
pub struct StepNodes {
    pub state: Var,
    pub fused: Var,
    pub weights: Var,
    pub context: Var,
    pub logits: Var,
    pub next: DecoderState,
}

/// Emotion input for the decoder on the tape: `V_e` and `W_3 V_e`.
#[derive(Debug, Clone, Copy)]
pub struct EmotionInput {
    pub embedded: Var,
    pub attention_bias: Var,
}

/// Plain values of one decoder step.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub state: Vec<f64>,
    pub fused: Vec<f64>,
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
    pub logits: Vec<f64>,
}

pub type DecoderTrace = Vec<TraceStep>;

#[allow(clippy::too_many_arguments)]
impl Generator {
    pub(crate) fn new(
        params: &mut ModelParams,
        embedding: ParamId,
        vocab_size: usize,
        embed_dim: usize,
        hidden: usize,
        layers: usize,
        attn: usize,
        emotion_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let encoder = GruStack::new(params, "generator.encoder", embed_dim, hidden, layers, rng);
        let emotion_embedding = params.uniform("generator.emotion_embedding", vec![emotion_dim, NUM_EMOTIONS], rng);
        let attention = Attention {
            v: params.uniform("generator.attn.v", vec![attn], rng),
            w_enc: params.uniform("generator.attn.w_enc", vec![attn, hidden], rng),
            w_dec: params.uniform("generator.attn.w_dec", vec![attn, hidden], rng),
            w_emo: params.uniform("generator.attn.w_emo", vec![attn, emotion_dim], rng),
        };
        let decoder = GruStack::with_aux(params, "generator.decoder", embed_dim, emotion_dim, hidden, layers, rng);
        let bridge = params.uniform("generator.bridge", vec![hidden, hidden], rng);
        let out_fuse = params.uniform("generator.out_fuse", vec![hidden, 2 * hidden], rng);
        let output = Linear::new(params, "generator.output", vocab_size, hidden, rng);
        Generator {
            embedding,
            encoder,
            emotion_embedding,
            attention,
            decoder,
            bridge,
            out_fuse,
            output,
        }
    }

    /// Parameters that only the emotion route touches.
    pub fn emotion_param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.emotion_embedding, self.attention.w_emo];
        if let Some(aux) = self.decoder.layers[0].aux_ids() {
            ids.extend(aux);
        }
        ids
    }

    /// Everything the plain seq2seq route uses, embedding table included.
    pub fn seq2seq_param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.embedding];
        ids.extend(self.encoder.param_ids());
        ids.extend([self.attention.v, self.attention.w_enc, self.attention.w_dec]);
        let emo = self.emotion_param_ids();
        ids.extend(self.decoder.param_ids().into_iter().filter(|id| !emo.contains(id)));
        ids.extend([self.bridge, self.out_fuse, self.output.w, self.output.b]);
        ids
    }

    /// `V_e = W_e e_hat` and its attention projection.
    pub fn emotion_input(&self, tape: &mut Tape, emotion: Var) -> EmotionInput {
        let embedded = tape.matvec(self.emotion_embedding, emotion);
        let attention_bias = tape.matvec(self.attention.w_emo, embedded);
        EmotionInput { embedded, attention_bias }
    }

    pub fn embed(&self, tape: &mut Tape, ids: &[usize]) -> Vec<Var> {
        ids.iter().map(|&id| tape.row(self.embedding, id)).collect()
    }

    pub fn encode(&self, tape: &mut Tape, post: &[usize], mask: &[bool]) -> Result<EncodedPost> {
        let inputs = self.embed(tape, post);
        let states = self.encoder.encode(tape, &inputs, mask)?;
        let keys = states.iter().map(|&h| tape.matvec(self.attention.w_enc, h)).collect();
        let last = mask
            .iter()
            .rposition(|&m| m)
            .ok_or_else(|| Error::InvalidInput("post has no unmasked tokens".into()))?;
        let bridged = tape.matvec(self.bridge, states[last]);
        let initial = tape.tanh(bridged);
        Ok(EncodedPost {
            states,
            keys,
            mask: mask.to_vec(),
            initial,
        })
    }

    pub fn initial_state(&self, enc: &EncodedPost) -> DecoderState {
        DecoderState {
            lower: vec![enc.initial; self.decoder.layers.len() - 1],
            fused: enc.initial,
        }
    }

    /// Emotion-biased attention for decoder state `s`.
    pub fn attend(&self, tape: &mut Tape, enc: &EncodedPost, s: Var, emotion: Option<&EmotionInput>) -> (Var, Var) {
        let mut query = tape.matvec(self.attention.w_dec, s);
        if let Some(e) = emotion {
            query = tape.add(query, e.attention_bias);
        }
        let scores: Vec<Var> = enc
            .keys
            .iter()
            .map(|&k| {
                let pre = tape.add(k, query);
                let act = tape.tanh(pre);
                tape.dot(self.attention.v, act)
            })
            .collect();
        let scores = tape.concat(&scores);
        let weights = tape.masked_softmax(scores, &enc.mask);
        let context = tape.weighted_sum(weights, &enc.states);
        (weights, context)
    }

    pub fn step(&self, tape: &mut Tape, enc: &EncodedPost, prev: &DecoderState, input_token: usize, emotion: Option<&EmotionInput>) -> StepNodes {
        let y = tape.row(self.embedding, input_token);
        let mut states = prev.lower.clone();
        states.push(prev.fused);
        let next = self.decoder.step(tape, &states, y, emotion.map(|e| e.embedded));
        let s = *next.last().expect("decoder has layers");
        let (weights, context) = self.attend(tape, enc, s, emotion);
        let cat = tape.concat(&[s, context]);
        let fused = tape.matvec(self.out_fuse, cat);
        let logits = self.output.apply(tape, fused);
        StepNodes {
            state: s,
            fused,
            weights,
            context,
            logits,
            next: DecoderState {
                lower: next[..next.len() - 1].to_vec(),
                fused,
            },
        }
    }

    /// Teacher forcing: inputs `BOS + response`, targets `response + EOS`.
    pub fn teacher_forced(&self, tape: &mut Tape, post: &[usize], response: &[usize], emotion: Option<&EmotionInput>) -> Result<Vec<StepNodes>> {
        let enc = self.encode(tape, post, &vec![true; post.len()])?;
        let mut state = self.initial_state(&enc);
        let mut steps = Vec::with_capacity(response.len() + 1);
        for &tok in std::iter::once(&BOS).chain(response) {
            let st = self.step(tape, &enc, &state, tok, emotion);
            state = st.next.clone();
            steps.push(st);
        }
        Ok(steps)
    }

    /// Mean per-token NLL under teacher forcing.
    pub fn nll(&self, tape: &mut Tape, post: &[usize], response: &[usize], emotion: Option<&EmotionInput>) -> Result<Var> {
        let steps = self.teacher_forced(tape, post, response, emotion)?;
        let terms: Vec<Var> = steps
            .iter()
            .zip(response.iter().chain(std::iter::once(&EOS)))
            .map(|(st, &target)| tape.xent(st.logits, target))
            .collect();
        let n = terms.len() as f64;
        let total = tape.sum(&terms);
        Ok(tape.scale(total, 1.0 / n))
    }

    /// Plain values of a teacher-forced pass.
    pub fn trace(&self, params: &ModelParams, post: &[usize], response: &[usize], emotion: Option<&EmotionVector>) -> Result<DecoderTrace> {
        let mut tape = Tape::new(params);
        let input = emotion.map(|e| {
            let ev = tape.constant(e.0.to_vec());
            self.emotion_input(&mut tape, ev)
        });
        let steps = self.teacher_forced(&mut tape, post, response, input.as_ref())?;
        Ok(steps
            .iter()
            .map(|st| TraceStep {
                state: tape.value(st.state).to_vec(),
                fused: tape.value(st.fused).to_vec(),
                weights: tape.value(st.weights).to_vec(),
                context: tape.value(st.context).to_vec(),
                logits: tape.value(st.logits).to_vec(),
            })
            .collect())
    }

    /// Argmax decoding from BOS until EOS or `max_len` tokens. EOS is not
    /// included in the output. Ties go to the lowest id.
    pub fn greedy_decode(&self, params: &ModelParams, post: &[usize], emotion: Option<&EmotionVector>, max_len: usize) -> Result<Vec<usize>> {
        if post.is_empty() {
            return Err(Error::InvalidInput("cannot decode from an empty post".into()));
        }
        let mut tape = Tape::new(params);
        let input = emotion.map(|e| {
            let ev = tape.constant(e.0.to_vec());
            self.emotion_input(&mut tape, ev)
        });
        let enc = self.encode(&mut tape, post, &vec![true; post.len()])?;
        let mut state = self.initial_state(&enc);
        let mut token = BOS;
        let mut out = Vec::new();
        for _ in 0..max_len {
            let st = self.step(&mut tape, &enc, &state, token, input.as_ref());
            token = argmax(tape.value(st.logits));
            if token == EOS {
                break;
            }
            out.push(token);
            state = st.next;
        }
        Ok(out)
    }
}

/// Lowest index among the maxima.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `V_e = W_e e` on plain values.
pub fn embed_emotion(params: &ModelParams, generator: &Generator, emotion: &EmotionVector) -> Vec<f64> {
    let mut tape = Tape::new(params);
    let e = tape.constant(emotion.0.to_vec());
    let v = tape.matvec(generator.emotion_embedding, e);
    tape.value(v).to_vec()
}

/// Plain-value emotion-biased attention; `emotion` is `V_e`.
pub fn emotion_biased_attention(
    params: &ModelParams,
    generator: &Generator,
    states: &[Vec<f64>],
    decoder_state: &[f64],
    emotion: Option<&[f64]>,
    mask: &[bool],
) -> Result<(Vec<f64>, Vec<f64>)> {
    shape_check(states.len() == mask.len(), || "attention mask length mismatch".into())?;
    if !mask.iter().any(|&m| m) {
        return Err(Error::InvalidInput("attention needs at least one unmasked encoder state".into()));
    }
    let mut tape = Tape::new(params);
    let hs: Vec<Var> = states.iter().map(|h| tape.constant(h.clone())).collect();
    let keys = hs.iter().map(|&h| tape.matvec(generator.attention.w_enc, h)).collect();
    let enc = EncodedPost {
        states: hs.clone(),
        keys,
        mask: mask.to_vec(),
        initial: hs[0],
    };
    let s = tape.constant(decoder_state.to_vec());
    let input = emotion.map(|e| {
        let embedded = tape.constant(e.to_vec());
        let attention_bias = tape.matvec(generator.attention.w_emo, embedded);
        EmotionInput { embedded, attention_bias }
    });
    let (w, c) = generator.attend(&mut tape, &enc, s, input.as_ref());
    Ok((tape.value(w).to_vec(), tape.value(c).to_vec()))
}

/// Mean over unmasked positions of `-log softmax(logits_t)[target_t]`.
pub fn nll_loss(logits: &[Vec<f64>], targets: &[usize], mask: &[bool]) -> Result<f64> {
    shape_check(logits.len() == targets.len() && targets.len() == mask.len(), || {
        format!("{} logit rows, {} targets, {} mask entries", logits.len(), targets.len(), mask.len())
    })?;
    let mut total = 0.0;
    let mut n = 0usize;
    for ((z, &t), &m) in logits.iter().zip(targets).zip(mask) {
        if !m {
            continue;
        }
        shape_check(t < z.len(), || format!("target {t} outside vocabulary of {}", z.len()))?;
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        total += lse - z[t];
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidInput("no unmasked target positions".into()));
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[0.1, 0.9, 0.9, 0.2]), 1);
        assert_eq!(argmax(&[1.0]), 0);
    }

    #[test]
    fn uniform_logits_cost_ln_v() {
        let z = vec![vec![0.0; 20]; 3];
        let l = nll_loss(&z, &[1, 5, 19], &[true; 3]).unwrap();
        assert!((l - 20f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_logits_cost_nothing() {
        let mut z = vec![vec![0.0; 5]; 2];
        z[0][2] = 60.0;
        z[1][4] = 60.0;
        assert!(nll_loss(&z, &[2, 4], &[true, true]).unwrap() < 1e-20);
    }

    #[test]
    fn masked_positions_are_excluded() {
        let z = vec![vec![0.0, 1.0, 2.0], vec![5.0, 0.0, 0.0]];
        let a = nll_loss(&z, &[2, 1], &[true, false]).unwrap();
        let b = nll_loss(&z[..1], &[2], &[true]).unwrap();
        assert_eq!(a, b);
        assert!(nll_loss(&z, &[2], &[true]).is_err());
    }

    #[test]
    fn nll_matches_log_softmax_oracle() {
        let z: Vec<Vec<f64>> = vec![vec![0.3, -1.2, 2.0, 0.5], vec![1.5, 1.4, -0.3, 0.0], vec![-2.0, 0.1, 0.2, 3.0]];
        let t = [2usize, 0, 1];
        let mut want = 0.0;
        for (row, &k) in z.iter().zip(&t) {
            let denom: f64 = row.iter().map(|x| x.exp()).sum();
            want -= (row[k].exp() / denom).ln();
        }
        want /= 3.0;
        assert!((nll_loss(&z, &t, &[true; 3]).unwrap() - want).abs() < 1e-14);
    }
}
