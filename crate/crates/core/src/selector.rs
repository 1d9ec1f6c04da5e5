//! Target-guided emotion selector.
//!
//! The prior network pools the post twice (prior encoder over emotional
//! embeddings, intermediate encoder over semantic embeddings), gates the two
//! pooled vectors together and predicts the response emotion. The
//! recognition network reuses the same intermediate encoder but swaps the
//! prior encoder for one that reads the gold response. A Bernoulli KL on a
//! shared projection of the two fused states ties them together.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::emotion::{EmotionVector, NUM_EMOTIONS};
use crate::encoders::{AttnPool, GruStack, Pooled};
use crate::error::{shape_check, Result};
use crate::params::{ModelParams, ParamId};
use crate::tape::{Tape, Var};

/// Which sigmoid cross-entropy the three emotion heads use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmotionLossForm {
    /// `-sum_j e_j log(e_hat_j)`: positive label components only.
    PositiveTerm,
    /// Per-class binary cross-entropy over all components.
    BinaryCrossEntropy,
}

/// Argument order of the hidden-state KL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// KL(prior projection || recognition projection).
    PriorRecognition,
    /// KL(recognition projection || prior projection).
    RecognitionPrior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectorOptions {
    pub loss_form: EmotionLossForm,
    pub kl_direction: KlDirection,
    /// Block gradients through the recognition-side KL argument.
    pub kl_stop_recognition: bool,
    /// Use one set of fusion and prediction weights for both networks.
    pub share_fusion: bool,
}

impl Default for SelectorOptions {
    fn default() -> Self {
        SelectorOptions {
            loss_form: EmotionLossForm::PositiveTerm,
            kl_direction: KlDirection::PriorRecognition,
            kl_stop_recognition: false,
            share_fusion: false,
        }
    }
}

/// Affine map `W x + b`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub(crate) fn new(params: &mut ModelParams, prefix: &str, out_dim: usize, in_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            w: params.uniform(&format!("{prefix}.w"), vec![out_dim, in_dim], rng),
            b: params.uniform(&format!("{prefix}.b"), vec![out_dim], rng),
        }
    }

    pub fn apply(&self, tape: &mut Tape, x: Var) -> Var {
        tape.affine(self.w, Some(self.b), x)
    }
}

/// Gate `w = sigmoid(W_f [a; b] + b_f)`, fused = `w * tanh(a) + (1 - w) * tanh(b)`.
#[derive(Debug, Clone, Copy)]
pub struct Fusion(pub Linear);

#[derive(Debug, Clone, Copy)]
pub struct Fused {
    pub gate: Var,
    pub fused: Var,
}

impl Fusion {
    pub fn apply(&self, tape: &mut Tape, a: Var, b: Var) -> Fused {
        let cat = tape.concat(&[a, b]);
        let pre = self.0.apply(tape, cat);
        let gate = tape.sigmoid(pre);
        let ta = tape.tanh(a);
        let tb = tape.tanh(b);
        let left = tape.mul(gate, ta);
        let rest = tape.one_minus(gate);
        let right = tape.mul(rest, tb);
        let fused = tape.add(left, right);
        Fused { gate, fused }
    }
}

#[derive(Debug, Clone)]
pub struct SelectorEncoder {
    pub gru: GruStack,
    pub pool: AttnPool,
}

impl SelectorEncoder {
    fn new(params: &mut ModelParams, prefix: &str, input_dim: usize, hidden: usize, layers: usize, attn: usize, rng: &mut ChaCha8Rng) -> Self {
        SelectorEncoder {
            gru: GruStack::new(params, &format!("{prefix}.gru"), input_dim, hidden, layers, rng),
            pool: AttnPool::new(params, &format!("{prefix}.pool"), hidden, attn, rng),
        }
    }

    pub fn encode(&self, tape: &mut Tape, inputs: &[Var]) -> Result<Pooled> {
        let mask = vec![true; inputs.len()];
        let states = self.gru.encode(tape, inputs, &mask)?;
        self.pool.pool(tape, &states, &mask)
    }
}

#[derive(Debug, Clone)]
pub struct Selector {
    pub prior: SelectorEncoder,
    pub intermediate: SelectorEncoder,
    pub recognition: SelectorEncoder,
    pub fusion_prior: Fusion,
    pub fusion_recognition: Fusion,
    pub head_post: Linear,
    pub head_prior: Linear,
    pub head_recognition: Linear,
    pub kl_projection: Linear,
    pub options: SelectorOptions,
}

/// Prior-network nodes for one post.
#[derive(Debug, Clone, Copy)]
pub struct PriorNodes {
    pub pooled_prior: Var,
    pub pooled_intermediate: Var,
    pub gate: Var,
    pub fused: Var,
    pub post_logits: Var,
    pub response_logits: Var,
}

/// Recognition-network nodes for one pair.
#[derive(Debug, Clone, Copy)]
pub struct RecognitionNodes {
    pub pooled_recognition: Var,
    pub pooled_intermediate: Var,
    pub gate: Var,
    pub fused: Var,
    pub response_logits: Var,
}

/// The four emotion-loss terms and their sum.
#[derive(Debug, Clone, Copy)]
pub struct SelectorLossNodes {
    pub post: Var,
    pub prior: Var,
    pub recognition: Var,
    pub kl: Var,
    pub total: Var,
}

#[allow(clippy::too_many_arguments)]
impl Selector {
    pub(crate) fn new(
        params: &mut ModelParams,
        embed_dim: usize,
        hidden: usize,
        layers: usize,
        attn: usize,
        kl_dim: usize,
        options: SelectorOptions,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let prior = SelectorEncoder::new(params, "selector.prior", embed_dim, hidden, layers, attn, rng);
        let intermediate = SelectorEncoder::new(params, "selector.intermediate", embed_dim, hidden, layers, attn, rng);
        let recognition = SelectorEncoder::new(params, "selector.recognition", embed_dim, hidden, layers, attn, rng);
        let fusion_prior = Fusion(Linear::new(params, "selector.fusion_prior", hidden, 2 * hidden, rng));
        let fusion_recognition = if options.share_fusion {
            fusion_prior
        } else {
            Fusion(Linear::new(params, "selector.fusion_recognition", hidden, 2 * hidden, rng))
        };
        let head_post = Linear::new(params, "selector.head_post", NUM_EMOTIONS, hidden, rng);
        let head_prior = Linear::new(params, "selector.head_prior", NUM_EMOTIONS, hidden, rng);
        let head_recognition = if options.share_fusion {
            head_prior
        } else {
            Linear::new(params, "selector.head_recognition", NUM_EMOTIONS, hidden, rng)
        };
        let kl_projection = Linear::new(params, "selector.kl", kl_dim, hidden, rng);
        Selector {
            prior,
            intermediate,
            recognition,
            fusion_prior,
            fusion_recognition,
            head_post,
            head_prior,
            head_recognition,
            kl_projection,
            options,
        }
    }

    /// Prior network. `emotional` and `semantic` embed the same post.
    pub fn prior_forward(&self, tape: &mut Tape, emotional: &[Var], semantic: &[Var]) -> Result<PriorNodes> {
        shape_check(emotional.len() == semantic.len(), || {
            "emotional and semantic views must describe the same post".into()
        })?;
        let h_e = self.intermediate.encode(tape, semantic)?.pooled;
        self.prior_with_intermediate(tape, emotional, h_e)
    }

    /// Prior network reusing an already pooled intermediate state.
    pub fn prior_with_intermediate(&self, tape: &mut Tape, emotional: &[Var], h_e: Var) -> Result<PriorNodes> {
        let h_p = self.prior.encode(tape, emotional)?.pooled;
        let Fused { gate, fused } = self.fusion_prior.apply(tape, h_p, h_e);
        let post_logits = self.head_post.apply(tape, h_p);
        let response_logits = self.head_prior.apply(tape, fused);
        Ok(PriorNodes {
            pooled_prior: h_p,
            pooled_intermediate: h_e,
            gate,
            fused,
            post_logits,
            response_logits,
        })
    }

    /// Recognition network: response encoder plus the shared intermediate encoder.
    pub fn recognition_forward(&self, tape: &mut Tape, post_semantic: &[Var], response_semantic: &[Var]) -> Result<RecognitionNodes> {
        let h_e = self.intermediate.encode(tape, post_semantic)?.pooled;
        self.recognition_with_intermediate(tape, response_semantic, h_e)
    }

    pub fn recognition_with_intermediate(&self, tape: &mut Tape, response_semantic: &[Var], h_e: Var) -> Result<RecognitionNodes> {
        let h_r = self.recognition.encode(tape, response_semantic)?.pooled;
        let Fused { gate, fused } = self.fusion_recognition.apply(tape, h_r, h_e);
        let response_logits = self.head_recognition.apply(tape, fused);
        Ok(RecognitionNodes {
            pooled_recognition: h_r,
            pooled_intermediate: h_e,
            gate,
            fused,
            response_logits,
        })
    }

    pub fn emotion_loss(&self, tape: &mut Tape, logits: Var, label: &EmotionVector) -> Result<Var> {
        label.validate_label()?;
        let full = self.options.loss_form == EmotionLossForm::BinaryCrossEntropy;
        Ok(tape.sigmoid_xent(logits, label.as_slice(), full))
    }

    pub fn kl_term(&self, tape: &mut Tape, prior_fused: Var, recognition_fused: Var) -> Var {
        let p = self.kl_projection.apply(tape, prior_fused);
        let q = self.kl_projection.apply(tape, recognition_fused);
        match self.options.kl_direction {
            KlDirection::PriorRecognition => tape.bernoulli_kl(p, q, self.options.kl_stop_recognition),
            // the recognition side is the first argument here; stop-gradient
            // still targets it, so the blocked argument is `p`.
            KlDirection::RecognitionPrior => {
                if self.options.kl_stop_recognition {
                    let held = tape.value(q).to_vec();
                    let frozen = tape.constant(held);
                    tape.bernoulli_kl(frozen, p, false)
                } else {
                    tape.bernoulli_kl(q, p, false)
                }
            }
        }
    }

    /// `L_p + L_r + L_r' + L_KL` for one pair.
    pub fn losses(
        &self,
        tape: &mut Tape,
        prior: &PriorNodes,
        recognition: &RecognitionNodes,
        post_label: &EmotionVector,
        response_label: &EmotionVector,
    ) -> Result<SelectorLossNodes> {
        let post = self.emotion_loss(tape, prior.post_logits, post_label)?;
        let prior_l = self.emotion_loss(tape, prior.response_logits, response_label)?;
        let recog_l = self.emotion_loss(tape, recognition.response_logits, response_label)?;
        let kl = self.kl_term(tape, prior.fused, recognition.fused);
        let total = tape.sum(&[post, prior_l, recog_l, kl]);
        Ok(SelectorLossNodes {
            post,
            prior: prior_l,
            recognition: recog_l,
            kl,
            total,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for enc in [&self.prior, &self.intermediate, &self.recognition] {
            ids.extend(enc.gru.param_ids());
            ids.extend(enc.pool.param_ids());
        }
        for l in [
            self.fusion_prior.0,
            self.fusion_recognition.0,
            self.head_post,
            self.head_prior,
            self.head_recognition,
            self.kl_projection,
        ] {
            ids.extend([l.w, l.b]);
        }
        ids.sort();
        ids.dedup();
        ids
    }
}

fn sigmoid_vec(tape: &Tape, v: Var) -> Vec<f64> {
    tape.value(v).iter().map(|&x| crate::tape::sigmoid(x)).collect()
}

/// Prediction `sigmoid(W h + b)` and its loss against `label`.
pub fn predict_post_emotion(
    params: &ModelParams,
    head: &Linear,
    pooled: &[f64],
    label: &EmotionVector,
    form: EmotionLossForm,
) -> Result<(EmotionVector, f64)> {
    label.validate_label()?;
    shape_check(params.get(head.w).cols() == pooled.len(), || "head input dimension mismatch".into())?;
    let mut tape = Tape::new(params);
    let h = tape.constant(pooled.to_vec());
    let z = head.apply(&mut tape, h);
    let loss = tape.sigmoid_xent(z, label.as_slice(), form == EmotionLossForm::BinaryCrossEntropy);
    Ok((EmotionVector::from_slice(&sigmoid_vec(&tape, z))?, tape.scalar(loss)))
}

/// Gate and fused vector for two pooled states.
pub fn fuse(params: &ModelParams, fusion: &Fusion, a: &[f64], b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    shape_check(a.len() == b.len(), || format!("fusion inputs differ: {} vs {}", a.len(), b.len()))?;
    shape_check(params.get(fusion.0.w).cols() == 2 * a.len(), || "fusion weight dimension mismatch".into())?;
    let mut tape = Tape::new(params);
    let (va, vb) = (tape.constant(a.to_vec()), tape.constant(b.to_vec()));
    let f = fusion.apply(&mut tape, va, vb);
    Ok((tape.value(f.gate).to_vec(), tape.value(f.fused).to_vec()))
}

/// Bernoulli KL between the shared projections of two fused states, in the
/// given argument order.
pub fn kl_hidden(params: &ModelParams, projection: &Linear, prior_fused: &[f64], recognition_fused: &[f64]) -> Result<f64> {
    shape_check(prior_fused.len() == recognition_fused.len(), || "kl inputs differ in length".into())?;
    let mut tape = Tape::new(params);
    let a = tape.constant(prior_fused.to_vec());
    let b = tape.constant(recognition_fused.to_vec());
    let p = projection.apply(&mut tape, a);
    let q = projection.apply(&mut tape, b);
    let kl = tape.bernoulli_kl(p, q, false);
    Ok(tape.scalar(kl))
}

/// The selector loss: plain sum of the four terms.
pub fn selector_loss(post: f64, prior: f64, recognition: f64, kl: f64) -> f64 {
    post + prior + recognition + kl
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emotion::EmotionCategory;
    use crate::tape::sigmoid;
    use rand::{Rng, SeedableRng};

    fn linear(p: &mut ModelParams, out: usize, inp: usize, seed: u64) -> Linear {
        Linear::new(p, &format!("l{seed}"), out, inp, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn zero(p: &mut ModelParams, l: &Linear) {
        p.get_mut(l.w).data.fill(0.0);
        p.get_mut(l.b).data.fill(0.0);
    }

    #[test]
    fn zero_head_gives_half_and_ln2() {
        let mut p = ModelParams::new();
        let head = linear(&mut p, 6, 4, 1);
        zero(&mut p, &head);
        let one = EmotionVector::one_hot(EmotionCategory::Like);
        let (pred, loss) = predict_post_emotion(&p, &head, &[0.3, 0.1, -0.2, 0.5], &one, EmotionLossForm::PositiveTerm).unwrap();
        assert_eq!(pred.0, [0.5; 6]);
        assert!((loss - 2f64.ln()).abs() < 1e-15);
        let two = EmotionVector::label(&[EmotionCategory::Like, EmotionCategory::Sad]).unwrap();
        let (_, loss) = predict_post_emotion(&p, &head, &[0.0; 4], &two, EmotionLossForm::PositiveTerm).unwrap();
        assert!((loss - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!(predict_post_emotion(&p, &head, &[0.0; 4], &EmotionVector::zeros(), EmotionLossForm::PositiveTerm).is_err());
    }

    #[test]
    fn head_loss_matches_scalar_sum() {
        let mut p = ModelParams::new();
        let head = linear(&mut p, 6, 5, 2);
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let h: Vec<f64> = (0..5).map(|_| r.gen_range(-1.0..1.0)).collect();
        let label = EmotionVector::label(&[EmotionCategory::Angry, EmotionCategory::Other]).unwrap();
        for form in [EmotionLossForm::PositiveTerm, EmotionLossForm::BinaryCrossEntropy] {
            let (pred, loss) = predict_post_emotion(&p, &head, &h, &label, form).unwrap();
            let w = p.get(head.w);
            let b = p.get(head.b);
            let mut want = 0.0;
            for k in 0..6 {
                let z: f64 = b.data[k] + (0..5).map(|j| w.data[k * 5 + j] * h[j]).sum::<f64>();
                let e = sigmoid(z);
                assert!((pred.0[k] - e).abs() < 1e-15);
                want -= label.0[k] * e.ln();
                if form == EmotionLossForm::BinaryCrossEntropy {
                    want -= (1.0 - label.0[k]) * (1.0 - e).ln();
                }
            }
            assert!((loss - want).abs() < 1e-12, "{loss} vs {want}");
        }
    }

    #[test]
    fn fusion_cases() {
        let mut p = ModelParams::new();
        let f = Fusion(linear(&mut p, 3, 6, 4));
        let a = [0.4, -1.2, 2.0];
        let b = [-0.3, 0.8, 0.1];
        let (w, fused) = fuse(&p, &f, &a, &a).unwrap();
        assert!(w.iter().all(|&x| x > 0.0 && x < 1.0));
        for (x, y) in fused.iter().zip(a) {
            assert!((x - y.tanh()).abs() < 1e-15);
        }
        let (_, fused) = fuse(&p, &f, &a, &b).unwrap();
        for i in 0..3 {
            let (lo, hi) = (a[i].tanh().min(b[i].tanh()), a[i].tanh().max(b[i].tanh()));
            assert!(fused[i] >= lo - 1e-15 && fused[i] <= hi + 1e-15);
        }
        zero(&mut p, &f.0);
        let (w, fused) = fuse(&p, &f, &a, &b).unwrap();
        assert_eq!(w, vec![0.5; 3]);
        for i in 0..3 {
            assert!((fused[i] - 0.5 * (a[i].tanh() + b[i].tanh())).abs() < 1e-15);
        }
        assert!(fuse(&p, &f, &a, &b[..2]).is_err());
    }

    #[test]
    fn kl_closed_form_one_dim() {
        let mut p = ModelParams::new();
        let proj = Linear {
            w: p.insert("kw", vec![1, 1], vec![1.0]),
            b: p.insert("kb", vec![1], vec![0.0]),
        };
        let kl = kl_hidden(&p, &proj, &[1.0], &[0.0]).unwrap();
        let ps = sigmoid(1.0);
        let want = ps * (ps / 0.5).ln() + (1.0 - ps) * ((1.0 - ps) / 0.5).ln();
        assert!((kl - want).abs() < 1e-15);
        assert_eq!(kl_hidden(&p, &proj, &[0.7], &[0.7]).unwrap(), 0.0);
    }

    #[test]
    fn selector_loss_is_a_plain_sum() {
        assert_eq!(selector_loss(0.0, 0.0, 0.0, 0.0), 0.0);
        assert_eq!(selector_loss(0.25, 0.5, 1.0, 0.0), 1.75);
    }
}
