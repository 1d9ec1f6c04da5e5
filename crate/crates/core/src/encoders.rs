//! GRU recurrences and self-attention pooling.
//!
//! Cell (one bias per gate, reset applied to the state before `U_n`):
//!
//! ```text
//! z  = sigmoid(W_z x + b_z + U_z h)
//! r  = sigmoid(W_r x + b_r + U_r h)
//! n  = tanh(W_n x + b_n + U_n (r * h))
//! h' = (1 - z) * h + z * n
//! ```
//!
//! A layer may carry an auxiliary input block (`A_z`, `A_r`, `A_n`) whose
//! product with a second input vector is added right after the bias. The
//! decoder uses it for the emotion embedding, so a zero auxiliary vector
//! leaves the forward values bit-identical to a layer without the block.

use rand_chacha::ChaCha8Rng;

use crate::error::{shape_check, Error, Result};
use crate::params::{ModelParams, ParamId};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy)]
struct Gate {
    w: ParamId,
    u: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
pub struct GruLayer {
    z: Gate,
    r: Gate,
    n: Gate,
    aux: Option<[ParamId; 3]>,
    pub input_dim: usize,
    pub aux_dim: usize,
    pub hidden_dim: usize,
}

impl GruLayer {
    pub(crate) fn new(params: &mut ModelParams, prefix: &str, input_dim: usize, aux_dim: usize, hidden_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut gate = |g: &str| Gate {
            w: params.uniform(&format!("{prefix}.w_{g}"), vec![hidden_dim, input_dim], rng),
            u: params.uniform(&format!("{prefix}.u_{g}"), vec![hidden_dim, hidden_dim], rng),
            b: params.uniform(&format!("{prefix}.b_{g}"), vec![hidden_dim], rng),
        };
        let (z, r, n) = (gate("z"), gate("r"), gate("n"));
        let aux = (aux_dim > 0).then(|| ["z", "r", "n"].map(|g| params.uniform(&format!("{prefix}.emo_{g}"), vec![hidden_dim, aux_dim], rng)));
        GruLayer {
            z,
            r,
            n,
            aux,
            input_dim,
            aux_dim,
            hidden_dim,
        }
    }

    fn pre(&self, tape: &mut Tape, gate: Gate, k: usize, x: Var, aux: Option<Var>) -> Var {
        let mut pre = tape.affine(gate.w, Some(gate.b), x);
        if let (Some(ids), Some(a)) = (self.aux, aux) {
            let extra = tape.matvec(ids[k], a);
            pre = tape.add(pre, extra);
        }
        pre
    }

    /// One recurrence step on the tape. `aux` is ignored by layers without an
    /// auxiliary block.
    pub fn step(&self, tape: &mut Tape, h: Var, x: Var, aux: Option<Var>) -> Var {
        let pz = self.pre(tape, self.z, 0, x, aux);
        let uz = tape.matvec(self.z.u, h);
        let pz = tape.add(pz, uz);
        let z = tape.sigmoid(pz);

        let pr = self.pre(tape, self.r, 1, x, aux);
        let ur = tape.matvec(self.r.u, h);
        let pr = tape.add(pr, ur);
        let r = tape.sigmoid(pr);

        let pn = self.pre(tape, self.n, 2, x, aux);
        let rh = tape.mul(r, h);
        let un = tape.matvec(self.n.u, rh);
        let pn = tape.add(pn, un);
        let n = tape.tanh(pn);

        let keep = tape.one_minus(z);
        let kept = tape.mul(keep, h);
        let fresh = tape.mul(z, n);
        tape.add(kept, fresh)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for g in [self.z, self.r, self.n] {
            ids.extend([g.w, g.u, g.b]);
        }
        if let Some(a) = self.aux {
            ids.extend(a);
        }
        ids
    }

    /// Auxiliary-input weights, if the layer has them.
    pub fn aux_ids(&self) -> Option<[ParamId; 3]> {
        self.aux
    }
}

/// Stacked GRU layers; layer `k > 0` reads layer `k - 1`'s state.
#[derive(Debug, Clone)]
pub struct GruStack {
    pub layers: Vec<GruLayer>,
}

impl GruStack {
    pub(crate) fn new(params: &mut ModelParams, prefix: &str, input_dim: usize, hidden_dim: usize, n_layers: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::with_aux(params, prefix, input_dim, 0, hidden_dim, n_layers, rng)
    }

    /// First layer carries an auxiliary input block of width `aux_dim`.
    pub(crate) fn with_aux(
        params: &mut ModelParams,
        prefix: &str,
        input_dim: usize,
        aux_dim: usize,
        hidden_dim: usize,
        n_layers: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let layers = (0..n_layers)
            .map(|k| {
                let (inp, aux) = if k == 0 { (input_dim, aux_dim) } else { (hidden_dim, 0) };
                GruLayer::new(params, &format!("{prefix}.l{k}"), inp, aux, hidden_dim, rng)
            })
            .collect();
        GruStack { layers }
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers[0].hidden_dim
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    /// Advances every layer by one step; returns the new per-layer states.
    pub fn step(&self, tape: &mut Tape, states: &[Var], x: Var, aux: Option<Var>) -> Vec<Var> {
        let mut input = x;
        let mut next = Vec::with_capacity(self.layers.len());
        for (k, (layer, &h)) in self.layers.iter().zip(states).enumerate() {
            let out = layer.step(tape, h, input, if k == 0 { aux } else { None });
            next.push(out);
            input = out;
        }
        next
    }

    /// Left-to-right pass from the zero state. Masked (`false`) positions
    /// copy the previous state of every layer. Returns the top-layer states.
    pub fn encode(&self, tape: &mut Tape, inputs: &[Var], mask: &[bool]) -> Result<Vec<Var>> {
        if inputs.is_empty() {
            return Err(Error::Shape("cannot encode an empty sequence".into()));
        }
        shape_check(mask.len() == inputs.len(), || {
            format!("mask length {} != sequence length {}", mask.len(), inputs.len())
        })?;
        for &x in inputs {
            shape_check(tape.value(x).len() == self.input_dim(), || {
                format!("encoder expects inputs of {}, got {}", self.input_dim(), tape.value(x).len())
            })?;
        }
        let h = self.hidden_dim();
        let mut states: Vec<Var> = (0..self.layers.len()).map(|_| tape.zeros(h)).collect();
        let mut top = Vec::with_capacity(inputs.len());
        for (&x, &m) in inputs.iter().zip(mask) {
            if m {
                states = self.step(tape, &states, x, None);
            }
            top.push(*states.last().expect("at least one layer"));
        }
        Ok(top)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(GruLayer::param_ids).collect()
    }
}

/// Structured self-attention pooling: `a = softmax(v . tanh(W h_i))`,
/// pooled = `sum_i a_i h_i`.
#[derive(Debug, Clone, Copy)]
pub struct AttnPool {
    pub w: ParamId,
    pub v: ParamId,
}

/// Pooled vector with its attention weights (tape handles).
#[derive(Debug, Clone)]
pub struct Pooled {
    pub pooled: Var,
    pub weights: Var,
}

impl AttnPool {
    pub(crate) fn new(params: &mut ModelParams, prefix: &str, hidden_dim: usize, attn_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        AttnPool {
            w: params.uniform(&format!("{prefix}.w"), vec![attn_dim, hidden_dim], rng),
            v: params.uniform(&format!("{prefix}.v"), vec![attn_dim], rng),
        }
    }

    pub fn pool(&self, tape: &mut Tape, states: &[Var], mask: &[bool]) -> Result<Pooled> {
        shape_check(states.len() == mask.len(), || "pool mask length mismatch".into())?;
        if !mask.iter().any(|&m| m) {
            return Err(Error::InvalidInput("self-attention pooling needs at least one unmasked state".into()));
        }
        let scores: Vec<Var> = states
            .iter()
            .map(|&h| {
                let proj = tape.matvec(self.w, h);
                let act = tape.tanh(proj);
                tape.dot(self.v, act)
            })
            .collect();
        let scores = tape.concat(&scores);
        let weights = tape.masked_softmax(scores, mask);
        let pooled = tape.weighted_sum(weights, states);
        Ok(Pooled { pooled, weights })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w, self.v]
    }
}

/// Plain-value result of [`encode_and_pool`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub states: Vec<Vec<f64>>,
    pub pooled: Vec<f64>,
    pub weights: Vec<f64>,
}

/// One GRU step on plain vectors.
pub fn gru_step(params: &ModelParams, layer: &GruLayer, h_prev: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    shape_check(h_prev.len() == layer.hidden_dim, || {
        format!("state has {} components, layer expects {}", h_prev.len(), layer.hidden_dim)
    })?;
    shape_check(x.len() == layer.input_dim, || {
        format!("input has {} components, layer expects {}", x.len(), layer.input_dim)
    })?;
    let mut tape = Tape::new(params);
    let h = tape.constant(h_prev.to_vec());
    let xv = tape.constant(x.to_vec());
    let out = layer.step(&mut tape, h, xv, None);
    Ok(tape.value(out).to_vec())
}

/// Runs a stack over plain input vectors; returns top-layer states.
pub fn encode_sequence(params: &ModelParams, stack: &GruStack, inputs: &[Vec<f64>], mask: &[bool]) -> Result<Vec<Vec<f64>>> {
    let mut tape = Tape::new(params);
    let xs: Vec<Var> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
    let states = stack.encode(&mut tape, &xs, mask)?;
    Ok(states.iter().map(|&s| tape.value(s).to_vec()).collect())
}

/// Pools plain state vectors.
pub fn self_attention_pool(params: &ModelParams, pool: &AttnPool, states: &[Vec<f64>], mask: &[bool]) -> Result<EncoderOutput> {
    if states.is_empty() {
        return Err(Error::InvalidInput("no states to pool".into()));
    }
    let mut tape = Tape::new(params);
    let hs: Vec<Var> = states.iter().map(|h| tape.constant(h.clone())).collect();
    let out = pool.pool(&mut tape, &hs, mask)?;
    Ok(EncoderOutput {
        states: states.to_vec(),
        pooled: tape.value(out.pooled).to_vec(),
        weights: tape.value(out.weights).to_vec(),
    })
}
