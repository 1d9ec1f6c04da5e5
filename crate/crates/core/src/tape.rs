//! Reverse-mode differentiation over a recorded list of vector operations.
//!
//! Every node holds a flat `Vec<f64>`; scalars are length-1 nodes. Parameter
//! tensors are read in place from the [`ModelParams`] the tape borrows, and
//! their gradients are accumulated into a [`Grads`] by [`Tape::backward`].

use crate::params::{Grads, ModelParams, ParamId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    Row(ParamId, usize),
    /// `W x (+ b)`; `W` is `rows x cols`.
    Affine(ParamId, Option<ParamId>, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    OneMinus(Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    /// `v . x` for a parameter vector `v`.
    Dot(ParamId, Var),
    Softmax(Var, Vec<bool>),
    WeightedSum(Var, Vec<Var>),
    Sum(Vec<Var>),
    /// `-log softmax(z)[target]`
    Xent(Var, usize),
    /// Sigmoid cross-entropy against a multi-hot label.
    SigmoidXent {
        logits: Var,
        labels: Vec<f64>,
        full: bool,
    },
    /// Sum of per-dimension Bernoulli KL(sigma(p) || sigma(q)).
    BernoulliKl {
        p: Var,
        q: Var,
        stop_q: bool,
    },
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ModelParams,
    nodes: Vec<Node>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn affine(w: &[f64], rows: usize, cols: usize, x: &[f64], b: Option<&[f64]>) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        if let Some(b) = b {
            acc += b[r];
        }
        out.push(acc);
    }
    out
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ModelParams) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(1024),
        }
    }

    pub fn params(&self) -> &'p ModelParams {
        self.params
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.constant(vec![0.0; n])
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let value = self.params.get(id).data.clone();
        self.push(value, Op::Param(id))
    }

    /// One row of a matrix parameter (embedding lookup).
    pub fn row(&mut self, table: ParamId, row: usize) -> Var {
        let value = self.params.get(table).row(row).to_vec();
        self.push(value, Op::Row(table, row))
    }

    pub fn affine(&mut self, w: ParamId, b: Option<ParamId>, x: Var) -> Var {
        let t = self.params.get(w);
        let (rows, cols) = (t.rows(), t.cols());
        let xv = &self.nodes[x.0].value;
        assert_eq!(xv.len(), cols, "affine: {} expects input {cols}, got {}", t.name, xv.len());
        let bias = b.map(|b| self.params.get(b).data.as_slice());
        let value = affine(&t.data, rows, cols, xv, bias);
        self.push(value, Op::Affine(w, b, x))
    }

    pub fn matvec(&mut self, w: ParamId, x: Var) -> Var {
        self.affine(w, None, x)
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.len(), bv.len(), "elementwise op on lengths {} and {}", av.len(), bv.len());
        let value = av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect();
        self.push(value, op)
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        self.push(value, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        self.map(a, Op::OneMinus(a), |x| 1.0 - x)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.map(a, Op::Scale(a, s), |x| x * s)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut value = Vec::new();
        for p in parts {
            value.extend_from_slice(&self.nodes[p.0].value);
        }
        self.push(value, Op::Concat(parts.to_vec()))
    }

    pub fn dot(&mut self, v: ParamId, x: Var) -> Var {
        let pv = &self.params.get(v).data;
        let xv = &self.nodes[x.0].value;
        assert_eq!(pv.len(), xv.len(), "dot length mismatch");
        let mut acc = 0.0;
        for (a, b) in pv.iter().zip(xv) {
            acc += a * b;
        }
        self.push(vec![acc], Op::Dot(v, x))
    }

    /// Softmax over the unmasked entries; masked entries get exactly 0.
    /// At least one entry must be unmasked.
    pub fn masked_softmax(&mut self, scores: Var, mask: &[bool]) -> Var {
        let s = &self.nodes[scores.0].value;
        assert_eq!(s.len(), mask.len(), "softmax mask length");
        let max = s.iter().zip(mask).filter(|(_, &m)| m).map(|(&x, _)| x).fold(f64::NEG_INFINITY, f64::max);
        assert!(max.is_finite() || mask.iter().any(|&m| m), "softmax with every position masked");
        let mut value: Vec<f64> = s.iter().zip(mask).map(|(&x, &m)| if m { (x - max).exp() } else { 0.0 }).collect();
        let z: f64 = value.iter().sum();
        for v in &mut value {
            *v /= z;
        }
        self.push(value, Op::Softmax(scores, mask.to_vec()))
    }

    /// `sum_i w[i] * items[i]`
    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Var {
        let w = &self.nodes[weights.0].value;
        assert_eq!(w.len(), items.len(), "weighted_sum arity");
        let n = self.nodes[items[0].0].value.len();
        let mut value = vec![0.0; n];
        for (wi, it) in w.iter().zip(items) {
            for (acc, x) in value.iter_mut().zip(&self.nodes[it.0].value) {
                *acc += wi * x;
            }
        }
        self.push(value, Op::WeightedSum(weights, items.to_vec()))
    }

    /// Sum of scalar nodes.
    pub fn sum(&mut self, items: &[Var]) -> Var {
        let mut acc = 0.0;
        for it in items {
            acc += self.nodes[it.0].value[0];
        }
        self.push(vec![acc], Op::Sum(items.to_vec()))
    }

    pub fn xent(&mut self, logits: Var, target: usize) -> Var {
        let z = &self.nodes[logits.0].value;
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        let value = lse - z[target];
        self.push(vec![value], Op::Xent(logits, target))
    }

    /// `full = false`: `-sum_j e_j log sigma(z_j)`; `full = true` adds the
    /// negative-class terms `-(1 - e_j) log(1 - sigma(z_j))`.
    pub fn sigmoid_xent(&mut self, logits: Var, labels: &[f64], full: bool) -> Var {
        let z = &self.nodes[logits.0].value;
        assert_eq!(z.len(), labels.len(), "label length");
        let mut acc = 0.0;
        for (&zj, &ej) in z.iter().zip(labels) {
            acc += ej * softplus(-zj);
            if full {
                acc += (1.0 - ej) * softplus(zj);
            }
        }
        self.push(
            vec![acc],
            Op::SigmoidXent {
                logits,
                labels: labels.to_vec(),
                full,
            },
        )
    }

    /// `sum_j KL(Bernoulli(sigma(p_j)) || Bernoulli(sigma(q_j)))` from logits.
    pub fn bernoulli_kl(&mut self, p: Var, q: Var, stop_q: bool) -> Var {
        let (pv, qv) = (&self.nodes[p.0].value, &self.nodes[q.0].value);
        assert_eq!(pv.len(), qv.len(), "kl length");
        let mut acc = 0.0;
        for (&a, &b) in pv.iter().zip(qv) {
            let pa = sigmoid(a);
            // ln sigma(x) = -softplus(-x), ln(1 - sigma(x)) = -softplus(x)
            acc += pa * (softplus(-b) - softplus(-a)) + (1.0 - pa) * (softplus(b) - softplus(a));
        }
        self.push(vec![acc.max(0.0)], Op::BernoulliKl { p, q, stop_q })
    }

    /// Accumulates `scale * d(root)/d(param)` into `grads`.
    pub fn backward(&self, root: Var, scale: f64, grads: &mut Grads) {
        let mut g: Vec<Vec<f64>> = vec![Vec::new(); root.0 + 1];
        g[root.0] = vec![scale; self.nodes[root.0].value.len()];

        fn acc(g: &mut [Vec<f64>], v: Var, len: usize) -> &mut Vec<f64> {
            let slot = &mut g[v.0];
            if slot.is_empty() {
                slot.resize(len, 0.0);
            }
            slot
        }

        for i in (0..=root.0).rev() {
            if g[i].is_empty() {
                continue;
            }
            let gi = std::mem::take(&mut g[i]);
            let node = &self.nodes[i];
            let len_of = |v: Var| self.nodes[v.0].value.len();
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    for (d, s) in grads.get_mut(*id).iter_mut().zip(&gi) {
                        *d += s;
                    }
                }
                Op::Row(id, r) => {
                    let cols = self.params.get(*id).cols();
                    let dst = &mut grads.get_mut(*id)[r * cols..(r + 1) * cols];
                    for (d, s) in dst.iter_mut().zip(&gi) {
                        *d += s;
                    }
                }
                Op::Affine(w, b, x) => {
                    let t = self.params.get(*w);
                    let cols = t.cols();
                    let xv = &self.nodes[x.0].value;
                    {
                        let dw = grads.get_mut(*w);
                        for (r, &gr) in gi.iter().enumerate() {
                            if gr == 0.0 {
                                continue;
                            }
                            for (d, &xc) in dw[r * cols..(r + 1) * cols].iter_mut().zip(xv) {
                                *d += gr * xc;
                            }
                        }
                    }
                    if let Some(b) = b {
                        for (d, s) in grads.get_mut(*b).iter_mut().zip(&gi) {
                            *d += s;
                        }
                    }
                    let gx = acc(&mut g, *x, cols);
                    for (r, &gr) in gi.iter().enumerate() {
                        if gr == 0.0 {
                            continue;
                        }
                        for (d, &wc) in gx.iter_mut().zip(&t.data[r * cols..(r + 1) * cols]) {
                            *d += gr * wc;
                        }
                    }
                }
                Op::Add(a, b) => {
                    for (d, s) in acc(&mut g, *a, gi.len()).iter_mut().zip(&gi) {
                        *d += s;
                    }
                    for (d, s) in acc(&mut g, *b, gi.len()).iter_mut().zip(&gi) {
                        *d += s;
                    }
                }
                Op::Sub(a, b) => {
                    for (d, s) in acc(&mut g, *a, gi.len()).iter_mut().zip(&gi) {
                        *d += s;
                    }
                    for (d, s) in acc(&mut g, *b, gi.len()).iter_mut().zip(&gi) {
                        *d -= s;
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    {
                        let ga = acc(&mut g, *a, gi.len());
                        for ((d, s), y) in ga.iter_mut().zip(&gi).zip(bv) {
                            *d += s * y;
                        }
                    }
                    let gb = acc(&mut g, *b, gi.len());
                    for ((d, s), x) in gb.iter_mut().zip(&gi).zip(av) {
                        *d += s * x;
                    }
                }
                Op::OneMinus(a) => {
                    for (d, s) in acc(&mut g, *a, gi.len()).iter_mut().zip(&gi) {
                        *d -= s;
                    }
                }
                Op::Scale(a, k) => {
                    for (d, s) in acc(&mut g, *a, gi.len()).iter_mut().zip(&gi) {
                        *d += s * k;
                    }
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    for ((d, s), y) in acc(&mut g, *a, gi.len()).iter_mut().zip(&gi).zip(y) {
                        *d += s * y * (1.0 - y);
                    }
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    for ((d, s), y) in acc(&mut g, *a, gi.len()).iter_mut().zip(&gi).zip(y) {
                        *d += s * (1.0 - y * y);
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = len_of(*p);
                        for (d, s) in acc(&mut g, *p, n).iter_mut().zip(&gi[off..off + n]) {
                            *d += s;
                        }
                        off += n;
                    }
                }
                Op::Dot(v, x) => {
                    let s = gi[0];
                    let pv = &self.params.get(*v).data;
                    let xv = &self.nodes[x.0].value;
                    for (d, xx) in grads.get_mut(*v).iter_mut().zip(xv) {
                        *d += s * xx;
                    }
                    for (d, p) in acc(&mut g, *x, pv.len()).iter_mut().zip(pv) {
                        *d += s * p;
                    }
                }
                Op::Softmax(scores, mask) => {
                    let y = &node.value;
                    let inner: f64 = y.iter().zip(&gi).map(|(a, b)| a * b).sum();
                    let gs = acc(&mut g, *scores, y.len());
                    for j in 0..y.len() {
                        if mask[j] {
                            gs[j] += y[j] * (gi[j] - inner);
                        }
                    }
                }
                Op::WeightedSum(weights, items) => {
                    let w = self.nodes[weights.0].value.clone();
                    let mut gw = vec![0.0; items.len()];
                    for (k, it) in items.iter().enumerate() {
                        let xv = &self.nodes[it.0].value;
                        gw[k] = xv.iter().zip(&gi).map(|(a, b)| a * b).sum();
                        let gx = acc(&mut g, *it, gi.len());
                        for (d, s) in gx.iter_mut().zip(&gi) {
                            *d += w[k] * s;
                        }
                    }
                    for (d, s) in acc(&mut g, *weights, items.len()).iter_mut().zip(&gw) {
                        *d += s;
                    }
                }
                Op::Sum(items) => {
                    for it in items {
                        acc(&mut g, *it, 1)[0] += gi[0];
                    }
                }
                Op::Xent(logits, target) => {
                    let z = &self.nodes[logits.0].value;
                    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let denom: f64 = z.iter().map(|&x| (x - max).exp()).sum();
                    let s = gi[0];
                    let gz = acc(&mut g, *logits, z.len());
                    for (j, (d, &x)) in gz.iter_mut().zip(z).enumerate() {
                        let p = (x - max).exp() / denom;
                        *d += s * (p - if j == *target { 1.0 } else { 0.0 });
                    }
                }
                Op::SigmoidXent { logits, labels, full } => {
                    let z = &self.nodes[logits.0].value;
                    let s = gi[0];
                    let gz = acc(&mut g, *logits, z.len());
                    for ((d, &zj), &ej) in gz.iter_mut().zip(z).zip(labels) {
                        let p = sigmoid(zj);
                        let dz = if *full { p - ej } else { -ej * (1.0 - p) };
                        *d += s * dz;
                    }
                }
                Op::BernoulliKl { p, q, stop_q } => {
                    let s = gi[0];
                    let (pv, qv) = (self.nodes[p.0].value.clone(), self.nodes[q.0].value.clone());
                    {
                        let gp = acc(&mut g, *p, pv.len());
                        for ((d, &a), &b) in gp.iter_mut().zip(&pv).zip(&qv) {
                            let pa = sigmoid(a);
                            *d += s * pa * (1.0 - pa) * (a - b);
                        }
                    }
                    if !stop_q {
                        let gq = acc(&mut g, *q, qv.len());
                        for ((d, &a), &b) in gq.iter_mut().zip(&pv).zip(&qv) {
                            *d += s * (sigmoid(b) - sigmoid(a));
                        }
                    }
                }
            }
        }
    }
}
