//! Scalar reference implementations used as test oracles. Tensors are read by
//! name and every formula is written out with plain loops.

#![allow(dead_code)]

use emochat::ModelParams;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn tensor<'a>(p: &'a ModelParams, name: &str) -> (&'a [f64], usize) {
    let t = p.by_name(name).unwrap_or_else(|| panic!("no tensor '{name}'"));
    let cols = if t.shape.len() == 2 { t.shape[1] } else { 1 };
    (&t.data, cols)
}

pub fn matvec(p: &ModelParams, name: &str, x: &[f64]) -> Vec<f64> {
    let (data, cols) = tensor(p, name);
    assert_eq!(cols, x.len(), "{name}: width");
    data.chunks(cols).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

pub fn vector(p: &ModelParams, name: &str) -> Vec<f64> {
    tensor(p, name).0.to_vec()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn row(p: &ModelParams, table: &str, id: usize) -> Vec<f64> {
    let (data, cols) = tensor(p, table);
    data[id * cols..(id + 1) * cols].to_vec()
}

/// One GRU cell named `prefix` (for example `selector.prior.gru.l0`).
pub fn gru(p: &ModelParams, prefix: &str, h: &[f64], x: &[f64], aux: Option<&[f64]>) -> Vec<f64> {
    let gate = |g: &str, hh: &[f64]| {
        let mut pre = add(&matvec(p, &format!("{prefix}.w_{g}"), x), &vector(p, &format!("{prefix}.b_{g}")));
        if let Some(a) = aux {
            pre = add(&pre, &matvec(p, &format!("{prefix}.emo_{g}"), a));
        }
        add(&pre, &matvec(p, &format!("{prefix}.u_{g}"), hh))
    };
    let z: Vec<f64> = gate("z", h).into_iter().map(sigmoid).collect();
    let r: Vec<f64> = gate("r", h).into_iter().map(sigmoid).collect();
    let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
    let n: Vec<f64> = gate("n", &rh).into_iter().map(f64::tanh).collect();
    (0..h.len()).map(|i| (1.0 - z[i]) * h[i] + z[i] * n[i]).collect()
}

/// Stacked GRU from the zero state; returns top-layer states.
pub fn encode(p: &ModelParams, prefix: &str, layers: usize, hidden: usize, inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut states = vec![vec![0.0; hidden]; layers];
    let mut top = Vec::new();
    for x in inputs {
        let mut input = x.clone();
        for (k, s) in states.iter_mut().enumerate() {
            *s = gru(p, &format!("{prefix}.l{k}"), s, &input, None);
            input = s.clone();
        }
        top.push(input);
    }
    top
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

pub fn weighted(weights: &[f64], states: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; states[0].len()];
    for (w, s) in weights.iter().zip(states) {
        for (o, x) in out.iter_mut().zip(s) {
            *o += w * x;
        }
    }
    out
}

/// Self-attention pooling named `prefix` (for example `selector.prior.pool`).
pub fn pool(p: &ModelParams, prefix: &str, states: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let v = vector(p, &format!("{prefix}.v"));
    let scores: Vec<f64> = states
        .iter()
        .map(|h| {
            let act: Vec<f64> = matvec(p, &format!("{prefix}.w"), h).into_iter().map(f64::tanh).collect();
            dot(&v, &act)
        })
        .collect();
    let w = softmax(&scores);
    let pooled = weighted(&w, states);
    (w, pooled)
}

pub fn linear(p: &ModelParams, prefix: &str, x: &[f64]) -> Vec<f64> {
    add(&matvec(p, &format!("{prefix}.w"), x), &vector(p, &format!("{prefix}.b")))
}

/// Gate and fused vector.
pub fn fuse(p: &ModelParams, prefix: &str, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let cat: Vec<f64> = a.iter().chain(b).copied().collect();
    let gate: Vec<f64> = linear(p, prefix, &cat).into_iter().map(sigmoid).collect();
    let fused = (0..a.len()).map(|i| gate[i] * a[i].tanh() + (1.0 - gate[i]) * b[i].tanh()).collect();
    (gate, fused)
}

/// Sum of Bernoulli KLs between sigmoid(p) and sigmoid(q).
pub fn bernoulli_kl(p_logits: &[f64], q_logits: &[f64]) -> f64 {
    p_logits
        .iter()
        .zip(q_logits)
        .map(|(&a, &b)| {
            let (p, q) = (sigmoid(a), sigmoid(b));
            p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
        })
        .sum()
}

/// Per-class binary cross-entropy (`full`) or positive terms only.
pub fn sigmoid_xent(logits: &[f64], labels: &[f64], full: bool) -> f64 {
    logits
        .iter()
        .zip(labels)
        .map(|(&z, &e)| {
            let s = sigmoid(z);
            let mut l = -e * s.ln();
            if full {
                l -= (1.0 - e) * (1.0 - s).ln();
            }
            l
        })
        .sum()
}

pub fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
