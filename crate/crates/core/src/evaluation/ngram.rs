//! Distinct-n and corpus BLEU.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use crate::error::{Error, Result};

fn check_order(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidInput("n-gram order must be at least 1".into()));
    }
    Ok(())
}

/// Unique n-grams over total n-grams across all responses.
pub fn distinct_n<S, T>(responses: &[S], n: usize) -> Result<f64>
where
    S: AsRef<[T]>,
    T: Hash + Eq,
{
    check_order(n)?;
    let mut seen = HashSet::new();
    let mut total = 0usize;
    for r in responses {
        for g in r.as_ref().windows(n) {
            seen.insert(g);
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::UndefinedMetric(format!("no {n}-grams in the responses")));
    }
    Ok(seen.len() as f64 / total as f64)
}

fn counts<T: Hash + Eq>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    for g in tokens.windows(n) {
        *m.entry(g).or_insert(0) += 1;
    }
    m
}

/// Clipped matches and hypothesis n-gram count for one pair at order `n`.
fn clipped<T: Hash + Eq>(hyp: &[T], reference: &[T], n: usize) -> (usize, usize) {
    let h = counts(hyp, n);
    let r = counts(reference, n);
    let matched = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
    (matched, hyp.len().saturating_sub(n - 1))
}

/// Corpus BLEU with uniform weights over orders `1..=n`, one reference per
/// hypothesis, brevity penalty `exp(1 - r/c)` when `c <= r`, and add-one
/// smoothing: an order with no clipped match gets precision `1 / (t + 1)`
/// where `t` is its hypothesis n-gram count.
pub fn bleu_n<S, T>(hypotheses: &[S], references: &[S], n: usize) -> Result<f64>
where
    S: AsRef<[T]>,
    T: Hash + Eq,
{
    check_order(n)?;
    if hypotheses.is_empty() {
        return Err(Error::UndefinedMetric("BLEU of an empty corpus".into()));
    }
    if hypotheses.len() != references.len() {
        return Err(Error::Shape(format!(
            "{} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    let mut matched = vec![0usize; n];
    let mut total = vec![0usize; n];
    let (mut c, mut r) = (0usize, 0usize);
    for (h, rf) in hypotheses.iter().zip(references) {
        let (h, rf) = (h.as_ref(), rf.as_ref());
        c += h.len();
        r += rf.len();
        for k in 1..=n {
            let (m, t) = clipped(h, rf, k);
            matched[k - 1] += m;
            total[k - 1] += t;
        }
    }
    if c == 0 {
        return Ok(0.0);
    }
    let log_p: f64 = (0..n)
        .map(|k| {
            let p = if matched[k] > 0 {
                matched[k] as f64 / total[k] as f64
            } else {
                1.0 / (total[k] as f64 + 1.0)
            };
            p.ln()
        })
        .sum::<f64>()
        / n as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Ok(bp * log_p.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn distinct_examples() {
        assert!((distinct_n(&[toks("a a a")], 1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(distinct_n(&[toks("a b"), toks("c d")], 2).unwrap(), 1.0);
        assert!(matches!(distinct_n(&[toks("a")], 2), Err(Error::UndefinedMetric(_))));
        assert!(distinct_n::<Vec<&str>, &str>(&[], 1).is_err());
    }

    #[test]
    fn bleu_identity_is_one() {
        let x = vec![toks("the cat sat"), toks("a dog ran off")];
        assert!((bleu_n(&x, &x, 1).unwrap() - 1.0).abs() < 1e-15);
        assert!((bleu_n(&x, &x, 2).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bleu_disjoint_uses_smoothed_form() {
        let h = vec![toks("a b c")];
        let r = vec![toks("x y z")];
        // p1 = 1/(3+1), equal lengths so no brevity penalty
        assert!((bleu_n(&h, &r, 1).unwrap() - 0.25).abs() < 1e-15);
        // p2 = 1/(2+1)
        let want = (0.25f64 * (1.0 / 3.0)).sqrt();
        assert!((bleu_n(&h, &r, 2).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn bleu_hand_worksheet() {
        let h = vec![toks("the the cat"), toks("on mat"), toks("a b c d")];
        let r = vec![toks("the cat"), toks("on the mat"), toks("a b x d e")];
        // order 1: the(2 vs 1)->1, cat 1 | on, mat 2 | a b d 3 => 7 of 9
        // order 2: "the cat" 1 | 0 | "a b" 1 => 2 of 6
        // c = 9, r = 10
        let bp = (1.0f64 - 10.0 / 9.0).exp();
        let b1 = bp * 7.0 / 9.0;
        let b2 = bp * ((7.0f64 / 9.0) * (2.0 / 6.0)).sqrt();
        assert!((bleu_n(&h, &r, 1).unwrap() - b1).abs() < 1e-12);
        assert!((bleu_n(&h, &r, 2).unwrap() - b2).abs() < 1e-12);
    }

    #[test]
    fn bleu_errors() {
        let h = vec![toks("a")];
        assert!(matches!(bleu_n::<Vec<&str>, &str>(&[], &[], 1), Err(Error::UndefinedMetric(_))));
        assert!(matches!(bleu_n(&h, &[], 1), Err(Error::Shape(_))));
        assert_eq!(bleu_n(&[toks("")], &[toks("a")], 1).unwrap(), 0.0);
    }
}
