use serde::{Deserialize, Serialize};

use super::ngram::{bleu_n, distinct_n};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub index: usize,
    pub hypothesis: String,
    pub reference: String,
    pub bleu_1: f64,
    pub bleu_2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub distinct_1: f64,
    pub distinct_2: f64,
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub examples: Vec<ExampleRecord>,
}

/// Headline metrics for tokenised hypotheses and references. Distinct-2 is
/// reported as 0 when no hypothesis has two tokens.
pub fn metric_report(hypotheses: &[Vec<String>], references: &[Vec<String>]) -> Result<MetricReport> {
    let distinct_1 = distinct_n(hypotheses, 1)?;
    let distinct_2 = match distinct_n(hypotheses, 2) {
        Ok(v) => v,
        Err(Error::UndefinedMetric(_)) => 0.0,
        Err(e) => return Err(e),
    };
    let bleu_1 = bleu_n(hypotheses, references, 1)?;
    let bleu_2 = bleu_n(hypotheses, references, 2)?;
    let examples = hypotheses
        .iter()
        .zip(references)
        .enumerate()
        .map(|(index, (h, r))| {
            let (hs, rs) = (std::slice::from_ref(h), std::slice::from_ref(r));
            Ok(ExampleRecord {
                index,
                hypothesis: h.join(" "),
                reference: r.join(" "),
                bleu_1: bleu_n(hs, rs, 1)?,
                bleu_2: bleu_n(hs, rs, 2)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(MetricReport {
        distinct_1,
        distinct_2,
        bleu_1,
        bleu_2,
        examples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lines(v: &[&str]) -> Vec<Vec<String>> {
        v.iter().map(|s| s.split_whitespace().map(String::from).collect()).collect()
    }

    #[test]
    fn identical_files_score_one() {
        let x = lines(&["i am happy", "that is so sad"]);
        let r = metric_report(&x, &x).unwrap();
        assert_eq!(r.bleu_1, 1.0);
        assert_eq!(r.bleu_2, 1.0);
        assert_eq!(r.examples.len(), 2);
        for v in [r.distinct_1, r.distinct_2, r.bleu_1, r.bleu_2] {
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
