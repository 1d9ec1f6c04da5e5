//! Human-score aggregation and Fleiss' kappa.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quality is 1 only when both the semantic and the emotion judgement are 1.
pub fn response_quality(semantic: u8, emotion: u8) -> Result<u8> {
    if semantic > 1 || emotion > 1 {
        return Err(Error::Validation(format!(
            "human scores must be 0 or 1, got semantic={semantic}, emotion={emotion}"
        )));
    }
    Ok(semantic & emotion)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanScore {
    pub id: String,
    pub semantic: u8,
    pub emotion: u8,
}

impl HumanScore {
    pub fn quality(&self) -> Result<u8> {
        response_quality(self.semantic, self.emotion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanSummary {
    pub count: usize,
    pub semantic: f64,
    pub emotion: f64,
    pub quality: f64,
}

/// Reads a CSV with columns `id, semantic, emotion`.
pub fn read_human_scores(path: impl AsRef<Path>) -> Result<Vec<HumanScore>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, row) in reader.deserialize().enumerate() {
        let score: HumanScore = row.map_err(|e| Error::format(path.display(), i + 2, e.to_string()))?;
        score.quality().map_err(|e| Error::format(path.display(), i + 2, e.to_string()))?;
        out.push(score);
    }
    Ok(out)
}

pub fn summarize_human_scores(scores: &[HumanScore]) -> Result<HumanSummary> {
    if scores.is_empty() {
        return Err(Error::UndefinedMetric("no human scores".into()));
    }
    let n = scores.len() as f64;
    let mut q = 0.0;
    for s in scores {
        q += s.quality()? as f64;
    }
    Ok(HumanSummary {
        count: scores.len(),
        semantic: scores.iter().map(|s| s.semantic as f64).sum::<f64>() / n,
        emotion: scores.iter().map(|s| s.emotion as f64).sum::<f64>() / n,
        quality: q / n,
    })
}

/// Fleiss' kappa for a matrix of per-item category counts. Every row must
/// have the same number of raters, at least two. When chance agreement is 1
/// (every rating in a single category) the result is 1.
pub fn fleiss_kappa(ratings: &[Vec<usize>]) -> Result<f64> {
    let first = ratings
        .first()
        .ok_or_else(|| Error::UndefinedMetric("kappa of an empty rating matrix".into()))?;
    let k = first.len();
    let r: usize = first.iter().sum();
    if r < 2 {
        return Err(Error::Validation(format!("need at least 2 raters per item, got {r}")));
    }
    for (i, row) in ratings.iter().enumerate() {
        if row.len() != k || row.iter().sum::<usize>() != r {
            return Err(Error::Validation(format!(
                "item {i} has {} ratings over {} categories; expected {r} over {k}",
                row.iter().sum::<usize>(),
                row.len()
            )));
        }
    }
    let n = ratings.len() as f64;
    let rf = r as f64;
    let p_bar = ratings
        .iter()
        .map(|row| (row.iter().map(|&c| (c * c) as f64).sum::<f64>() - rf) / (rf * (rf - 1.0)))
        .sum::<f64>()
        / n;
    let p_e: f64 = (0..k)
        .map(|j| {
            let pj = ratings.iter().map(|row| row[j] as f64).sum::<f64>() / (n * rf);
            pj * pj
        })
        .sum();
    if p_e >= 1.0 {
        return if p_bar >= 1.0 {
            Ok(1.0)
        } else {
            Err(Error::UndefinedMetric("chance agreement is 1 but observed agreement is not".into()))
        };
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}
