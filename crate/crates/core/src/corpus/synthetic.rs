use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DialogueRecord;
use crate::emotion::{EmotionCategory, NUM_EMOTIONS};
use crate::error::{Error, Result};

/// Recipe for a corpus with a planted post->response emotion transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Row `i` is the response-emotion distribution for post emotion `i`.
    pub transition: Vec<Vec<f64>>,
    /// One lexicon per emotion category, pairwise disjoint.
    pub lexicons: Vec<Vec<String>>,
    /// Emotion-neutral filler tokens.
    pub filler: Vec<String>,
    pub pair_count: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Fraction of pairs whose response emotion is drawn uniformly instead.
    pub noise_rate: f64,
}

impl SyntheticSpec {
    /// Default lexicons (`angry_0`...) and filler (`w00`...) with the given transition.
    pub fn with_transition(transition: Vec<Vec<f64>>, pair_count: usize, noise_rate: f64) -> Self {
        let lexicons = EmotionCategory::ALL
            .iter()
            .map(|c| (0..5).map(|i| format!("{}_{i}", c.name().to_lowercase())).collect())
            .collect();
        SyntheticSpec {
            transition,
            lexicons,
            filler: (0..40).map(|i| format!("w{i:02}")).collect(),
            pair_count,
            min_len: 3,
            max_len: 7,
            noise_rate,
        }
    }

    /// Each post emotion maps deterministically to `targets[i]`.
    pub fn deterministic(targets: [usize; NUM_EMOTIONS], pair_count: usize, noise_rate: f64) -> Self {
        let transition = targets
            .iter()
            .map(|&t| {
                let mut row = vec![0.0; NUM_EMOTIONS];
                row[t] = 1.0;
                row
            })
            .collect();
        Self::with_transition(transition, pair_count, noise_rate)
    }

    pub fn validate(&self) -> Result<()> {
        if self.transition.len() != NUM_EMOTIONS {
            return Err(Error::Config(format!(
                "transition matrix needs {NUM_EMOTIONS} rows, got {}",
                self.transition.len()
            )));
        }
        for (i, row) in self.transition.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.len() != NUM_EMOTIONS || row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("transition row {i} is not a probability distribution")));
            }
        }
        if self.lexicons.len() != NUM_EMOTIONS || self.lexicons.iter().any(Vec::is_empty) {
            return Err(Error::Config("need one non-empty lexicon per emotion".into()));
        }
        let mut seen = HashSet::new();
        for tok in self.lexicons.iter().flatten().chain(&self.filler) {
            if !seen.insert(tok.as_str()) {
                return Err(Error::Config(format!("token '{tok}' appears in more than one lexicon")));
            }
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config("length range must satisfy 1 <= min_len <= max_len".into()));
        }
        if self.max_len > 1 && self.filler.is_empty() {
            return Err(Error::Config("filler vocabulary is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(Error::Config("noise_rate must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Pure function of `(spec, seed)`.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec, seed: u64) -> Result<Vec<DialogueRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(spec.pair_count);
    for _ in 0..spec.pair_count {
        let post_emotion = rng.gen_range(0..NUM_EMOTIONS);
        let response_emotion = if rng.gen_bool(spec.noise_rate) {
            rng.gen_range(0..NUM_EMOTIONS)
        } else {
            sample_row(&spec.transition[post_emotion], &mut rng)
        };
        let post = utterance(spec, post_emotion, &mut rng);
        let response = utterance(spec, response_emotion, &mut rng);
        let pe = EmotionCategory::from_index(post_emotion).expect("index < K");
        let re = EmotionCategory::from_index(response_emotion).expect("index < K");
        records.push(DialogueRecord {
            post,
            response,
            post_emotions: vec![pe],
            response_emotions: vec![re],
            post_primary: None,
            response_primary: None,
        });
    }
    Ok(records)
}

fn sample_row(row: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap at the top; take the last positive entry
    row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn utterance(spec: &SyntheticSpec, emotion: usize, rng: &mut ChaCha8Rng) -> String {
    let len = rng.gen_range(spec.min_len..=spec.max_len);
    let slot = rng.gen_range(0..len);
    (0..len)
        .map(|i| {
            if i == slot {
                spec.lexicons[emotion].choose(rng).expect("non-empty lexicon").as_str()
            } else {
                spec.filler.choose(rng).expect("non-empty filler").as_str()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}
