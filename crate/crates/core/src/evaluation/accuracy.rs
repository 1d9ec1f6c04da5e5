use serde::{Deserialize, Serialize};

use crate::emotion::EmotionVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyMode {
    /// Correct when the highest-scoring category is a gold positive.
    #[default]
    ArgmaxInGold,
    /// Correct when thresholding at 0.5 reproduces the gold label exactly.
    ExactMatch,
}

pub fn is_correct(prediction: &EmotionVector, gold: &EmotionVector, mode: AccuracyMode) -> bool {
    match mode {
        AccuracyMode::ArgmaxInGold => gold.0[prediction.argmax()] == 1.0,
        AccuracyMode::ExactMatch => prediction.0.iter().zip(&gold.0).all(|(&p, &g)| (p >= 0.5) == (g == 1.0)),
    }
}

pub fn emotion_accuracy(predictions: &[EmotionVector], golds: &[EmotionVector], mode: AccuracyMode) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(Error::Shape(format!("{} predictions but {} gold labels", predictions.len(), golds.len())));
    }
    if predictions.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty set".into()));
    }
    let hits = predictions.iter().zip(golds).filter(|(p, g)| is_correct(p, g, mode)).count();
    Ok(hits as f64 / predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emotion::EmotionCategory::*;

    fn pred(v: [f64; 6]) -> EmotionVector {
        EmotionVector(v)
    }

    #[test]
    fn argmax_inside_gold_counts() {
        let gold = EmotionVector::label(&[Happy, Like]).unwrap();
        let p = pred([0.1, 0.1, 0.2, 0.9, 0.1, 0.1]);
        assert_eq!(emotion_accuracy(&[p], &[gold], AccuracyMode::ArgmaxInGold).unwrap(), 1.0);
    }

    #[test]
    fn argmax_outside_gold_misses() {
        let gold = EmotionVector::one_hot(Angry);
        let p = pred([0.3, 0.1, 0.2, 0.9, 0.1, 0.1]);
        assert_eq!(emotion_accuracy(&[p], &[gold], AccuracyMode::ArgmaxInGold).unwrap(), 0.0);
    }

    #[test]
    fn exact_match_mode() {
        let gold = EmotionVector::label(&[Happy, Like]).unwrap();
        let yes = pred([0.1, 0.1, 0.6, 0.9, 0.1, 0.1]);
        let no = pred([0.1, 0.1, 0.4, 0.9, 0.1, 0.1]);
        assert_eq!(emotion_accuracy(&[yes, no], &[gold, gold], AccuracyMode::ExactMatch).unwrap(), 0.5);
        assert_eq!(emotion_accuracy(&[yes, no], &[gold, gold], AccuracyMode::ArgmaxInGold).unwrap(), 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            emotion_accuracy(&[], &[], AccuracyMode::ArgmaxInGold),
            Err(Error::UndefinedMetric(_))
        ));
        let g = EmotionVector::one_hot(Sad);
        assert!(matches!(emotion_accuracy(&[], &[g], AccuracyMode::ArgmaxInGold), Err(Error::Shape(_))));
    }
}
