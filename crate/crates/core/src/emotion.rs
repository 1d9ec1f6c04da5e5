//! Emotion categories and length-6 emotion vectors.
//!
//! A vector is either a multi-hot *label* (components in {0,1}, at least one
//! positive) or a sigmoid *prediction* (components in (0,1)).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of emotion categories.
pub const NUM_EMOTIONS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EmotionCategory {
    Angry = 0,
    Disgust = 1,
    Happy = 2,
    Like = 3,
    Sad = 4,
    /// No emotion.
    Other = 5,
}

impl EmotionCategory {
    pub const ALL: [EmotionCategory; NUM_EMOTIONS] = [
        EmotionCategory::Angry,
        EmotionCategory::Disgust,
        EmotionCategory::Happy,
        EmotionCategory::Like,
        EmotionCategory::Sad,
        EmotionCategory::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionCategory::Angry => "Angry",
            EmotionCategory::Disgust => "Disgust",
            EmotionCategory::Happy => "Happy",
            EmotionCategory::Like => "Like",
            EmotionCategory::Sad => "Sad",
            EmotionCategory::Other => "Other",
        }
    }
}

impl fmt::Display for EmotionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmotionCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown emotion category '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmotionVector(pub [f64; NUM_EMOTIONS]);

impl EmotionVector {
    pub fn zeros() -> Self {
        EmotionVector([0.0; NUM_EMOTIONS])
    }

    /// Builds a multi-hot label. At least one category is required.
    pub fn label(categories: &[EmotionCategory]) -> Result<Self> {
        if categories.is_empty() {
            return Err(Error::Config("emotion label must have at least one positive category".into()));
        }
        let mut v = [0.0; NUM_EMOTIONS];
        for c in categories {
            v[c.index()] = 1.0;
        }
        Ok(EmotionVector(v))
    }

    pub fn one_hot(category: EmotionCategory) -> Self {
        let mut v = [0.0; NUM_EMOTIONS];
        v[category.index()] = 1.0;
        EmotionVector(v)
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; NUM_EMOTIONS] = values
            .try_into()
            .map_err(|_| Error::Shape(format!("emotion vector needs {NUM_EMOTIONS} components, got {}", values.len())))?;
        Ok(EmotionVector(arr))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_label(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0 || x == 1.0) && self.0.contains(&1.0)
    }

    pub fn is_prediction(&self) -> bool {
        self.0.iter().all(|&x| x > 0.0 && x < 1.0)
    }

    pub fn validate_label(&self) -> Result<()> {
        if self.is_label() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "emotion label must be multi-hot with at least one positive, got {:?}",
                self.0
            )))
        }
    }

    pub fn positives(&self) -> Vec<EmotionCategory> {
        EmotionCategory::ALL.iter().copied().filter(|c| self.0[c.index()] > 0.5).collect()
    }

    /// Index of the largest component; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..NUM_EMOTIONS {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// Compact set of categories, used as a key for dual-label pattern counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EmotionSet(u8);

impl EmotionSet {
    pub fn from_vector(v: &EmotionVector) -> Self {
        let mut bits = 0u8;
        for c in v.positives() {
            bits |= 1 << c.index();
        }
        EmotionSet(bits)
    }

    pub fn members(&self) -> Vec<EmotionCategory> {
        EmotionCategory::ALL.iter().copied().filter(|c| self.0 & (1 << c.index()) != 0).collect()
    }

    /// Sort key: smaller sets first, then by member indices.
    pub fn sort_key(&self) -> (usize, Vec<usize>) {
        let m = self.members();
        (m.len(), m.iter().map(|c| c.index()).collect())
    }
}

impl fmt::Display for EmotionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.members().iter().map(|c| c.name()).collect();
        if names.len() == 1 {
            f.write_str(names[0])
        } else {
            write!(f, "({})", names.join(","))
        }
    }
}
