use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use super::DialogueRecord;
use crate::emotion::{EmotionCategory, EmotionSet, NUM_EMOTIONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EipMode {
    /// One (post, response) cell per pair using the primary labels.
    Primary,
    /// Full label sets, so dual-emotion utterances get their own rows/columns.
    Dual,
}

/// Counts of (post emotion, response emotion) patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct EipMatrix {
    pub mode: EipMode,
    /// Row = post emotion, column = response emotion. Filled in primary mode.
    pub primary: [[usize; NUM_EMOTIONS]; NUM_EMOTIONS],
    /// Filled in dual mode.
    pub dual: BTreeMap<(EmotionSet, EmotionSet), usize>,
}

impl EipMatrix {
    pub fn total(&self) -> usize {
        match self.mode {
            EipMode::Primary => self.primary.iter().flatten().sum(),
            EipMode::Dual => self.dual.values().sum(),
        }
    }

    /// Heatmap CSV with category names (or `(e1,e2)` composites) as headers.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match self.mode {
            EipMode::Primary => {
                out.push_str("post\\response");
                for c in EmotionCategory::ALL {
                    write!(out, ",{c}").unwrap();
                }
                out.push('\n');
                for (i, row) in self.primary.iter().enumerate() {
                    out.push_str(EmotionCategory::ALL[i].name());
                    for n in row {
                        write!(out, ",{n}").unwrap();
                    }
                    out.push('\n');
                }
            }
            EipMode::Dual => {
                let sort = |s: &BTreeSet<EmotionSet>| {
                    let mut v: Vec<EmotionSet> = s.iter().copied().collect();
                    v.sort_by_key(|e| e.sort_key());
                    v
                };
                let rows = sort(&self.dual.keys().map(|k| k.0).collect());
                let cols = sort(&self.dual.keys().map(|k| k.1).collect());
                out.push_str("post\\response");
                for c in &cols {
                    write!(out, ",\"{c}\"").unwrap();
                }
                out.push('\n');
                for r in &rows {
                    write!(out, "\"{r}\"").unwrap();
                    for c in &cols {
                        write!(out, ",{}", self.dual.get(&(*r, *c)).copied().unwrap_or(0)).unwrap();
                    }
                    out.push('\n');
                }
            }
        }
        out
    }
}

pub fn analyze_eip(corpus: &[DialogueRecord], mode: EipMode) -> EipMatrix {
    let mut m = EipMatrix {
        mode,
        primary: [[0; NUM_EMOTIONS]; NUM_EMOTIONS],
        dual: BTreeMap::new(),
    };
    for r in corpus {
        match mode {
            EipMode::Primary => {
                if let (Some(p), Some(q)) = (r.primary_post_emotion(), r.primary_response_emotion()) {
                    m.primary[p.index()][q.index()] += 1;
                }
            }
            EipMode::Dual => {
                if let (Ok(p), Ok(q)) = (r.post_label(), r.response_label()) {
                    *m.dual.entry((EmotionSet::from_vector(&p), EmotionSet::from_vector(&q))).or_default() += 1;
                }
            }
        }
    }
    m
}

/// Row-normalised primary-mode counts.
pub fn transition_frequencies(m: &EipMatrix) -> Vec<Vec<f64>> {
    m.primary
        .iter()
        .map(|row| {
            let n: usize = row.iter().sum();
            row.iter().map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 }).collect()
        })
        .collect()
}
