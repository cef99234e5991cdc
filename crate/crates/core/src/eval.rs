//! Token-level binary error-detection scoring.
//!
//! A token counts as positive when its label is one of the error labels
//! `S`, `R`, `M`. Scores are micro-averaged over all tokens of the corpus;
//! the F measure weights precision twice as heavily as recall.

use crate::error::FormatError;
use crate::project::{GedLabel, ProjectedTree};

/// Confusion counts with the derived precision / recall / F0.5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GedScore {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_half: f64,
}

/// True for every token carrying an error label.
pub fn extract_ged_labels(tree: &ProjectedTree) -> Vec<bool> {
    tree.tree
        .labels
        .iter()
        .map(|l| GedLabel::of(l).is_some())
        .collect()
}

/// Micro-averaged token-level scores.
///
/// Conventions for empty denominators: P = 0 when nothing was predicted,
/// R = 0 when nothing was in the gold, F = 0 when P = R = 0 — except that a
/// corpus with no positives on either side scores a perfect 1/1/1.
pub fn score_ged(pred: &[Vec<bool>], gold: &[Vec<bool>]) -> Result<GedScore, FormatError> {
    if pred.len() != gold.len() {
        return Err(FormatError::Record {
            index: pred.len().min(gold.len()),
            msg: format!("{} predicted sentences vs {} gold", pred.len(), gold.len()),
        });
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.len() != g.len() {
            return Err(FormatError::Record {
                index: i,
                msg: format!(
                    "sentence {i}: {} predicted tokens vs {} gold",
                    p.len(),
                    g.len()
                ),
            });
        }
        for (&pv, &gv) in p.iter().zip(g) {
            match (pv, gv) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    Ok(GedScore::from_counts(tp, fp, fn_))
}

impl GedScore {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        if tp == 0 && fp == 0 && fn_ == 0 {
            return GedScore {
                tp,
                fp,
                fn_,
                precision: 1.0,
                recall: 1.0,
                f_half: 1.0,
            };
        }
        let precision = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        };
        let recall = if tp + fn_ > 0 {
            tp as f64 / (tp + fn_) as f64
        } else {
            0.0
        };
        let denom = 0.25 * precision + recall;
        let f_half = if denom > 0.0 {
            1.25 * precision * recall / denom
        } else {
            0.0
        };
        GedScore {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f_half,
        }
    }
}

/// Parses a mask file: one sentence per line, `0`/`1` per token separated by
/// spaces. Empty lines are zero-token sentences.
pub fn parse_masks(text: &str) -> Result<Vec<Vec<bool>>, FormatError> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            line.split_whitespace()
                .map(|tok| match tok {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    _ => Err(FormatError::Malformed {
                        line: i + 1,
                        msg: format!("expected 0 or 1, found `{tok}`"),
                    }),
                })
                .collect()
        })
        .collect()
}

/// Serializes masks in the format accepted by [`parse_masks`].
pub fn write_masks(masks: &[Vec<bool>]) -> String {
    let mut out = String::new();
    for mask in masks {
        let line: Vec<&str> = mask.iter().map(|&b| if b { "1" } else { "0" }).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}
