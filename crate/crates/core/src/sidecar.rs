//! Line-delimited sidecar formats.
//!
//! Arc probabilities do not fit in CoNLL-U, so they travel next to the
//! treebank as one JSON record per line:
//!
//! ```text
//! {"sentence_index":0,"n":6,"probs":[...36 row-major values...]}
//! ```
//!
//! Records are keyed by 0-based sentence index into the accompanying
//! treebank; sentences without a record fall back to the one-hot matrix of
//! their heads. Arc-weight matrices produced by granularity conversion use
//! the same layout plus a per-unit label-id list, preceded by a single
//! header record naming the label vocabulary.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::conllu::{DepTree, ROW_SUM_TOLERANCE};
use crate::error::FormatError;
use crate::granularity::{ArcMatrix, LabelVocab};

#[derive(Debug, Serialize, Deserialize)]
struct ProbRecord {
    sentence_index: usize,
    n: usize,
    probs: Vec<f64>,
}

/// Parses a probability sidecar document into matrices keyed by sentence
/// index. Shape and row sums are checked here; values must lie in [0, 1].
pub fn parse_prob_sidecar(text: &str) -> Result<BTreeMap<usize, Array2<f64>>, FormatError> {
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ProbRecord = serde_json::from_str(line).map_err(|source| FormatError::Json {
            line: idx + 1,
            source,
        })?;
        let matrix = matrix_from_flat(&rec.probs, rec.n)
            .map_err(|msg| FormatError::Malformed { line: idx + 1, msg })?;
        if out.insert(rec.sentence_index, matrix).is_some() {
            return Err(FormatError::Malformed {
                line: idx + 1,
                msg: format!("duplicate record for sentence {}", rec.sentence_index),
            });
        }
    }
    Ok(out)
}

fn matrix_from_flat(values: &[f64], n: usize) -> Result<Array2<f64>, String> {
    if values.len() != n * n {
        return Err(format!(
            "expected {} values for n={n}, found {}",
            n * n,
            values.len()
        ));
    }
    let m = Array2::from_shape_vec((n, n), values.to_vec()).expect("length checked");
    for i in 0..n {
        let mut sum = 0.0;
        for j in 0..n {
            let v = m[(i, j)];
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("cell ({}, {}) = {v} outside [0, 1]", i + 1, j + 1));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(format!("row {} sums to {sum}, expected 1", i + 1));
        }
    }
    Ok(m)
}

/// Serializes per-sentence probability matrices.
pub fn write_prob_sidecar(probs: &BTreeMap<usize, Array2<f64>>) -> String {
    let mut out = String::new();
    for (&sentence_index, matrix) in probs {
        let rec = ProbRecord {
            sentence_index,
            n: matrix.nrows(),
            probs: matrix.iter().copied().collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("serializable"));
        out.push('\n');
    }
    out
}

/// Attaches sidecar matrices to the trees they index. Sentences without a
/// record keep `arc_probs = None`. A record whose size disagrees with its
/// sentence is an error.
pub fn attach_probs(
    trees: &mut [DepTree],
    probs: BTreeMap<usize, Array2<f64>>,
) -> Result<(), FormatError> {
    for (index, matrix) in probs {
        let tree = trees.get_mut(index).ok_or_else(|| FormatError::Record {
            index,
            msg: format!(
                "sentence index {index} beyond treebank of {} sentences",
                index
            ),
        })?;
        if matrix.nrows() != tree.len() {
            return Err(FormatError::Record {
                index,
                msg: format!(
                    "matrix is {}x{} but sentence has {} tokens",
                    matrix.nrows(),
                    matrix.ncols(),
                    tree.len()
                ),
            });
        }
        tree.arc_probs = Some(matrix);
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct VocabRecord {
    labels: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArcRecord {
    sentence_index: usize,
    m: usize,
    weights: Vec<f64>,
    label_ids: Vec<usize>,
}

/// Serializes arc-weight matrices with their label vocabulary header.
pub fn write_arc_matrices(matrices: &[ArcMatrix], vocab: &LabelVocab) -> String {
    let header = VocabRecord {
        labels: vocab.names().to_vec(),
    };
    let mut out = serde_json::to_string(&header).expect("serializable");
    out.push('\n');
    for (sentence_index, am) in matrices.iter().enumerate() {
        let rec = ArcRecord {
            sentence_index,
            m: am.weights.nrows(),
            weights: am.weights.iter().copied().collect(),
            label_ids: am.label_ids.clone(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("serializable"));
        out.push('\n');
    }
    out
}

/// Parses an arc-weight file back into matrices plus the vocabulary.
pub fn parse_arc_matrices(text: &str) -> Result<(Vec<ArcMatrix>, LabelVocab), FormatError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (idx, header) = lines.next().ok_or(FormatError::Malformed {
        line: 1,
        msg: "missing vocabulary header".to_string(),
    })?;
    let header: VocabRecord = serde_json::from_str(header).map_err(|source| FormatError::Json {
        line: idx + 1,
        source,
    })?;
    let mut vocab = LabelVocab::new();
    for name in &header.labels {
        vocab.intern(name);
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let rec: ArcRecord = serde_json::from_str(line).map_err(|source| FormatError::Json {
            line: idx + 1,
            source,
        })?;
        if rec.weights.len() != rec.m * rec.m || rec.label_ids.len() != rec.m {
            return Err(FormatError::Malformed {
                line: idx + 1,
                msg: format!("inconsistent sizes for m={}", rec.m),
            });
        }
        if rec.label_ids.iter().any(|&id| id >= vocab.len()) {
            return Err(FormatError::Malformed {
                line: idx + 1,
                msg: "label id outside vocabulary".to_string(),
            });
        }
        out.push(ArcMatrix {
            weights: Array2::from_shape_vec((rec.m, rec.m), rec.weights).expect("length checked"),
            label_ids: rec.label_ids,
        });
    }
    Ok((out, vocab))
}
