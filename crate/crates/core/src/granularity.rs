//! Conversion of word-level projected trees to the granularities GEC models
//! actually consume.
//!
//! Subword models receive an arc-weight matrix: every word-level arc is
//! copied onto all (dependent unit, head unit) pairs, so an arc with
//! probability `p` between a 2-unit head and a 3-unit dependent becomes six
//! cells of `p`. No connectivity beyond the word-level matrix is invented;
//! in particular there are no intra-word arcs unless the word-level matrix
//! already carries diagonal mass (the root convention).
//!
//! Character models receive a tree again: inside a multi-character word each
//! character depends on its right-hand neighbour under the reserved label
//! `char`, and the last character stands for the word, inheriting its head
//! (mapped to the head word's last character) and its label.

use std::collections::HashMap;
use std::ops::Range;

use ndarray::Array2;

use crate::conllu::{DepTree, Token};
use crate::error::GranularityError;
use crate::project::ProjectedTree;

/// Label string given to intra-word character arcs.
pub const CHAR_LABEL: &str = "char";

/// How each word of a sentence splits into units (subwords or characters).
/// Units tile `0..total_units()` in word order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    units: Vec<Vec<String>>,
    ranges: Vec<Range<usize>>,
}

impl Segmentation {
    pub fn new(units: Vec<Vec<String>>) -> Result<Self, GranularityError> {
        let mut ranges = Vec::with_capacity(units.len());
        let mut next = 0usize;
        for (word, us) in units.iter().enumerate() {
            if us.is_empty() {
                return Err(GranularityError::EmptyWord { word: word + 1 });
            }
            ranges.push(next..next + us.len());
            next += us.len();
        }
        Ok(Segmentation { units, ranges })
    }

    /// One unit per word; both conversions become the identity under it.
    pub fn identity(forms: &[String]) -> Self {
        Segmentation::new(forms.iter().map(|f| vec![f.clone()]).collect())
            .expect("forms are non-empty words")
    }

    /// Splits every word into its characters.
    pub fn characters(forms: &[String]) -> Self {
        Segmentation::new(
            forms
                .iter()
                .map(|f| f.chars().map(String::from).collect())
                .collect(),
        )
        .expect("forms are non-empty words")
    }

    /// Parses one segmentation line: words separated by spaces, units inside
    /// a word separated by `delimiter` (for example `th@@ere`).
    pub fn parse_line(line: &str, delimiter: &str) -> Result<Self, GranularityError> {
        let units = line
            .split_whitespace()
            .map(|word| word.split(delimiter).map(str::to_string).collect())
            .collect();
        Segmentation::new(units)
    }

    pub fn word_count(&self) -> usize {
        self.units.len()
    }

    pub fn total_units(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.end)
    }

    pub fn units_of(&self, word: usize) -> &[String] {
        &self.units[word]
    }

    pub fn range_of(&self, word: usize) -> Range<usize> {
        self.ranges[word].clone()
    }

    /// Checks the segmentation covers exactly the tree's words: same count,
    /// and each word's units concatenate back to its form.
    pub fn check_covers(&self, tree: &DepTree) -> Result<(), GranularityError> {
        if self.word_count() != tree.len() {
            return Err(GranularityError::WordCount {
                seg_words: self.word_count(),
                tree_words: tree.len(),
            });
        }
        for (i, tok) in tree.tokens.iter().enumerate() {
            let joined: String = self.units[i].concat();
            if joined != tok.form {
                return Err(GranularityError::FormMismatch {
                    word: i + 1,
                    form: tok.form.clone(),
                    joined,
                });
            }
        }
        Ok(())
    }
}

/// Unit-level soft adjacency: `weights[(i, j)]` is the weight with which
/// unit `j` heads unit `i`, plus per-unit label ids into a [`LabelVocab`].
#[derive(Debug, Clone, PartialEq)]
pub struct ArcMatrix {
    pub weights: Array2<f64>,
    pub label_ids: Vec<usize>,
}

/// Interning table from label strings to dense ids, in first-use order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelVocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelVocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, label: &str) -> usize {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = self.names.len();
        self.names.push(label.to_string());
        self.index.insert(label.to_string(), id);
        id
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Expands a word-level tree into a unit-level arc-weight matrix.
///
/// Rows index dependents and columns heads: for each word-level cell
/// `(dep, head)` with weight `p`, every `(unit of dep, unit of head)` cell
/// receives `p`. Absent an attached probability matrix the one-hot matrix of
/// the heads is used. Every unit of a word shares the word's label id (the
/// label of its best head arc).
pub fn expand_to_subwords(
    tree: &ProjectedTree,
    seg: &Segmentation,
    vocab: &mut LabelVocab,
) -> Result<ArcMatrix, GranularityError> {
    seg.check_covers(&tree.tree)?;
    let n = tree.len();
    let m = seg.total_units();
    let word_probs = tree.tree.effective_probs();

    let mut weights = Array2::zeros((m, m));
    for dep in 0..n {
        for head in 0..n {
            let p = word_probs[(dep, head)];
            if p == 0.0 {
                continue;
            }
            for u in seg.range_of(dep) {
                for v in seg.range_of(head) {
                    weights[(u, v)] = p;
                }
            }
        }
    }

    let mut label_ids = Vec::with_capacity(m);
    for word in 0..n {
        let id = vocab.intern(&tree.tree.labels[word]);
        label_ids.extend(std::iter::repeat_n(id, seg.units_of(word).len()));
    }
    Ok(ArcMatrix { weights, label_ids })
}

/// Rebuilds the tree at unit level with rightward intra-word chains.
///
/// Unit `k` of a multi-unit word depends on unit `k+1` under [`CHAR_LABEL`];
/// the last unit inherits the word's head — mapped to the head word's last
/// unit — and the word's label, so the word-level structure is preserved on
/// the last units. Attached probabilities do not carry over.
pub fn to_char_tree(
    tree: &ProjectedTree,
    seg: &Segmentation,
) -> Result<ProjectedTree, GranularityError> {
    seg.check_covers(&tree.tree)?;
    let n = tree.len();
    let m = seg.total_units();

    let mut tokens = Vec::with_capacity(m);
    let mut heads = vec![0usize; m];
    let mut labels = vec![String::new(); m];
    let last_unit = |word: usize| seg.range_of(word).end; // 1-based id of the word's last unit

    for word in 0..n {
        let range = seg.range_of(word);
        for (k, unit) in range.clone().zip(seg.units_of(word)) {
            tokens.push(Token::new(unit.clone()));
            if k + 1 < range.end {
                heads[k] = k + 2; // right-hand neighbour, 1-based
                labels[k] = CHAR_LABEL.to_string();
            }
        }
        let word_head = tree.tree.heads[word];
        let last = range.end - 1;
        heads[last] = if word_head == 0 {
            0
        } else {
            last_unit(word_head - 1)
        };
        labels[last] = tree.tree.labels[word].clone();
    }

    let out = DepTree {
        tokens,
        heads,
        labels,
        arc_probs: None,
        comments: tree.tree.comments.clone(),
    };
    Ok(ProjectedTree::from_tree(out).expect("unit tree mirrors a valid word tree"))
}
