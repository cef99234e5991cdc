//! Corpus-scale drivers for the extract/project pipeline.
//!
//! A parallel corpus file holds one sentence pair per line, source and
//! target separated by a single tab, tokens separated by spaces. Noisy
//! lines (missing tab, empty side) are skipped and reported, never fatal;
//! real GEC corpora contain plenty of them.
//!
//! Sentence pairs are independent, so the per-pair work is data-parallel.
//! With the `parallel` feature (on by default) [`map_ordered`] shards over
//! a rayon pool; without it the same code runs sequentially. Output order
//! always equals input order either way. [`map_ordered_seq`] is the pinned
//! sequential route used as the baseline in the benches.

use std::fmt;

use crate::conllu::{validate_tree, DepTree};
use crate::edits::{align_tokens, merge_to_spans, EditSpan};
use crate::error::FormatError;
use crate::project::{project, ProjectedTree};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Order-preserving map over independent items; parallel when the
/// `parallel` feature is enabled.
#[cfg(feature = "parallel")]
pub fn map_ordered<I, O, F>(items: &[I], f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> O + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Order-preserving map over independent items; parallel when the
/// `parallel` feature is enabled.
#[cfg(not(feature = "parallel"))]
pub fn map_ordered<I, O, F>(items: &[I], f: F) -> Vec<O>
where
    F: Fn(&I) -> O,
{
    items.iter().map(f).collect()
}

/// The always-sequential route, kept public as the benchmark baseline.
pub fn map_ordered_seq<I, O, F>(items: &[I], f: F) -> Vec<O>
where
    F: Fn(&I) -> O,
{
    items.iter().map(f).collect()
}

/// One tokenized sentence pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub src: Vec<String>,
    pub tgt: Vec<String>,
}

/// Why a corpus line was skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SkipReason {
    MissingTab,
    EmptySource,
    EmptyTarget,
    InvalidTargetTree(String),
    Projection(String),
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipReason::MissingTab => write!(f, "no tab separator"),
            SkipReason::EmptySource => write!(f, "empty source side"),
            SkipReason::EmptyTarget => write!(f, "empty target side"),
            SkipReason::InvalidTargetTree(v) => write!(f, "invalid target tree: {v}"),
            SkipReason::Projection(e) => write!(f, "projection failed: {e}"),
        }
    }
}

/// Parses a parallel corpus document; one entry per line, in order.
pub fn parse_parallel(text: &str) -> Vec<Result<SentencePair, SkipReason>> {
    text.lines()
        .map(|line| {
            let (src, tgt) = line.split_once('\t').ok_or(SkipReason::MissingTab)?;
            let src: Vec<String> = src.split_whitespace().map(str::to_string).collect();
            let tgt: Vec<String> = tgt.split_whitespace().map(str::to_string).collect();
            if src.is_empty() {
                return Err(SkipReason::EmptySource);
            }
            if tgt.is_empty() {
                return Err(SkipReason::EmptyTarget);
            }
            Ok(SentencePair { src, tgt })
        })
        .collect()
}

/// Per-line outcome plus the aggregate counts of a corpus run.
#[derive(Debug, Default)]
pub struct RunReport {
    pub processed: usize,
    pub skipped: Vec<(usize, SkipReason)>,
}

impl RunReport {
    fn collect<T>(outcomes: Vec<Result<T, SkipReason>>) -> (Vec<Option<T>>, RunReport) {
        let mut report = RunReport::default();
        let mut out = Vec::with_capacity(outcomes.len());
        for (i, o) in outcomes.into_iter().enumerate() {
            match o {
                Ok(v) => {
                    report.processed += 1;
                    out.push(Some(v));
                }
                Err(reason) => {
                    report.skipped.push((i, reason));
                    out.push(None);
                }
            }
        }
        (out, report)
    }

    pub fn summary(&self) -> String {
        format!(
            "{} sentences processed, {} skipped",
            self.processed,
            self.skipped.len()
        )
    }
}

/// Aligns every pair and merges the differences into edit spans.
pub fn extract_corpus(
    pairs: &[Result<SentencePair, SkipReason>],
) -> (Vec<Option<Vec<EditSpan>>>, RunReport) {
    let outcomes = map_ordered(pairs, |pair| {
        let pair = pair.as_ref().map_err(Clone::clone)?;
        let alignment = align_tokens(&pair.src, &pair.tgt).expect("non-empty sides parse-checked");
        Ok(merge_to_spans(&alignment))
    });
    RunReport::collect(outcomes)
}

/// Projects the target treebank onto every source sentence.
///
/// `pairs`, `trees` and `spans` must be sentence-aligned; a count mismatch
/// is fatal. Lines that were skipped upstream, carry an invalid target
/// tree, or fail projection are skipped and reported.
pub fn project_corpus(
    pairs: &[Result<SentencePair, SkipReason>],
    trees: &[DepTree],
    spans: &[Vec<EditSpan>],
) -> Result<(Vec<Option<ProjectedTree>>, RunReport), FormatError> {
    if trees.len() != pairs.len() {
        return Err(FormatError::Record {
            index: trees.len().min(pairs.len()),
            msg: format!(
                "treebank has {} sentences but the corpus has {} pairs",
                trees.len(),
                pairs.len()
            ),
        });
    }
    if spans.len() != pairs.len() {
        return Err(FormatError::Record {
            index: spans.len().min(pairs.len()),
            msg: format!(
                "span file has {} records but the corpus has {} pairs",
                spans.len(),
                pairs.len()
            ),
        });
    }
    let items: Vec<usize> = (0..pairs.len()).collect();
    let outcomes = map_ordered(&items, |&i| {
        let pair = pairs[i].as_ref().map_err(Clone::clone)?;
        let tree = &trees[i];
        validate_tree(tree).map_err(|v| SkipReason::InvalidTargetTree(v.to_string()))?;
        if tree.forms() != pair.tgt {
            return Err(SkipReason::InvalidTargetTree(
                "target tree tokens differ from the corpus target side".to_string(),
            ));
        }
        project(&pair.src, tree, &spans[i]).map_err(|e| SkipReason::Projection(e.to_string()))
    });
    Ok(RunReport::collect(outcomes))
}
