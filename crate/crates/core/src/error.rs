//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised while parsing CoNLL-U documents.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}: expected 10 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: token id `{value}` is not the expected sequential id {expected}")]
    TokenId {
        line: usize,
        value: String,
        expected: usize,
    },
    #[error("line {line}: FORM column is empty or contains whitespace")]
    BadForm { line: usize },
    #[error("line {line}: HEAD column `{value}` is not a non-negative integer")]
    NonIntegerHead { line: usize, value: String },
    #[error("line {line}: HEAD {head} out of range for a {len}-token sentence")]
    HeadOutOfRange {
        line: usize,
        head: usize,
        len: usize,
    },
    #[error("line {line}: sentence block contains no token lines")]
    EmptySentence { line: usize },
}

/// First violated tree invariant reported by [`crate::validate_tree`].
///
/// Token indices in the variants are 1-based, matching CoNLL-U ids.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeViolation {
    #[error("tree has no tokens")]
    Empty,
    #[error("token {token}: form is empty or contains whitespace")]
    BadForm { token: usize },
    #[error("token {token}: head {head} out of range [0, {len}]")]
    HeadRange {
        token: usize,
        head: usize,
        len: usize,
    },
    #[error("token {token} is its own head")]
    SelfHead { token: usize },
    #[error("{count} tokens attach to the virtual root; exactly one is allowed")]
    MultiRoot { count: usize },
    #[error("token {token} lies on a head cycle")]
    Cycle { token: usize },
    #[error("token {token} is not connected to the root")]
    Disconnected { token: usize },
    #[error("arc probability matrix is {rows}x{cols}, expected {len}x{len}")]
    ArcProbShape {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("arc probability cell ({row}, {col}) = {value} outside [0, 1]")]
    ArcProbRange { row: usize, col: usize, value: f64 },
    #[error("arc probability row {row} sums to {sum}, expected 1 within 1e-6")]
    ArcProbRowSum { row: usize, sum: f64 },
}

/// Errors from tree projection.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProjectError {
    #[error("target tree is invalid: {0}")]
    InvalidTarget(TreeViolation),
    #[error("edit spans inconsistent with the sentence pair: {0}")]
    SpanMismatch(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("projection invariant broken: {0}")]
    Internal(String),
}

/// Errors from granularity conversion.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GranularityError {
    #[error("segmentation has {seg_words} words but the tree has {tree_words}")]
    WordCount { seg_words: usize, tree_words: usize },
    #[error("word {word} `{form}` does not match its segmentation units `{joined}`")]
    FormMismatch {
        word: usize,
        form: String,
        joined: String,
    },
    #[error("segmentation word {word} has no units")]
    EmptyWord { word: usize },
}

/// Shape or value errors in the graph convolution stack.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DepGcnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("hidden size {0} is too small for layer normalization (need >= 2)")]
    DegenerateWidth(usize),
    #[error("fusion factor {0} outside (0, 1)")]
    BadFusionFactor(f64),
}

/// Errors in structured text formats (sidecars, span files, masks, params).
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("record {index}: {msg}")]
    Record { index: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
}
