//! Toolkit for building grammatical-error-correction (GEC) treebanks and
//! feeding them to syntax-aware encoders.
//!
//! Given a parallel corpus of ungrammatical/corrected sentence pairs and
//! dependency parses of the corrected side, the pipeline is:
//!
//! 1. [`edits`] aligns each sentence pair and merges the differences into
//!    classified edit spans (substituted / redundant / missing).
//! 2. [`mod@project`] projects the target-side dependency tree onto the
//!    source sentence, marking erroneous tokens with the error labels `S`,
//!    `R`, `M` while copying syntax elsewhere.
//! 3. [`granularity`] converts the word-level projected trees to the
//!    granularity a downstream model consumes: subword-level arc weight
//!    matrices or character-level trees.
//! 4. [`depgcn`] is a desk-scale, numerically verified implementation of the
//!    label-aware graph convolution stack that encodes such trees, including
//!    hand-written gradients checked against central differences.
//!
//! [`conllu`] reads and writes the treebanks, [`eval`] scores token-level
//! error detection, [`corpus`] runs the pipeline over whole corpora
//! (data-parallel via rayon when the `parallel` feature is enabled), and
//! [`verify`] bundles the numerical and structural self-checks.

pub mod conllu;
pub mod corpus;
pub mod depgcn;
pub mod edits;
pub mod error;
pub mod eval;
pub mod granularity;
pub mod project;
pub mod sidecar;
pub mod verify;

pub use conllu::{parse_conllu, validate_tree, write_conllu, DepTree, Token};
pub use edits::{align_tokens, merge_to_spans, AlignOp, Alignment, EditKind, EditSpan};
pub use project::{project, resolve_label_conflict, GedLabel, ProjectedTree};
