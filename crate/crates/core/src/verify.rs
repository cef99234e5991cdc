//! Self-verification suites: structural fuzzing of the projector and
//! numerical checks of the graph convolution stack.
//!
//! Everything here is deterministic for a fixed seed, so a verification run
//! can be reproduced bit for bit.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::conllu::{validate_tree, DepTree};
use crate::depgcn::grad::{run_gradient_suite, GradCheckResult, DEFAULT_EPS};
use crate::depgcn::{self, reference, FeedForward, GcnBlock, GcnParams, LayerNorm};
use crate::edits::{EditKind, EditSpan};
use crate::error::DepGcnError;
use crate::granularity::ArcMatrix;
use crate::project::project;

/// Elementwise tolerance against the explicit-loop oracles.
pub const ORACLE_TOLERANCE: f64 = 1e-10;
/// Maximum relative error accepted from the gradient checks.
pub const GRAD_TOLERANCE: f64 = 1e-4;

// ---------------------------------------------------------------------------
// Random trees and mutated sentence pairs
// ---------------------------------------------------------------------------

const FUZZ_VOCAB: [&str; 20] = [
    "w0", "w1", "w2", "w3", "w4", "w5", "w6", "w7", "w8", "w9", "w10", "w11", "w12", "w13", "w14",
    "w15", "w16", "w17", "w18", "w19",
];

const FUZZ_LABELS: [&str; 8] = [
    "nsubj", "obj", "det", "amod", "advmod", "cc", "punct", "expl",
];

/// Uniform random attachment tree: tokens are attached in a shuffled order,
/// each to a random earlier one, so arbitrary (also non-projective) valid
/// trees appear.
pub fn random_tree(rng: &mut impl Rng, n: usize) -> DepTree {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut heads = vec![0usize; n];
    let mut labels = vec![""; n];
    for (pos, &tok) in order.iter().enumerate() {
        if pos == 0 {
            heads[tok] = 0;
            labels[tok] = "Root";
        } else {
            heads[tok] = order[rng.gen_range(0..pos)] + 1;
            labels[tok] = FUZZ_LABELS[rng.gen_range(0..FUZZ_LABELS.len())];
        }
    }
    let forms: Vec<&str> = (0..n)
        .map(|_| FUZZ_VOCAB[rng.gen_range(0..FUZZ_VOCAB.len())])
        .collect();
    DepTree::from_parts(&forms, &heads, &labels)
}

/// One mutated sentence pair: the source sentence, the target tree, and the
/// ground-truth edit spans describing the mutation.
#[derive(Debug, Clone)]
pub struct FuzzCase {
    pub src: Vec<String>,
    pub tgt: DepTree,
    pub spans: Vec<EditSpan>,
}

#[derive(Debug, Clone, Copy)]
enum Edit {
    /// Replace `t_len` target tokens with `s_len` fresh source tokens.
    Sub {
        anchor: usize,
        t_len: usize,
        s_len: usize,
    },
    /// Drop `t_len` target tokens from the source (missing words).
    Del { anchor: usize, t_len: usize },
    /// Insert `s_len` fresh source tokens before target position `anchor`
    /// (redundant words); `anchor == n` appends at the sentence end.
    Ins { anchor: usize, s_len: usize },
}

impl Edit {
    fn anchor(&self) -> usize {
        match *self {
            Edit::Sub { anchor, .. } | Edit::Del { anchor, .. } | Edit::Ins { anchor, .. } => {
                anchor
            }
        }
    }
}

/// Draws a mutated pair with up to 4 edits over a tree of up to 12 tokens.
///
/// Adversarial shapes are generated on purpose: deletions covering the root
/// and insertions at the sentence end (redundant suffix chains). Inputs the
/// projector rejects by contract (empty source, all-redundant source) are
/// resampled, since they carry no tree to validate.
pub fn fuzz_case(rng: &mut impl Rng) -> FuzzCase {
    loop {
        let n = rng.gen_range(1..=12usize);
        let tgt = random_tree(rng, n);
        let root_pos = tgt.heads.iter().position(|&h| h == 0).expect("valid tree");

        let want_root_del = rng.gen_bool(0.25);
        let want_suffix_ins = rng.gen_bool(0.25);
        let max_edits = rng.gen_range(0..=4usize);

        let mut edits: Vec<Edit> = Vec::new();
        let mut t = 0usize;
        let mut gap_ok = true;
        while t < n && edits.len() < max_edits.max(want_root_del as usize) {
            let force_root = want_root_del
                && t == root_pos
                && gap_ok
                && !edits
                    .iter()
                    .any(|e| matches!(e, Edit::Del { anchor, t_len } if (*anchor..anchor + t_len).contains(&root_pos)));
            let fire = force_root || (gap_ok && edits.len() < max_edits && rng.gen_bool(0.35));
            if !fire {
                t += 1;
                gap_ok = true;
                continue;
            }
            let room = (n - t).min(3);
            let kind = if force_root {
                rng.gen_range(0..2) // Del or Sub over the root
            } else {
                rng.gen_range(0..3)
            };
            match kind {
                0 => {
                    let t_len = rng.gen_range(1..=room);
                    edits.push(Edit::Del { anchor: t, t_len });
                    t += t_len;
                }
                1 => {
                    let t_len = rng.gen_range(1..=room);
                    let s_len = rng.gen_range(1..=3);
                    edits.push(Edit::Sub {
                        anchor: t,
                        t_len,
                        s_len,
                    });
                    t += t_len;
                }
                _ => {
                    edits.push(Edit::Ins {
                        anchor: t,
                        s_len: rng.gen_range(1..=3),
                    });
                }
            }
            gap_ok = false;
        }
        if want_suffix_ins && edits.len() < 4 {
            edits.push(Edit::Ins {
                anchor: n,
                s_len: rng.gen_range(1..=3),
            });
        }

        let case = materialize(rng, &tgt, &edits);
        let all_redundant = case
            .spans
            .iter()
            .filter(|s| s.kind == EditKind::Redundant)
            .map(|s| s.src.len())
            .sum::<usize>()
            == case.src.len();
        if case.src.is_empty() || all_redundant {
            continue;
        }
        return case;
    }
}

/// Builds the source sentence and span list implied by a sorted edit list.
fn materialize(rng: &mut impl Rng, tgt: &DepTree, edits: &[Edit]) -> FuzzCase {
    fn fresh(rng: &mut impl Rng) -> String {
        format!("x{}", rng.gen_range(0..20u8))
    }
    let n = tgt.len();
    let forms = tgt.forms();
    let mut src: Vec<String> = Vec::new();
    let mut spans: Vec<EditSpan> = Vec::new();

    let mut ei = 0usize;
    let mut t = 0usize;
    loop {
        if ei < edits.len() && edits[ei].anchor() == t {
            match edits[ei] {
                Edit::Del { t_len, .. } => {
                    spans.push(EditSpan {
                        src: src.len()..src.len(),
                        tgt: t..t + t_len,
                        kind: EditKind::Missing,
                    });
                    t += t_len;
                }
                Edit::Sub { t_len, s_len, .. } => {
                    let beg = src.len();
                    for _ in 0..s_len {
                        src.push(fresh(rng));
                    }
                    spans.push(EditSpan {
                        src: beg..beg + s_len,
                        tgt: t..t + t_len,
                        kind: EditKind::Substituted,
                    });
                    t += t_len;
                }
                Edit::Ins { s_len, .. } => {
                    let beg = src.len();
                    for _ in 0..s_len {
                        src.push(fresh(rng));
                    }
                    spans.push(EditSpan {
                        src: beg..beg + s_len,
                        tgt: t..t,
                        kind: EditKind::Redundant,
                    });
                }
            }
            ei += 1;
            continue;
        }
        if t >= n {
            break;
        }
        src.push(forms[t].clone());
        t += 1;
    }
    FuzzCase {
        src,
        tgt: tgt.clone(),
        spans,
    }
}

/// Synthetic parallel corpus plus the matching target treebank, for benches
/// and throughput tests.
pub fn synth_corpus(seed: u64, pairs: usize) -> (String, Vec<DepTree>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    let mut trees = Vec::with_capacity(pairs);
    let mut made = 0;
    while made < pairs {
        let case = fuzz_case(&mut rng);
        text.push_str(&case.src.join(" "));
        text.push('\t');
        text.push_str(&case.tgt.forms().join(" "));
        text.push('\n');
        trees.push(case.tgt);
        made += 1;
    }
    (text, trees)
}

// ---------------------------------------------------------------------------
// Projector suites
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default)]
pub struct FuzzOutcome {
    pub cases: usize,
    pub failures: usize,
}

/// Projects `cases` mutated pairs and validates every output tree.
pub fn run_projection_fuzz(seed: u64, cases: usize) -> FuzzOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0usize;
    for _ in 0..cases {
        let case = fuzz_case(&mut rng);
        match project(&case.src, &case.tgt, &case.spans) {
            Ok(p) => {
                if validate_tree(&p.tree).is_err() || p.len() != case.src.len() {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    FuzzOutcome { cases, failures }
}

/// Projects `cases` edit-free pairs; the output must equal the target tree
/// exactly, with an all-false error mask.
pub fn run_identity_suite(seed: u64, cases: usize) -> FuzzOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0usize;
    for _ in 0..cases {
        let n = rng.gen_range(1..=12usize);
        let tgt = random_tree(&mut rng, n);
        match project(&tgt.forms(), &tgt, &[]) {
            Ok(p) => {
                if p.tree != tgt || p.ged_mask.iter().any(|&m| m) {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    FuzzOutcome { cases, failures }
}

// ---------------------------------------------------------------------------
// Numerical suites
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct OracleCheck {
    pub op: String,
    pub instances: usize,
    pub max_abs_err: f64,
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn sample_mat(rng: &mut impl Rng, r: usize, c: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.gen_range(lo..hi))
}

fn sample_vec(rng: &mut impl Rng, len: usize, lo: f64, hi: f64) -> Array1<f64> {
    Array1::from_shape_fn(len, |_| rng.gen_range(lo..hi))
}

fn sample_block(rng: &mut impl Rng, d: usize, d_ff: usize) -> GcnBlock {
    GcnBlock {
        w: sample_mat(rng, d, 2 * d, -0.6, 0.6),
        b: sample_vec(rng, d, -0.5, 0.5),
        ff: FeedForward {
            w1: sample_mat(rng, d_ff, d, -0.6, 0.6),
            b1: sample_vec(rng, d_ff, -0.5, 0.5),
            w2: sample_mat(rng, d, d_ff, -0.6, 0.6),
            b2: sample_vec(rng, d, -0.5, 0.5),
        },
        ln_gcn: LayerNorm {
            gain: sample_vec(rng, d, 0.5, 1.5),
            bias: sample_vec(rng, d, -0.5, 0.5),
        },
        ln_ff: LayerNorm {
            gain: sample_vec(rng, d, 0.5, 1.5),
            bias: sample_vec(rng, d, -0.5, 0.5),
        },
    }
}

/// Compares every stack operation against its explicit-loop oracle on
/// random instances (n <= 6, d <= 8).
pub fn run_oracle_suite(seed: u64, instances: usize) -> Result<Vec<OracleCheck>, DepGcnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks: Vec<OracleCheck> = [
        "gcn_layer",
        "feed_forward",
        "sublayer_wrap",
        "depgcn_stack",
        "fuse",
    ]
    .iter()
    .map(|op| OracleCheck {
        op: op.to_string(),
        instances,
        max_abs_err: 0.0,
    })
    .collect();

    for _ in 0..instances {
        let n = rng.gen_range(1..=6usize);
        let d = rng.gen_range(2..=8usize);
        let d_ff = rng.gen_range(2..=8usize);
        let labels = rng.gen_range(1..=6usize);
        let h = sample_mat(&mut rng, n, d, -1.0, 1.0);
        let arcs = ArcMatrix {
            weights: sample_mat(&mut rng, n, n, 0.0, 1.0),
            label_ids: (0..n).map(|_| rng.gen_range(0..labels)).collect(),
        };
        let table = sample_mat(&mut rng, labels, d, -0.6, 0.6);
        let block = sample_block(&mut rng, d, d_ff);

        let ours = depgcn::gcn_layer(&h, &arcs, &block.w, &block.b, &table)?;
        let oracle = reference::gcn_layer(&h, &arcs, &block.w, &block.b, &table);
        checks[0].max_abs_err = checks[0].max_abs_err.max(max_abs_diff(&ours, &oracle));

        let ours = depgcn::feed_forward(&h, &block.ff)?;
        let oracle = reference::feed_forward(&h, &block.ff);
        checks[1].max_abs_err = checks[1].max_abs_err.max(max_abs_diff(&ours, &oracle));

        let ours = depgcn::sublayer_wrap(&h, |x| depgcn::feed_forward(x, &block.ff), &block.ln_ff)?;
        let oracle =
            reference::sublayer_wrap(&h, &reference::feed_forward(&h, &block.ff), &block.ln_ff);
        checks[2].max_abs_err = checks[2].max_abs_err.max(max_abs_diff(&ours, &oracle));

        let blocks = rng.gen_range(1..=3usize);
        let params = GcnParams {
            label_table: table.clone(),
            blocks: (0..blocks)
                .map(|_| sample_block(&mut rng, d, d_ff))
                .collect(),
            beta: 0.5,
        };
        let ours = depgcn::depgcn_stack(&h, &arcs, &params)?;
        let oracle = reference::depgcn_stack(&h, &arcs, &params);
        checks[3].max_abs_err = checks[3].max_abs_err.max(max_abs_diff(&ours, &oracle));

        let h2 = sample_mat(&mut rng, n, d, -1.0, 1.0);
        let beta = rng.gen_range(0.0..=1.0);
        let ours = depgcn::fuse(&h, &h2, beta)?;
        let oracle = reference::fuse(&h, &h2, beta);
        checks[4].max_abs_err = checks[4].max_abs_err.max(max_abs_diff(&ours, &oracle));
    }
    Ok(checks)
}

/// Exact interpolation boundaries: beta 1 returns the basic states bit for
/// bit, beta 0 the syntactic ones.
pub fn fuse_boundaries_exact(seed: u64) -> Result<bool, DepGcnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..20 {
        let n = rng.gen_range(1..=6usize);
        let d = rng.gen_range(2..=8usize);
        let hb = sample_mat(&mut rng, n, d, -1.0, 1.0);
        let hs = sample_mat(&mut rng, n, d, -1.0, 1.0);
        if depgcn::fuse(&hb, &hs, 1.0)? != hb || depgcn::fuse(&hb, &hs, 0.0)? != hs {
            return Ok(false);
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// Aggregate report
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct VerifyReport {
    pub oracle: Vec<OracleCheck>,
    pub grads: Vec<GradCheckResult>,
    pub fuse_boundary_exact: bool,
    pub fuzz: FuzzOutcome,
    pub identity: FuzzOutcome,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.oracle
            .iter()
            .all(|c| c.max_abs_err <= ORACLE_TOLERANCE)
            && self.grads.iter().all(|g| g.max_rel_err < GRAD_TOLERANCE)
            && self.fuse_boundary_exact
            && self.fuzz.failures == 0
            && self.identity.failures == 0
    }

    pub fn render(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        for c in &self.oracle {
            let ok = c.max_abs_err <= ORACLE_TOLERANCE;
            let _ = writeln!(
                out,
                "oracle   {:<18} max_abs_err {:>9.2e}  ({} instances)  {}",
                c.op,
                c.max_abs_err,
                c.instances,
                if ok { "ok" } else { "FAIL" }
            );
        }
        for g in &self.grads {
            let ok = g.max_rel_err < GRAD_TOLERANCE;
            let _ = writeln!(
                out,
                "gradient {:<18} max_rel_err {:>9.2e}  ({} scalars, worst {})  {}",
                g.op,
                g.max_rel_err,
                g.checked,
                g.worst,
                if ok { "ok" } else { "FAIL" }
            );
        }
        let _ = writeln!(
            out,
            "fuse boundaries exact: {}",
            if self.fuse_boundary_exact {
                "ok"
            } else {
                "FAIL"
            }
        );
        let _ = writeln!(
            out,
            "fuzz     projection         {} cases, {} failures  {}",
            self.fuzz.cases,
            self.fuzz.failures,
            if self.fuzz.failures == 0 {
                "ok"
            } else {
                "FAIL"
            }
        );
        let _ = writeln!(
            out,
            "fuzz     identity           {} cases, {} failures  {}",
            self.identity.cases,
            self.identity.failures,
            if self.identity.failures == 0 {
                "ok"
            } else {
                "FAIL"
            }
        );
        let _ = writeln!(
            out,
            "verify: {}",
            if self.passed() { "PASS" } else { "FAIL" }
        );
        out
    }
}

/// Runs every suite with the counts used by the acceptance gate.
pub fn run_verify(seed: u64) -> Result<VerifyReport, DepGcnError> {
    Ok(VerifyReport {
        oracle: run_oracle_suite(seed, 100)?,
        grads: run_gradient_suite(seed, DEFAULT_EPS)?,
        fuse_boundary_exact: fuse_boundaries_exact(seed)?,
        fuzz: run_projection_fuzz(seed, 10_000),
        identity: run_identity_suite(seed, 1_000),
    })
}
