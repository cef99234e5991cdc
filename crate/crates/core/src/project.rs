//! Projection of a target-side dependency tree onto the source sentence of
//! a GEC sentence pair.
//!
//! Source tokens untouched by any edit copy their head and label from the
//! aligned target token (heads of missing words are resolved by climbing the
//! target tree). Erroneous tokens receive one of the three error labels:
//!
//! * `S` — substituted tokens; they attach where the replaced material
//!   attached, so the rest of the tree is disturbed as little as possible.
//! * `R` — redundant tokens; they attach to their right neighbour, or to the
//!   nearest non-redundant token on the left when sentence-final.
//! * `M` — a missing word marks the incoming arc of its right neighbour; the
//!   structure itself is not changed, and a sentence-final omission leaves
//!   the tree untouched.
//!
//! When one token qualifies for several labels the priority is S > R > M.

use crate::conllu::{validate_tree, DepTree, Token};
use crate::edits::{EditKind, EditSpan};
use crate::error::{ProjectError, TreeViolation};

/// The three error labels carried by projected trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GedLabel {
    Substituted,
    Redundant,
    Missing,
}

impl GedLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            GedLabel::Substituted => "S",
            GedLabel::Redundant => "R",
            GedLabel::Missing => "M",
        }
    }

    /// Recognizes an error label string; syntax labels yield `None`.
    pub fn of(label: &str) -> Option<Self> {
        match label {
            "S" => Some(GedLabel::Substituted),
            "R" => Some(GedLabel::Redundant),
            "M" => Some(GedLabel::Missing),
            _ => None,
        }
    }

    fn priority(self) -> u8 {
        match self {
            GedLabel::Substituted => 0,
            GedLabel::Redundant => 1,
            GedLabel::Missing => 2,
        }
    }
}

/// Picks the highest-priority label (S > R > M) from a non-empty set of
/// candidates; returns `None` for an empty set.
pub fn resolve_label_conflict(candidates: impl IntoIterator<Item = GedLabel>) -> Option<GedLabel> {
    candidates.into_iter().min_by_key(|l| l.priority())
}

/// A dependency tree over the source sentence whose label set is the target
/// treebank's syntax labels extended with `S`, `R`, `M`. `ged_mask[i]` is
/// true iff token `i` carries one of the three error labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedTree {
    pub tree: DepTree,
    pub ged_mask: Vec<bool>,
}

impl ProjectedTree {
    /// Wraps a valid tree, deriving the error mask from its labels.
    pub fn from_tree(tree: DepTree) -> Result<Self, TreeViolation> {
        validate_tree(&tree)?;
        let ged_mask = tree
            .labels
            .iter()
            .map(|l| GedLabel::of(l).is_some())
            .collect();
        Ok(ProjectedTree { tree, ged_mask })
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }
}

/// Where a target token lands on the source side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TargetSlot {
    /// Aligned 1:1 with a source token (0-based).
    Matched(usize),
    /// Inside a substituted span; resolves to the span's first source token.
    Substituted { first_src: usize },
    /// Inside a missing span; resolution climbs to its head.
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SourceSlot {
    Matched(usize),
    Substituted { span: usize },
    Redundant,
}

/// The source<->target correspondence induced by a span list.
#[derive(Debug)]
pub struct AlignmentMap {
    tgt_to_src: Vec<TargetSlot>,
    src_slots: Vec<SourceSlot>,
}

impl AlignmentMap {
    /// Builds the map, checking that the spans are sorted, disjoint, typed
    /// consistently, and leave equal matched gaps on both sides.
    pub fn build(src_len: usize, tgt_len: usize, spans: &[EditSpan]) -> Result<Self, ProjectError> {
        let mut tgt_to_src = vec![TargetSlot::Missing; tgt_len];
        let mut src_slots = vec![SourceSlot::Redundant; src_len];
        let mismatch = |msg: String| Err(ProjectError::SpanMismatch(msg));

        let (mut si, mut ti) = (0usize, 0usize);
        let fill_matched = |si: usize,
                            ti: usize,
                            gap: usize,
                            tgt_to_src: &mut Vec<TargetSlot>,
                            src_slots: &mut Vec<SourceSlot>| {
            for k in 0..gap {
                tgt_to_src[ti + k] = TargetSlot::Matched(si + k);
                src_slots[si + k] = SourceSlot::Matched(ti + k);
            }
        };

        for (idx, span) in spans.iter().enumerate() {
            if span.src.start < si || span.tgt.start < ti {
                return mismatch(format!("span {idx} not sorted or overlapping"));
            }
            if span.src.end > src_len || span.tgt.end > tgt_len {
                return mismatch(format!("span {idx} out of bounds"));
            }
            if span.src.start > span.src.end || span.tgt.start > span.tgt.end {
                return mismatch(format!("span {idx} has a reversed range"));
            }
            let kind_ok = match span.kind {
                EditKind::Substituted => !span.src.is_empty() && !span.tgt.is_empty(),
                EditKind::Redundant => !span.src.is_empty() && span.tgt.is_empty(),
                EditKind::Missing => span.src.is_empty() && !span.tgt.is_empty(),
            };
            if !kind_ok {
                return mismatch(format!("span {idx} ranges disagree with its kind"));
            }
            let gap_src = span.src.start - si;
            let gap_tgt = span.tgt.start - ti;
            if gap_src != gap_tgt {
                return mismatch(format!(
                    "span {idx}: {gap_src} matched source tokens vs {gap_tgt} target tokens before it"
                ));
            }
            fill_matched(si, ti, gap_src, &mut tgt_to_src, &mut src_slots);
            for s in span.src.clone() {
                src_slots[s] = match span.kind {
                    EditKind::Substituted => SourceSlot::Substituted { span: idx },
                    EditKind::Redundant => SourceSlot::Redundant,
                    EditKind::Missing => unreachable!("missing spans have no source tokens"),
                };
            }
            for t in span.tgt.clone() {
                tgt_to_src[t] = match span.kind {
                    EditKind::Substituted => TargetSlot::Substituted {
                        first_src: span.src.start,
                    },
                    EditKind::Missing => TargetSlot::Missing,
                    EditKind::Redundant => unreachable!("redundant spans have no target tokens"),
                };
            }
            si = span.src.end;
            ti = span.tgt.end;
        }
        if src_len - si != tgt_len - ti {
            return mismatch(format!(
                "{} trailing source tokens vs {} target tokens",
                src_len - si,
                tgt_len - ti
            ));
        }
        fill_matched(si, ti, src_len - si, &mut tgt_to_src, &mut src_slots);
        Ok(AlignmentMap {
            tgt_to_src,
            src_slots,
        })
    }
}

/// Maps a target head position (1-based, 0 = root) to a source head
/// position. Matched and substituted targets resolve to a concrete source
/// token; missing targets are climbed through until an aligned ancestor or
/// the root is reached.
///
/// `tgt` must be a valid tree; the climb then terminates.
pub fn resolve_head(map: &AlignmentMap, tgt: &DepTree, head: usize) -> usize {
    let mut h = head;
    let mut hops = 0usize;
    loop {
        if h == 0 {
            return 0;
        }
        match map.tgt_to_src[h - 1] {
            TargetSlot::Matched(s) => return s + 1,
            TargetSlot::Substituted { first_src } => return first_src + 1,
            TargetSlot::Missing => h = tgt.heads[h - 1],
        }
        hops += 1;
        assert!(
            hops <= tgt.len(),
            "head climb did not terminate: cyclic target tree"
        );
    }
}

/// Hops from each token to the virtual root.
fn tree_depths(tree: &DepTree) -> Vec<usize> {
    let n = tree.len();
    let mut depth = vec![usize::MAX; n + 1];
    depth[0] = 0;
    for start in 1..=n {
        let mut chain = Vec::new();
        let mut cur = start;
        while depth[cur] == usize::MAX {
            chain.push(cur);
            cur = tree.heads[cur - 1];
        }
        let mut d = depth[cur];
        for &tok in chain.iter().rev() {
            d += 1;
            depth[tok] = d;
        }
    }
    depth
}

/// Projects `tgt`'s dependency tree onto the source sentence.
///
/// `spans` must be consistent with the pair: sorted, disjoint, inside
/// bounds, with equal matched gaps on both sides. The result is always a
/// valid single-rooted tree.
pub fn project(
    src: &[String],
    tgt: &DepTree,
    spans: &[EditSpan],
) -> Result<ProjectedTree, ProjectError> {
    validate_tree(tgt).map_err(ProjectError::InvalidTarget)?;
    if src.is_empty() {
        return Err(ProjectError::Degenerate(
            "empty source sentence".to_string(),
        ));
    }
    let n = src.len();
    let map = AlignmentMap::build(n, tgt.len(), spans)?;
    if map
        .src_slots
        .iter()
        .all(|s| matches!(s, SourceSlot::Redundant))
    {
        return Err(ProjectError::Degenerate(
            "every source token is redundant; nothing to attach the tree to".to_string(),
        ));
    }

    // Attachment point for each substituted span: the head of the span's
    // shallowest target token. That token's head is outside the span (its
    // parent is shallower still), and taking the minimal depth keeps head
    // chains climbing strictly towards the root, which rules out cycles for
    // n:m spans whose fragments sit at different depths.
    let depths = tree_depths(tgt);
    let mut span_attach = vec![0usize; spans.len()];
    for (idx, span) in spans.iter().enumerate() {
        if span.kind != EditKind::Substituted {
            continue;
        }
        let top = span
            .tgt
            .clone()
            .filter(|&t| {
                let h = tgt.heads[t];
                h == 0 || !span.tgt.contains(&(h - 1))
            })
            .min_by_key(|&t| (depths[t + 1], t))
            .expect("a non-empty span always has a token with an external head");
        span_attach[idx] = resolve_head(&map, tgt, tgt.heads[top]);
    }

    let mut heads = vec![0usize; n];
    let mut labels = vec![String::new(); n];
    // Tracks matched tokens that became root only because the true root is
    // missing; the promoted one among them is relabelled below.
    let mut climbed_to_root = vec![false; n];

    // Copy / substitute.
    for s in 0..n {
        match map.src_slots[s] {
            SourceSlot::Matched(t) => {
                heads[s] = resolve_head(&map, tgt, tgt.heads[t]);
                labels[s] = tgt.labels[t].clone();
                climbed_to_root[s] = heads[s] == 0 && tgt.heads[t] != 0;
            }
            SourceSlot::Substituted { span } => {
                heads[s] = span_attach[span];
                labels[s] = GedLabel::Substituted.as_str().to_string();
            }
            SourceSlot::Redundant => {}
        }
    }

    // Redundant tokens attach to the right neighbour; a sentence-final one
    // attaches to the nearest non-redundant token on its left instead,
    // which keeps redundant suffix chains acyclic.
    for s in 0..n {
        if !matches!(map.src_slots[s], SourceSlot::Redundant) {
            continue;
        }
        labels[s] = GedLabel::Redundant.as_str().to_string();
        heads[s] = if s + 1 < n {
            s + 2
        } else {
            let left = (0..s)
                .rev()
                .find(|&k| !matches!(map.src_slots[k], SourceSlot::Redundant))
                .expect("all-redundant sentences were rejected above");
            left + 1
        };
    }

    // Missing spans mark the right-adjacent token; a sentence-final omission
    // changes nothing, and existing S/R labels win.
    for span in spans.iter().filter(|s| s.kind == EditKind::Missing) {
        let at = span.src.start;
        if at >= n {
            continue;
        }
        let candidates = GedLabel::of(&labels[at])
            .into_iter()
            .chain(std::iter::once(GedLabel::Missing));
        if resolve_label_conflict(candidates) == Some(GedLabel::Missing) {
            labels[at] = GedLabel::Missing.as_str().to_string();
        }
    }

    // Root repair: exactly one token may keep head 0. Several candidates
    // appear when the target root was deleted or replaced together with
    // other material; the leftmost wins and the rest attach to it.
    let roots: Vec<usize> = (0..n).filter(|&s| heads[s] == 0).collect();
    let keep = *roots
        .first()
        .ok_or_else(|| ProjectError::Internal("projection produced no root".to_string()))?;
    for &r in &roots[1..] {
        heads[r] = keep + 1;
    }
    if climbed_to_root[keep]
        && !matches!(
            GedLabel::of(&labels[keep]),
            Some(GedLabel::Substituted) | Some(GedLabel::Redundant)
        )
    {
        labels[keep] = "Root".to_string();
    }

    let tree = DepTree {
        tokens: src.iter().map(Token::new).collect(),
        heads,
        labels,
        arc_probs: None,
        comments: Vec::new(),
    };
    ProjectedTree::from_tree(tree)
        .map_err(|v| ProjectError::Internal(format!("projected tree invalid: {v}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edits::{align_tokens, merge_to_spans};

    fn target_tree() -> DepTree {
        DepTree::from_parts(
            &["But", "there", "were", "no", "buyers", "."],
            &[3, 3, 0, 5, 3, 3],
            &["cc", "expl", "Root", "det", "nsubj", "punct"],
        )
    }

    fn forms(s: &str) -> Vec<String> {
        s.split_whitespace().map(|t| t.to_string()).collect()
    }

    fn project_pair(src: &str, tgt: &DepTree) -> ProjectedTree {
        let src = forms(src);
        let tgt_forms = tgt.forms();
        let spans = merge_to_spans(&align_tokens(&src, &tgt_forms).unwrap());
        project(&src, tgt, &spans).unwrap()
    }

    #[test]
    fn substituted_token_keeps_attachment() {
        let p = project_pair("Bat there were no buyers .", &target_tree());
        assert_eq!(p.tree.heads, vec![3, 3, 0, 5, 3, 3]);
        assert_eq!(
            p.tree.labels,
            vec!["S", "expl", "Root", "det", "nsubj", "punct"]
        );
        assert_eq!(p.ged_mask, vec![true, false, false, false, false, false]);
    }

    #[test]
    fn redundant_token_attaches_right() {
        let p = project_pair("But there were no any buyers .", &target_tree());
        assert_eq!(p.tree.heads, vec![3, 3, 0, 6, 6, 3, 3]);
        assert_eq!(
            p.tree.labels,
            vec!["cc", "expl", "Root", "det", "R", "nsubj", "punct"]
        );
    }

    #[test]
    fn missing_token_marks_right_neighbour() {
        let p = project_pair("But there were no .", &target_tree());
        assert_eq!(p.tree.heads, vec![3, 3, 0, 3, 3]);
        assert_eq!(p.tree.labels, vec!["cc", "expl", "Root", "det", "M"]);
        assert_eq!(p.ged_mask, vec![false, false, false, false, true]);
    }

    #[test]
    fn identity_projection_copies_the_tree() {
        let tgt = target_tree();
        let p = project_pair("But there were no buyers .", &tgt);
        assert_eq!(p.tree, tgt);
        assert!(p.ged_mask.iter().all(|&m| !m));
    }

    #[test]
    fn substitution_wins_over_missing_in_mixed_runs() {
        // One replaced word plus one omitted word align into a single
        // substituted span, so the token reads S, not M.
        let p = project_pair("But was no buyers .", &target_tree());
        assert_eq!(p.tree.labels[1], "S");
        assert_eq!(p.tree.heads[1], 0); // attaches where "were" attached
    }

    #[test]
    fn sentence_final_missing_leaves_tree_unchanged() {
        let tgt = target_tree();
        let p = project_pair("But there were no buyers", &tgt);
        assert_eq!(p.tree.heads, vec![3, 3, 0, 5, 3]);
        assert_eq!(p.tree.labels, vec!["cc", "expl", "Root", "det", "nsubj"]);
        assert!(p.ged_mask.iter().all(|&m| !m));
    }

    #[test]
    fn consecutive_missing_words_mark_once() {
        let p = project_pair("But there were .", &target_tree());
        assert_eq!(p.tree.labels, vec!["cc", "expl", "Root", "M"]);
        assert_eq!(p.tree.heads, vec![3, 3, 0, 3]);
    }

    #[test]
    fn sentence_final_redundant_attaches_left_of_the_chain() {
        // Both trailing tokens are redundant; the last one must not point
        // right off the sentence end, and must skip its redundant neighbour.
        let p = project_pair("But there were no buyers . x y", &target_tree());
        assert_eq!(p.tree.labels[6], "R");
        assert_eq!(p.tree.labels[7], "R");
        assert_eq!(p.tree.heads[6], 8); // x -> y, rightward even though y is redundant
        assert_eq!(p.tree.heads[7], 6); // y -> ".", nearest non-redundant on the left
        assert!(validate_tree(&p.tree).is_ok());
    }

    #[test]
    fn missing_root_promotes_leftmost_dependent() {
        // Target: "came home" with "came" as root; the root is missing from
        // the source.
        let tgt = DepTree::from_parts(&["came", "home"], &[0, 1], &["Root", "advmod"]);
        let src = forms("home");
        let spans = merge_to_spans(&align_tokens(&src, &tgt.forms()).unwrap());
        let p = project(&src, &tgt, &spans).unwrap();
        assert_eq!(p.tree.heads, vec![0]);
        assert_eq!(p.tree.labels, vec!["Root"]);
    }

    #[test]
    fn missing_root_with_two_dependents_keeps_leftmost() {
        let tgt = DepTree::from_parts(
            &["dogs", "ate", "bones"],
            &[2, 0, 2],
            &["nsubj", "Root", "obj"],
        );
        let src = forms("dogs bones");
        let spans = merge_to_spans(&align_tokens(&src, &tgt.forms()).unwrap());
        let p = project(&src, &tgt, &spans).unwrap();
        // both dependents of the lost root resolve to it; the leftmost is
        // promoted, the other re-attaches and keeps its M mark (it is the
        // right neighbour of the omission)
        assert_eq!(p.tree.heads, vec![0, 1]);
        assert_eq!(p.tree.labels, vec!["Root", "M"]);
        assert!(validate_tree(&p.tree).is_ok());
    }

    #[test]
    fn substituted_root_keeps_head_zero_with_s_label() {
        let tgt = target_tree();
        let p = project_pair("But there was no buyers .", &tgt);
        assert_eq!(p.tree.heads[2], 0);
        assert_eq!(p.tree.labels[2], "S");
    }

    #[test]
    fn resolve_head_climbs_missing_chains() {
        // d -> c -> b -> a with b and c missing: d's head resolves to the
        // first aligned ancestor a.
        let tgt = DepTree::from_parts(
            &["a", "b", "c", "d"],
            &[0, 1, 2, 3],
            &["Root", "x", "y", "z"],
        );
        let spans = vec![EditSpan {
            src: 1..1,
            tgt: 1..3,
            kind: EditKind::Missing,
        }];
        let map = AlignmentMap::build(2, 4, &spans).unwrap();
        assert_eq!(resolve_head(&map, &tgt, 3), 1); // c resolves to a
        assert_eq!(resolve_head(&map, &tgt, 0), 0); // root stays root
        assert_eq!(resolve_head(&map, &tgt, 4), 2); // aligned d maps directly
    }

    #[test]
    fn priority_order_is_s_r_m() {
        use GedLabel::*;
        assert_eq!(
            resolve_label_conflict([Substituted, Missing]),
            Some(Substituted)
        );
        assert_eq!(resolve_label_conflict([Missing]), Some(Missing));
        assert_eq!(
            resolve_label_conflict([Redundant, Missing]),
            Some(Redundant)
        );
        assert_eq!(resolve_label_conflict([]), None);
    }

    #[test]
    fn one_to_many_substitution_flags_every_token() {
        // "a lot" replaces "much": both source tokens read S and share the
        // attachment of "much".
        let tgt = DepTree::from_parts(
            &["thanks", "very", "much"],
            &[0, 3, 1],
            &["Root", "advmod", "advmod"],
        );
        let src = forms("thanks very a lot");
        let spans = vec![EditSpan {
            src: 2..4,
            tgt: 2..3,
            kind: EditKind::Substituted,
        }];
        let p = project(&src, &tgt, &spans).unwrap();
        assert_eq!(p.tree.labels, vec!["Root", "advmod", "S", "S"]);
        assert_eq!(p.tree.heads, vec![0, 3, 1, 1]);
        assert!(validate_tree(&p.tree).is_ok());
    }

    #[test]
    fn external_dependents_of_a_span_attach_to_its_first_token() {
        // Target "the big dog barks": "big dog" replaced by "pup" on the
        // source side; "the" depended on "dog" and must follow the span.
        let tgt = DepTree::from_parts(
            &["the", "big", "dog", "barks"],
            &[3, 3, 4, 0],
            &["det", "amod", "nsubj", "Root"],
        );
        let src = forms("the pup barks");
        let spans = vec![EditSpan {
            src: 1..2,
            tgt: 1..3,
            kind: EditKind::Substituted,
        }];
        let p = project(&src, &tgt, &spans).unwrap();
        assert_eq!(p.tree.heads, vec![2, 3, 0]);
        assert_eq!(p.tree.labels, vec!["det", "S", "Root"]);
    }

    #[test]
    fn interleaved_span_fragments_do_not_cycle() {
        // Span tokens at different depths with an external token between
        // them in the tree: attaching to the shallowest fragment keeps the
        // result a tree.
        let tgt = DepTree::from_parts(
            &["a", "u", "d", "r"],
            &[3, 4, 2, 0],
            &["x", "y", "z", "Root"],
        );
        // span covers "a" and "u" via a 2:2 substitution
        let src = forms("p q d r");
        let spans = vec![EditSpan {
            src: 0..2,
            tgt: 0..2,
            kind: EditKind::Substituted,
        }];
        let p = project(&src, &tgt, &spans).unwrap();
        assert!(validate_tree(&p.tree).is_ok(), "{:?}", p.tree.heads);
        // both S tokens attach via the shallower fragment head ("u" -> root's child chain)
        assert_eq!(p.tree.labels[0], "S");
        assert_eq!(p.tree.labels[1], "S");
    }

    #[test]
    fn all_redundant_source_is_degenerate() {
        let tgt = DepTree::from_parts(&["a"], &[0], &["Root"]);
        let spans = vec![
            EditSpan {
                src: 0..2,
                tgt: 0..0,
                kind: EditKind::Redundant,
            },
            EditSpan {
                src: 2..2,
                tgt: 0..1,
                kind: EditKind::Missing,
            },
        ];
        let err = project(&forms("x y"), &tgt, &spans).unwrap_err();
        assert!(matches!(err, ProjectError::Degenerate(_)));
    }

    #[test]
    fn inconsistent_spans_are_rejected() {
        let tgt = target_tree();
        let spans = vec![EditSpan {
            src: 0..1,
            tgt: 2..3,
            kind: EditKind::Substituted,
        }];
        let err = project(&forms("a b c d e f"), &tgt, &spans).unwrap_err();
        assert!(matches!(err, ProjectError::SpanMismatch(_)));
    }

    #[test]
    fn invalid_target_tree_is_rejected() {
        let tgt = DepTree::from_parts(&["a", "b"], &[2, 1], &["x", "y"]);
        let err = project(&forms("a b"), &tgt, &[]).unwrap_err();
        assert!(matches!(err, ProjectError::InvalidTarget(_)));
    }

    #[test]
    fn substituted_span_containing_the_root_promotes_its_first_token() {
        // "dog ran" replaced by "pup sprinted"; the span holds the root, so
        // both tokens resolve to head 0 and the leftmost keeps it.
        let tgt = DepTree::from_parts(
            &["the", "dog", "ran", "home"],
            &[2, 3, 0, 3],
            &["det", "nsubj", "Root", "advmod"],
        );
        let src = forms("the pup sprinted home");
        let spans = vec![EditSpan {
            src: 1..3,
            tgt: 1..3,
            kind: EditKind::Substituted,
        }];
        let p = project(&src, &tgt, &spans).unwrap();
        assert_eq!(p.tree.heads, vec![2, 0, 2, 2]);
        assert_eq!(p.tree.labels, vec!["det", "S", "S", "advmod"]);
        assert!(validate_tree(&p.tree).is_ok());
    }

    #[test]
    fn sentence_initial_redundant_and_missing_spans() {
        // redundant token at position 0 attaches rightward
        let tgt = DepTree::from_parts(&["dogs", "bark"], &[2, 0], &["nsubj", "Root"]);
        let p = project_pair("ah dogs bark", &tgt);
        assert_eq!(p.tree.heads, vec![2, 3, 0]);
        assert_eq!(p.tree.labels, vec!["R", "nsubj", "Root"]);

        // missing sentence-initial word marks the first token
        let tgt = DepTree::from_parts(
            &["the", "dogs", "bark"],
            &[2, 3, 0],
            &["det", "nsubj", "Root"],
        );
        let p = project_pair("dogs bark", &tgt);
        assert_eq!(p.tree.heads, vec![2, 0]);
        assert_eq!(p.tree.labels, vec!["M", "Root"]);
    }

    #[test]
    fn missing_root_next_to_substitution_resolves_to_s() {
        // target "run fast": the root is deleted and "fast" replaced, so the
        // surviving token is both the omission's neighbour (M) and inside a
        // substituted span (S); S wins and it becomes the root.
        let tgt = DepTree::from_parts(&["run", "fast"], &[0, 1], &["Root", "advmod"]);
        let src = forms("quik");
        let spans = vec![
            EditSpan {
                src: 0..0,
                tgt: 0..1,
                kind: EditKind::Missing,
            },
            EditSpan {
                src: 0..1,
                tgt: 1..2,
                kind: EditKind::Substituted,
            },
        ];
        let p = project(&src, &tgt, &spans).unwrap();
        assert_eq!(p.tree.heads, vec![0]);
        assert_eq!(p.tree.labels, vec!["S"]);
    }

    #[test]
    fn fully_substituted_sentence_stays_a_tree() {
        let tgt = DepTree::from_parts(&["dogs", "bark"], &[2, 0], &["nsubj", "Root"]);
        let src = forms("cats meow loudly");
        let spans = vec![EditSpan {
            src: 0..3,
            tgt: 0..2,
            kind: EditKind::Substituted,
        }];
        let p = project(&src, &tgt, &spans).unwrap();
        assert_eq!(p.tree.heads, vec![0, 1, 1]);
        assert_eq!(p.tree.labels, vec!["S", "S", "S"]);
        assert_eq!(p.ged_mask, vec![true, true, true]);
    }

    /// Locality on fuzzed pairs: a token no rule touches — outside every
    /// span, not the right neighbour of an omission, and whose target head
    /// is outside every span — keeps its copied label verbatim.
    #[test]
    fn untouched_tokens_keep_their_labels() {
        use crate::verify::fuzz_case;
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(53);
        let mut checked = 0usize;
        for _ in 0..1000 {
            let case = fuzz_case(&mut rng);
            let p = project(&case.src, &case.tgt, &case.spans).unwrap();
            // rebuild the matched source<->target pairs from the spans
            let (mut si, mut ti) = (0usize, 0usize);
            let mut matched: Vec<(usize, usize)> = Vec::new();
            for span in &case.spans {
                for k in 0..(span.src.start - si) {
                    matched.push((si + k, ti + k));
                }
                si = span.src.end;
                ti = span.tgt.end;
            }
            for k in 0..(case.src.len() - si) {
                matched.push((si + k, ti + k));
            }
            let m_points: Vec<usize> = case
                .spans
                .iter()
                .filter(|s| s.kind == EditKind::Missing)
                .map(|s| s.src.start)
                .collect();
            for (s, t) in matched {
                let head = case.tgt.heads[t];
                let head_in_span =
                    head != 0 && case.spans.iter().any(|sp| sp.tgt.contains(&(head - 1)));
                if head_in_span || m_points.contains(&s) {
                    continue;
                }
                assert_eq!(
                    p.tree.labels[s], case.tgt.labels[t],
                    "token {s} of {case:?}"
                );
                checked += 1;
            }
        }
        assert!(checked > 1000);
    }
}
