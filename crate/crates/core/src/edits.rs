//! Token alignment of sentence pairs and extraction of classified edit
//! spans.
//!
//! Alignment is a weighted Levenshtein over tokens: matches are free,
//! insertions and deletions cost 1, substitutions cost 1 in general but only
//! 0.25 when the two tokens are equal case-insensitively, which keeps
//! casing and spelling variants aligned as substitutions instead of
//! delete/insert pairs. Word-order differences come out as redundant plus
//! missing spans; no transposition operation exists.
//!
//! Costs are handled internally in quarter units so the dynamic program
//! stays in exact integer arithmetic.

use std::ops::Range;

use crate::error::FormatError;

/// One alignment operation. `src`/`tgt` are 0-based token indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignOp {
    Match { src: usize, tgt: usize },
    Sub { src: usize, tgt: usize },
    Del { src: usize },
    Ins { tgt: usize },
}

/// A minimal-cost monotone alignment between two token sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub ops: Vec<AlignOp>,
    /// Total cost under the declared cost function.
    pub cost: f64,
}

/// Edit span classification, mirroring the three error labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditKind {
    /// Source tokens that should be replaced (both ranges non-empty).
    Substituted,
    /// Source tokens that should be deleted (empty target range).
    Redundant,
    /// Target tokens absent from the source (empty source range).
    Missing,
}

impl EditKind {
    pub fn letter(self) -> char {
        match self {
            EditKind::Substituted => 'S',
            EditKind::Redundant => 'R',
            EditKind::Missing => 'M',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c {
            'S' => Some(EditKind::Substituted),
            'R' => Some(EditKind::Redundant),
            'M' => Some(EditKind::Missing),
            _ => None,
        }
    }
}

/// One aligned difference region. Ranges are half-open over 0-based token
/// indices; the empty side of a one-sided span marks the insertion point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditSpan {
    pub src: Range<usize>,
    pub tgt: Range<usize>,
    pub kind: EditKind,
}

const MATCH_COST: u32 = 0;
const CASEFOLD_SUB_COST: u32 = 1; // 0.25 in quarter units
const SUB_COST: u32 = 4;
const GAP_COST: u32 = 4; // insertion or deletion

fn sub_cost(a: &str, b: &str) -> u32 {
    if a.to_lowercase() == b.to_lowercase() {
        CASEFOLD_SUB_COST
    } else {
        SUB_COST
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Step {
    Start,
    Match,
    Sub,
    Del,
    Ins,
}

/// Aligns two non-empty token sequences with minimal cost.
///
/// Ties are broken per cell preferring Match, then Sub, then Del, then Ins,
/// so the result is reproducible bit for bit.
pub fn align_tokens<S: AsRef<str>>(src: &[S], tgt: &[S]) -> Result<Alignment, FormatError> {
    if src.is_empty() || tgt.is_empty() {
        return Err(FormatError::Malformed {
            line: 0,
            msg: "cannot align an empty token sequence".to_string(),
        });
    }
    let n = src.len();
    let m = tgt.len();
    let mut cost = vec![u32::MAX; (n + 1) * (m + 1)];
    let mut step = vec![Step::Start; (n + 1) * (m + 1)];
    let at = |i: usize, j: usize| i * (m + 1) + j;

    cost[at(0, 0)] = 0;
    for i in 1..=n {
        cost[at(i, 0)] = i as u32 * GAP_COST;
        step[at(i, 0)] = Step::Del;
    }
    for j in 1..=m {
        cost[at(0, j)] = j as u32 * GAP_COST;
        step[at(0, j)] = Step::Ins;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = cost[at(i - 1, j - 1)];
            let (mut best, mut how) = if src[i - 1].as_ref() == tgt[j - 1].as_ref() {
                (diag + MATCH_COST, Step::Match)
            } else {
                (
                    diag + sub_cost(src[i - 1].as_ref(), tgt[j - 1].as_ref()),
                    Step::Sub,
                )
            };
            let del = cost[at(i - 1, j)] + GAP_COST;
            if del < best {
                best = del;
                how = Step::Del;
            }
            let ins = cost[at(i, j - 1)] + GAP_COST;
            if ins < best {
                best = ins;
                how = Step::Ins;
            }
            cost[at(i, j)] = best;
            step[at(i, j)] = how;
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        match step[at(i, j)] {
            Step::Match => {
                i -= 1;
                j -= 1;
                ops.push(AlignOp::Match { src: i, tgt: j });
            }
            Step::Sub => {
                i -= 1;
                j -= 1;
                ops.push(AlignOp::Sub { src: i, tgt: j });
            }
            Step::Del => {
                i -= 1;
                ops.push(AlignOp::Del { src: i });
            }
            Step::Ins => {
                j -= 1;
                ops.push(AlignOp::Ins { tgt: j });
            }
            Step::Start => unreachable!("backtrace escaped the table"),
        }
    }
    ops.reverse();
    Ok(Alignment {
        ops,
        cost: cost[at(n, m)] as f64 / 4.0,
    })
}

/// Collapses maximal runs of consecutive non-Match operations into edit
/// spans. A run touching both sides is Substituted; a source-only run is
/// Redundant; a target-only run is Missing. One-sided spans record the
/// insertion point implied by the neighbouring matches as an empty range.
pub fn merge_to_spans(alignment: &Alignment) -> Vec<EditSpan> {
    let mut spans = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    let mut run_start: Option<(usize, usize)> = None;

    let mut close_run = |run_start: &mut Option<(usize, usize)>, i: usize, j: usize| {
        if let Some((sb, tb)) = run_start.take() {
            let kind = match (i > sb, j > tb) {
                (true, true) => EditKind::Substituted,
                (true, false) => EditKind::Redundant,
                (false, true) => EditKind::Missing,
                (false, false) => unreachable!("empty run"),
            };
            spans.push(EditSpan {
                src: sb..i,
                tgt: tb..j,
                kind,
            });
        }
    };

    for op in &alignment.ops {
        match *op {
            AlignOp::Match { .. } => {
                close_run(&mut run_start, i, j);
                i += 1;
                j += 1;
            }
            AlignOp::Sub { .. } => {
                run_start.get_or_insert((i, j));
                i += 1;
                j += 1;
            }
            AlignOp::Del { .. } => {
                run_start.get_or_insert((i, j));
                i += 1;
            }
            AlignOp::Ins { .. } => {
                run_start.get_or_insert((i, j));
                j += 1;
            }
        }
    }
    close_run(&mut run_start, i, j);
    spans
}

/// Renders spans as one text record: `src_beg src_end tgt_beg tgt_end kind`,
/// multiple spans joined by `;`. An edit-free pair renders as the empty
/// string.
pub fn format_spans(spans: &[EditSpan]) -> String {
    spans
        .iter()
        .map(|s| {
            format!(
                "{} {} {} {} {}",
                s.src.start,
                s.src.end,
                s.tgt.start,
                s.tgt.end,
                s.kind.letter()
            )
        })
        .collect::<Vec<_>>()
        .join(";")
}

/// Parses one span record produced by [`format_spans`].
pub fn parse_spans(record: &str, line: usize) -> Result<Vec<EditSpan>, FormatError> {
    let mut spans = Vec::new();
    for part in record.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let fields: Vec<&str> = part.split_whitespace().collect();
        let malformed = |msg: &str| FormatError::Malformed {
            line,
            msg: format!("{msg} in span record `{part}`"),
        };
        if fields.len() != 5 {
            return Err(malformed("expected 5 fields"));
        }
        let nums: Vec<usize> = fields[..4]
            .iter()
            .map(|f| f.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| malformed("non-integer position"))?;
        let kind = fields[4]
            .chars()
            .next()
            .and_then(EditKind::from_letter)
            .filter(|_| fields[4].len() == 1)
            .ok_or_else(|| malformed("unknown kind"))?;
        spans.push(EditSpan {
            src: nums[0]..nums[1],
            tgt: nums[2]..nums[3],
            kind,
        });
    }
    Ok(spans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(|t| t.to_string()).collect()
    }

    #[test]
    fn aligns_redundant_any() {
        let src = toks("But there were no any buyers .");
        let tgt = toks("But there were no buyers .");
        let a = align_tokens(&src, &tgt).unwrap();
        let expected: Vec<AlignOp> = vec![
            AlignOp::Match { src: 0, tgt: 0 },
            AlignOp::Match { src: 1, tgt: 1 },
            AlignOp::Match { src: 2, tgt: 2 },
            AlignOp::Match { src: 3, tgt: 3 },
            AlignOp::Del { src: 4 },
            AlignOp::Match { src: 5, tgt: 4 },
            AlignOp::Match { src: 6, tgt: 5 },
        ];
        assert_eq!(a.ops, expected);
        assert_eq!(a.cost, 1.0);
    }

    #[test]
    fn identical_sequences_are_all_match() {
        let s = toks("a b c");
        let a = align_tokens(&s, &s).unwrap();
        assert!(a.ops.iter().all(|op| matches!(op, AlignOp::Match { .. })));
        assert_eq!(a.cost, 0.0);
    }

    /// Enumerates every monotone alignment and returns the cheapest cost.
    /// Only feasible for short sequences; the independent route for the
    /// small frozen cases.
    fn enumerate_min_cost(src: &[String], tgt: &[String], i: usize, j: usize) -> f64 {
        if i == src.len() && j == tgt.len() {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        if i < src.len() && j < tgt.len() {
            let step = if src[i] == tgt[j] {
                0.0
            } else if src[i].to_lowercase() == tgt[j].to_lowercase() {
                0.25
            } else {
                1.0
            };
            best = best.min(step + enumerate_min_cost(src, tgt, i + 1, j + 1));
        }
        if i < src.len() {
            best = best.min(1.0 + enumerate_min_cost(src, tgt, i + 1, j));
        }
        if j < tgt.len() {
            best = best.min(1.0 + enumerate_min_cost(src, tgt, i, j + 1));
        }
        best
    }

    #[test]
    fn single_substitution_costs_one() {
        // Exhaustive enumeration over all alignments of the length-3 pair
        // confirms cost 1 is minimal (Sub 1 vs Del+Ins 2).
        let src = toks("a b c");
        let tgt = toks("a x c");
        assert_eq!(enumerate_min_cost(&src, &tgt, 0, 0), 1.0);
        let a = align_tokens(&toks("a b c"), &toks("a x c")).unwrap();
        assert_eq!(
            a.ops,
            vec![
                AlignOp::Match { src: 0, tgt: 0 },
                AlignOp::Sub { src: 1, tgt: 1 },
                AlignOp::Match { src: 2, tgt: 2 },
            ]
        );
        assert_eq!(a.cost, 1.0);
    }

    /// Full sweep: every pair of sequences up to length 4 over a two-symbol
    /// vocabulary matches the exhaustive enumeration.
    #[test]
    fn cost_is_minimal_on_all_short_pairs() {
        let mut seqs: Vec<Vec<String>> = Vec::new();
        for len in 1..=4usize {
            for code in 0..(1u32 << len) {
                seqs.push(
                    (0..len)
                        .map(|b| if code >> b & 1 == 0 { "a" } else { "x" }.to_string())
                        .collect(),
                );
            }
        }
        for src in &seqs {
            for tgt in &seqs {
                let ours = align_tokens(src, tgt).unwrap().cost;
                let brute = enumerate_min_cost(src, tgt, 0, 0);
                assert!((ours - brute).abs() < 1e-12, "{src:?} vs {tgt:?}");
            }
        }
    }

    #[test]
    fn casefold_substitution_is_discounted() {
        let a = align_tokens(&toks("Bat there"), &toks("bat there")).unwrap();
        assert_eq!(a.cost, 0.25);
        assert!(matches!(a.ops[0], AlignOp::Sub { src: 0, tgt: 0 }));
    }

    #[test]
    fn empty_side_is_rejected() {
        let empty: Vec<String> = Vec::new();
        assert!(align_tokens(&empty, &toks("a")).is_err());
        assert!(align_tokens(&toks("a"), &empty).is_err());
    }

    #[test]
    fn merges_single_deletion_to_redundant_span() {
        let src = toks("But there were no any buyers .");
        let tgt = toks("But there were no buyers .");
        let spans = merge_to_spans(&align_tokens(&src, &tgt).unwrap());
        assert_eq!(
            spans,
            vec![EditSpan {
                src: 4..5,
                tgt: 4..4,
                kind: EditKind::Redundant
            }]
        );
    }

    #[test]
    fn merges_lone_sub_to_substituted_span() {
        let spans = merge_to_spans(
            &align_tokens(&toks("Bat there were"), &toks("But there were")).unwrap(),
        );
        assert_eq!(
            spans,
            vec![EditSpan {
                src: 0..1,
                tgt: 0..1,
                kind: EditKind::Substituted
            }]
        );
    }

    #[test]
    fn merges_sub_ins_run_into_one_to_two_substitution() {
        // Hand enumeration of the run Sub(1,1), Ins(2): one span covering
        // src [1,2) and tgt [1,3).
        let a = Alignment {
            ops: vec![
                AlignOp::Match { src: 0, tgt: 0 },
                AlignOp::Sub { src: 1, tgt: 1 },
                AlignOp::Ins { tgt: 2 },
                AlignOp::Match { src: 2, tgt: 3 },
            ],
            cost: 2.0,
        };
        let spans = merge_to_spans(&a);
        assert_eq!(
            spans,
            vec![EditSpan {
                src: 1..2,
                tgt: 1..3,
                kind: EditKind::Substituted
            }]
        );
    }

    #[test]
    fn span_records_round_trip() {
        let src = toks("But was no buyers x");
        let tgt = toks("But there were no buyers .");
        let spans = merge_to_spans(&align_tokens(&src, &tgt).unwrap());
        let text = format_spans(&spans);
        assert_eq!(parse_spans(&text, 1).unwrap(), spans);
        assert_eq!(parse_spans("", 1).unwrap(), Vec::new());
    }

    /// Minimal cost agrees with a brute-force search on random pairs.
    #[test]
    fn cost_matches_brute_force_dp() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..400 {
            let (src, tgt) = random_pair(&mut rng);
            let ours = align_tokens(&src, &tgt).unwrap().cost;
            let brute = brute_force_cost(&src, &tgt);
            assert!(
                (ours - brute).abs() < 1e-12,
                "src {src:?} tgt {tgt:?}: {ours} vs {brute}"
            );
        }
    }

    /// Span merging partitions the non-match ops, kinds obey the range
    /// invariant, and applying the spans to the source rebuilds the target.
    #[test]
    fn spans_partition_and_rebuild_target() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        for _ in 0..400 {
            let (src, tgt) = random_pair(&mut rng);
            let alignment = align_tokens(&src, &tgt).unwrap();
            let spans = merge_to_spans(&alignment);

            // spans partition exactly the non-Match ops: every source and
            // target index is either matched or inside exactly one span
            let matches = alignment
                .ops
                .iter()
                .filter(|op| matches!(op, AlignOp::Match { .. }))
                .count();
            let src_in_spans: usize = spans.iter().map(|s| s.src.len()).sum();
            let tgt_in_spans: usize = spans.iter().map(|s| s.tgt.len()).sum();
            assert_eq!(matches + src_in_spans, src.len());
            assert_eq!(matches + tgt_in_spans, tgt.len());

            for w in spans.windows(2) {
                assert!(w[0].src.end <= w[1].src.start);
                assert!(w[0].tgt.end <= w[1].tgt.start);
            }
            for s in &spans {
                match s.kind {
                    EditKind::Substituted => assert!(!s.src.is_empty() && !s.tgt.is_empty()),
                    EditKind::Redundant => assert!(!s.src.is_empty() && s.tgt.is_empty()),
                    EditKind::Missing => assert!(s.src.is_empty() && !s.tgt.is_empty()),
                }
            }

            assert_eq!(apply_spans(&src, &tgt, &spans), tgt, "spans {spans:?}");
        }
    }

    fn random_pair(rng: &mut impl Rng) -> (Vec<String>, Vec<String>) {
        let vocab = ["aa", "bb", "cc"];
        let len_s = rng.gen_range(1..=8);
        let len_t = rng.gen_range(1..=8);
        let src = (0..len_s)
            .map(|_| vocab[rng.gen_range(0..3)].to_string())
            .collect();
        let tgt = (0..len_t)
            .map(|_| vocab[rng.gen_range(0..3)].to_string())
            .collect();
        (src, tgt)
    }

    /// Plain recursive minimum over the three edit branches; no tie-breaks,
    /// cost only.
    fn brute_force_cost(src: &[String], tgt: &[String]) -> f64 {
        fn go(
            src: &[String],
            tgt: &[String],
            i: usize,
            j: usize,
            memo: &mut Vec<Option<f64>>,
            m: usize,
        ) -> f64 {
            let key = i * (m + 1) + j;
            if let Some(v) = memo[key] {
                return v;
            }
            let v = if i == 0 && j == 0 {
                0.0
            } else if i == 0 {
                j as f64
            } else if j == 0 {
                i as f64
            } else {
                let step = if src[i - 1] == tgt[j - 1] {
                    0.0
                } else if src[i - 1].to_lowercase() == tgt[j - 1].to_lowercase() {
                    0.25
                } else {
                    1.0
                };
                let a = go(src, tgt, i - 1, j - 1, memo, m) + step;
                let b = go(src, tgt, i - 1, j, memo, m) + 1.0;
                let c = go(src, tgt, i, j - 1, memo, m) + 1.0;
                a.min(b).min(c)
            };
            memo[key] = Some(v);
            v
        }
        let mut memo = vec![None; (src.len() + 1) * (tgt.len() + 1)];
        go(src, tgt, src.len(), tgt.len(), &mut memo, tgt.len())
    }

    /// Rebuilds the target by applying spans to the source: delete
    /// Redundant, insert Missing, replace Substituted.
    pub(crate) fn apply_spans(src: &[String], tgt: &[String], spans: &[EditSpan]) -> Vec<String> {
        let mut out = Vec::new();
        let mut si = 0usize;
        for span in spans {
            out.extend_from_slice(&src[si..span.src.start]);
            out.extend_from_slice(&tgt[span.tgt.clone()]);
            si = span.src.end;
        }
        out.extend_from_slice(&src[si..]);
        out
    }
}
