//! CoNLL-U reading, writing, and tree validation.
//!
//! Only the ID, FORM, HEAD and DEPREL columns are interpreted; the remaining
//! six columns are carried verbatim so that documents produced by upstream
//! parsers survive a read/write cycle unchanged. Multiword-token ranges
//! (ids like `3-4`) and empty nodes (ids like `3.1`) are dropped on read.

use std::fmt::Write as _;

use ndarray::Array2;

use crate::error::{ParseError, TreeViolation};

/// Tolerance for arc-probability rows summing to one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// One token of a sentence. The position in the owning [`DepTree`] is the
/// token's 1-based id; it is not stored separately.
#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    /// Surface form. Non-empty and free of whitespace.
    pub form: String,
    /// LEMMA, UPOS, XPOS, FEATS, DEPS, MISC columns, kept opaque.
    pub extra: [String; 6],
}

impl Token {
    /// A bare token: every pass-through column is the CoNLL-U empty marker.
    pub fn new(form: impl Into<String>) -> Self {
        Token {
            form: form.into(),
            extra: std::array::from_fn(|_| "_".to_string()),
        }
    }
}

/// A dependency analysis of one tokenized sentence.
///
/// `heads[i]` is the 1-based head of token `i`, with `0` denoting the virtual
/// root. A well-formed tree has exactly one root, no self-heads, and every
/// token connected to the root acyclically; [`validate_tree`] checks this.
///
/// `arc_probs` optionally carries a soft head distribution: row `i`, column
/// `j` is the weight with which token `j + 1` heads token `i + 1`. Rows sum
/// to one. The root token carries its mass on the diagonal, since the matrix
/// has no column for the virtual root; [`DepTree::one_hot_probs`] follows the
/// same convention.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DepTree {
    pub tokens: Vec<Token>,
    pub heads: Vec<usize>,
    pub labels: Vec<String>,
    pub arc_probs: Option<Array2<f64>>,
    /// Comment lines (without the leading `#`) preceding the sentence.
    pub comments: Vec<String>,
}

impl DepTree {
    /// Builds a tree from plain forms, heads and labels. Handy in tests and
    /// for sentences coming from whitespace-tokenized corpora.
    pub fn from_parts(forms: &[&str], heads: &[usize], labels: &[&str]) -> Self {
        assert_eq!(forms.len(), heads.len());
        assert_eq!(forms.len(), labels.len());
        DepTree {
            tokens: forms.iter().map(|f| Token::new(*f)).collect(),
            heads: heads.to_vec(),
            labels: labels.iter().map(|l| l.to_string()).collect(),
            arc_probs: None,
            comments: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn forms(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.form.clone()).collect()
    }

    /// Hard head distribution implied by `heads`: weight 1 on each token's
    /// head, with the root token's weight placed on the diagonal.
    pub fn one_hot_probs(&self) -> Array2<f64> {
        let n = self.len();
        let mut m = Array2::zeros((n, n));
        for (i, &h) in self.heads.iter().enumerate() {
            let col = if h == 0 { i } else { h - 1 };
            m[(i, col)] = 1.0;
        }
        m
    }

    /// Arc probabilities if attached, otherwise the one-hot fallback.
    pub fn effective_probs(&self) -> Array2<f64> {
        match &self.arc_probs {
            Some(p) => p.clone(),
            None => self.one_hot_probs(),
        }
    }
}

/// Reports the first violated invariant of `tree`, or `Ok(())`.
///
/// Checks run in a fixed order: emptiness, token forms, head range,
/// self-heads, root count, cycles, connectivity, and finally the
/// arc-probability matrix when present. A sentence whose head function has
/// no root always contains a cycle, so the cycle report fires first for
/// root-less trees.
pub fn validate_tree(tree: &DepTree) -> Result<(), TreeViolation> {
    let n = tree.len();
    if n == 0 {
        return Err(TreeViolation::Empty);
    }
    if tree.heads.len() != n || tree.labels.len() != n {
        return Err(TreeViolation::HeadRange {
            token: tree.heads.len().min(n) + 1,
            head: 0,
            len: n,
        });
    }
    for (i, tok) in tree.tokens.iter().enumerate() {
        if tok.form.is_empty() || tok.form.chars().any(char::is_whitespace) {
            return Err(TreeViolation::BadForm { token: i + 1 });
        }
    }
    for (i, &h) in tree.heads.iter().enumerate() {
        if h > n {
            return Err(TreeViolation::HeadRange {
                token: i + 1,
                head: h,
                len: n,
            });
        }
        if h == i + 1 {
            return Err(TreeViolation::SelfHead { token: i + 1 });
        }
    }
    let roots = tree.heads.iter().filter(|&&h| h == 0).count();
    if roots > 1 {
        return Err(TreeViolation::MultiRoot { count: roots });
    }

    // Walk every head chain once. 0 = unvisited, 1 = on the current chain,
    // 2 = known to reach the root.
    let mut state = vec![0u8; n + 1];
    state[0] = 2;
    for start in 1..=n {
        if state[start] != 0 {
            continue;
        }
        let mut chain = Vec::new();
        let mut cur = start;
        while state[cur] == 0 {
            state[cur] = 1;
            chain.push(cur);
            cur = tree.heads[cur - 1];
        }
        if state[cur] == 1 {
            return Err(TreeViolation::Cycle { token: cur });
        }
        for tok in chain {
            state[tok] = 2;
        }
    }
    // All chains terminated at the root, so connectivity holds; a single
    // root is guaranteed by the count check above together with n >= 1.
    if roots == 0 {
        // Unreachable: a root-less head function always cycles.
        return Err(TreeViolation::Disconnected { token: 1 });
    }

    if let Some(probs) = &tree.arc_probs {
        if probs.nrows() != n || probs.ncols() != n {
            return Err(TreeViolation::ArcProbShape {
                rows: probs.nrows(),
                cols: probs.ncols(),
                len: n,
            });
        }
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                let v = probs[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(TreeViolation::ArcProbRange {
                        row: i + 1,
                        col: j + 1,
                        value: v,
                    });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(TreeViolation::ArcProbRowSum { row: i + 1, sum });
            }
        }
    }
    Ok(())
}

/// Parses a CoNLL-U document into one [`DepTree`] per sentence block.
///
/// Sentences are separated by blank lines; consecutive blank lines are
/// tolerated. Arc probabilities are never populated here — they live in a
/// sidecar file, see [`crate::sidecar`].
pub fn parse_conllu(text: &str) -> Result<Vec<DepTree>, ParseError> {
    let mut trees = Vec::new();
    let mut builder = SentenceBuilder::default();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            builder.finish(&mut trees)?;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            builder.first_line.get_or_insert(line_no);
            builder.comments.push(comment.trim_start().to_string());
            continue;
        }
        builder.push_token_line(line, line_no)?;
    }
    builder.finish(&mut trees)?;
    Ok(trees)
}

#[derive(Default)]
struct SentenceBuilder {
    comments: Vec<String>,
    tokens: Vec<Token>,
    heads: Vec<usize>,
    labels: Vec<String>,
    token_lines: Vec<usize>,
    first_line: Option<usize>,
}

impl SentenceBuilder {
    fn push_token_line(&mut self, line: &str, line_no: usize) -> Result<(), ParseError> {
        self.first_line.get_or_insert(line_no);
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(ParseError::ColumnCount {
                line: line_no,
                found: cols.len(),
            });
        }
        // Multiword-token ranges and empty nodes are not part of the basic
        // tree; skip them.
        if cols[0].contains('-') || cols[0].contains('.') {
            return Ok(());
        }
        let expected = self.tokens.len() + 1;
        match cols[0].parse::<usize>() {
            Ok(id) if id == expected => {}
            _ => {
                return Err(ParseError::TokenId {
                    line: line_no,
                    value: cols[0].to_string(),
                    expected,
                })
            }
        }
        let form = cols[1];
        if form.is_empty() || form.chars().any(char::is_whitespace) {
            return Err(ParseError::BadForm { line: line_no });
        }
        let head = cols[6]
            .parse::<usize>()
            .map_err(|_| ParseError::NonIntegerHead {
                line: line_no,
                value: cols[6].to_string(),
            })?;
        self.tokens.push(Token {
            form: form.to_string(),
            extra: [
                cols[2].to_string(),
                cols[3].to_string(),
                cols[4].to_string(),
                cols[5].to_string(),
                cols[8].to_string(),
                cols[9].to_string(),
            ],
        });
        self.heads.push(head);
        self.labels.push(cols[7].to_string());
        self.token_lines.push(line_no);
        Ok(())
    }

    fn finish(&mut self, trees: &mut Vec<DepTree>) -> Result<(), ParseError> {
        if self.first_line.is_none() {
            return Ok(());
        }
        let first = self.first_line.take().unwrap();
        if self.tokens.is_empty() {
            return Err(ParseError::EmptySentence { line: first });
        }
        let n = self.tokens.len();
        for (i, &h) in self.heads.iter().enumerate() {
            if h > n {
                return Err(ParseError::HeadOutOfRange {
                    line: self.token_lines[i],
                    head: h,
                    len: n,
                });
            }
        }
        trees.push(DepTree {
            tokens: std::mem::take(&mut self.tokens),
            heads: std::mem::take(&mut self.heads),
            labels: std::mem::take(&mut self.labels),
            arc_probs: None,
            comments: std::mem::take(&mut self.comments),
        });
        self.token_lines.clear();
        Ok(())
    }
}

/// Serializes trees as CoNLL-U. Every tree is validated first.
///
/// Writing then parsing yields structurally equal trees (forms, heads,
/// labels, pass-through columns, comments); arc probabilities travel in the
/// sidecar instead.
pub fn write_conllu(trees: &[DepTree]) -> Result<String, TreeViolation> {
    let mut out = String::new();
    for tree in trees {
        validate_tree(tree)?;
        for comment in &tree.comments {
            let _ = writeln!(out, "# {comment}");
        }
        for (i, tok) in tree.tokens.iter().enumerate() {
            let e = &tok.extra;
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                i + 1,
                tok.form,
                e[0],
                e[1],
                e[2],
                e[3],
                tree.heads[i],
                tree.labels[i],
                e[4],
                e[5],
            );
        }
        out.push('\n');
    }
    Ok(out)
}
