//! Parameter bundle for the graph convolution stack, with a seeded
//! initializer and a plain-text persistence format.
//!
//! The file format lists scalars first and then each tensor as a header
//! line `tensor <name> <rows> <cols>` followed by its row-major values:
//!
//! ```text
//! depgcn-params v1
//! dim 4
//! ff_dim 8
//! labels 5
//! blocks 3
//! beta 0.5
//! tensor label_table 5 4
//! 0.03 -0.07 ...
//! ...
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so
//! save/load is lossless.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{DepGcnError, FormatError};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Array1<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    /// `d_ff x d`
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `d x d_ff`
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Parameters of one block: GCN sub-layer, feed-forward sub-layer, and the
/// two layer norms wrapping them.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnBlock {
    /// `d x 2d`, applied to hidden state ++ label embedding.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub ff: FeedForward,
    pub ln_gcn: LayerNorm,
    pub ln_ff: LayerNorm,
}

/// All weights of a stack plus the fusion factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    /// `|L| x d` label embedding table.
    pub label_table: Array2<f64>,
    pub blocks: Vec<GcnBlock>,
    /// Interpolation weight of the basic states, strictly inside (0, 1).
    pub beta: f64,
}

impl GcnParams {
    pub fn dim(&self) -> usize {
        self.label_table.ncols()
    }

    pub fn ff_dim(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.ff.w1.nrows())
    }

    pub fn label_count(&self) -> usize {
        self.label_table.nrows()
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Deterministic initializer: every tensor uniform in [-0.1, 0.1].
    pub fn seeded(
        dim: usize,
        ff_dim: usize,
        labels: usize,
        blocks: usize,
        beta: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mat =
            |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| rng.gen_range(-0.1..0.1));
        let table = mat(labels, dim);
        let block_list = (0..blocks)
            .map(|_| GcnBlock {
                w: mat(dim, 2 * dim),
                b: mat(1, dim).row(0).to_owned(),
                ff: FeedForward {
                    w1: mat(ff_dim, dim),
                    b1: mat(1, ff_dim).row(0).to_owned(),
                    w2: mat(dim, ff_dim),
                    b2: mat(1, dim).row(0).to_owned(),
                },
                ln_gcn: LayerNorm {
                    gain: mat(1, dim).row(0).to_owned(),
                    bias: mat(1, dim).row(0).to_owned(),
                },
                ln_ff: LayerNorm {
                    gain: mat(1, dim).row(0).to_owned(),
                    bias: mat(1, dim).row(0).to_owned(),
                },
            })
            .collect();
        GcnParams {
            label_table: table,
            blocks: block_list,
            beta,
        }
    }

    /// Checks shape consistency, the fusion factor range, and that every
    /// tensor is finite, naming the offending tensor.
    pub fn validate(&self) -> Result<(), DepGcnError> {
        let d = self.dim();
        if d < 2 {
            return Err(DepGcnError::DegenerateWidth(d));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(DepGcnError::BadFusionFactor(self.beta));
        }
        for (name, tensor) in self.tensors() {
            if tensor.iter().any(|v| !v.is_finite()) {
                return Err(DepGcnError::NonFinite(name));
            }
        }
        let d_ff = self.ff_dim();
        for (i, block) in self.blocks.iter().enumerate() {
            let ok = block.w.dim() == (d, 2 * d)
                && block.b.len() == d
                && block.ff.w1.dim() == (d_ff, d)
                && block.ff.b1.len() == d_ff
                && block.ff.w2.dim() == (d, d_ff)
                && block.ff.b2.len() == d
                && block.ln_gcn.gain.len() == d
                && block.ln_gcn.bias.len() == d
                && block.ln_ff.gain.len() == d
                && block.ln_ff.bias.len() == d;
            if !ok {
                return Err(DepGcnError::Shape(format!("block{i} tensors inconsistent")));
            }
        }
        Ok(())
    }

    /// Named views of every tensor, vectors as single rows.
    fn tensors(&self) -> Vec<(String, Array2<f64>)> {
        let row = |v: &Array1<f64>| v.view().insert_axis(ndarray::Axis(0)).to_owned();
        let mut out = vec![("label_table".to_string(), self.label_table.clone())];
        for (i, bl) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.w"), bl.w.clone()));
            out.push((format!("block{i}.b"), row(&bl.b)));
            out.push((format!("block{i}.ff.w1"), bl.ff.w1.clone()));
            out.push((format!("block{i}.ff.b1"), row(&bl.ff.b1)));
            out.push((format!("block{i}.ff.w2"), bl.ff.w2.clone()));
            out.push((format!("block{i}.ff.b2"), row(&bl.ff.b2)));
            out.push((format!("block{i}.ln_gcn.gain"), row(&bl.ln_gcn.gain)));
            out.push((format!("block{i}.ln_gcn.bias"), row(&bl.ln_gcn.bias)));
            out.push((format!("block{i}.ln_ff.gain"), row(&bl.ln_ff.gain)));
            out.push((format!("block{i}.ln_ff.bias"), row(&bl.ln_ff.bias)));
        }
        out
    }

    pub fn save(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("depgcn-params v1\n");
        let _ = writeln!(out, "dim {}", self.dim());
        let _ = writeln!(out, "ff_dim {}", self.ff_dim());
        let _ = writeln!(out, "labels {}", self.label_count());
        let _ = writeln!(out, "blocks {}", self.block_count());
        let _ = writeln!(out, "beta {}", self.beta);
        for (name, tensor) in self.tensors() {
            let _ = writeln!(out, "tensor {name} {} {}", tensor.nrows(), tensor.ncols());
            for r in tensor.rows() {
                let line: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
                let _ = writeln!(out, "{}", line.join(" "));
            }
        }
        out
    }

    pub fn load(text: &str) -> Result<Self, FormatError> {
        let mut cur = Cursor {
            lines: text.lines().collect(),
            next: 0,
        };
        let magic = cur.take("file header")?;
        if magic.trim() != "depgcn-params v1" {
            return Err(cur.malformed("expected header `depgcn-params v1`"));
        }
        let dim = cur.scalar("dim")? as usize;
        let ff_dim = cur.scalar("ff_dim")? as usize;
        let labels = cur.scalar("labels")? as usize;
        let blocks = cur.scalar("blocks")? as usize;
        let beta = cur.scalar("beta")?;

        let label_table = cur.tensor("label_table", labels, dim)?;
        let mut block_list = Vec::with_capacity(blocks);
        for b in 0..blocks {
            let w = cur.tensor(&format!("block{b}.w"), dim, 2 * dim)?;
            let bias = cur
                .tensor(&format!("block{b}.b"), 1, dim)?
                .row(0)
                .to_owned();
            let w1 = cur.tensor(&format!("block{b}.ff.w1"), ff_dim, dim)?;
            let b1 = cur
                .tensor(&format!("block{b}.ff.b1"), 1, ff_dim)?
                .row(0)
                .to_owned();
            let w2 = cur.tensor(&format!("block{b}.ff.w2"), dim, ff_dim)?;
            let b2 = cur
                .tensor(&format!("block{b}.ff.b2"), 1, dim)?
                .row(0)
                .to_owned();
            let g1 = cur
                .tensor(&format!("block{b}.ln_gcn.gain"), 1, dim)?
                .row(0)
                .to_owned();
            let i1 = cur
                .tensor(&format!("block{b}.ln_gcn.bias"), 1, dim)?
                .row(0)
                .to_owned();
            let g2 = cur
                .tensor(&format!("block{b}.ln_ff.gain"), 1, dim)?
                .row(0)
                .to_owned();
            let i2 = cur
                .tensor(&format!("block{b}.ln_ff.bias"), 1, dim)?
                .row(0)
                .to_owned();
            block_list.push(GcnBlock {
                w,
                b: bias,
                ff: FeedForward { w1, b1, w2, b2 },
                ln_gcn: LayerNorm { gain: g1, bias: i1 },
                ln_ff: LayerNorm { gain: g2, bias: i2 },
            });
        }
        Ok(GcnParams {
            label_table,
            blocks: block_list,
            beta,
        })
    }
}

struct Cursor<'a> {
    lines: Vec<&'a str>,
    next: usize,
}

impl<'a> Cursor<'a> {
    fn malformed(&self, msg: &str) -> FormatError {
        FormatError::Malformed {
            line: self.next,
            msg: msg.to_string(),
        }
    }

    fn take(&mut self, what: &str) -> Result<&'a str, FormatError> {
        let line = self
            .lines
            .get(self.next)
            .copied()
            .ok_or_else(|| self.malformed(&format!("unexpected end of file, wanted {what}")))?;
        self.next += 1;
        Ok(line)
    }

    fn scalar(&mut self, key: &str) -> Result<f64, FormatError> {
        let line = self.take(key)?;
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next()) {
            (Some(k), Some(v)) if k == key => v
                .parse::<f64>()
                .map_err(|_| self.malformed(&format!("bad value for {key}"))),
            _ => Err(self.malformed(&format!("expected `{key} <value>`"))),
        }
    }

    fn tensor(&mut self, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>, FormatError> {
        let header = self.take("tensor header")?;
        let expect = format!("tensor {name} {rows} {cols}");
        if header.trim() != expect {
            return Err(self.malformed(&format!("expected `{expect}`, found `{header}`")));
        }
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = self.take("tensor row")?;
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| self.malformed(&format!("bad float `{tok}` in {name}")))?;
                values.push(v);
            }
            if values.len() % cols != 0 {
                return Err(self.malformed(&format!("row width mismatch in {name}")));
            }
        }
        if values.len() != rows * cols {
            return Err(self.malformed(&format!("value count mismatch in {name}")));
        }
        Ok(Array2::from_shape_vec((rows, cols), values).expect("count checked"))
    }
}
