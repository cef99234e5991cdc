//! Straight-line re-implementations of every stack operation, written with
//! explicit index loops and no matrix routines.
//!
//! These exist purely as an independent second route for verification: the
//! public ops in the parent module must agree with them elementwise to
//! double precision on randomized instances (see [`crate::verify`] and the
//! acceptance tests). Keep this module free of `dot`/BLAS calls so the two
//! routes stay independent.

use ndarray::{Array1, Array2};

use super::params::{FeedForward, GcnBlock, GcnParams, LayerNorm};
use super::LAYER_NORM_EPS;
use crate::granularity::ArcMatrix;

pub fn gcn_layer(
    h: &Array2<f64>,
    arcs: &ArcMatrix,
    w: &Array2<f64>,
    b: &Array1<f64>,
    table: &Array2<f64>,
) -> Array2<f64> {
    let (n, d) = h.dim();
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        for k in 0..d {
            let mut acc = 0.0;
            for j in 0..n {
                // W (h_j ++ e_j), component k
                let mut wx = 0.0;
                for c in 0..d {
                    wx += w[(k, c)] * h[(j, c)];
                    wx += w[(k, d + c)] * table[(arcs.label_ids[j], c)];
                }
                acc += arcs.weights[(i, j)] * wx;
            }
            acc += b[k];
            out[(i, k)] = if acc > 0.0 { acc } else { 0.0 };
        }
    }
    out
}

pub fn feed_forward(h: &Array2<f64>, ff: &FeedForward) -> Array2<f64> {
    let (n, d) = h.dim();
    let d_ff = ff.w1.nrows();
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        let mut hidden = vec![0.0; d_ff];
        for (m, slot) in hidden.iter_mut().enumerate() {
            let mut acc = ff.b1[m];
            for c in 0..d {
                acc += ff.w1[(m, c)] * h[(i, c)];
            }
            *slot = if acc > 0.0 { acc } else { 0.0 };
        }
        for k in 0..d {
            let mut acc = ff.b2[k];
            for (m, v) in hidden.iter().enumerate() {
                acc += ff.w2[(k, m)] * v;
            }
            out[(i, k)] = acc;
        }
    }
    out
}

pub fn layer_norm(x: &Array2<f64>, ln: &LayerNorm) -> Array2<f64> {
    let (n, d) = x.dim();
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        let mut mean = 0.0;
        for k in 0..d {
            mean += x[(i, k)];
        }
        mean /= d as f64;
        let mut var = 0.0;
        for k in 0..d {
            let diff = x[(i, k)] - mean;
            var += diff * diff;
        }
        var /= d as f64;
        let sigma = (var + LAYER_NORM_EPS).sqrt();
        for k in 0..d {
            out[(i, k)] = (x[(i, k)] - mean) / sigma * ln.gain[k] + ln.bias[k];
        }
    }
    out
}

pub fn sublayer_wrap(x: &Array2<f64>, fx: &Array2<f64>, ln: &LayerNorm) -> Array2<f64> {
    let (n, d) = x.dim();
    let mut sum = Array2::zeros((n, d));
    for i in 0..n {
        for k in 0..d {
            sum[(i, k)] = x[(i, k)] + fx[(i, k)];
        }
    }
    layer_norm(&sum, ln)
}

pub fn block(x: &Array2<f64>, arcs: &ArcMatrix, bl: &GcnBlock, table: &Array2<f64>) -> Array2<f64> {
    let after_gcn = sublayer_wrap(x, &gcn_layer(x, arcs, &bl.w, &bl.b, table), &bl.ln_gcn);
    sublayer_wrap(&after_gcn, &feed_forward(&after_gcn, &bl.ff), &bl.ln_ff)
}

pub fn depgcn_stack(h: &Array2<f64>, arcs: &ArcMatrix, params: &GcnParams) -> Array2<f64> {
    let mut cur = h.clone();
    for bl in &params.blocks {
        cur = block(&cur, arcs, bl, &params.label_table);
    }
    cur
}

pub fn fuse(h_basic: &Array2<f64>, h_syn: &Array2<f64>, beta: f64) -> Array2<f64> {
    let (n, d) = h_basic.dim();
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        for k in 0..d {
            out[(i, k)] = beta * h_basic[(i, k)] + (1.0 - beta) * h_syn[(i, k)];
        }
    }
    out
}
