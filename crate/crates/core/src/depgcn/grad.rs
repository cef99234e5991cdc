//! Hand-written reverse-mode gradients for every stack operation, checked
//! against central finite differences of a scalar loss (the sum of all
//! output entries).
//!
//! Instances are drawn so that every ReLU pre-activation stays clearly away
//! from zero; otherwise a finite-difference step could cross the kink and
//! the comparison would be meaningless. The reported error is
//! `|analytic - numeric| / max(1, |analytic| + |numeric|)`, maximized over
//! every parameter and input scalar.

use ndarray::{Array1, Array2, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::params::{FeedForward, GcnBlock, GcnParams, LayerNorm};
use super::{depgcn_stack, feed_forward, fuse, gcn_layer, sublayer_wrap, LAYER_NORM_EPS};
use crate::error::DepGcnError;
use crate::granularity::ArcMatrix;

/// Default step for central differences.
pub const DEFAULT_EPS: f64 = 1e-5;

/// Minimum distance of any ReLU pre-activation from zero in sampled
/// instances.
const KINK_MARGIN: f64 = 1e-3;

/// Outcome of one gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckResult {
    pub op: String,
    pub max_rel_err: f64,
    /// Scalar with the worst agreement, as `tensor[flat_index]`.
    pub worst: String,
    /// Number of scalars compared.
    pub checked: usize,
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / f64::max(1.0, analytic.abs() + numeric.abs())
}

type LossFn<'a> = Box<dyn Fn(&[f64]) -> f64 + 'a>;

struct FlatCheck<'a> {
    segments: Vec<(String, usize)>,
    values: Vec<f64>,
    analytic: Vec<f64>,
    loss: LossFn<'a>,
}

fn segment_name(segments: &[(String, usize)], mut index: usize) -> String {
    for (name, len) in segments {
        if index < *len {
            return format!("{name}[{index}]");
        }
        index -= len;
    }
    "?".to_string()
}

fn run_flat(op: &str, check: FlatCheck<'_>, eps: f64) -> Result<GradCheckResult, DepGcnError> {
    assert_eq!(check.values.len(), check.analytic.len());
    for (i, v) in check.analytic.iter().enumerate() {
        if !v.is_finite() {
            return Err(DepGcnError::NonFinite(format!(
                "gradient of {}",
                segment_name(&check.segments, i)
            )));
        }
    }
    let mut values = check.values.clone();
    let mut max_rel_err = 0.0;
    let mut worst = String::from("-");
    for i in 0..values.len() {
        let orig = values[i];
        values[i] = orig + eps;
        let plus = (check.loss)(&values);
        values[i] = orig - eps;
        let minus = (check.loss)(&values);
        values[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let e = rel_err(check.analytic[i], numeric);
        if e > max_rel_err {
            max_rel_err = e;
            worst = segment_name(&check.segments, i);
        }
    }
    Ok(GradCheckResult {
        op: op.to_string(),
        max_rel_err,
        worst,
        checked: values.len(),
    })
}

fn take2(v: &[f64], r: usize, c: usize) -> (Array2<f64>, &[f64]) {
    let (head, rest) = v.split_at(r * c);
    (
        Array2::from_shape_vec((r, c), head.to_vec()).expect("sized"),
        rest,
    )
}

fn take1(v: &[f64], len: usize) -> (Array1<f64>, &[f64]) {
    let (head, rest) = v.split_at(len);
    (Array1::from_vec(head.to_vec()), rest)
}

fn sample_mat(rng: &mut impl Rng, r: usize, c: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.gen_range(lo..hi))
}

fn sample_vec(rng: &mut impl Rng, len: usize, lo: f64, hi: f64) -> Array1<f64> {
    Array1::from_shape_fn(len, |_| rng.gen_range(lo..hi))
}

fn sample_arcs(rng: &mut impl Rng, n: usize, labels: usize) -> ArcMatrix {
    ArcMatrix {
        weights: sample_mat(rng, n, n, 0.0, 1.0),
        label_ids: (0..n).map(|_| rng.gen_range(0..labels)).collect(),
    }
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

fn kink_margin(values: impl IntoIterator<Item = f64>) -> f64 {
    values
        .into_iter()
        .map(f64::abs)
        .fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------------------
// Cached forwards and structured backwards
// ---------------------------------------------------------------------------

struct GcnCache {
    m: Array2<f64>,
    z: Array2<f64>,
    p: Array2<f64>,
}

fn gcn_forward_cache(
    h: &Array2<f64>,
    arcs: &ArcMatrix,
    w: &Array2<f64>,
    b: &Array1<f64>,
    table: &Array2<f64>,
) -> GcnCache {
    let (n, d) = h.dim();
    let mut m = Array2::zeros((n, 2 * d));
    for j in 0..n {
        for c in 0..d {
            m[(j, c)] = h[(j, c)];
            m[(j, d + c)] = table[(arcs.label_ids[j], c)];
        }
    }
    let z = m.dot(&w.t());
    let p = arcs.weights.dot(&z) + b.view().insert_axis(Axis(0));
    GcnCache { m, z, p }
}

struct GcnGrads {
    d_h: Array2<f64>,
    d_a: Array2<f64>,
    d_w: Array2<f64>,
    d_b: Array1<f64>,
    d_table: Array2<f64>,
}

fn gcn_backward(
    cache: &GcnCache,
    arcs: &ArcMatrix,
    w: &Array2<f64>,
    table_rows: usize,
    d_out: &Array2<f64>,
) -> GcnGrads {
    let (n, d) = d_out.dim();
    let mut d_p = d_out.clone();
    for i in 0..n {
        for k in 0..d {
            if cache.p[(i, k)] <= 0.0 {
                d_p[(i, k)] = 0.0;
            }
        }
    }
    let d_b = d_p.sum_axis(Axis(0));
    let d_a = d_p.dot(&cache.z.t());
    let d_z = arcs.weights.t().dot(&d_p);
    let d_w = d_z.t().dot(&cache.m);
    let d_m = d_z.dot(w);
    let mut d_h = Array2::zeros((n, d));
    let mut d_table = Array2::zeros((table_rows, d));
    for j in 0..n {
        for c in 0..d {
            d_h[(j, c)] = d_m[(j, c)];
            d_table[(arcs.label_ids[j], c)] += d_m[(j, d + c)];
        }
    }
    GcnGrads {
        d_h,
        d_a,
        d_w,
        d_b,
        d_table,
    }
}

struct FfCache {
    u: Array2<f64>,
    v: Array2<f64>,
}

fn ff_forward_cache(h: &Array2<f64>, ff: &FeedForward) -> FfCache {
    let u = h.dot(&ff.w1.t()) + ff.b1.view().insert_axis(Axis(0));
    let v = u.mapv(|x| x.max(0.0));
    FfCache { u, v }
}

struct FfGrads {
    d_h: Array2<f64>,
    d_w1: Array2<f64>,
    d_b1: Array1<f64>,
    d_w2: Array2<f64>,
    d_b2: Array1<f64>,
}

fn ff_backward(cache: &FfCache, h: &Array2<f64>, ff: &FeedForward, d_out: &Array2<f64>) -> FfGrads {
    let d_b2 = d_out.sum_axis(Axis(0));
    let d_w2 = d_out.t().dot(&cache.v);
    let mut d_u = d_out.dot(&ff.w2);
    for (du, &u) in d_u.iter_mut().zip(cache.u.iter()) {
        if u <= 0.0 {
            *du = 0.0;
        }
    }
    let d_w1 = d_u.t().dot(h);
    let d_b1 = d_u.sum_axis(Axis(0));
    let d_h = d_u.dot(&ff.w1);
    FfGrads {
        d_h,
        d_w1,
        d_b1,
        d_w2,
        d_b2,
    }
}

struct LnCache {
    xhat: Array2<f64>,
    sigma: Array1<f64>,
}

fn ln_forward_cache(u: &Array2<f64>, ln: &LayerNorm) -> (Array2<f64>, LnCache) {
    let (n, d) = u.dim();
    let mut out = Array2::zeros((n, d));
    let mut xhat = Array2::zeros((n, d));
    let mut sigma = Array1::zeros(n);
    for i in 0..n {
        let row = u.row(i);
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let s = (var + LAYER_NORM_EPS).sqrt();
        sigma[i] = s;
        for k in 0..d {
            let norm = (u[(i, k)] - mean) / s;
            xhat[(i, k)] = norm;
            out[(i, k)] = norm * ln.gain[k] + ln.bias[k];
        }
    }
    (out, LnCache { xhat, sigma })
}

struct LnGrads {
    d_u: Array2<f64>,
    d_gain: Array1<f64>,
    d_bias: Array1<f64>,
}

fn ln_backward(cache: &LnCache, ln: &LayerNorm, d_y: &Array2<f64>) -> LnGrads {
    let (n, d) = d_y.dim();
    let mut d_gain = Array1::zeros(d);
    let mut d_bias = Array1::zeros(d);
    let mut d_u = Array2::zeros((n, d));
    for i in 0..n {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for k in 0..d {
            let dxh = d_y[(i, k)] * ln.gain[k];
            m1 += dxh;
            m2 += dxh * cache.xhat[(i, k)];
            d_gain[k] += d_y[(i, k)] * cache.xhat[(i, k)];
            d_bias[k] += d_y[(i, k)];
        }
        m1 /= d as f64;
        m2 /= d as f64;
        for k in 0..d {
            let dxh = d_y[(i, k)] * ln.gain[k];
            d_u[(i, k)] = (dxh - m1 - cache.xhat[(i, k)] * m2) / cache.sigma[i];
        }
    }
    LnGrads {
        d_u,
        d_gain,
        d_bias,
    }
}

struct BlockGrads {
    w: Array2<f64>,
    b: Array1<f64>,
    ff_w1: Array2<f64>,
    ff_b1: Array1<f64>,
    ff_w2: Array2<f64>,
    ff_b2: Array1<f64>,
    ln_gcn_gain: Array1<f64>,
    ln_gcn_bias: Array1<f64>,
    ln_ff_gain: Array1<f64>,
    ln_ff_bias: Array1<f64>,
}

struct BlockCache {
    gcn: GcnCache,
    ln1: LnCache,
    x_mid: Array2<f64>,
    ff: FfCache,
    ln2: LnCache,
}

fn block_forward_cache(
    x: &Array2<f64>,
    arcs: &ArcMatrix,
    bl: &GcnBlock,
    table: &Array2<f64>,
) -> (Array2<f64>, BlockCache) {
    let gcn = gcn_forward_cache(x, arcs, &bl.w, &bl.b, table);
    let gcn_out = gcn.p.mapv(|v| v.max(0.0));
    let (x_mid, ln1) = ln_forward_cache(&(x + &gcn_out), &bl.ln_gcn);
    let ff = ff_forward_cache(&x_mid, &bl.ff);
    let ff_out = ff.v.dot(&bl.ff.w2.t()) + bl.ff.b2.view().insert_axis(Axis(0));
    let (out, ln2) = ln_forward_cache(&(&x_mid + &ff_out), &bl.ln_ff);
    (
        out,
        BlockCache {
            gcn,
            ln1,
            x_mid,
            ff,
            ln2,
        },
    )
}

fn block_backward(
    cache: &BlockCache,
    arcs: &ArcMatrix,
    bl: &GcnBlock,
    table_rows: usize,
    d_out: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>, BlockGrads) {
    let ln2 = ln_backward(&cache.ln2, &bl.ln_ff, d_out);
    let ffg = ff_backward(&cache.ff, &cache.x_mid, &bl.ff, &ln2.d_u);
    let d_x_mid = &ln2.d_u + &ffg.d_h;
    let ln1 = ln_backward(&cache.ln1, &bl.ln_gcn, &d_x_mid);
    let gcg = gcn_backward(&cache.gcn, arcs, &bl.w, table_rows, &ln1.d_u);
    let d_x_in = &ln1.d_u + &gcg.d_h;
    let grads = BlockGrads {
        w: gcg.d_w,
        b: gcg.d_b,
        ff_w1: ffg.d_w1,
        ff_b1: ffg.d_b1,
        ff_w2: ffg.d_w2,
        ff_b2: ffg.d_b2,
        ln_gcn_gain: ln1.d_gain,
        ln_gcn_bias: ln1.d_bias,
        ln_ff_gain: ln2.d_gain,
        ln_ff_bias: ln2.d_bias,
    };
    (d_x_in, gcg.d_a, gcg.d_table, grads)
}

// ---------------------------------------------------------------------------
// Per-op checks
// ---------------------------------------------------------------------------

/// Interpolation: the derivative in the fusion factor is the summed
/// difference of the operands.
pub fn grad_check_fuse(seed: u64, eps: f64) -> Result<GradCheckResult, DepGcnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d) = (3, 4);
    let hb = sample_mat(&mut rng, n, d, -1.0, 1.0);
    let hs = sample_mat(&mut rng, n, d, -1.0, 1.0);
    let beta = 0.37;

    let mut segments = Vec::new();
    let mut values = Vec::new();
    let mut analytic = Vec::new();
    segments.push(("h_basic".to_string(), n * d));
    values.extend(hb.iter());
    analytic.extend(std::iter::repeat_n(beta, n * d));
    segments.push(("h_syn".to_string(), n * d));
    values.extend(hs.iter());
    analytic.extend(std::iter::repeat_n(1.0 - beta, n * d));
    segments.push(("beta".to_string(), 1));
    values.push(beta);
    analytic.push((&hb - &hs).sum());

    let loss = move |v: &[f64]| {
        let (hb, rest) = take2(v, n, d);
        let (hs, rest) = take2(rest, n, d);
        fuse(&hb, &hs, rest[0]).expect("shapes fixed").sum()
    };
    run_flat(
        "fuse",
        FlatCheck {
            segments,
            values,
            analytic,
            loss: Box::new(loss),
        },
        eps,
    )
}

pub fn grad_check_gcn_layer(seed: u64, eps: f64) -> Result<GradCheckResult, DepGcnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d, labels) = (3, 4, 5);
    let (h, arcs, w, b, table) = loop {
        let h = sample_mat(&mut rng, n, d, -1.0, 1.0);
        let arcs = sample_arcs(&mut rng, n, labels);
        let w = sample_mat(&mut rng, d, 2 * d, -0.6, 0.6);
        let b = sample_vec(&mut rng, d, -0.5, 0.5);
        let table = sample_mat(&mut rng, labels, d, -0.6, 0.6);
        let cache = gcn_forward_cache(&h, &arcs, &w, &b, &table);
        if kink_margin(cache.p.iter().copied()) > KINK_MARGIN {
            break (h, arcs, w, b, table);
        }
    };

    let cache = gcn_forward_cache(&h, &arcs, &w, &b, &table);
    let ones = Array2::ones((n, d));
    let grads = gcn_backward(&cache, &arcs, &w, labels, &ones);

    let mut segments = Vec::new();
    let mut values = Vec::new();
    let mut analytic = Vec::new();
    for (name, vals, grad) in [
        (
            "h",
            h.iter().collect::<Vec<_>>(),
            grads.d_h.iter().collect::<Vec<_>>(),
        ),
        (
            "arcs",
            arcs.weights.iter().collect(),
            grads.d_a.iter().collect(),
        ),
        ("w", w.iter().collect(), grads.d_w.iter().collect()),
        (
            "table",
            table.iter().collect(),
            grads.d_table.iter().collect(),
        ),
    ] {
        segments.push((name.to_string(), vals.len()));
        values.extend(vals.into_iter().copied());
        analytic.extend(grad.into_iter().copied());
    }
    segments.push(("b".to_string(), d));
    values.extend(b.iter());
    analytic.extend(grads.d_b.iter());

    let ids = arcs.label_ids.clone();
    let loss = move |v: &[f64]| {
        let (h, rest) = take2(v, n, d);
        let (aw, rest) = take2(rest, n, n);
        let (w, rest) = take2(rest, d, 2 * d);
        let (table, rest) = take2(rest, labels, d);
        let (b, _) = take1(rest, d);
        let arcs = ArcMatrix {
            weights: aw,
            label_ids: ids.clone(),
        };
        gcn_layer(&h, &arcs, &w, &b, &table)
            .expect("shapes fixed")
            .sum()
    };
    run_flat(
        "gcn_layer",
        FlatCheck {
            segments,
            values,
            analytic,
            loss: Box::new(loss),
        },
        eps,
    )
}

pub fn grad_check_feed_forward(seed: u64, eps: f64) -> Result<GradCheckResult, DepGcnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d, d_ff) = (3, 4, 6);
    let (h, ff) = loop {
        let h = sample_mat(&mut rng, n, d, -1.0, 1.0);
        let ff = FeedForward {
            w1: sample_mat(&mut rng, d_ff, d, -0.6, 0.6),
            b1: sample_vec(&mut rng, d_ff, -0.5, 0.5),
            w2: sample_mat(&mut rng, d, d_ff, -0.6, 0.6),
            b2: sample_vec(&mut rng, d, -0.5, 0.5),
        };
        let cache = ff_forward_cache(&h, &ff);
        if kink_margin(cache.u.iter().copied()) > KINK_MARGIN {
            break (h, ff);
        }
    };

    let cache = ff_forward_cache(&h, &ff);
    let ones = Array2::ones((n, d));
    let grads = ff_backward(&cache, &h, &ff, &ones);

    let mut segments = Vec::new();
    let mut values = Vec::new();
    let mut analytic = Vec::new();
    segments.push(("h".to_string(), n * d));
    values.extend(h.iter());
    analytic.extend(grads.d_h.iter());
    segments.push(("w1".to_string(), d_ff * d));
    values.extend(ff.w1.iter());
    analytic.extend(grads.d_w1.iter());
    segments.push(("b1".to_string(), d_ff));
    values.extend(ff.b1.iter());
    analytic.extend(grads.d_b1.iter());
    segments.push(("w2".to_string(), d * d_ff));
    values.extend(ff.w2.iter());
    analytic.extend(grads.d_w2.iter());
    segments.push(("b2".to_string(), d));
    values.extend(ff.b2.iter());
    analytic.extend(grads.d_b2.iter());

    let loss = move |v: &[f64]| {
        let (h, rest) = take2(v, n, d);
        let (w1, rest) = take2(rest, d_ff, d);
        let (b1, rest) = take1(rest, d_ff);
        let (w2, rest) = take2(rest, d, d_ff);
        let (b2, _) = take1(rest, d);
        feed_forward(&h, &FeedForward { w1, b1, w2, b2 })
            .expect("shapes fixed")
            .sum()
    };
    run_flat(
        "feed_forward",
        FlatCheck {
            segments,
            values,
            analytic,
            loss: Box::new(loss),
        },
        eps,
    )
}

/// Residual + layer norm around the feed-forward sub-layer.
pub fn grad_check_sublayer(seed: u64, eps: f64) -> Result<GradCheckResult, DepGcnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d, d_ff) = (3, 4, 6);
    let (h, ff, ln) = loop {
        let h = sample_mat(&mut rng, n, d, -1.0, 1.0);
        let ff = FeedForward {
            w1: sample_mat(&mut rng, d_ff, d, -0.6, 0.6),
            b1: sample_vec(&mut rng, d_ff, -0.5, 0.5),
            w2: sample_mat(&mut rng, d, d_ff, -0.6, 0.6),
            b2: sample_vec(&mut rng, d, -0.5, 0.5),
        };
        let ln = LayerNorm {
            gain: sample_vec(&mut rng, d, 0.5, 1.5),
            bias: sample_vec(&mut rng, d, -0.5, 0.5),
        };
        let cache = ff_forward_cache(&h, &ff);
        if kink_margin(cache.u.iter().copied()) > KINK_MARGIN {
            break (h, ff, ln);
        }
    };

    let ff_cache = ff_forward_cache(&h, &ff);
    let ff_out = ff_cache.v.dot(&ff.w2.t()) + ff.b2.view().insert_axis(Axis(0));
    let (_, ln_cache) = ln_forward_cache(&(&h + &ff_out), &ln);
    let ones = Array2::ones((n, d));
    let lng = ln_backward(&ln_cache, &ln, &ones);
    let ffg = ff_backward(&ff_cache, &h, &ff, &lng.d_u);
    let d_h = &lng.d_u + &ffg.d_h;

    let mut segments = Vec::new();
    let mut values = Vec::new();
    let mut analytic = Vec::new();
    segments.push(("h".to_string(), n * d));
    values.extend(h.iter());
    analytic.extend(d_h.iter());
    segments.push(("w1".to_string(), d_ff * d));
    values.extend(ff.w1.iter());
    analytic.extend(ffg.d_w1.iter());
    segments.push(("b1".to_string(), d_ff));
    values.extend(ff.b1.iter());
    analytic.extend(ffg.d_b1.iter());
    segments.push(("w2".to_string(), d * d_ff));
    values.extend(ff.w2.iter());
    analytic.extend(ffg.d_w2.iter());
    segments.push(("b2".to_string(), d));
    values.extend(ff.b2.iter());
    analytic.extend(ffg.d_b2.iter());
    segments.push(("gain".to_string(), d));
    values.extend(ln.gain.iter());
    analytic.extend(lng.d_gain.iter());
    segments.push(("bias".to_string(), d));
    values.extend(ln.bias.iter());
    analytic.extend(lng.d_bias.iter());

    let loss = move |v: &[f64]| {
        let (h, rest) = take2(v, n, d);
        let (w1, rest) = take2(rest, d_ff, d);
        let (b1, rest) = take1(rest, d_ff);
        let (w2, rest) = take2(rest, d, d_ff);
        let (b2, rest) = take1(rest, d);
        let (gain, rest) = take1(rest, d);
        let (bias, _) = take1(rest, d);
        let ff = FeedForward { w1, b1, w2, b2 };
        sublayer_wrap(&h, |x| feed_forward(x, &ff), &LayerNorm { gain, bias })
            .expect("shapes fixed")
            .sum()
    };
    run_flat(
        "sublayer_wrap",
        FlatCheck {
            segments,
            values,
            analytic,
            loss: Box::new(loss),
        },
        eps,
    )
}

/// Full stack of `blocks` blocks, every tensor included.
pub fn grad_check_stack(
    blocks: usize,
    seed: u64,
    eps: f64,
) -> Result<GradCheckResult, DepGcnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d, d_ff, labels) = (3, 4, 6, 5);
    let (h, arcs, params) = 'outer: loop {
        let h = sample_mat(&mut rng, n, d, -1.0, 1.0);
        let arcs = sample_arcs(&mut rng, n, labels);
        let params = GcnParams {
            label_table: sample_mat(&mut rng, labels, d, -0.6, 0.6),
            blocks: (0..blocks)
                .map(|_| sample_block(&mut rng, d, d_ff))
                .collect(),
            beta: 0.5,
        };
        let mut x = h.clone();
        for bl in &params.blocks {
            let (out, cache) = block_forward_cache(&x, &arcs, bl, &params.label_table);
            if kink_margin(cache.gcn.p.iter().copied()) <= KINK_MARGIN
                || kink_margin(cache.ff.u.iter().copied()) <= KINK_MARGIN
            {
                continue 'outer;
            }
            x = out;
        }
        break (h, arcs, params);
    };

    // forward with caches, then reverse through the blocks
    let mut caches = Vec::with_capacity(blocks);
    let mut x = h.clone();
    for bl in &params.blocks {
        let (out, cache) = block_forward_cache(&x, &arcs, bl, &params.label_table);
        caches.push(cache);
        x = out;
    }
    let mut d_x = Array2::ones((n, d));
    let mut d_a = Array2::zeros((n, n));
    let mut d_table = Array2::zeros((labels, d));
    let mut block_grads: Vec<BlockGrads> = Vec::with_capacity(blocks);
    for (bl, cache) in params.blocks.iter().zip(&caches).rev() {
        let (d_in, da, dt, grads) = block_backward(cache, &arcs, bl, labels, &d_x);
        d_x = d_in;
        d_a = d_a + da;
        d_table = d_table + dt;
        block_grads.push(grads);
    }
    block_grads.reverse();

    let mut segments = Vec::new();
    let mut values = Vec::new();
    let mut analytic = Vec::new();
    segments.push(("h".to_string(), n * d));
    values.extend(h.iter());
    analytic.extend(d_x.iter());
    segments.push(("arcs".to_string(), n * n));
    values.extend(arcs.weights.iter());
    analytic.extend(d_a.iter());
    segments.push(("label_table".to_string(), labels * d));
    values.extend(params.label_table.iter());
    analytic.extend(d_table.iter());
    for (i, (bl, g)) in params.blocks.iter().zip(&block_grads).enumerate() {
        let mut seg = |name: &str, vals: Vec<f64>, grads: Vec<f64>| {
            segments.push((format!("block{i}.{name}"), vals.len()));
            values.extend(vals);
            analytic.extend(grads);
        };
        seg(
            "w",
            bl.w.iter().copied().collect(),
            g.w.iter().copied().collect(),
        );
        seg("b", bl.b.to_vec(), g.b.to_vec());
        seg(
            "ff.w1",
            bl.ff.w1.iter().copied().collect(),
            g.ff_w1.iter().copied().collect(),
        );
        seg("ff.b1", bl.ff.b1.to_vec(), g.ff_b1.to_vec());
        seg(
            "ff.w2",
            bl.ff.w2.iter().copied().collect(),
            g.ff_w2.iter().copied().collect(),
        );
        seg("ff.b2", bl.ff.b2.to_vec(), g.ff_b2.to_vec());
        seg(
            "ln_gcn.gain",
            bl.ln_gcn.gain.to_vec(),
            g.ln_gcn_gain.to_vec(),
        );
        seg(
            "ln_gcn.bias",
            bl.ln_gcn.bias.to_vec(),
            g.ln_gcn_bias.to_vec(),
        );
        seg("ln_ff.gain", bl.ln_ff.gain.to_vec(), g.ln_ff_gain.to_vec());
        seg("ln_ff.bias", bl.ln_ff.bias.to_vec(), g.ln_ff_bias.to_vec());
    }

    let ids = arcs.label_ids.clone();
    let loss = move |v: &[f64]| {
        let (h, rest) = take2(v, n, d);
        let (aw, rest) = take2(rest, n, n);
        let (table, mut rest) = take2(rest, labels, d);
        let mut bls = Vec::with_capacity(blocks);
        for _ in 0..blocks {
            let (w, r) = take2(rest, d, 2 * d);
            let (b, r) = take1(r, d);
            let (w1, r) = take2(r, d_ff, d);
            let (b1, r) = take1(r, d_ff);
            let (w2, r) = take2(r, d, d_ff);
            let (b2, r) = take1(r, d);
            let (g1, r) = take1(r, d);
            let (i1, r) = take1(r, d);
            let (g2, r) = take1(r, d);
            let (i2, r) = take1(r, d);
            rest = r;
            bls.push(GcnBlock {
                w,
                b,
                ff: FeedForward { w1, b1, w2, b2 },
                ln_gcn: LayerNorm { gain: g1, bias: i1 },
                ln_ff: LayerNorm { gain: g2, bias: i2 },
            });
        }
        let params = GcnParams {
            label_table: table,
            blocks: bls,
            beta: 0.5,
        };
        let arcs = ArcMatrix {
            weights: aw,
            label_ids: ids.clone(),
        };
        depgcn_stack(&h, &arcs, &params)
            .expect("shapes fixed")
            .sum()
    };
    run_flat(
        &format!("depgcn_stack[{blocks}]"),
        FlatCheck {
            segments,
            values,
            analytic,
            loss: Box::new(loss),
        },
        eps,
    )
}

/// Runs every gradient check once.
pub fn run_gradient_suite(seed: u64, eps: f64) -> Result<Vec<GradCheckResult>, DepGcnError> {
    Ok(vec![
        grad_check_fuse(seed, eps)?,
        grad_check_gcn_layer(seed.wrapping_add(1), eps)?,
        grad_check_feed_forward(seed.wrapping_add(2), eps)?,
        grad_check_sublayer(seed.wrapping_add(3), eps)?,
        grad_check_stack(2, seed.wrapping_add(4), eps)?,
    ])
}
