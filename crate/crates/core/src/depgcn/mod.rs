//! Label-aware graph convolution over dependency structure, with residual
//! blocks and representation fusion.
//!
//! A block is a GCN sub-layer followed by a position-wise feed-forward
//! sub-layer, each wrapped in a residual connection and layer
//! normalization. The GCN sub-layer aggregates, for every token, its
//! arc-weighted head context together with the embedding of each
//! neighbour's best head label:
//!
//! ```text
//! out_i = ReLU( sum_j A[i][j] * W (h_j ++ e_j)  +  b )
//! ```
//!
//! where `A[i][j]` weights token `j` as head of token `i` (soft adjacency,
//! consumed exactly as given — no self-loops are added) and `e_j` is the
//! label-table row for token `j`'s label id. The bias is added once,
//! outside the sum, so it does not scale with row mass.
//!
//! The stack output is fused with the original states by interpolation:
//! `beta * basic + (1 - beta) * syntactic`.
//!
//! Everything here is double precision and verified two ways: against
//! explicit-loop re-implementations in [`mod@reference`], and by central
//! differences against hand-written gradients in [`grad`].

pub mod grad;
pub mod params;
pub mod reference;

use ndarray::{Array2, Axis};

pub use params::{FeedForward, GcnBlock, GcnParams, LayerNorm};

use crate::error::DepGcnError;
use crate::granularity::ArcMatrix;

/// Per-sentence hidden states: row `i` is the representation of token `i`.
pub type HiddenStates = Array2<f64>;

/// Epsilon inside the layer-normalization square root.
pub const LAYER_NORM_EPS: f64 = 1e-5;

fn ensure_finite(name: &str, values: impl IntoIterator<Item = f64>) -> Result<(), DepGcnError> {
    for v in values {
        if !v.is_finite() {
            return Err(DepGcnError::NonFinite(name.to_string()));
        }
    }
    Ok(())
}

fn relu_inplace(m: &mut Array2<f64>) {
    m.mapv_inplace(|v| v.max(0.0));
}

/// Concatenates each hidden row with its label embedding: `n x 2d`.
fn concat_labels(
    h: &HiddenStates,
    label_ids: &[usize],
    table: &Array2<f64>,
) -> Result<Array2<f64>, DepGcnError> {
    let (n, d) = h.dim();
    if table.ncols() != d {
        return Err(DepGcnError::Shape(format!(
            "label table width {} != hidden size {d}",
            table.ncols()
        )));
    }
    let mut m = Array2::zeros((n, 2 * d));
    for j in 0..n {
        let id = label_ids[j];
        if id >= table.nrows() {
            return Err(DepGcnError::Shape(format!(
                "label id {id} outside table of {} labels",
                table.nrows()
            )));
        }
        for c in 0..d {
            m[(j, c)] = h[(j, c)];
            m[(j, d + c)] = table[(id, c)];
        }
    }
    Ok(m)
}

/// One GCN sub-layer application (without the residual wrapper).
pub fn gcn_layer(
    h: &HiddenStates,
    arcs: &ArcMatrix,
    w: &Array2<f64>,
    b: &ndarray::Array1<f64>,
    label_table: &Array2<f64>,
) -> Result<HiddenStates, DepGcnError> {
    let (n, d) = h.dim();
    if arcs.weights.dim() != (n, n) || arcs.label_ids.len() != n {
        return Err(DepGcnError::Shape(format!(
            "arc matrix {:?} does not fit {n} tokens",
            arcs.weights.dim()
        )));
    }
    if w.dim() != (d, 2 * d) || b.len() != d {
        return Err(DepGcnError::Shape(format!(
            "gcn weights {:?}/bias {} do not fit hidden size {d}",
            w.dim(),
            b.len()
        )));
    }
    ensure_finite("hidden states", h.iter().copied())?;
    ensure_finite("arc weights", arcs.weights.iter().copied())?;

    let m = concat_labels(h, &arcs.label_ids, label_table)?;
    let z = m.dot(&w.t());
    let mut out = arcs.weights.dot(&z) + b.view().insert_axis(Axis(0));
    relu_inplace(&mut out);
    Ok(out)
}

/// Position-wise feed-forward sub-layer: `relu(h W1^T + b1) W2^T + b2`.
pub fn feed_forward(h: &HiddenStates, ff: &FeedForward) -> Result<HiddenStates, DepGcnError> {
    let (_, d) = h.dim();
    let d_ff = ff.w1.nrows();
    if ff.w1.ncols() != d || ff.b1.len() != d_ff || ff.w2.dim() != (d, d_ff) || ff.b2.len() != d {
        return Err(DepGcnError::Shape(format!(
            "feed-forward shapes {:?}/{:?} do not fit hidden size {d}",
            ff.w1.dim(),
            ff.w2.dim()
        )));
    }
    ensure_finite("hidden states", h.iter().copied())?;
    let mut u = h.dot(&ff.w1.t()) + ff.b1.view().insert_axis(Axis(0));
    relu_inplace(&mut u);
    Ok(u.dot(&ff.w2.t()) + ff.b2.view().insert_axis(Axis(0)))
}

/// Row-wise layer normalization with learned gain and bias.
pub fn layer_norm(x: &HiddenStates, ln: &LayerNorm) -> Result<HiddenStates, DepGcnError> {
    let (_, d) = x.dim();
    if d < 2 {
        return Err(DepGcnError::DegenerateWidth(d));
    }
    if ln.gain.len() != d || ln.bias.len() != d {
        return Err(DepGcnError::Shape(format!(
            "layer-norm width {} does not fit hidden size {d}",
            ln.gain.len()
        )));
    }
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let sigma = (var + LAYER_NORM_EPS).sqrt();
        for (k, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) / sigma * ln.gain[k] + ln.bias[k];
        }
    }
    Ok(out)
}

/// Residual wrapper: `LayerNorm(x + f(x))`.
pub fn sublayer_wrap<F>(x: &HiddenStates, f: F, ln: &LayerNorm) -> Result<HiddenStates, DepGcnError>
where
    F: FnOnce(&HiddenStates) -> Result<HiddenStates, DepGcnError>,
{
    let fx = f(x)?;
    if fx.dim() != x.dim() {
        return Err(DepGcnError::Shape(format!(
            "sub-layer changed shape {:?} -> {:?}",
            x.dim(),
            fx.dim()
        )));
    }
    layer_norm(&(x + &fx), ln)
}

/// Runs the full block stack over the basic states. Zero blocks is the
/// identity.
pub fn depgcn_stack(
    h_basic: &HiddenStates,
    arcs: &ArcMatrix,
    params: &GcnParams,
) -> Result<HiddenStates, DepGcnError> {
    let mut h = h_basic.clone();
    for block in &params.blocks {
        h = sublayer_wrap(
            &h,
            |x| gcn_layer(x, arcs, &block.w, &block.b, &params.label_table),
            &block.ln_gcn,
        )?;
        h = sublayer_wrap(&h, |x| feed_forward(x, &block.ff), &block.ln_ff)?;
    }
    Ok(h)
}

/// Interpolates basic and syntax-aware states:
/// `beta * h_basic + (1 - beta) * h_syn`.
///
/// The boundary values return the corresponding operand bit for bit.
pub fn fuse(
    h_basic: &HiddenStates,
    h_syn: &HiddenStates,
    beta: f64,
) -> Result<HiddenStates, DepGcnError> {
    if h_basic.dim() != h_syn.dim() {
        return Err(DepGcnError::Shape(format!(
            "fuse operands {:?} vs {:?}",
            h_basic.dim(),
            h_syn.dim()
        )));
    }
    if !beta.is_finite() {
        return Err(DepGcnError::NonFinite("fusion factor".to_string()));
    }
    if beta == 1.0 {
        return Ok(h_basic.clone());
    }
    if beta == 0.0 {
        return Ok(h_syn.clone());
    }
    Ok(h_basic * beta + h_syn * (1.0 - beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, Array1};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn arcs_of(weights: Array2<f64>, label_ids: Vec<usize>) -> ArcMatrix {
        ArcMatrix { weights, label_ids }
    }

    #[test]
    fn zero_adjacency_and_bias_give_zero_output() {
        let h = arr2(&[[0.3, -0.7], [1.2, 0.4]]);
        let arcs = arcs_of(Array2::zeros((2, 2)), vec![0, 0]);
        let w = Array2::from_elem((2, 4), 0.5);
        let b = Array1::zeros(2);
        let table = Array2::from_elem((1, 2), 0.25);
        let out = gcn_layer(&h, &arcs, &w, &b, &table).unwrap();
        assert_eq!(out, Array2::<f64>::zeros((2, 2)));
    }

    #[test]
    fn gcn_layer_matches_hand_computation() {
        // n = 2, d = 2, A = [[0, 1], [0, 0]], labels both id 0.
        // Row 0 aggregates only j=1: W (h_1 ++ e_0) + b, then ReLU.
        let h = arr2(&[[1.0, 2.0], [3.0, 4.0]]);
        let arcs = arcs_of(arr2(&[[0.0, 1.0], [0.0, 0.0]]), vec![0, 0]);
        let w = arr2(&[[1.0, 0.0, 0.5, 0.0], [0.0, -1.0, 0.0, 0.5]]);
        let b = arr1(&[0.1, 0.2]);
        let table = arr2(&[[2.0, -2.0]]);
        let out = gcn_layer(&h, &arcs, &w, &b, &table).unwrap();
        // row0: W*(3,4,2,-2) = (3 + 1, -4 - 1) = (4, -5); + b = (4.1, -4.8) -> relu
        assert!((out[(0, 0)] - 4.1).abs() < 1e-12);
        assert_eq!(out[(0, 1)], 0.0);
        // row1: zero adjacency row -> relu(b)
        assert!((out[(1, 0)] - 0.1).abs() < 1e-12);
        assert!((out[(1, 1)] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn gcn_layer_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4;
        let d = 3;
        let h = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
        let weights = Array2::from_shape_fn((n, n), |_| rng.gen_range(0.0..1.0));
        let label_ids: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let w = Array2::from_shape_fn((d, 2 * d), |_| rng.gen_range(-0.5..0.5));
        let b = Array1::from_shape_fn(d, |_| rng.gen_range(-0.5..0.5));
        let table = Array2::from_shape_fn((3, d), |_| rng.gen_range(-0.5..0.5));

        let base = gcn_layer(
            &h,
            &arcs_of(weights.clone(), label_ids.clone()),
            &w,
            &b,
            &table,
        )
        .unwrap();

        let perm = [2usize, 0, 3, 1];
        let h_p = Array2::from_shape_fn((n, d), |(i, k)| h[(perm[i], k)]);
        let weights_p = Array2::from_shape_fn((n, n), |(i, j)| weights[(perm[i], perm[j])]);
        let ids_p: Vec<usize> = (0..n).map(|i| label_ids[perm[i]]).collect();
        let out_p = gcn_layer(&h_p, &arcs_of(weights_p, ids_p), &w, &b, &table).unwrap();

        for i in 0..n {
            for k in 0..d {
                assert!((out_p[(i, k)] - base[(perm[i], k)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stack_is_permutation_equivariant() {
        let params = GcnParams::seeded(3, 5, 4, 2, 0.5, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let n = 4;
        let h = Array2::from_shape_fn((n, 3), |_| rng.gen_range(-1.0..1.0));
        let weights = Array2::from_shape_fn((n, n), |_| rng.gen_range(0.0..1.0));
        let label_ids: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();

        let base = depgcn_stack(&h, &arcs_of(weights.clone(), label_ids.clone()), &params).unwrap();

        let perm = [3usize, 1, 0, 2];
        let h_p = Array2::from_shape_fn((n, 3), |(i, k)| h[(perm[i], k)]);
        let weights_p = Array2::from_shape_fn((n, n), |(i, j)| weights[(perm[i], perm[j])]);
        let ids_p: Vec<usize> = (0..n).map(|i| label_ids[perm[i]]).collect();
        let out_p = depgcn_stack(&h_p, &arcs_of(weights_p, ids_p), &params).unwrap();

        for i in 0..n {
            for k in 0..3 {
                assert!((out_p[(i, k)] - base[(perm[i], k)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn feed_forward_constant_case() {
        // zero W1/W2 with bias b2 = c gives constant rows c
        let h = arr2(&[[1.0, -1.0], [2.0, 3.0]]);
        let ff = FeedForward {
            w1: Array2::zeros((3, 2)),
            b1: Array1::zeros(3),
            w2: Array2::zeros((2, 3)),
            b2: arr1(&[0.7, -0.3]),
        };
        let out = feed_forward(&h, &ff).unwrap();
        for i in 0..2 {
            assert_eq!(out[(i, 0)], 0.7);
            assert_eq!(out[(i, 1)], -0.3);
        }
    }

    #[test]
    fn feed_forward_identity_on_non_negative_input() {
        let h = arr2(&[[0.5, 2.0], [0.0, 1.0]]);
        let ff = FeedForward {
            w1: Array2::eye(2),
            b1: Array1::zeros(2),
            w2: Array2::eye(2),
            b2: Array1::zeros(2),
        };
        assert_eq!(feed_forward(&h, &ff).unwrap(), h);
    }

    #[test]
    fn sublayer_with_zero_map_normalizes_rows() {
        let x = arr2(&[[1.0, 2.0, 3.0], [4.0, 4.0, 4.0]]);
        let ln = LayerNorm {
            gain: Array1::ones(3),
            bias: Array1::zeros(3),
        };
        let out = sublayer_wrap(&x, |x| Ok(Array2::zeros(x.dim())), &ln).unwrap();
        for row in out.rows() {
            let mean: f64 = row.sum() / 3.0;
            assert!(mean.abs() < 1e-12);
        }
        // a non-constant row normalizes to (near) unit variance
        let var: f64 = out.row(0).iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert!((var - 1.0).abs() < 1e-4);
        // a constant row has zero variance; epsilon keeps it finite at zero
        assert!(out.row(1).iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn zero_gain_broadcasts_bias() {
        let x = arr2(&[[1.0, 2.0], [3.0, -1.0]]);
        let ln = LayerNorm {
            gain: Array1::zeros(2),
            bias: arr1(&[0.4, -0.2]),
        };
        let out = layer_norm(&x, &ln).unwrap();
        for i in 0..2 {
            assert_eq!(out[(i, 0)], 0.4);
            assert_eq!(out[(i, 1)], -0.2);
        }
    }

    #[test]
    fn width_one_is_rejected() {
        let x = arr2(&[[1.0], [2.0]]);
        let ln = LayerNorm {
            gain: Array1::ones(1),
            bias: Array1::zeros(1),
        };
        assert_eq!(
            layer_norm(&x, &ln).unwrap_err(),
            DepGcnError::DegenerateWidth(1)
        );
    }

    #[test]
    fn empty_stack_is_identity() {
        let params = GcnParams::seeded(4, 8, 3, 0, 0.5, 1);
        let h = arr2(&[[0.1, 0.2, 0.3, 0.4], [1.0, -1.0, 0.5, 0.0]]);
        let arcs = arcs_of(Array2::zeros((2, 2)), vec![0, 1]);
        assert_eq!(depgcn_stack(&h, &arcs, &params).unwrap(), h);
    }

    #[test]
    fn one_block_equals_manual_composition() {
        let params = GcnParams::seeded(4, 6, 3, 1, 0.5, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = Array2::from_shape_fn((3, 4), |_| rng.gen_range(-1.0..1.0));
        let weights = Array2::from_shape_fn((3, 3), |_| rng.gen_range(0.0..1.0));
        let arcs = arcs_of(weights, vec![0, 1, 2]);

        let block = &params.blocks[0];
        let step1 = sublayer_wrap(
            &h,
            |x| gcn_layer(x, &arcs, &block.w, &block.b, &params.label_table),
            &block.ln_gcn,
        )
        .unwrap();
        let manual = sublayer_wrap(&step1, |x| feed_forward(x, &block.ff), &block.ln_ff).unwrap();

        assert_eq!(depgcn_stack(&h, &arcs, &params).unwrap(), manual);
    }

    #[test]
    fn default_depth_preserves_shape() {
        let params = GcnParams::seeded(8, 16, 5, 3, 0.5, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let h = Array2::from_shape_fn((5, 8), |_| rng.gen_range(-1.0..1.0));
        let weights = Array2::from_shape_fn((5, 5), |_| rng.gen_range(0.0..1.0));
        let arcs = arcs_of(weights, vec![0, 1, 2, 3, 4]);
        let out = depgcn_stack(&h, &arcs, &params).unwrap();
        assert_eq!(out.dim(), (5, 8));
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn fuse_interpolates_and_respects_boundaries() {
        let hb = arr2(&[[2.0, 0.0]]);
        let hs = arr2(&[[0.0, 2.0]]);
        let mid = fuse(&hb, &hs, 0.5).unwrap();
        assert_eq!(mid, arr2(&[[1.0, 1.0]]));
        assert_eq!(fuse(&hb, &hs, 1.0).unwrap(), hb);
        assert_eq!(fuse(&hb, &hs, 0.0).unwrap(), hs);
    }

    #[test]
    fn fuse_rejects_shape_mismatch() {
        let hb = arr2(&[[1.0, 2.0]]);
        let hs = arr2(&[[1.0], [2.0]]);
        assert!(matches!(fuse(&hb, &hs, 0.5), Err(DepGcnError::Shape(_))));
    }

    #[test]
    fn non_finite_input_is_reported() {
        let h = arr2(&[[f64::NAN, 1.0]]);
        let arcs = arcs_of(Array2::zeros((1, 1)), vec![0]);
        let w = Array2::zeros((2, 4));
        let b = Array1::zeros(2);
        let table = Array2::zeros((1, 2));
        assert!(matches!(
            gcn_layer(&h, &arcs, &w, &b, &table),
            Err(DepGcnError::NonFinite(_))
        ));
    }
}
