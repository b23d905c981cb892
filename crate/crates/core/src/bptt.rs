//! Backpropagation through time for the full network, and the numerical
//! checks that validate it.
//!
//! Gradients reuse the [`NetworkParams`] layout: every tensor of a
//! `Gradients` value is `∂L/∂` of the tensor at the same position.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::extended::{extended_loss, Dd};
use crate::math::{sqrt, tanh, Matrix};
use crate::rng::SeqRng;
use crate::rnn::{
    deeprnn_forward, propagate_stream, ForwardCache, LstmParams, LstmTrace, NetworkParams, RnnError, TensorKind,
};
use crate::train::loss::{loss_gradient, sample_loss};
use crate::TARGET_COUNT;

pub type Gradients = NetworkParams;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BpttError {
    #[error("forward cache does not match the network: {0}")]
    CacheMismatch(&'static str),
    #[error("finite-difference step {0} outside [1e-7, 1e-3]")]
    InvalidEpsilon(f64),
    #[error("decomposition check needs at least two stacked residual blocks")]
    NotEnoughBlocks,
    #[error(transparent)]
    Rnn(#[from] RnnError),
}

impl NetworkParams {
    /// Global L2 norm over every tensor (weights and biases).
    pub fn global_norm(&self) -> f64 {
        sqrt(self.tensors().iter().map(|t| t.data.iter().map(|v| v * v).sum::<f64>()).sum())
    }

    pub fn add_assign(&mut self, other: &NetworkParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.data.iter_mut().zip(b.data) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Adds `2λθ` on weight tensors of `params`; the gradient of `λ‖θ‖²`.
    pub fn add_l2_gradient(&mut self, params: &NetworkParams, lambda: f64) {
        if lambda == 0.0 {
            return;
        }
        for (g, p) in self.tensors_mut().into_iter().zip(params.tensors()) {
            if g.kind == TensorKind::Weight {
                for (gv, pv) in g.data.iter_mut().zip(p.data) {
                    *gv += 2.0 * lambda * pv;
                }
            }
        }
    }
}

/// Result of a backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Backward {
    pub grads: Gradients,
    /// `∂L/∂x^k` for every residual-stream level of the cache (same indexing
    /// as [`ForwardCache::stream`]).
    pub stream: Vec<Matrix>,
    /// `∂L/∂x` for the network input.
    pub input: Matrix,
}

/// Reverse-mode differentiation of the whole network given `∂L/∂z`.
pub fn deeprnn_backward(net: &NetworkParams, cache: &ForwardCache, dloss_dz: &Matrix) -> Result<Backward, BpttError> {
    let mut grads = net.zeros_like();
    let (stream, input) = deeprnn_backward_into(net, cache, dloss_dz, &mut grads)?;
    Ok(Backward { grads, stream, input })
}

/// As [`deeprnn_backward`] but accumulates parameter gradients into `grads`.
pub fn deeprnn_backward_into(
    net: &NetworkParams,
    cache: &ForwardCache,
    dloss_dz: &Matrix,
    grads: &mut Gradients,
) -> Result<(Vec<Matrix>, Matrix), BpttError> {
    check_cache(net, cache, dloss_dz)?;
    let steps = cache.input.rows();
    let hidden = net.config.hidden_size;

    // head
    let (h_top, x_top) = cache.head_inputs();
    let mut dh_top = Matrix::zeros(steps, hidden);
    let mut dx_top = Matrix::zeros(steps, hidden);
    let mut dpre = [0.0; TARGET_COUNT];
    for t in 0..steps {
        for (k, d) in dpre.iter_mut().enumerate() {
            let z = cache.z.get(t, k);
            *d = dloss_dz.get(t, k) * z * (1.0 - z);
        }
        grads.head.w_hz.add_outer(&dpre, h_top.row(t));
        for (b, d) in grads.head.b_z.iter_mut().zip(&dpre) {
            *b += d;
        }
        net.head.w_hz.tr_mul_vec_add(&dpre, dh_top.row_mut(t));
        if let Some(x) = x_top {
            grads.head.w_xz.add_outer(&dpre, x.row(t));
            net.head.w_xz.tr_mul_vec_add(&dpre, dx_top.row_mut(t));
        }
    }

    // stacked blocks, top-down
    let blocks = net.stack.len();
    let mut d_stream: Vec<Matrix> = vec![Matrix::zeros(0, 0); cache.stream.len()];
    if blocks == 0 {
        d_stream[0] = dh_top;
    } else {
        let mut dh = dh_top;
        let mut d_level = dx_top;
        for k in (0..blocks).rev() {
            let dx = lstm_sequence_backward(&net.stack[k], &cache.stream[k], &cache.blocks[k], &dh, &mut grads.stack[k]);
            if k + 1 == blocks || net.config.residual {
                for (a, b) in d_level.as_mut_slice().iter_mut().zip(dx.as_slice()) {
                    *a += b;
                }
            } else {
                d_level = dx;
            }
            // level k is the block's input; it is also the hidden output of block k-1
            dh = d_level.clone();
            d_stream[k] = d_level.clone();
        }
    }

    // first layer merge and both directions
    let d_first = &d_stream[0];
    let first = &cache.first;
    let mut dhf = Matrix::zeros(steps, hidden);
    let mut dhb = Matrix::zeros(steps, hidden);
    for t in 0..steps {
        let d = d_first.row(t);
        grads.bilstm.w_f_merge.add_outer(d, first.fwd.h.row(t));
        for (b, v) in grads.bilstm.b_h.iter_mut().zip(d) {
            *b += v;
        }
        net.bilstm.w_f_merge.tr_mul_vec_add(d, dhf.row_mut(t));
        if let (Some(w), Some(gw), Some(bwd)) =
            (&net.bilstm.w_b_merge, grads.bilstm.w_b_merge.as_mut(), first.bwd.as_ref())
        {
            gw.add_outer(d, bwd.h.row(t));
            w.tr_mul_vec_add(d, dhb.row_mut(t));
        }
    }
    let mut dx_in = lstm_sequence_backward(&net.bilstm.fwd, &cache.input, &first.fwd, &dhf, &mut grads.bilstm.fwd);
    if let (Some(p), Some(g), Some(tr)) = (&net.bilstm.bwd, grads.bilstm.bwd.as_mut(), first.bwd.as_ref()) {
        let dxb = lstm_sequence_backward(p, &cache.input, tr, &dhb, g);
        for (a, b) in dx_in.as_mut_slice().iter_mut().zip(dxb.as_slice()) {
            *a += b;
        }
    }
    Ok((d_stream, dx_in))
}

fn check_cache(net: &NetworkParams, cache: &ForwardCache, dz: &Matrix) -> Result<(), BpttError> {
    let steps = cache.input.rows();
    let h = net.config.hidden_size;
    if cache.input.cols() != net.config.input_size {
        return Err(BpttError::CacheMismatch("input width"));
    }
    if cache.blocks.len() != net.stack.len() {
        return Err(BpttError::CacheMismatch("stacked block count"));
    }
    if cache.stream.len() != net.stack.len().max(1) {
        return Err(BpttError::CacheMismatch("residual stream levels"));
    }
    if cache.first.bwd.is_some() != net.bilstm.bwd.is_some() {
        return Err(BpttError::CacheMismatch("first-layer directions"));
    }
    if cache.z.shape() != (steps, TARGET_COUNT) || dz.shape() != (steps, TARGET_COUNT) {
        return Err(BpttError::CacheMismatch("output shape"));
    }
    let traces = core::iter::once(&cache.first.fwd).chain(cache.first.bwd.as_ref()).chain(cache.blocks.iter());
    for tr in traces {
        if tr.h.shape() != (steps, h) {
            return Err(BpttError::CacheMismatch("trace shape"));
        }
    }
    if cache.stream.iter().any(|s| s.shape() != (steps, h)) {
        return Err(BpttError::CacheMismatch("stream shape"));
    }
    Ok(())
}

/// Backward through one LSTM run. Accumulates into `g` and returns `∂L/∂x`.
pub(crate) fn lstm_sequence_backward(
    p: &LstmParams,
    xs: &Matrix,
    tr: &LstmTrace,
    dh_ext: &Matrix,
    g: &mut LstmParams,
) -> Matrix {
    let steps = tr.len();
    let n = p.hidden_size();
    let mut dx = Matrix::zeros(steps, p.input_size());
    let zero = vec![0.0; n];
    let mut dh_next = vec![0.0; n];
    let mut dc_next = vec![0.0; n];
    let (mut da_f, mut da_i, mut da_o, mut da_g) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for k in 0..steps {
        // reverse of the forward processing order
        let t = if tr.reverse { k } else { steps - 1 - k };
        let prev = tr.prev_index(t);
        let c_prev = prev.map_or(zero.as_slice(), |s| tr.c.row(s));
        let h_prev = prev.map_or(zero.as_slice(), |s| tr.h.row(s));
        let (f, i, o, gg, c) = (tr.f.row(t), tr.i.row(t), tr.o.row(t), tr.g.row(t), tr.c.row(t));
        let dh_row = dh_ext.row(t);
        for j in 0..n {
            let dh = dh_row[j] + dh_next[j];
            let tc = tanh(c[j]);
            let d_o = dh * tc;
            let dc = dc_next[j] + dh * o[j] * (1.0 - tc * tc);
            da_f[j] = dc * c_prev[j] * f[j] * (1.0 - f[j]);
            da_i[j] = dc * gg[j] * i[j] * (1.0 - i[j]);
            da_g[j] = dc * i[j] * (1.0 - gg[j] * gg[j]);
            da_o[j] = d_o * o[j] * (1.0 - o[j]);
            dc_next[j] = dc * f[j];
        }
        let x = xs.row(t);
        g.w_xf.add_outer(&da_f, x);
        g.w_xi.add_outer(&da_i, x);
        g.w_xo.add_outer(&da_o, x);
        g.w_xc.add_outer(&da_g, x);
        g.w_hf.add_outer(&da_f, h_prev);
        g.w_hi.add_outer(&da_i, h_prev);
        g.w_ho.add_outer(&da_o, h_prev);
        g.w_hc.add_outer(&da_g, h_prev);
        for j in 0..n {
            g.b_f[j] += da_f[j];
            g.b_i[j] += da_i[j];
            g.b_o[j] += da_o[j];
            g.b_c[j] += da_g[j];
        }
        let dx_row = dx.row_mut(t);
        p.w_xf.tr_mul_vec_add(&da_f, dx_row);
        p.w_xi.tr_mul_vec_add(&da_i, dx_row);
        p.w_xo.tr_mul_vec_add(&da_o, dx_row);
        p.w_xc.tr_mul_vec_add(&da_g, dx_row);
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        p.w_hf.tr_mul_vec_add(&da_f, &mut dh_next);
        p.w_hi.tr_mul_vec_add(&da_i, &mut dh_next);
        p.w_ho.tr_mul_vec_add(&da_o, &mut dh_next);
        p.w_hc.tr_mul_vec_add(&da_g, &mut dh_next);
    }
    dx
}

/// Analytic gradient of `Σ_t ‖z_t − y_t‖² + λ‖θ‖²` for one sequence.
pub fn sample_gradient(
    net: &NetworkParams,
    x_seq: &Matrix,
    y_seq: &Matrix,
    lambda: f64,
) -> Result<(f64, Gradients), BpttError> {
    let (z, cache) = deeprnn_forward(net, x_seq, true)?;
    let cache = cache.expect("training forward returns a cache");
    let dz = loss_gradient(&z, y_seq, 1.0, None);
    let mut back = deeprnn_backward(net, &cache, &dz)?;
    back.grads.add_l2_gradient(net, lambda);
    let loss = sample_loss(&z, y_seq, None) + lambda * net.weight_l2_sq();
    Ok((loss, back.grads))
}

/// One checked parameter coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateCheck {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Coordinate attaining `max_rel_err`.
    pub worst: Option<CoordinateCheck>,
    pub epsilon: f64,
    pub seed: u64,
    pub checked: usize,
    /// Coordinates whose relative error exceeds [`GRADCHECK_TOLERANCE`].
    pub flagged: Vec<CoordinateCheck>,
}

pub const GRADCHECK_TOLERANCE: f64 = 1e-5;
pub const GRADCHECK_MIN_COORDINATES: usize = 200;

/// `|a − b| / max(|a|, |b|, 1e-8)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(1e-8);
    (a - b).abs() / scale
}

/// Deterministic coordinate subsample `(tensor, element)` touching every
/// tensor; at least `min_total` coordinates unless the network is smaller.
pub fn sample_coordinates(net: &NetworkParams, min_total: usize, seed: u64) -> Vec<(usize, usize)> {
    let tensors = net.tensors();
    let per_tensor = min_total.div_ceil(tensors.len()).max(1);
    let mut rng = SeqRng::new(seed, 0x6772_6164);
    let mut out = Vec::new();
    let mut spare = Vec::new();
    for (ti, t) in tensors.iter().enumerate() {
        let mut idx: Vec<usize> = (0..t.data.len()).collect();
        rng.shuffle(&mut idx);
        spare.extend(idx.split_off(per_tensor.min(idx.len())).into_iter().map(|e| (ti, e)));
        out.extend(idx.into_iter().map(|e| (ti, e)));
    }
    // small tensors are exhausted early; top up from the rest
    rng.shuffle(&mut spare);
    let missing = min_total.saturating_sub(out.len()).min(spare.len());
    out.extend_from_slice(&spare[..missing]);
    out.sort_unstable();
    out
}

/// Central differences `(L(θ+ε) − L(θ−ε)) / 2ε` on `coords`, compared with
/// `analytic`.
pub fn check_coordinates(
    net: &NetworkParams,
    analytic: &Gradients,
    coords: &[(usize, usize)],
    epsilon: f64,
    seed: u64,
    numeric: impl Fn(usize, usize) -> f64,
) -> GradCheckReport {
    let names: Vec<String> = net.tensors().into_iter().map(|t| t.name).collect();
    let analytic_tensors = analytic.tensors();
    let mut report =
        GradCheckReport { max_rel_err: 0.0, worst: None, epsilon, seed, checked: 0, flagged: Vec::new() };
    for &(ti, ei) in coords {
        let numeric = numeric(ti, ei);
        let a = analytic_tensors[ti].data[ei];
        let rel_err = relative_error(a, numeric);
        let c = CoordinateCheck { tensor: names[ti].clone(), index: ei, analytic: a, numeric, rel_err };
        report.checked += 1;
        if rel_err > GRADCHECK_TOLERANCE {
            report.flagged.push(c.clone());
        }
        if report.worst.is_none() || rel_err > report.max_rel_err {
            report.max_rel_err = rel_err;
            report.worst = Some(c);
        }
    }
    report
}

/// Compares BPTT gradients of the multi-task loss on one sequence against
/// central finite differences on a seeded subsample of ≥ 200 coordinates.
pub fn finite_difference_check(
    net: &NetworkParams,
    x_seq: &Matrix,
    y_seq: &Matrix,
    lambda: f64,
    epsilon: f64,
    seed: u64,
) -> Result<GradCheckReport, BpttError> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(BpttError::InvalidEpsilon(epsilon));
    }
    let (_, analytic) = sample_gradient(net, x_seq, y_seq, lambda)?;
    let coords = sample_coordinates(net, GRADCHECK_MIN_COORDINATES, seed);
    // (L(θ+ε) − L(θ−ε)) / 2ε with both losses in double-double
    let numeric = |ti: usize, ei: usize| {
        let up = extended_loss(net, x_seq, y_seq, lambda, Some((ti, ei, epsilon)));
        let down = extended_loss(net, x_seq, y_seq, lambda, Some((ti, ei, -epsilon)));
        ((up - down) / Dd::new(2.0 * epsilon)).to_f64()
    };
    Ok(check_coordinates(net, &analytic, &coords, epsilon, seed, numeric))
}

/// Outcome of the residual-stream gradient decomposition check.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionReport {
    pub levels: usize,
    /// `max |x^m − (x^l + Σ_{k=l}^{m−1} h^k)|` over all level pairs.
    pub telescoping_max_abs_err: f64,
    /// With every stacked block zeroed, `max |∂L/∂x^l − ∂L/∂x^m|`.
    pub direct_path_max_abs_err: f64,
    /// `‖(∂L/∂x^l − ∂L/∂x^m) − FD‖ / max(‖·‖, ‖FD‖, 1e-8)` worst over pairs,
    /// where FD is the finite-difference vector-Jacobian product of the
    /// residual branches with `∂L/∂x^m`.
    pub through_weights_max_rel_err: f64,
}

/// Verifies the residual-stream identities on one sequence:
///
/// * `x^m = x^l + Σ_{k=l}^{m−1} h^k` for every `l < m`,
/// * zeroed stacked blocks give `∂L/∂x^l = ∂L/∂x^m` exactly,
/// * otherwise `∂L/∂x^l − ∂L/∂x^m` equals `∂L/∂x^m · ∂(Σ h^k)/∂x^l`,
///   the latter by central differences.
pub fn residual_gradient_decomposition_check(
    net: &NetworkParams,
    x_seq: &Matrix,
    y_seq: &Matrix,
) -> Result<DecompositionReport, BpttError> {
    if net.stack.len() < 2 || !net.config.residual {
        return Err(BpttError::NotEnoughBlocks);
    }
    let (z, cache) = deeprnn_forward(net, x_seq, true)?;
    let cache = cache.expect("training forward returns a cache");
    let levels = cache.stream.len();

    let mut telescoping = 0.0f64;
    for l in 0..levels {
        for m in l + 1..levels {
            let mut acc = cache.stream[l].clone();
            for k in l..m {
                for (a, h) in acc.as_mut_slice().iter_mut().zip(cache.blocks[k].h.as_slice()) {
                    *a += h;
                }
            }
            for (a, b) in acc.as_slice().iter().zip(cache.stream[m].as_slice()) {
                telescoping = telescoping.max((a - b).abs());
            }
        }
    }

    let mut zeroed = net.clone();
    for layer in zeroed.stack.iter_mut() {
        *layer = LstmParams::zeros(layer.input_size(), layer.hidden_size());
    }
    let (z0, c0) = deeprnn_forward(&zeroed, x_seq, true)?;
    let back0 = deeprnn_backward(&zeroed, &c0.expect("cache"), &loss_gradient(&z0, y_seq, 1.0, None))?;
    let mut direct = 0.0f64;
    for l in 0..levels {
        for m in l + 1..levels {
            for (a, b) in back0.stream[l].as_slice().iter().zip(back0.stream[m].as_slice()) {
                direct = direct.max((a - b).abs());
            }
        }
    }

    let back = deeprnn_backward(net, &cache, &loss_gradient(&z, y_seq, 1.0, None))?;
    let eps = 1e-5;
    let mut through = 0.0f64;
    for l in 0..levels {
        for m in l + 1..levels {
            let g_top = &back.stream[m];
            let mut diff_sq = 0.0;
            let mut a_sq = 0.0;
            let mut n_sq = 0.0;
            let mut probe = cache.stream[l].clone();
            for idx in 0..probe.as_slice().len() {
                let orig = probe.as_slice()[idx];
                probe.as_mut_slice()[idx] = orig + eps;
                let up = propagate_stream(net, &probe, l, m)?;
                probe.as_mut_slice()[idx] = orig - eps;
                let down = propagate_stream(net, &probe, l, m)?;
                probe.as_mut_slice()[idx] = orig;
                // d(x^m)/d(x^l_idx) minus the identity path
                let mut vjp = 0.0;
                for (j, ((u, d), g)) in
                    up.as_slice().iter().zip(down.as_slice()).zip(g_top.as_slice()).enumerate()
                {
                    let mut deriv = (u - d) / (2.0 * eps);
                    if j == idx {
                        deriv -= 1.0;
                    }
                    vjp += g * deriv;
                }
                let analytic = back.stream[l].as_slice()[idx] - g_top.as_slice()[idx];
                diff_sq += (analytic - vjp) * (analytic - vjp);
                a_sq += analytic * analytic;
                n_sq += vjp * vjp;
            }
            let rel = sqrt(diff_sq) / sqrt(a_sq).max(sqrt(n_sq)).max(1e-8);
            through = through.max(rel);
        }
    }

    Ok(DecompositionReport {
        levels,
        telescoping_max_abs_err: telescoping,
        direct_path_max_abs_err: direct,
        through_weights_max_rel_err: through,
    })
}
