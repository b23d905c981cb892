use alloc::vec;
use alloc::vec::Vec;

use crate::math::{sigmoid, tanh, Matrix};
use crate::TARGET_COUNT;

use super::params::{BiLstmParams, LstmParams, NetworkParams};
use super::RnnError;

/// `(h, c)` carried between timesteps.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl HiddenState {
    pub fn zeros(hidden_size: usize) -> Self {
        Self { h: vec![0.0; hidden_size], c: vec![0.0; hidden_size] }
    }
}

/// Activations of one cell evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct GateRecord {
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub o: Vec<f64>,
    pub candidate: Vec<f64>,
    pub c: Vec<f64>,
}

/// One LSTM cell update:
///
/// ```text
/// f = σ(W_xf x + W_hf h + b_f)      i = σ(W_xi x + W_hi h + b_i)
/// o = σ(W_xo x + W_ho h + b_o)      g = tanh(W_xc x + W_hc h + b_c)
/// c' = f ⊙ c + i ⊙ g                h' = o ⊙ tanh(c')
/// ```
pub fn lstm_cell_forward(
    params: &LstmParams,
    x_t: &[f64],
    prev: &HiddenState,
) -> Result<(HiddenState, GateRecord), RnnError> {
    params.check_shapes()?;
    let n = params.hidden_size();
    check_len("cell input", params.input_size(), x_t.len())?;
    check_len("previous h", n, prev.h.len())?;
    check_len("previous c", n, prev.c.len())?;
    let mut rec = GateRecord {
        f: vec![0.0; n],
        i: vec![0.0; n],
        o: vec![0.0; n],
        candidate: vec![0.0; n],
        c: vec![0.0; n],
    };
    let mut h = vec![0.0; n];
    cell_step(
        params,
        x_t,
        &prev.h,
        &prev.c,
        StepOut { f: &mut rec.f, i: &mut rec.i, o: &mut rec.o, g: &mut rec.candidate, c: &mut rec.c, h: &mut h },
    );
    Ok((HiddenState { h, c: rec.c.clone() }, rec))
}

struct StepOut<'a> {
    f: &'a mut [f64],
    i: &'a mut [f64],
    o: &'a mut [f64],
    g: &'a mut [f64],
    c: &'a mut [f64],
    h: &'a mut [f64],
}

#[inline]
fn cell_step(p: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64], out: StepOut<'_>) {
    out.f.copy_from_slice(&p.b_f);
    out.i.copy_from_slice(&p.b_i);
    out.o.copy_from_slice(&p.b_o);
    out.g.copy_from_slice(&p.b_c);
    p.w_xf.mul_vec_add(x, out.f);
    p.w_hf.mul_vec_add(h_prev, out.f);
    p.w_xi.mul_vec_add(x, out.i);
    p.w_hi.mul_vec_add(h_prev, out.i);
    p.w_xo.mul_vec_add(x, out.o);
    p.w_ho.mul_vec_add(h_prev, out.o);
    p.w_xc.mul_vec_add(x, out.g);
    p.w_hc.mul_vec_add(h_prev, out.g);
    for j in 0..out.h.len() {
        let f = sigmoid(out.f[j]);
        let i = sigmoid(out.i[j]);
        let o = sigmoid(out.o[j]);
        let g = tanh(out.g[j]);
        let c = f * c_prev[j] + i * g;
        out.f[j] = f;
        out.i[j] = i;
        out.o[j] = o;
        out.g[j] = g;
        out.c[j] = c;
        out.h[j] = o * tanh(c);
    }
}

/// Per-timestep activations of one LSTM run over a sequence, indexed by
/// time (not by processing order).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmTrace {
    /// Processed right-to-left from the last timestep.
    pub reverse: bool,
    pub f: Matrix,
    pub i: Matrix,
    pub o: Matrix,
    pub g: Matrix,
    pub c: Matrix,
    pub h: Matrix,
}

impl LstmTrace {
    pub fn len(&self) -> usize {
        self.h.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.h.rows() == 0
    }

    /// Timestep whose state feeds `t`, if any.
    #[inline]
    pub fn prev_index(&self, t: usize) -> Option<usize> {
        if self.reverse {
            (t + 1 < self.len()).then_some(t + 1)
        } else {
            t.checked_sub(1)
        }
    }
}

/// Runs an LSTM over `xs` (one row per timestep) from a zero state.
pub(crate) fn lstm_sequence_forward(
    p: &LstmParams,
    xs: &Matrix,
    reverse: bool,
    layer: usize,
) -> Result<LstmTrace, RnnError> {
    let (steps, width) = xs.shape();
    check_len("sequence width", p.input_size(), width)?;
    let n = p.hidden_size();
    let mut tr = LstmTrace {
        reverse,
        f: Matrix::zeros(steps, n),
        i: Matrix::zeros(steps, n),
        o: Matrix::zeros(steps, n),
        g: Matrix::zeros(steps, n),
        c: Matrix::zeros(steps, n),
        h: Matrix::zeros(steps, n),
    };
    let zero = vec![0.0; n];
    let mut h_prev = vec![0.0; n];
    let mut c_prev = vec![0.0; n];
    let (mut f, mut i, mut o, mut g, mut c, mut h) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for k in 0..steps {
        let t = if reverse { steps - 1 - k } else { k };
        let (hp, cp) = if k == 0 { (&zero, &zero) } else { (&h_prev, &c_prev) };
        cell_step(
            p,
            xs.row(t),
            hp,
            cp,
            StepOut { f: &mut f, i: &mut i, o: &mut o, g: &mut g, c: &mut c, h: &mut h },
        );
        if !c.iter().chain(h.iter()).all(|v| v.is_finite()) {
            return Err(RnnError::NonFiniteActivation { layer, timestep: t });
        }
        tr.f.row_mut(t).copy_from_slice(&f);
        tr.i.row_mut(t).copy_from_slice(&i);
        tr.o.row_mut(t).copy_from_slice(&o);
        tr.g.row_mut(t).copy_from_slice(&g);
        tr.c.row_mut(t).copy_from_slice(&c);
        tr.h.row_mut(t).copy_from_slice(&h);
        core::mem::swap(&mut h_prev, &mut h);
        core::mem::swap(&mut c_prev, &mut c);
    }
    Ok(tr)
}

/// Activations of the first (bidirectional) layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmCache {
    pub fwd: LstmTrace,
    pub bwd: Option<LstmTrace>,
}

/// Forward pass left-to-right and backward pass right-to-left, both from a
/// zero state, merged per timestep by `W_f h_f + W_b h_b + b_h` (no
/// nonlinearity).
pub fn bilstm_forward(params: &BiLstmParams, x_seq: &Matrix) -> Result<(Matrix, BiLstmCache), RnnError> {
    if x_seq.rows() == 0 {
        return Err(RnnError::EmptySequence);
    }
    let fwd = lstm_sequence_forward(&params.fwd, x_seq, false, 0)?;
    let bwd = match &params.bwd {
        Some(p) => Some(lstm_sequence_forward(p, x_seq, true, 0)?),
        None => None,
    };
    let n = params.hidden_size();
    let mut out = Matrix::zeros(x_seq.rows(), n);
    for t in 0..x_seq.rows() {
        let row = out.row_mut(t);
        row.copy_from_slice(&params.b_h);
        params.w_f_merge.mul_vec_add(fwd.h.row(t), row);
        if let (Some(w), Some(tr)) = (&params.w_b_merge, &bwd) {
            w.mul_vec_add(tr.h.row(t), row);
        }
    }
    Ok((out, BiLstmCache { fwd, bwd }))
}

/// Output of one stacked block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutput {
    /// Next residual-stream level: `h + x` (or `h` without the skip).
    pub next: Matrix,
    /// Block activations; `trace.h` is the block's hidden sequence.
    pub trace: LstmTrace,
}

/// `h = LSTM(x)` from a zero state, then `x_next = h + x`.
pub fn residual_block_forward(
    params: &LstmParams,
    x_seq: &Matrix,
    layer_index: usize,
) -> Result<BlockOutput, RnnError> {
    block_forward(params, x_seq, layer_index, true)
}

pub(crate) fn block_forward(
    params: &LstmParams,
    x_seq: &Matrix,
    layer_index: usize,
    residual: bool,
) -> Result<BlockOutput, RnnError> {
    check_len("residual block input width", params.hidden_size(), x_seq.cols())?;
    let trace = lstm_sequence_forward(params, x_seq, false, layer_index)?;
    let mut next = trace.h.clone();
    if residual {
        for (n, x) in next.as_mut_slice().iter_mut().zip(x_seq.as_slice()) {
            *n += x;
        }
    }
    Ok(BlockOutput { next, trace })
}

/// Everything the backward pass needs from a training-mode forward.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub input: Matrix,
    pub first: BiLstmCache,
    /// Residual-stream levels: `stream[0]` is the first-layer output and
    /// `stream[k]` is the input of stacked block `k`. With no stacked blocks
    /// the single entry is the first-layer output.
    pub stream: Vec<Matrix>,
    pub blocks: Vec<LstmTrace>,
    pub z: Matrix,
}

impl ForwardCache {
    /// `(h, x)` consumed by the head: the top block's hidden sequence and
    /// its input. A network without stacked blocks feeds the first-layer
    /// output as `h` and no `x` term.
    pub fn head_inputs(&self) -> (&Matrix, Option<&Matrix>) {
        match self.blocks.last() {
            Some(top) => (&top.h, self.stream.last()),
            None => (&self.stream[0], None),
        }
    }
}

/// Full network: first layer, `num_layers − 1` stacked blocks, then
/// `z_t = σ(W_hz h_t + W_xz x_t + b_z)` at every timestep.
///
/// Returns the `T × 3` predictions and, when `training`, the cache for
/// [`crate::bptt::deeprnn_backward`].
pub fn deeprnn_forward(
    net: &NetworkParams,
    x_seq: &Matrix,
    training: bool,
) -> Result<(Matrix, Option<ForwardCache>), RnnError> {
    net.validate()?;
    if x_seq.rows() == 0 {
        return Err(RnnError::EmptySequence);
    }
    check_len("feature width", net.config.input_size, x_seq.cols())?;
    if let Some(pos) = x_seq.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(RnnError::NonFiniteActivation { layer: 0, timestep: pos / x_seq.cols() });
    }
    let (first_out, first) = bilstm_forward(&net.bilstm, x_seq)?;
    let mut stream = vec![first_out];
    let mut blocks = Vec::with_capacity(net.stack.len());
    for (k, layer) in net.stack.iter().enumerate() {
        let out = block_forward(layer, stream.last().expect("non-empty"), k + 1, net.config.residual)?;
        blocks.push(out.trace);
        if k + 1 < net.stack.len() {
            stream.push(out.next);
        }
    }
    let mut cache = ForwardCache { input: x_seq.clone(), first, stream, blocks, z: Matrix::zeros(0, 0) };
    let z = head_forward(net, &cache)?;
    if training {
        cache.z = z.clone();
        Ok((z, Some(cache)))
    } else {
        Ok((z, None))
    }
}

fn head_forward(net: &NetworkParams, cache: &ForwardCache) -> Result<Matrix, RnnError> {
    let (h, x) = cache.head_inputs();
    let steps = h.rows();
    let mut z = Matrix::zeros(steps, TARGET_COUNT);
    for t in 0..steps {
        let row = z.row_mut(t);
        row.copy_from_slice(&net.head.b_z);
        net.head.w_hz.mul_vec_add(h.row(t), row);
        if let Some(x) = x {
            net.head.w_xz.mul_vec_add(x.row(t), row);
        }
        for v in row.iter_mut() {
            *v = sigmoid(*v);
        }
        if !row.iter().all(|v| v.is_finite()) {
            return Err(RnnError::NonFiniteActivation { layer: net.config.num_layers, timestep: t });
        }
    }
    Ok(z)
}

/// Re-runs stacked blocks `from..to` starting at residual level `from`,
/// returning level `to`. Used by verification code that perturbs a level.
pub fn propagate_stream(net: &NetworkParams, level: &Matrix, from: usize, to: usize) -> Result<Matrix, RnnError> {
    assert!(from <= to && to <= net.stack.len(), "stream levels out of range");
    let mut x = level.clone();
    for k in from..to {
        x = block_forward(&net.stack[k], &x, k + 1, net.config.residual)?.next;
    }
    Ok(x)
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), RnnError> {
    if expected == got {
        Ok(())
    } else {
        Err(RnnError::DimensionMismatch { what, expected, got })
    }
}
