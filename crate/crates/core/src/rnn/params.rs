use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::{sqrt, Matrix};
use crate::rng::SeqRng;
use crate::{FEATURE_COUNT, TARGET_COUNT};

use super::RnnError;

/// Default ceiling on total LSTM depth; deeper stacks are accepted but
/// [`NetworkConfig::exceeds_depth_ceiling`] reports them.
pub const MAX_RECOMMENDED_LAYERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub input_size: usize,
    pub hidden_size: usize,
    /// Total LSTM layers including the bidirectional first layer.
    pub num_layers: usize,
    pub seq_len: usize,
    /// When false the first layer runs the forward direction only.
    pub bidirectional: bool,
    /// When false each stacked block emits `h` instead of `h + x` (ablation).
    pub residual: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            input_size: FEATURE_COUNT,
            hidden_size: 128,
            num_layers: 4,
            seq_len: 32,
            bidirectional: true,
            residual: true,
        }
    }
}

impl NetworkConfig {
    pub fn new(hidden_size: usize, num_layers: usize, seq_len: usize) -> Self {
        Self { hidden_size, num_layers, seq_len, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), RnnError> {
        if self.input_size == 0 || self.hidden_size == 0 || self.num_layers == 0 || self.seq_len == 0 {
            return Err(RnnError::InvalidConfig(
                "input_size, hidden_size, num_layers and seq_len must be positive",
            ));
        }
        Ok(())
    }

    pub fn exceeds_depth_ceiling(&self) -> bool {
        self.num_layers > MAX_RECOMMENDED_LAYERS
    }

    /// Number of residual LSTM blocks stacked above the first layer.
    pub fn stacked_blocks(&self) -> usize {
        self.num_layers.saturating_sub(1)
    }
}

/// Whether a tensor counts toward the L2 penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Weight,
    Bias,
}

/// Weights of one LSTM layer, one matrix/bias per gate.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_xf: Matrix,
    pub w_hf: Matrix,
    pub b_f: Vec<f64>,
    pub w_xi: Matrix,
    pub w_hi: Matrix,
    pub b_i: Vec<f64>,
    pub w_xo: Matrix,
    pub w_ho: Matrix,
    pub b_o: Vec<f64>,
    pub w_xc: Matrix,
    pub w_hc: Matrix,
    pub b_c: Vec<f64>,
}

const LSTM_TENSOR_NAMES: [&str; 12] =
    ["w_xf", "w_hf", "b_f", "w_xi", "w_hi", "b_i", "w_xo", "w_ho", "b_o", "w_xc", "w_hc", "b_c"];

impl LstmParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let wx = || Matrix::zeros(hidden_size, input_size);
        let wh = || Matrix::zeros(hidden_size, hidden_size);
        let b = || vec![0.0; hidden_size];
        Self {
            w_xf: wx(),
            w_hf: wh(),
            b_f: b(),
            w_xi: wx(),
            w_hi: wh(),
            b_i: b(),
            w_xo: wx(),
            w_ho: wh(),
            b_o: b(),
            w_xc: wx(),
            w_hc: wh(),
            b_c: b(),
        }
    }

    /// Uniform `±1/√hidden` matrices, zero biases except `b_f = 1`.
    pub fn init(input_size: usize, hidden_size: usize, rng: &mut SeqRng) -> Self {
        let mut p = Self::zeros(input_size, hidden_size);
        let bound = 1.0 / sqrt(hidden_size as f64);
        for (_, kind, data) in p.tensors_mut() {
            if kind == TensorKind::Weight {
                data.iter_mut().for_each(|w| *w = rng.uniform_range(-bound, bound));
            }
        }
        p.b_f.iter_mut().for_each(|b| *b = 1.0);
        p
    }

    pub fn input_size(&self) -> usize {
        self.w_xf.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_xf.rows()
    }

    /// Tensors in serialization order: gates f, i, o, c; each as `w_x, w_h, b`.
    pub fn tensors(&self) -> [(&'static str, TensorKind, &[f64]); 12] {
        use TensorKind::*;
        let n = &LSTM_TENSOR_NAMES;
        [
            (n[0], Weight, self.w_xf.as_slice()),
            (n[1], Weight, self.w_hf.as_slice()),
            (n[2], Bias, &self.b_f),
            (n[3], Weight, self.w_xi.as_slice()),
            (n[4], Weight, self.w_hi.as_slice()),
            (n[5], Bias, &self.b_i),
            (n[6], Weight, self.w_xo.as_slice()),
            (n[7], Weight, self.w_ho.as_slice()),
            (n[8], Bias, &self.b_o),
            (n[9], Weight, self.w_xc.as_slice()),
            (n[10], Weight, self.w_hc.as_slice()),
            (n[11], Bias, &self.b_c),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, TensorKind, &mut [f64]); 12] {
        use TensorKind::*;
        let n = &LSTM_TENSOR_NAMES;
        [
            (n[0], Weight, self.w_xf.as_mut_slice()),
            (n[1], Weight, self.w_hf.as_mut_slice()),
            (n[2], Bias, &mut self.b_f),
            (n[3], Weight, self.w_xi.as_mut_slice()),
            (n[4], Weight, self.w_hi.as_mut_slice()),
            (n[5], Bias, &mut self.b_i),
            (n[6], Weight, self.w_xo.as_mut_slice()),
            (n[7], Weight, self.w_ho.as_mut_slice()),
            (n[8], Bias, &mut self.b_o),
            (n[9], Weight, self.w_xc.as_mut_slice()),
            (n[10], Weight, self.w_hc.as_mut_slice()),
            (n[11], Bias, &mut self.b_c),
        ]
    }

    pub(crate) fn check_shapes(&self) -> Result<(), RnnError> {
        let (h, i) = (self.hidden_size(), self.input_size());
        for m in [&self.w_xf, &self.w_xi, &self.w_xo, &self.w_xc] {
            expect_shape("lstm input weight", m.shape(), (h, i))?;
        }
        for m in [&self.w_hf, &self.w_hi, &self.w_ho, &self.w_hc] {
            expect_shape("lstm recurrent weight", m.shape(), (h, h))?;
        }
        for b in [&self.b_f, &self.b_i, &self.b_o, &self.b_c] {
            expect_shape("lstm bias", (b.len(), 1), (h, 1))?;
        }
        Ok(())
    }
}

/// First layer: forward and (optionally) backward LSTM merged by an affine map.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmParams {
    pub fwd: LstmParams,
    /// `None` for a unidirectional first layer.
    pub bwd: Option<LstmParams>,
    pub w_f_merge: Matrix,
    /// Present exactly when `bwd` is.
    pub w_b_merge: Option<Matrix>,
    pub b_h: Vec<f64>,
}

impl BiLstmParams {
    pub fn zeros(input_size: usize, hidden_size: usize, bidirectional: bool) -> Self {
        Self {
            fwd: LstmParams::zeros(input_size, hidden_size),
            bwd: bidirectional.then(|| LstmParams::zeros(input_size, hidden_size)),
            w_f_merge: Matrix::zeros(hidden_size, hidden_size),
            w_b_merge: bidirectional.then(|| Matrix::zeros(hidden_size, hidden_size)),
            b_h: vec![0.0; hidden_size],
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.b_h.len()
    }
}

/// Per-timestep sigmoid regression head producing (SBP, DBP, MBP).
#[derive(Debug, Clone, PartialEq)]
pub struct OutputHeadParams {
    pub w_hz: Matrix,
    pub w_xz: Matrix,
    pub b_z: Vec<f64>,
}

impl OutputHeadParams {
    pub fn zeros(hidden_size: usize) -> Self {
        Self {
            w_hz: Matrix::zeros(TARGET_COUNT, hidden_size),
            w_xz: Matrix::zeros(TARGET_COUNT, hidden_size),
            b_z: vec![0.0; TARGET_COUNT],
        }
    }
}

/// All trainable tensors of the network plus the configuration they realize.
///
/// Gradients share this layout (see [`crate::bptt::Gradients`]).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub config: NetworkConfig,
    pub bilstm: BiLstmParams,
    pub stack: Vec<LstmParams>,
    pub head: OutputHeadParams,
}

/// Borrowed view of one parameter tensor.
pub struct TensorRef<'a> {
    pub name: String,
    pub kind: TensorKind,
    pub data: &'a [f64],
}

pub struct TensorMut<'a> {
    pub kind: TensorKind,
    pub data: &'a mut [f64],
}

impl NetworkParams {
    pub fn zeros(config: NetworkConfig) -> Result<Self, RnnError> {
        config.validate()?;
        let h = config.hidden_size;
        Ok(Self {
            config,
            bilstm: BiLstmParams::zeros(config.input_size, h, config.bidirectional),
            stack: (0..config.stacked_blocks()).map(|_| LstmParams::zeros(h, h)).collect(),
            head: OutputHeadParams::zeros(h),
        })
    }

    /// Seeded initialization: every matrix uniform in `±1/√hidden`, biases
    /// zero except forget-gate biases at 1.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self, RnnError> {
        let mut net = Self::zeros(config)?;
        let mut rng = SeqRng::new(seed, 0x6e65_745f_696e_6974);
        let h = config.hidden_size;
        net.bilstm.fwd = LstmParams::init(config.input_size, h, &mut rng);
        if config.bidirectional {
            net.bilstm.bwd = Some(LstmParams::init(config.input_size, h, &mut rng));
        }
        for layer in net.stack.iter_mut() {
            *layer = LstmParams::init(h, h, &mut rng);
        }
        let bound = 1.0 / sqrt(h as f64);
        let mut fill = |m: &mut Matrix| {
            m.as_mut_slice().iter_mut().for_each(|w| *w = rng.uniform_range(-bound, bound));
        };
        fill(&mut net.bilstm.w_f_merge);
        if let Some(wb) = net.bilstm.w_b_merge.as_mut() {
            fill(wb);
        }
        fill(&mut net.head.w_hz);
        fill(&mut net.head.w_xz);
        Ok(net)
    }

    /// Same layout, every entry zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    /// Every tensor in checkpoint order: first-layer forward LSTM, backward
    /// LSTM, merge (`w_f`, `w_b`, `b_h`), stacked layers bottom-up, head
    /// (`w_hz`, `w_xz`, `b_z`).
    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        for (n, k, d) in self.bilstm.fwd.tensors() {
            out.push(TensorRef { name: format!("bilstm.fwd.{n}"), kind: k, data: d });
        }
        if let Some(bwd) = &self.bilstm.bwd {
            for (n, k, d) in bwd.tensors() {
                out.push(TensorRef { name: format!("bilstm.bwd.{n}"), kind: k, data: d });
            }
        }
        out.push(TensorRef {
            name: "bilstm.w_f_merge".into(),
            kind: TensorKind::Weight,
            data: self.bilstm.w_f_merge.as_slice(),
        });
        if let Some(wb) = &self.bilstm.w_b_merge {
            out.push(TensorRef { name: "bilstm.w_b_merge".into(), kind: TensorKind::Weight, data: wb.as_slice() });
        }
        out.push(TensorRef { name: "bilstm.b_h".into(), kind: TensorKind::Bias, data: &self.bilstm.b_h });
        for (i, layer) in self.stack.iter().enumerate() {
            for (n, k, d) in layer.tensors() {
                out.push(TensorRef { name: format!("stack.{i}.{n}"), kind: k, data: d });
            }
        }
        out.push(TensorRef { name: "head.w_hz".into(), kind: TensorKind::Weight, data: self.head.w_hz.as_slice() });
        out.push(TensorRef { name: "head.w_xz".into(), kind: TensorKind::Weight, data: self.head.w_xz.as_slice() });
        out.push(TensorRef { name: "head.b_z".into(), kind: TensorKind::Bias, data: &self.head.b_z });
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = Vec::new();
        for (_, kind, data) in self.bilstm.fwd.tensors_mut() {
            out.push(TensorMut { kind, data });
        }
        if let Some(bwd) = &mut self.bilstm.bwd {
            for (_, kind, data) in bwd.tensors_mut() {
                out.push(TensorMut { kind, data });
            }
        }
        out.push(TensorMut { kind: TensorKind::Weight, data: self.bilstm.w_f_merge.as_mut_slice() });
        if let Some(wb) = &mut self.bilstm.w_b_merge {
            out.push(TensorMut { kind: TensorKind::Weight, data: wb.as_mut_slice() });
        }
        out.push(TensorMut { kind: TensorKind::Bias, data: &mut self.bilstm.b_h });
        for layer in self.stack.iter_mut() {
            for (_, kind, data) in layer.tensors_mut() {
                out.push(TensorMut { kind, data });
            }
        }
        out.push(TensorMut { kind: TensorKind::Weight, data: self.head.w_hz.as_mut_slice() });
        out.push(TensorMut { kind: TensorKind::Weight, data: self.head.w_xz.as_mut_slice() });
        out.push(TensorMut { kind: TensorKind::Bias, data: &mut self.head.b_z });
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// Concatenation of all tensors in checkpoint order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for t in self.tensors() {
            out.extend_from_slice(t.data);
        }
        out
    }

    /// Inverse of [`to_flat`](Self::to_flat) for a network of this layout.
    pub fn load_flat(&mut self, flat: &[f64]) -> Result<(), RnnError> {
        let expected = self.param_count();
        if flat.len() != expected {
            return Err(RnnError::DimensionMismatch { what: "flat parameter blob", expected, got: flat.len() });
        }
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.data.len();
            t.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// `‖θ‖²` over weight matrices only (biases excluded).
    pub fn weight_l2_sq(&self) -> f64 {
        self.tensors()
            .iter()
            .filter(|t| t.kind == TensorKind::Weight)
            .map(|t| t.data.iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Checks every tensor shape against `config`.
    pub fn validate(&self) -> Result<(), RnnError> {
        let c = &self.config;
        c.validate()?;
        let h = c.hidden_size;
        let b = &self.bilstm;
        b.fwd.check_shapes()?;
        expect_shape("first-layer input width", (b.fwd.input_size(), b.fwd.hidden_size()), (c.input_size, h))?;
        if b.bwd.is_some() != c.bidirectional || b.w_b_merge.is_some() != c.bidirectional {
            return Err(RnnError::InvalidConfig("backward branch presence disagrees with config.bidirectional"));
        }
        if let Some(bwd) = &b.bwd {
            bwd.check_shapes()?;
            expect_shape("backward first-layer width", (bwd.input_size(), bwd.hidden_size()), (c.input_size, h))?;
        }
        expect_shape("w_f_merge", b.w_f_merge.shape(), (h, h))?;
        if let Some(wb) = &b.w_b_merge {
            expect_shape("w_b_merge", wb.shape(), (h, h))?;
        }
        expect_shape("b_h", (b.b_h.len(), 1), (h, 1))?;
        if self.stack.len() != c.stacked_blocks() {
            return Err(RnnError::DimensionMismatch {
                what: "stacked block count",
                expected: c.stacked_blocks(),
                got: self.stack.len(),
            });
        }
        for layer in &self.stack {
            layer.check_shapes()?;
            expect_shape("stacked block width", (layer.input_size(), layer.hidden_size()), (h, h))?;
        }
        expect_shape("w_hz", self.head.w_hz.shape(), (TARGET_COUNT, h))?;
        expect_shape("w_xz", self.head.w_xz.shape(), (TARGET_COUNT, h))?;
        expect_shape("b_z", (self.head.b_z.len(), 1), (TARGET_COUNT, 1))?;
        Ok(())
    }
}

fn expect_shape(what: &'static str, got: (usize, usize), expected: (usize, usize)) -> Result<(), RnnError> {
    if got == expected {
        return Ok(());
    }
    let (expected, got) = if got.0 != expected.0 { (expected.0, got.0) } else { (expected.1, got.1) };
    Err(RnnError::DimensionMismatch { what, expected, got })
}
