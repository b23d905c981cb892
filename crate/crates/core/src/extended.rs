//! Double-double arithmetic (about 32 significant digits) and a loss
//! evaluator built on it.
//!
//! Central differences in `f64` lose roughly `ulp(L)/ε` to rounding, which
//! at `ε = 1e-5` is near `1e-11` per coordinate. Evaluating the loss in
//! double-double pushes that floor far below the truncation error, so the
//! finite-difference estimate is limited only by the step size.

use alloc::vec::Vec;
use core::ops::{Add, Div, Mul, Neg, Sub};

use crate::math::Matrix;
use crate::rnn::{NetworkParams, TensorKind};
use crate::TARGET_COUNT;

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, libm::fma(a, b, -p))
}

const LN2: Dd = Dd { hi: core::f64::consts::LN_2, lo: 2.319_046_813_846_299_6e-17 };

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub const fn new(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    /// Exact `a + b`.
    pub fn sum(a: f64, b: f64) -> Self {
        let (hi, lo) = two_sum(a, b);
        Self { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn ldexp(self, k: i32) -> Self {
        Self { hi: libm::ldexp(self.hi, k), lo: libm::ldexp(self.lo, k) }
    }

    pub fn exp(self) -> Self {
        if self.hi > 709.0 {
            return Self::new(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Self::ZERO;
        }
        let k = libm::round(self.hi / LN2.hi);
        let r = (self - LN2 * Self::new(k)).ldexp(-10);
        // Taylor series of exp(r) − 1 with |r| < 4e-4
        let mut term = r;
        let mut acc = r;
        for n in 2..=12 {
            term = term * r / Self::new(n as f64);
            acc = acc + term;
        }
        // (1 + acc)^1024 via ten squarings of the expm1 form
        for _ in 0..10 {
            acc = acc * acc + acc.ldexp(1);
        }
        (acc + Self::ONE).ldexp(k as i32)
    }

    pub fn sigmoid(self) -> Self {
        if self.hi >= 0.0 {
            Self::ONE / (Self::ONE + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::ONE + e)
        }
    }

    pub fn tanh(self) -> Self {
        let neg = self.hi < 0.0;
        let a = if neg { -self } else { self };
        let e = (-a.ldexp(1)).exp();
        let t = (Self::ONE - e) / (Self::ONE + e);
        if neg {
            -t
        } else {
            t
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        let (hi, lo) = quick_two_sum(p, e + (self.hi * b.lo + self.lo * b.hi));
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * Dd::new(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * Dd::new(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::new(q3)
    }
}

/// A matrix stored row-major, as in [`Matrix`].
struct DdMat<'a> {
    cols: usize,
    data: &'a [Dd],
}

impl DdMat<'_> {
    fn mul_vec_add(&self, x: &[Dd], out: &mut [Dd]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (w, v) in row.iter().zip(x) {
                *o = *o + *w * *v;
            }
        }
    }
}

/// Twelve tensors of one LSTM in checkpoint order.
fn lstm_run(t: &[Vec<Dd>], input: usize, hidden: usize, xs: &[Vec<Dd>], reverse: bool) -> Vec<Vec<Dd>> {
    let steps = xs.len();
    let wx = |g: usize| DdMat { cols: input, data: &t[3 * g] };
    let wh = |g: usize| DdMat { cols: hidden, data: &t[3 * g + 1] };
    let mut h = alloc::vec![Dd::ZERO; hidden];
    let mut c = alloc::vec![Dd::ZERO; hidden];
    let mut out = alloc::vec![Vec::new(); steps];
    for k in 0..steps {
        let ts = if reverse { steps - 1 - k } else { k };
        let mut pre: [Vec<Dd>; 4] = core::array::from_fn(|g| t[3 * g + 2].clone());
        for (g, p) in pre.iter_mut().enumerate() {
            wx(g).mul_vec_add(&xs[ts], p);
            wh(g).mul_vec_add(&h, p);
        }
        for j in 0..hidden {
            let f = pre[0][j].sigmoid();
            let i = pre[1][j].sigmoid();
            let o = pre[2][j].sigmoid();
            let g = pre[3][j].tanh();
            c[j] = f * c[j] + i * g;
            h[j] = o * c[j].tanh();
        }
        out[ts] = h.clone();
    }
    out
}

/// `Σ_t ‖z_t − y_t‖² + λ‖W‖²` in double-double, with one parameter
/// optionally shifted: `probe = (tensor, element, δ)` evaluates at
/// `θ + δ` without rounding the shifted value.
pub fn extended_loss(
    net: &NetworkParams,
    x_seq: &Matrix,
    y_seq: &Matrix,
    lambda: f64,
    probe: Option<(usize, usize, f64)>,
) -> Dd {
    let refs = net.tensors();
    let mut t: Vec<Vec<Dd>> = refs.iter().map(|r| r.data.iter().map(|&v| Dd::new(v)).collect()).collect();
    if let Some((ti, ei, delta)) = probe {
        t[ti][ei] = Dd::sum(refs[ti].data[ei], delta);
    }
    let cfg = net.config;
    let (input, hidden) = (cfg.input_size, cfg.hidden_size);
    let xs: Vec<Vec<Dd>> = (0..x_seq.rows()).map(|r| x_seq.row(r).iter().map(|&v| Dd::new(v)).collect()).collect();
    let steps = xs.len();

    let mut at = 0;
    let fwd = lstm_run(&t[at..at + 12], input, hidden, &xs, false);
    at += 12;
    let bwd = if cfg.bidirectional {
        at += 12;
        Some(lstm_run(&t[at - 12..at], input, hidden, &xs, true))
    } else {
        None
    };
    let w_f = at;
    let w_b = cfg.bidirectional.then_some(w_f + 1);
    let b_h = w_f + 1 + usize::from(cfg.bidirectional);
    at = b_h + 1;
    let mut level: Vec<Vec<Dd>> = (0..steps)
        .map(|s| {
            let mut row = t[b_h].clone();
            DdMat { cols: hidden, data: &t[w_f] }.mul_vec_add(&fwd[s], &mut row);
            if let (Some(wb), Some(b)) = (w_b, &bwd) {
                DdMat { cols: hidden, data: &t[wb] }.mul_vec_add(&b[s], &mut row);
            }
            row
        })
        .collect();

    let blocks = cfg.num_layers.saturating_sub(1);
    let mut head_h = level.clone();
    let mut head_x = None;
    for b in 0..blocks {
        let h = lstm_run(&t[at..at + 12], hidden, hidden, &level, false);
        at += 12;
        let next: Vec<Vec<Dd>> = if cfg.residual {
            h.iter().zip(&level).map(|(hr, xr)| hr.iter().zip(xr).map(|(a, b)| *a + *b).collect()).collect()
        } else {
            h.clone()
        };
        if b + 1 == blocks {
            head_h = h;
            head_x = Some(core::mem::take(&mut level));
        } else {
            level = next;
        }
    }

    let (w_hz, w_xz, b_z) = (at, at + 1, at + 2);
    let mut loss = Dd::ZERO;
    for s in 0..steps {
        let mut z = t[b_z].clone();
        DdMat { cols: hidden, data: &t[w_hz] }.mul_vec_add(&head_h[s], &mut z);
        if let Some(x) = &head_x {
            DdMat { cols: hidden, data: &t[w_xz] }.mul_vec_add(&x[s], &mut z);
        }
        for k in 0..TARGET_COUNT {
            let d = z[k].sigmoid() - Dd::new(y_seq.get(s, k));
            loss = loss + d * d;
        }
    }
    let mut penalty = Dd::ZERO;
    for (r, vals) in refs.iter().zip(&t) {
        if r.kind == TensorKind::Weight {
            for v in vals {
                penalty = penalty + *v * *v;
            }
        }
    }
    loss + Dd::new(lambda) * penalty
}
