use seqpress_core::math::Matrix;
use seqpress_core::rng::SeqRng;
use seqpress_core::rnn::{LstmParams, NetworkParams};

pub type Outcome = Result<String, String>;

pub fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

pub fn close(a: f64, b: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure((a - b).abs() <= tol, format!("{what}: {a} vs {b} (tol {tol})"))
}

/// Random features and targets in the scaled range.
pub fn random_pair(steps: usize, seed: u64) -> (Matrix, Matrix) {
    let mut rng = SeqRng::new(seed, 0xacc);
    let x = Matrix::from_fn(steps, 7, |_, _| rng.normal());
    let y = Matrix::from_fn(steps, 3, |_, _| rng.uniform_range(0.3, 0.95));
    (x, y)
}

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn affine(w: &Matrix, v: &[f64], row: usize) -> f64 {
    (0..w.cols()).map(|c| w.get(row, c) * v[c]).sum()
}

/// Straight-line LSTM over `xs` (already ordered), zero initial state.
pub fn naive_lstm(p: &LstmParams, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = p.b_f.len();
    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut out = Vec::new();
    for x in xs {
        let mut h_new = vec![0.0; n];
        let mut c_new = vec![0.0; n];
        for j in 0..n {
            let f = sig(affine(&p.w_xf, x, j) + affine(&p.w_hf, &h, j) + p.b_f[j]);
            let i = sig(affine(&p.w_xi, x, j) + affine(&p.w_hi, &h, j) + p.b_i[j]);
            let o = sig(affine(&p.w_xo, x, j) + affine(&p.w_ho, &h, j) + p.b_o[j]);
            let g = (affine(&p.w_xc, x, j) + affine(&p.w_hc, &h, j) + p.b_c[j]).tanh();
            c_new[j] = f * c[j] + i * g;
            h_new[j] = o * c_new[j].tanh();
        }
        h = h_new;
        c = c_new;
        out.push(h.clone());
    }
    out
}

/// Unbatched evaluation of the whole network, one unit at a time.
pub fn naive_forward(net: &NetworkParams, x: &Matrix) -> Vec<Vec<f64>> {
    let steps = x.rows();
    let xs: Vec<Vec<f64>> = (0..steps).map(|t| x.row(t).to_vec()).collect();
    let hf = naive_lstm(&net.bilstm.fwd, &xs);
    let hb = net.bilstm.bwd.as_ref().map(|p| {
        let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let mut out = naive_lstm(p, &rev);
        out.reverse();
        out
    });
    let n = net.bilstm.b_h.len();
    let mut level: Vec<Vec<f64>> = (0..steps)
        .map(|t| {
            (0..n)
                .map(|j| {
                    let mut v = net.bilstm.b_h[j] + affine(&net.bilstm.w_f_merge, &hf[t], j);
                    if let (Some(w), Some(hb)) = (&net.bilstm.w_b_merge, &hb) {
                        v += affine(w, &hb[t], j);
                    }
                    v
                })
                .collect()
        })
        .collect();
    let mut head_in: (Vec<Vec<f64>>, Option<Vec<Vec<f64>>>) = (level.clone(), None);
    for (k, block) in net.stack.iter().enumerate() {
        let h = naive_lstm(block, &level);
        if k + 1 == net.stack.len() {
            head_in = (h, Some(level.clone()));
        } else {
            level = h
                .iter()
                .zip(&level)
                .map(|(h, x)| h.iter().zip(x).map(|(a, b)| if net.config.residual { a + b } else { *a }).collect())
                .collect();
        }
    }
    (0..steps)
        .map(|t| {
            (0..3)
                .map(|k| {
                    let mut v = net.head.b_z[k] + affine(&net.head.w_hz, &head_in.0[t], k);
                    if let Some(xt) = &head_in.1 {
                        v += affine(&net.head.w_xz, &xt[t], k);
                    }
                    sig(v)
                })
                .collect()
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
