//! Multi-task objective: squared error summed over timesteps and the three
//! targets, averaged over samples, plus an L2 penalty on weight matrices.

use crate::math::Matrix;
use crate::TARGET_COUNT;

use super::TrainError;

/// Channels that contribute to the loss; all three for multi-task training.
pub type ChannelMask = [bool; TARGET_COUNT];

pub const ALL_CHANNELS: ChannelMask = [true; TARGET_COUNT];

/// `Σ_t ‖z_t − y_t‖²` restricted to `mask` channels.
pub fn sample_loss(z: &Matrix, y: &Matrix, mask: Option<&ChannelMask>) -> f64 {
    let mask = mask.unwrap_or(&ALL_CHANNELS);
    let mut acc = 0.0;
    for t in 0..z.rows() {
        for (k, (a, b)) in z.row(t).iter().zip(y.row(t)).enumerate() {
            if mask[k] {
                acc += (a - b) * (a - b);
            }
        }
    }
    acc
}

/// `scale · 2(z − y)` on masked channels, zero elsewhere.
pub fn loss_gradient(z: &Matrix, y: &Matrix, scale: f64, mask: Option<&ChannelMask>) -> Matrix {
    let mask = mask.unwrap_or(&ALL_CHANNELS);
    let mut g = Matrix::zeros(z.rows(), z.cols());
    for t in 0..z.rows() {
        for k in 0..z.cols() {
            if mask[k] {
                g.set(t, k, 2.0 * scale * (z.get(t, k) - y.get(t, k)));
            }
        }
    }
    g
}

/// Loss of a single sequence (`N = 1`):
/// `Σ_t ‖z_t − y_t‖² + λ‖θ‖²`.
pub fn multitask_loss(z_seq: &Matrix, y_seq: &Matrix, params_l2_norm_sq: f64, lambda: f64) -> Result<f64, TrainError> {
    if z_seq.shape() != y_seq.shape() || z_seq.cols() != TARGET_COUNT {
        return Err(TrainError::ShapeMismatch);
    }
    Ok(sample_loss(z_seq, y_seq, None) + lambda * params_l2_norm_sq)
}

/// Batch form: `(1/N) Σ_n Σ_t ‖z − y‖² + λ‖θ‖²`.
pub fn batch_loss<'a>(
    pairs: impl IntoIterator<Item = (&'a Matrix, &'a Matrix)>,
    params_l2_norm_sq: f64,
    lambda: f64,
) -> Result<f64, TrainError> {
    let mut n = 0usize;
    let mut acc = 0.0;
    for (z, y) in pairs {
        if z.shape() != y.shape() || z.cols() != TARGET_COUNT {
            return Err(TrainError::ShapeMismatch);
        }
        acc += sample_loss(z, y, None);
        n += 1;
    }
    if n == 0 {
        return Err(TrainError::ShapeMismatch);
    }
    Ok(acc / n as f64 + lambda * params_l2_norm_sq)
}

/// Mean of squared errors over every masked entry.
pub fn mean_squared_error(z: &Matrix, y: &Matrix, mask: Option<&ChannelMask>) -> f64 {
    let mask = mask.unwrap_or(&ALL_CHANNELS);
    let active = mask.iter().filter(|&&m| m).count();
    sample_loss(z, y, Some(mask)) / (z.rows() * active) as f64
}
