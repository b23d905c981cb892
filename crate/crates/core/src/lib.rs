#![no_std]
extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod baselines;
pub mod bptt;
pub mod eval;
pub mod extended;
pub mod features;
pub mod math;
pub mod rng;
pub mod rnn;
pub mod synth;
pub mod train;

/// Handcrafted features per beat (PTT, HR, RI, ST, up-time, SV, DV).
pub const FEATURE_COUNT: usize = 7;
/// Regression targets per timestep (SBP, DBP, MBP).
pub const TARGET_COUNT: usize = 3;
