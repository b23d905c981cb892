//! Forward computation of the deep recurrent network: LSTM cell,
//! bidirectional first layer, residual LSTM stack and sigmoid output head.

mod forward;
mod params;

pub use forward::{
    bilstm_forward, deeprnn_forward, lstm_cell_forward, propagate_stream, residual_block_forward, BiLstmCache,
    BlockOutput, ForwardCache, GateRecord, HiddenState, LstmTrace,
};
pub use params::{
    BiLstmParams, LstmParams, NetworkConfig, NetworkParams, OutputHeadParams, TensorKind, TensorMut, TensorRef,
    MAX_RECOMMENDED_LAYERS,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RnnError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("non-finite activation at layer {layer}, timestep {timestep}")]
    NonFiniteActivation { layer: usize, timestep: usize },
    #[error("input sequence is empty")]
    EmptySequence,
    #[error("invalid network configuration: {0}")]
    InvalidConfig(&'static str),
}
