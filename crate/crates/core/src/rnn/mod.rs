//! Recurrent cells and the bidirectional network built from them.

mod cell;
mod network;

pub use cell::{gru_cell, maxout_gru_cell, sigmoid, Candidate, CellParams, SequenceCache, StepCache, StepGrads};
pub use network::{
    log_softmax_rows, network_backward, network_backward_into, network_forward, predict_classes, sequence_loss,
    BiLayer, ForwardPass, InputLayer, InputSpec, NetworkParams, NetworkSpec, SequenceInput,
};
