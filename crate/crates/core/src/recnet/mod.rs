//! Single-layer RNN, GRU and LSTM networks with 12 recurrent units and a
//! tanh readout to 3 outputs, trained by BPTT and Adam.

mod adam;
mod backprop;
mod checkpoint;
mod forward;
mod params;
mod train;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use backprop::{batch_loss, bptt_gradients};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use forward::{forward, forward_with, predict, predict_with, readout, ForwardTrace, Knockout};
pub use params::{Arch, GateParams, NetworkParams, HIDDEN, OUTPUTS};
pub use train::{
    accuracy_from_outputs, concept_correct, evaluate_accuracy, record_traces, train, Accuracy, TraceTensor,
    TrainConfig, TrainReport,
};
