//! Minimal differentiable substrate: weights, dense/LSTM/softmax forward
//! passes, their reverse-mode gradients, optimizers and checkpoints.

pub mod checkpoint;
pub mod lstm;
pub mod ops;
pub mod optim;
pub mod params;

pub use checkpoint::{load_params, save_params};
pub use lstm::{lstm_step, LstmWeights, RecurrentState};
pub use ops::{dense_forward, softmax, Activation};
pub use optim::{OptimizerKind, OptimizerState};
pub use params::{Entry, GradientSet, ParameterSet};
