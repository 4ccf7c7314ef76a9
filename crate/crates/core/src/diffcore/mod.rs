//! Minimal reverse-mode differentiation substrate.
//!
//! A [`Graph`] is rebuilt for every training step: parameters are copied in
//! as leaves, the forward pass records coarse tensor operations, and
//! [`Graph::backward`] replays them in reverse. Everything is `f64`.

mod gradcheck;
mod graph;
mod nn;
mod optim;
mod tensor;

pub use gradcheck::grad_check;
pub use graph::{Graph, Var};
pub use nn::{linear, lstm_sequence, lstm_step, LinearParams, LinearVars, LstmParams, LstmVars};
pub use optim::{AdamParams, AdamState, GrdaParams, GrdaState};
pub use tensor::Tensor;
