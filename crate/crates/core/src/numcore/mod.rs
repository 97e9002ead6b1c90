//! Dense arithmetic, a ReLU feed-forward network and the Adam optimizer.

mod adam;
mod matrix;
mod network;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use matrix::Matrix;
pub use network::{Activation, Dense, Network};
