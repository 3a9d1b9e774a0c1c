//! The three-layer convolutional denoiser, its gradients and optimizer.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod network;
mod params;
mod real;

pub use adam::{Adam, AdamConfig};
pub use network::{loss_and_grad, loss_value, LossInputs, LossValue, Workspace};
pub use params::{param_count, DenoiserParams, ParamGroup, CHANNELS};
pub use real::Real;
