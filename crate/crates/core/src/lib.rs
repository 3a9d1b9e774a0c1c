//! Zero-shot denoising of structured (directionally correlated) noise.
//!
//! A single noisy image is turned into nine pseudo-independent sub-image
//! pairs by directional interpolation, a three-value median filter and
//! randomized assignment. Nine small convolutional networks are trained on
//! those pairs with a symmetric Noise2Noise loss plus a consistency term,
//! and their repeated, averaged predictions are reassembled into the output.

pub mod baselines;
pub mod benchmark;
pub mod cli;
pub mod cnn;
pub mod config;
pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod noise;
pub mod phantom;
pub mod rng;
pub mod sampling;
pub mod trainer;

pub use error::{Error, Result};
pub use image::{Image, PaddedImage, SamplingPosition};
