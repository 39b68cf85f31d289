//! Controllable stochastic precipitation-field synthesis with a 3D convolutional
//! variational autoencoder.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithmic piece:
//!
//! * [`tensor`]: dense tensors and a reverse-mode autodiff tape with 3D
//!   convolution, transposed convolution and the fused VAE loss terms.
//! * [`optim`]: Adam with bias correction.
//! * [`model`]: the encoder/decoder pair and the ELBO loss.
//! * [`train`]: the epoch loop with KL warm-up, early stopping and
//!   deterministic shuffling.
//! * [`sampler`]: latent-locus samplers (scaled sigma and two-sided tails)
//!   and decoding into physical units.
//! * [`data`]: grid series, window extraction, bilinear resizing,
//!   normalization, splitting and the synthetic monsoon generator.
//! * [`qq`]: empirical quantiles, QQ curves, extreme reference sets.
//! * [`gradcheck`]: central finite-difference verification of the tape.
//!
//! File formats and the command-line front end live in the `wxvae` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod optim;
pub mod qq;
pub mod rng;
pub mod sampler;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Graph, Scalar, Tensor, Var};
