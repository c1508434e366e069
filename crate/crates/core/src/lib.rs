//! Timestep clustering for multistage diffusion models, driven by the
//! closed-form optimal denoiser of an empirical dataset.
//!
//! The crate is organized bottom-up:
//!
//! * [`schedule`]: VP/VE perturbation kernels, SNR maps and SDE coefficients.
//! * [`dataset`]: CIFAR-10 binary and CSV loaders, synthetic fixtures.
//! * [`denoiser`]: optimal denoiser, posterior mean, score and log-density.
//! * [`similarity`]: functional similarity estimation and sample stores.
//! * [`cluster`]: three-interval threshold search, n-interval dynamic
//!   program and baseline partitions.
//! * [`sampler`]: probability-flow ODE sampler for end-to-end validation.
//! * [`budget`]: GFLOPs / PFLOPs accounting.
//! * [`rng`]: counter-based random substreams.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod budget;
pub mod cluster;
pub mod dataset;
pub mod denoiser;
pub mod error;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod similarity;

pub use error::{Error, Result};
