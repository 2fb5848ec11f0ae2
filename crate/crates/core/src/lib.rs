//! Learn the distribution of network device configurations with
//! Wasserstein GANs and turn generated samples into HoneyD decoys.
//!
//! The pipeline runs: [`config`] (ingest, label, vocabulary) →
//! [`encoding`] (64×32 two-hot matrices) → [`gan`] (WGAN-GP training and
//! sampling) → [`eval`] (precision/recall curves, uniqueness tables) and
//! [`emitter`] (HoneyD configuration files).

pub mod config;
pub mod emitter;
pub mod encoding;
pub mod eval;
pub mod gan;
pub mod nn;
