//! A desk-scale adversarial-training laboratory.
//!
//! The crate bundles a small reverse-mode autodiff engine, MLP generators and
//! discriminators (batch norm, spectral norm, linear and margin-cosine critic
//! heads), eight GAN loss pairs including the relativistic margin-cosine
//! loss, Fréchet/inception-style metrics, data sources and an experiment
//! harness.

pub mod autodiff;
pub mod data;
pub mod harness;
pub mod layers;
pub mod losses;
pub mod metrics;
pub mod verify;

#[cfg(feature = "fast-alloc")]
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;
