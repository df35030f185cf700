//! Discriminator-enhanced encoder-decoder for multi-class drug-drug
//! interaction event prediction.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: dense matrices, layers with explicit backward passes, losses,
//!   Adam and a finite-difference gradient checker.
//! - [`model`]: the encoder / decoder / classifier / discriminator stack and
//!   its composite objective.
//! - [`data`]: drug feature tables, pair construction, stratified folds and a
//!   synthetic dataset generator.
//! - [`train`]: training loop, evaluation, cross-validation and ablations.
//! - [`baselines`]: kNN, logistic regression, CART and random forest.
//! - [`metrics`]: confusion matrices, P/R/F1, AUROC and AUPRC.
//! - [`checkpoint`]: JSON manifest plus little-endian binary tensor blob.

pub mod baselines;
pub mod checkpoint;
pub mod data;
mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod train;

pub use error::{AdepError, Result};
