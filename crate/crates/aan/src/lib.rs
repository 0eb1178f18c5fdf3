//! Adversarial transfer of document classifiers across aspects.
//!
//! This crate trains a classifier for a *target* aspect of documents using
//! labels available only for a *source* aspect. Documents are encoded
//! aspect-dependently: a shared convolutional sentence encoder produces
//! sentence vectors, a weakly supervised relevance scorer (driven by keyword
//! rules) softly selects the sentences that matter for the focal aspect, and
//! the relevance-weighted document vector is mapped through a regularized
//! transformation layer. A gradient-reversal adversary pushes the two
//! aspects' encodings to be indistinguishable as sets, so the label head
//! trained on source encodings transfers to target encodings. A word-level
//! reconstruction loss grounds the encoder against the sparsifying pressure
//! of adversarial training.
//!
//! The workhorse pieces:
//!
//! - [`autodiff`]: minimal reverse-mode AD over dense `f64` tensors,
//!   including the gradient-reversal node.
//! - [`corpus`] / [`synth`]: JSON-lines corpora, keyword-rule relevance
//!   labeling, balanced batching, and a seeded synthetic corpus generator.
//! - [`model`]: the full computation graph and its five loss terms.
//! - [`trainer`]: schedules, optimizers, the joint training loop,
//!   checkpointing, and evaluation.
//! - [`analysis`]: representation matrices, sparsity statistics, cosine
//!   neighbors, relevance inspection, and keyword-count sweeps.
//! - [`cli`]: the `aan` command-line entry point.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod analysis;
pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
