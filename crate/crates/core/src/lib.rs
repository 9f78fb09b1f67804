//! # genaug
//!
//! A desk-scale laboratory for joint-embedding self-supervised learning with a
//! generative augmentation slot.
//!
//! The generative transform replaces a source image, with probability `p0`, by one
//! of `K` semantically equivalent variants produced offline by a conditional
//! generator. At desk scale the generator is a procedural, label-aware renderer of
//! synthetic shapes, so "the variant keeps the source's semantics" is checkable by
//! construction. Banks produced by real generative models can be imported from PNG
//! directories.
//!
//! Modules:
//!
//! - [`numerics`]: dense `f64` tensors, a tape-based reverse-mode differentiator,
//!   SVD nuclear norm, centering/normalization and the `GWTS` weight format.
//! - [`augmentation`]: the standard transform suite, per-view pipelines and the
//!   generative slot.
//! - [`samplebank`]: the synthetic shapes dataset, the oracle generator and the
//!   `GBNK` sample bank.
//! - [`ssl_objectives`]: NT-Xent, MoCo, BYOL, SimSiam and Barlow Twins losses
//!   with their momentum-encoder and queue state.
//! - [`training`]: optimizers, schedules, the encoder and the pretraining loop.
//! - [`evaluation`]: linear probing, top-k accuracy, CKA/OPD dissimilarity and
//!   bootstrap confidence intervals.
//! - [`cli`]: the batch experiment front-end behind the `genaug` binary.
//!
//! See the crate's `examples/` directory for one runnable program per capability.

pub mod augmentation;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod numerics;
pub mod parallel;
pub mod samplebank;
pub mod ssl_objectives;
pub mod training;

pub use error::{Error, Result};
