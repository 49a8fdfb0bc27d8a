//! Collaborative plan acquisition as link prediction on plan graphs.
//!
//! The crate covers the whole experimental pipeline on synthetic two-player
//! crafting games:
//!
//! - [`plangraph`]: directed AND-graphs of materials, missing-edge arithmetic
//!   and candidate sampling for missing-knowledge prediction.
//! - [`synth`]: plan generation, knowledge splitting, scripted sessions and
//!   ground-truth answers for the mental-state questions.
//! - [`tensor`]: a small reverse-mode autodiff core with Adam.
//! - [`nn`]: GATv2 plan encoder, causal transformer block, edge scorer.
//! - [`tasks`]: training and evaluation of the question-answering and
//!   missing-knowledge models, feature extraction and ablations.
//! - [`analysis`]: F1, paired t-tests, Pearson correlation, probing.

pub mod analysis;
pub mod error;
pub mod nn;
pub mod plangraph;
pub mod synth;
pub mod tasks;
pub mod tensor;

pub use error::{Error, Result};
