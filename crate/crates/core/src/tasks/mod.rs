//! Training and evaluation of the collaborative plan acquisition (CPA) and
//! theory-of-mind (ToM) models, the feature ablation and report output.

mod ablation;
mod config;
mod cpa;
mod diagnostics;
mod fit;
mod ground_truth;
mod inputs;
mod report;
mod tables;
mod tom;

pub use ablation::*;
pub use config::*;
pub use cpa::*;
pub use diagnostics::*;
pub use fit::*;
pub use ground_truth::*;
pub use inputs::*;
pub use report::*;
pub use tables::*;
pub use tom::*;
