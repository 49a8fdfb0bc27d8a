//! Model components: GATv2 plan encoder with mean pooling, a single causal
//! Transformer block, the edge scorer, classification heads and per-stream
//! input embedders.

mod encoder;
mod gat;
mod heads;
mod linear;
mod model;
mod transformer;

pub use encoder::{edge_feature_dim, PlanEncoder, PlanEncoding, PlanInput, NODE_FEATURE_DIM};
pub use gat::{GatOutput, GatV2Layer, GraphStructure, HeadAggregation};
pub use heads::{argmax, is_positive, EdgeScorer, ModalityEmbedders, SlotSpec, ToMHead};
pub use linear::{LayerNorm, Linear};
pub use model::{Model, ModelConfig, ModelOutput, Readout, SequenceInput};
pub use transformer::{positional_encoding, TransformerBlock};
