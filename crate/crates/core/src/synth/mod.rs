//! Synthetic stand-in for the two-player crafting dataset: plan generation,
//! complementary knowledge and tool splits, scripted sessions and
//! ground-truth answers to the mental-state questions.

mod answers;
mod config;
mod dataset;
mod plan;
mod session;

pub use answers::{answer_intention, answer_knowledge, answer_status};
pub use config::{parse_bool, parse_key_values, ConfigEntry, GameConfig};
pub use dataset::{
    assign_splits, dataset_stats, generate_dataset, generate_session, load_dataset, mix_seed, parse_dataset,
    projector_for, read_dataset, serialize_dataset, validate_session, write_dataset, DatasetSplit, DatasetStats,
};
pub use plan::{
    check_size, generate_plan, sample_size, split_knowledge, split_tools, MAX_MATERIALS,
    MAX_STEPS, MIN_MATERIALS, MIN_STEPS,
};
pub use session::{
    simulate_session, About, CraftEvent, DialogueMove, FeatureProjector, GameSession, Observation,
    QuestionRecord, ShareEvent, Split, ToMAnswer, ToMKind, Trace, Utterance,
};

/// Value of the `v` field of every serialized session.
pub const SCHEMA_VERSION: &str = "v1";
