//! Procedurally generated cleanup games.

mod engine;
mod oracle;
mod spec;
mod vocab;

pub use engine::{reset, Action, GameState, Observation, StepOutcome};
pub use oracle::oracle_policy;
pub use spec::{
    generate_game, generate_game_with, load_games, Direction, Exit, GameSpec, GeneratorConfig,
    Level, PlacedLocation, PlacedObject, Position, Split, DEFAULT_MAX_STEPS,
};
pub use vocab::{
    make_splits, EntityVocabulary, LocationEntry, LocationKind, ObjectEntry, Relation, Splits,
};

use serde::{Deserialize, Serialize};

/// One line of a trajectory transcript.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub step: u32,
    pub observation: String,
    pub action: String,
    pub reward: f64,
    pub score: f64,
}
