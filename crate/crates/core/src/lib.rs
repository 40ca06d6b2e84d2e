//! Commonsense knowledge for household cleanup games.
//!
//! * [`knowledge`] loads ConceptNet, Visual Genome and JSONL triplets.
//! * [`similarity`] measures how close a knowledge base is to a reference one.
//! * [`game`] generates and runs partially observable cleanup games.
//! * [`subgraph`] tracks the entities an agent has seen and cuts a
//!   commonsense subgraph around them.
//! * [`agent`] is the knowledge-aware actor-critic policy.
//! * [`harness`] trains, evaluates and plots.

pub mod agent;
pub mod autodiff;
pub mod embedding;
pub mod error;
pub mod game;
pub mod harness;
pub mod knowledge;
pub mod similarity;
pub mod subgraph;
pub mod text;

pub use error::{Error, Result};
