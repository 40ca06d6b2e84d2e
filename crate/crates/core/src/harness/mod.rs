//! Training, evaluation and reporting around the agent.

mod config;
mod eval;
mod plot;
mod rollout;
mod train;

pub use config::{
    load_knowledge, load_vocab, KbRef, KnowledgeContext, Resources, RunMetadata, Stage, TrainConfig,
};
pub use eval::{
    evaluate, evaluate_policy, evaluate_with, format_pm, mean_std, oracle_baseline,
    random_baseline, EpisodeResult, EvalOptions, EvalReport, EvalRow, LoadedAgent, EVAL_HEADER,
};
pub use plot::{curves, ema, plot_curves, svg_chart};
pub use rollout::{
    a2c_gradients, a2c_update, apply_gradients, discounted_returns, run_episode, run_episode_with,
    write_transcript, Trajectory, TrajectoryStep, UpdateSettings,
};
pub use train::{
    checkpoint_path, read_metrics, train, train_run, training_game_seed, write_metrics, MetricsRow,
    RunResult, SwitchEvent, TrainReport, METRICS_HEADER,
};

use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::game::{generate_game, make_splits, EntityVocabulary, Level, Split};

/// Writes `count` games with seeds `seed..seed+count` to
/// `<out>/<level>/<split>/<seed>.json`. IN and train games draw objects
/// from the training part of the vocabulary, OUT games from the rest.
pub fn generate_games(
    vocab: &EntityVocabulary,
    level: Level,
    split: Split,
    count: usize,
    seed: u64,
    fraction: f64,
    split_seed: u64,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let splits = make_splits(vocab, fraction, split_seed)?;
    let source = match split {
        Split::Train => &splits.train,
        Split::In => &splits.test_in,
        Split::Out => &splits.test_out,
    };
    (0..count as u64)
        .map(|k| generate_game(level, source, seed + k, split)?.save(out))
        .collect()
}
