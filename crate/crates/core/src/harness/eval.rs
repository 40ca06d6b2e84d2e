use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{load_knowledge, load_vocab, KnowledgeContext, RunMetadata};
use super::rollout::{run_episode, run_episode_with, write_transcript};
use crate::agent::{ActMode, Checkpoint, PolicyParameters};
use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};
use crate::game::{load_games, oracle_policy, reset, GameSpec, Level, Split};

/// Outcome of one evaluation episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub level: Level,
    pub split: Split,
    pub seed: u64,
    pub score: f64,
    pub steps: u32,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `mean ± std` with two decimals.
pub fn format_pm(mean: f64, std: f64) -> String {
    format!("{mean:.2} ± {std:.2}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub level: Level,
    pub split: Split,
    pub method: String,
    /// Number of values behind the mean: games, or runs when aggregated.
    pub n: usize,
    pub steps_mean: f64,
    pub steps_std: f64,
    pub score_mean: f64,
    pub score_std: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub episodes: Vec<EpisodeResult>,
}

pub const EVAL_HEADER: &str = "level,split,method,n,steps,score";

impl EvalReport {
    /// One row per (level, split), statistics over episodes.
    pub fn from_episodes(method: &str, episodes: Vec<EpisodeResult>) -> Self {
        let mut groups: BTreeMap<(Level, Split), Vec<&EpisodeResult>> = BTreeMap::new();
        for e in &episodes {
            groups.entry((e.level, e.split)).or_default().push(e);
        }
        let rows = groups
            .into_iter()
            .map(|((level, split), es)| {
                let steps: Vec<f64> = es.iter().map(|e| f64::from(e.steps)).collect();
                let scores: Vec<f64> = es.iter().map(|e| e.score).collect();
                let (steps_mean, steps_std) = mean_std(&steps);
                let (score_mean, score_std) = mean_std(&scores);
                EvalRow {
                    level,
                    split,
                    method: method.to_string(),
                    n: es.len(),
                    steps_mean,
                    steps_std,
                    score_mean,
                    score_std,
                }
            })
            .collect();
        EvalReport { rows, episodes }
    }

    /// Mean ± std across runs of each run's per-split means.
    pub fn across_runs(method: &str, runs: &[EvalReport]) -> Self {
        let mut groups: BTreeMap<(Level, Split), Vec<&EvalRow>> = BTreeMap::new();
        for r in runs {
            for row in &r.rows {
                groups.entry((row.level, row.split)).or_default().push(row);
            }
        }
        let rows = groups
            .into_iter()
            .map(|((level, split), rs)| {
                let steps: Vec<f64> = rs.iter().map(|r| r.steps_mean).collect();
                let scores: Vec<f64> = rs.iter().map(|r| r.score_mean).collect();
                let (steps_mean, steps_std) = mean_std(&steps);
                let (score_mean, score_std) = mean_std(&scores);
                EvalRow {
                    level,
                    split,
                    method: method.to_string(),
                    n: rs.len(),
                    steps_mean,
                    steps_std,
                    score_mean,
                    score_std,
                }
            })
            .collect();
        EvalReport {
            rows,
            episodes: runs
                .iter()
                .flat_map(|r| r.episodes.iter().cloned())
                .collect(),
        }
    }

    pub fn row(&self, level: Level, split: Split) -> Option<&EvalRow> {
        self.rows
            .iter()
            .find(|r| r.level == level && r.split == split)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(EVAL_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.level,
                r.split,
                r.method,
                r.n,
                format_pm(r.steps_mean, r.steps_std),
                format_pm(r.score_mean, r.score_std)
            )
            .expect("string write");
        }
        out
    }
}

/// Greedy (or sampled) agent play over a set of games.
pub fn evaluate_policy(
    params: &PolicyParameters,
    store: &EmbeddingStore,
    knowledge: &KnowledgeContext,
    games: &[GameSpec],
    episodes_per_game: usize,
    mode: ActMode,
    seed: u64,
) -> Result<Vec<EpisodeResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for spec in games {
        for _ in 0..episodes_per_game {
            let (traj, _) = run_episode(params, store, knowledge, spec, mode, &mut rng, false)?;
            out.push(EpisodeResult {
                level: spec.level,
                split: spec.split,
                seed: spec.seed,
                score: traj.score,
                steps: traj.len() as u32,
            });
        }
    }
    Ok(out)
}

/// Uniformly random admissible actions from a seeded stream.
pub fn random_baseline(
    games: &[GameSpec],
    episodes_per_game: usize,
    seed: u64,
) -> Result<Vec<EpisodeResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for spec in games {
        for _ in 0..episodes_per_game {
            let (mut state, _) = reset(spec)?;
            while !state.is_done() {
                let actions = state.admissible_actions();
                let a = actions
                    .choose(&mut rng)
                    .expect("admissible set is never empty")
                    .clone();
                state.step(&a)?;
            }
            out.push(EpisodeResult {
                level: spec.level,
                split: spec.split,
                seed: spec.seed,
                score: state.normalized_score(),
                steps: state.t(),
            });
        }
    }
    Ok(out)
}

/// The scripted planner played through the engine.
pub fn oracle_baseline(games: &[GameSpec]) -> Result<Vec<EpisodeResult>> {
    games
        .iter()
        .map(|spec| {
            let (mut state, _) = reset(spec)?;
            for a in oracle_policy(spec)? {
                if state.is_done() {
                    break;
                }
                state.step(&a)?;
            }
            Ok(EpisodeResult {
                level: spec.level,
                split: spec.split,
                seed: spec.seed,
                score: state.normalized_score(),
                steps: state.t(),
            })
        })
        .collect()
}

/// A trained policy together with the inputs its checkpoint names.
pub struct LoadedAgent {
    pub params: PolicyParameters,
    pub store: EmbeddingStore,
    pub knowledge: KnowledgeContext,
    pub method: String,
    pub metadata: RunMetadata,
}

impl LoadedAgent {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let params = ck.parameters()?;
        let metadata: RunMetadata = serde_json::from_value(ck.metadata.clone())
            .map_err(|e| Error::Data(format!("checkpoint metadata: {e}")))?;
        let store = EmbeddingStore::load(&metadata.embeddings, None)?;
        if store.dim() != params.dim() {
            return Err(Error::Config(format!(
                "checkpoint expects {}-d embeddings, {} has {}",
                params.dim(),
                metadata.embeddings,
                store.dim()
            )));
        }
        let vocab = load_vocab(metadata.vocab.as_deref())?;
        let knowledge =
            KnowledgeContext::new(load_knowledge(&metadata.knowledge)?, &vocab, metadata.cdc)?;
        Ok(LoadedAgent {
            params,
            store,
            knowledge,
            method: ck.knowledge_source.clone(),
            metadata,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// How [`evaluate_with`] plays and what it records.
#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub mode: ActMode,
    /// Seed of the action sampler in `Sample` mode.
    pub seed: u64,
    /// Writes `<dir>/<level>/<split>/<seed>-<episode>.jsonl` per episode.
    pub transcripts: Option<PathBuf>,
    /// Adds each step's subgraph to the transcripts.
    pub dump_subgraphs: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            mode: ActMode::Greedy,
            seed: 0,
            transcripts: None,
            dump_subgraphs: false,
        }
    }
}

/// Greedy evaluation of a checkpoint on every game under `games_dir`.
pub fn evaluate(
    checkpoint: impl AsRef<Path>,
    games_dir: impl AsRef<Path>,
    episodes_per_game: usize,
) -> Result<EvalReport> {
    evaluate_with(
        checkpoint,
        games_dir,
        episodes_per_game,
        &EvalOptions::default(),
    )
}

pub fn evaluate_with(
    checkpoint: impl AsRef<Path>,
    games_dir: impl AsRef<Path>,
    episodes_per_game: usize,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let agent = LoadedAgent::load(checkpoint)?;
    let games = load_games(games_dir.as_ref())?;
    if games.is_empty() {
        return Err(Error::Data(format!(
            "no games under {}",
            games_dir.as_ref().display()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut episodes = Vec::new();
    for spec in &games {
        for e in 0..episodes_per_game {
            let keep = options.transcripts.is_some() && options.dump_subgraphs;
            let (traj, _) = run_episode_with(
                &agent.params,
                &agent.store,
                &agent.knowledge,
                spec,
                options.mode,
                &mut rng,
                false,
                keep,
            )?;
            if let Some(dir) = &options.transcripts {
                let dir = dir.join(spec.level.as_str()).join(spec.split.as_str());
                std::fs::create_dir_all(&dir).map_err(|err| Error::io(&dir, err))?;
                let path = dir.join(format!("{}-{}.jsonl", spec.seed, e + 1));
                let mut buf = Vec::new();
                write_transcript(&mut buf, &traj).expect("vec write");
                std::fs::write(&path, buf).map_err(|err| Error::io(&path, err))?;
            }
            episodes.push(EpisodeResult {
                level: spec.level,
                split: spec.split,
                seed: spec.seed,
                score: traj.score,
                steps: traj.len() as u32,
            });
        }
    }
    Ok(EvalReport::from_episodes(&agent.method, episodes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{generate_game, EntityVocabulary};

    #[test]
    fn population_statistics() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert_eq!(s, 2.0);
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn pm_format_has_two_decimals() {
        assert_eq!(format_pm(17.234, 3.1649), "17.23 ± 3.16");
        assert_eq!(format_pm(50.0, 0.0), "50.00 ± 0.00");
    }

    fn games(n: u64) -> Vec<GameSpec> {
        let vocab = EntityVocabulary::bundled();
        (0..n)
            .map(|s| generate_game(Level::Easy, &vocab, s, Split::In).unwrap())
            .collect()
    }

    #[test]
    fn oracle_scores_one_with_plan_length_steps() {
        let gs = games(5);
        let results = oracle_baseline(&gs).unwrap();
        for (spec, r) in gs.iter().zip(&results) {
            assert_eq!(r.score, 1.0);
            assert_eq!(r.steps as usize, oracle_policy(spec).unwrap().len());
        }
        let report = EvalReport::from_episodes("oracle", results);
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].score_mean, 1.0);
        assert!(report.to_csv().starts_with(EVAL_HEADER));
    }

    #[test]
    fn random_baseline_is_seeded() {
        let gs = games(4);
        assert_eq!(
            random_baseline(&gs, 2, 7).unwrap(),
            random_baseline(&gs, 2, 7).unwrap()
        );
        for r in random_baseline(&gs, 1, 1).unwrap() {
            assert!(r.steps >= 1 && r.steps <= 50);
            assert!((0.0..=1.0).contains(&r.score));
        }
    }

    #[test]
    fn runs_aggregate_over_means() {
        let mk = |score| {
            EvalReport::from_episodes(
                "m",
                vec![EpisodeResult {
                    level: Level::Easy,
                    split: Split::In,
                    seed: 0,
                    score,
                    steps: 10,
                }],
            )
        };
        let agg = EvalReport::across_runs("m", &[mk(1.0), mk(0.5)]);
        let row = agg.row(Level::Easy, Split::In).unwrap();
        assert_eq!(row.n, 2);
        assert_eq!(row.score_mean, 0.75);
        assert_eq!(row.score_std, 0.25);
    }
}
