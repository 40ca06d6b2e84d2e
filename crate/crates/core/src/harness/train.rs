use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{Resources, RunMetadata, TrainConfig};
use super::rollout::{a2c_update, UpdateSettings};
use crate::agent::{Adam, AdamConfig, Checkpoint, LossWeights, PolicyParameters};
use crate::error::{Error, Result};
use crate::game::{generate_game_with, Split};

pub const METRICS_HEADER: &str =
    "run,episode,level,knowledge_source,score,steps,loss_policy,loss_value,entropy";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub run: u64,
    pub episode: usize,
    pub level: String,
    pub knowledge_source: String,
    pub score: f64,
    pub steps: u32,
    pub loss_policy: f64,
    pub loss_value: f64,
    pub entropy: f64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{},{:.6},{:.6},{:.6}",
            self.run,
            self.episode,
            self.level,
            self.knowledge_source,
            self.score,
            self.steps,
            self.loss_policy,
            self.loss_value,
            self.entropy
        )
    }

    pub fn parse(line: &str, origin: &Path, line_no: usize) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::parse(
                origin,
                line_no,
                format!("expected 9 fields, found {}", f.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].trim()
                .parse()
                .map_err(|_| Error::parse(origin, line_no, format!("bad number `{}`", f[i])))
        };
        let int = |i: usize| -> Result<u64> {
            f[i].trim()
                .parse()
                .map_err(|_| Error::parse(origin, line_no, format!("bad integer `{}`", f[i])))
        };
        Ok(MetricsRow {
            run: int(0)?,
            episode: int(1)? as usize,
            level: f[2].to_string(),
            knowledge_source: f[3].to_string(),
            score: num(4)?,
            steps: int(5)? as u32,
            loss_policy: num(6)?,
            loss_value: num(7)?,
            entropy: num(8)?,
        })
    }
}

pub fn write_metrics(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// Reads a metrics file with the exact header.
pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == METRICS_HEADER => {}
        Some(h) => return Err(Error::parse(path, 1, format!("unexpected header `{h}`"))),
        None => {
            return Err(Error::Data(format!(
                "{}: empty metrics file",
                path.display()
            )))
        }
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| MetricsRow::parse(l, path, i + 2))
        .collect()
}

/// A change of knowledge source inside a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SwitchEvent {
    pub run: u64,
    /// First episode trained with the new source.
    pub episode: usize,
    pub from: String,
    pub to: String,
}

pub struct RunResult {
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    pub switches: Vec<SwitchEvent>,
    /// Checkpoint written at the end of each stage, in order.
    pub checkpoints: Vec<(usize, Checkpoint)>,
    pub params: PolicyParameters,
}

pub struct TrainReport {
    pub runs: Vec<RunResult>,
    pub metrics_path: PathBuf,
    pub checkpoint_paths: Vec<PathBuf>,
}

impl TrainReport {
    pub fn rows(&self) -> Vec<MetricsRow> {
        self.runs
            .iter()
            .flat_map(|r| r.rows.iter().cloned())
            .collect()
    }

    pub fn switches(&self) -> Vec<SwitchEvent> {
        self.runs
            .iter()
            .flat_map(|r| r.switches.iter().cloned())
            .collect()
    }
}

/// Seed of the training game played at `episode` (1-based) of a run.
pub fn training_game_seed(run_seed: u64, episode: usize) -> u64 {
    run_seed
        .wrapping_mul(1_000_003)
        .wrapping_add(episode as u64)
}

/// Trains one run: fresh parameters, then every stage in order with the
/// parameters and optimizer state carried across stage boundaries.
pub fn train_run(cfg: &TrainConfig, res: &Resources, seed: u64) -> Result<RunResult> {
    let mut params = PolicyParameters::init(&cfg.agent, res.store.dim(), seed)?;
    let mut optimizer = Adam::new(AdamConfig {
        learning_rate: cfg.learning_rate,
        ..Default::default()
    });
    let settings = UpdateSettings {
        gamma: cfg.gamma,
        weights: LossWeights {
            value: cfg.value_coef,
            entropy: cfg.entropy_coef,
        },
        grad_clip: cfg.grad_clip,
    };
    let generator = cfg.generator();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut switches = Vec::new();
    let mut checkpoints = Vec::new();
    let mut episode = 0usize;
    for (s, stage) in cfg.schedule.iter().enumerate() {
        if s > 0 {
            let from = cfg.schedule[s - 1].source.clone();
            info!(
                "run {seed}: knowledge switch {from} -> {} at episode {}",
                stage.source,
                episode + 1
            );
            switches.push(SwitchEvent {
                run: seed,
                episode: episode + 1,
                from,
                to: stage.source.clone(),
            });
        }
        let knowledge = &res.stages[s];
        for _ in 0..cfg.stage_episodes(stage) {
            episode += 1;
            let spec = generate_game_with(
                &generator,
                cfg.level,
                &res.splits.train,
                training_game_seed(seed, episode),
                Split::Train,
            )?;
            let (traj, loss) = a2c_update(
                &mut params,
                &mut optimizer,
                &res.store,
                knowledge,
                &spec,
                cfg.mode,
                &mut rng,
                &settings,
            )
            .map_err(|e| match e {
                Error::Numeric(m) => Error::Numeric(format!("run {seed} episode {episode}: {m}")),
                other => other,
            })?;
            rows.push(MetricsRow {
                run: seed,
                episode,
                level: cfg.level.as_str().to_string(),
                knowledge_source: stage.source.clone(),
                score: traj.score,
                steps: traj.len() as u32,
                loss_policy: loss.policy,
                loss_value: loss.value,
                entropy: loss.entropy,
            });
        }
        let meta = RunMetadata {
            level: cfg.level,
            run_seed: seed,
            episodes: episode,
            embeddings: cfg.embeddings.clone(),
            vocab: cfg.vocab.clone(),
            knowledge: stage.knowledge.clone(),
            cdc: cfg.cdc,
            max_steps: cfg.max_steps,
        };
        let meta = serde_json::to_value(meta)?;
        checkpoints.push((episode, Checkpoint::new(&params, &stage.source, meta)));
    }
    Ok(RunResult {
        seed,
        rows,
        switches,
        checkpoints,
        params,
    })
}

pub fn checkpoint_path(out_dir: &Path, seed: u64, episode: usize) -> PathBuf {
    out_dir
        .join("checkpoints")
        .join(format!("run{seed}-ep{episode}.json"))
}

/// Trains every run (in parallel), then writes `metrics.csv`, one
/// checkpoint per run and stage, and `switches.log` under `out_dir`.
pub fn train(cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let res = Resources::load(cfg)?;
    let seeds = cfg.seeds();
    info!(
        "training {} runs x {} episodes on {} games",
        seeds.len(),
        cfg.total_episodes(),
        cfg.level
    );
    let runs: Vec<RunResult> = seeds
        .par_iter()
        .map(|&seed| train_run(cfg, &res, seed))
        .collect::<Result<_>>()?;

    let out = Path::new(&cfg.out_dir);
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let rows: Vec<MetricsRow> = runs.iter().flat_map(|r| r.rows.iter().cloned()).collect();
    let metrics_path = out.join("metrics.csv");
    fs::write(&metrics_path, write_metrics(&rows)).map_err(|e| Error::io(&metrics_path, e))?;

    let mut checkpoint_paths = Vec::new();
    let mut log = String::new();
    for run in &runs {
        for (episode, ck) in &run.checkpoints {
            let path = checkpoint_path(out, run.seed, *episode);
            ck.save(&path)?;
            checkpoint_paths.push(path);
        }
        for s in &run.switches {
            writeln!(
                log,
                "run {} episode {}: {} -> {}",
                s.run, s.episode, s.from, s.to
            )
            .expect("string write");
        }
    }
    let log_path = out.join("switches.log");
    fs::write(&log_path, log).map_err(|e| Error::io(&log_path, e))?;
    Ok(TrainReport {
        runs,
        metrics_path,
        checkpoint_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_rows_round_trip() {
        let row = MetricsRow {
            run: 2,
            episode: 7,
            level: "easy".into(),
            knowledge_source: "manual".into(),
            score: 1.0,
            steps: 12,
            loss_policy: -0.25,
            loss_value: 0.125,
            entropy: 1.5,
        };
        let text = write_metrics(&[row.clone()]);
        assert!(text.starts_with(METRICS_HEADER));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, &text).unwrap();
        assert_eq!(read_metrics(&path).unwrap(), vec![row]);
    }

    #[test]
    fn bad_metrics_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "").unwrap();
        assert!(read_metrics(&path).is_err());
        std::fs::write(&path, "a,b\n").unwrap();
        assert!(read_metrics(&path).is_err());
        std::fs::write(
            &path,
            format!("{METRICS_HEADER}\n1,2,easy,x,zero,1,0,0,0\n"),
        )
        .unwrap();
        assert!(matches!(
            read_metrics(&path),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
