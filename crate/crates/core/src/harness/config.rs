use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{ActMode, AgentConfig};
use crate::embedding::{EmbeddingStore, DEFAULT_DIM};
use crate::error::{Error, Result};
use crate::game::{
    make_splits, EntityVocabulary, GeneratorConfig, Level, Splits, DEFAULT_MAX_STEPS,
};
use crate::knowledge::{load_kb, KbFormat, KnowledgeBase, SourceTag};
use crate::subgraph::{CdcMode, EntityMatcher, GroupTagger};

/// A knowledge file and how to read it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbRef {
    pub path: String,
    pub format: KbFormat,
}

/// One block of the knowledge schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    /// Label written to the `knowledge_source` metrics column.
    pub source: String,
    /// Files merged into this stage's knowledge base. Empty means no knowledge.
    #[serde(default)]
    pub knowledge: Vec<KbRef>,
    /// Episodes in this stage; defaults to the config's `episodes`.
    #[serde(default)]
    pub episodes: Option<usize>,
}

fn default_episodes() -> usize {
    100
}
fn default_runs() -> usize {
    5
}
fn default_gamma() -> f64 {
    0.9
}
fn default_lr() -> f64 {
    1e-3
}
fn default_value_coef() -> f64 {
    0.5
}
fn default_entropy_coef() -> f64 {
    0.01
}
fn default_clip() -> f64 {
    5.0
}
fn default_max_steps() -> u32 {
    DEFAULT_MAX_STEPS
}
fn default_dim() -> usize {
    DEFAULT_DIM
}
fn default_fraction() -> f64 {
    0.8
}
fn default_mode() -> ActMode {
    ActMode::Sample
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub level: Level,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// One seed per run; `1..=runs` when omitted.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    pub schedule: Vec<Stage>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_value_coef")]
    pub value_coef: f64,
    #[serde(default = "default_entropy_coef")]
    pub entropy_coef: f64,
    #[serde(default = "default_clip")]
    pub grad_clip: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u32,
    pub embeddings: String,
    #[serde(default = "default_dim")]
    pub embedding_dim: usize,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub cdc: CdcMode,
    /// Entity vocabulary file; the bundled one when omitted.
    #[serde(default)]
    pub vocab: Option<String>,
    #[serde(default = "default_fraction")]
    pub split_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub generator: GeneratorConfig,
    /// How actions are chosen while training.
    #[serde(default = "default_mode")]
    pub mode: ActMode,
    pub out_dir: String,
}

fn resolve(base: &Path, p: &str) -> String {
    let path = Path::new(p);
    if path.is_absolute() {
        p.to_string()
    } else {
        base.join(path).to_string_lossy().into_owned()
    }
}

impl TrainConfig {
    /// Reads a config; relative paths are taken from the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: TrainConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.embeddings = resolve(base, &self.embeddings);
        self.out_dir = resolve(base, &self.out_dir);
        if let Some(v) = &self.vocab {
            self.vocab = Some(resolve(base, v));
        }
        for stage in &mut self.schedule {
            for kb in &mut stage.knowledge {
                kb.path = resolve(base, &kb.path);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.episodes == 0 {
            return bad("episodes must be at least 1".into());
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if let Some(seeds) = &self.seeds {
            if seeds.len() != self.runs {
                return bad(format!(
                    "{} seeds given for {} runs",
                    seeds.len(),
                    self.runs
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive".into());
        }
        if !(self.grad_clip > 0.0) {
            return bad("gradient clip must be positive".into());
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1".into());
        }
        if self.schedule.is_empty() {
            return bad("knowledge schedule is empty".into());
        }
        for s in &self.schedule {
            if s.source.trim().is_empty() {
                return bad("schedule stage without a source label".into());
            }
            if s.episodes == Some(0) {
                return bad(format!("stage `{}` has zero episodes", s.source));
            }
        }
        self.agent.validate()
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.seeds
            .clone()
            .unwrap_or_else(|| (1..=self.runs as u64).collect())
    }

    pub fn stage_episodes(&self, stage: &Stage) -> usize {
        stage.episodes.unwrap_or(self.episodes)
    }

    pub fn total_episodes(&self) -> usize {
        self.schedule.iter().map(|s| self.stage_episodes(s)).sum()
    }

    pub fn generator(&self) -> GeneratorConfig {
        GeneratorConfig {
            max_steps: self.max_steps,
            ..self.generator.clone()
        }
    }
}

pub fn load_vocab(path: Option<&str>) -> Result<EntityVocabulary> {
    match path {
        Some(p) => EntityVocabulary::load(p),
        None => Ok(EntityVocabulary::bundled()),
    }
}

/// Reads and merges a stage's knowledge files.
pub fn load_knowledge(refs: &[KbRef]) -> Result<KnowledgeBase> {
    let mut merged: Option<KnowledgeBase> = None;
    for r in refs {
        let kb = load_kb(PathBuf::from(&r.path), r.format)?;
        merged = Some(match merged {
            None => kb,
            Some(m) => {
                let tag = if m.source() == kb.source() {
                    m.source()
                } else {
                    SourceTag::Other
                };
                m.merge(&kb, tag)
            }
        });
    }
    Ok(merged.unwrap_or_else(|| KnowledgeBase::empty(SourceTag::Other)))
}

/// What the agent needs to turn observations into subgraphs.
#[derive(Clone, Debug)]
pub struct KnowledgeContext {
    pub kb: KnowledgeBase,
    pub matcher: EntityMatcher,
    pub tagger: GroupTagger,
    pub cdc: CdcMode,
}

impl KnowledgeContext {
    /// Entities are recognized by name from the full game vocabulary.
    pub fn new(kb: KnowledgeBase, vocab: &EntityVocabulary, cdc: CdcMode) -> Result<Self> {
        Ok(KnowledgeContext {
            kb,
            matcher: EntityMatcher::new(vocab.entity_names())?,
            tagger: GroupTagger::from_vocab(vocab),
            cdc,
        })
    }
}

/// Everything loaded up front, so missing files fail before training.
pub struct Resources {
    pub vocab: EntityVocabulary,
    pub splits: Splits,
    pub store: EmbeddingStore,
    pub stages: Vec<KnowledgeContext>,
}

impl Resources {
    pub fn load(cfg: &TrainConfig) -> Result<Self> {
        let vocab = load_vocab(cfg.vocab.as_deref())?;
        let splits = make_splits(&vocab, cfg.split_fraction, cfg.split_seed)?;
        let store = EmbeddingStore::load(&cfg.embeddings, Some(cfg.embedding_dim))?;
        let stages = cfg
            .schedule
            .iter()
            .map(|s| KnowledgeContext::new(load_knowledge(&s.knowledge)?, &vocab, cfg.cdc))
            .collect::<Result<Vec<_>>>()?;
        Ok(Resources {
            vocab,
            splits,
            store,
            stages,
        })
    }
}

/// Run description stored in checkpoints so evaluation can rebuild the
/// same inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub level: Level,
    pub run_seed: u64,
    pub episodes: usize,
    pub embeddings: String,
    pub vocab: Option<String>,
    pub knowledge: Vec<KbRef>,
    pub cdc: CdcMode,
    pub max_steps: u32,
}
