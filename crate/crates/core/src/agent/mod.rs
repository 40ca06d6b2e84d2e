//! Knowledge-aware actor-critic policy.
//!
//! Text (observations, actions and the running context) goes through GRU
//! encoders, the commonsense subgraph through a graph attention layer with
//! an extra sentinel node, and the two meet in a bidirectional co-attention
//! layer. Actions are scored against the integrated state; a linear critic
//! reads the same state.

mod network;
mod optim;

pub use network::{
    act, action_scores, co_attention, encode_graph, encode_text, ActMode, Choice, Episode,
    Evaluation, Forward, GraphEncoding, Heads, LossRecord, LossWeights, StepInput, TextEncoder,
    TextEncoding, PAD_TOKEN,
};
pub use optim::{clip_grad_norm, Adam, AdamConfig};

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub hidden: usize,
    pub gat_rounds: usize,
    pub leaky_slope: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            hidden: 64,
            gat_rounds: 1,
            leaky_slope: 0.2,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("hidden size must be positive".into()));
        }
        if self.gat_rounds == 0 {
            return Err(Error::Config(
                "at least one attention round is required".into(),
            ));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(Error::Config(
                "leaky slope must be a non-negative number".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct GruIds {
    pub wx: usize,
    pub wh: usize,
    pub b: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct GatIds {
    pub w: usize,
    pub a_src: usize,
    pub a_dst: usize,
}

/// Positions of each tensor in [`PolicyParameters::tensors`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Layout {
    pub obs: GruIds,
    pub ctx: GruIds,
    pub act: GruIds,
    pub gat: Vec<GatIds>,
    pub sentinel: usize,
    pub bilinear: usize,
    pub integrate_w: usize,
    pub integrate_b: usize,
    pub actor: usize,
    pub critic_w: usize,
    pub critic_b: usize,
}

struct Shape {
    name: String,
    rows: usize,
    cols: usize,
    fan_in: usize,
}

fn shapes(config: &AgentConfig, dim: usize) -> (Layout, Vec<Shape>) {
    let h = config.hidden;
    let mut out = Vec::new();
    let mut add = |name: String, rows, cols, fan_in| {
        out.push(Shape {
            name,
            rows,
            cols,
            fan_in,
        });
        out.len() - 1
    };
    let gru = |prefix: &str,
               input: usize,
               add: &mut dyn FnMut(String, usize, usize, usize) -> usize| GruIds {
        wx: add(format!("{prefix}.wx"), input, 3 * h, input),
        wh: add(format!("{prefix}.wh"), h, 3 * h, h),
        b: add(format!("{prefix}.b"), 1, 3 * h, h),
    };
    let obs = gru("obs_gru", dim, &mut add);
    let ctx = gru("ctx_gru", h, &mut add);
    let act = gru("act_gru", dim, &mut add);
    let gat = (0..config.gat_rounds)
        .map(|r| {
            let input = if r == 0 { dim } else { h };
            GatIds {
                w: add(format!("gat{r}.w"), input, h, input),
                a_src: add(format!("gat{r}.a_src"), h, 1, h),
                a_dst: add(format!("gat{r}.a_dst"), h, 1, h),
            }
        })
        .collect();
    let layout = Layout {
        obs,
        ctx,
        act,
        gat,
        sentinel: add("sentinel".into(), 1, h, h),
        bilinear: add("coattention.bilinear".into(), h, h, h),
        integrate_w: add("integrate.w".into(), 3 * h, h, 3 * h),
        integrate_b: add("integrate.b".into(), 1, h, 3 * h),
        actor: add("actor.w".into(), h, h, h),
        critic_w: add("critic.w".into(), h, 1, h),
        critic_b: add("critic.b".into(), 1, 1, h),
    };
    (layout, out)
}

/// Trainable tensors of the policy. Token embeddings stay outside: they
/// are frozen and read from the [`crate::embedding::EmbeddingStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParameters {
    config: AgentConfig,
    dim: usize,
    names: Vec<String>,
    tensors: Vec<Matrix>,
    pub(crate) layout: Layout,
}

impl PolicyParameters {
    /// Uniform initialization in `±1/sqrt(fan_in)` from a seeded stream.
    pub fn init(config: &AgentConfig, dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let (layout, shapes) = shapes(config, dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = shapes
            .iter()
            .map(|s| {
                let bound = 1.0 / (s.fan_in as f64).sqrt();
                let data = (0..s.rows * s.cols)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect();
                Matrix::from_vec(s.rows, s.cols, data)
            })
            .collect();
        Ok(PolicyParameters {
            config: config.clone(),
            dim,
            names: shapes.into_iter().map(|s| s.name).collect(),
            tensors,
            layout,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    /// Token embedding dimension the parameters were built for.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Matrix] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Matrix] {
        &mut self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&Matrix> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(|t| t.data().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Matrix::is_finite)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to rebuild a trained policy and the inputs it expects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub config: AgentConfig,
    pub embedding_dim: usize,
    /// Knowledge source the policy was last trained with.
    pub knowledge_source: String,
    /// Free-form run description: resource paths, training settings.
    pub metadata: serde_json::Value,
    tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(
        params: &PolicyParameters,
        knowledge_source: &str,
        metadata: serde_json::Value,
    ) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: params.config.clone(),
            embedding_dim: params.dim,
            knowledge_source: knowledge_source.to_string(),
            metadata,
            tensors: params
                .names
                .iter()
                .zip(&params.tensors)
                .map(|(name, t)| NamedTensor {
                    name: name.clone(),
                    rows: t.rows(),
                    cols: t.cols(),
                    data: t.data().to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuilds the parameters, checking every tensor against the layout.
    pub fn parameters(&self) -> Result<PolicyParameters> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        let mut params = PolicyParameters::init(&self.config, self.embedding_dim, 0)?;
        if params.names.len() != self.tensors.len() {
            return Err(Error::Data(format!(
                "checkpoint has {} tensors, expected {}",
                self.tensors.len(),
                params.names.len()
            )));
        }
        for (i, t) in self.tensors.iter().enumerate() {
            let want = &params.tensors[i];
            if t.name != params.names[i]
                || (t.rows, t.cols) != want.shape()
                || t.data.len() != t.rows * t.cols
            {
                return Err(Error::Data(format!(
                    "checkpoint tensor `{}` ({}x{}) does not match `{}` {:?}",
                    t.name,
                    t.rows,
                    t.cols,
                    params.names[i],
                    want.shape()
                )));
            }
            params.tensors[i] = Matrix::from_vec(t.rows, t.cols, t.data.clone());
        }
        if !params.is_finite() {
            return Err(Error::Numeric(
                "checkpoint contains non-finite parameters".into(),
            ));
        }
        Ok(params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = AgentConfig {
            hidden: 8,
            ..Default::default()
        };
        let a = PolicyParameters::init(&cfg, 5, 3).unwrap();
        let b = PolicyParameters::init(&cfg, 5, 3).unwrap();
        let c = PolicyParameters::init(&cfg, 5, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let wx = a.tensor("obs_gru.wx").unwrap();
        assert_eq!(wx.shape(), (5, 24));
        assert!(wx.data().iter().all(|x| x.abs() <= 1.0 / 5f64.sqrt()));
        assert_eq!(a.tensor("sentinel").unwrap().shape(), (1, 8));
    }

    #[test]
    fn bad_config_is_rejected() {
        let cfg = AgentConfig {
            hidden: 0,
            ..Default::default()
        };
        assert!(matches!(
            PolicyParameters::init(&cfg, 5, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let cfg = AgentConfig {
            hidden: 6,
            gat_rounds: 2,
            ..Default::default()
        };
        let params = PolicyParameters::init(&cfg, 4, 11).unwrap();
        let ck = Checkpoint::new(&params, "manual", serde_json::json!({"episodes": 3}));
        let text = ck.to_json();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back.parameters().unwrap(), params);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn mismatched_checkpoint_is_rejected() {
        let params = PolicyParameters::init(&AgentConfig::default(), 4, 1).unwrap();
        let mut ck = Checkpoint::new(&params, "manual", serde_json::Value::Null);
        ck.embedding_dim = 5;
        assert!(ck.parameters().is_err());
    }
}
