use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::KnowledgeContext;
use crate::agent::{
    act, clip_grad_norm, ActMode, Adam, Episode, LossRecord, LossWeights, PolicyParameters,
    StepInput,
};
use crate::autodiff::Matrix;
use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};
use crate::game::{reset, Action, GameSpec};
use crate::subgraph::{
    apply_cdc, build_subgraph, extract_entities, update_entity_set, CommonsenseSubgraph, EntitySet,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub observation: String,
    pub actions: Vec<Action>,
    pub chosen: usize,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    /// Normalized score after the step.
    pub score: f64,
    /// Size of the cumulative entity set when the action was chosen.
    pub entities: usize,
    /// The subgraph the policy saw, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgraph: Option<CommonsenseSubgraph>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    /// All objects placed before the step limit.
    pub solved: bool,
    pub episode_return: f64,
    pub score: f64,
}

impl Trajectory {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// One JSON object per step: observation, action, reward, score and, when
/// kept, the subgraph.
pub fn write_transcript<W: std::io::Write>(
    mut out: W,
    trajectory: &Trajectory,
) -> std::io::Result<()> {
    for (t, s) in trajectory.steps.iter().enumerate() {
        let mut line = serde_json::json!({
            "t": t + 1,
            "observation": s.observation,
            "action": s.actions[s.chosen],
            "reward": s.reward,
            "score": s.score,
        });
        if let Some(g) = &s.subgraph {
            line["subgraph"] = serde_json::to_value(g).expect("subgraph serializes");
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// `R_t = r_t + γ R_{t+1}` computed backwards.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Plays one game with the policy. The returned episode holds the tape
/// for an update when `record` is set.
pub fn run_episode<'a, R: Rng + ?Sized>(
    params: &'a PolicyParameters,
    store: &'a EmbeddingStore,
    knowledge: &KnowledgeContext,
    spec: &GameSpec,
    mode: ActMode,
    rng: &mut R,
    record: bool,
) -> Result<(Trajectory, Episode<'a>)> {
    run_episode_with(params, store, knowledge, spec, mode, rng, record, false)
}

/// [`run_episode`], optionally keeping every step's subgraph.
#[allow(clippy::too_many_arguments)]
pub fn run_episode_with<'a, R: Rng + ?Sized>(
    params: &'a PolicyParameters,
    store: &'a EmbeddingStore,
    knowledge: &KnowledgeContext,
    spec: &GameSpec,
    mode: ActMode,
    rng: &mut R,
    record: bool,
    keep_subgraphs: bool,
) -> Result<(Trajectory, Episode<'a>)> {
    let (mut state, mut obs) = reset(spec)?;
    let mut episode = Episode::new(params, store, record)?;
    let mut entities = EntitySet::new();
    let mut steps = Vec::new();
    while !state.is_done() {
        let text = obs.full_text();
        let found = extract_entities(&text, &knowledge.matcher);
        entities = update_entity_set(&entities, &found, &knowledge.tagger);
        let graph = build_subgraph(&entities, &knowledge.kb);
        let graph = apply_cdc(graph, &entities, knowledge.cdc, &knowledge.kb);
        let actions = state.admissible_actions();
        let eval = episode.step(StepInput {
            observation: &text,
            graph: &graph,
            actions: &actions,
        })?;
        let choice = act(&eval, &actions, mode, rng);
        let out = state.step(&choice.action)?;
        if out.rejected {
            return Err(Error::Data(format!(
                "policy chose inadmissible `{}`",
                choice.action
            )));
        }
        steps.push(TrajectoryStep {
            observation: text,
            actions,
            chosen: choice.index,
            log_prob: choice.log_prob,
            value: choice.value,
            reward: out.reward,
            score: state.normalized_score(),
            entities: entities.len(),
            subgraph: keep_subgraphs.then_some(graph),
        });
        obs = out.observation;
    }
    let episode_return = steps.iter().map(|s| s.reward).sum();
    Ok((
        Trajectory {
            steps,
            solved: state.all_placed(),
            episode_return,
            score: state.normalized_score(),
        },
        episode,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateSettings {
    pub gamma: f64,
    pub weights: LossWeights,
    pub grad_clip: f64,
}

/// Monte-Carlo returns, actor-critic loss over the recorded episode and its
/// gradient. The caller applies the step once the episode is dropped.
pub fn a2c_gradients(
    episode: &mut Episode,
    trajectory: &Trajectory,
    settings: &UpdateSettings,
) -> Result<(LossRecord, Vec<Matrix>)> {
    if trajectory.is_empty() {
        return Err(Error::Data("cannot update from an empty trajectory".into()));
    }
    let returns = discounted_returns(&trajectory.rewards(), settings.gamma);
    let chosen: Vec<usize> = trajectory.steps.iter().map(|s| s.chosen).collect();
    episode.loss(&chosen, &returns, settings.weights)
}

/// Clipped optimizer step. Returns the gradient norm before clipping.
pub fn apply_gradients(
    params: &mut PolicyParameters,
    optimizer: &mut Adam,
    mut grads: Vec<Matrix>,
    grad_clip: f64,
) -> Result<f64> {
    let norm = clip_grad_norm(&mut grads, grad_clip);
    if !norm.is_finite() {
        return Err(Error::Numeric(format!("gradient norm is {norm}")));
    }
    optimizer.step(params.tensors_mut(), &grads);
    if !params.is_finite() {
        return Err(Error::Numeric(
            "parameters became non-finite after an update".into(),
        ));
    }
    Ok(norm)
}

/// One rollout in training mode followed by one update.
pub fn a2c_update<R: Rng + ?Sized>(
    params: &mut PolicyParameters,
    optimizer: &mut Adam,
    store: &EmbeddingStore,
    knowledge: &KnowledgeContext,
    spec: &GameSpec,
    mode: ActMode,
    rng: &mut R,
    settings: &UpdateSettings,
) -> Result<(Trajectory, LossRecord)> {
    let (trajectory, record, grads) = {
        let (trajectory, mut episode) =
            run_episode(params, store, knowledge, spec, mode, rng, true)?;
        let (record, grads) = a2c_gradients(&mut episode, &trajectory, settings)?;
        (trajectory, record, grads)
    };
    apply_gradients(params, optimizer, grads, settings.grad_clip)?;
    Ok((trajectory, record))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(rewards: &[f64], gamma: f64) -> Vec<f64> {
        (0..rewards.len())
            .map(|t| {
                let mut total = 0.0;
                for k in t..rewards.len() {
                    total += gamma.powi((k - t) as i32) * rewards[k];
                }
                total
            })
            .collect()
    }

    #[test]
    fn returns_examples() {
        assert_eq!(discounted_returns(&[1.0], 0.3), vec![1.0]);
        let r = discounted_returns(&[0.0, 1.0], 0.9);
        assert!((r[0] - 0.9).abs() < 1e-15 && r[1] == 1.0);
        assert_eq!(
            discounted_returns(&[0.0, 1.0, 0.0, 1.0], 0.0),
            vec![0.0, 1.0, 0.0, 1.0]
        );
    }

    #[test]
    fn returns_match_brute_force() {
        let rewards: Vec<f64> = (0..50)
            .map(|i| if i % 7 == 3 { 1.0 } else { 0.0 })
            .collect();
        for gamma in [0.0, 0.5, 0.9, 1.0] {
            let fast = discounted_returns(&rewards, gamma);
            let slow = brute_force(&rewards, gamma);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
