use std::collections::HashMap;
use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GruIds, PolicyParameters};
use crate::autodiff::{Matrix, Tape, Var};
use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};
use crate::game::Action;
use crate::subgraph::CommonsenseSubgraph;
use crate::text::tokenize;

/// Substituted for empty token sequences; it has no embedding.
pub const PAD_TOKEN: &str = "<pad>";

/// One forward computation: a tape with every parameter bound as a leaf.
pub struct Forward<'a> {
    pub tape: Tape,
    params: &'a PolicyParameters,
    store: &'a EmbeddingStore,
    vars: Vec<Var>,
    actions: HashMap<String, Var>,
}

impl<'a> Forward<'a> {
    pub fn new(params: &'a PolicyParameters, store: &'a EmbeddingStore) -> Result<Self> {
        if store.dim() != params.dim() {
            return Err(Error::Config(format!(
                "embeddings have dimension {} but the policy expects {}",
                store.dim(),
                params.dim()
            )));
        }
        let mut tape = Tape::new();
        let vars = params
            .tensors()
            .iter()
            .enumerate()
            .map(|(i, t)| tape.param(i, t.clone()))
            .collect();
        Ok(Forward {
            tape,
            params,
            store,
            vars,
            actions: HashMap::new(),
        })
    }

    pub fn params(&self) -> &PolicyParameters {
        self.params
    }

    /// Leaf holding the named parameter tensor.
    pub fn param(&self, name: &str) -> Option<Var> {
        self.params
            .names()
            .iter()
            .position(|n| n == name)
            .map(|i| self.vars[i])
    }

    fn p(&self, id: usize) -> Var {
        self.vars[id]
    }

    fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.tape.constant(Matrix::zeros(rows, cols))
    }

    fn token_matrix(&self, tokens: &[String]) -> Matrix {
        let d = self.store.dim();
        if tokens.is_empty() {
            return Matrix::zeros(1, d);
        }
        let mut m = Matrix::zeros(tokens.len(), d);
        for (r, tok) in tokens.iter().enumerate() {
            if let Some(v) = self.store.get(tok) {
                for (o, &x) in m.row_mut(r).iter_mut().zip(v) {
                    *o = f64::from(x);
                }
            }
        }
        m
    }

    fn gru(&mut self, ids: GruIds, x: Var, h0: Var) -> TextEncoding {
        let (wx, wh, b) = (self.p(ids.wx), self.p(ids.wh), self.p(ids.b));
        let features = self.tape.gru(x, h0, wx, wh, b);
        let last = self.tape.value(features).rows() - 1;
        let summary = self.tape.row(features, last);
        TextEncoding { features, summary }
    }
}

/// Which sequence encoder to run over raw tokens.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TextEncoder {
    Observation,
    Action,
}

pub struct TextEncoding {
    /// One row per token.
    pub features: Var,
    /// Final hidden state.
    pub summary: Var,
}

/// Runs a GRU over the token embeddings; an empty input is one pad token.
pub fn encode_text(fw: &mut Forward, tokens: &[String], encoder: TextEncoder) -> TextEncoding {
    let x = fw.token_matrix(tokens);
    let x = fw.tape.constant(x);
    let h0 = fw.zeros(1, fw.params.hidden());
    let ids = match encoder {
        TextEncoder::Observation => fw.params.layout.obs,
        TextEncoder::Action => fw.params.layout.act,
    };
    fw.gru(ids, x, h0)
}

/// Context features: a second GRU over the observation features that
/// starts from the previous context summary.
fn encode_context(fw: &mut Forward, observation: Var, previous: Var) -> TextEncoding {
    let ids = fw.params.layout.ctx;
    fw.gru(ids, observation, previous)
}

pub struct GraphEncoding {
    /// One row per node followed by the sentinel row.
    pub features: Var,
    pub nodes: usize,
    /// Attention weights per round, `nodes × nodes`, rows over neighbourhoods.
    pub attention: Vec<Matrix>,
}

/// Graph attention over knowledge and context edges plus self-loops; the
/// sentinel row is appended afterwards.
pub fn encode_graph(fw: &mut Forward, graph: &CommonsenseSubgraph) -> GraphEncoding {
    let m = graph.nodes.len();
    let sentinel = fw.p(fw.params.layout.sentinel);
    if m == 0 {
        return GraphEncoding {
            features: sentinel,
            nodes: 0,
            attention: Vec::new(),
        };
    }
    let d = fw.store.dim();
    let mut x = Matrix::zeros(m, d);
    for (r, name) in graph.nodes.iter().enumerate() {
        let e = fw.store.embed_entity(name);
        x.row_mut(r).copy_from_slice(&e.vector);
    }
    let mut mask = vec![false; m * m];
    for (i, nb) in graph.neighbourhoods().iter().enumerate() {
        mask[i * m + i] = true;
        for &j in nb {
            mask[i * m + j] = true;
        }
    }
    let mask = Rc::new(mask);

    let mut h = fw.tape.constant(x);
    let mut attention = Vec::new();
    let rounds = fw.params.layout.gat.clone();
    for (r, ids) in rounds.iter().enumerate() {
        let w = fw.p(ids.w);
        let z = fw.tape.matmul(h, w);
        let a_src = fw.p(ids.a_src);
        let a_dst = fw.p(ids.a_dst);
        let s = fw.tape.matmul(z, a_src);
        let t = fw.tape.matmul(z, a_dst);
        let e = fw.tape.outer_sum(s, t);
        let e = fw.tape.leaky_relu(e, fw.params.config().leaky_slope);
        let alpha = fw.tape.softmax_rows(e, Some(mask.clone()));
        attention.push(fw.tape.value(alpha).clone());
        h = fw.tape.matmul(alpha, z);
        if r + 1 < rounds.len() {
            h = fw.tape.elu(h);
        }
    }
    let features = fw.tape.concat_rows(&[h, sentinel]);
    GraphEncoding {
        features,
        nodes: m,
        attention,
    }
}

/// Bidirectional attention between context rows and graph rows, pooled
/// into one state vector.
pub fn co_attention(fw: &mut Forward, context: Var, graph: Var) -> Result<Var> {
    let h = fw.params.hidden();
    let (cs, gs) = (fw.tape.value(context).shape(), fw.tape.value(graph).shape());
    if cs.1 != h || gs.1 != h || cs.0 == 0 || gs.0 == 0 {
        return Err(Error::Data(format!(
            "co-attention expects n x {h} and m x {h} inputs, got {cs:?} and {gs:?}"
        )));
    }
    let layout = &fw.params.layout;
    let (bilinear, w, b) = (
        fw.p(layout.bilinear),
        fw.p(layout.integrate_w),
        fw.p(layout.integrate_b),
    );
    let cb = fw.tape.matmul(context, bilinear);
    let affinity = fw.tape.matmul_bt(cb, graph);
    let to_graph = fw.tape.softmax_rows(affinity, None);
    let attended_graph = fw.tape.matmul(to_graph, graph);
    let g_hat = fw.tape.mean_rows(attended_graph);
    let affinity_t = fw.tape.transpose(affinity);
    let to_context = fw.tape.softmax_rows(affinity_t, None);
    let attended_context = fw.tape.matmul(to_context, context);
    let c_hat = fw.tape.mean_rows(attended_context);
    let both = fw.tape.mul(c_hat, g_hat);
    let pooled = fw.tape.concat_cols(&[c_hat, g_hat, both]);
    let z = fw.tape.matmul(pooled, w);
    let z = fw.tape.add_row(z, b);
    Ok(fw.tape.tanh(z))
}

pub struct Heads {
    /// `1 × k` log-probabilities over the admissible actions.
    pub log_probs: Var,
    pub value: Var,
}

fn encode_action(fw: &mut Forward, action: &Action) -> Var {
    if let Some(&v) = fw.actions.get(action.as_str()) {
        return v;
    }
    let enc = encode_text(fw, &tokenize(action.as_str()), TextEncoder::Action);
    fw.actions.insert(action.as_str().to_string(), enc.summary);
    enc.summary
}

/// Actor scores are dot products of action encodings with a projection
/// of the state; the critic is linear in the state.
pub fn action_scores(fw: &mut Forward, integrated: Var, actions: &[Action]) -> Result<Heads> {
    if actions.is_empty() {
        return Err(Error::Data("no admissible actions to score".into()));
    }
    let encoded: Vec<Var> = actions.iter().map(|a| encode_action(fw, a)).collect();
    let stacked = fw.tape.concat_rows(&encoded);
    let layout = &fw.params.layout;
    let (actor, cw, cb) = (
        fw.p(layout.actor),
        fw.p(layout.critic_w),
        fw.p(layout.critic_b),
    );
    let query = fw.tape.matmul(integrated, actor);
    let scores = fw.tape.matmul_bt(query, stacked);
    let log_probs = fw.tape.log_softmax_rows(scores);
    let v = fw.tape.matmul(integrated, cw);
    let value = fw.tape.add(v, cb);
    Ok(Heads { log_probs, value })
}

/// What the policy sees at one step.
#[derive(Clone, Copy, Debug)]
pub struct StepInput<'s> {
    pub observation: &'s str,
    pub graph: &'s CommonsenseSubgraph,
    pub actions: &'s [Action],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub value: f64,
}

/// Full step: observation and context encoders, graph encoder,
/// co-attention and heads. Returns the heads and the next context summary.
fn forward_step(fw: &mut Forward, input: StepInput, context: Var) -> Result<(Heads, Var)> {
    let obs = encode_text(fw, &tokenize(input.observation), TextEncoder::Observation);
    let ctx = encode_context(fw, obs.features, context);
    let graph = encode_graph(fw, input.graph);
    let integrated = co_attention(fw, ctx.features, graph.features)?;
    let heads = action_scores(fw, integrated, input.actions)?;
    Ok((heads, ctx.summary))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActMode {
    Sample,
    Greedy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Choice {
    pub index: usize,
    pub action: Action,
    pub prob: f64,
    pub log_prob: f64,
    pub value: f64,
}

/// Picks an action: a draw from the distribution, or the most probable one
/// with ties broken by the smaller command text.
pub fn act<R: Rng + ?Sized>(
    eval: &Evaluation,
    actions: &[Action],
    mode: ActMode,
    rng: &mut R,
) -> Choice {
    assert_eq!(
        eval.probs.len(),
        actions.len(),
        "one probability per action"
    );
    assert!(!actions.is_empty(), "no actions");
    let index = match mode {
        ActMode::Greedy => {
            let mut best = 0;
            for i in 1..actions.len() {
                let (p, q) = (eval.probs[i], eval.probs[best]);
                if p > q || (p == q && actions[i].as_str() < actions[best].as_str()) {
                    best = i;
                }
            }
            best
        }
        ActMode::Sample => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = actions.len() - 1;
            for (i, p) in eval.probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            pick
        }
    };
    Choice {
        index,
        action: actions[index].clone(),
        prob: eval.probs[index],
        log_prob: eval.log_probs[index],
        value: eval.value,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub value: f64,
    pub entropy: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            value: 0.5,
            entropy: 0.01,
        }
    }
}

/// Loss terms of one update. `entropy` is the mean per-step entropy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
}

/// Policy evaluation across one episode. With `record` set, the whole
/// episode stays on one tape so [`Episode::loss`] can backpropagate
/// through time; otherwise each step starts a fresh tape.
pub struct Episode<'a> {
    params: &'a PolicyParameters,
    store: &'a EmbeddingStore,
    record: bool,
    fw: Forward<'a>,
    context: Var,
    heads: Vec<Heads>,
}

impl<'a> Episode<'a> {
    pub fn new(
        params: &'a PolicyParameters,
        store: &'a EmbeddingStore,
        record: bool,
    ) -> Result<Self> {
        let mut fw = Forward::new(params, store)?;
        let context = fw.zeros(1, params.hidden());
        Ok(Episode {
            params,
            store,
            record,
            fw,
            context,
            heads: Vec::new(),
        })
    }

    pub fn steps(&self) -> usize {
        self.heads.len()
    }

    /// Current context summary (`1 × H`).
    pub fn context(&self) -> &Matrix {
        self.fw.tape.value(self.context)
    }

    pub fn step(&mut self, input: StepInput) -> Result<Evaluation> {
        if !self.record && !self.heads.is_empty() {
            let carried = self.fw.tape.value(self.context).clone();
            self.fw = Forward::new(self.params, self.store)?;
            self.context = self.fw.tape.constant(carried);
            self.heads.clear();
        }
        let (heads, next) = forward_step(&mut self.fw, input, self.context)?;
        self.context = next;
        let log_probs = self.fw.tape.value(heads.log_probs).data().to_vec();
        let value = self.fw.tape.value(heads.value).scalar();
        self.heads.push(heads);
        if !(value.is_finite() && log_probs.iter().all(|x| x.is_finite())) {
            return Err(Error::Numeric(format!(
                "non-finite policy output at step {}: value {value}, log-probs {log_probs:?}",
                self.heads.len()
            )));
        }
        Ok(Evaluation {
            probs: log_probs.iter().map(|x| x.exp()).collect(),
            log_probs,
            value,
        })
    }

    /// Actor-critic loss over the recorded steps and its gradient, one
    /// tensor per parameter. Advantages use the recorded values as
    /// constants.
    pub fn loss(
        &mut self,
        chosen: &[usize],
        returns: &[f64],
        weights: LossWeights,
    ) -> Result<(LossRecord, Vec<Matrix>)> {
        if !self.record {
            return Err(Error::Config(
                "episode was not recorded for training".into(),
            ));
        }
        let n = self.heads.len();
        if n == 0 || chosen.len() != n || returns.len() != n {
            return Err(Error::Data(format!(
                "loss needs one choice and return per step: {n} steps, {} choices, {} returns",
                chosen.len(),
                returns.len()
            )));
        }
        let tape = &mut self.fw.tape;
        let mut policy_terms = Vec::with_capacity(n);
        let mut value_terms = Vec::with_capacity(n);
        let mut entropy_terms = Vec::with_capacity(n);
        for (t, heads) in self.heads.iter().enumerate() {
            let v = tape.value(heads.value).scalar();
            let advantage = returns[t] - v;
            let lp = tape.pick(heads.log_probs, 0, chosen[t]);
            policy_terms.push(tape.scale(lp, -advantage));
            let target = tape.constant(Matrix::from_vec(1, 1, vec![returns[t]]));
            let diff = tape.sub(target, heads.value);
            value_terms.push(tape.mul(diff, diff));
            let p = tape.exp(heads.log_probs);
            let plogp = tape.mul(p, heads.log_probs);
            let s = tape.sum(plogp);
            entropy_terms.push(tape.scale(s, -1.0));
        }
        let sum = |tape: &mut Tape, terms: &[Var]| {
            let col = tape.concat_rows(terms);
            tape.sum(col)
        };
        let policy = sum(tape, &policy_terms);
        let value = sum(tape, &value_terms);
        let value = tape.scale(value, weights.value);
        let entropy = sum(tape, &entropy_terms);
        let neg_entropy = tape.scale(entropy, -weights.entropy);
        let pv = tape.add(policy, value);
        let total = tape.add(pv, neg_entropy);

        let record = LossRecord {
            policy: tape.value(policy).scalar(),
            value: tape.value(value).scalar(),
            entropy: tape.value(entropy).scalar() / n as f64,
            total: tape.value(total).scalar(),
        };
        if !record.total.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss {record:?}; returns {returns:?}; chosen {chosen:?}"
            )));
        }
        let grads = tape.backward(total);
        let mut out: Vec<Matrix> = self
            .params
            .tensors()
            .iter()
            .map(|t| Matrix::zeros(t.rows(), t.cols()))
            .collect();
        for (id, g) in grads.params() {
            out[id].add_assign(g);
        }
        if !out.iter().all(Matrix::is_finite) {
            return Err(Error::Numeric(format!(
                "non-finite gradient for loss {record:?}"
            )));
        }
        Ok((record, out))
    }
}
