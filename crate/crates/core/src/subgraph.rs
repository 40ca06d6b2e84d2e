//! The agent's per-episode commonsense subgraph: entities seen so far plus
//! the knowledge edges among them, optionally densified with direct
//! object-to-location context edges.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{EntityVocabulary, GameSpec};
use crate::knowledge::KnowledgeBase;
use crate::text::tokenize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Object,
    Location,
}

/// Cumulative entity set with a group tag per entity.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySet {
    entities: BTreeMap<String, Group>,
}

impl EntitySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entities.contains_key(name)
    }

    pub fn group(&self, name: &str) -> Option<Group> {
        self.entities.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Group)> {
        self.entities.iter().map(|(n, g)| (n.as_str(), *g))
    }

    pub fn names(&self) -> BTreeSet<&str> {
        self.entities.keys().map(String::as_str).collect()
    }

    /// Adds `name` unless present; an existing tag is never changed.
    pub fn insert(&mut self, name: &str, group: Group) {
        self.entities.entry(name.to_string()).or_insert(group);
    }
}

/// Group tags from game metadata. Unknown names are objects.
#[derive(Clone, Debug, Default)]
pub struct GroupTagger {
    locations: HashSet<String>,
}

impl GroupTagger {
    pub fn from_vocab(vocab: &EntityVocabulary) -> Self {
        GroupTagger {
            locations: vocab.locations.iter().map(|l| l.name.clone()).collect(),
        }
    }

    pub fn from_spec(spec: &GameSpec) -> Self {
        GroupTagger {
            locations: spec.locations.iter().map(|l| l.name.clone()).collect(),
        }
    }

    pub fn tag(&self, name: &str) -> Group {
        if self.locations.contains(name) {
            Group::Location
        } else {
            Group::Object
        }
    }
}

/// Longest-match-first dictionary matcher over word tokens.
#[derive(Clone, Debug)]
pub struct EntityMatcher {
    names: HashMap<String, String>,
    max_tokens: usize,
}

impl EntityMatcher {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut map = HashMap::new();
        let mut max_tokens = 0;
        for name in names {
            let tokens = tokenize(name.as_ref());
            if tokens.is_empty() {
                continue;
            }
            max_tokens = max_tokens.max(tokens.len());
            map.insert(tokens.join(" "), name.as_ref().to_string());
        }
        if map.is_empty() {
            return Err(Error::Config("entity vocabulary is empty".into()));
        }
        Ok(EntityMatcher {
            names: map,
            max_tokens,
        })
    }

    /// Vocabulary names mentioned in `text`. At each position the longest
    /// name wins and its tokens are consumed.
    pub fn extract(&self, text: &str) -> BTreeSet<String> {
        let tokens = tokenize(text);
        let mut found = BTreeSet::new();
        let mut i = 0;
        while i < tokens.len() {
            let longest = (1..=self.max_tokens.min(tokens.len() - i))
                .rev()
                .find_map(|k| self.names.get(&tokens[i..i + k].join(" ")).map(|n| (k, n)));
            match longest {
                Some((k, name)) => {
                    found.insert(name.clone());
                    i += k;
                }
                None => i += 1,
            }
        }
        found
    }
}

/// Entities mentioned in an observation.
pub fn extract_entities(text: &str, matcher: &EntityMatcher) -> BTreeSet<String> {
    matcher.extract(text)
}

/// `previous ∪ extracted`, tagging only the new names.
pub fn update_entity_set(
    previous: &EntitySet,
    extracted: &BTreeSet<String>,
    tagger: &GroupTagger,
) -> EntitySet {
    let mut next = previous.clone();
    for name in extracted {
        next.insert(name, tagger.tag(name));
    }
    next
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Knowledge,
    Cdc,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub relation: String,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommonsenseSubgraph {
    pub nodes: Vec<String>,
    pub groups: Vec<Group>,
    pub edges: Vec<Edge>,
}

pub const CDC_RELATION: &str = "context";

impl CommonsenseSubgraph {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.nodes.binary_search_by(|n| n.as_str().cmp(name)).ok()
    }

    /// Whether any edge joins nodes `a` and `b`, in either direction.
    pub fn connected(&self, a: usize, b: usize) -> bool {
        self.edges
            .iter()
            .any(|e| (e.src == a && e.dst == b) || (e.src == b && e.dst == a))
    }

    /// Undirected neighbour lists, self excluded.
    pub fn neighbourhoods(&self) -> Vec<BTreeSet<usize>> {
        let mut out = vec![BTreeSet::new(); self.nodes.len()];
        for e in &self.edges {
            if e.src != e.dst {
                out[e.src].insert(e.dst);
                out[e.dst].insert(e.src);
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("subgraph serializes")
    }
}

/// Nodes are the entity set (sorted); edges are all knowledge triplets
/// whose two endpoints are in the set.
pub fn build_subgraph(entities: &EntitySet, kb: &KnowledgeBase) -> CommonsenseSubgraph {
    let nodes: Vec<String> = entities.iter().map(|(n, _)| n.to_string()).collect();
    let groups = entities.iter().map(|(_, g)| g).collect();
    let index: HashMap<&str, usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut edges = BTreeSet::new();
    for name in &nodes {
        for t in kb.neighbors(name) {
            if let (Some(&src), Some(&dst)) =
                (index.get(t.head.as_str()), index.get(t.tail.as_str()))
            {
                edges.insert(Edge {
                    src,
                    dst,
                    relation: t.relation.clone(),
                    provenance: Provenance::Knowledge,
                });
            }
        }
    }
    CommonsenseSubgraph {
        nodes,
        groups,
        edges: edges.into_iter().collect(),
    }
}

/// Which object-location pairs receive a direct context edge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CdcMode {
    /// Every object-location pair.
    #[default]
    AllPairs,
    /// Pairs joined through one intermediate entity in the knowledge base.
    KnowledgePaths,
    Off,
}

impl FromStr for CdcMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all_pairs" => Ok(CdcMode::AllPairs),
            "knowledge_paths" => Ok(CdcMode::KnowledgePaths),
            "off" => Ok(CdcMode::Off),
            _ => Err(Error::Config(format!("unknown cdc mode `{s}`"))),
        }
    }
}

fn two_hop(kb: &KnowledgeBase, a: &str, b: &str) -> bool {
    let via: HashSet<&str> = kb
        .neighbors(a)
        .into_iter()
        .map(|t| {
            if t.head == a {
                t.tail.as_str()
            } else {
                t.head.as_str()
            }
        })
        .filter(|x| *x != a && *x != b)
        .collect();
    via.iter().any(|x| kb.linked(x, b))
}

/// Adds `context` edges from objects to locations that are not yet connected.
pub fn apply_cdc(
    mut graph: CommonsenseSubgraph,
    entities: &EntitySet,
    mode: CdcMode,
    kb: &KnowledgeBase,
) -> CommonsenseSubgraph {
    if mode == CdcMode::Off {
        return graph;
    }
    let mut linked: HashSet<(usize, usize)> = HashSet::new();
    for e in &graph.edges {
        linked.insert((e.src.min(e.dst), e.src.max(e.dst)));
    }
    let group_of = |i: usize| entities.group(&graph.nodes[i]).unwrap_or(graph.groups[i]);
    let objects: Vec<usize> = (0..graph.nodes.len())
        .filter(|&i| group_of(i) == Group::Object)
        .collect();
    let locations: Vec<usize> = (0..graph.nodes.len())
        .filter(|&i| group_of(i) == Group::Location)
        .collect();
    let mut added = Vec::new();
    for &o in &objects {
        for &l in &locations {
            if linked.contains(&(o.min(l), o.max(l))) {
                continue;
            }
            if mode == CdcMode::KnowledgePaths && !two_hop(kb, &graph.nodes[o], &graph.nodes[l]) {
                continue;
            }
            added.push(Edge {
                src: o,
                dst: l,
                relation: CDC_RELATION.to_string(),
                provenance: Provenance::Cdc,
            });
        }
    }
    graph.edges.extend(added);
    graph.edges.sort();
    graph
}
