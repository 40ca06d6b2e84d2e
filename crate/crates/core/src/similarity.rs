//! How close a candidate knowledge base is to a reference (manual) one.
//!
//! An entity counts as similar when its best cosine against any reference
//! entity exceeds the entity threshold. A pair `{e1, e2}` is embedded as
//! `z1 + z2` and compared against every reference triplet's `zk1 + zk2` the
//! same way. Names whose tokens are all out of vocabulary are left out of
//! both sides and listed in the report.

use std::collections::BTreeSet;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};
use crate::knowledge::KnowledgeBase;

pub const ENTITY_THRESHOLD: f64 = 0.7;
pub const PAIR_THRESHOLD: f64 = 0.65;

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Data(format!(
            "cosine of vectors with {} and {} components",
            u.len(),
            v.len()
        )));
    }
    let (mut dot, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

/// What one "pair" is when counting pair similarity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairUnit {
    /// Distinct unordered entity pairs across all relations.
    #[default]
    Pair,
    /// Every triplet, even when several share the same entity pair.
    Triplet,
}

impl FromStr for PairUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pair" => Ok(PairUnit::Pair),
            "triplet" => Ok(PairUnit::Triplet),
            _ => Err(Error::Config(format!("unknown pair unit `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntityMatch {
    pub entity: String,
    pub best_match: String,
    pub score: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EntityCount {
    pub count: usize,
    /// Best reference for every resolved candidate entity, sorted by name.
    pub matches: Vec<EntityMatch>,
    pub unresolved: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PairCount {
    pub count: usize,
    pub compared: usize,
    /// Candidate pairs with an out-of-vocabulary endpoint.
    pub excluded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimilarityReport {
    pub source: String,
    pub entity_count: usize,
    pub pair_count: usize,
    pub entity_threshold: f64,
    pub pair_threshold: f64,
    pub matches: Vec<EntityMatch>,
    pub unresolved: Vec<String>,
    pub excluded_pairs: usize,
}

fn check_threshold(t: f64) -> Result<()> {
    if (-1.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Config(format!("threshold {t} outside [-1, 1]")))
    }
}

fn unit(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Reference {
    names: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

fn resolved_entities(kb: &KnowledgeBase, store: &EmbeddingStore) -> (Reference, Vec<String>) {
    let mut names = Vec::new();
    let mut vectors = Vec::new();
    let mut unresolved = Vec::new();
    for entity in kb.entities() {
        let e = store.embed_entity(entity);
        match e.resolved.then(|| unit(e.vector)).flatten() {
            Some(v) => {
                names.push(entity.to_string());
                vectors.push(v);
            }
            None => unresolved.push(entity.to_string()),
        }
    }
    (Reference { names, vectors }, unresolved)
}

fn require_reference(manual: &KnowledgeBase) -> Result<()> {
    if manual.is_empty() {
        return Err(Error::Data("reference knowledge base is empty".into()));
    }
    Ok(())
}

/// Counts candidate entities whose best cosine against a reference entity is
/// strictly above `threshold`.
pub fn entity_similarity_count(
    candidate: &KnowledgeBase,
    manual: &KnowledgeBase,
    store: &EmbeddingStore,
    threshold: f64,
) -> Result<EntityCount> {
    check_threshold(threshold)?;
    require_reference(manual)?;
    let (reference, _) = resolved_entities(manual, store);
    let (cands, unresolved) = resolved_entities(candidate, store);
    if reference.vectors.is_empty() {
        return Ok(EntityCount {
            count: 0,
            matches: Vec::new(),
            unresolved,
        });
    }
    let matches: Vec<EntityMatch> = cands
        .names
        .par_iter()
        .zip(cands.vectors.par_iter())
        .map(|(name, v)| {
            let (best, score) = reference
                .vectors
                .iter()
                .enumerate()
                .map(|(k, r)| (k, dot(v, r).clamp(-1.0, 1.0)))
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, x| if x.1 > acc.1 { x } else { acc },
                );
            EntityMatch {
                entity: name.clone(),
                best_match: reference.names[best].clone(),
                score,
            }
        })
        .collect();
    let count = matches.iter().filter(|m| m.score > threshold).count();
    Ok(EntityCount {
        count,
        matches,
        unresolved,
    })
}

fn pair_vector(store: &EmbeddingStore, a: &str, b: &str) -> Option<Vec<f64>> {
    let ea = store.embed_entity(a);
    let eb = store.embed_entity(b);
    if !ea.resolved || !eb.resolved {
        return None;
    }
    let sum = ea
        .vector
        .iter()
        .zip(&eb.vector)
        .map(|(x, y)| x + y)
        .collect();
    // A zero sum is a valid pair whose cosine is 0 everywhere.
    Some(unit(sum).unwrap_or_else(|| vec![0.0; store.dim()]))
}

/// Candidate pairs under `unit`, as `(e1, e2)` name tuples.
pub fn candidate_pairs(kb: &KnowledgeBase, unit: PairUnit) -> Vec<(&str, &str)> {
    match unit {
        PairUnit::Triplet => kb
            .triplets()
            .iter()
            .map(|t| (t.head.as_str(), t.tail.as_str()))
            .collect(),
        PairUnit::Pair => kb
            .triplets()
            .iter()
            .map(|t| {
                let (a, b) = (t.head.as_str(), t.tail.as_str());
                if a <= b {
                    (a, b)
                } else {
                    (b, a)
                }
            })
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    }
}

/// Counts candidate pairs whose best summed-embedding cosine against a
/// reference triplet is strictly above `threshold`.
pub fn pair_similarity_count(
    candidate: &KnowledgeBase,
    manual: &KnowledgeBase,
    store: &EmbeddingStore,
    threshold: f64,
    unit: PairUnit,
) -> Result<PairCount> {
    check_threshold(threshold)?;
    require_reference(manual)?;
    let reference: Vec<Vec<f64>> = manual
        .triplets()
        .iter()
        .filter_map(|t| pair_vector(store, &t.head, &t.tail))
        .collect();
    let pairs = candidate_pairs(candidate, unit);
    let outcomes: Vec<Option<bool>> = pairs
        .par_iter()
        .map(|(a, b)| {
            let v = pair_vector(store, a, b)?;
            Some(reference.iter().any(|r| dot(&v, r) > threshold))
        })
        .collect();
    let excluded = outcomes.iter().filter(|o| o.is_none()).count();
    Ok(PairCount {
        count: outcomes.iter().filter(|o| **o == Some(true)).count(),
        compared: outcomes.len() - excluded,
        excluded,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    pub entity: f64,
    pub pair: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            entity: ENTITY_THRESHOLD,
            pair: PAIR_THRESHOLD,
        }
    }
}

/// One report row per labelled candidate.
pub fn compare_report(
    candidates: &[(&str, &KnowledgeBase)],
    manual: &KnowledgeBase,
    store: &EmbeddingStore,
    thresholds: Thresholds,
    unit: PairUnit,
) -> Result<Vec<SimilarityReport>> {
    if candidates.is_empty() {
        return Err(Error::Config("at least one candidate is required".into()));
    }
    candidates
        .iter()
        .map(|(label, kb)| {
            let entities = entity_similarity_count(kb, manual, store, thresholds.entity)?;
            let pairs = pair_similarity_count(kb, manual, store, thresholds.pair, unit)?;
            if !entities.unresolved.is_empty() {
                log::info!(
                    "{label}: {} entities have no embedding and were excluded",
                    entities.unresolved.len()
                );
            }
            Ok(SimilarityReport {
                source: label.to_string(),
                entity_count: entities.count,
                pair_count: pairs.count,
                entity_threshold: thresholds.entity,
                pair_threshold: thresholds.pair,
                matches: entities.matches,
                unresolved: entities.unresolved,
                excluded_pairs: pairs.excluded,
            })
        })
        .collect()
}

pub fn write_compare_csv<W: Write>(
    mut out: W,
    reports: &[SimilarityReport],
) -> std::io::Result<()> {
    writeln!(
        out,
        "source,n_entities_similar,n_pairs_similar,entity_threshold,pair_threshold"
    )?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.source, r.entity_count, r.pair_count, r.entity_threshold, r.pair_threshold
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::SourceTag;
    use std::path::Path;

    #[test]
    fn cosine_cases() {
        assert_eq!(cosine(&[0.3, -2.0], &[0.3, -2.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
    }

    fn store() -> EmbeddingStore {
        EmbeddingStore::read(
            &b"apple 1 0 0\ntable 0 1 0\nfridge 0 0 1\ncup 0.9 0.1 0\n"[..],
            Path::new("e"),
            None,
        )
        .unwrap()
    }

    #[test]
    fn self_comparison_counts_every_resolved_entity() {
        let kb = KnowledgeBase::from_names(
            SourceTag::Manual,
            [
                ("apple", "on", "table"),
                ("apple", "in", "fridge"),
                ("xqzzy", "on", "table"),
            ],
        );
        let r = entity_similarity_count(&kb, &kb, &store(), 0.7).unwrap();
        assert_eq!(r.count, 3);
        assert_eq!(r.unresolved, vec!["xqzzy".to_string()]);
    }

    #[test]
    fn empty_reference_is_an_error() {
        let kb = KnowledgeBase::from_names(SourceTag::Manual, [("apple", "on", "table")]);
        let empty = KnowledgeBase::empty(SourceTag::Manual);
        assert!(entity_similarity_count(&kb, &empty, &store(), 0.7).is_err());
        assert!(pair_similarity_count(&kb, &empty, &store(), 0.65, PairUnit::Pair).is_err());
    }

    #[test]
    fn pair_units_differ_on_repeated_pairs() {
        let kb = KnowledgeBase::from_names(
            SourceTag::Other,
            [
                ("cup", "on", "table"),
                ("table", "under", "cup"),
                ("cup", "near", "table"),
            ],
        );
        let manual = KnowledgeBase::from_names(SourceTag::Manual, [("apple", "on", "table")]);
        let s = store();
        let p = pair_similarity_count(&kb, &manual, &s, 0.65, PairUnit::Pair).unwrap();
        let t = pair_similarity_count(&kb, &manual, &s, 0.65, PairUnit::Triplet).unwrap();
        assert_eq!((p.count, p.compared), (1, 1));
        assert_eq!((t.count, t.compared), (3, 3));
    }

    #[test]
    fn only_unresolved_candidate_gives_zero_row() {
        let cand = KnowledgeBase::from_names(SourceTag::Other, [("xqzzy", "on", "blorp")]);
        let manual = KnowledgeBase::from_names(SourceTag::Manual, [("apple", "on", "table")]);
        let reports = compare_report(
            &[
                ("odd", &cand),
                ("none", &KnowledgeBase::empty(SourceTag::Other)),
            ],
            &manual,
            &store(),
            Thresholds::default(),
            PairUnit::Pair,
        )
        .unwrap();
        assert_eq!((reports[0].entity_count, reports[0].pair_count), (0, 0));
        assert_eq!(reports[0].unresolved.len(), 2);
        assert_eq!(reports[0].excluded_pairs, 1);
        assert_eq!((reports[1].entity_count, reports[1].pair_count), (0, 0));

        let mut out = Vec::new();
        write_compare_csv(&mut out, &reports).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "source,n_entities_similar,n_pairs_similar,entity_threshold,pair_threshold\n\
             odd,0,0,0.7,0.65\nnone,0,0,0.7,0.65\n"
        );
    }
}
