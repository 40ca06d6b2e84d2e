//! Triplet stores built from ConceptNet dumps, Visual Genome relationship
//! files and the JSONL interchange format.
//!
//! Every name that enters a [`KnowledgeBase`] goes through
//! [`normalize_name`], so two sources that spell an entity differently only
//! by case, underscores or padding end up sharing a node.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::{DeserializeSeed, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// Where a knowledge base came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    ConceptNet,
    SceneGraph,
    Manual,
    Other,
}

impl SourceTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceTag::ConceptNet => "conceptnet",
            SourceTag::SceneGraph => "scenegraph",
            SourceTag::Manual => "manual",
            SourceTag::Other => "other",
        }
    }
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conceptnet" => Ok(SourceTag::ConceptNet),
            "scenegraph" | "vg" => Ok(SourceTag::SceneGraph),
            "manual" => Ok(SourceTag::Manual),
            "other" => Ok(SourceTag::Other),
            _ => Err(Error::Config(format!("unknown knowledge source `{s}`"))),
        }
    }
}

/// On-disk layout of a knowledge source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KbFormat {
    ConceptNet,
    Vg,
    Jsonl,
}

impl KbFormat {
    /// Tag given to a knowledge base read in this format.
    pub fn default_tag(self) -> SourceTag {
        match self {
            KbFormat::ConceptNet => SourceTag::ConceptNet,
            KbFormat::Vg => SourceTag::SceneGraph,
            KbFormat::Jsonl => SourceTag::Manual,
        }
    }
}

impl FromStr for KbFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conceptnet" => Ok(KbFormat::ConceptNet),
            "vg" => Ok(KbFormat::Vg),
            "jsonl" => Ok(KbFormat::Jsonl),
            _ => Err(Error::Config(format!("unknown knowledge format `{s}`"))),
        }
    }
}

/// One knowledge edge `head --relation--> tail` with its occurrence count.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub count: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeStats {
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_triplets: usize,
}

/// Rows that a loader could not use. Never fatal.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SkipReport {
    pub records: usize,
    pub skipped: usize,
    /// Records dropped on purpose, e.g. non-English ConceptNet assertions.
    pub filtered: usize,
    /// First few skipped line numbers (or image indices for VG).
    pub examples: Vec<usize>,
}

impl SkipReport {
    const MAX_EXAMPLES: usize = 20;

    fn skip(&mut self, at: usize) {
        self.skipped += 1;
        if self.examples.len() < Self::MAX_EXAMPLES {
            self.examples.push(at);
        }
    }

    fn log(&self, origin: &Path) {
        if self.skipped > 0 {
            log::warn!(
                "{}: skipped {} of {} records (first at {:?})",
                origin.display(),
                self.skipped,
                self.records,
                self.examples
            );
        }
    }
}

/// Lowercase, underscores to spaces, trimmed.
pub fn normalize_name(raw: &str) -> String {
    raw.replace('_', " ").trim().to_lowercase()
}

/// Accumulates triplets, merging duplicates by summing their counts.
#[derive(Debug)]
pub struct KnowledgeBuilder {
    source: SourceTag,
    counts: BTreeMap<(String, String, String), u64>,
}

impl KnowledgeBuilder {
    pub fn new(source: SourceTag) -> Self {
        KnowledgeBuilder {
            source,
            counts: BTreeMap::new(),
        }
    }

    /// Adds a triplet after normalizing its names. Returns `false` (and
    /// stores nothing) when a name is empty or `count` is zero.
    pub fn add(&mut self, head: &str, relation: &str, tail: &str, count: u64) -> bool {
        let head = normalize_name(head);
        let relation = normalize_name(relation);
        let tail = normalize_name(tail);
        if head.is_empty() || relation.is_empty() || tail.is_empty() || count == 0 {
            return false;
        }
        *self.counts.entry((head, relation, tail)).or_insert(0) += count;
        true
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn build(self) -> KnowledgeBase {
        let triplets = self
            .counts
            .into_iter()
            .map(|((head, relation, tail), count)| Triplet {
                head,
                relation,
                tail,
                count,
            })
            .collect();
        KnowledgeBase::from_sorted(self.source, triplets)
    }
}

/// Immutable, deduplicated triplet set with an entity index.
#[derive(Clone, Debug)]
pub struct KnowledgeBase {
    source: SourceTag,
    triplets: Vec<Triplet>,
    by_entity: HashMap<String, Vec<usize>>,
}

impl PartialEq for KnowledgeBase {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source && self.triplets == other.triplets
    }
}

impl KnowledgeBase {
    pub fn empty(source: SourceTag) -> Self {
        KnowledgeBuilder::new(source).build()
    }

    /// Builds a knowledge base from `(head, relation, tail)` names, each with count 1.
    pub fn from_names<'a, I>(source: SourceTag, triplets: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    {
        let mut builder = KnowledgeBuilder::new(source);
        for (h, r, t) in triplets {
            builder.add(h, r, t, 1);
        }
        builder.build()
    }

    fn from_sorted(source: SourceTag, triplets: Vec<Triplet>) -> Self {
        let mut by_entity: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, t) in triplets.iter().enumerate() {
            by_entity.entry(t.head.clone()).or_default().push(i);
            if t.tail != t.head {
                by_entity.entry(t.tail.clone()).or_default().push(i);
            }
        }
        KnowledgeBase {
            source,
            triplets,
            by_entity,
        }
    }

    pub fn source(&self) -> SourceTag {
        self.source
    }

    pub fn with_source(mut self, source: SourceTag) -> Self {
        self.source = source;
        self
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// Triplets in `(head, relation, tail)` order.
    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn get(&self, head: &str, relation: &str, tail: &str) -> Option<&Triplet> {
        self.triplets
            .binary_search_by(|t| {
                (t.head.as_str(), t.relation.as_str(), t.tail.as_str()).cmp(&(head, relation, tail))
            })
            .ok()
            .map(|i| &self.triplets[i])
    }

    pub fn contains_entity(&self, entity: &str) -> bool {
        self.by_entity.contains_key(entity)
    }

    pub fn entities(&self) -> BTreeSet<&str> {
        self.by_entity.keys().map(String::as_str).collect()
    }

    pub fn relations(&self) -> BTreeSet<&str> {
        self.triplets.iter().map(|t| t.relation.as_str()).collect()
    }

    pub fn stats(&self) -> KnowledgeStats {
        KnowledgeStats {
            n_entities: self.by_entity.len(),
            n_relations: self.relations().len(),
            n_triplets: self.triplets.len(),
        }
    }

    /// Relations by descending total count, ties broken by name.
    pub fn relation_histogram(&self, top_k: usize) -> Result<Vec<(String, u64)>> {
        if top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
        for t in &self.triplets {
            *totals.entry(t.relation.as_str()).or_insert(0) += t.count;
        }
        let mut rows: Vec<(String, u64)> = totals
            .into_iter()
            .map(|(r, c)| (r.to_string(), c))
            .collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        rows.truncate(top_k);
        Ok(rows)
    }

    /// Triplets with `entity` as head or tail, each reported once.
    pub fn neighbors(&self, entity: &str) -> Vec<&Triplet> {
        self.by_entity
            .get(entity)
            .map(|ids| ids.iter().map(|&i| &self.triplets[i]).collect())
            .unwrap_or_default()
    }

    /// Whether any triplet joins `a` and `b`, in either direction.
    pub fn linked(&self, a: &str, b: &str) -> bool {
        self.neighbors(a)
            .iter()
            .any(|t| (t.head == a && t.tail == b) || (t.head == b && t.tail == a))
    }

    /// Union of two stores; counts of shared triplets are summed.
    pub fn merge(&self, other: &KnowledgeBase, source: SourceTag) -> KnowledgeBase {
        let mut builder = KnowledgeBuilder::new(source);
        for t in self.triplets.iter().chain(&other.triplets) {
            builder.add(&t.head, &t.relation, &t.tail, t.count);
        }
        builder.build()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for t in &self.triplets {
            let record = JsonlRecord {
                head: t.head.clone(),
                rel: t.relation.clone(),
                tail: t.tail.clone(),
                count: Some(t.count),
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")
                .map_err(|e| Error::io("<jsonl output>", e))?;
        }
        Ok(())
    }

    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_jsonl(&mut out)?;
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// `source,metric,value` rows for one knowledge base.
pub fn write_stats_csv<W: Write>(
    mut out: W,
    label: &str,
    stats: &KnowledgeStats,
) -> std::io::Result<()> {
    writeln!(out, "source,metric,value")?;
    writeln!(out, "{label},entities,{}", stats.n_entities)?;
    writeln!(out, "{label},relations,{}", stats.n_relations)?;
    writeln!(out, "{label},triplets,{}", stats.n_triplets)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::with_capacity(1 << 20, file))
}

pub fn load_kb(path: impl AsRef<Path>, format: KbFormat) -> Result<KnowledgeBase> {
    let path = path.as_ref();
    match format {
        KbFormat::ConceptNet => load_conceptnet(path),
        KbFormat::Vg => load_scenegraph(path),
        KbFormat::Jsonl => load_jsonl(path, SourceTag::Manual),
    }
}

// ---------------------------------------------------------------------------
// ConceptNet

pub fn load_conceptnet(path: impl AsRef<Path>) -> Result<KnowledgeBase> {
    let path = path.as_ref();
    let (kb, report) = read_conceptnet(open(path)?, path)?;
    report.log(path);
    Ok(kb)
}

/// Reads a tab-separated assertions dump (`uri, relation, start, end, json`).
/// Only assertions between two English concepts are kept.
pub fn read_conceptnet<R: BufRead>(
    reader: R,
    origin: &Path,
) -> Result<(KnowledgeBase, SkipReport)> {
    let mut builder = KnowledgeBuilder::new(SourceTag::ConceptNet);
    let mut report = SkipReport::default();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        report.records += 1;
        match parse_conceptnet_row(&line) {
            Some(Row::English(head, rel, tail)) => {
                if !builder.add(&head, &rel, &tail, 1) {
                    report.skip(lineno);
                }
            }
            Some(Row::Foreign) => report.filtered += 1,
            None => report.skip(lineno),
        }
    }
    Ok((builder.build(), report))
}

enum Row {
    English(String, String, String),
    Foreign,
}

fn parse_conceptnet_row(line: &str) -> Option<Row> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() < 5 {
        return None;
    }
    let relation = conceptnet_relation(cols[1])?;
    let (start_lang, start) = conceptnet_concept(cols[2])?;
    let (end_lang, end) = conceptnet_concept(cols[3])?;
    if start_lang != "en" || end_lang != "en" {
        return Some(Row::Foreign);
    }
    Some(Row::English(start.to_string(), relation, end.to_string()))
}

/// `/r/AtLocation` -> `at location`; `/r/dbpedia/genre` -> `dbpedia/genre`.
pub fn conceptnet_relation(uri: &str) -> Option<String> {
    let name = uri.strip_prefix("/r/")?.trim_end_matches('/');
    if name.is_empty() {
        return None;
    }
    let mut out = String::with_capacity(name.len() + 4);
    let mut prev_lower = false;
    for c in name.chars() {
        if c.is_uppercase() && prev_lower {
            out.push(' ');
        }
        prev_lower = c.is_lowercase() || c.is_ascii_digit();
        out.extend(c.to_lowercase());
    }
    Some(out)
}

/// `/c/en/ice_cream/n/...` -> `("en", "ice_cream")`.
pub fn conceptnet_concept(uri: &str) -> Option<(&str, &str)> {
    let mut parts = uri.strip_prefix("/c/")?.split('/');
    let lang = parts.next().filter(|s| !s.is_empty())?;
    let term = parts.next().filter(|s| !s.is_empty())?;
    Some((lang, term))
}

// ---------------------------------------------------------------------------
// Visual Genome

pub fn load_scenegraph(path: impl AsRef<Path>) -> Result<KnowledgeBase> {
    let path = path.as_ref();
    let (kb, report) = read_scenegraph(open(path)?, path)?;
    report.log(path);
    Ok(kb)
}

#[derive(Deserialize)]
struct VgImage {
    relationships: Option<Vec<serde_json::Value>>,
}

fn vg_name(entry: &serde_json::Value) -> Option<&str> {
    if let Some(name) = entry.get("name").and_then(|n| n.as_str()) {
        return Some(name);
    }
    entry.get("names")?.as_array()?.first()?.as_str()
}

fn vg_triplet(rel: &serde_json::Value) -> Option<(&str, &str, &str)> {
    let predicate = rel.get("predicate")?.as_str()?;
    let subject = vg_name(rel.get("subject")?)?;
    let object = vg_name(rel.get("object")?)?;
    Some((subject, predicate, object))
}

/// Reads a Visual Genome `relationships.json` array, streaming one image at a time.
/// Relationship records count as `records`; images without a relationship
/// list are reported by image index.
pub fn read_scenegraph<R: Read>(reader: R, origin: &Path) -> Result<(KnowledgeBase, SkipReport)> {
    struct Images<'a> {
        builder: &'a mut KnowledgeBuilder,
        report: &'a mut SkipReport,
    }

    impl<'de> Visitor<'de> for Images<'_> {
        type Value = ();

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("an array of image records")
        }

        fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<(), A::Error> {
            let mut index = 0;
            while let Some(image) = seq.next_element::<VgImage>()? {
                index += 1;
                let Some(relationships) = image.relationships else {
                    self.report.skip(index);
                    continue;
                };
                for rel in &relationships {
                    self.report.records += 1;
                    let added = vg_triplet(rel)
                        .map(|(s, p, o)| self.builder.add(s, p, o, 1))
                        .unwrap_or(false);
                    if !added {
                        self.report.skip(index);
                    }
                }
            }
            Ok(())
        }
    }

    impl<'de> DeserializeSeed<'de> for Images<'_> {
        type Value = ();

        fn deserialize<D: Deserializer<'de>>(self, d: D) -> std::result::Result<(), D::Error> {
            d.deserialize_seq(self)
        }
    }

    let mut builder = KnowledgeBuilder::new(SourceTag::SceneGraph);
    let mut report = SkipReport::default();
    let mut de = serde_json::Deserializer::from_reader(reader);
    Images {
        builder: &mut builder,
        report: &mut report,
    }
    .deserialize(&mut de)
    .and_then(|_| de.end())
    .map_err(|e| Error::parse(origin, e.line(), e.to_string()))?;
    Ok((builder.build(), report))
}

// ---------------------------------------------------------------------------
// JSONL interchange

#[derive(Serialize, Deserialize)]
struct JsonlRecord {
    head: String,
    rel: String,
    tail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    count: Option<u64>,
}

pub fn load_jsonl(path: impl AsRef<Path>, source: SourceTag) -> Result<KnowledgeBase> {
    let path = path.as_ref();
    read_jsonl(open(path)?, path, source)
}

/// Any bad line is fatal and reported with its 1-based line number.
pub fn read_jsonl<R: BufRead>(
    reader: R,
    origin: &Path,
    source: SourceTag,
) -> Result<KnowledgeBase> {
    let mut builder = KnowledgeBuilder::new(source);
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonlRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
        let count = record.count.unwrap_or(1);
        if !builder.add(&record.head, &record.rel, &record.tail, count) {
            return Err(Error::parse(
                origin,
                lineno,
                "empty name or zero count in triplet",
            ));
        }
    }
    Ok(builder.build())
}
