use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocationKind {
    Supporter,
    Container,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    On,
    In,
}

impl Relation {
    pub fn for_kind(kind: LocationKind) -> Relation {
        match kind {
            LocationKind::Supporter => Relation::On,
            LocationKind::Container => Relation::In,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::On => "on",
            Relation::In => "in",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationEntry {
    pub name: String,
    pub kind: LocationKind,
    pub room: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub name: String,
    pub goal: String,
    pub relation: Relation,
}

/// Objects, where they belong, and the rooms that hold those places.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityVocabulary {
    pub rooms: Vec<String>,
    /// Unordered pairs of rooms that may be connected by a door.
    #[serde(default)]
    pub adjacency: Vec<(String, String)>,
    pub locations: Vec<LocationEntry>,
    pub objects: Vec<ObjectEntry>,
}

impl EntityVocabulary {
    /// Household vocabulary shipped with the crate.
    pub fn bundled() -> Self {
        let vocab: EntityVocabulary = serde_json::from_str(include_str!("../../data/vocab.json"))
            .expect("bundled vocabulary parses");
        vocab.validate().expect("bundled vocabulary is consistent");
        vocab
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let vocab: EntityVocabulary = serde_json::from_str(&text)?;
        vocab.validate()?;
        Ok(vocab)
    }

    pub fn validate(&self) -> Result<()> {
        let rooms: BTreeSet<&str> = self.rooms.iter().map(String::as_str).collect();
        if rooms.len() != self.rooms.len() {
            return Err(Error::Data("duplicate room name in vocabulary".into()));
        }
        for (a, b) in &self.adjacency {
            if !rooms.contains(a.as_str()) || !rooms.contains(b.as_str()) || a == b {
                return Err(Error::Data(format!("bad adjacency {a} - {b}")));
            }
        }
        let mut kinds = HashMap::new();
        for loc in &self.locations {
            if !rooms.contains(loc.room.as_str()) {
                return Err(Error::Data(format!(
                    "location {} in unknown room {}",
                    loc.name, loc.room
                )));
            }
            if kinds.insert(loc.name.as_str(), loc.kind).is_some() {
                return Err(Error::Data(format!("duplicate location {}", loc.name)));
            }
        }
        let mut names = BTreeSet::new();
        for obj in &self.objects {
            if !names.insert(obj.name.as_str()) || kinds.contains_key(obj.name.as_str()) {
                return Err(Error::Data(format!("duplicate entity name {}", obj.name)));
            }
            let Some(&kind) = kinds.get(obj.goal.as_str()) else {
                return Err(Error::Data(format!(
                    "object {} has unknown goal {}",
                    obj.name, obj.goal
                )));
            };
            if Relation::for_kind(kind) != obj.relation {
                return Err(Error::Data(format!(
                    "object {} uses `{}` with {:?} {}",
                    obj.name,
                    obj.relation.as_str(),
                    kind,
                    obj.goal
                )));
            }
        }
        Ok(())
    }

    pub fn location(&self, name: &str) -> Option<&LocationEntry> {
        self.locations.iter().find(|l| l.name == name)
    }

    pub fn object(&self, name: &str) -> Option<&ObjectEntry> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn object_names(&self) -> BTreeSet<&str> {
        self.objects.iter().map(|o| o.name.as_str()).collect()
    }

    /// Every object and location name.
    pub fn entity_names(&self) -> Vec<String> {
        self.objects
            .iter()
            .map(|o| o.name.clone())
            .chain(self.locations.iter().map(|l| l.name.clone()))
            .collect()
    }

    fn with_objects(&self, objects: Vec<ObjectEntry>) -> Self {
        EntityVocabulary {
            rooms: self.rooms.clone(),
            adjacency: self.adjacency.clone(),
            locations: self.locations.clone(),
            objects,
        }
    }
}

/// Train, IN-test and OUT-test vocabularies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Splits {
    pub train: EntityVocabulary,
    pub test_in: EntityVocabulary,
    pub test_out: EntityVocabulary,
}

/// Partitions the objects room by room (by goal location): in each room
/// `round(fraction * n)` go to training (and the IN test set), the rest to
/// the OUT test set. Stratifying keeps enough unseen objects in every room
/// for multi-object OUT games. Locations and rooms are shared.
pub fn make_splits(vocab: &EntityVocabulary, fraction: f64, seed: u64) -> Result<Splits> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "split fraction {fraction} outside (0, 1)"
        )));
    }
    let n = vocab.objects.len();
    let mut by_room: BTreeMap<&str, Vec<ObjectEntry>> = BTreeMap::new();
    for o in &vocab.objects {
        let room = vocab
            .location(&o.goal)
            .map(|l| l.room.as_str())
            .unwrap_or("");
        by_room.entry(room).or_default().push(o.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut out) = (Vec::new(), Vec::new());
    for objects in by_room.values_mut() {
        objects.sort_by(|a, b| a.name.cmp(&b.name));
        objects.shuffle(&mut rng);
        let n_train = (fraction * objects.len() as f64).round() as usize;
        out.extend(objects.split_off(n_train));
        train.append(objects);
    }
    if train.is_empty() || out.is_empty() {
        return Err(Error::Data(format!(
            "cannot split {n} objects with fraction {fraction}"
        )));
    }
    train.sort_by(|a, b| a.name.cmp(&b.name));
    out.sort_by(|a, b| a.name.cmp(&b.name));
    let train = vocab.with_objects(train);
    Ok(Splits {
        test_in: train.clone(),
        train,
        test_out: vocab.with_objects(out),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(n: usize) -> EntityVocabulary {
        EntityVocabulary {
            rooms: vec!["kitchen".into()],
            adjacency: vec![],
            locations: vec![LocationEntry {
                name: "table".into(),
                kind: LocationKind::Supporter,
                room: "kitchen".into(),
            }],
            objects: (0..n)
                .map(|i| ObjectEntry {
                    name: format!("thing{i}"),
                    goal: "table".into(),
                    relation: Relation::On,
                })
                .collect(),
        }
    }

    #[test]
    fn bundled_vocabulary_is_large_enough() {
        let v = EntityVocabulary::bundled();
        assert!(v.objects.len() >= 40);
    }

    #[test]
    fn every_room_keeps_unseen_objects() {
        let v = EntityVocabulary::bundled();
        let s = make_splits(&v, 0.8, 0).unwrap();
        for room in &v.rooms {
            let held_out = s
                .test_out
                .objects
                .iter()
                .filter(|o| &v.location(&o.goal).unwrap().room == room)
                .count();
            assert!(held_out >= 7, "{room}: {held_out}");
        }
    }

    #[test]
    fn splits_partition_objects() {
        let s = make_splits(&tiny(10), 0.8, 3).unwrap();
        assert_eq!(s.train.objects.len(), 8);
        assert_eq!(s.test_in.objects.len(), 8);
        assert_eq!(s.test_out.objects.len(), 2);
        let train = s.train.object_names();
        assert!(s.test_out.object_names().is_disjoint(&train));
        assert_eq!(s.test_in, s.train);

        let s = make_splits(&tiny(2), 0.5, 0).unwrap();
        assert_eq!((s.train.objects.len(), s.test_out.objects.len()), (1, 1));
    }

    #[test]
    fn split_errors() {
        assert!(make_splits(&tiny(1), 0.5, 0).is_err());
        assert!(make_splits(&tiny(10), 1.0, 0).is_err());
        assert!(make_splits(&tiny(10), 0.0, 0).is_err());
    }

    #[test]
    fn validation_catches_wrong_relation() {
        let mut v = tiny(1);
        v.objects[0].relation = Relation::In;
        assert!(v.validate().is_err());
        let mut v = tiny(1);
        v.objects[0].goal = "nowhere".into();
        assert!(v.validate().is_err());
    }
}
