use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{EntityVocabulary, LocationKind, Relation};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_STEPS: u32 = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Easy,
    Medium,
    Hard,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Easy, Level::Medium, Level::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Easy => "easy",
            Level::Medium => "medium",
            Level::Hard => "hard",
        }
    }

    /// Candidate object counts.
    pub fn objects(self) -> &'static [usize] {
        match self {
            Level::Easy => &[1],
            Level::Medium => &[2, 3],
            Level::Hard => &[6, 7],
        }
    }

    /// Candidate counts of objects that start out of place.
    pub fn to_find(self) -> &'static [usize] {
        match self {
            Level::Easy => &[1],
            Level::Medium => &[1, 2, 3],
            Level::Hard => &[5, 6, 7],
        }
    }

    pub fn rooms(self) -> &'static [usize] {
        match self {
            Level::Easy | Level::Medium => &[1],
            Level::Hard => &[1, 2],
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Level::Easy),
            "medium" => Ok(Level::Medium),
            "hard" => Ok(Level::Hard),
            _ => Err(Error::Config(format!("unknown level `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    In,
    Out,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::In => "in",
            Split::Out => "out",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "in" => Ok(Split::In),
            "out" => Ok(Split::Out),
            _ => Err(Error::Config(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    North,
    South,
    East,
    West,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::North => "north",
            Direction::South => "south",
            Direction::East => "east",
            Direction::West => "west",
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::North => Direction::South,
            Direction::South => Direction::North,
            Direction::East => Direction::West,
            Direction::West => Direction::East,
        }
    }
}

/// Where an object is.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Position {
    /// On the floor of a room.
    Floor(String),
    /// On a supporter or inside a container.
    At(String),
    Held,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exit {
    pub room: String,
    pub direction: Direction,
    pub to: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedLocation {
    pub name: String,
    pub kind: LocationKind,
    pub room: String,
    /// Containers only; supporters are always open.
    pub open: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub name: String,
    pub start: Position,
    pub goal_relation: Relation,
    pub goal_location: String,
    /// Starts away from its goal and counts towards the score.
    pub misplaced: bool,
}

/// A generated cleanup game. Serialized field order is stable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameSpec {
    pub level: Level,
    pub seed: u64,
    pub split: Split,
    pub max_steps: u32,
    pub inventory_capacity: usize,
    pub rooms: Vec<String>,
    pub exits: Vec<Exit>,
    pub locations: Vec<PlacedLocation>,
    pub objects: Vec<PlacedObject>,
    pub start_room: String,
}

/// Knobs of the generator that the level table leaves open.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Locations placed per room, goals included (fewer if the vocabulary runs out).
    pub locations_per_room: usize,
    /// Chance that a container starts closed.
    pub closed_probability: f64,
    pub max_steps: u32,
    pub inventory_capacity: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            locations_per_room: 12,
            closed_probability: 0.5,
            max_steps: DEFAULT_MAX_STEPS,
            inventory_capacity: 1,
        }
    }
}

fn game_rng(level: Level, split: Split, seed: u64) -> ChaCha8Rng {
    let salt = (level as u64) << 8 | split as u64;
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt)
}

pub fn generate_game(
    level: Level,
    vocab: &EntityVocabulary,
    seed: u64,
    split: Split,
) -> Result<GameSpec> {
    generate_game_with(&GeneratorConfig::default(), level, vocab, seed, split)
}

/// Samples a solvable game. The counts follow the level table; the
/// objects that start out of place are put on the floor or on a wrong
/// location, every other object starts at its goal.
pub fn generate_game_with(
    config: &GeneratorConfig,
    level: Level,
    vocab: &EntityVocabulary,
    seed: u64,
    split: Split,
) -> Result<GameSpec> {
    if config.inventory_capacity == 0 {
        return Err(Error::Config(
            "inventory capacity must be at least 1".into(),
        ));
    }
    let mut rng = game_rng(level, split, seed);
    // Rare layouts can exceed the step budget; resample from the same stream.
    for _ in 0..64 {
        let spec = sample_game(config, level, vocab, seed, split, &mut rng)?;
        let plan = super::oracle::oracle_policy(&spec)?;
        if plan.len() <= spec.max_steps as usize {
            return Ok(spec);
        }
    }
    Err(Error::Data(format!(
        "no solvable {level} game within {} steps for seed {seed}",
        config.max_steps
    )))
}

fn sample_game(
    config: &GeneratorConfig,
    level: Level,
    vocab: &EntityVocabulary,
    seed: u64,
    split: Split,
    rng: &mut ChaCha8Rng,
) -> Result<GameSpec> {
    let n_objects = *level.objects().choose(rng).expect("non-empty");
    let n_find = *level
        .to_find()
        .iter()
        .filter(|&&k| k <= n_objects)
        .choose(rng)
        .expect("some count fits");
    let n_rooms = *level.rooms().choose(rng).expect("non-empty");

    let goal_room: HashMap<&str, &str> = vocab
        .locations
        .iter()
        .map(|l| (l.name.as_str(), l.room.as_str()))
        .collect();
    let objects_in = |rooms: &[&str]| {
        vocab
            .objects
            .iter()
            .filter(|o| rooms.contains(&goal_room[o.goal.as_str()]))
            .count()
    };

    // Candidate room groups with enough objects.
    let mut groups: Vec<Vec<&str>> = Vec::new();
    if n_rooms == 1 {
        for r in &vocab.rooms {
            groups.push(vec![r.as_str()]);
        }
    } else {
        for (a, b) in &vocab.adjacency {
            groups.push(vec![a.as_str(), b.as_str()]);
            groups.push(vec![b.as_str(), a.as_str()]);
        }
    }
    groups.retain(|g| objects_in(g) >= n_objects);
    let Some(rooms) = groups.choose(rng).cloned() else {
        return Err(Error::Data(format!(
            "insufficient vocabulary: objects (need {n_objects} objects with goals in {n_rooms} connected room(s))"
        )));
    };

    let mut chosen: Vec<_> = vocab
        .objects
        .iter()
        .filter(|o| rooms.contains(&goal_room[o.goal.as_str()]))
        .collect::<Vec<_>>()
        .choose_multiple(rng, n_objects)
        .cloned()
        .collect();
    chosen.sort_by(|a, b| a.name.cmp(&b.name));

    // Goal locations first, then distractors up to the per-room quota.
    let goals: BTreeSet<&str> = chosen.iter().map(|o| o.goal.as_str()).collect();
    let mut placed: Vec<&super::vocab::LocationEntry> = Vec::new();
    for room in &rooms {
        let in_room: Vec<_> = vocab.locations.iter().filter(|l| l.room == *room).collect();
        let mut picked: Vec<_> = in_room
            .iter()
            .filter(|l| goals.contains(l.name.as_str()))
            .copied()
            .collect();
        let quota = config.locations_per_room.max(picked.len());
        let spare: Vec<_> = in_room
            .iter()
            .filter(|l| !goals.contains(l.name.as_str()))
            .copied()
            .collect();
        picked.extend(spare.choose_multiple(rng, quota - picked.len()).copied());
        picked.sort_by(|a, b| a.name.cmp(&b.name));
        placed.extend(picked);
    }
    if placed.len() < 2 && n_find > 0 {
        return Err(Error::Data(
            "insufficient vocabulary: locations (need a wrong place for misplaced objects)".into(),
        ));
    }

    let locations: Vec<PlacedLocation> = placed
        .iter()
        .map(|l| PlacedLocation {
            name: l.name.clone(),
            kind: l.kind,
            room: l.room.clone(),
            open: l.kind == LocationKind::Supporter || !rng.gen_bool(config.closed_probability),
        })
        .collect();

    let misplaced: BTreeSet<usize> = (0..n_objects)
        .choose_multiple(rng, n_find)
        .into_iter()
        .collect();
    let objects = chosen
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let start = if misplaced.contains(&i) {
                // Any floor or any location other than the goal, uniformly.
                let n_slots = rooms.len() + locations.len() - 1;
                let k = rng.gen_range(0..n_slots);
                if k < rooms.len() {
                    Position::Floor(rooms[k].to_string())
                } else {
                    let wrong: Vec<_> = locations.iter().filter(|l| l.name != o.goal).collect();
                    Position::At(wrong[k - rooms.len()].name.clone())
                }
            } else {
                Position::At(o.goal.clone())
            };
            PlacedObject {
                name: o.name.clone(),
                start,
                goal_relation: o.relation,
                goal_location: o.goal.clone(),
                misplaced: misplaced.contains(&i),
            }
        })
        .collect();

    let mut exits = Vec::new();
    if rooms.len() == 2 {
        let dir = *[
            Direction::North,
            Direction::South,
            Direction::East,
            Direction::West,
        ]
        .choose(rng)
        .expect("non-empty");
        exits.push(Exit {
            room: rooms[0].to_string(),
            direction: dir,
            to: rooms[1].to_string(),
        });
        exits.push(Exit {
            room: rooms[1].to_string(),
            direction: dir.opposite(),
            to: rooms[0].to_string(),
        });
    }
    let start_room = rooms.choose(rng).expect("non-empty").to_string();

    let spec = GameSpec {
        level,
        seed,
        split,
        max_steps: config.max_steps,
        inventory_capacity: config.inventory_capacity,
        rooms: rooms.iter().map(|r| r.to_string()).collect(),
        exits,
        locations,
        objects,
        start_room,
    };
    spec.validate()?;
    Ok(spec)
}

impl GameSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Data(format!("game {}: {msg}", self.seed)));
        let rooms: BTreeSet<&str> = self.rooms.iter().map(String::as_str).collect();
        if rooms.is_empty() || !rooms.contains(self.start_room.as_str()) {
            return bad("start room is not a placed room".into());
        }
        let mut locs = HashMap::new();
        for l in &self.locations {
            if !rooms.contains(l.room.as_str()) {
                return bad(format!("location {} in unplaced room", l.name));
            }
            if l.kind == LocationKind::Supporter && !l.open {
                return bad(format!("supporter {} cannot be closed", l.name));
            }
            if locs.insert(l.name.as_str(), l.kind).is_some() {
                return bad(format!("duplicate location {}", l.name));
            }
        }
        for e in &self.exits {
            if !rooms.contains(e.room.as_str()) || !rooms.contains(e.to.as_str()) {
                return bad("exit to an unplaced room".into());
            }
        }
        let mut names = BTreeSet::new();
        for o in &self.objects {
            if !names.insert(o.name.as_str()) || locs.contains_key(o.name.as_str()) {
                return bad(format!("duplicate entity {}", o.name));
            }
            let Some(&kind) = locs.get(o.goal_location.as_str()) else {
                return bad(format!(
                    "goal {} of {} is not placed",
                    o.goal_location, o.name
                ));
            };
            if Relation::for_kind(kind) != o.goal_relation {
                return bad(format!(
                    "goal relation of {} does not match its goal",
                    o.name
                ));
            }
            let at_goal = match &o.start {
                Position::At(l) => {
                    if !locs.contains_key(l.as_str()) {
                        return bad(format!("{} starts at unknown location {l}", o.name));
                    }
                    *l == o.goal_location
                }
                Position::Floor(r) => {
                    if !rooms.contains(r.as_str()) {
                        return bad(format!("{} starts in unknown room {r}", o.name));
                    }
                    false
                }
                Position::Held => false,
            };
            if at_goal == o.misplaced {
                return bad(format!(
                    "misplaced flag of {} disagrees with its start",
                    o.name
                ));
            }
        }
        if self.inventory_capacity == 0 || self.max_steps == 0 {
            return bad("capacity and step budget must be positive".into());
        }
        Ok(())
    }

    pub fn n_misplaced(&self) -> usize {
        self.objects.iter().filter(|o| o.misplaced).count()
    }

    /// `<dir>/<level>/<split>/<seed>.json`
    pub fn path_in(&self, dir: &Path) -> PathBuf {
        dir.join(self.level.as_str())
            .join(self.split.as_str())
            .join(format!("{}.json", self.seed))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("game spec serializes")
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = self.path_in(dir);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, self.to_json() + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: GameSpec =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Every `*.json` game under `dir`, sorted by path.
pub fn load_games(dir: impl AsRef<Path>) -> Result<Vec<GameSpec>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(&path, out)?;
            } else if path.extension().is_some_and(|e| e == "json") {
                out.push(path);
            }
        }
        Ok(())
    }
    let mut paths = Vec::new();
    walk(dir.as_ref(), &mut paths)?;
    paths.sort();
    paths.iter().map(GameSpec::load).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn easy_game_counts() {
        let vocab = EntityVocabulary::bundled();
        for seed in 0..20 {
            let g = generate_game(Level::Easy, &vocab, seed, Split::Train).unwrap();
            assert_eq!(g.objects.len(), 1);
            assert_eq!(g.n_misplaced(), 1);
            assert_eq!(g.rooms.len(), 1);
        }
    }

    #[test]
    fn hard_game_counts() {
        let vocab = EntityVocabulary::bundled();
        let mut seen_rooms = BTreeSet::new();
        for seed in 0..30 {
            let g = generate_game(Level::Hard, &vocab, seed, Split::Train).unwrap();
            assert!([6, 7].contains(&g.objects.len()));
            assert!((5..=g.objects.len()).contains(&g.n_misplaced()));
            seen_rooms.insert(g.rooms.len());
        }
        assert_eq!(seen_rooms, BTreeSet::from([1, 2]));
    }

    #[test]
    fn generation_is_deterministic() {
        let vocab = EntityVocabulary::bundled();
        let a = generate_game(Level::Medium, &vocab, 42, Split::In).unwrap();
        let b = generate_game(Level::Medium, &vocab, 42, Split::In).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn insufficient_vocabulary_names_category() {
        let mut vocab = EntityVocabulary::bundled();
        vocab.objects.truncate(2);
        let err = generate_game(Level::Hard, &vocab, 0, Split::Train).unwrap_err();
        assert!(err.to_string().contains("objects"), "{err}");
    }

    #[test]
    fn json_round_trip_and_layout() {
        let vocab = EntityVocabulary::bundled();
        let g = generate_game(Level::Hard, &vocab, 7, Split::Out).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = g.save(dir.path()).unwrap();
        assert!(path.ends_with("hard/out/7.json"));
        assert_eq!(GameSpec::load(&path).unwrap(), g);
        assert_eq!(load_games(dir.path()).unwrap(), vec![g]);
    }
}
