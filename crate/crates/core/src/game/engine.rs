//! Deterministic cleanup engine: text commands in, room descriptions out.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::spec::{GameSpec, Position};
use super::vocab::LocationKind;
use crate::error::{Error, Result};

/// An admissible command, e.g. `insert dirty fork into dishwasher`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(pub String);

impl Action {
    pub fn new(text: impl Into<String>) -> Self {
        Action(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// What the agent sees: its current room and the outcome of the last command.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub text: String,
    pub feedback: String,
}

impl Observation {
    /// Feedback followed by the room description.
    pub fn full_text(&self) -> String {
        if self.feedback.is_empty() {
            self.text.clone()
        } else {
            format!("{} {}", self.feedback, self.text)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Pos {
    Floor(usize),
    At(usize),
    Held,
}

/// Index tables derived once per spec.
#[derive(Debug)]
struct Layout {
    spec: GameSpec,
    location_room: Vec<usize>,
    object_goal: Vec<usize>,
    room_index: HashMap<String, usize>,
    location_index: HashMap<String, usize>,
    object_index: HashMap<String, usize>,
}

impl Layout {
    fn new(spec: GameSpec) -> Result<Self> {
        spec.validate()?;
        let room_index: HashMap<String, usize> = spec
            .rooms
            .iter()
            .enumerate()
            .map(|(i, r)| (r.clone(), i))
            .collect();
        let location_index: HashMap<String, usize> = spec
            .locations
            .iter()
            .enumerate()
            .map(|(i, l)| (l.name.clone(), i))
            .collect();
        let object_index = spec
            .objects
            .iter()
            .enumerate()
            .map(|(i, o)| (o.name.clone(), i))
            .collect();
        let location_room = spec.locations.iter().map(|l| room_index[&l.room]).collect();
        let object_goal = spec
            .objects
            .iter()
            .map(|o| location_index[&o.goal_location])
            .collect();
        Ok(Layout {
            spec,
            location_room,
            object_goal,
            room_index,
            location_index,
            object_index,
        })
    }

    fn pos(&self, p: &Position) -> Pos {
        match p {
            Position::Floor(r) => Pos::Floor(self.room_index[r]),
            Position::At(l) => Pos::At(self.location_index[l]),
            Position::Held => Pos::Held,
        }
    }

    fn is_container(&self, loc: usize) -> bool {
        self.spec.locations[loc].kind == LocationKind::Container
    }
}

/// Runtime state of one episode.
#[derive(Clone, Debug)]
pub struct GameState {
    layout: Arc<Layout>,
    room: usize,
    positions: Vec<Pos>,
    open: Vec<bool>,
    inventory: Vec<usize>,
    t: u32,
    placed_correctly: BTreeSet<usize>,
    feedback: String,
}

/// Result of one engine step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    /// The command was not admissible and only consumed a step.
    pub rejected: bool,
}

const REJECTED: &str = "That is not something you can do right now.";

fn article(name: &str) -> &'static str {
    // "a utility shelf", "a used towel": a long u sounds like a consonant.
    if ["uti", "use", "uni", "usu"]
        .iter()
        .any(|p| name.starts_with(p))
    {
        return "a";
    }
    match name.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

fn listing(names: &[&str]) -> String {
    let items: Vec<String> = names
        .iter()
        .map(|n| format!("{} {n}", article(n)))
        .collect();
    match items.len() {
        0 => String::new(),
        1 => items[0].clone(),
        n => format!("{} and {}", items[..n - 1].join(", "), items[n - 1]),
    }
}

/// Starts an episode.
pub fn reset(spec: &GameSpec) -> Result<(GameState, Observation)> {
    let layout = Layout::new(spec.clone())?;
    let positions: Vec<Pos> = spec.objects.iter().map(|o| layout.pos(&o.start)).collect();
    let inventory = positions
        .iter()
        .enumerate()
        .filter(|(_, p)| **p == Pos::Held)
        .map(|(i, _)| i)
        .collect();
    let placed_correctly = spec
        .objects
        .iter()
        .enumerate()
        .filter(|(_, o)| !o.misplaced)
        .map(|(i, _)| i)
        .collect();
    let state = GameState {
        room: layout.room_index[&spec.start_room],
        open: spec.locations.iter().map(|l| l.open).collect(),
        layout: Arc::new(layout),
        positions,
        inventory,
        t: 0,
        placed_correctly,
        feedback: String::new(),
    };
    let obs = state.observation();
    Ok((state, obs))
}

impl GameState {
    pub fn spec(&self) -> &GameSpec {
        &self.layout.spec
    }

    pub fn t(&self) -> u32 {
        self.t
    }

    pub fn room(&self) -> &str {
        &self.layout.spec.rooms[self.room]
    }

    pub fn inventory(&self) -> Vec<&str> {
        self.inventory
            .iter()
            .map(|&i| self.layout.spec.objects[i].name.as_str())
            .collect()
    }

    /// Names of correctly placed objects, including those that started at their goal.
    pub fn placed_correctly(&self) -> Vec<&str> {
        self.placed_correctly
            .iter()
            .map(|&i| self.layout.spec.objects[i].name.as_str())
            .collect()
    }

    pub fn is_open(&self, location: &str) -> Option<bool> {
        self.layout
            .location_index
            .get(location)
            .map(|&i| self.open[i])
    }

    /// Current position of an object.
    pub fn position(&self, object: &str) -> Option<Position> {
        let &i = self.layout.object_index.get(object)?;
        let spec = &self.layout.spec;
        Some(match self.positions[i] {
            Pos::Floor(r) => Position::Floor(spec.rooms[r].clone()),
            Pos::At(l) => Position::At(spec.locations[l].name.clone()),
            Pos::Held => Position::Held,
        })
    }

    pub fn is_done(&self) -> bool {
        self.placed_correctly.len() == self.positions.len() || self.t >= self.layout.spec.max_steps
    }

    pub fn all_placed(&self) -> bool {
        self.placed_correctly.len() == self.positions.len()
    }

    /// Fraction of initially misplaced objects now at their goal.
    pub fn normalized_score(&self) -> f64 {
        let spec = &self.layout.spec;
        let total = spec.n_misplaced();
        if total == 0 {
            return 1.0;
        }
        let done = self
            .placed_correctly
            .iter()
            .filter(|&&i| spec.objects[i].misplaced)
            .count();
        done as f64 / total as f64
    }

    fn visible(&self, obj: usize) -> bool {
        match self.positions[obj] {
            Pos::Floor(r) => r == self.room,
            Pos::At(l) => self.layout.location_room[l] == self.room && self.open[l],
            Pos::Held => false,
        }
    }

    fn room_locations(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.open.len()).filter(move |&l| self.layout.location_room[l] == self.room)
    }

    fn objects_at(&self, pos: Pos) -> Vec<&str> {
        self.positions
            .iter()
            .enumerate()
            .filter(|(_, p)| **p == pos)
            .map(|(i, _)| self.layout.spec.objects[i].name.as_str())
            .collect()
    }

    /// Description of the current room only.
    pub fn observation(&self) -> Observation {
        let spec = &self.layout.spec;
        let mut parts = vec![format!("You are in the {}.", spec.rooms[self.room])];
        let locs: Vec<usize> = self.room_locations().collect();
        let names: Vec<&str> = locs
            .iter()
            .map(|&l| spec.locations[l].name.as_str())
            .collect();
        if !names.is_empty() {
            parts.push(format!("You see {}.", listing(&names)));
        }
        for &l in &locs {
            let name = &spec.locations[l].name;
            let here = self.objects_at(Pos::At(l));
            if self.layout.is_container(l) {
                if !self.open[l] {
                    parts.push(format!("The {name} is closed."));
                } else if here.is_empty() {
                    parts.push(format!("The {name} is open and empty."));
                } else {
                    parts.push(format!(
                        "The {name} is open and contains {}.",
                        listing(&here)
                    ));
                }
            } else if !here.is_empty() {
                let verb = if here.len() == 1 { "is" } else { "are" };
                parts.push(format!("On the {name} {verb} {}.", listing(&here)));
            }
        }
        let floor = self.objects_at(Pos::Floor(self.room));
        if !floor.is_empty() {
            let verb = if floor.len() == 1 { "is" } else { "are" };
            parts.push(format!("On the floor {verb} {}.", listing(&floor)));
        }
        let held = self.inventory();
        if held.is_empty() {
            parts.push("You are carrying nothing.".into());
        } else {
            parts.push(format!("You are carrying {}.", listing(&held)));
        }
        let exits: Vec<&str> = spec
            .exits
            .iter()
            .filter(|e| e.room == spec.rooms[self.room])
            .map(|e| e.direction.as_str())
            .collect();
        match exits.len() {
            0 => parts.push("There are no exits.".into()),
            1 => parts.push(format!("There is an exit to the {}.", exits[0])),
            _ => parts.push(format!("There are exits to the {}.", exits.join(" and "))),
        }
        Observation {
            text: parts.join(" "),
            feedback: self.feedback.clone(),
        }
    }

    /// Commands accepted in the current state, sorted and deduplicated.
    pub fn admissible_actions(&self) -> Vec<Action> {
        let spec = &self.layout.spec;
        let mut out = BTreeSet::new();
        out.insert("look".to_string());
        for e in spec
            .exits
            .iter()
            .filter(|e| e.room == spec.rooms[self.room])
        {
            out.insert(format!("go {}", e.direction.as_str()));
        }
        let locs: Vec<usize> = self.room_locations().collect();
        for &l in &locs {
            if !self.open[l] {
                out.insert(format!("open {}", spec.locations[l].name));
            }
        }
        if self.inventory.len() < spec.inventory_capacity {
            for (i, o) in spec.objects.iter().enumerate() {
                if self.visible(i) && !self.placed_correctly.contains(&i) {
                    out.insert(format!("take {}", o.name));
                }
            }
        }
        for &i in &self.inventory {
            let obj = &spec.objects[i].name;
            for &l in &locs {
                let loc = &spec.locations[l];
                match loc.kind {
                    LocationKind::Supporter => {
                        out.insert(format!("put {obj} on {}", loc.name));
                    }
                    LocationKind::Container if self.open[l] => {
                        out.insert(format!("insert {obj} into {}", loc.name));
                    }
                    LocationKind::Container => {}
                }
            }
        }
        out.into_iter().map(Action).collect()
    }

    /// Applies a command. Inadmissible commands consume a step and earn nothing.
    pub fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::Data("episode is over".into()));
        }
        self.t += 1;
        let admissible = self.admissible_actions().contains(action);
        let reward = if admissible {
            self.apply(action.as_str())
        } else {
            0.0
        };
        if !admissible {
            self.feedback = REJECTED.to_string();
        }
        Ok(StepOutcome {
            observation: self.observation(),
            reward,
            done: self.is_done(),
            rejected: !admissible,
        })
    }

    fn place(&mut self, object: &str, location: &str) -> f64 {
        let obj = self.layout.object_index[object];
        let loc = self.layout.location_index[location];
        self.positions[obj] = Pos::At(loc);
        self.inventory.retain(|&i| i != obj);
        if self.layout.object_goal[obj] == loc && self.placed_correctly.insert(obj) {
            1.0
        } else {
            0.0
        }
    }

    // Only called with admissible commands.
    fn apply(&mut self, cmd: &str) -> f64 {
        if cmd == "look" {
            self.feedback = "You look around.".into();
            return 0.0;
        }
        if let Some(dir) = cmd.strip_prefix("go ") {
            let spec = &self.layout.spec;
            let here = &spec.rooms[self.room];
            let exit = spec
                .exits
                .iter()
                .find(|e| e.room == *here && e.direction.as_str() == dir)
                .expect("admissible exit");
            self.room = self.layout.room_index[&exit.to];
            self.feedback = format!("You go {dir}.");
            return 0.0;
        }
        if let Some(name) = cmd.strip_prefix("open ") {
            let l = self.layout.location_index[name];
            self.open[l] = true;
            self.feedback = format!("You open the {name}.");
            return 0.0;
        }
        if let Some(name) = cmd.strip_prefix("take ") {
            let obj = self.layout.object_index[name];
            self.positions[obj] = Pos::Held;
            self.inventory.push(obj);
            self.feedback = format!("You take the {name}.");
            return 0.0;
        }
        if let Some(rest) = cmd.strip_prefix("put ") {
            let (object, location) = self.split_target(rest, " on ");
            self.feedback = format!("You put the {object} on the {location}.");
            return self.place(&object, &location);
        }
        if let Some(rest) = cmd.strip_prefix("insert ") {
            let (object, location) = self.split_target(rest, " into ");
            self.feedback = format!("You insert the {object} into the {location}.");
            return self.place(&object, &location);
        }
        unreachable!("admissible command `{cmd}` has no handler")
    }

    // Names may contain the separator word, so match against held objects.
    fn split_target(&self, rest: &str, sep: &str) -> (String, String) {
        for &i in &self.inventory {
            let name = &self.layout.spec.objects[i].name;
            if let Some(tail) = rest
                .strip_prefix(name.as_str())
                .and_then(|r| r.strip_prefix(sep))
            {
                return (name.clone(), tail.to_string());
            }
        }
        unreachable!("admissible placement `{rest}` names no held object")
    }

    /// Location names in rooms other than the current one.
    pub fn hidden_location_names(&self) -> Vec<&str> {
        (0..self.open.len())
            .filter(|&l| self.layout.location_room[l] != self.room)
            .map(|l| self.layout.spec.locations[l].name.as_str())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::spec::{Direction, Exit, Level, PlacedLocation, PlacedObject, Split};
    use crate::game::vocab::Relation;

    pub(crate) fn kitchen(fork_start: Position, dishwasher_open: bool) -> GameSpec {
        GameSpec {
            level: Level::Easy,
            seed: 0,
            split: Split::Train,
            max_steps: 50,
            inventory_capacity: 1,
            rooms: vec!["kitchen".into()],
            exits: vec![],
            locations: vec![
                PlacedLocation {
                    name: "dishwasher".into(),
                    kind: LocationKind::Container,
                    room: "kitchen".into(),
                    open: dishwasher_open,
                },
                PlacedLocation {
                    name: "dining table".into(),
                    kind: LocationKind::Supporter,
                    room: "kitchen".into(),
                    open: true,
                },
            ],
            objects: vec![PlacedObject {
                name: "dirty fork".into(),
                start: fork_start,
                goal_relation: Relation::In,
                goal_location: "dishwasher".into(),
                misplaced: true,
            }],
            start_room: "kitchen".into(),
        }
    }

    fn act(s: &mut GameState, cmd: &str) -> StepOutcome {
        s.step(&Action::new(cmd)).unwrap()
    }

    #[test]
    fn articles() {
        assert_eq!(article("apple"), "an");
        assert_eq!(article("utility shelf"), "a");
        assert_eq!(article("used towel"), "a");
        assert_eq!(article("umbrella"), "an");
        assert_eq!(article("mug"), "a");
    }

    #[test]
    fn reset_describes_misplaced_object() {
        let spec = kitchen(Position::At("dining table".into()), true);
        let (s, obs) = reset(&spec).unwrap();
        assert!(obs.text.contains("dirty fork"), "{}", obs.text);
        assert_eq!(s.t(), 0);
        assert!(s.placed_correctly().is_empty());
        assert_eq!(s.normalized_score(), 0.0);
    }

    #[test]
    fn insert_into_goal_scores() {
        let spec = kitchen(Position::Floor("kitchen".into()), true);
        let (mut s, _) = reset(&spec).unwrap();
        assert_eq!(act(&mut s, "take dirty fork").reward, 0.0);
        assert!(s
            .admissible_actions()
            .contains(&Action::new("insert dirty fork into dishwasher")));
        let out = act(&mut s, "insert dirty fork into dishwasher");
        assert_eq!(out.reward, 1.0);
        assert!(out.done);
        assert_eq!(s.normalized_score(), 1.0);
        assert!(s.step(&Action::new("look")).is_err());
    }

    #[test]
    fn closed_container_blocks_insert() {
        let spec = kitchen(Position::Floor("kitchen".into()), false);
        let (mut s, _) = reset(&spec).unwrap();
        act(&mut s, "take dirty fork");
        let acts = s.admissible_actions();
        assert!(!acts.iter().any(|a| a.as_str().starts_with("insert")));
        assert!(acts.contains(&Action::new("open dishwasher")));
        let mut sorted = acts.clone();
        sorted.sort();
        assert_eq!(acts, sorted);
    }

    #[test]
    fn rejected_command_consumes_a_step() {
        let spec = kitchen(Position::Floor("kitchen".into()), false);
        let (mut s, _) = reset(&spec).unwrap();
        let out = act(&mut s, "insert dirty fork into dishwasher");
        assert!(out.rejected);
        assert_eq!(out.reward, 0.0);
        assert_eq!(s.t(), 1);
        assert_eq!(out.observation.feedback, REJECTED);
    }

    #[test]
    fn timeout_at_fifty_steps() {
        let spec = kitchen(Position::Floor("kitchen".into()), false);
        let (mut s, _) = reset(&spec).unwrap();
        for i in 1..=50 {
            let out = act(&mut s, "look");
            assert_eq!(out.done, i == 50);
        }
        assert!(s.is_done());
    }

    #[test]
    fn placed_objects_cannot_be_taken() {
        let spec = kitchen(Position::Floor("kitchen".into()), true);
        let (mut s, _) = reset(&spec).unwrap();
        act(&mut s, "take dirty fork");
        act(&mut s, "put dirty fork on dining table");
        assert!(s
            .admissible_actions()
            .contains(&Action::new("take dirty fork")));
        act(&mut s, "take dirty fork");
        act(&mut s, "insert dirty fork into dishwasher");
        assert!(
            !s.admissible_actions()
                .contains(&Action::new("take dirty fork"))
                || s.is_done()
        );
    }

    #[test]
    fn hidden_rooms_are_not_described() {
        let mut spec = kitchen(Position::Floor("kitchen".into()), true);
        spec.rooms.push("bedroom".into());
        spec.locations.push(PlacedLocation {
            name: "wardrobe".into(),
            kind: LocationKind::Container,
            room: "bedroom".into(),
            open: true,
        });
        spec.exits = vec![
            Exit {
                room: "kitchen".into(),
                direction: Direction::East,
                to: "bedroom".into(),
            },
            Exit {
                room: "bedroom".into(),
                direction: Direction::West,
                to: "kitchen".into(),
            },
        ];
        let (mut s, obs) = reset(&spec).unwrap();
        assert!(!obs.text.contains("wardrobe"));
        assert!(obs.text.contains("exit to the east"));
        let out = act(&mut s, "go east");
        assert!(out.observation.text.contains("wardrobe"));
        assert!(!out.observation.text.contains("dishwasher"));
        assert_eq!(s.room(), "bedroom");
    }

    #[test]
    fn empty_room_still_allows_look() {
        let mut spec = kitchen(Position::Floor("kitchen".into()), true);
        spec.rooms.push("hall".into());
        spec.start_room = "hall".into();
        let (s, _) = reset(&spec).unwrap();
        assert_eq!(s.admissible_actions(), vec![Action::new("look")]);
    }
}
