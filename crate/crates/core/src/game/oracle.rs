//! Scripted solver with full knowledge of the spec. Used to certify that
//! generated games are solvable and as an evaluation ceiling.

use std::collections::{HashMap, VecDeque};

use super::engine::{reset, Action, GameState};
use super::spec::{GameSpec, Position};
use super::vocab::LocationKind;
use crate::error::{Error, Result};

/// Shortest `go` route between two rooms.
fn route(spec: &GameSpec, from: &str, to: &str) -> Option<Vec<Action>> {
    let mut prev: HashMap<&str, (&str, &str)> = HashMap::new();
    let mut queue = VecDeque::from([from]);
    while let Some(room) = queue.pop_front() {
        if room == to {
            let mut path = Vec::new();
            let mut cur = to;
            while cur != from {
                let (p, dir) = prev[cur];
                path.push(Action::new(format!("go {dir}")));
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        for e in spec.exits.iter().filter(|e| e.room == room) {
            if e.to != from && !prev.contains_key(e.to.as_str()) {
                prev.insert(e.to.as_str(), (room, e.direction.as_str()));
                queue.push_back(e.to.as_str());
            }
        }
    }
    None
}

fn room_of(spec: &GameSpec, pos: &Position, current: &str) -> String {
    match pos {
        Position::Floor(r) => r.clone(),
        Position::At(l) => spec
            .locations
            .iter()
            .find(|x| x.name == *l)
            .map(|x| x.room.clone())
            .expect("validated spec"),
        Position::Held => current.to_string(),
    }
}

fn exec(state: &mut GameState, plan: &mut Vec<Action>, action: Action) -> Result<()> {
    let out = state.step(&action)?;
    if out.rejected {
        return Err(Error::Data(format!(
            "oracle issued inadmissible `{action}`"
        )));
    }
    plan.push(action);
    Ok(())
}

fn walk(state: &mut GameState, plan: &mut Vec<Action>, target: &str) -> Result<()> {
    let spec = state.spec().clone();
    let path = route(&spec, state.room(), target)
        .ok_or_else(|| Error::Data(format!("game {}: room {target} unreachable", spec.seed)))?;
    for a in path {
        exec(state, plan, a)?;
    }
    Ok(())
}

fn open_if_closed(state: &mut GameState, plan: &mut Vec<Action>, location: &str) -> Result<()> {
    if state.is_open(location) == Some(false) {
        exec(state, plan, Action::new(format!("open {location}")))?;
    }
    Ok(())
}

/// Plan that takes each misplaced object to its goal, nearest first.
/// Fails only if the spec is unsolvable.
pub fn oracle_policy(spec: &GameSpec) -> Result<Vec<Action>> {
    // The oracle may run past max_steps; callers compare the plan length.
    let mut unbounded = spec.clone();
    unbounded.max_steps = u32::MAX;
    let (mut state, _) = reset(&unbounded)?;

    let mut plan = Vec::new();
    loop {
        let pending: Vec<usize> = spec
            .objects
            .iter()
            .enumerate()
            .filter(|(_, o)| o.misplaced && !state.placed_correctly().contains(&o.name.as_str()))
            .map(|(i, _)| i)
            .collect();
        if pending.is_empty() {
            break;
        }
        let here = state.room().to_string();
        let next = pending
            .iter()
            .copied()
            .min_by_key(|&i| {
                let pos = state.position(&spec.objects[i].name).expect("known object");
                let room = room_of(spec, &pos, &here);
                route(spec, &here, &room).map_or(usize::MAX, |p| p.len())
            })
            .expect("non-empty");
        let obj = &spec.objects[next];
        let pos = state.position(&obj.name).expect("known object");
        if pos != Position::Held {
            walk(&mut state, &mut plan, &room_of(spec, &pos, &here))?;
            if let Position::At(l) = &pos {
                open_if_closed(&mut state, &mut plan, l)?;
            }
            exec(
                &mut state,
                &mut plan,
                Action::new(format!("take {}", obj.name)),
            )?;
        }
        let goal = spec
            .locations
            .iter()
            .find(|l| l.name == obj.goal_location)
            .expect("validated spec");
        walk(&mut state, &mut plan, &goal.room)?;
        let cmd = match goal.kind {
            LocationKind::Supporter => format!("put {} on {}", obj.name, goal.name),
            LocationKind::Container => {
                open_if_closed(&mut state, &mut plan, &goal.name)?;
                format!("insert {} into {}", obj.name, goal.name)
            }
        };
        exec(&mut state, &mut plan, Action::new(cmd))?;
    }
    Ok(plan)
}
