//! Python bindings: knowledge statistics, cleanup games, training and
//! evaluation.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ::tidyworld::game::{
    self as twgame, Action, EntityVocabulary, GameSpec, GameState, Level, Split,
};
use ::tidyworld::harness;
use ::tidyworld::knowledge::{load_kb, KbFormat};
use ::tidyworld::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

/// Entity, relation and triplet counts of a knowledge base file.
#[pyfunction]
fn kb_stats<'py>(py: Python<'py>, path: PathBuf, format: &str) -> PyResult<Bound<'py, PyDict>> {
    let kb = load_kb(&path, parse::<KbFormat>(format)?).map_err(to_py)?;
    let stats = kb.stats();
    let d = PyDict::new(py);
    d.set_item("entities", stats.n_entities)?;
    d.set_item("relations", stats.n_relations)?;
    d.set_item("triplets", stats.n_triplets)?;
    Ok(d)
}

/// The `top` most frequent relations with their triplet counts.
#[pyfunction]
#[pyo3(signature = (path, format, top = 15))]
fn relation_histogram(path: PathBuf, format: &str, top: usize) -> PyResult<Vec<(String, u64)>> {
    let kb = load_kb(&path, parse::<KbFormat>(format)?).map_err(to_py)?;
    kb.relation_histogram(top).map_err(to_py)
}

/// One cleanup game generated from the bundled vocabulary.
#[pyclass(module = "tidyworld")]
struct Game {
    spec: GameSpec,
    state: GameState,
}

#[pymethods]
impl Game {
    #[new]
    #[pyo3(signature = (level, seed, split = "train"))]
    fn new(level: &str, seed: u64, split: &str) -> PyResult<Self> {
        let spec = twgame::generate_game(
            parse::<Level>(level)?,
            &EntityVocabulary::bundled(),
            seed,
            parse::<Split>(split)?,
        )
        .map_err(to_py)?;
        let (state, _) = twgame::reset(&spec).map_err(to_py)?;
        Ok(Game { spec, state })
    }

    /// Loads a game written by `games generate`.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let spec = GameSpec::load(path).map_err(to_py)?;
        let (state, _) = twgame::reset(&spec).map_err(to_py)?;
        Ok(Game { spec, state })
    }

    /// Restarts the episode and returns the first observation.
    fn reset(&mut self) -> PyResult<String> {
        let (state, obs) = twgame::reset(&self.spec).map_err(to_py)?;
        self.state = state;
        Ok(obs.full_text())
    }

    fn admissible_actions(&self) -> Vec<String> {
        self.state
            .admissible_actions()
            .into_iter()
            .map(|a| a.0)
            .collect()
    }

    /// Returns `(observation, reward, done)`.
    fn step(&mut self, action: &str) -> PyResult<(String, f64, bool)> {
        if self.state.is_done() {
            return Err(PyRuntimeError::new_err("episode is over; call reset()"));
        }
        let out = self.state.step(&Action::new(action)).map_err(to_py)?;
        Ok((out.observation.full_text(), out.reward, out.done))
    }

    fn oracle_plan(&self) -> PyResult<Vec<String>> {
        Ok(twgame::oracle_policy(&self.spec)
            .map_err(to_py)?
            .into_iter()
            .map(|a| a.0)
            .collect())
    }

    #[getter]
    fn score(&self) -> f64 {
        self.state.normalized_score()
    }

    #[getter]
    fn steps(&self) -> u32 {
        self.state.t()
    }

    #[getter]
    fn done(&self) -> bool {
        self.state.is_done()
    }

    fn to_json(&self) -> String {
        self.spec.to_json()
    }
}

/// Trains from a JSON config; returns the metrics CSV path.
#[pyfunction]
fn train(py: Python<'_>, config: PathBuf) -> PyResult<String> {
    let cfg = harness::TrainConfig::load(&config).map_err(to_py)?;
    let report = py.detach(|| harness::train(&cfg)).map_err(to_py)?;
    Ok(report.metrics_path.to_string_lossy().into_owned())
}

/// Greedy evaluation of a checkpoint; returns the report as CSV text.
#[pyfunction]
#[pyo3(signature = (checkpoint, games, episodes = 1))]
fn evaluate(
    py: Python<'_>,
    checkpoint: PathBuf,
    games: PathBuf,
    episodes: usize,
) -> PyResult<String> {
    let report = py
        .detach(|| harness::evaluate(&checkpoint, &games, episodes))
        .map_err(to_py)?;
    Ok(report.to_csv())
}

#[pymodule]
#[pyo3(name = "tidyworld")]
fn tidyworld_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(kb_stats, m)?)?;
    m.add_function(wrap_pyfunction!(relation_histogram, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_class::<Game>()?;
    Ok(())
}
