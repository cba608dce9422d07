//! Scenario documents: a world, an initial end-effector state, and a timed
//! word stream standing in for live speech.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::EEState;
use crate::world::{load_world, Vec3, WorldError, WorldSnapshot};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedWord {
    /// Arrival time, s.
    pub t: f64,
    pub word: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Online,
    #[serde(alias = "offline")]
    OfflineBaseline,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "online" => Ok(Mode::Online),
            "offline" | "offline_baseline" => Ok(Mode::OfflineBaseline),
            other => Err(format!("unknown mode `{other}` (expected online or offline)")),
        }
    }
}

/// Either a path (relative to the scenario file) or an inline world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WorldRef {
    Path(String),
    Inline(Box<WorldSnapshot>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub p: Vec3,
    #[serde(default)]
    pub e: [f64; 2],
    #[serde(default = "Vec3::zeros")]
    pub v: Vec3,
    #[serde(default)]
    pub e_dot: [f64; 2],
}

impl InitialState {
    pub fn state(&self) -> EEState {
        EEState {
            p: self.p,
            e: self.e,
            v: self.v,
            e_dot: self.e_dot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "default_version")]
    pub version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub world: WorldRef,
    pub initial: InitialState,
    #[serde(default)]
    pub words: Vec<TimedWord>,
    #[serde(default)]
    pub mode: Mode,
    /// Simulated planning latency of the offline baseline, s.
    #[serde(default)]
    pub offline_latency: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_timeout")]
    pub timeout: f64,
}

fn default_version() -> u32 {
    SCENARIO_SCHEMA_VERSION
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("scenario schema violation: {0}")]
    Schema(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("unknown built-in scenario `{0}`")]
    Unknown(String),
}

impl Scenario {
    /// Parses a scenario; a world path is resolved against `base`.
    pub fn from_json(source: &str, base: Option<&Path>) -> Result<Self, ScenarioError> {
        let mut s: Scenario = serde_json::from_str(source).map_err(|e| ScenarioError::Schema(e.to_string()))?;
        if let WorldRef::Path(p) = &s.world {
            let path = base.map(|b| b.join(p)).unwrap_or_else(|| PathBuf::from(p));
            let text = std::fs::read_to_string(&path).map_err(|source| ScenarioError::Io { path, source })?;
            s.world = WorldRef::Inline(Box::new(load_world(&text)?));
        }
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path.parent())
    }

    /// The resolved world. Scenarios built by the loaders always carry one.
    pub fn world(&self) -> Result<&WorldSnapshot, ScenarioError> {
        match &self.world {
            WorldRef::Inline(w) => Ok(w),
            WorldRef::Path(p) => Err(ScenarioError::Invalid(format!("world `{p}` was not resolved"))),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.version != SCENARIO_SCHEMA_VERSION {
            return Err(ScenarioError::Invalid(format!("unsupported version {}", self.version)));
        }
        if self.words.windows(2).any(|w| w[1].t < w[0].t) {
            return Err(ScenarioError::Invalid("word timestamps decrease".into()));
        }
        if self.words.iter().any(|w| !w.t.is_finite() || w.t < 0.0) {
            return Err(ScenarioError::Invalid("word timestamps must be finite and non-negative".into()));
        }
        match self.mode {
            Mode::Online if self.offline_latency != 0.0 => {
                return Err(ScenarioError::Invalid("offline latency is only valid in baseline mode".into()))
            }
            Mode::OfflineBaseline if !(self.offline_latency > 0.0 && self.offline_latency.is_finite()) => {
                return Err(ScenarioError::Invalid("baseline mode needs a positive offline latency".into()))
            }
            _ => {}
        }
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(ScenarioError::Invalid("timeout must be positive".into()));
        }
        if !self.initial.state().is_finite() {
            return Err(ScenarioError::Invalid("non-finite initial state".into()));
        }
        self.world()?.validate()?;
        Ok(())
    }

    /// Switches mode; the latency is reset to 0 for online runs.
    pub fn with_mode(mut self, mode: Mode, latency: f64) -> Self {
        self.mode = mode;
        self.offline_latency = match mode {
            Mode::Online => 0.0,
            Mode::OfflineBaseline => latency,
        };
        self
    }

    /// The utterance as one string.
    pub fn utterance(&self) -> String {
        self.words.iter().map(|w| w.word.as_str()).collect::<Vec<_>>().join(" ")
    }
}

macro_rules! builtin_table {
    ($($name:literal => $world:literal),* $(,)?) => {
        const BUILTIN: &[(&str, &str, &str, &str)] = &[
            $(($name,
               include_str!(concat!("../../data/scenarios/", $name, ".json")),
               $world,
               include_str!(concat!("../../data/worlds/", $world, ".json")))),*
        ];
    };
}

builtin_table! {
    "mug_from_top" => "grasp_mug",
    "mug_side" => "grasp_mug",
    "handover_upright" => "handover_laptop",
    "handover_avoid_laptop" => "handover_laptop",
    "screwdriver" => "screwdriver",
    "screwdriver_faster" => "screwdriver",
    "blue_mug" => "tabletop",
    "right_box" => "tabletop",
    "push_apple" => "tabletop",
    "cup_after_apple" => "tabletop",
}

/// Names of the scenarios shipped with the crate.
pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|b| b.0)
}

/// A shipped scenario with its world resolved.
pub fn builtin(name: &str) -> Result<Scenario, ScenarioError> {
    let (_, scenario, _, world) = BUILTIN
        .iter()
        .find(|b| b.0 == name)
        .ok_or_else(|| ScenarioError::Unknown(name.to_string()))?;
    let mut value: serde_json::Value = serde_json::from_str(scenario).map_err(|e| ScenarioError::Schema(e.to_string()))?;
    value["world"] = serde_json::from_str(world).map_err(|e| ScenarioError::Schema(e.to_string()))?;
    Scenario::from_json(&value.to_string(), None)
}

/// A shipped world by file stem.
pub fn builtin_world(name: &str) -> Result<WorldSnapshot, ScenarioError> {
    let (_, _, _, text) = BUILTIN
        .iter()
        .find(|b| b.2 == name)
        .ok_or_else(|| ScenarioError::Unknown(name.to_string()))?;
    Ok(load_world(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_loads() {
        for name in builtin_names() {
            let s = builtin(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name, name);
            assert!(!s.words.is_empty());
        }
    }

    #[test]
    fn validation_rules() {
        let mut s = builtin("mug_from_top").unwrap();
        assert!(s.validate().is_ok());
        s.offline_latency = 1.0;
        assert!(s.validate().is_err());
        let s = s.with_mode(Mode::OfflineBaseline, 5.6);
        assert!(s.validate().is_ok());
        let mut bad = s.clone().with_mode(Mode::Online, 0.0);
        bad.words.swap(0, 1);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mode_names() {
        assert_eq!("offline".parse::<Mode>().unwrap(), Mode::OfflineBaseline);
        assert_eq!("online".parse::<Mode>().unwrap(), Mode::Online);
        assert!("fast".parse::<Mode>().is_err());
    }
}
