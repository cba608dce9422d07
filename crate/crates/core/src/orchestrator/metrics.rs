//! Run logs, the metrics derived from them, and run-directory files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corridor::Corridor;
use crate::orchestrator::scenario::Mode;
use crate::resolver::{ConstraintKind, InstructionEvent};
use crate::world::Vec3;

/// Distance from the start and final positions below which slow motion
/// counts as starting or stopping rather than mid-motion, m.
pub const MOTION_BAND: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Moving,
    Stopping,
    Planning,
}

/// One logged control tick: the state reached at `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub px: f64,
    pub py: f64,
    pub pz: f64,
    pub e1: f64,
    pub e2: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub speed: f64,
    /// Id of the instruction event in force, 0 before the first one.
    pub event: u64,
    /// Largest slack the controller predicted for this state.
    pub slack: f64,
    /// Largest measured constraint violation of this state (m or rad).
    pub violation: f64,
    /// What the robot did during the tick that ended here.
    pub phase: Phase,
}

impl TrajectoryRow {
    pub fn p(&self) -> Vec3 {
        Vec3::new(self.px, self.py, self.pz)
    }

    pub fn v(&self) -> Vec3 {
        Vec3::new(self.vx, self.vy, self.vz)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    /// Simulated time the plan took effect.
    pub t: f64,
    /// Measured wall time of the planner call, s.
    pub wall: f64,
    /// Planning time charged to the task: wall time online, the simulated
    /// latency in the baseline.
    pub charged: f64,
    pub event: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub start: f64,
    pub end: Option<f64>,
    pub goal: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunErrorRecord {
    pub t: f64,
    pub message: String,
    /// Fatal errors abort the run.
    pub fatal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorRecord {
    pub t: f64,
    pub event: Option<u64>,
    pub corridor: Corridor,
}

/// Everything a run produces besides the metrics themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub scenario: String,
    pub mode: Mode,
    #[serde(skip)]
    pub rows: Vec<TrajectoryRow>,
    pub plans: Vec<PlanRecord>,
    pub segments: Vec<SegmentRecord>,
    #[serde(skip)]
    pub events: Vec<InstructionEvent>,
    #[serde(skip)]
    pub corridors: Vec<CorridorRecord>,
    pub first_word: Option<f64>,
    pub word_count: usize,
    /// Time the last queued goal was reached.
    pub goal_reached: Option<f64>,
    pub errors: Vec<RunErrorRecord>,
}

impl RunLog {
    pub fn new(scenario: &str, mode: Mode) -> Self {
        RunLog {
            scenario: scenario.to_string(),
            mode,
            rows: Vec::new(),
            plans: Vec::new(),
            segments: Vec::new(),
            events: Vec::new(),
            corridors: Vec::new(),
            first_word: None,
            word_count: 0,
            goal_reached: None,
            errors: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLogEntry {
    pub t: f64,
    pub id: u64,
    pub kinds: Vec<ConstraintKind>,
    pub goal: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub scenario: String,
    pub mode: Mode,
    pub t_plan: Vec<f64>,
    pub t_traj: Vec<f64>,
    /// First word to final goal; `None` when the goal was never reached.
    pub t_task: Option<f64>,
    pub events: Vec<EventLogEntry>,
    /// Slowest speed away from the start and end of the motion, m/s.
    pub min_mid_motion_speed: Option<f64>,
    pub max_violation: f64,
    /// Time spent neither planning nor moving between the first word and
    /// the goal, s.
    pub idle: f64,
    pub errors: Vec<String>,
}

/// Derives metrics from a run log.
pub fn compute_metrics(log: &RunLog) -> RunMetrics {
    let t_plan = log.plans.iter().map(|p| p.charged).collect();
    let t_traj = log
        .segments
        .iter()
        .filter_map(|s| s.end.map(|e| e - s.start))
        .collect();
    let t_task = match (log.word_count, log.first_word, log.goal_reached) {
        (0, _, _) => Some(0.0),
        (_, Some(first), Some(done)) => Some(done - first),
        _ => None,
    };
    let events = log
        .events
        .iter()
        .map(|e| EventLogEntry {
            t: e.timestamp,
            id: e.id,
            kinds: e.kinds(),
            goal: e.goal.as_ref().map(|g| g.label.clone()),
        })
        .collect();
    let min_mid_motion_speed = match (log.rows.first(), log.rows.last()) {
        (Some(first), Some(last)) => {
            let (p0, pf) = (first.p(), last.p());
            log.rows
                .iter()
                .filter(|r| (r.p() - p0).norm() >= MOTION_BAND && (r.p() - pf).norm() >= MOTION_BAND)
                .map(|r| r.speed)
                .reduce(f64::min)
        }
        _ => None,
    };
    let max_violation = log.rows.iter().map(|r| r.violation).fold(0.0, f64::max);
    let idle = match (log.first_word, log.goal_reached) {
        (Some(first), Some(done)) => log
            .rows
            .windows(2)
            .filter(|w| w[1].t > first + 1e-9 && w[1].t <= done + 1e-9)
            .filter(|w| matches!(w[1].phase, Phase::Idle | Phase::Stopping))
            .map(|w| w[1].t - w[0].t)
            .sum(),
        _ => 0.0,
    };
    RunMetrics {
        scenario: log.scenario.clone(),
        mode: log.mode,
        t_plan,
        t_traj,
        t_task,
        events,
        min_mid_motion_speed,
        max_violation,
        idle,
        errors: log.errors.iter().map(|e| format!("t={:.1}: {}", e.t, e.message)).collect(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunDirError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const CORRIDORS_FILE: &str = "corridors.json";
pub const LOG_FILE: &str = "run_log.json";
pub const METRICS_FILE: &str = "metrics.json";

/// Trajectory CSV bytes. Contains simulated quantities only, so identical
/// runs give identical bytes.
pub fn trajectory_csv(rows: &[TrajectoryRow]) -> Result<Vec<u8>, RunDirError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| RunDirError::Io(e.into_error()))
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>, RunDirError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Writes the trajectory, events, corridors, run log, and metrics.
pub fn write_run_dir(dir: &Path, log: &RunLog, metrics: &RunMetrics) -> Result<(), RunDirError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(TRAJECTORY_FILE), trajectory_csv(&log.rows)?)?;
    let mut events = String::new();
    for e in &log.events {
        events.push_str(&serde_json::to_string(e)?);
        events.push('\n');
    }
    std::fs::write(dir.join(EVENTS_FILE), events)?;
    std::fs::write(dir.join(CORRIDORS_FILE), serde_json::to_string_pretty(&log.corridors)?)?;
    std::fs::write(dir.join(LOG_FILE), serde_json::to_string_pretty(log)?)?;
    std::fs::write(dir.join(METRICS_FILE), serde_json::to_string_pretty(metrics)?)?;
    Ok(())
}

/// Reloads a run directory into a log.
pub fn read_run_dir(dir: &Path) -> Result<RunLog, RunDirError> {
    let mut log: RunLog = serde_json::from_str(&std::fs::read_to_string(dir.join(LOG_FILE))?)?;
    log.rows = read_trajectory(&dir.join(TRAJECTORY_FILE))?;
    log.events = std::fs::read_to_string(dir.join(EVENTS_FILE))?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()?;
    log.corridors = serde_json::from_str(&std::fs::read_to_string(dir.join(CORRIDORS_FILE))?)?;
    Ok(log)
}
