//! Scenario runs, the offline baseline, metrics, and the live session.

pub mod metrics;
pub mod pipeline;
pub mod scenario;
pub mod service;

pub use metrics::{compute_metrics, RunLog, RunMetrics, TrajectoryRow};
pub use pipeline::{run, Pipeline, RunOutput};
pub use scenario::{Mode, Scenario, ScenarioError};
pub use service::{ClientFrame, ServerFrame, Session};
