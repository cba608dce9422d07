//! Live session behind the UI event stream.
//!
//! The session is transport-agnostic: it consumes client text frames and
//! produces server frames. The binary wraps it in a WebSocket server that
//! calls [`Session::tick`] every control period.
//!
//! Client frames (one JSON object each):
//!
//! | frame | effect |
//! |---|---|
//! | `{"word": "grab"}` | feed one word at the current simulated time |
//! | `{"select_scenario": "mug_from_top"}` | load a shipped scenario's world and start state |
//! | `{"reset": true}` | restart the current scenario |
//! | `{"mode": "offline", "offline_latency": 5.6}` | switch mode and restart |
//!
//! Server frames carry a `"frame"` tag: `state`, `parse`, `event`,
//! `corridor`, `metrics`, `scenario`, or `error`. Field names are frozen.

use serde::{Deserialize, Serialize};

use crate::chart::ParseStatus;
use crate::corridor::Corridor;
use crate::orchestrator::metrics::{compute_metrics, Phase, RunMetrics};
use crate::orchestrator::pipeline::Pipeline;
use crate::orchestrator::scenario::{self, InitialState, Mode, Scenario, WorldRef};
use crate::resolver::InstructionEvent;
use crate::world::{Vec3, WorldSnapshot};

/// Latency used when a client switches to the baseline without naming one.
pub const DEFAULT_OFFLINE_LATENCY: f64 = 5.6;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ClientFrame {
    Word {
        word: String,
    },
    SelectScenario {
        select_scenario: String,
    },
    Reset {
        reset: bool,
    },
    Mode {
        mode: Mode,
        #[serde(default)]
        offline_latency: Option<f64>,
    },
}

/// Axis-aligned bounds of a region, enough to draw x-y and y-z projections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxFrame {
    pub min: Vec3,
    pub max: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFrame {
    pub span: (usize, usize),
    pub entries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "frame", rename_all = "snake_case")]
pub enum ServerFrame {
    State {
        t: f64,
        p: Vec3,
        e: [f64; 2],
        v: Vec3,
        phase: Phase,
        /// Corridor regions the end effector is currently inside.
        active_regions: Vec<usize>,
        slack: f64,
    },
    Parse {
        t: f64,
        status: ParseStatus,
        tokens: Vec<String>,
        cells: Vec<CellFrame>,
        best: Option<String>,
    },
    Event {
        t: f64,
        event: Box<InstructionEvent>,
    },
    Corridor {
        t: f64,
        event: Option<u64>,
        boxes: Vec<BoxFrame>,
        via_points: Vec<Vec3>,
        orientation_bound: [f64; 2],
    },
    Metrics {
        metrics: Box<RunMetrics>,
    },
    Scenario {
        name: String,
        mode: Mode,
        world: Box<WorldSnapshot>,
    },
    Error {
        message: String,
    },
}

fn corridor_frame(t: f64, event: Option<u64>, c: &Corridor) -> ServerFrame {
    ServerFrame::Corridor {
        t,
        event,
        boxes: c
            .regions
            .iter()
            .filter_map(|r| r.bounding_box())
            .map(|(min, max)| BoxFrame { min, max })
            .collect(),
        via_points: c.via_points.clone(),
        orientation_bound: c.orientation_bounds.first().copied().unwrap_or([crate::corridor::DEFAULT_ORIENTATION_BOUND; 2]),
    }
}

/// A scenario with only a world: words come from the client.
pub fn interactive_scenario(world: WorldSnapshot) -> Scenario {
    let start = world.locations.get("home").map(|p| p.position).unwrap_or_else(|| {
        world
            .workspace
            .bounding_box()
            .map(|(lo, hi)| (lo + hi) * 0.5)
            .unwrap_or_else(Vec3::zeros)
    });
    Scenario {
        version: scenario::SCENARIO_SCHEMA_VERSION,
        name: if world.name.is_empty() { "interactive".into() } else { world.name.clone() },
        description: String::new(),
        world: WorldRef::Inline(Box::new(world)),
        initial: InitialState {
            p: start,
            e: [0.0; 2],
            v: Vec3::zeros(),
            e_dot: [0.0; 2],
        },
        words: Vec::new(),
        mode: Mode::Online,
        offline_latency: 0.0,
        seed: 0,
        timeout: scenario::DEFAULT_TIMEOUT,
    }
}

pub struct Session {
    scenario: Scenario,
    pipeline: Pipeline,
    corridors_sent: usize,
    reported_goal: Option<f64>,
}

impl Session {
    /// Starts a session on the words-free version of `scenario`.
    pub fn new(mut scenario: Scenario) -> Result<Self, scenario::ScenarioError> {
        scenario.words.clear();
        let pipeline = Pipeline::new(&scenario)?;
        Ok(Session {
            scenario,
            pipeline,
            corridors_sent: 0,
            reported_goal: None,
        })
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Frames describing the session; sent to newly connected clients.
    pub fn hello(&self) -> Vec<ServerFrame> {
        let mut frames = vec![self.scenario_frame(), self.state_frame()];
        if let Some(sets) = self.pipeline.sets() {
            frames.push(corridor_frame(self.pipeline.time(), None, &sets.task));
        }
        frames
    }

    fn scenario_frame(&self) -> ServerFrame {
        ServerFrame::Scenario {
            name: self.scenario.name.clone(),
            mode: self.scenario.mode,
            world: Box::new(self.pipeline.world().clone()),
        }
    }

    fn restart(&mut self, scenario: Scenario) -> Vec<ServerFrame> {
        match Session::new(scenario) {
            Ok(s) => {
                *self = s;
                self.hello()
            }
            Err(e) => vec![ServerFrame::Error { message: e.to_string() }],
        }
    }

    /// Handles one client text frame. Malformed input yields an error frame
    /// and leaves the session untouched.
    pub fn handle_text(&mut self, text: &str) -> Vec<ServerFrame> {
        match serde_json::from_str::<ClientFrame>(text) {
            Ok(frame) => self.handle(frame),
            Err(e) => vec![ServerFrame::Error {
                message: format!("malformed client frame: {e}"),
            }],
        }
    }

    pub fn handle(&mut self, frame: ClientFrame) -> Vec<ServerFrame> {
        match frame {
            ClientFrame::Word { word } => self.word(&word),
            ClientFrame::SelectScenario { select_scenario } => match scenario::builtin(&select_scenario) {
                Ok(s) => {
                    let latency = self.scenario.offline_latency;
                    self.restart(s.with_mode(self.scenario.mode, latency))
                }
                Err(e) => vec![ServerFrame::Error { message: e.to_string() }],
            },
            ClientFrame::Reset { reset } => {
                if reset {
                    self.restart(self.scenario.clone())
                } else {
                    Vec::new()
                }
            }
            ClientFrame::Mode { mode, offline_latency } => {
                let latency = offline_latency.unwrap_or(DEFAULT_OFFLINE_LATENCY);
                let s = self.scenario.clone().with_mode(mode, latency);
                self.restart(s)
            }
        }
    }

    fn word(&mut self, word: &str) -> Vec<ServerFrame> {
        let word = word.trim();
        if word.is_empty() || word.contains(char::is_whitespace) {
            return vec![ServerFrame::Error {
                message: format!("expected a single word, got `{word}`"),
            }];
        }
        let t = self.pipeline.time();
        let out = self.pipeline.push_word(t, word);
        let chart = self.pipeline.chart();
        let dict = self.pipeline.dictionary();
        let n = chart.len();
        let mut cells = Vec::new();
        for j in 0..n {
            for k in j..n {
                let entries: Vec<String> = chart.cell(j, k).map(|node| chart.describe(node.id, dict)).collect();
                if !entries.is_empty() {
                    cells.push(CellFrame { span: (j, k), entries });
                }
            }
        }
        let mut frames = vec![ServerFrame::Parse {
            t,
            status: out.parse.status,
            tokens: chart.tokens().to_vec(),
            cells,
            best: out.best,
        }];
        if let Some(event) = out.event {
            frames.push(ServerFrame::Event {
                t,
                event: Box::new(event),
            });
        }
        if let Some(message) = out.error {
            frames.push(ServerFrame::Error { message });
        }
        frames
    }

    fn state_frame(&self) -> ServerFrame {
        let x = self.pipeline.state();
        let active_regions = self
            .pipeline
            .sets()
            .map(|s| {
                s.task
                    .regions
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.contains(&x.p))
                    .map(|(i, _)| i)
                    .collect()
            })
            .unwrap_or_default();
        ServerFrame::State {
            t: self.pipeline.time(),
            p: x.p,
            e: x.e,
            v: x.v,
            phase: self.pipeline.phase(),
            active_regions,
            slack: self.pipeline.log().rows.last().map(|r| r.slack).unwrap_or(0.0),
        }
    }

    /// Advances one control period and reports what changed.
    pub fn tick(&mut self) -> Vec<ServerFrame> {
        self.pipeline.tick();
        let mut frames = Vec::new();
        let log = self.pipeline.log();
        for rec in &log.corridors[self.corridors_sent..] {
            frames.push(corridor_frame(rec.t, rec.event, &rec.corridor));
        }
        self.corridors_sent = log.corridors.len();
        frames.push(self.state_frame());
        let log = self.pipeline.log();
        if log.goal_reached != self.reported_goal && self.pipeline.is_quiescent() {
            self.reported_goal = log.goal_reached;
            frames.push(ServerFrame::Metrics {
                metrics: Box::new(compute_metrics(log)),
            });
        }
        for e in log.errors.iter().filter(|e| e.fatal) {
            frames.push(ServerFrame::Error { message: e.message.clone() });
        }
        frames
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session() -> Session {
        Session::new(scenario::builtin("mug_from_top").unwrap()).unwrap()
    }

    #[test]
    fn word_frame_reports_partial_parse() {
        let mut s = session();
        let frames = s.handle_text(r#"{"word":"grab"}"#);
        let ServerFrame::Parse { status, tokens, .. } = &frames[0] else {
            panic!("{frames:?}")
        };
        assert_eq!(*status, ParseStatus::Partial);
        assert_eq!(tokens, &["grab"]);
    }

    #[test]
    fn malformed_frame_keeps_session() {
        let mut s = session();
        s.handle_text(r#"{"word":"grab"}"#);
        for bad in ["{", r#"{"word":3}"#, r#"{"jump":true}"#, r#"{"word":"two words"}"#] {
            let frames = s.handle_text(bad);
            assert!(matches!(frames.as_slice(), [ServerFrame::Error { .. }]), "{bad}: {frames:?}");
        }
        assert_eq!(s.pipeline().chart().tokens(), &["grab"]);
    }

    #[test]
    fn event_then_corridor_then_motion() {
        let mut s = session();
        for w in ["grab", "the"] {
            s.handle_text(&format!(r#"{{"word":"{w}"}}"#));
        }
        let frames = s.handle_text(r#"{"word":"mug"}"#);
        assert!(frames.iter().any(|f| matches!(f, ServerFrame::Event { .. })));
        let frames = s.tick();
        assert!(matches!(frames[0], ServerFrame::Corridor { .. }), "{frames:?}");
        let mut reached = false;
        for _ in 0..100 {
            if s.tick().iter().any(|f| matches!(f, ServerFrame::Metrics { .. })) {
                reached = true;
                break;
            }
        }
        assert!(reached);
    }

    #[test]
    fn frames_are_tagged() {
        let v = serde_json::to_value(ServerFrame::Error { message: "x".into() }).unwrap();
        assert_eq!(v["frame"], "error");
        let s = session();
        let v = serde_json::to_value(&s.hello()[1]).unwrap();
        assert_eq!(v["frame"], "state");
        for key in ["t", "p", "e", "v", "phase", "active_regions", "slack"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn mode_switch_and_scenario_select() {
        let mut s = session();
        let frames = s.handle_text(r#"{"mode":"offline"}"#);
        assert!(matches!(&frames[0], ServerFrame::Scenario { mode: Mode::OfflineBaseline, .. }));
        assert_eq!(s.scenario().offline_latency, DEFAULT_OFFLINE_LATENCY);
        let frames = s.handle_text(r#"{"select_scenario":"handover_upright"}"#);
        assert!(matches!(&frames[0], ServerFrame::Scenario { name, .. } if name == "handover_upright"));
        let frames = s.handle_text(r#"{"select_scenario":"nope"}"#);
        assert!(matches!(frames.as_slice(), [ServerFrame::Error { .. }]));
    }
}
