//! The closed loop: words in, chart, resolver, planner, 10 Hz controller,
//! simulated end effector out.
//!
//! Time is simulated: tick `k` covers `[k·dt, (k+1)·dt)`. Words are fed
//! before the tick whose start time is at or after their timestamp, so no
//! event acts on the trajectory before it exists. Planner wall time is
//! measured and logged but never feeds back into the simulation, which keeps
//! runs bit-reproducible.

use std::collections::VecDeque;
use std::time::Instant;

use crate::chart::{best_parse, Chart, ParseResult};
use crate::controller::{self, ControlInput, Controller, ControllerConfig, EEState, HorizonSolution};
use crate::corridor::{merge_safety, plan_corridor, replan_from, AdmissibleSets, PlanError, RobotLimits, SafeSet};
use crate::grammar::Dictionary;
use crate::orchestrator::metrics::{
    compute_metrics, CorridorRecord, Phase, PlanRecord, RunErrorRecord, RunLog, RunMetrics, SegmentRecord,
    TrajectoryRow,
};
use crate::orchestrator::scenario::{Mode, Scenario, ScenarioError};
use crate::resolver::{ConstraintKind, CostParams, GoalTarget, InstructionEvent, ResolveError, Resolver};
use crate::world::{Pose, WorldSnapshot};

/// Goal tolerances.
pub const GOAL_POSITION_TOL: f64 = 0.005;
pub const GOAL_SPEED_TOL: f64 = 0.02;
pub const GOAL_ORIENTATION_TOL: f64 = 0.02;
pub const GOAL_RATE_TOL: f64 = 0.05;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Activity {
    Idle,
    Moving,
    Stopping,
    /// Baseline only: the offline planner finishes the first `events`
    /// queued events at `until`; later ones wait for the next stop.
    Planning { until: f64, events: usize },
}

impl Activity {
    fn phase(self) -> Phase {
        match self {
            Activity::Idle => Phase::Idle,
            Activity::Moving => Phase::Moving,
            Activity::Stopping => Phase::Stopping,
            Activity::Planning { .. } => Phase::Planning,
        }
    }
}

/// What a single word did to the pipeline.
#[derive(Debug, Clone)]
pub struct WordOutcome {
    pub parse: ParseResult,
    /// Serialization of the parse handed to the resolver, if any.
    pub best: Option<String>,
    pub event: Option<InstructionEvent>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    dict: Dictionary,
    /// World used for grounding, as the speaker sees it.
    world: WorldSnapshot,
    /// World used for planning; grasped objects stop being obstacles.
    plan_world: WorldSnapshot,
    mode: Mode,
    latency: f64,
    chart: Chart,
    last_parse: ParseResult,
    resolver: Resolver,
    controller: Controller,
    tick: u64,
    state: EEState,
    u_prev: ControlInput,
    safe: SafeSet,
    sets: Option<AdmissibleSets>,
    params: CostParams,
    progress: f64,
    goals: VecDeque<GoalTarget>,
    reached: Vec<String>,
    last_goal: Option<GoalTarget>,
    pending: VecDeque<InstructionEvent>,
    last_event: Option<InstructionEvent>,
    active_event: u64,
    last_sem: Option<String>,
    activity: Activity,
    last_solution: Option<HorizonSolution>,
    aborted: bool,
    log: RunLog,
}

impl Pipeline {
    pub fn new(scenario: &Scenario) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let world = scenario.world()?.clone();
        let state = scenario.initial.state();
        let mut log = RunLog::new(&scenario.name, scenario.mode);
        log.rows.push(row(0.0, &state, 0, 0.0, 0.0, Phase::Idle));
        let chart = Chart::new();
        Ok(Pipeline {
            dict: Dictionary::shipped(),
            plan_world: world.clone(),
            world,
            mode: scenario.mode,
            latency: scenario.offline_latency,
            last_parse: chart.result(),
            chart,
            resolver: Resolver::new(scenario.seed),
            controller: Controller::new(ControllerConfig::default()),
            tick: 0,
            state,
            u_prev: ControlInput::default(),
            safe: SafeSet::default(),
            sets: None,
            params: CostParams::default(),
            progress: 0.0,
            goals: VecDeque::new(),
            reached: Vec::new(),
            last_goal: None,
            pending: VecDeque::new(),
            last_event: None,
            active_event: 0,
            last_sem: None,
            activity: Activity::Idle,
            last_solution: None,
            aborted: false,
            log,
        })
    }

    pub fn dt(&self) -> f64 {
        self.controller.config.dt
    }

    /// Simulated time at the start of the next tick.
    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt()
    }

    pub fn state(&self) -> &EEState {
        &self.state
    }

    pub fn sets(&self) -> Option<&AdmissibleSets> {
        self.sets.as_ref()
    }

    pub fn params(&self) -> CostParams {
        self.params
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn world(&self) -> &WorldSnapshot {
        &self.world
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dict
    }

    pub fn last_parse(&self) -> &ParseResult {
        &self.last_parse
    }

    pub fn last_solution(&self) -> Option<&HorizonSolution> {
        self.last_solution.as_ref()
    }

    pub fn phase(&self) -> Phase {
        self.activity.phase()
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    pub fn is_aborted(&self) -> bool {
        self.aborted
    }

    /// Nothing left to do until another word arrives.
    pub fn is_quiescent(&self) -> bool {
        self.activity == Activity::Idle && self.pending.is_empty() && self.goals.is_empty()
    }

    /// Feeds one word that arrived at simulated time `t`.
    pub fn push_word(&mut self, t: f64, word: &str) -> WordOutcome {
        self.log.first_word.get_or_insert(t);
        self.log.word_count += 1;
        let parse = self.chart.feed_word(word, &self.dict);
        self.last_parse = parse.clone();
        let mut out = WordOutcome {
            parse,
            best: None,
            event: None,
            error: None,
        };
        let Some(node) = best_parse(&out.parse, &self.world) else {
            return out;
        };
        let Some(frame) = node.frame() else {
            return out;
        };
        let sem = frame.to_string();
        out.best = Some(sem.clone());
        if self.last_sem.as_ref() == Some(&sem) {
            return out;
        }
        self.last_sem = Some(sem);
        match self.resolver.resolve(frame, &self.world, self.last_event.as_ref(), t) {
            Ok(event) => {
                self.log.events.push(event.clone());
                self.last_event = Some(event.clone());
                self.pending.push_back(event.clone());
                out.event = Some(event);
            }
            Err(ResolveError::NoChange) => {}
            Err(e) => {
                self.error(t, e.to_string(), false);
                out.error = Some(e.to_string());
            }
        }
        out
    }

    /// Clears the utterance; motion and plans are kept.
    pub fn reset_utterance(&mut self) {
        self.chart.reset();
        self.last_parse = self.chart.result();
        self.last_sem = None;
        self.last_event = None;
        self.reached.clear();
    }

    fn error(&mut self, t: f64, message: String, fatal: bool) {
        self.log.errors.push(RunErrorRecord { t, message, fatal });
        if fatal {
            self.aborted = true;
        }
    }

    fn pose(&self) -> Pose {
        Pose {
            position: self.state.p,
            orientation: self.state.e,
        }
    }

    fn open_segment(&mut self, t: f64) {
        if let Some(goal) = self.goals.front() {
            self.log.segments.push(SegmentRecord {
                start: t,
                end: None,
                goal: goal.label.clone(),
            });
        }
    }

    fn close_segment(&mut self, t: f64) {
        if let Some(seg) = self.log.segments.last_mut() {
            if seg.end.is_none() {
                seg.end = Some(t);
                if t - seg.start < TIME_EPS {
                    self.log.segments.pop();
                }
            }
        }
    }

    fn install(&mut self, sets: AdmissibleSets, t: f64, event: Option<u64>) {
        let changed = self.sets.as_ref().is_none_or(|old| old.task != sets.task);
        self.safe = sets.safe.clone();
        if changed {
            self.progress = 0.0;
            self.log.corridors.push(CorridorRecord {
                t,
                event,
                corridor: sets.task.clone(),
            });
            self.close_segment(t);
            self.open_segment(t);
        }
        self.sets = Some(sets);
        if !self.goals.is_empty() {
            self.activity = Activity::Moving;
        }
    }

    /// Applies an event: cost parameters, goal queue, and admissible sets.
    /// Returns the wall time spent planning.
    fn apply(&mut self, mut event: InstructionEvent, t: f64) -> f64 {
        // goals already reached in this utterance are not repeated
        if let Some(goal) = event.goal.take() {
            let mut rest = std::iter::once(goal)
                .chain(event.followups.drain(..))
                .filter(|g| !self.reached.contains(&g.label));
            event.goal = rest.next();
            event.followups = rest.collect();
        }
        self.params = controller::apply_event(self.params, &event);
        self.active_event = event.id;
        let old_goals = self.goals.clone();
        if let Some(goal) = &event.goal {
            self.goals = std::iter::once(goal.clone()).chain(event.followups.iter().cloned()).collect();
        } else if self.goals.is_empty() && event.kinds().contains(&ConstraintKind::Safety) {
            // a new safety bound at rest re-settles at the last goal under it
            if let Some(last) = self.last_goal.clone() {
                self.goals.push_back(last);
            }
        }
        // after a stop at an intermediate goal the corridor still ends there
        let mut target = event.clone();
        if let (None, Some(front), Some(sets)) = (&target.goal, self.goals.front(), &self.sets) {
            if front.pose != sets.task.goal {
                target.goal = Some(front.clone());
            }
        }
        let pose = self.pose();
        let started = Instant::now();
        let planned = match &self.sets {
            Some(prior) => replan_from(&pose, &target, prior, &self.plan_world).map(Some),
            None => self.first_plan(&pose, &target),
        };
        let wall = started.elapsed().as_secs_f64();
        match planned {
            Ok(Some(sets)) => self.install(sets, t, Some(event.id)),
            Ok(None) => {}
            Err(e) => {
                self.goals = old_goals;
                self.error(t, format!("event {}: {e}", event.id), false);
            }
        }
        wall
    }

    /// Plan for the first event; safety-only events are stored until a goal
    /// arrives.
    fn first_plan(&mut self, pose: &Pose, event: &InstructionEvent) -> Result<Option<AdmissibleSets>, PlanError> {
        let mut safe = self.safe.clone();
        merge_safety(&mut safe, event, &self.plan_world)?;
        let Some(goal) = self.goals.front() else {
            self.safe = safe;
            return Ok(None);
        };
        let task = plan_corridor(pose, &goal.pose, &self.plan_world, &safe)?;
        Ok(Some(AdmissibleSets {
            task,
            safe,
            robot: RobotLimits::default(),
        }))
    }

    /// Plans towards the next queued goal after one was reached.
    fn advance_goal(&mut self, t: f64) -> f64 {
        let Some(goal) = self.goals.front().cloned() else {
            return 0.0;
        };
        let started = Instant::now();
        let planned = plan_corridor(&self.pose(), &goal.pose, &self.plan_world, &self.safe);
        let wall = started.elapsed().as_secs_f64();
        match planned {
            Ok(task) => {
                let robot = self.sets.as_ref().map(|s| s.robot).unwrap_or_default();
                let sets = AdmissibleSets {
                    task,
                    safe: self.safe.clone(),
                    robot,
                };
                self.install(sets, t, None);
            }
            Err(e) => {
                self.error(t, format!("goal {}: {e}", goal.label), false);
                self.goals.clear();
            }
        }
        wall
    }

    fn goal_reached(&self, goal: &GoalTarget) -> bool {
        let bound = self.safe.orientation_bound();
        let margin = self.controller.config.orientation_margin;
        let e_ok = (0..2).all(|i| {
            let lim = (bound[i] - margin).max(0.0);
            (self.state.e[i] - goal.pose.orientation[i].clamp(-lim, lim)).abs() < GOAL_ORIENTATION_TOL
        });
        let settled = self.state.v.norm() < GOAL_SPEED_TOL && self.state.e_dot.iter().all(|w| w.abs() < GOAL_RATE_TOL);
        (self.state.p - goal.pose.position).norm() < GOAL_POSITION_TOL && settled && e_ok
    }

    fn on_goal_reached(&mut self, t: f64) {
        let Some(goal) = self.goals.pop_front() else {
            return;
        };
        self.reached.push(goal.label.clone());
        self.last_goal = Some(goal.clone());
        // a grasp followed by further goals carries the object along
        if let (Some((object, grasp)), false) = (goal.label.split_once(':'), self.goals.is_empty()) {
            if grasp != "push" && grasp != "place" {
                if let Some(o) = self.plan_world.objects.iter_mut().find(|o| o.id == object) {
                    o.held = true;
                }
            }
        }
        self.close_segment(t);
        if self.goals.is_empty() {
            self.log.goal_reached = Some(t);
            self.activity = Activity::Stopping;
        } else if self.mode == Mode::OfflineBaseline && !self.pending.is_empty() {
            // the baseline halts here and plans the queued events first
            self.activity = Activity::Stopping;
        } else {
            let wall = self.advance_goal(t);
            if self.mode == Mode::Online {
                self.log.plans.push(PlanRecord {
                    t,
                    wall,
                    charged: wall,
                    event: None,
                });
            }
        }
    }

    fn brake(&self) -> ControlInput {
        let dt = self.dt();
        let limits = self.sets.as_ref().map(|s| s.robot).unwrap_or_default();
        ControlInput {
            a: (-self.state.v / dt).map(|a| a.clamp(-limits.a_max, limits.a_max)),
            e_ddot: self.state.e_dot.map(|a| (-a / dt).clamp(-limits.e_ddot_max, limits.e_ddot_max)),
        }
    }

    fn handle_events(&mut self, now: f64) {
        match self.mode {
            Mode::Online => {
                while let Some(event) = self.pending.pop_front() {
                    let id = event.id;
                    let wall = self.apply(event, now);
                    self.log.plans.push(PlanRecord {
                        t: now,
                        wall,
                        charged: wall,
                        event: Some(id),
                    });
                }
            }
            Mode::OfflineBaseline => match self.activity {
                Activity::Idle if !self.pending.is_empty() => {
                    self.activity = Activity::Planning {
                        until: now + self.latency,
                        events: self.pending.len(),
                    };
                }
                Activity::Planning { until, events } if now >= until - TIME_EPS => {
                    self.activity = Activity::Idle;
                    let mut wall = 0.0;
                    let mut last = None;
                    for event in self.pending.drain(..events).collect::<Vec<_>>() {
                        last = Some(event.id);
                        wall += self.apply(event, now);
                    }
                    self.log.plans.push(PlanRecord {
                        t: now,
                        wall,
                        charged: self.latency,
                        event: last,
                    });
                }
                _ => {}
            },
        }
    }

    /// Advances one control period.
    pub fn tick(&mut self) {
        if self.aborted {
            return;
        }
        let now = self.time();
        self.handle_events(now);
        let t_next = (self.tick + 1) as f64 * self.dt();
        let activity = self.activity;
        let (mut slack, mut violation) = (0.0, 0.0);
        let u = match activity {
            Activity::Moving => {
                let sets = self.sets.as_ref().expect("moving without a corridor");
                self.progress = sets.task.project(&self.state.p, self.progress);
                match self.controller.step(&self.state, &self.u_prev, sets, &self.params, self.progress) {
                    Ok(sol) => {
                        slack = sol.max_slack();
                        violation = sol.slack.first().map(|s| s.iter().fold(0.0, |m: f64, x| m.max(*x))).unwrap_or(0.0);
                        let u = sol.inputs[0];
                        self.last_solution = Some(sol);
                        u
                    }
                    Err(e) => {
                        self.error(now, e.to_string(), true);
                        return;
                    }
                }
            }
            _ => self.brake(),
        };
        self.state = controller::advance(&self.state, &u, self.dt());
        self.u_prev = u;
        self.tick += 1;
        match activity {
            Activity::Moving => {
                if self.goals.front().is_some_and(|g| self.goal_reached(g)) {
                    self.on_goal_reached(t_next);
                }
            }
            Activity::Stopping => {
                self.activity = Activity::Idle;
                self.controller.reset();
            }
            _ => {}
        }
        self.log
            .rows
            .push(row(t_next, &self.state, self.active_event, slack, violation, activity.phase()));
    }

    pub fn into_log(mut self) -> RunLog {
        let t = self.time();
        self.close_segment(t);
        self.log
    }
}

fn row(t: f64, x: &EEState, event: u64, slack: f64, violation: f64, phase: Phase) -> TrajectoryRow {
    TrajectoryRow {
        t,
        px: x.p.x,
        py: x.p.y,
        pz: x.p.z,
        e1: x.e[0],
        e2: x.e[1],
        vx: x.v.x,
        vy: x.v.y,
        vz: x.v.z,
        speed: x.v.norm(),
        event,
        slack,
        violation,
        phase,
    }
}

/// Result of a scripted run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: RunLog,
    pub metrics: RunMetrics,
}

/// Runs a scenario in simulated time until the utterance is consumed and the
/// robot is at rest, or until the timeout.
pub fn run(scenario: &Scenario) -> Result<RunOutput, ScenarioError> {
    let mut p = Pipeline::new(scenario)?;
    let mut words = scenario.words.iter().peekable();
    loop {
        let now = p.time();
        while let Some(w) = words.next_if(|w| w.t <= now + TIME_EPS) {
            p.push_word(w.t, &w.word);
        }
        if p.is_aborted() || (words.peek().is_none() && p.is_quiescent()) {
            break;
        }
        if now >= scenario.timeout - TIME_EPS {
            p.error(now, format!("timeout after {:.1} s", scenario.timeout), true);
            break;
        }
        p.tick();
    }
    let log = p.into_log();
    let metrics = compute_metrics(&log);
    Ok(RunOutput { log, metrics })
}
