//! Receding-horizon tracking controller for the simulated end effector.
//!
//! Five decoupled double integrators (x, y, z and the two orientation-error
//! angles) are optimized over a short horizon. State constraints (corridor
//! region, orientation box, velocity and angular-rate limits) are softened by
//! one slack per step and constraint family; input bounds stay hard. The
//! slack penalty has a linear part, so slack is exactly zero whenever the
//! unrelaxed problem is feasible.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corridor::{AdmissibleSets, Corridor};
use crate::qp::{self, QpError, QpOptions};
use crate::resolver::{CostParams, InstructionEvent};
use crate::world::{ConvexRegion, Halfspace, Vec3};

pub const HORIZON: usize = 10;
pub const DT: f64 = 0.1;
/// Largest cumulative speed factor.
pub const SPEED_WEIGHT_CAP: f64 = 8.0;

const CHANNELS: usize = 5;
const FAMILIES: usize = 4;

/// Constraint families carrying one slack per horizon step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Region = 0,
    Orientation = 1,
    Velocity = 2,
    OrientationRate = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EEState {
    pub p: Vec3,
    /// Orientation-error angles relative to upright, rad.
    pub e: [f64; 2],
    pub v: Vec3,
    pub e_dot: [f64; 2],
}

impl EEState {
    pub fn at_rest(p: Vec3, e: [f64; 2]) -> Self {
        EEState {
            p,
            e,
            v: Vec3::zeros(),
            e_dot: [0.0; 2],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.v.iter()).chain(&self.e).chain(&self.e_dot).all(|x| x.is_finite())
    }

    fn channel(&self, c: usize) -> (f64, f64) {
        match c {
            0..=2 => (self.p[c], self.v[c]),
            _ => (self.e[c - 3], self.e_dot[c - 3]),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub a: Vec3,
    pub e_ddot: [f64; 2],
}

impl ControlInput {
    fn channel(&self, c: usize) -> f64 {
        match c {
            0..=2 => self.a[c],
            _ => self.e_ddot[c - 3],
        }
    }

    fn from_channels(x: &[f64]) -> Self {
        ControlInput {
            a: Vec3::new(x[0], x[1], x[2]),
            e_ddot: [x[3], x[4]],
        }
    }
}

/// Exact double-integrator update under a constant input.
pub fn advance(x: &EEState, u: &ControlInput, dt: f64) -> EEState {
    let half = 0.5 * dt * dt;
    EEState {
        p: x.p + x.v * dt + u.a * half,
        v: x.v + u.a * dt,
        e: [
            x.e[0] + x.e_dot[0] * dt + u.e_ddot[0] * half,
            x.e[1] + x.e_dot[1] * dt + u.e_ddot[1] * half,
        ],
        e_dot: [x.e_dot[0] + u.e_ddot[0] * dt, x.e_dot[1] + u.e_ddot[1] * dt],
    }
}

/// Merges a manner update into the running cost parameters.
pub fn apply_event(params: CostParams, event: &InstructionEvent) -> CostParams {
    let Some(f) = event.cost_params else {
        return params;
    };
    CostParams {
        speed_weight: (params.speed_weight * f.speed_weight).min(SPEED_WEIGHT_CAP),
        path_weight: params.path_weight * f.path_weight,
        terminal_weight: params.terminal_weight * f.terminal_weight,
    }
}

/// Controller tuning; costs are further scaled by [`CostParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub horizon: usize,
    pub dt: f64,
    /// Nominal path speed before the speed factor, m/s.
    pub base_speed: f64,
    /// Deceleration used to shape the speed profile into the goal, m/s².
    pub brake_decel: f64,
    pub w_path: f64,
    pub w_speed: f64,
    pub w_orientation: f64,
    pub w_orientation_rate: f64,
    pub w_input: f64,
    pub w_input_rate: f64,
    pub w_terminal: f64,
    pub slack_linear: f64,
    pub slack_quadratic: f64,
    /// Orientation references stay this far inside the orientation box, rad.
    pub orientation_margin: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            horizon: HORIZON,
            dt: DT,
            base_speed: 0.15,
            brake_decel: 0.5,
            w_path: 100.0,
            w_speed: 20.0,
            w_orientation: 20.0,
            w_orientation_rate: 1.0,
            w_input: 1e-2,
            w_input_rate: 1e-2,
            w_terminal: 200.0,
            slack_linear: 1e4,
            slack_quadratic: 1e4,
            orientation_margin: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSolution {
    pub inputs: Vec<ControlInput>,
    /// `inputs.len() + 1` states starting at the initial state.
    pub states: Vec<EEState>,
    /// Per step `1..=N`: slack needed by [region, orientation, velocity, rate].
    pub slack: Vec<[f64; FAMILIES]>,
    pub cost: f64,
    pub iterations: usize,
    /// True when the solver failed and the previous plan was shifted instead.
    pub degraded: bool,
}

impl HorizonSolution {
    pub fn max_slack(&self) -> f64 {
        self.slack.iter().flatten().fold(0.0, |m: f64, s| m.max(*s))
    }

    pub fn family_slack(&self, f: Family) -> Vec<f64> {
        self.slack.iter().map(|s| s[f as usize]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("invalid controller input: {0}")]
    Precondition(String),
    #[error(transparent)]
    Solver(#[from] QpError),
}

/// Reference and constraint data for one horizon.
#[derive(Debug, Clone)]
pub struct HorizonProblem {
    pub config: ControllerConfig,
    pub params: CostParams,
    pub x0: EEState,
    pub u0: ControlInput,
    pub p_ref: Vec<Vec3>,
    pub v_ref: Vec<Vec3>,
    pub e_ref: Vec<[f64; 2]>,
    pub lookahead: Vec3,
    /// Region constraint per step `1..=N`.
    pub regions: Vec<ConvexRegion>,
    pub orientation_bound: Vec<[f64; 2]>,
    pub v_axis_max: f64,
    pub e_rate_max: f64,
    pub a_max: f64,
    pub e_ddot_max: f64,
}

/// Reference speed at arc length `s`.
fn speed_at(c: &Corridor, s: f64, target: f64, decel: f64) -> f64 {
    target.min((2.0 * decel * (c.length() - s).max(0.0)).sqrt())
}

impl HorizonProblem {
    pub fn new(
        config: ControllerConfig,
        x0: EEState,
        u0: ControlInput,
        sets: &AdmissibleSets,
        params: CostParams,
        progress: f64,
    ) -> Result<Self, ControlError> {
        if !x0.is_finite() {
            return Err(ControlError::Precondition("non-finite initial state".into()));
        }
        if !sets.robot.is_valid() || !params.is_valid() {
            return Err(ControlError::Precondition("invalid limits or cost parameters".into()));
        }
        let c = &sets.task;
        if c.regions.is_empty() || c.via_points.len() != c.regions.len() + 1 {
            return Err(ControlError::Precondition("malformed corridor".into()));
        }
        let n = config.horizon;
        let target = (config.base_speed * params.speed_weight).min(sets.robot.v_max);
        let len = c.length();
        let mut s = vec![progress.clamp(0.0, len)];
        for k in 0..n {
            let v = speed_at(c, s[k], target, config.brake_decel);
            s.push((s[k] + v * config.dt).min(len));
        }
        let e_at = |s: f64| -> [f64; 2] {
            let frac = if len < 1e-9 { 1.0 } else { s / len };
            let seg = c.segment_at(s);
            let bound = c.orientation_bounds[seg];
            std::array::from_fn(|i| {
                let e = c.start.orientation[i] + (c.goal.orientation[i] - c.start.orientation[i]) * frac;
                let lim = (bound[i] - config.orientation_margin).max(0.0);
                e.clamp(-lim, lim)
            })
        };
        let mut p_ref = Vec::with_capacity(n);
        let mut v_ref = Vec::with_capacity(n);
        let mut e_ref = Vec::with_capacity(n);
        let mut regions = Vec::with_capacity(n);
        let mut orientation_bound = Vec::with_capacity(n);
        for k in 1..=n {
            p_ref.push(c.point_at(s[k]));
            v_ref.push(c.tangent_at(s[k]) * speed_at(c, s[k], target, config.brake_decel));
            e_ref.push(e_at(s[k]));
            let (a, b) = (c.segment_at(s[k - 1]), c.segment_at(s[k]));
            let region = if a == b {
                c.regions[b].clone()
            } else {
                // handoff step: stay in the overlap of the two regions
                let mut hs: Vec<Halfspace> = c.regions[a].halfspaces().to_vec();
                hs.extend_from_slice(c.regions[(a + 1).min(b)].halfspaces());
                ConvexRegion::from_halfspaces(hs)
            };
            regions.push(region);
            let ba = c.orientation_bounds[a];
            let bb = c.orientation_bounds[b];
            orientation_bound.push([ba[0].min(bb[0]), ba[1].min(bb[1])]);
        }
        let s_end = s[n];
        let lookahead = c.point_at(s_end + speed_at(c, s_end, target, config.brake_decel) * config.dt);
        Ok(HorizonProblem {
            config,
            params,
            x0,
            u0,
            p_ref,
            v_ref,
            e_ref,
            lookahead,
            regions,
            orientation_bound,
            v_axis_max: sets.robot.v_max / 3f64.sqrt(),
            e_rate_max: sets.robot.e_rate_max,
            a_max: sets.robot.a_max,
            e_ddot_max: sets.robot.e_ddot_max,
        })
    }

    pub fn n_inputs(&self) -> usize {
        CHANNELS * self.config.horizon
    }

    pub fn n_vars(&self) -> usize {
        (CHANNELS + FAMILIES) * self.config.horizon
    }

    fn u_col(k: usize, c: usize) -> usize {
        k * CHANNELS + c
    }

    fn s_col(&self, k: usize, f: usize) -> usize {
        self.n_inputs() + k * FAMILIES + f
    }

    /// Coefficient of input `j` in position (resp. velocity) of step `k`.
    fn pos_coef(&self, k: usize, j: usize) -> f64 {
        if j >= k {
            0.0
        } else {
            self.config.dt * self.config.dt * ((k - j) as f64 - 0.5)
        }
    }

    fn vel_coef(&self, k: usize, j: usize) -> f64 {
        if j >= k { 0.0 } else { self.config.dt }
    }

    /// Free response (zero input) of channel `c` at step `k`.
    fn free(&self, k: usize, c: usize) -> (f64, f64) {
        let (q, w) = self.x0.channel(c);
        (q + w * k as f64 * self.config.dt, w)
    }

    fn weights(&self) -> (f64, f64, f64) {
        let cfg = &self.config;
        (
            cfg.w_path * self.params.path_weight,
            cfg.w_speed,
            cfg.w_terminal * self.params.terminal_weight,
        )
    }

    /// Cost as `½zᵀHz + gᵀz + c0` over `z = [inputs, slacks]`.
    pub fn quadratic(&self) -> (DMatrix<f64>, DVector<f64>, f64) {
        let n = self.config.horizon;
        let nv = self.n_vars();
        let mut h = DMatrix::zeros(nv, nv);
        let mut g = DVector::zeros(nv);
        let mut c0 = 0.0;
        let (w_path, w_speed, w_term) = self.weights();
        let cfg = &self.config;
        // adds w (mᵀu + d)² for a row m over step-k inputs of channel c
        let mut add = |coef: &dyn Fn(usize) -> f64, c: usize, d: f64, w: f64| {
            let cols: Vec<(usize, f64)> = (0..n)
                .map(|j| (Self::u_col(j, c), coef(j)))
                .filter(|(_, m)| *m != 0.0)
                .collect();
            for &(a, ma) in &cols {
                g[a] += 2.0 * w * d * ma;
                for &(b, mb) in &cols {
                    h[(a, b)] += 2.0 * w * ma * mb;
                }
            }
            c0 += w * d * d;
        };
        for k in 1..=n {
            for c in 0..CHANNELS {
                let (q, v) = self.free(k, c);
                let pc = |j: usize| self.pos_coef(k, j);
                let vc = |j: usize| self.vel_coef(k, j);
                if c < 3 {
                    add(&pc, c, q - self.p_ref[k - 1][c], w_path);
                    add(&vc, c, v - self.v_ref[k - 1][c], w_speed);
                    if k == n {
                        add(&pc, c, q - self.lookahead[c], w_term);
                    }
                } else {
                    add(&pc, c, q - self.e_ref[k - 1][c - 3], cfg.w_orientation);
                    add(&vc, c, v, cfg.w_orientation_rate);
                }
            }
        }
        for k in 0..n {
            for c in 0..CHANNELS {
                let col = Self::u_col(k, c);
                h[(col, col)] += 2.0 * cfg.w_input;
                // rate term against the previous input (u0 before the horizon)
                h[(col, col)] += 2.0 * cfg.w_input_rate;
                if k == 0 {
                    let prev = self.u0.channel(c);
                    g[col] -= 2.0 * cfg.w_input_rate * prev;
                    c0 += cfg.w_input_rate * prev * prev;
                } else {
                    let pcol = Self::u_col(k - 1, c);
                    h[(pcol, pcol)] += 2.0 * cfg.w_input_rate;
                    h[(col, pcol)] -= 2.0 * cfg.w_input_rate;
                    h[(pcol, col)] -= 2.0 * cfg.w_input_rate;
                }
            }
            for f in 0..FAMILIES {
                let col = self.s_col(k, f);
                h[(col, col)] += 2.0 * cfg.slack_quadratic;
                g[col] += cfg.slack_linear;
            }
        }
        (h, g, c0)
    }

    /// Constraint rows `A z ≤ b`.
    pub fn constraints(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.config.horizon;
        let nv = self.n_vars();
        let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
        for k in 1..=n {
            let step = k - 1;
            // region: n·p_k - s <= o
            for hsp in self.regions[step].halfspaces() {
                let mut r = vec![(self.s_col(step, Family::Region as usize), -1.0)];
                let mut rhs = hsp.offset;
                for c in 0..3 {
                    rhs -= hsp.normal[c] * self.free(k, c).0;
                    for j in 0..k {
                        r.push((Self::u_col(j, c), hsp.normal[c] * self.pos_coef(k, j)));
                    }
                }
                rows.push((r, rhs));
            }
            for sign in [1.0, -1.0] {
                for c in 0..CHANNELS {
                    let (q, w) = self.free(k, c);
                    // orientation box on angles, velocity / rate limits on all channels
                    let mut targets = vec![];
                    if c >= 3 {
                        targets.push((Family::Orientation, q, self.orientation_bound[step][c - 3], true));
                        targets.push((Family::OrientationRate, w, self.e_rate_max, false));
                    } else {
                        targets.push((Family::Velocity, w, self.v_axis_max, false));
                    }
                    for (fam, free, bound, is_pos) in targets {
                        let mut r = vec![(self.s_col(step, fam as usize), -1.0)];
                        for j in 0..k {
                            let m = if is_pos { self.pos_coef(k, j) } else { self.vel_coef(k, j) };
                            r.push((Self::u_col(j, c), sign * m));
                        }
                        rows.push((r, bound - sign * free));
                    }
                }
            }
        }
        for k in 0..n {
            for f in 0..FAMILIES {
                rows.push((vec![(self.s_col(k, f), -1.0)], 0.0));
            }
            for c in 0..CHANNELS {
                let lim = if c < 3 { self.a_max } else { self.e_ddot_max };
                rows.push((vec![(Self::u_col(k, c), 1.0)], lim));
                rows.push((vec![(Self::u_col(k, c), -1.0)], lim));
            }
        }
        let mut a = DMatrix::zeros(rows.len(), nv);
        let mut b = DVector::zeros(rows.len());
        for (i, (r, rhs)) in rows.into_iter().enumerate() {
            for (col, v) in r {
                a[(i, col)] += v;
            }
            b[i] = rhs;
        }
        (a, b)
    }

    /// States reached from `x0` under `inputs`.
    pub fn rollout(&self, inputs: &[ControlInput]) -> Vec<EEState> {
        let mut out = vec![self.x0];
        for u in inputs {
            let x = advance(out.last().unwrap(), u, self.config.dt);
            out.push(x);
        }
        out
    }

    /// Slack each family needs at each step for the given states.
    pub fn violations(&self, states: &[EEState]) -> Vec<[f64; FAMILIES]> {
        states
            .iter()
            .skip(1)
            .enumerate()
            .map(|(step, x)| {
                let region = self.regions[step].max_violation(&x.p).max(0.0);
                let ob = self.orientation_bound[step];
                let orient = (0..2).map(|i| x.e[i].abs() - ob[i]).fold(0.0, f64::max);
                let vel = x.v.iter().map(|v| v.abs() - self.v_axis_max).fold(0.0, f64::max);
                let rate = x.e_dot.iter().map(|v| v.abs() - self.e_rate_max).fold(0.0, f64::max);
                [region, orient, vel, rate]
            })
            .collect()
    }

    /// The cost evaluated directly along a simulated rollout. Independent
    /// of [`HorizonProblem::quadratic`]; used to cross-check it.
    pub fn cost_by_rollout(&self, inputs: &[ControlInput], slack: &[[f64; FAMILIES]]) -> f64 {
        let cfg = &self.config;
        let (w_path, w_speed, w_term) = self.weights();
        let states = self.rollout(inputs);
        let n = cfg.horizon;
        let mut j = 0.0;
        for k in 1..=n {
            let x = &states[k];
            j += w_path * (x.p - self.p_ref[k - 1]).norm_squared();
            j += w_speed * (x.v - self.v_ref[k - 1]).norm_squared();
            for i in 0..2 {
                j += cfg.w_orientation * (x.e[i] - self.e_ref[k - 1][i]).powi(2);
                j += cfg.w_orientation_rate * x.e_dot[i].powi(2);
            }
        }
        j += w_term * (states[n].p - self.lookahead).norm_squared();
        let mut prev = self.u0;
        for u in inputs {
            j += cfg.w_input * (u.a.norm_squared() + u.e_ddot[0].powi(2) + u.e_ddot[1].powi(2));
            j += cfg.w_input_rate
                * ((u.a - prev.a).norm_squared()
                    + (u.e_ddot[0] - prev.e_ddot[0]).powi(2)
                    + (u.e_ddot[1] - prev.e_ddot[1]).powi(2));
            prev = *u;
        }
        for s in slack.iter().flatten() {
            j += cfg.slack_linear * s + cfg.slack_quadratic * s * s;
        }
        j
    }

    /// Splits a decision vector into inputs and slacks.
    pub fn unpack(&self, z: &DVector<f64>) -> (Vec<ControlInput>, Vec<[f64; FAMILIES]>) {
        let n = self.config.horizon;
        let inputs = (0..n)
            .map(|k| ControlInput::from_channels(&z.as_slice()[k * CHANNELS..(k + 1) * CHANNELS]))
            .collect();
        let slack = (0..n)
            .map(|k| std::array::from_fn(|f| z[self.s_col(k, f)]))
            .collect();
        (inputs, slack)
    }

    pub fn pack(&self, inputs: &[ControlInput], slack: &[[f64; FAMILIES]]) -> DVector<f64> {
        let mut z = DVector::zeros(self.n_vars());
        for (k, u) in inputs.iter().enumerate() {
            for c in 0..CHANNELS {
                z[Self::u_col(k, c)] = u.channel(c);
            }
        }
        for (k, s) in slack.iter().enumerate() {
            for f in 0..FAMILIES {
                z[self.s_col(k, f)] = s[f];
            }
        }
        z
    }

    pub fn solve(&self) -> Result<HorizonSolution, ControlError> {
        let (h, g, _) = self.quadratic();
        let (a, b) = self.constraints();
        let sol = qp::solve(&h, &g, &a, &b, &QpOptions::default())?;
        let (mut inputs, _) = self.unpack(&sol.x);
        for u in inputs.iter_mut() {
            u.a = u.a.map(|v| v.clamp(-self.a_max, self.a_max));
            u.e_ddot = u.e_ddot.map(|v| v.clamp(-self.e_ddot_max, self.e_ddot_max));
        }
        Ok(self.finish(inputs, sol.iterations, false))
    }

    fn finish(&self, inputs: Vec<ControlInput>, iterations: usize, degraded: bool) -> HorizonSolution {
        let states = self.rollout(&inputs);
        let slack = self.violations(&states);
        let cost = self.cost_by_rollout(&inputs, &slack);
        HorizonSolution {
            inputs,
            states,
            slack,
            cost,
            iterations,
            degraded,
        }
    }
}

/// One controller solve. `progress` is the arc length of the current
/// position along the corridor path.
pub fn step(
    x0: &EEState,
    u0: &ControlInput,
    sets: &AdmissibleSets,
    params: &CostParams,
    progress: f64,
) -> Result<HorizonSolution, ControlError> {
    HorizonProblem::new(ControllerConfig::default(), *x0, *u0, sets, *params, progress)?.solve()
}

/// Stateful wrapper that falls back to the shifted previous plan when the
/// solver fails.
#[derive(Debug, Clone, Default)]
pub struct Controller {
    pub config: ControllerConfig,
    previous: Option<HorizonSolution>,
}

impl Controller {
    pub fn new(config: ControllerConfig) -> Self {
        Controller {
            config,
            previous: None,
        }
    }

    pub fn step(
        &mut self,
        x0: &EEState,
        u0: &ControlInput,
        sets: &AdmissibleSets,
        params: &CostParams,
        progress: f64,
    ) -> Result<HorizonSolution, ControlError> {
        let problem = HorizonProblem::new(self.config, *x0, *u0, sets, *params, progress)?;
        let sol = match problem.solve() {
            Ok(sol) => sol,
            Err(ControlError::Solver(_)) => {
                let mut inputs: Vec<ControlInput> = match &self.previous {
                    Some(prev) => prev.inputs.iter().skip(1).copied().collect(),
                    None => Vec::new(),
                };
                inputs.resize(self.config.horizon, ControlInput::default());
                problem.finish(inputs, 0, true)
            }
            Err(e) => return Err(e),
        };
        self.previous = Some(sol.clone());
        Ok(sol)
    }

    pub fn reset(&mut self) {
        self.previous = None;
    }
}
