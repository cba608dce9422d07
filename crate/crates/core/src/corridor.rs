//! Corridor planning: a chain of overlapping boxes through free space that
//! bounds a piecewise-linear reference path from the current pose to a goal.
//!
//! Free space is the workspace minus inflated obstacles and active keep-outs.
//! It is decomposed on a coarse grid, merged greedily into boxes, and each box
//! is grown face by face until it touches an inflated obstacle, which makes
//! neighbours overlap. A shortest-path search over the overlap graph picks the
//! region chain; via-points are then pulled taut inside the overlaps.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::resolver::{ConstraintPayload, InstructionEvent};
use crate::world::{ConvexRegion, Pose, Vec3, WorldSnapshot};

/// Decomposition grid resolution, m.
pub const GRID: f64 = 0.05;
/// End-effector clearance added around obstacles and keep-outs, m.
pub const INFLATION: f64 = 0.02;
/// Orientation bound when no safety constraint tightens it, rad.
pub const DEFAULT_ORIENTATION_BOUND: f64 = 1.0;
/// Minimum overlap thickness for two boxes to count as adjacent, m.
pub const MIN_OVERLAP: f64 = 0.005;
/// Via-points keep this distance from overlap faces where room allows, m.
const VIA_MARGIN: f64 = 0.01;
const EPS: f64 = 1e-9;

/// Instruction-independent robot limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotLimits {
    pub v_max: f64,
    pub a_max: f64,
    pub e_ddot_max: f64,
    pub e_rate_max: f64,
}

impl Default for RobotLimits {
    fn default() -> Self {
        RobotLimits {
            v_max: 1.0,
            a_max: 5.0,
            e_ddot_max: 10.0,
            e_rate_max: 1.0,
        }
    }
}

impl RobotLimits {
    pub fn is_valid(&self) -> bool {
        [self.v_max, self.a_max, self.e_ddot_max, self.e_rate_max]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keepout {
    pub id: String,
    pub region: ConvexRegion,
}

/// Safety inputs: keep-out regions and the global orientation box.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SafeSet {
    pub keepouts: Vec<Keepout>,
    pub orientation: Option<[f64; 2]>,
}

impl SafeSet {
    pub fn orientation_bound(&self) -> [f64; 2] {
        self.orientation
            .unwrap_or([DEFAULT_ORIENTATION_BOUND; 2])
    }
}

/// Ordered chain of overlapping regions with the reference polyline.
///
/// Segment `i` runs from `via_points[i]` to `via_points[i + 1]` and lies in
/// `regions[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub regions: Vec<ConvexRegion>,
    pub via_points: Vec<Vec3>,
    pub orientation_bounds: Vec<[f64; 2]>,
    pub start: Pose,
    pub goal: Pose,
    /// False when the start violates the corridor (e.g. a keep-out was added
    /// around the current pose); the controller's slack recovers from it.
    pub start_feasible: bool,
    /// Arc length at each via-point.
    pub arc_length: Vec<f64>,
}

impl Corridor {
    fn new(regions: Vec<ConvexRegion>, via_points: Vec<Vec3>, bound: [f64; 2], start: Pose, goal: Pose, start_feasible: bool) -> Self {
        let mut arc_length = vec![0.0];
        for w in via_points.windows(2) {
            let last = *arc_length.last().unwrap();
            arc_length.push(last + (w[1] - w[0]).norm());
        }
        let orientation_bounds = vec![bound; regions.len()];
        Corridor {
            regions,
            via_points,
            orientation_bounds,
            start,
            goal,
            start_feasible,
            arc_length,
        }
    }

    pub fn length(&self) -> f64 {
        *self.arc_length.last().unwrap_or(&0.0)
    }

    pub fn segments(&self) -> usize {
        self.regions.len()
    }

    /// Segment containing arc length `s` (clamped to the path).
    pub fn segment_at(&self, s: f64) -> usize {
        let last = self.segments().saturating_sub(1);
        (0..last)
            .find(|&i| s < self.arc_length[i + 1])
            .unwrap_or(last)
    }

    pub fn point_at(&self, s: f64) -> Vec3 {
        let s = s.clamp(0.0, self.length());
        let i = self.segment_at(s);
        let (a, b) = (self.via_points[i], self.via_points[i + 1]);
        let len = self.arc_length[i + 1] - self.arc_length[i];
        if len < EPS {
            return b;
        }
        a + (b - a) * ((s - self.arc_length[i]) / len)
    }

    /// Unit direction of travel at `s`; zero on a zero-length path.
    pub fn tangent_at(&self, s: f64) -> Vec3 {
        let i = self.segment_at(s.clamp(0.0, self.length()));
        let d = self.via_points[i + 1] - self.via_points[i];
        if d.norm() < EPS {
            // fall back to the next non-degenerate segment
            return self
                .via_points
                .windows(2)
                .skip(i)
                .map(|w| w[1] - w[0])
                .find(|d| d.norm() >= EPS)
                .map(|d| d.normalize())
                .unwrap_or_else(Vec3::zeros);
        }
        d.normalize()
    }

    /// Arc length of the closest polyline point to `p`, not below `s_min`.
    pub fn project(&self, p: &Vec3, s_min: f64) -> f64 {
        let s_min = s_min.clamp(0.0, self.length());
        let mut best = (f64::INFINITY, s_min);
        for i in 0..self.segments() {
            let (s0, s1) = (self.arc_length[i], self.arc_length[i + 1]);
            if s1 < s_min {
                continue;
            }
            let (a, b) = (self.via_points[i], self.via_points[i + 1]);
            let len = s1 - s0;
            let t = if len < EPS {
                0.0
            } else {
                ((p - a).dot(&(b - a)) / (len * len)).clamp(0.0, 1.0)
            };
            let s = (s0 + t * len).max(s_min);
            let d = (self.point_at(s) - p).norm();
            if d < best.0 - 1e-12 {
                best = (d, s);
            }
        }
        best.1
    }

    /// Whether `p` lies in at least one region.
    pub fn contains(&self, p: &Vec3) -> bool {
        self.regions.iter().any(|r| r.contains(p))
    }
}

/// The three constraint groups the controller enforces together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleSets {
    pub task: Corridor,
    pub safe: SafeSet,
    pub robot: RobotLimits,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("no corridor: {0}")]
    NoCorridor(String),
    #[error("unknown keep-out zone `{0}`")]
    UnknownZone(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn region(&self) -> ConvexRegion {
        ConvexRegion::from_bounds(self.lo, self.hi)
    }

    fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.lo[i] - EPS && p[i] <= self.hi[i] + EPS)
    }

    /// Interiors overlap (touching faces do not count).
    fn overlaps(&self, o: &Aabb) -> bool {
        (0..3).all(|i| self.lo[i] < o.hi[i] - EPS && o.lo[i] < self.hi[i] - EPS)
    }

    fn overlaps_except(&self, o: &Aabb, axis: usize) -> bool {
        (0..3)
            .filter(|&i| i != axis)
            .all(|i| self.lo[i] < o.hi[i] - EPS && o.lo[i] < self.hi[i] - EPS)
    }

    fn intersection(&self, o: &Aabb) -> Aabb {
        Aabb {
            lo: self.lo.sup(&o.lo),
            hi: self.hi.inf(&o.hi),
        }
    }

    fn thickness(&self) -> f64 {
        (0..3).map(|i| self.hi[i] - self.lo[i]).fold(f64::INFINITY, f64::min)
    }

    fn contains_box(&self, o: &Aabb) -> bool {
        (0..3).all(|i| self.lo[i] <= o.lo[i] + EPS && o.hi[i] <= self.hi[i] + EPS)
    }

    fn center(&self) -> Vec3 {
        (self.lo + self.hi) / 2.0
    }

    fn clamp(&self, p: &Vec3) -> Vec3 {
        p.sup(&self.lo).inf(&self.hi)
    }

    fn distance(&self, p: &Vec3) -> f64 {
        (self.clamp(p) - p).norm()
    }

    fn shrunk(&self, margin: f64) -> Aabb {
        let mut out = *self;
        for i in 0..3 {
            let m = margin.min((self.hi[i] - self.lo[i]) / 4.0).max(0.0);
            out.lo[i] += m;
            out.hi[i] -= m;
        }
        out
    }

    fn inflated(&self, m: f64) -> Aabb {
        Aabb {
            lo: self.lo - Vec3::repeat(m),
            hi: self.hi + Vec3::repeat(m),
        }
    }

    /// Pushes each face outwards until it meets an obstacle or the bounds.
    fn grow(&mut self, bounds: &Aabb, obstacles: &[Aabb]) {
        for axis in 0..3 {
            let mut hi = bounds.hi[axis];
            let mut lo = bounds.lo[axis];
            for o in obstacles.iter().filter(|o| self.overlaps_except(o, axis)) {
                if o.lo[axis] >= self.hi[axis] - EPS {
                    hi = hi.min(o.lo[axis]);
                }
                if o.hi[axis] <= self.lo[axis] + EPS {
                    lo = lo.max(o.hi[axis]);
                }
            }
            self.hi[axis] = self.hi[axis].max(hi);
            self.lo[axis] = self.lo[axis].min(lo);
        }
    }
}

fn aabb_of(region: &ConvexRegion) -> Option<Aabb> {
    region.bounding_box().map(|(lo, hi)| Aabb { lo, hi })
}

/// Greedy box decomposition of the free cells of a grid over `ws`.
fn decompose(ws: &Aabb, obstacles: &[Aabb]) -> Vec<Aabb> {
    let ext = ws.hi - ws.lo;
    let n: [usize; 3] = std::array::from_fn(|i| ((ext[i] / GRID) - 1e-9).ceil().max(1.0) as usize);
    let bound = |axis: usize, k: usize| (ws.lo[axis] + k as f64 * GRID).min(ws.hi[axis]);
    let cell = |i: usize, j: usize, k: usize| Aabb {
        lo: Vec3::new(bound(0, i), bound(1, j), bound(2, k)),
        hi: Vec3::new(bound(0, i + 1), bound(1, j + 1), bound(2, k + 1)),
    };
    let idx = |i: usize, j: usize, k: usize| (k * n[1] + j) * n[0] + i;
    let mut free = vec![false; n[0] * n[1] * n[2]];
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                let c = cell(i, j, k);
                free[idx(i, j, k)] = !obstacles.iter().any(|o| c.overlaps(o));
            }
        }
    }
    let mut boxes = Vec::new();
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                if !free[idx(i, j, k)] {
                    continue;
                }
                let mut i2 = i;
                while i2 + 1 < n[0] && free[idx(i2 + 1, j, k)] {
                    i2 += 1;
                }
                let mut j2 = j;
                while j2 + 1 < n[1] && (i..=i2).all(|a| free[idx(a, j2 + 1, k)]) {
                    j2 += 1;
                }
                let mut k2 = k;
                while k2 + 1 < n[2] && (j..=j2).all(|b| (i..=i2).all(|a| free[idx(a, b, k2 + 1)])) {
                    k2 += 1;
                }
                for c in k..=k2 {
                    for b in j..=j2 {
                        for a in i..=i2 {
                            free[idx(a, b, c)] = false;
                        }
                    }
                }
                boxes.push(Aabb {
                    lo: cell(i, j, k).lo,
                    hi: cell(i2, j2, k2).hi,
                });
            }
        }
    }
    boxes
}

#[derive(PartialEq)]
struct Frontier(f64, usize);

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then_with(|| o.1.cmp(&self.1))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Box chain from a box containing `start` to one containing `goal`.
fn shortest_chain(boxes: &[Aabb], start: &Vec3, goal: &Vec3) -> Option<Vec<usize>> {
    let n = boxes.len();
    let centers: Vec<Vec3> = boxes.iter().map(Aabb::center).collect();
    let adjacent = |a: usize, b: usize| boxes[a].intersection(&boxes[b]).thickness() >= MIN_OVERLAP;
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    for (i, b) in boxes.iter().enumerate() {
        if b.contains(start) {
            dist[i] = (centers[i] - start).norm();
            heap.push(Frontier(dist[i], i));
        }
    }
    let mut best: Option<(f64, usize)> = None;
    while let Some(Frontier(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        if boxes[u].contains(goal) {
            let total = d + (centers[u] - goal).norm();
            if best.is_none_or(|(b, _)| total < b) {
                best = Some((total, u));
            }
        }
        if best.is_some_and(|(b, _)| d > b) {
            break;
        }
        for v in 0..n {
            if v == u || !adjacent(u, v) {
                continue;
            }
            let nd = d + (centers[u] - centers[v]).norm();
            if nd < dist[v] {
                dist[v] = nd;
                prev[v] = u;
                heap.push(Frontier(nd, v));
            }
        }
    }
    let (_, mut u) = best?;
    let mut chain = vec![u];
    while prev[u] != usize::MAX {
        u = prev[u];
        chain.push(u);
    }
    chain.reverse();
    Some(chain)
}

/// Drops chain members that can be skipped via a direct thick overlap.
fn shortcut(boxes: &[Aabb], chain: &[usize], start: &Vec3, goal: &Vec3) -> Vec<usize> {
    let first = chain.iter().rposition(|&b| boxes[b].contains(start)).unwrap_or(0);
    let mut out = vec![chain[first]];
    let mut i = first;
    while !boxes[chain[i]].contains(goal) && i + 1 < chain.len() {
        let here = boxes[chain[i]];
        let j = (i + 1..chain.len())
            .rev()
            .find(|&j| here.intersection(&boxes[chain[j]]).thickness() >= MIN_OVERLAP)
            .unwrap_or(i + 1);
        out.push(chain[j]);
        i = j;
    }
    out
}

/// Point of `b` closest to the segment `p`..`q` (golden-section on the segment
/// parameter, then clamped into the box).
fn closest_in_box(b: &Aabb, p: &Vec3, q: &Vec3) -> Vec3 {
    let f = |t: f64| b.distance(&(p + (q - p) * t));
    let (mut lo, mut hi) = (0.0, 1.0);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let a = hi - g * (hi - lo);
        let c = lo + g * (hi - lo);
        if f(a) <= f(c) {
            hi = c;
        } else {
            lo = a;
        }
    }
    b.clamp(&(p + (q - p) * ((lo + hi) / 2.0)))
}

fn via_points(boxes: &[Aabb], start: &Vec3, goal: &Vec3) -> Vec<Vec3> {
    let overlaps: Vec<Aabb> = boxes
        .windows(2)
        .map(|w| w[0].intersection(&w[1]).shrunk(VIA_MARGIN))
        .collect();
    let mut pts = vec![*start];
    pts.extend(overlaps.iter().map(Aabb::center));
    pts.push(*goal);
    for _ in 0..50 {
        let mut moved = 0.0f64;
        for (k, o) in overlaps.iter().enumerate() {
            let q = closest_in_box(o, &pts[k], &pts[k + 2]);
            moved = moved.max((q - pts[k + 1]).norm());
            pts[k + 1] = q;
        }
        if moved < 1e-9 {
            break;
        }
    }
    pts
}

/// Seeds a box at `p` and grows it; obstacles whose inflation covers `p`
/// are grown against at their true extent.
fn seed_box(p: &Vec3, ws: &Aabb, inflated: &[Aabb], raw: &[Aabb]) -> Aabb {
    let obstacles: Vec<Aabb> = inflated
        .iter()
        .zip(raw)
        .map(|(inf, r)| if inf.contains(p) { *r } else { *inf })
        .collect();
    let mut b = Aabb {
        lo: p - Vec3::repeat(1e-4),
        hi: p + Vec3::repeat(1e-4),
    };
    b.grow(ws, &obstacles);
    b
}

fn inside_interior(b: &Aabb, p: &Vec3) -> bool {
    (0..3).all(|i| p[i] > b.lo[i] + EPS && p[i] < b.hi[i] - EPS)
}

/// Plans a corridor from `start` to `goal` avoiding static obstacles and the
/// keep-outs in `safe`.
pub fn plan_corridor(start: &Pose, goal: &Pose, world: &WorldSnapshot, safe: &SafeSet) -> Result<Corridor, PlanError> {
    let ws = aabb_of(&world.workspace).ok_or_else(|| PlanError::NoCorridor("unbounded workspace".into()))?;
    let mut raw: Vec<Aabb> = world.static_obstacles().iter().filter_map(aabb_of).collect();
    let n_static = raw.len();
    raw.extend(safe.keepouts.iter().filter_map(|k| aabb_of(&k.region)));
    let inflated: Vec<Aabb> = raw.iter().map(|o| o.inflated(INFLATION)).collect();

    let (s, g) = (start.position, goal.position);
    if !ws.contains(&g) {
        return Err(PlanError::NoCorridor("goal outside the workspace".into()));
    }
    if let Some(i) = raw.iter().position(|o| inside_interior(o, &g)) {
        let what = if i < n_static { "an obstacle" } else { "a keep-out" };
        return Err(PlanError::NoCorridor(format!("goal lies inside {what}")));
    }
    let bound = safe.orientation_bound();

    let mut boxes = decompose(&ws, &inflated);
    for b in boxes.iter_mut() {
        b.grow(&ws, &inflated);
    }
    let mut kept: Vec<Aabb> = Vec::with_capacity(boxes.len());
    for (i, b) in boxes.iter().enumerate() {
        let dominated = boxes
            .iter()
            .enumerate()
            .any(|(j, o)| j != i && o.contains_box(b) && (!b.contains_box(o) || j < i));
        if !dominated {
            kept.push(*b);
        }
    }
    let mut boxes = kept;

    let start_blocked = raw.iter().any(|o| inside_interior(o, &s)) || !ws.contains(&s);
    if !start_blocked && !boxes.iter().any(|b| b.contains(&s)) {
        boxes.push(seed_box(&s, &ws, &inflated, &raw));
    }
    if !boxes.iter().any(|b| b.contains(&g)) {
        boxes.push(seed_box(&g, &ws, &inflated, &raw));
    }

    // a blocked start enters the nearest free box
    let entry = if start_blocked {
        boxes
            .iter()
            .min_by(|a, b| a.distance(&s).total_cmp(&b.distance(&s)))
            .ok_or_else(|| PlanError::NoCorridor("no free space".into()))?
            .clamp(&s)
    } else {
        s
    };

    let chain = shortest_chain(&boxes, &entry, &g)
        .ok_or_else(|| PlanError::NoCorridor("start and goal are not connected".into()))?;
    let chain = shortcut(&boxes, &chain, &entry, &g);
    let chosen: Vec<Aabb> = chain.iter().map(|&i| boxes[i]).collect();
    let mut pts = via_points(&chosen, &entry, &g);
    pts[0] = s;
    let regions = chosen.iter().map(Aabb::region).collect();
    Ok(Corridor::new(regions, pts, bound, *start, *goal, !start_blocked))
}

/// Adds the event's keep-out zones and orientation box to `safe`. Returns
/// whether anything changed.
pub fn merge_safety(safe: &mut SafeSet, event: &InstructionEvent, world: &WorldSnapshot) -> Result<bool, PlanError> {
    let mut changed = false;
    for c in &event.constraints {
        match &c.payload {
            ConstraintPayload::KeepoutRef(id) => {
                let zone = world.zone(id).ok_or_else(|| PlanError::UnknownZone(id.clone()))?;
                if !safe.keepouts.iter().any(|k| &k.id == id) {
                    safe.keepouts.push(Keepout {
                        id: id.clone(),
                        region: zone.region.clone(),
                    });
                    changed = true;
                }
            }
            ConstraintPayload::OrientationBox { e1, e2 } => {
                let old = safe.orientation_bound();
                let new = [old[0].min(*e1), old[1].min(*e2)];
                if safe.orientation != Some(new) {
                    safe.orientation = Some(new);
                    changed = true;
                }
            }
            _ => {}
        }
    }
    Ok(changed)
}

/// Updates the admissible sets for an instruction event arriving while the
/// robot is at `current`. Events that change neither goal nor safety inputs
/// return the prior sets unchanged.
pub fn replan_from(
    current: &Pose,
    event: &InstructionEvent,
    prior: &AdmissibleSets,
    world: &WorldSnapshot,
) -> Result<AdmissibleSets, PlanError> {
    let mut safe = prior.safe.clone();
    let safety_changed = merge_safety(&mut safe, event, world)?;
    if event.goal.is_none() && !safety_changed {
        return Ok(prior.clone());
    }
    let goal = event.goal.as_ref().map(|g| g.pose).unwrap_or(prior.task.goal);
    let task = plan_corridor(current, &goal, world, &safe)?;
    Ok(AdmissibleSets {
        task,
        safe,
        robot: prior.robot,
    })
}
