#![allow(dead_code)]

use langmotion::controller::{advance, ControlInput, ControllerConfig, EEState, HorizonProblem};
use langmotion::corridor::{AdmissibleSets, Corridor, RobotLimits, SafeSet};
use langmotion::grammar::{load_grammar, Dictionary};
use langmotion::orchestrator::metrics::{Phase, RunLog};
use langmotion::resolver::CostParams;
use langmotion::world::{ConvexRegion, Pose, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Experiment utterances first, then synthetic sentences over the shipped
/// lexicon (including ones that never complete).
pub const CORPUS: &[&str] = &[
    "grab the mug",
    "grab the mug by the top",
    "grab the mug from the top",
    "pass the mug but don't spill it",
    "pass the mug but keep it upright",
    "pass the mug but keep it upright and avoid going over the laptop",
    "hand me the screwdriver",
    "hand me the screwdriver but move faster",
    "grab the mug no the blue one",
    "put the apple in the box",
    "put the apple in the box no the one on the right",
    "grab the apple no push it",
    "grab the cup after you put down the apple",
    "pick up the cup",
    "grab the black mug",
    "push the apple",
    "grab the mug by the handle",
    "pass the cup but avoid going over the laptop",
    "put down the apple",
    "grab a cup",
    "hand me the mug but move slower",
    "grab the blue mug from the side",
    "move the mug slower",
    "the mug grab",
    "grab the the mug",
    "put the box on the left in the box",
];

/// `a` wraps the clause to its right, so "a a ... a b" parses as a
/// right-branching chain.
pub const RIGHT_BRANCHING: &str = "a\tS/S\tf($1)\nb\tS\tb\n";

pub fn right_branching() -> Dictionary {
    load_grammar(RIGHT_BRANCHING).unwrap()
}

pub fn right_branching_sentence(n: usize) -> Vec<String> {
    let mut w = vec!["a".to_string(); n - 1];
    w.push("b".into());
    w
}

/// A single-region corridor from `start` towards `goal` inside `region`.
pub fn box_corridor(region: ConvexRegion, start: Vec3, goal: Vec3, bound: [f64; 2]) -> Corridor {
    Corridor {
        regions: vec![region],
        via_points: vec![start, goal],
        orientation_bounds: vec![bound],
        start: Pose::at(start),
        goal: Pose::at(goal),
        start_feasible: true,
        arc_length: vec![0.0, (goal - start).norm()],
    }
}

/// A random horizon problem whose unrelaxed constraints are satisfied by a
/// known input sequence (returned as the certificate).
pub fn feasible_instance(seed: u64) -> (HorizonProblem, Vec<ControlInput>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = ControllerConfig::default();
    let x0 = EEState {
        p: Vec3::new(rng.random_range(0.0..0.6), rng.random_range(-0.2..0.6), rng.random_range(0.1..0.6)),
        e: [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)],
        v: Vec3::from_fn(|_, _| rng.random_range(-0.1..0.1)),
        e_dot: [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)],
    };
    let inputs: Vec<ControlInput> = (0..config.horizon)
        .map(|_| ControlInput {
            a: Vec3::from_fn(|_, _| rng.random_range(-0.4..0.4)),
            e_ddot: [rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8)],
        })
        .collect();
    let mut states = vec![x0];
    for u in &inputs {
        states.push(advance(states.last().unwrap(), u, config.dt));
    }
    let margin = rng.random_range(0.0..0.02);
    let lo = states.iter().fold(Vec3::repeat(f64::INFINITY), |m, x| m.inf(&x.p)) - Vec3::repeat(margin);
    let hi = states.iter().fold(Vec3::repeat(f64::NEG_INFINITY), |m, x| m.sup(&x.p)) + Vec3::repeat(margin);
    let bound = std::array::from_fn(|i| states.iter().map(|x| x.e[i].abs()).fold(0.0, f64::max) + margin + 1e-3);
    // the reference heads to a random point in the box, not along the certificate
    let goal = Vec3::from_fn(|i, _| rng.random_range(lo[i]..=hi[i]));
    let sets = AdmissibleSets {
        task: box_corridor(ConvexRegion::from_bounds(lo, hi), x0.p, goal, bound),
        safe: SafeSet::default(),
        robot: RobotLimits::default(),
    };
    let params = CostParams {
        speed_weight: rng.random_range(0.5..4.0),
        ..CostParams::default()
    };
    let u0 = ControlInput::default();
    let problem = HorizonProblem::new(config, x0, u0, &sets, params, 0.0).unwrap();
    (problem, inputs)
}

/// Whether the candidate inputs meet every unrelaxed constraint.
pub fn satisfies_all(problem: &HorizonProblem, inputs: &[ControlInput]) -> bool {
    let states = problem.rollout(inputs);
    let hard_ok = inputs
        .iter()
        .all(|u| u.a.amax() <= problem.a_max && u.e_ddot.iter().all(|v| v.abs() <= problem.e_ddot_max));
    hard_ok && problem.violations(&states).iter().flatten().all(|v| *v <= 1e-12)
}

/// Largest distance outside the corridor in force, over moving ticks.
pub fn worst_containment(log: &RunLog, dt: f64) -> f64 {
    let mut worst = 0.0f64;
    for r in log.rows.iter().filter(|r| r.phase == Phase::Moving) {
        let Some(rec) = log.corridors.iter().rev().find(|c| c.t <= r.t - dt + 1e-9) else {
            continue;
        };
        let d = rec
            .corridor
            .regions
            .iter()
            .map(|reg| reg.max_violation(&r.p()).max(0.0))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(d);
    }
    worst
}
