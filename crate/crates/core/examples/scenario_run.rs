//! Runs a shipped scenario and prints its metrics.
//!
//! cargo run --example scenario_run -- mug_from_top [online|offline]

use langmotion::orchestrator::scenario::builtin;
use langmotion::orchestrator::{run, Mode};

fn main() {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "mug_from_top".into());
    let mode: Mode = args.next().map(|m| m.parse().unwrap()).unwrap_or_default();
    let scenario = builtin(&name).expect("unknown scenario").with_mode(mode, 5.6);
    let out = run(&scenario).expect("valid scenario");
    let m = &out.metrics;
    println!("{} ({:?}): \"{}\"", scenario.name, mode, scenario.utterance());
    for e in &m.events {
        println!("  event {} at {:.1} s: {:?} goal={:?}", e.id, e.t, e.kinds, e.goal);
    }
    println!("  plans: {:?}", m.t_plan.iter().map(|t| format!("{t:.4}")).collect::<Vec<_>>());
    println!("  segments: {:?}", m.t_traj.iter().map(|t| format!("{t:.1}")).collect::<Vec<_>>());
    println!("  t_task: {:?}", m.t_task);
    println!("  min mid-motion speed: {:?}", m.min_mid_motion_speed);
    println!("  max violation: {:.2e}", m.max_violation);
    if let Some(last) = out.log.rows.last() {
        println!("  final p=({:.3},{:.3},{:.3}) e=({:.3},{:.3})", last.px, last.py, last.pz, last.e1, last.e2);
    }
    for e in &m.errors {
        println!("  error: {e}");
    }
}
