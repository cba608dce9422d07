//! Runs every shipped scenario online and with the stop-and-replan
//! baseline, and tabulates task time and its decomposition.
//!
//! cargo run --release --example baseline_compare -- [latency]

use langmotion::orchestrator::scenario::{builtin, builtin_names};
use langmotion::orchestrator::{run, Mode};

fn main() {
    let latency: f64 = std::env::args().nth(1).map(|s| s.parse().expect("latency in s")).unwrap_or(5.6);
    println!("{:<22} {:>8} {:>8} {:>8} {:>8} {:>8}", "scenario", "online", "offline", "plan", "motion", "idle");
    for name in builtin_names() {
        let on = run(&builtin(name).unwrap()).unwrap().metrics;
        let off = run(&builtin(name).unwrap().with_mode(Mode::OfflineBaseline, latency)).unwrap().metrics;
        let fmt = |t: Option<f64>| t.map(|t| format!("{t:.1}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<22} {:>8} {:>8} {:>8.1} {:>8.1} {:>8.1}",
            name,
            fmt(on.t_task),
            fmt(off.t_task),
            off.t_plan.iter().sum::<f64>(),
            off.t_traj.iter().sum::<f64>(),
            off.idle
        );
    }
}
