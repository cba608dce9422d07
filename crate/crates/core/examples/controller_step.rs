//! Closes the loop with the receding-horizon controller alone: a corridor
//! to a goal, one solve per tick, the first input applied.
//!
//! cargo run --example controller_step

use langmotion::controller::{advance, ControlInput, Controller, ControllerConfig, EEState};
use langmotion::corridor::{plan_corridor, AdmissibleSets, RobotLimits, SafeSet};
use langmotion::resolver::CostParams;
use langmotion::world::{ConvexRegion, Pose, Vec3, WorldSnapshot};

fn main() {
    let world = WorldSnapshot::empty(ConvexRegion::from_bounds(Vec3::new(-0.2, -0.4, 0.0), Vec3::new(0.8, 0.8, 0.8)));
    let start = Vec3::new(0.1, -0.2, 0.3);
    let goal = Pose {
        position: Vec3::new(0.5, 0.5, 0.4),
        orientation: [0.3, -0.2],
    };
    let safe = SafeSet {
        keepouts: Vec::new(),
        orientation: Some([0.5, 0.5]),
    };
    let task = plan_corridor(&Pose::at(start), &goal, &world, &safe).unwrap();
    let sets = AdmissibleSets {
        task,
        safe,
        robot: RobotLimits::default(),
    };
    let config = ControllerConfig::default();
    let mut controller = Controller::new(config);
    let mut x = EEState::at_rest(start, [0.0; 2]);
    let mut u = ControlInput::default();
    let params = CostParams::default();
    let mut progress = 0.0;
    for k in 0..60 {
        let sol = controller.step(&x, &u, &sets, &params, progress).unwrap();
        u = sol.inputs[0];
        let next = advance(&x, &u, config.dt);
        progress += (next.p - x.p).norm();
        x = next;
        if k % 5 == 0 {
            println!(
                "t={:.1} p=({:.3},{:.3},{:.3}) |v|={:.3} e=({:.3},{:.3}) iters={} slack={:.1e}",
                (k + 1) as f64 * config.dt,
                x.p.x,
                x.p.y,
                x.p.z,
                x.v.norm(),
                x.e[0],
                x.e[1],
                sol.iterations,
                sol.max_slack()
            );
        }
    }
    println!("distance to goal {:.4} m", (x.p - goal.position).norm());
}
