//! Plans a corridor of overlapping boxes from a start to the handover
//! location, with and without the space over the laptop as a keep-out.
//!
//! cargo run --example corridor_plan

use langmotion::corridor::{plan_corridor, Keepout, SafeSet};
use langmotion::orchestrator::scenario::builtin_world;
use langmotion::world::{Pose, Vec3};

fn show(label: &str, safe: &SafeSet) {
    let world = builtin_world("handover_laptop").unwrap();
    let start = Pose::at(Vec3::new(0.45, -0.25, 0.35));
    let goal = world.locations["handover"];
    let corridor = plan_corridor(&start, &goal, &world, safe).expect("corridor");
    println!("{label}: {} regions, path length {:.3} m", corridor.regions.len(), corridor.arc_length.last().unwrap());
    for (r, b) in corridor.regions.iter().zip(&corridor.orientation_bounds) {
        let (lo, hi) = r.as_box().expect("boxes");
        println!("  [{:.3} {:.3} {:.3}] .. [{:.3} {:.3} {:.3}]  |e| <= {:?}", lo.x, lo.y, lo.z, hi.x, hi.y, hi.z, b);
    }
    for p in &corridor.via_points {
        println!("  via ({:.3}, {:.3}, {:.3})", p.x, p.y, p.z);
    }
}

fn main() {
    show("free", &SafeSet::default());
    let world = builtin_world("handover_laptop").unwrap();
    let zone = world.zones.iter().find(|z| z.object == "laptop").unwrap();
    let safe = SafeSet {
        keepouts: vec![Keepout {
            id: zone.id.clone(),
            region: zone.region.clone(),
        }],
        orientation: Some([0.15, 0.15]),
    };
    show("avoiding the laptop, upright", &safe);
}
