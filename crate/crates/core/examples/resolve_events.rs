//! Turns successive complete parses of one utterance into instruction
//! events against a shipped world. Each event carries only what changed.
//!
//! cargo run --example resolve_events -- grasp_mug "grab the mug from the top"

use langmotion::chart::{best_parse, Chart};
use langmotion::grammar::{tokenize, Dictionary};
use langmotion::orchestrator::scenario::builtin_world;
use langmotion::resolver::{InstructionEvent, Resolver};

fn main() {
    let mut args = std::env::args().skip(1);
    let world_name = args.next().unwrap_or_else(|| "grasp_mug".into());
    let utterance = args.next().unwrap_or_else(|| "grab the mug from the top".into());
    let world = builtin_world(&world_name).expect("unknown world");
    let dict = Dictionary::shipped();
    let mut chart = Chart::new();
    let mut resolver = Resolver::new(7);
    let mut last: Option<InstructionEvent> = None;
    for (i, w) in tokenize(&utterance).iter().enumerate() {
        let result = chart.feed_word(w, &dict);
        let Some(best) = best_parse(&result, &world) else {
            continue;
        };
        let Some(frame) = best.frame() else { continue };
        match resolver.resolve(frame, &world, last.as_ref(), i as f64) {
            Ok(event) => {
                println!("after `{w}`: event {} {:?}", event.id, event.kinds());
                if let Some(g) = &event.goal {
                    println!("  goal {} at {:?}", g.label, g.pose.position.as_slice());
                }
                for c in &event.constraints {
                    println!("  {c:?}");
                }
                last = Some(event);
            }
            Err(e) => println!("after `{w}`: {e}"),
        }
    }
}
