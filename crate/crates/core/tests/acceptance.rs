//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs with `cargo test --test acceptance`.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use common::{feasible_instance, right_branching, right_branching_sentence, satisfies_all, worst_containment, CORPUS};
use langmotion::chart::Chart;
use langmotion::controller::{advance, DT};
use langmotion::corridor::RobotLimits;
use langmotion::grammar::{tokenize, Dictionary};
use langmotion::orchestrator::metrics::{trajectory_csv, Phase, TrajectoryRow};
use langmotion::orchestrator::scenario::{builtin, builtin_names, builtin_world};
use langmotion::orchestrator::{run, Mode, RunOutput, Scenario};
use langmotion::resolver::ConstraintKind;

const OFFLINE_LATENCY: f64 = 5.6;
const CHART_BUDGET: Duration = Duration::from_secs(1);
const FEED_BUDGET: Duration = Duration::from_millis(10);
const ONLINE_PLAN_BUDGET: f64 = 0.050;
const NO_STOP_SPEED: f64 = 0.01;
const FULL_STOP_SPEED: f64 = 1e-3;
const SIM_BUDGET: f64 = 30.0;
const UPRIGHT_BOX: f64 = 0.15;
const KEEP_OUT_TOL: f64 = 1e-6;
const GRADIENT_TOL: f64 = 1e-6;
const SLACK_TOL: f64 = 1e-7;
const CONTAINMENT_TOL: f64 = 1e-6;
const POSE_TOL: f64 = 0.005;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run_named(name: &str, mode: Mode) -> RunOutput {
    let s: Scenario = builtin(name).unwrap().with_mode(mode, OFFLINE_LATENCY);
    run(&s).unwrap()
}

fn cells(chart: &Chart, dict: &Dictionary) -> BTreeMap<(usize, usize), Vec<String>> {
    let mut out = BTreeMap::new();
    for j in 0..chart.len() {
        for k in j + 1..chart.len() {
            let mut v: Vec<String> = chart.cell(j, k).map(|n| chart.describe(n.id, dict)).collect();
            if !v.is_empty() {
                v.sort();
                out.insert((j, k), v);
            }
        }
    }
    out
}

fn chart_cells() -> Verdict {
    let dict = Dictionary::shipped();
    let started = Instant::now();
    let mut chart = Chart::new();
    for w in tokenize("grab the mug by the top") {
        chart.feed_word(&w, &dict);
    }
    let elapsed = started.elapsed();
    let got = cells(&chart, &dict);
    let expected: BTreeMap<(usize, usize), Vec<String>> = [
        ((1, 2), vec!["NP -> the mug"]),
        ((0, 2), vec!["VP -> grab the mug"]),
        ((4, 5), vec!["NP -> the top"]),
        ((3, 5), vec!["PP -> by the top", "PP -> by the top (modifies NP)"]),
        ((0, 5), vec!["S -> grab (the mug by the top)", "S -> grab (the mug) (by the top)"]),
    ]
    .into_iter()
    .map(|(k, v)| (k, v.into_iter().map(String::from).collect()))
    .collect();
    let best = chart.result().best.map(|b| chart.describe(b.id, &dict));
    let best_ok = best.as_deref() == Some("S -> grab (the mug) (by the top)");
    check(
        got == expected && best_ok && elapsed < CHART_BUDGET,
        format!("{} phrase cells, best {:?}, {elapsed:?}", got.len(), best.unwrap_or_default()),
    )
}

fn fol_strings() -> Verdict {
    let dict = Dictionary::shipped();
    let mut chart = Chart::new();
    let mut best = |words: &str| {
        for w in tokenize(words) {
            chart.feed_word(&w, &dict);
        }
        chart.result().best.map(|b| b.sem.to_string()).unwrap_or_default()
    };
    let a = best("grab the mug");
    let b = best("by the top");
    check(
        a == "INSTRUCT(speaker,listener,graspObject(listener,mug))"
            && b == "INSTRUCT(speaker,listener,graspObject(listener,mug), by(mug, top))",
        format!("`{a}` then `{b}`"),
    )
}

fn incremental_equals_batch() -> Verdict {
    let dict = Dictionary::shipped();
    let mut mismatches = 0;
    for s in CORPUS {
        let words = tokenize(s);
        let mut inc = Chart::new();
        for w in &words {
            inc.feed_word(w, &dict);
        }
        if inc.contents() != Chart::parse_batch(&words, &dict).contents() {
            mismatches += 1;
        }
    }
    check(
        CORPUS.len() >= 20 && mismatches == 0,
        format!("{} sentences, {mismatches} mismatches", CORPUS.len()),
    )
}

fn cubic_growth() -> Verdict {
    let dict = right_branching();
    let attempts = |n: usize| {
        let mut c = Chart::new();
        for w in right_branching_sentence(n) {
            c.feed_word(&w, &dict);
        }
        c.combine_attempts() as f64
    };
    let (a10, a20, a40) = (attempts(10), attempts(20), attempts(40));
    let (r1, r2) = (a20 / a10, a40 / a20);
    check(r1 <= 9.0 && r2 <= 9.0, format!("attempts {a10}/{a20}/{a40}, ratios {r1:.2} {r2:.2}"))
}

fn feed_latency() -> Verdict {
    let dict = Dictionary::shipped();
    let mut worst = Duration::ZERO;
    let mut calls = 0;
    for s in CORPUS {
        let mut c = Chart::new();
        for w in tokenize(s) {
            let t = Instant::now();
            c.feed_word(&w, &dict);
            worst = worst.max(t.elapsed());
            calls += 1;
        }
    }
    check(worst < FEED_BUDGET, format!("{calls} calls, slowest {worst:?}"))
}

fn final_row(out: &RunOutput) -> &TrajectoryRow {
    out.log.rows.last().unwrap()
}

fn top_grasp() -> langmotion::world::Vec3 {
    let world = builtin_world("grasp_mug").unwrap();
    let mug = world.objects.iter().find(|o| o.id == "mug1").unwrap();
    mug.grasps["top"].position
}

fn no_stop_replanning(online: &RunOutput) -> Verdict {
    let correction = online.log.events.iter().find(|e| e.id == 2).map(|e| e.timestamp);
    let min_speed = online.metrics.min_mid_motion_speed.unwrap_or(0.0);
    let end = final_row(online);
    let off = (end.p() - top_grasp()).norm();
    check(
        correction.is_some_and(|t| (t - 3.1).abs() < 1e-9)
            && online.metrics.t_task.is_some()
            && min_speed > NO_STOP_SPEED
            && off < POSE_TOL
            && end.t < SIM_BUDGET,
        format!("correction at {correction:?} s, min mid-motion |v| {min_speed:.3} m/s, final {off:.1e} m from top grasp, ends {:.1} s", end.t),
    )
}

fn offline_ordering(online: &RunOutput) -> Verdict {
    let offline = run_named("mug_from_top", Mode::OfflineBaseline);
    let (on, off) = (online.metrics.t_task, offline.metrics.t_task);
    // a full stop between the first motion and the goal, at the first grasp
    let first_move = offline.log.rows.iter().position(|r| r.phase == Phase::Moving);
    let goal_at = offline.log.goal_reached.unwrap_or(f64::INFINITY);
    let stop = first_move.and_then(|i| {
        offline.log.rows[i..]
            .iter()
            .find(|r| r.t < goal_at && r.phase == Phase::Planning && r.speed < FULL_STOP_SPEED)
    });
    let world = builtin_world("grasp_mug").unwrap();
    let side = world.objects.iter().find(|o| o.id == "mug1").unwrap().grasps["side"].position;
    let stop_at_side = stop.is_some_and(|r| (r.p() - side).norm() < POSE_TOL);
    let slowest_plan = online.log.plans.iter().map(|p| p.wall).fold(0.0, f64::max);
    check(
        matches!((on, off), (Some(a), Some(b)) if b > a) && stop_at_side && slowest_plan < ONLINE_PLAN_BUDGET,
        format!(
            "t_task online {on:?} vs offline {off:?}, stop at intermediate pose {:?} s, slowest online plan {:.1} ms",
            stop.map(|r| r.t),
            slowest_plan * 1e3
        ),
    )
}

fn upright_slack_decay() -> Verdict {
    let out = run_named("handover_upright", Mode::Online);
    let t1 = out.log.events.iter().find(|e| e.id == 2).map(|e| e.timestamp).unwrap_or(f64::NAN);
    let after: Vec<&TrajectoryRow> = out.log.rows.iter().filter(|r| r.t >= t1 - 1e-9).collect();
    let dev = |r: &TrajectoryRow| r.e1.abs().max(r.e2.abs());
    let peak = after.iter().copied().max_by(|a, b| dev(a).total_cmp(&dev(b)));
    let end = final_row(&out);
    let final_ok = end.e1.abs() <= UPRIGHT_BOX && end.e2.abs() <= UPRIGHT_BOX;
    let peak_ok = peak.is_some_and(|r| (r.t - t1).abs() <= DT + 1e-9);
    check(
        (t1 - 6.4).abs() < 1e-9 && peak_ok && final_ok && out.metrics.t_task.is_some(),
        format!(
            "injected {t1} s, peak |e| {:.3} at {:.1} s, final ({:.3}, {:.3})",
            peak.map(dev).unwrap_or(f64::NAN),
            peak.map(|r| r.t).unwrap_or(f64::NAN),
            end.e1,
            end.e2
        ),
    )
}

fn keep_out() -> Verdict {
    let out = run_named("handover_avoid_laptop", Mode::Online);
    let world = builtin_world("handover_laptop").unwrap();
    let zone = world.zones.iter().find(|z| z.object == "laptop").unwrap();
    // depth inside the zone: positive when every face is satisfied
    let depth = out
        .log
        .rows
        .iter()
        .map(|r| -zone.region.max_violation(&r.p()))
        .fold(f64::NEG_INFINITY, f64::max);
    let avoid_t = out.log.events.iter().filter(|e| e.kinds().contains(&ConstraintKind::Safety)).map(|e| e.timestamp).next_back();
    // the same handover without the avoidance clause crosses the zone
    let plain = run_named("handover_upright", Mode::Online);
    let plain_depth = plain.log.rows.iter().map(|r| -zone.region.max_violation(&r.p())).fold(f64::NEG_INFINITY, f64::max);
    check(
        depth <= KEEP_OUT_TOL && plain_depth > 0.0 && out.metrics.t_task.is_some(),
        format!("deepest point {depth:.2e} m inside keep-out (avoidance at {avoid_t:?} s); without avoidance {plain_depth:.3} m"),
    )
}

fn limits_respected(rows: &[TrajectoryRow]) -> (bool, f64, f64) {
    let limits = RobotLimits::default();
    let v_axis = limits.v_max / 3f64.sqrt();
    let vmax = rows.iter().map(|r| r.v().amax()).fold(0.0, f64::max);
    let amax = rows.windows(2).map(|w| (w[1].v() - w[0].v()).amax() / DT).fold(0.0, f64::max);
    (vmax <= v_axis + 1e-9 && amax <= limits.a_max + 1e-6, vmax, amax)
}

fn faster() -> Verdict {
    let plain = run_named("screwdriver", Mode::Online);
    let fast = run_named("screwdriver_faster", Mode::Online);
    let t1 = fast.log.events.iter().find(|e| e.id == 2).map(|e| e.timestamp).unwrap_or(f64::NAN);
    let (a, b) = (plain.log.goal_reached, fast.log.goal_reached);
    let (ok, vmax, amax) = limits_respected(&fast.log.rows);
    check(
        (t1 - 6.1).abs() < 1e-9 && matches!((a, b), (Some(a), Some(b)) if b < a) && ok && fast.log.errors.is_empty(),
        format!("goal at {b:?} s with the manner event at {t1} s vs {a:?} s without; peak axis speed {vmax:.3}, accel {amax:.2}"),
    )
}

fn controller_properties(runs: &[RunOutput]) -> Verdict {
    let mut replay_ok = true;
    let mut slack_free = 0;
    let mut worst_grad = 0.0f64;
    for seed in 0..100 {
        let (p, candidate) = feasible_instance(1000 + seed);
        if !satisfies_all(&p, &candidate) {
            return Err(format!("instance {seed} has no certificate"));
        }
        let sol = p.solve().unwrap();
        if sol.max_slack() <= SLACK_TOL {
            slack_free += 1;
        }
        let mut x = p.x0;
        for (k, u) in sol.inputs.iter().enumerate() {
            x = advance(&x, u, p.config.dt);
            replay_ok &= sol.states[k + 1] == x;
        }
        if seed < 10 {
            let (h, g, _) = p.quadratic();
            let z = p.pack(&sol.inputs, &sol.slack);
            let grad = &h * &z + &g;
            let step = 1e-4;
            for i in 0..z.len() {
                let value = |z: &nalgebra::DVector<f64>| {
                    let (u, s) = p.unpack(z);
                    p.cost_by_rollout(&u, &s)
                };
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += step;
                zm[i] -= step;
                let fd = (value(&zp) - value(&zm)) / (2.0 * step);
                worst_grad = worst_grad.max((fd - grad[i]).abs() / (1.0 + grad[i].abs()));
            }
        }
    }
    let containment = runs.iter().map(|o| worst_containment(&o.log, DT)).fold(0.0, f64::max);
    check(
        replay_ok && slack_free == 100 && worst_grad < GRADIENT_TOL && containment <= CONTAINMENT_TOL,
        format!(
            "replay {}, {slack_free}/100 slack-free, gradient error {worst_grad:.1e}, worst containment {containment:.1e} m over {} runs",
            if replay_ok { "exact" } else { "inexact" },
            runs.len()
        ),
    )
}

fn replay(runs: &[RunOutput]) -> Verdict {
    let mut differing = Vec::new();
    for first in runs {
        let s = builtin(&first.log.scenario).unwrap().with_mode(first.log.mode, OFFLINE_LATENCY);
        let again = run(&s).unwrap();
        if trajectory_csv(&first.log.rows).unwrap() != trajectory_csv(&again.log.rows).unwrap() {
            differing.push(format!("{} {:?}", first.log.scenario, first.log.mode));
        }
    }
    check(differing.is_empty(), format!("{} runs replayed, differing: {differing:?}", runs.len()))
}

fn main() {
    let online_s1 = run_named("mug_from_top", Mode::Online);
    let all_runs: Vec<RunOutput> = builtin_names()
        .flat_map(|n| [run_named(n, Mode::Online), run_named(n, Mode::OfflineBaseline)])
        .collect();
    let results: Vec<(&str, Verdict)> = vec![
        ("chart cells for \"grab the mug by the top\"", chart_cells()),
        ("FOL strings", fol_strings()),
        ("incremental chart equals batch chart", incremental_equals_batch()),
        ("combine attempts grow at most cubically", cubic_growth()),
        ("every feed_word under 10 ms", feed_latency()),
        ("scenario 1 replans without stopping", no_stop_replanning(&online_s1)),
        ("offline baseline is slower and stops", offline_ordering(&online_s1)),
        ("scenario 2 upright deviation peaks at injection", upright_slack_decay()),
        ("scenario 2 never enters the keep-out", keep_out()),
        ("scenario 3 faster reaches the goal sooner", faster()),
        ("controller properties", controller_properties(&all_runs)),
        ("replay is bit-identical", replay(&all_runs)),
    ];
    let mut failed = 0;
    for (i, (name, verdict)) in results.iter().enumerate() {
        match verdict {
            Ok(d) => println!("PASS criterion {}: {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {d}", i + 1);
            }
        }
    }
    println!("{} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
