//! Grounds a complete parse into goal, constraint, and cost updates.
//!
//! Each modifier clause is classified into one of six kinds. The kind fixes
//! which planner input it may touch: manner constraints only scale cost
//! parameters, safety constraints only extend the keep-out / orientation
//! inputs, and the remaining kinds only change the task (goal) inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grammar::{SemanticFrame, Term};
use crate::world::{Pose, WorldObject, WorldSnapshot};

/// Orientation bound applied by "keep it upright" and "don't spill it", rad.
pub const UPRIGHT_BOUND: f64 = 0.15;
/// Speed-weight factor of "faster".
pub const FASTER_FACTOR: f64 = 2.0;
pub const SLOWER_FACTOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Manner,
    Target,
    Object,
    Action,
    Safety,
    Sequential,
}

impl ConstraintKind {
    pub fn adaption(self) -> Adaption {
        match self {
            ConstraintKind::Manner => Adaption::CostParams,
            ConstraintKind::Safety => Adaption::SafeSet,
            _ => Adaption::TaskSet,
        }
    }
}

/// Planner input a constraint kind is allowed to modify.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adaption {
    CostParams,
    SafeSet,
    TaskSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintPayload {
    SpeedScale(f64),
    GoalRef { object: String, grasp: Option<String> },
    ReferentFilter { name: String, attribute: String, value: String },
    ActionSymbol(String),
    OrientationBox { e1: f64, e2: f64 },
    KeepoutRef(String),
    Ordering { first: String, then: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub kind: ConstraintKind,
    pub payload: ConstraintPayload,
    /// Serialized modifier that produced the constraint.
    pub source: String,
}

impl ConstraintSpec {
    /// Whether the payload variant is the one the kind prescribes.
    pub fn is_well_routed(&self) -> bool {
        use ConstraintKind as K;
        use ConstraintPayload as P;
        matches!(
            (self.kind, &self.payload),
            (K::Manner, P::SpeedScale(_))
                | (K::Target, P::GoalRef { .. })
                | (K::Object, P::ReferentFilter { .. })
                | (K::Action, P::ActionSymbol(_))
                | (K::Safety, P::OrientationBox { .. } | P::KeepoutRef(_))
                | (K::Sequential, P::Ordering { .. })
        )
    }
}

/// Multiplicative cost-parameter factors (1.0 is neutral).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub speed_weight: f64,
    pub path_weight: f64,
    pub terminal_weight: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            speed_weight: 1.0,
            path_weight: 1.0,
            terminal_weight: 1.0,
        }
    }
}

impl CostParams {
    pub fn is_valid(&self) -> bool {
        [self.speed_weight, self.path_weight, self.terminal_weight]
            .iter()
            .all(|w| w.is_finite() && *w > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalTarget {
    /// Human-readable goal name, e.g. `mug1:top` or `handover`.
    pub label: String,
    pub pose: Pose,
}

/// The complete grounded meaning of the utterance so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub action: String,
    pub object: String,
    pub goals: Vec<GoalTarget>,
    pub constraints: Vec<ConstraintSpec>,
    /// Modifiers that fit no constraint kind.
    pub open: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionEvent {
    pub id: u64,
    /// Simulated time at which the triggering parse completed, s.
    pub timestamp: f64,
    pub goal: Option<GoalTarget>,
    /// Goals queued to run after `goal`, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub followups: Vec<GoalTarget>,
    pub constraints: Vec<ConstraintSpec>,
    pub cost_params: Option<CostParams>,
    pub supersedes: Option<u64>,
    pub parse: String,
    pub intent: Intent,
}

impl InstructionEvent {
    pub fn has_update(&self) -> bool {
        self.goal.is_some() || !self.constraints.is_empty() || self.cost_params.is_some()
    }

    pub fn kinds(&self) -> Vec<ConstraintKind> {
        self.constraints.iter().map(|c| c.kind).collect()
    }

    /// Safety constraints grouped for the planner.
    pub fn orientation_bound(&self) -> Option<[f64; 2]> {
        self.constraints.iter().find_map(|c| match c.payload {
            ConstraintPayload::OrientationBox { e1, e2 } => Some([e1, e2]),
            _ => None,
        })
    }

    pub fn keepouts(&self) -> impl Iterator<Item = &str> {
        self.constraints.iter().filter_map(|c| match &c.payload {
            ConstraintPayload::KeepoutRef(z) => Some(z.as_str()),
            _ => None,
        })
    }

    /// Checks the kind-to-input routing and the non-empty update invariant.
    pub fn check_routing(&self) -> Result<(), String> {
        if !self.has_update() {
            return Err("event carries no update".into());
        }
        for c in &self.constraints {
            if !c.is_well_routed() {
                return Err(format!("{:?} constraint with payload {:?}", c.kind, c.payload));
            }
        }
        let manner = self.constraints.iter().any(|c| c.kind == ConstraintKind::Manner);
        if self.cost_params.is_some() && !manner {
            return Err("cost parameters changed without a manner constraint".into());
        }
        if manner && self.cost_params.is_none() {
            return Err("manner constraint without cost parameters".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ResolveError {
    #[error("referent `{0}` does not resolve in the world")]
    UnresolvedReferent(String),
    #[error("parse is not a submittable instruction")]
    NotSubmittable,
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("no goal pose for `{0}`")]
    NoGoal(String),
    #[error("parse adds nothing to the previous instruction")]
    NoChange,
}

/// Taxonomy kind of one modifier clause.
pub fn classify_modifier(m: &SemanticFrame) -> Option<ConstraintKind> {
    match m.predicate.as_str() {
        "faster" | "slower" => Some(ConstraintKind::Manner),
        "by" | "from" => Some(ConstraintKind::Target),
        "keep" if has_symbol(m, "upright") => Some(ConstraintKind::Safety),
        "not" if inner_predicate(m) == Some("spill") => Some(ConstraintKind::Safety),
        "avoid" => Some(ConstraintKind::Safety),
        "after" => Some(ConstraintKind::Sequential),
        "correct" => match m.args.first()? {
            Term::Frame(f) if f.predicate == "located" => Some(ConstraintKind::Target),
            Term::Frame(f) if f.predicate == "attr" => Some(ConstraintKind::Object),
            Term::Frame(f) if f.is_instruct() => Some(ConstraintKind::Action),
            _ => None,
        },
        _ => None,
    }
}

/// One kind per modifier, `None` where the modifier is unclassifiable.
pub fn classify(parse: &SemanticFrame) -> Vec<(String, Option<ConstraintKind>)> {
    parse
        .all_modifiers()
        .map(|m| (m.frame.to_string(), classify_modifier(&m.frame)))
        .collect()
}

fn has_symbol(f: &SemanticFrame, s: &str) -> bool {
    f.symbols().contains(&s)
}

fn inner_predicate(f: &SemanticFrame) -> Option<&str> {
    f.args.first().and_then(Term::as_frame).map(|g| g.predicate.as_str())
}

/// Grounds a noun-phrase term to an object id.
///
/// Plain names and `attr(name, value)` filters pick among matching objects;
/// with several candidates the choice is drawn from a generator seeded with
/// `seed`, so it is stable across runs. `located(name, right|left)` picks the
/// extreme candidate along y.
pub fn ground_referent(term: &Term, world: &WorldSnapshot, seed: u64) -> Result<String, ResolveError> {
    let (candidates, label): (Vec<&WorldObject>, String) = match term {
        Term::Sym(name) => (world.objects.iter().filter(|o| &o.name == name).collect(), name.clone()),
        Term::Frame(f) if f.predicate == "attr" => {
            let name = f.args.first().and_then(Term::as_sym).unwrap_or("");
            let value = f.args.get(1).and_then(Term::as_sym).unwrap_or("");
            (
                world
                    .objects
                    .iter()
                    .filter(|o| o.name == name && o.attributes.values().any(|v| v == value))
                    .collect(),
                f.to_string(),
            )
        }
        Term::Frame(f) if f.predicate == "located" => {
            let name = f.args.first().and_then(Term::as_sym).unwrap_or("");
            let side = f.args.get(1).and_then(Term::as_sym).unwrap_or("");
            let mut c: Vec<&WorldObject> = world.objects.iter().filter(|o| o.name == name).collect();
            // y points left in the robot base frame
            c.sort_by(|a, b| a.position.y.total_cmp(&b.position.y).then(a.id.cmp(&b.id)));
            let pick = match side {
                "right" => c.first().copied(),
                "left" => c.last().copied(),
                _ => None,
            };
            return pick
                .map(|o| o.id.clone())
                .ok_or_else(|| ResolveError::UnresolvedReferent(f.to_string()));
        }
        other => return Err(ResolveError::UnresolvedReferent(other.to_string())),
    };
    let mut ids: Vec<&str> = candidates.iter().map(|o| o.id.as_str()).collect();
    ids.sort_unstable();
    match ids.len() {
        0 => Err(ResolveError::UnresolvedReferent(label)),
        1 => Ok(ids[0].to_string()),
        n => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(ids[rng.random_range(0..n)].to_string())
        }
    }
}

/// Whether every object referent of a clause grounds in `world`.
/// `it` is anaphoric and always accepted here.
pub fn referents_resolve(frame: &SemanticFrame, world: &WorldSnapshot) -> bool {
    let Some(object) = frame.object() else {
        return false;
    };
    let grounded = |t: &Term| match t {
        Term::Sym(s) if s == "it" => true,
        t => ground_referent(t, world, 0).is_ok(),
    };
    if !grounded(object) {
        return false;
    }
    // modifiers naming the object again must ground too
    frame.all_modifiers().all(|m| match m.frame.predicate.as_str() {
        "by" | "from" => m.frame.args.first().is_none_or(&grounded),
        _ => true,
    })
}

/// Stateful resolver: assigns event ids and holds the grounding seed.
#[derive(Debug, Clone)]
pub struct Resolver {
    seed: u64,
    next_id: u64,
}

impl Resolver {
    pub fn new(seed: u64) -> Self {
        Resolver { seed, next_id: 1 }
    }

    /// Resolves a parse into an event. With a prior event, only the delta
    /// relative to the prior intent is carried and `supersedes` is set.
    pub fn resolve(
        &mut self,
        parse: &SemanticFrame,
        world: &WorldSnapshot,
        prior: Option<&InstructionEvent>,
        timestamp: f64,
    ) -> Result<InstructionEvent, ResolveError> {
        let intent = self.interpret(parse, world, prior.map(|p| &p.intent))?;
        let (goal, followups, constraints) = match prior {
            None => {
                let mut goals = intent.goals.clone().into_iter();
                (goals.next(), goals.collect(), intent.constraints.clone())
            }
            Some(p) => {
                let changed = intent.goals != p.intent.goals;
                let mut goals = intent.goals.clone().into_iter();
                let (goal, followups) = if changed {
                    (goals.next(), goals.collect())
                } else {
                    (None, Vec::new())
                };
                let fresh: Vec<ConstraintSpec> = intent
                    .constraints
                    .iter()
                    .filter(|c| !p.intent.constraints.contains(c))
                    .cloned()
                    .collect();
                (goal, followups, fresh)
            }
        };
        let speed: f64 = constraints
            .iter()
            .filter_map(|c| match c.payload {
                ConstraintPayload::SpeedScale(s) => Some(s),
                _ => None,
            })
            .product();
        let cost_params = constraints
            .iter()
            .any(|c| c.kind == ConstraintKind::Manner)
            .then_some(CostParams {
                speed_weight: speed,
                ..CostParams::default()
            });
        let event = InstructionEvent {
            id: self.next_id,
            timestamp,
            goal,
            followups,
            constraints,
            cost_params,
            supersedes: prior.map(|p| p.id),
            parse: parse.to_string(),
            intent,
        };
        if !event.has_update() {
            return Err(ResolveError::NoChange);
        }
        self.next_id += 1;
        Ok(event)
    }

    /// Full grounding of a clause, independent of any prior event except for
    /// the antecedent of `it`.
    pub fn interpret(
        &self,
        parse: &SemanticFrame,
        world: &WorldSnapshot,
        prior: Option<&Intent>,
    ) -> Result<Intent, ResolveError> {
        if !parse.is_instruct() {
            return Err(ResolveError::NotSubmittable);
        }
        let action_frame = parse.action().ok_or(ResolveError::NotSubmittable)?;
        let object_term = parse.object().ok_or(ResolveError::NotSubmittable)?;
        let mut action = action_frame.predicate.clone();
        let mut object = self.ground(object_term, world, prior)?;
        let mut grasp: Option<String> = None;
        let destination_frame = action_frame
            .args
            .iter()
            .filter_map(Term::as_frame)
            .find(|f| f.predicate == "in");
        let destination_noun = destination_frame
            .and_then(|d| d.args.first())
            .and_then(Term::as_sym)
            .map(str::to_string);
        let mut destination = match destination_frame.and_then(|d| d.args.first()) {
            Some(t) => Some(ground_referent(t, world, self.seed)?),
            None => None,
        };
        let mut constraints = Vec::new();
        let mut open = Vec::new();

        for m in parse.all_modifiers() {
            let f = &m.frame;
            let source = f.to_string();
            let Some(kind) = classify_modifier(f) else {
                open.push(source);
                continue;
            };
            let payload = match (kind, f.predicate.as_str()) {
                (ConstraintKind::Manner, "faster") => ConstraintPayload::SpeedScale(FASTER_FACTOR),
                (ConstraintKind::Manner, _) => ConstraintPayload::SpeedScale(SLOWER_FACTOR),
                (ConstraintKind::Target, "by" | "from") => {
                    let part = f.args.get(1).and_then(Term::as_sym).unwrap_or("").to_string();
                    grasp = Some(part.clone());
                    ConstraintPayload::GoalRef {
                        object: object.clone(),
                        grasp: Some(part),
                    }
                }
                (ConstraintKind::Target, _) => {
                    // "no, the one on the right": `one` stands for the destination noun
                    let Some(Term::Frame(loc)) = f.args.first() else {
                        open.push(source);
                        continue;
                    };
                    let noun = destination_noun
                        .clone()
                        .unwrap_or_else(|| world_name(world, &object));
                    let mut located = loc.clone();
                    located.args[0] = Term::sym(noun);
                    let target = ground_referent(&Term::Frame(located), world, self.seed)?;
                    if destination.is_some() {
                        destination = Some(target.clone());
                    } else {
                        object = target.clone();
                    }
                    ConstraintPayload::GoalRef {
                        object: target,
                        grasp: None,
                    }
                }
                (ConstraintKind::Object, _) => {
                    let Some(Term::Frame(attr)) = f.args.first() else {
                        open.push(source);
                        continue;
                    };
                    let name = world_name(world, &object);
                    let value = attr.args.get(1).and_then(Term::as_sym).unwrap_or("").to_string();
                    let mut filter = attr.clone();
                    filter.args[0] = Term::sym(name.clone());
                    object = ground_referent(&Term::Frame(filter), world, self.seed)?;
                    let attribute = world
                        .object(&object)
                        .and_then(|o| o.attributes.iter().find(|(_, v)| **v == value))
                        .map(|(k, _)| k.clone())
                        .unwrap_or_default();
                    ConstraintPayload::ReferentFilter {
                        name,
                        attribute,
                        value,
                    }
                }
                (ConstraintKind::Action, _) => {
                    let new_action = f
                        .args
                        .first()
                        .and_then(Term::as_frame)
                        .and_then(SemanticFrame::action)
                        .map(|a| a.predicate.clone())
                        .unwrap_or_default();
                    action = new_action.clone();
                    ConstraintPayload::ActionSymbol(new_action)
                }
                (ConstraintKind::Safety, "avoid") => {
                    let zone = avoid_zone(f, world)?;
                    ConstraintPayload::KeepoutRef(zone)
                }
                (ConstraintKind::Safety, _) => ConstraintPayload::OrientationBox {
                    e1: UPRIGHT_BOUND,
                    e2: UPRIGHT_BOUND,
                },
                (ConstraintKind::Sequential, _) => {
                    let first = f
                        .args
                        .get(1)
                        .and_then(Term::as_frame)
                        .and_then(SemanticFrame::action)
                        .map(|a| a.predicate.clone())
                        .unwrap_or_default();
                    ConstraintPayload::Ordering {
                        first,
                        then: action.clone(),
                    }
                }
            };
            constraints.push(ConstraintSpec {
                kind,
                payload,
                source,
            });
        }

        let mut goals = Vec::new();
        for c in &constraints {
            if let ConstraintPayload::Ordering { .. } = c.payload {
                let Some(first) = parse
                    .all_modifiers()
                    .find(|m| m.frame.predicate == "after")
                    .and_then(|m| m.frame.args.get(1))
                    .and_then(Term::as_frame)
                else {
                    continue;
                };
                let sub = self.interpret(first, world, prior)?;
                goals.extend(sub.goals);
            }
        }
        let obj = world
            .object(&object)
            .ok_or_else(|| ResolveError::UnresolvedReferent(object.clone()))?;
        goals.extend(self.goals_for(&action, obj, grasp.as_deref(), destination.as_deref(), world)?);

        Ok(Intent {
            action,
            object,
            goals,
            constraints,
            open,
        })
    }

    fn ground(&self, term: &Term, world: &WorldSnapshot, prior: Option<&Intent>) -> Result<String, ResolveError> {
        match term {
            Term::Sym(s) if s == "it" => prior
                .map(|p| p.object.clone())
                .ok_or_else(|| ResolveError::UnresolvedReferent("it".into())),
            t => ground_referent(t, world, self.seed),
        }
    }

    fn goals_for(
        &self,
        action: &str,
        obj: &WorldObject,
        grasp: Option<&str>,
        destination: Option<&str>,
        world: &WorldSnapshot,
    ) -> Result<Vec<GoalTarget>, ResolveError> {
        let grasp_goal = || -> Result<GoalTarget, ResolveError> {
            let name = match grasp {
                Some(g) => g.to_string(),
                None => self.default_grasp(obj)?,
            };
            let pose = obj
                .grasps
                .get(&name)
                .ok_or_else(|| ResolveError::NoGoal(format!("{}:{name}", obj.id)))?;
            Ok(GoalTarget {
                label: format!("{}:{name}", obj.id),
                pose: *pose,
            })
        };
        let handover = || -> Result<GoalTarget, ResolveError> {
            world
                .locations
                .get("handover")
                .map(|p| GoalTarget {
                    label: "handover".into(),
                    pose: *p,
                })
                .ok_or_else(|| ResolveError::NoGoal("handover".into()))
        };
        match action {
            "graspObject" => Ok(vec![grasp_goal()?]),
            "passObject" | "handObject" | "moveObject" => {
                if obj.held {
                    Ok(vec![handover()?])
                } else {
                    Ok(vec![grasp_goal()?, handover()?])
                }
            }
            "placeObject" => {
                let target = destination.and_then(|id| world.object(id)).cloned();
                let pose = match &target {
                    Some(t) => t.place.unwrap_or(Pose::at(t.position)),
                    None => obj.place.unwrap_or(Pose::at(obj.position)),
                };
                let label = target.map(|t| t.id).unwrap_or_else(|| format!("{}:place", obj.id));
                let place = GoalTarget { label, pose };
                if obj.held {
                    Ok(vec![place])
                } else {
                    Ok(vec![grasp_goal()?, place])
                }
            }
            "pushObject" => {
                let pose = obj.grasps.get("push").copied().unwrap_or(Pose::at(obj.position));
                Ok(vec![GoalTarget {
                    label: format!("{}:push", obj.id),
                    pose,
                }])
            }
            other => Err(ResolveError::UnknownAction(other.to_string())),
        }
    }

    /// `side` when the object offers it, otherwise a seeded pick.
    fn default_grasp(&self, obj: &WorldObject) -> Result<String, ResolveError> {
        if obj.grasps.contains_key("side") {
            return Ok("side".into());
        }
        // a push contact is not a grasp
        let names: Vec<&String> = obj.grasps.keys().filter(|k| k.as_str() != "push").collect();
        if names.is_empty() {
            return Err(ResolveError::NoGoal(obj.id.clone()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok(names[rng.random_range(0..names.len())].clone())
    }
}

fn world_name(world: &WorldSnapshot, id: &str) -> String {
    world.object(id).map(|o| o.name.clone()).unwrap_or_default()
}

/// Zone named by `avoid(move(listener, over(laptop)))`.
fn avoid_zone(f: &SemanticFrame, world: &WorldSnapshot) -> Result<String, ResolveError> {
    fn find_relation(f: &SemanticFrame) -> Option<(&str, &str)> {
        for a in &f.args {
            if let Term::Frame(g) = a {
                if let (1, Some(Term::Sym(obj))) = (g.args.len(), g.args.first()) {
                    return Some((g.predicate.as_str(), obj.as_str()));
                }
                if let Some(found) = find_relation(g) {
                    return Some(found);
                }
            }
        }
        None
    }
    let (relation, object) =
        find_relation(f).ok_or_else(|| ResolveError::UnresolvedReferent(f.to_string()))?;
    world
        .zones
        .iter()
        .find(|z| z.object == object && z.relation == relation)
        .map(|z| z.id.clone())
        .ok_or_else(|| ResolveError::UnresolvedReferent(format!("{relation}({object})")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{best_parse, Chart};
    use crate::grammar::Dictionary;
    use crate::orchestrator::scenario::builtin_world;

    fn parse(words: &str, world: &WorldSnapshot) -> SemanticFrame {
        let dict = Dictionary::shipped();
        let mut chart = Chart::new();
        let mut last = chart.result();
        for w in words.split_whitespace() {
            last = chart.feed_word(w, &dict);
        }
        best_parse(&last, world)
            .and_then(|n| n.frame().cloned())
            .unwrap_or_else(|| panic!("no parse for `{words}`"))
    }

    fn resolve_seq(world: &WorldSnapshot, utterances: &[&str]) -> Vec<InstructionEvent> {
        let mut r = Resolver::new(7);
        let mut events: Vec<InstructionEvent> = Vec::new();
        for u in utterances {
            let e = r.resolve(&parse(u, world), world, events.last(), 0.0).unwrap();
            e.check_routing().unwrap();
            events.push(e);
        }
        events
    }

    #[test]
    fn first_event_carries_goal_only() {
        let w = builtin_world("grasp_mug").unwrap();
        let e = &resolve_seq(&w, &["grab the mug"])[0];
        assert_eq!(e.goal.as_ref().unwrap().label, "mug1:side");
        assert!(e.constraints.is_empty() && e.cost_params.is_none() && e.supersedes.is_none());
    }

    #[test]
    fn target_correction_is_a_delta() {
        let w = builtin_world("grasp_mug").unwrap();
        let ev = resolve_seq(&w, &["grab the mug", "grab the mug from the top"]);
        let e = &ev[1];
        assert_eq!(e.supersedes, Some(ev[0].id));
        assert_eq!(e.kinds(), vec![ConstraintKind::Target]);
        assert_eq!(e.goal.as_ref().unwrap().label, "mug1:top");
    }

    #[test]
    fn repeating_a_parse_is_no_change() {
        let w = builtin_world("grasp_mug").unwrap();
        let mut r = Resolver::new(7);
        let p = parse("grab the mug", &w);
        let first = r.resolve(&p, &w, None, 0.0).unwrap();
        assert_eq!(r.resolve(&p, &w, Some(&first), 1.0), Err(ResolveError::NoChange));
    }

    #[test]
    fn upright_and_spill_bound_orientation() {
        let w = builtin_world("handover_laptop").unwrap();
        for u in ["pass the mug but keep it upright", "pass the mug but don't spill it"] {
            let ev = resolve_seq(&w, &["pass the mug", u]);
            assert_eq!(ev[1].kinds(), vec![ConstraintKind::Safety]);
            assert_eq!(ev[1].orientation_bound(), Some([UPRIGHT_BOUND; 2]));
            assert!(ev[1].goal.is_none());
        }
    }

    #[test]
    fn avoid_names_the_zone() {
        let w = builtin_world("handover_laptop").unwrap();
        let ev = resolve_seq(&w, &["pass the mug", "pass the mug but avoid going over the laptop"]);
        assert_eq!(ev[1].keepouts().collect::<Vec<_>>(), vec!["over_laptop"]);
    }

    #[test]
    fn faster_scales_speed() {
        let w = builtin_world("screwdriver").unwrap();
        let ev = resolve_seq(&w, &["hand me the screwdriver", "hand me the screwdriver but move faster"]);
        assert_eq!(ev[1].kinds(), vec![ConstraintKind::Manner]);
        assert_eq!(ev[1].cost_params.unwrap().speed_weight, FASTER_FACTOR);
        assert!(ev[1].goal.is_none());
    }

    #[test]
    fn object_correction_switches_referent() {
        let w = builtin_world("tabletop").unwrap();
        let ev = resolve_seq(&w, &["grab the mug", "grab the mug no the blue one"]);
        assert_eq!(ev[1].kinds(), vec![ConstraintKind::Object]);
        assert_eq!(ev[1].intent.object, "mug2");
    }

    #[test]
    fn destination_correction_keeps_the_object() {
        let w = builtin_world("tabletop").unwrap();
        let ev = resolve_seq(&w, &["put the apple in the box", "put the apple in the box no the one on the right"]);
        assert_eq!(ev[1].intent.object, "apple1");
        let labels: Vec<_> = ev[1].intent.goals.iter().map(|g| g.label.as_str()).collect();
        assert_eq!(labels.last(), Some(&"box_right"));
    }

    #[test]
    fn action_correction_and_anaphora() {
        let w = builtin_world("tabletop").unwrap();
        let ev = resolve_seq(&w, &["grab the apple", "grab the apple no push it"]);
        assert_eq!(ev[1].kinds(), vec![ConstraintKind::Action]);
        assert_eq!(ev[1].intent.object, "apple1");
        assert_eq!(ev[1].goal.as_ref().unwrap().label, "apple1:push");
        assert_ne!(ev[0].goal.as_ref().unwrap().label, "apple1:push");
    }

    #[test]
    fn sequential_orders_goals() {
        let w = builtin_world("tabletop").unwrap();
        let e = &resolve_seq(&w, &["grab the cup after you put down the apple"])[0];
        assert_eq!(e.kinds(), vec![ConstraintKind::Sequential]);
        let labels: Vec<_> = e.intent.goals.iter().map(|g| g.label.as_str()).collect();
        assert_eq!(labels.last(), Some(&"cup1:side"));
        assert!(labels[..labels.len() - 1].iter().all(|l| l.starts_with("apple1")));
    }

    #[test]
    fn unknown_object_is_unresolved() {
        let w = builtin_world("grasp_mug").unwrap();
        let r = Resolver::new(0);
        let f = SemanticFrame::new(
            "INSTRUCT",
            vec![
                Term::sym("speaker"),
                Term::sym("listener"),
                Term::Frame(SemanticFrame::new("graspObject", vec![Term::sym("listener"), Term::sym("banana")])),
            ],
        );
        assert!(matches!(r.interpret(&f, &w, None), Err(ResolveError::UnresolvedReferent(_))));
    }

    #[test]
    fn seeded_choice_is_stable() {
        let w = builtin_world("tabletop").unwrap();
        let a = ground_referent(&Term::sym("box"), &w, 3).unwrap();
        for _ in 0..5 {
            assert_eq!(ground_referent(&Term::sym("box"), &w, 3).unwrap(), a);
        }
        let right = Term::Frame(SemanticFrame::new("located", vec![Term::sym("box"), Term::sym("right")]));
        assert_eq!(ground_referent(&right, &w, 3).unwrap(), "box_right");
    }
}
