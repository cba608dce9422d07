//! Known environment: graspable objects, obstacles, keep-out zones, and the
//! convex-region geometry shared by the planner and the controller.

use std::collections::BTreeMap;

use nalgebra::{Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

/// Membership tolerance in metres.
pub const REGION_TOL: f64 = 1e-9;

/// `{p : normal . p <= offset}` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec3,
    pub offset: f64,
}

impl Halfspace {
    /// Normalizes the normal; `None` for a zero normal.
    pub fn new(normal: Vec3, offset: f64) -> Option<Self> {
        let n = normal.norm();
        if n < 1e-12 || !n.is_finite() || !offset.is_finite() {
            return None;
        }
        Some(Halfspace {
            normal: normal / n,
            offset: offset / n,
        })
    }

    pub fn violation(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Intersection of halfspaces.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexRegion {
    halfspaces: Vec<Halfspace>,
}

impl ConvexRegion {
    pub fn from_halfspaces(halfspaces: Vec<Halfspace>) -> Self {
        ConvexRegion { halfspaces }
    }

    pub fn from_bounds(min: Vec3, max: Vec3) -> Self {
        let mut hs = Vec::with_capacity(6);
        for i in 0..3 {
            let mut e = Vec3::zeros();
            e[i] = 1.0;
            hs.push(Halfspace {
                normal: e,
                offset: max[i],
            });
            hs.push(Halfspace {
                normal: -e,
                offset: -min[i],
            });
        }
        ConvexRegion { halfspaces: hs }
    }

    pub fn from_center(center: Vec3, half_extent: Vec3) -> Self {
        Self::from_bounds(center - half_extent, center + half_extent)
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    /// Drops the halfspace at `index`.
    pub fn without(&self, index: usize) -> Self {
        let mut hs = self.halfspaces.clone();
        hs.remove(index);
        ConvexRegion { halfspaces: hs }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.halfspaces.iter().all(|h| h.violation(p) <= REGION_TOL)
    }

    /// Largest halfspace violation at `p` (<= 0 inside).
    pub fn max_violation(&self, p: &Vec3) -> f64 {
        self.halfspaces
            .iter()
            .map(|h| h.violation(p))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(min, max)` when the region is an axis-aligned box given by exactly
    /// one upper and one lower bound per axis.
    pub fn as_box(&self) -> Option<(Vec3, Vec3)> {
        let mut min = Vec3::repeat(f64::NAN);
        let mut max = Vec3::repeat(f64::NAN);
        for h in &self.halfspaces {
            let axis = (0..3).find(|&i| (h.normal[i].abs() - 1.0).abs() < 1e-12)?;
            if h.normal[axis] > 0.0 {
                if !max[axis].is_nan() {
                    return None;
                }
                max[axis] = h.offset;
            } else {
                if !min[axis].is_nan() {
                    return None;
                }
                min[axis] = -h.offset;
            }
        }
        if min.iter().chain(max.iter()).any(|v| v.is_nan()) {
            return None;
        }
        Some((min, max))
    }

    /// Axis-aligned bounds of a bounded, nonempty region.
    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        if let Some(b) = self.as_box() {
            return Some(b);
        }
        let hs = &self.halfspaces;
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for i in 0..hs.len() {
            for j in i + 1..hs.len() {
                for k in j + 1..hs.len() {
                    let a = nalgebra::Matrix3::from_rows(&[
                        hs[i].normal.transpose(),
                        hs[j].normal.transpose(),
                        hs[k].normal.transpose(),
                    ]);
                    let rhs = Vec3::new(hs[i].offset, hs[j].offset, hs[k].offset);
                    if a.determinant().abs() < 1e-12 {
                        continue;
                    }
                    let Some(v) = a.lu().solve(&rhs) else { continue };
                    if hs.iter().all(|h| h.violation(&v) <= 1e-9) {
                        lo = lo.inf(&v);
                        hi = hi.sup(&v);
                    }
                }
            }
        }
        (lo.x <= hi.x).then_some((lo, hi))
    }

    pub fn center(&self) -> Option<Vec3> {
        if let Some((lo, hi)) = self.as_box() {
            return Some((lo + hi) / 2.0);
        }
        chebyshev(&self.halfspaces).map(|(p, _)| p)
    }

    /// True when the region has no recession direction.
    pub fn is_bounded(&self) -> bool {
        if self.as_box().is_some() {
            return true;
        }
        let ns: Vec<Vec3> = self.halfspaces.iter().map(|h| h.normal).collect();
        if ns.len() < 4 {
            return false;
        }
        // rank < 3 leaves a free direction
        let full_rank = ns.iter().enumerate().any(|(i, a)| {
            ns.iter().enumerate().skip(i + 1).any(|(j, b)| {
                ns.iter()
                    .skip(j + 1)
                    .any(|c| a.cross(b).dot(c).abs() > 1e-9)
            })
        });
        if !full_rank {
            return false;
        }
        // extreme rays of {d : N d <= 0} lie on pairwise plane intersections
        for (i, a) in ns.iter().enumerate() {
            for b in ns.iter().skip(i + 1) {
                let d = a.cross(b);
                if d.norm() < 1e-9 {
                    continue;
                }
                for dir in [d, -d] {
                    if ns.iter().all(|n| n.dot(&dir) <= 1e-9) {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn is_nonempty(&self) -> bool {
        intersect_nonempty(self, self).is_some()
    }

    /// Minkowski-style growth of every face by `margin`.
    pub fn inflated(&self, margin: f64) -> Self {
        ConvexRegion {
            halfspaces: self
                .halfspaces
                .iter()
                .map(|h| Halfspace {
                    normal: h.normal,
                    offset: h.offset + margin,
                })
                .collect(),
        }
    }

    pub fn spec(&self) -> RegionSpec {
        match self.as_box() {
            Some((min, max)) => RegionSpec::Bounds { min, max },
            None => RegionSpec::Halfspaces {
                halfspaces: self.halfspaces.clone(),
            },
        }
    }
}

impl Serialize for ConvexRegion {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.spec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConvexRegion {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        RegionSpec::deserialize(d)?
            .into_region()
            .map_err(serde::de::Error::custom)
    }
}

/// On-disk region forms: a box by centre and half extents, a box by
/// corners, or a general halfspace list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegionSpec {
    Center { center: Vec3, half_extent: Vec3 },
    Bounds { min: Vec3, max: Vec3 },
    Halfspaces { halfspaces: Vec<Halfspace> },
}

impl RegionSpec {
    pub fn into_region(self) -> Result<ConvexRegion, String> {
        match self {
            RegionSpec::Center {
                center,
                half_extent,
            } => {
                if half_extent.iter().any(|h| !(*h >= 0.0)) {
                    return Err("half extents must be non-negative".into());
                }
                Ok(ConvexRegion::from_center(center, half_extent))
            }
            RegionSpec::Bounds { min, max } => {
                if (0..3).any(|i| !(min[i] <= max[i])) {
                    return Err("box min exceeds max".into());
                }
                Ok(ConvexRegion::from_bounds(min, max))
            }
            RegionSpec::Halfspaces { halfspaces } => halfspaces
                .into_iter()
                .map(|h| Halfspace::new(h.normal, h.offset).ok_or("zero or non-finite normal"))
                .collect::<Result<Vec<_>, _>>()
                .map(ConvexRegion::from_halfspaces)
                .map_err(str::to_string),
        }
    }
}

/// A point in `a ∩ b`, or `None` when the intersection is empty.
///
/// Boxes are intersected directly; general regions minimize the largest
/// constraint violation (a small linear program solved by vertex enumeration).
pub fn intersect_nonempty(a: &ConvexRegion, b: &ConvexRegion) -> Option<Vec3> {
    if let (Some((alo, ahi)), Some((blo, bhi))) = (a.as_box(), b.as_box()) {
        let lo = alo.sup(&blo);
        let hi = ahi.inf(&bhi);
        if (0..3).all(|i| lo[i] <= hi[i] + REGION_TOL) {
            return Some((lo + hi) / 2.0);
        }
        return None;
    }
    let mut hs = a.halfspaces.clone();
    hs.extend_from_slice(&b.halfspaces);
    let (p, _) = chebyshev(&hs)?;
    if a.contains(&p) && b.contains(&p) {
        Some(p)
    } else {
        None
    }
}

/// Minimizes `t` subject to `n_i . p - b_i <= t` by enumerating vertices of
/// the lifted polyhedron. Returns the minimizer and the optimal `t`.
fn chebyshev(hs: &[Halfspace]) -> Option<(Vec3, f64)> {
    let m = hs.len();
    if m < 4 {
        return None;
    }
    let mut best: Option<(Vec3, f64)> = None;
    let mut idx = [0usize; 4];
    for i0 in 0..m {
        idx[0] = i0;
        for i1 in i0 + 1..m {
            idx[1] = i1;
            for i2 in i1 + 1..m {
                idx[2] = i2;
                for i3 in i2 + 1..m {
                    idx[3] = i3;
                    let mut a = Matrix4::zeros();
                    let mut rhs = Vector4::zeros();
                    for (r, &k) in idx.iter().enumerate() {
                        let h = &hs[k];
                        a[(r, 0)] = h.normal.x;
                        a[(r, 1)] = h.normal.y;
                        a[(r, 2)] = h.normal.z;
                        a[(r, 3)] = -1.0;
                        rhs[r] = h.offset;
                    }
                    let Some(sol) = a.lu().solve(&rhs) else {
                        continue;
                    };
                    let p = Vec3::new(sol[0], sol[1], sol[2]);
                    let t = sol[3];
                    if !t.is_finite() || !p.iter().all(|v| v.is_finite()) {
                        continue;
                    }
                    let feasible = hs.iter().all(|h| h.violation(&p) <= t + 1e-9);
                    if feasible && best.is_none_or(|(_, bt)| t < bt - 1e-15) {
                        best = Some((p, t));
                    }
                }
            }
        }
    }
    best
}

/// Position plus the two orientation-error angles relative to upright.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    #[serde(default)]
    pub orientation: [f64; 2],
}

impl Pose {
    pub fn at(position: Vec3) -> Self {
        Pose {
            position,
            orientation: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldObject {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    pub position: Vec3,
    /// Named end-effector poses for grasping (`side`, `top`, `handle`, ...).
    #[serde(default)]
    pub grasps: BTreeMap<String, Pose>,
    /// Where the object is set down.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub place: Option<Pose>,
    /// Collision body; ignored while the object is held.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<ConvexRegion>,
    #[serde(default)]
    pub held: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub id: String,
    pub name: String,
    pub region: ConvexRegion,
}

/// A region that becomes a keep-out only when an instruction asks for it,
/// e.g. the space over an object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: String,
    pub name: String,
    /// Name of the object the zone is defined relative to.
    pub object: String,
    /// Spatial relation word, e.g. `over`.
    pub relation: String,
    pub region: ConvexRegion,
}

pub const WORLD_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSnapshot {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default)]
    pub name: String,
    pub workspace: ConvexRegion,
    #[serde(default)]
    pub objects: Vec<WorldObject>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub zones: Vec<Zone>,
    /// Named fixed poses such as a handover location.
    #[serde(default)]
    pub locations: BTreeMap<String, Pose>,
}

fn default_version() -> u32 {
    WORLD_SCHEMA_VERSION
}

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("world schema violation: {0}")]
    Schema(String),
    #[error("unsupported world schema version {0}")]
    Version(u32),
    #[error("object `{0}` lies outside the workspace")]
    OutsideWorkspace(String),
    #[error("region of `{0}` is unbounded or empty")]
    BadRegion(String),
}

impl WorldSnapshot {
    pub fn empty(workspace: ConvexRegion) -> Self {
        WorldSnapshot {
            version: WORLD_SCHEMA_VERSION,
            name: String::new(),
            workspace,
            objects: Vec::new(),
            obstacles: Vec::new(),
            zones: Vec::new(),
            locations: BTreeMap::new(),
        }
    }

    pub fn object(&self, id: &str) -> Option<&WorldObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn zone(&self, id: &str) -> Option<&Zone> {
        self.zones.iter().find(|z| z.id == id)
    }

    /// Regions the end effector must never enter regardless of instructions.
    pub fn static_obstacles(&self) -> Vec<ConvexRegion> {
        let mut out: Vec<ConvexRegion> = self.obstacles.iter().map(|o| o.region.clone()).collect();
        out.extend(
            self.objects
                .iter()
                .filter(|o| !o.held)
                .filter_map(|o| o.body.clone()),
        );
        out
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if self.version != WORLD_SCHEMA_VERSION {
            return Err(WorldError::Version(self.version));
        }
        if !self.workspace.is_bounded() || !self.workspace.is_nonempty() {
            return Err(WorldError::BadRegion("workspace".into()));
        }
        for o in &self.objects {
            if !self.workspace.contains(&o.position) {
                return Err(WorldError::OutsideWorkspace(o.id.clone()));
            }
        }
        let regions = self
            .obstacles
            .iter()
            .map(|o| (&o.id, &o.region))
            .chain(self.zones.iter().map(|z| (&z.id, &z.region)))
            .chain(
                self.objects
                    .iter()
                    .filter_map(|o| o.body.as_ref().map(|b| (&o.id, b))),
            );
        for (id, r) in regions {
            if !r.is_bounded() || !r.is_nonempty() {
                return Err(WorldError::BadRegion(id.clone()));
            }
        }
        Ok(())
    }
}

/// Parses and validates a world document.
pub fn load_world(source: &str) -> Result<WorldSnapshot, WorldError> {
    let world: WorldSnapshot =
        serde_json::from_str(source).map_err(|e| WorldError::Schema(e.to_string()))?;
    world.validate()?;
    Ok(world)
}

pub fn contains(region: &ConvexRegion, point: &Vec3) -> bool {
    region.contains(point)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> ConvexRegion {
        ConvexRegion::from_center(Vec3::zeros(), Vec3::repeat(1.0))
    }

    #[test]
    fn box_membership() {
        let b = unit_box();
        assert!(b.contains(&Vec3::zeros()));
        assert!(!b.contains(&Vec3::new(2.0, 0.0, 0.0)));
        assert!(b.contains(&Vec3::new(1.0 + 5e-10, 0.0, 0.0)));
        assert!(!b.contains(&Vec3::new(1.0 + 1e-8, 0.0, 0.0)));
    }

    #[test]
    fn overlapping_boxes_have_a_witness() {
        let a = unit_box();
        let b = ConvexRegion::from_center(Vec3::new(0.5, 0.0, 0.0), Vec3::repeat(1.0));
        let w = intersect_nonempty(&a, &b).unwrap();
        assert!(a.contains(&w) && b.contains(&w));
        let far = ConvexRegion::from_center(Vec3::new(10.0, 0.0, 0.0), Vec3::repeat(1.0));
        assert!(intersect_nonempty(&a, &far).is_none());
        let w = intersect_nonempty(&a, &a).unwrap();
        assert!(a.contains(&w));
    }

    #[test]
    fn general_regions_use_lp_witness() {
        // tetrahedron x,y,z >= 0, x+y+z <= 1
        let tet = ConvexRegion::from_halfspaces(vec![
            Halfspace::new(Vec3::new(-1.0, 0.0, 0.0), 0.0).unwrap(),
            Halfspace::new(Vec3::new(0.0, -1.0, 0.0), 0.0).unwrap(),
            Halfspace::new(Vec3::new(0.0, 0.0, -1.0), 0.0).unwrap(),
            Halfspace::new(Vec3::new(1.0, 1.0, 1.0), 1.0).unwrap(),
        ]);
        assert!(tet.is_bounded());
        let w = intersect_nonempty(&tet, &tet).unwrap();
        assert!(tet.max_violation(&w) < 0.0, "Chebyshev centre is interior");
        let shifted = ConvexRegion::from_center(Vec3::new(0.9, 0.9, 0.9), Vec3::repeat(0.2));
        assert!(intersect_nonempty(&tet, &shifted).is_none());
        assert!(intersect_nonempty(&shifted, &tet).is_none());
        let touching = ConvexRegion::from_center(Vec3::new(0.2, 0.2, 0.2), Vec3::repeat(0.1));
        let w = intersect_nonempty(&tet, &touching).unwrap();
        assert!(tet.contains(&w) && touching.contains(&w));
    }

    #[test]
    fn boundedness() {
        let open = ConvexRegion::from_halfspaces(vec![
            Halfspace::new(Vec3::new(1.0, 0.0, 0.0), 1.0).unwrap(),
            Halfspace::new(Vec3::new(-1.0, 0.0, 0.0), 1.0).unwrap(),
            Halfspace::new(Vec3::new(0.0, 1.0, 0.0), 1.0).unwrap(),
            Halfspace::new(Vec3::new(0.0, -1.0, 0.0), 1.0).unwrap(),
        ]);
        assert!(!open.is_bounded());
        assert!(unit_box().is_bounded());
    }

    #[test]
    fn unit_normals_after_construction() {
        let h = Halfspace::new(Vec3::new(3.0, 4.0, 0.0), 10.0).unwrap();
        assert!((h.normal.norm() - 1.0).abs() < 1e-12);
        assert!((h.offset - 2.0).abs() < 1e-12);
        assert!(Halfspace::new(Vec3::zeros(), 1.0).is_none());
    }

    #[test]
    fn world_validation() {
        let src = r#"{"workspace": {"min": [0,0,0], "max": [1,1,1]},
            "objects": [{"id": "m", "name": "mug", "position": [2, 0, 0]}]}"#;
        assert!(matches!(load_world(src), Err(WorldError::OutsideWorkspace(_))));
        let src = r#"{"workspace": {"min": [0,0,0], "max": [1,1,1]}, "objects": []}"#;
        let w = load_world(src).unwrap();
        assert!(w.objects.is_empty());
        assert!(matches!(load_world("{"), Err(WorldError::Schema(_))));
        let src = r#"{"version": 7, "workspace": {"min": [0,0,0], "max": [1,1,1]}}"#;
        assert!(matches!(load_world(src), Err(WorldError::Version(7))));
    }

    #[test]
    fn region_json_forms() {
        let r: ConvexRegion =
            serde_json::from_str(r#"{"center": [0,0,0], "half_extent": [1,2,3]}"#).unwrap();
        let (lo, hi) = r.as_box().unwrap();
        assert_eq!(lo, Vec3::new(-1.0, -2.0, -3.0));
        assert_eq!(hi, Vec3::new(1.0, 2.0, 3.0));
        let back: ConvexRegion = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
