//! Scene description: navigable ground, labelled branches, signs, structures
//! and occluding walls.

use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::grounding::{select_geometric, Candidate, Choice};
use crate::render::{is_simple, SignFrame};
use crate::scene::{normalize_phrase, Instruction, NavCueSet};

/// Branch entrances may sit this far from the ground boundary.
const ENTRANCE_TOL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub name: String,
    /// From the junction outwards; the last point is usually the entrance.
    pub polyline: Vec<[f64; 2]>,
    pub entrance: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CueSpec {
    pub location: String,
    pub instruction: Instruction,
    /// Branch or structure the cue actually leads to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignSpec {
    /// Centre of the sign face.
    pub position: [f64; 3],
    /// Horizontal outward normal of the readable face.
    pub normal: [f64; 2],
    /// Width and height in metres.
    pub size: [f64; 2],
    pub cues: Vec<CueSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureSpec {
    pub name: String,
    pub class_label: String,
    pub center: [f64; 2],
    pub half_extents: [f64; 2],
    #[serde(default)]
    pub yaw: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccluderSpec {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartSpec {
    pub position: [f64; 2],
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub ground: Vec<Vec<[f64; 2]>>,
    pub branches: Vec<BranchSpec>,
    pub signs: Vec<SignSpec>,
    #[serde(default)]
    pub structures: Vec<StructureSpec>,
    #[serde(default)]
    pub occluders: Vec<OccluderSpec>,
    /// Agent start; defaults to the first sign's reading viewpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<StartSpec>,
    /// Extra vantage point scanned by generated benchmarks, typically one
    /// that keeps several branches in view at once.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overview: Option<StartSpec>,
    #[serde(default)]
    pub rng_seed: u64,
}

/// Something a cue can lead to.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub name: String,
    pub kind: ElementKind,
    /// Entrance for branches, footprint centre for structures.
    pub point: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ElementKind {
    Branch(usize),
    Structure(usize),
}

pub(crate) fn v2(p: &[f64; 2]) -> Vector2<f64> {
    Vector2::new(p[0], p[1])
}

fn point_in_polygon(poly: &[[f64; 2]], p: &Vector2<f64>) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (v2(&poly[i]), v2(&poly[(i + 1) % n]));
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn segment_distance(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let ab = b - a;
    let t = if ab.norm_squared() == 0.0 {
        0.0
    } else {
        ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0)
    };
    (a + ab * t - p).norm()
}

/// Distance from `p` to a polyline.
pub fn polyline_distance(line: &[[f64; 2]], p: &Vector2<f64>) -> f64 {
    match line.len() {
        0 => f64::INFINITY,
        1 => (v2(&line[0]) - p).norm(),
        _ => line
            .windows(2)
            .map(|w| segment_distance(p, &v2(&w[0]), &v2(&w[1])))
            .fold(f64::INFINITY, f64::min),
    }
}

impl StructureSpec {
    pub fn axes(&self) -> (Vector2<f64>, Vector2<f64>) {
        let (s, c) = self.yaw.sin_cos();
        (Vector2::new(c, s), Vector2::new(-s, c))
    }

    pub fn corners(&self) -> [Vector2<f64>; 4] {
        let (ax, ay) = self.axes();
        let c = v2(&self.center);
        let (hx, hy) = (self.half_extents[0], self.half_extents[1]);
        [
            c - ax * hx - ay * hy,
            c + ax * hx - ay * hy,
            c + ax * hx + ay * hy,
            c - ax * hx + ay * hy,
        ]
    }

    pub fn contains_xy(&self, p: &Vector2<f64>) -> bool {
        let (ax, ay) = self.axes();
        let d = p - v2(&self.center);
        d.dot(&ax).abs() <= self.half_extents[0] && d.dot(&ay).abs() <= self.half_extents[1]
    }
}

impl SignSpec {
    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(self.position[0], self.position[1], self.position[2])
    }

    pub fn normal2(&self) -> Vector2<f64> {
        v2(&self.normal).normalize()
    }

    /// Frame with +Y into the sign, the reader's forward.
    pub fn frame(&self) -> SignFrame {
        SignFrame::facing(Vector2::new(self.position[0], self.position[1]), -self.normal2())
    }

    pub fn cue_set(&self) -> NavCueSet {
        let mut set = NavCueSet::new();
        for c in &self.cues {
            set.insert(&c.location, c.instruction).expect("validated cue");
        }
        set
    }

    /// Point from which the sign is read head-on at `distance` metres, offset
    /// by `azimuth` radians around the sign, with the heading facing it.
    pub fn viewpoint(&self, distance: f64, azimuth: f64) -> (Vector2<f64>, f64) {
        let n = self.normal2();
        let (s, c) = azimuth.sin_cos();
        let dir = Vector2::new(n.x * c - n.y * s, n.x * s + n.y * c);
        let p = Vector2::new(self.position[0], self.position[1]) + dir * distance;
        (p, (-dir.y).atan2(-dir.x))
    }
}

impl SceneSpec {
    pub fn from_json(bytes: &[u8]) -> Result<Self, SimError> {
        let s: SceneSpec = serde_json::from_slice(bytes).map_err(|e| SimError::InvalidScene(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let bytes = std::fs::read(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&bytes).map_err(|e| match e {
            SimError::InvalidScene(m) => SimError::InvalidScene(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("scene serializes");
        v.push(b'\n');
        v
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScene(m));
        if self.ground.is_empty() {
            return bad("no ground polygons".into());
        }
        for (i, g) in self.ground.iter().enumerate() {
            let poly: Vec<Vector2<f64>> = g.iter().map(v2).collect();
            if poly.len() < 3 || !is_simple(&poly) {
                return bad(format!("ground polygon {i} is not simple"));
            }
        }
        let mut names: Vec<&str> = self
            .branches
            .iter()
            .map(|b| b.name.as_str())
            .chain(self.structures.iter().map(|s| s.name.as_str()))
            .collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("branch and structure names must be unique".into());
        }
        for b in &self.branches {
            if b.polyline.is_empty() {
                return bad(format!("branch {} has an empty polyline", b.name));
            }
            if self.boundary_distance(&v2(&b.entrance)) > ENTRANCE_TOL {
                return bad(format!("entrance of branch {} is off the ground boundary", b.name));
            }
        }
        for s in &self.structures {
            if s.half_extents.iter().any(|h| *h <= 0.0) || s.height <= 0.0 {
                return bad(format!("structure {} has a degenerate box", s.name));
            }
        }
        for (i, s) in self.signs.iter().enumerate() {
            if v2(&s.normal).norm() < 1e-9 || s.size.iter().any(|d| *d <= 0.0) {
                return bad(format!("sign {i} has a degenerate normal or size"));
            }
            for c in &s.cues {
                if normalize_phrase(&c.location).is_empty() {
                    return bad(format!("sign {i} has an empty cue location"));
                }
                if let Some(t) = &c.target {
                    if self.element(t).is_none() {
                        return bad(format!("sign {i}: unknown cue target {t}"));
                    }
                }
            }
        }
        for o in &self.occluders {
            if o.height <= 0.0 || v2(&o.a) == v2(&o.b) {
                return bad("degenerate occluder".into());
            }
        }
        for (what, st) in [("start", &self.start), ("overview", &self.overview)] {
            if st.is_some_and(|st| !self.walkable(&v2(&st.position))) {
                return bad(format!("{what} lies outside the ground"));
            }
        }
        Ok(())
    }

    /// Whether `p` is on navigable ground.
    pub fn in_ground(&self, p: &Vector2<f64>) -> bool {
        self.ground.iter().any(|g| point_in_polygon(g, p))
    }

    /// Navigable and not inside a structure footprint.
    pub fn walkable(&self, p: &Vector2<f64>) -> bool {
        self.in_ground(p) && !self.structures.iter().any(|s| s.contains_xy(p))
    }

    fn boundary_distance(&self, p: &Vector2<f64>) -> f64 {
        self.ground
            .iter()
            .map(|g| {
                let mut ring = g.clone();
                ring.push(g[0]);
                polyline_distance(&ring, p)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn elements(&self) -> Vec<Element> {
        let mut out: Vec<Element> = self
            .branches
            .iter()
            .enumerate()
            .map(|(i, b)| Element {
                name: b.name.clone(),
                kind: ElementKind::Branch(i),
                point: v2(&b.entrance),
            })
            .collect();
        out.extend(self.structures.iter().enumerate().map(|(i, s)| Element {
            name: s.name.clone(),
            kind: ElementKind::Structure(i),
            point: v2(&s.center),
        }));
        out
    }

    pub fn element(&self, name: &str) -> Option<Element> {
        self.elements().into_iter().find(|e| e.name == name)
    }

    /// Where the agent starts: explicit, or reading the first sign.
    pub fn start_pose(&self) -> (Vector2<f64>, f64) {
        match (&self.start, self.signs.first()) {
            (Some(s), _) => (v2(&s.position), s.yaw),
            (None, Some(sign)) => sign.viewpoint(2.5, 0.0),
            (None, None) => (Vector2::zeros(), 0.0),
        }
    }

    /// Index of the sign whose centre is nearest `p` in the plane.
    pub fn nearest_sign(&self, p: &Vector2<f64>) -> Option<usize> {
        self.signs
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = (Vector2::new(a.1.position[0], a.1.position[1]) - p).norm();
                let db = (Vector2::new(b.1.position[0], b.1.position[1]) - p).norm();
                da.total_cmp(&db)
            })
            .map(|(i, _)| i)
    }

    /// The grounding rule applied to the true elements, seen in `frame`.
    pub fn ground_truth_rule(&self, frame: &SignFrame, instruction: Instruction) -> Option<Element> {
        let elements = self.elements();
        let cands: Vec<Candidate<usize>> = elements
            .iter()
            .enumerate()
            .map(|(i, e)| Candidate {
                id: i,
                point: frame.to_local(&e.point),
                class_label: match e.kind {
                    ElementKind::Structure(s) => Some(self.structures[s].class_label.clone()),
                    ElementKind::Branch(_) => None,
                },
            })
            .collect();
        match select_geometric(&cands, instruction) {
            Ok(Choice::Element(i, _)) => Some(elements[i].clone()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> SceneSpec {
        SceneSpec {
            name: "room".into(),
            description: String::new(),
            ground: vec![vec![[-2.0, -2.0], [2.0, -2.0], [2.0, 2.0], [-2.0, 2.0]]],
            branches: vec![BranchSpec {
                name: "door".into(),
                polyline: vec![[0.0, 0.0], [0.0, 2.0]],
                entrance: [0.0, 2.0],
            }],
            signs: vec![],
            structures: vec![],
            occluders: vec![],
            start: None,
            overview: None,
            rng_seed: 0,
        }
    }

    #[test]
    fn ground_membership() {
        let s = square();
        assert!(s.in_ground(&Vector2::new(0.0, 0.0)));
        assert!(!s.in_ground(&Vector2::new(3.0, 0.0)));
        s.validate().unwrap();
    }

    #[test]
    fn entrance_must_touch_boundary() {
        let mut s = square();
        s.branches[0].entrance = [0.0, 1.0];
        assert!(matches!(s.validate(), Err(SimError::InvalidScene(_))));
    }

    #[test]
    fn viewpoint_faces_sign() {
        let sign = SignSpec {
            position: [0.0, 2.0, 2.0],
            normal: [0.0, -1.0],
            size: [1.0, 0.6],
            cues: vec![],
        };
        let (p, yaw) = sign.viewpoint(2.5, 0.0);
        assert!((p - Vector2::new(0.0, -0.5)).norm() < 1e-12);
        assert!((yaw - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let f = sign.frame();
        assert!((f.y_axis - Vector2::new(0.0, 1.0)).norm() < 1e-12);
    }
}
