#![allow(dead_code)]

use std::path::{Path, PathBuf};

use atomnav::builder::{BuilderConfig, MapBuilder};
use atomnav::exploration::{explore, scan_in_place, ExploreConfig, VisitLog};
use atomnav::scene::AtomMap;
use atomnav::sim::{OracleVlm, SceneSpec, SimAgent, SimCamera};

pub fn scenes_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/scenes")
}

pub fn scene_paths() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(scenes_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    v.sort();
    v
}

pub fn scene(name: &str) -> SceneSpec {
    SceneSpec::load(&scenes_dir().join(format!("{name}.json"))).unwrap()
}

/// Scan at the start pose, then explore with at most `budget` visits.
pub fn run_explore(scene: &SceneSpec, budget: usize) -> (AtomMap, VisitLog) {
    let vlm = OracleVlm::new(scene.clone(), 0.0, scene.rng_seed);
    let mut builder = MapBuilder::new(BuilderConfig::default(), &vlm).unwrap();
    let mut agent = SimAgent::at_start(scene, SimCamera::default());
    let cfg = ExploreConfig {
        max_visits: budget,
        ..ExploreConfig::default()
    };
    scan_in_place(&mut agent, &mut builder, cfg.scan_steps).unwrap();
    let log = explore(&mut agent, &mut builder, &cfg).unwrap();
    (builder.into_map(), log)
}

use atomnav::geometry::Pose3;
use atomnav::render::Sidecar;
use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};

/// Planar rigid motion: rotation by `theta` about +Z, then translation.
#[derive(Debug, Clone, Copy)]
pub struct Planar {
    pub theta: f64,
    pub t: [f64; 2],
}

impl Planar {
    pub fn point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let (s, c) = self.theta.sin_cos();
        Vector3::new(c * p.x - s * p.y + self.t[0], s * p.x + c * p.y + self.t[1], p.z)
    }

    pub fn vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let (s, c) = self.theta.sin_cos();
        Vector3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
    }

    pub fn pose(&self, p: &Pose3) -> Pose3 {
        let g = Isometry3::from_parts(
            Translation3::new(self.t[0], self.t[1], 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.theta),
        );
        let m = g * p.to_isometry();
        Pose3::new(m.translation.vector, m.rotation)
    }

    pub fn map(&self, m: &AtomMap) -> AtomMap {
        let mut out = m.clone();
        for s in &mut out.signs {
            s.centroid = self.point(&s.centroid);
            s.normal = self.vector(&s.normal);
        }
        for s in &mut out.structures {
            s.bbox.center = self.point(&s.bbox.center);
            s.bbox.yaw += self.theta;
            s.fused_cloud = s.fused_cloud.map(|p| self.point(p));
        }
        out.path_cloud = m.path_cloud.map(|p| self.point(p));
        for e in &mut out.frame_log {
            e.pose = self.pose(&e.pose);
        }
        out
    }
}

fn angle_mod_pi(a: f64) -> f64 {
    let r = a.rem_euclid(std::f64::consts::PI);
    r.min(std::f64::consts::PI - r)
}

/// Largest coordinate difference between two sidecars, or `None` when their
/// structure differs (vertex, frontier or box counts, letters, labels).
pub fn sidecar_distance(a: &Sidecar, b: &Sidecar) -> Option<f64> {
    if a.polygon.len() != b.polygon.len() || a.frontiers.len() != b.frontiers.len() || a.boxes.len() != b.boxes.len() {
        return None;
    }
    let mut d: f64 = 0.0;
    for (p, q) in a.polygon.iter().zip(&b.polygon) {
        d = d.max((p - q).norm());
    }
    for (f, g) in a.frontiers.iter().zip(&b.frontiers) {
        if f.letter != g.letter {
            return None;
        }
        d = d.max((f.point - g.point).norm());
    }
    for (x, y) in a.boxes.iter().zip(&b.boxes) {
        if x.class_label != y.class_label {
            return None;
        }
        d = d.max((x.center - y.center).norm());
        d = d.max((x.half_extents - y.half_extents).norm());
        d = d.max(angle_mod_pi(x.yaw - y.yaw));
    }
    Some(d)
}

impl Planar {
    fn xy(&self, p: &[f64; 2]) -> [f64; 2] {
        let q = self.point(&Vector3::new(p[0], p[1], 0.0));
        [q.x, q.y]
    }

    /// The same scene moved rigidly.
    pub fn scene(&self, s: &SceneSpec) -> SceneSpec {
        let mut out = s.clone();
        for poly in &mut out.ground {
            for p in poly.iter_mut() {
                *p = self.xy(p);
            }
        }
        for b in &mut out.branches {
            for p in b.polyline.iter_mut() {
                *p = self.xy(p);
            }
            b.entrance = self.xy(&b.entrance);
        }
        for sg in &mut out.signs {
            let c = self.point(&Vector3::from(sg.position));
            sg.position = [c.x, c.y, c.z];
            let n = self.vector(&Vector3::new(sg.normal[0], sg.normal[1], 0.0));
            sg.normal = [n.x, n.y];
        }
        for st in &mut out.structures {
            st.center = self.xy(&st.center);
            st.yaw += self.theta;
        }
        for o in &mut out.occluders {
            o.a = self.xy(&o.a);
            o.b = self.xy(&o.b);
        }
        for v in [&mut out.start, &mut out.overview].into_iter().flatten() {
            v.position = self.xy(&v.position);
            v.yaw += self.theta;
        }
        out
    }
}
