//! Recorded sequences and multiple-choice benchmarks generated from scenes.

use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::raycast::{observe_full, Hit, Observation, SimCamera};
use super::scene::{v2, ElementKind, SceneSpec};
use super::SimError;
use crate::geometry::project;
use crate::grounding::{ChoiceSpec, QueryFile, TruthCue};
use crate::perception::{write_sequence, Frame, Manifest};
use crate::render::letter;
use crate::scene::normalize_phrase;

/// Sign reading viewpoints as (distance, azimuth in radians).
const SIGN_VIEWS: [(f64, f64); 5] = [(2.5, 0.0), (2.0, -0.17), (3.0, 0.17), (2.2, 0.26), (2.8, -0.26)];
const SCAN_STEPS: usize = 12;
const FRAME_DT: f64 = 0.5;
/// Branch choice points are searched on the outer part of the polyline.
const BRANCH_SEARCH: f64 = 0.5;
const SAMPLE_STEP: f64 = 0.25;
const MIN_STRUCTURE_PIXELS: usize = 30;
const MARGIN_PX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryPose {
    pub position: [f64; 2],
    pub yaw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

impl TrajectoryPose {
    fn new(p: Vector2<f64>, yaw: f64) -> Self {
        Self {
            position: [p.x, p.y],
            yaw,
            t: None,
        }
    }
}

/// Render every pose of a trajectory; timestamps default to 0.5 s steps.
pub fn observe_trajectory(scene: &SceneSpec, camera: &SimCamera, trajectory: &[TrajectoryPose]) -> Result<Vec<Observation>, SimError> {
    trajectory
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let t = p.t.unwrap_or(i as f64 * FRAME_DT);
            observe_full(scene, camera, &v2(&p.position), p.yaw, t).map_err(|e| SimError::Trajectory {
                index: i,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Render a trajectory and write it as a sequence directory.
pub fn emit_sequence(scene: &SceneSpec, camera: &SimCamera, trajectory: &[TrajectoryPose], out: &Path) -> Result<Manifest, SimError> {
    let frames: Vec<Frame> = observe_trajectory(scene, camera, trajectory)?
        .into_iter()
        .map(|o| o.frame)
        .collect();
    Ok(write_sequence(out, &frames)?)
}

/// Scan at the overview point, then read every sign from a few nearby
/// viewpoints and scan in place at the first of them.
pub fn benchmark_trajectory(scene: &SceneSpec) -> Vec<TrajectoryPose> {
    let mut out = Vec::new();
    if let Some(st) = &scene.overview {
        let p = v2(&st.position);
        for k in 0..SCAN_STEPS {
            out.push(TrajectoryPose::new(p, st.yaw + std::f64::consts::TAU * k as f64 / SCAN_STEPS as f64));
        }
    }
    for sign in &scene.signs {
        let views: Vec<(Vector2<f64>, f64)> = SIGN_VIEWS
            .iter()
            .map(|&(d, az)| sign.viewpoint(d, az))
            .filter(|(p, _)| scene.walkable(p))
            .collect();
        out.extend(views.iter().map(|(p, yaw)| TrajectoryPose::new(*p, *yaw)));
        if let Some((p, yaw)) = views.first() {
            for k in 1..SCAN_STEPS {
                out.push(TrajectoryPose::new(*p, yaw + std::f64::consts::TAU * k as f64 / SCAN_STEPS as f64));
            }
        }
    }
    out
}

fn pixel_index(obs: &Observation, p: &Vector3<f64>) -> Option<(usize, [f64; 2])> {
    let k = &obs.frame.intrinsics;
    let ((u, v), _) = project(p, k, &obs.frame.pose)?;
    if u < MARGIN_PX || v < MARGIN_PX || u > k.width as f64 - MARGIN_PX || v > k.height as f64 - MARGIN_PX {
        return None;
    }
    let (ui, vi) = (u.floor() as u32, v.floor() as u32);
    Some(((vi * k.width + ui) as usize, [ui as f64 + 0.5, vi as f64 + 0.5]))
}

/// Pixel showing element `kind`, if it is visible in `obs`.
fn choice_pixel(scene: &SceneSpec, obs: &Observation, kind: &ElementKind) -> Option<[f64; 2]> {
    match *kind {
        ElementKind::Branch(b) => {
            let line: Vec<Vector2<f64>> = scene.branches[b].polyline.iter().map(v2).collect();
            let entrance = v2(&scene.branches[b].entrance);
            let mut pts = vec![entrance];
            pts.extend(line.iter().rev());
            let total: f64 = pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
            let limit = total * BRANCH_SEARCH;
            let mut walked = 0.0;
            for w in pts.windows(2) {
                let seg = (w[1] - w[0]).norm();
                let n = (seg / SAMPLE_STEP).ceil().max(1.0) as usize;
                for k in 0..n {
                    let off = seg * k as f64 / n as f64;
                    if walked + off > limit {
                        return None;
                    }
                    let p = w[0] + (w[1] - w[0]) * (off / seg.max(1e-12));
                    let p3 = Vector3::new(p.x, p.y, 0.0);
                    let Some((i, px)) = pixel_index(obs, &p3) else { continue };
                    let near = obs.points[i].is_some_and(|q| (Vector2::new(q.x, q.y) - p).norm() < 0.15);
                    if obs.hits[i] == Hit::Floor(true) && near {
                        return Some(px);
                    }
                }
                walked += seg;
            }
            None
        }
        ElementKind::Structure(s) => {
            let st = &scene.structures[s];
            let target = Vector3::new(st.center[0], st.center[1], st.height.min(2.0) / 2.0);
            let w = obs.frame.intrinsics.width;
            let mut count = 0;
            let mut best: Option<(f64, usize)> = None;
            for (i, h) in obs.hits.iter().enumerate() {
                if *h != Hit::Structure(s) {
                    continue;
                }
                count += 1;
                let d = obs.points[i].map(|q| (q - target).norm()).unwrap_or(f64::INFINITY);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, i));
                }
            }
            if count < MIN_STRUCTURE_PIXELS {
                return None;
            }
            best.map(|(_, i)| {
                let (u, v) = (i as u32 % w, i as u32 / w);
                [u as f64 + 0.5, v as f64 + 0.5]
            })
        }
    }
}

/// A generated sequence with multiple-choice queries.
pub struct Benchmark {
    pub trajectory: Vec<TrajectoryPose>,
    pub frames: Vec<Frame>,
    pub queries: Vec<QueryFile>,
}

/// One query per targeted cue, each asked on the frame that shows the most
/// elements, with three shuffled distractors.
pub fn make_benchmark(scene: &SceneSpec, camera: &SimCamera, seed: u64) -> Result<Benchmark, SimError> {
    let elements = scene.elements();
    if elements.len() < 4 {
        return Err(SimError::SceneTooSimple(format!(
            "{} groundable elements, need 4",
            elements.len()
        )));
    }
    let trajectory = benchmark_trajectory(scene);
    let obs = observe_trajectory(scene, camera, &trajectory)?;
    let visible: Vec<Vec<Option<[f64; 2]>>> = obs
        .par_iter()
        .map(|o| elements.iter().map(|e| choice_pixel(scene, o, &e.kind)).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queries = Vec::new();
    for sign in &scene.signs {
        for cue in &sign.cues {
            let Some(target) = cue.target.as_deref() else { continue };
            if cue.instruction.is_locational() {
                continue;
            }
            let ti = elements.iter().position(|e| e.name == target).expect("validated target");
            let best = visible
                .iter()
                .enumerate()
                .filter(|(_, v)| v[ti].is_some())
                .max_by(|a, b| {
                    let ca = a.1.iter().filter(|x| x.is_some()).count();
                    let cb = b.1.iter().filter(|x| x.is_some()).count();
                    ca.cmp(&cb).then(b.0.cmp(&a.0))
                });
            let Some((fi, vis)) = best else { continue };
            let mut others: Vec<usize> = (0..elements.len()).filter(|&i| i != ti && vis[i].is_some()).collect();
            if others.len() < 3 {
                continue;
            }
            others.shuffle(&mut rng);
            let mut picked = vec![ti];
            picked.extend_from_slice(&others[..3]);
            picked.shuffle(&mut rng);
            let choices: Vec<ChoiceSpec> = picked
                .iter()
                .enumerate()
                .map(|(k, &e)| ChoiceSpec {
                    id: letter(k),
                    px: vis[e].expect("visible"),
                })
                .collect();
            let truth = letter(picked.iter().position(|&e| e == ti).expect("target picked"));
            queries.push(QueryFile {
                query: cue.location.clone(),
                frame_t: obs[fi].frame.timestamp,
                choices,
                truth,
                cue: Some(TruthCue {
                    location: normalize_phrase(&cue.location),
                    instruction: cue.instruction,
                }),
            });
        }
    }
    if queries.is_empty() {
        return Err(SimError::SceneTooSimple("no frame shows a cue target with three other elements".into()));
    }
    Ok(Benchmark {
        trajectory,
        frames: obs.into_iter().map(|o| o.frame).collect(),
        queries,
    })
}

/// Lay a benchmark out as `out/sequence.json`, the frame assets,
/// `out/scene.json` and `out/queries/q000.json`...
pub fn write_benchmark(bench: &Benchmark, scene: &SceneSpec, out: &Path) -> Result<(), SimError> {
    write_sequence(out, &bench.frames)?;
    let io = |e: std::io::Error| SimError::Io(e.to_string());
    std::fs::write(out.join("scene.json"), scene.to_json()).map_err(io)?;
    let qdir = out.join("queries");
    std::fs::create_dir_all(&qdir).map_err(io)?;
    for (i, q) in bench.queries.iter().enumerate() {
        let mut bytes = serde_json::to_vec_pretty(q).expect("query serializes");
        bytes.push(b'\n');
        std::fs::write(qdir.join(format!("q{i:03}.json")), bytes).map_err(io)?;
    }
    Ok(())
}
