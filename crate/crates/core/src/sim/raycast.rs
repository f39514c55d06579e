//! Pinhole ray casting against the scene.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::scene::{v2, SceneSpec, SignSpec};
use super::SimError;
use crate::geometry::{CameraIntrinsics, Pose3};
use crate::perception::{png_io, DepthImage, Detection, Frame, RleMask, SignMask};
use crate::render::raster::{Canvas, BLACK, WHITE};

/// Text chunk carrying the scene sign index inside crop images.
pub const SIGN_KEY: &str = "atomnav-sign";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimCamera {
    pub hfov_deg: f64,
    pub width: u32,
    pub height: u32,
    /// Height of the optical centre above the floor.
    pub camera_height: f64,
    /// Metres per depth unit.
    pub depth_scale: f64,
    /// Returns beyond this many metres of z-depth are dropped.
    pub max_range: f64,
}

impl Default for SimCamera {
    fn default() -> Self {
        Self {
            hfov_deg: 90.0,
            width: 640,
            height: 480,
            camera_height: 1.2,
            depth_scale: 0.001,
            max_range: 30.0,
        }
    }
}

impl SimCamera {
    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics::from_hfov(self.hfov_deg, self.width, self.height)
    }

    pub fn pose(&self, xy: &Vector2<f64>, yaw: f64) -> Pose3 {
        Pose3::camera_looking(Vector3::new(xy.x, xy.y, self.camera_height), yaw)
    }
}

/// What a pixel's ray hits first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hit {
    Nothing,
    /// Floor; `true` when the point is navigable.
    Floor(bool),
    SignFront(usize),
    SignBack(usize),
    Structure(usize),
    Occluder,
}

/// A rendered view: the frame plus the per-pixel hit buffer.
pub struct Observation {
    pub frame: Frame,
    pub hits: Vec<Hit>,
    pub points: Vec<Option<Vector3<f64>>>,
}

#[derive(Clone, Copy)]
struct Wall {
    a: Vector2<f64>,
    b: Vector2<f64>,
    zlo: f64,
    zhi: f64,
    hit: Hit,
}

fn walls(scene: &SceneSpec, cam: &Vector2<f64>) -> Vec<Wall> {
    let mut out = Vec::new();
    for o in &scene.occluders {
        out.push(Wall {
            a: v2(&o.a),
            b: v2(&o.b),
            zlo: 0.0,
            zhi: o.height,
            hit: Hit::Occluder,
        });
    }
    for (i, s) in scene.structures.iter().enumerate() {
        let c = s.corners();
        for k in 0..4 {
            out.push(Wall {
                a: c[k],
                b: c[(k + 1) % 4],
                zlo: 0.0,
                zhi: s.height,
                hit: Hit::Structure(i),
            });
        }
    }
    for (i, s) in scene.signs.iter().enumerate() {
        let (a, b) = sign_edge(s);
        let front = (cam - Vector2::new(s.position[0], s.position[1])).dot(&s.normal2()) > 0.0;
        out.push(Wall {
            a,
            b,
            zlo: s.position[2] - s.size[1] / 2.0,
            zhi: s.position[2] + s.size[1] / 2.0,
            hit: if front { Hit::SignFront(i) } else { Hit::SignBack(i) },
        });
    }
    out
}

fn sign_edge(s: &SignSpec) -> (Vector2<f64>, Vector2<f64>) {
    let n = s.normal2();
    let t = Vector2::new(-n.y, n.x) * (s.size[0] / 2.0);
    let c = Vector2::new(s.position[0], s.position[1]);
    (c - t, c + t)
}

/// Parameter `s` along `o + s*d` where it crosses segment `ab`.
fn ray_segment(o: &Vector2<f64>, d: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> Option<f64> {
    let e = b - a;
    let den = d.x * e.y - d.y * e.x;
    if den.abs() < 1e-12 {
        return None;
    }
    let w = a - o;
    let s = (w.x * e.y - w.y * e.x) / den;
    let t = (w.x * d.y - w.y * d.x) / den;
    (s > 1e-9 && (0.0..=1.0).contains(&t)).then_some(s)
}

/// Cast one ray given its horizontal part `h` (per unit z-depth) and
/// vertical slope `dz`. Returns the hit and its z-depth.
fn cast(scene: &SceneSpec, cam: &Vector3<f64>, h: &Vector2<f64>, dz: f64, column: &[(f64, Wall)], max_range: f64) -> (Hit, f64) {
    let o = Vector2::new(cam.x, cam.y);
    let mut best = (Hit::Nothing, f64::INFINITY);
    for (s, w) in column {
        let z = cam.z + dz * s;
        if z >= w.zlo && z <= w.zhi {
            best = (w.hit, *s);
            break;
        }
    }
    if dz < 0.0 {
        for (i, st) in scene.structures.iter().enumerate() {
            if cam.z > st.height {
                let s = (st.height - cam.z) / dz;
                if s < best.1 && st.contains_xy(&(o + h * s)) {
                    best = (Hit::Structure(i), s);
                }
            }
        }
        let s = -cam.z / dz;
        if s < best.1 {
            best = (Hit::Floor(scene.walkable(&(o + h * s))), s);
        }
    }
    if best.1 > max_range {
        (Hit::Nothing, f64::INFINITY)
    } else {
        best
    }
}

/// Sorted wall crossings of the column whose horizontal direction is `h`.
fn column_hits(cam: &Vector2<f64>, h: &Vector2<f64>, ws: &[Wall]) -> Vec<(f64, Wall)> {
    let mut hits: Vec<(f64, Wall)> = ws
        .iter()
        .filter_map(|w| ray_segment(cam, h, &w.a, &w.b).map(|s| (s, *w)))
        .collect();
    hits.sort_by(|a, b| a.0.total_cmp(&b.0));
    hits
}

/// Ray through the centre of pixel `(u, v)`, split into horizontal part and
/// vertical slope, both per unit z-depth.
fn pixel_ray(k: &CameraIntrinsics, pose: &Pose3, u: f64, v: f64) -> (Vector2<f64>, f64) {
    let d = pose.transform_vector(&k.ray(u, v));
    (Vector2::new(d.x, d.y), d.z)
}

/// Frame-independent image of a sign: its cues as text lines.
pub fn sign_crop(scene: &SceneSpec, index: usize) -> Vec<u8> {
    let sign = &scene.signs[index];
    let lines: Vec<String> = sign
        .cues
        .iter()
        .map(|c| {
            let phrase = c.location.to_uppercase();
            if c.instruction.is_locational() {
                phrase
            } else {
                format!("{} {}", c.instruction.as_str().to_uppercase(), phrase)
            }
        })
        .collect();
    let width = lines.iter().map(|l| l.chars().count() as u32 * 12 + 24).max().unwrap_or(64).max(64);
    let height = 24 + 20 * lines.len() as u32;
    let mut cv = Canvas::new(width, height, WHITE);
    for (i, l) in lines.iter().enumerate() {
        cv.text(l, Vector2::new(width as f64 / 2.0, 22.0 + 20.0 * i as f64), 2, BLACK);
    }
    let idx = index.to_string();
    png_io::encode_rgb8(width, height, &cv.data, &[(SIGN_KEY, &idx)])
}

fn mask_of(hits: &[Hit], w: u32, h: u32, want: impl Fn(&Hit) -> bool) -> RleMask {
    let bits: Vec<bool> = hits.iter().map(want).collect();
    RleMask::from_bits(w, h, &bits)
}

/// Render the scene from an agent at `xy` facing `yaw`.
pub fn observe_full(scene: &SceneSpec, camera: &SimCamera, xy: &Vector2<f64>, yaw: f64, t: f64) -> Result<Observation, SimError> {
    if !scene.walkable(xy) {
        return Err(SimError::InvalidAgentPose(format!("({:.3}, {:.3}) is off the ground", xy.x, xy.y)));
    }
    let k = camera.intrinsics();
    let pose = camera.pose(xy, yaw);
    let cam = pose.translation;
    let (w, h) = (k.width, k.height);
    let ws = walls(scene, xy);
    let n = (w * h) as usize;
    let mut hits = vec![Hit::Nothing; n];
    let mut depth = vec![0.0f64; n];
    let mut points = vec![None; n];
    for u in 0..w {
        let (hz, _) = pixel_ray(&k, &pose, u as f64 + 0.5, k.cy);
        let column = column_hits(xy, &hz, &ws);
        for v in 0..h {
            let (hd, dz) = pixel_ray(&k, &pose, u as f64 + 0.5, v as f64 + 0.5);
            let (hit, s) = cast(scene, &cam, &hd, dz, &column, camera.max_range);
            let i = (v * w + u) as usize;
            hits[i] = hit;
            if s.is_finite() {
                depth[i] = s;
                points[i] = Some(cam + Vector3::new(hd.x, hd.y, dz) * s);
            }
        }
    }
    let mut detections = Vec::new();
    for (i, _) in scene.structures.iter().enumerate() {
        let mask = mask_of(&hits, w, h, |x| *x == Hit::Structure(i));
        if let Some(d) = detection(&scene.structures[i].class_label, mask) {
            detections.push(d);
        }
    }
    let mut sign_masks = Vec::new();
    for (i, sign) in scene.signs.iter().enumerate() {
        let mask = mask_of(&hits, w, h, |x| *x == Hit::SignFront(i));
        let visible = mask.count();
        if visible == 0 {
            continue;
        }
        if 2 * visible < unoccluded_pixels(sign, camera, &k, &pose) {
            continue;
        }
        if let Some(d) = detection("sign", mask.clone()) {
            detections.push(d);
        }
        sign_masks.push(SignMask {
            mask,
            crop: Some(sign_crop(scene, i)),
        });
    }
    let frame = Frame {
        timestamp: t,
        pose,
        intrinsics: k,
        rgb_ref: None,
        depth: DepthImage::from_meters(w, h, &depth, camera.depth_scale),
        depth_scale: camera.depth_scale,
        detections,
        path_mask: mask_of(&hits, w, h, |x| *x == Hit::Floor(true)),
        sign_masks,
    };
    Ok(Observation { frame, hits, points })
}

pub fn observe(scene: &SceneSpec, camera: &SimCamera, xy: &Vector2<f64>, yaw: f64, t: f64) -> Result<Frame, SimError> {
    observe_full(scene, camera, xy, yaw, t).map(|o| o.frame)
}

fn detection(class_label: &str, mask: RleMask) -> Option<Detection> {
    let (u0, v0, u1, v1) = mask.bounds()?;
    Some(Detection {
        class_label: class_label.to_string(),
        bbox_px: [u0, v0, u1, v1],
        score: 1.0,
        mask: Some(mask),
    })
}

/// Pixels covered by the sign's front face with nothing else in the scene.
fn unoccluded_pixels(sign: &SignSpec, camera: &SimCamera, k: &CameraIntrinsics, pose: &Pose3) -> u64 {
    let cam = pose.translation;
    let o = Vector2::new(cam.x, cam.y);
    if (o - Vector2::new(sign.position[0], sign.position[1])).dot(&sign.normal2()) <= 0.0 {
        return 0;
    }
    let (a, b) = sign_edge(sign);
    let (zlo, zhi) = (sign.position[2] - sign.size[1] / 2.0, sign.position[2] + sign.size[1] / 2.0);
    let mut count = 0;
    for u in 0..k.width {
        let (hz, _) = pixel_ray(k, pose, u as f64 + 0.5, k.cy);
        let Some(s) = ray_segment(&o, &hz, &a, &b) else { continue };
        if s > camera.max_range {
            continue;
        }
        for v in 0..k.height {
            let (_, dz) = pixel_ray(k, pose, u as f64 + 0.5, v as f64 + 0.5);
            let z = cam.z + dz * s;
            if z >= zlo && z <= zhi {
                count += 1;
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::unproject;
    use crate::sim::scene::{OccluderSpec, SignSpec};
    use crate::scene::Instruction;
    use crate::sim::scene::CueSpec;

    fn room() -> SceneSpec {
        SceneSpec {
            name: "room".into(),
            description: String::new(),
            ground: vec![vec![[-5.0, -5.0], [5.0, -5.0], [5.0, 5.0], [-5.0, 5.0]]],
            branches: vec![],
            signs: vec![SignSpec {
                position: [0.0, 2.0, 1.2],
                normal: [0.0, -1.0],
                size: [1.0, 1.0],
                cues: vec![CueSpec {
                    location: "pharmacy".into(),
                    instruction: Instruction::Left,
                    target: None,
                }],
            }],
            structures: vec![],
            occluders: vec![],
            start: None,
            overview: None,
            rng_seed: 0,
        }
    }

    #[test]
    fn sign_two_metres_ahead() {
        let s = room();
        let f = observe(&s, &SimCamera::default(), &Vector2::new(0.0, 0.0), std::f64::consts::FRAC_PI_2, 0.0).unwrap();
        assert_eq!(f.sign_masks.len(), 1);
        let m = &f.sign_masks[0].mask;
        for (u, v) in m.pixels() {
            let d = f.depth_m(u, v).unwrap();
            assert!((d - 2.0).abs() < 0.01, "{d}");
        }
        assert_eq!(f.detections.iter().filter(|d| d.class_label == "sign").count(), 1);
        f.check().unwrap();
    }

    #[test]
    fn sign_from_behind_is_not_detected() {
        let s = room();
        let f = observe(&s, &SimCamera::default(), &Vector2::new(0.0, 4.0), -std::f64::consts::FRAC_PI_2, 0.0).unwrap();
        assert!(f.sign_masks.is_empty());
    }

    #[test]
    fn mostly_occluded_sign_is_dropped() {
        let mut s = room();
        s.occluders.push(OccluderSpec {
            a: [-0.3, 1.0],
            b: [0.05, 1.0],
            height: 3.0,
        });
        let f = observe(&s, &SimCamera::default(), &Vector2::new(0.0, 0.0), std::f64::consts::FRAC_PI_2, 0.0).unwrap();
        assert!(f.sign_masks.is_empty());
        s.occluders[0].b = [-0.15, 1.0];
        let f = observe(&s, &SimCamera::default(), &Vector2::new(0.0, 0.0), std::f64::consts::FRAC_PI_2, 0.0).unwrap();
        assert_eq!(f.sign_masks.len(), 1);
    }

    #[test]
    fn open_floor_and_ground_invariant() {
        let mut s = room();
        s.signs.clear();
        let f = observe(&s, &SimCamera::default(), &Vector2::new(0.0, 0.0), 0.3, 0.0).unwrap();
        assert!(f.path_mask.count() > 0);
        assert!(f.detections.is_empty() && f.sign_masks.is_empty());
        for (u, v) in f.path_mask.pixels() {
            let p = unproject((u as f64 + 0.5, v as f64 + 0.5), f.depth_m(u, v), &f.intrinsics, &f.pose).unwrap();
            assert!(p.z.abs() < 0.01, "{p:?}");
        }
    }

    #[test]
    fn off_ground_pose_is_rejected() {
        assert!(matches!(
            observe(&room(), &SimCamera::default(), &Vector2::new(9.0, 0.0), 0.0, 0.0),
            Err(SimError::InvalidAgentPose(_))
        ));
    }
}
