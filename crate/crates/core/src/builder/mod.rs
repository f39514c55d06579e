//! Incremental fusion of frames into an [`AtomMap`].

mod hungarian;

use std::collections::BTreeMap;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hungarian::hungarian;

use crate::geometry::{fit_oriented_box, quantize, unproject, voxel_downsample, PointCloud3, Pose3};
use crate::perception::{Frame, PerceptionError, Vlm};
use crate::scene::{AtomMap, FrameLogEntry, ParseRecord, SignInstance, StructureInstance};
use crate::signs::{build_parse_request, merge_cues, parse_vlm_reply, SymbolDictionary};

/// Cost used for forbidden pairings in the assignment problem.
const BIG: f64 = 1e9;
/// Heights at or below this are treated as floor when lifting detections.
const FLOOR_CUT: f64 = 0.05;
/// Depth gap separating a detection's foreground from what lies behind it.
const DEPTH_GAP: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuildError {
    #[error(transparent)]
    Frame(#[from] PerceptionError),
    #[error("sign mask has too few valid depth pixels ({0})")]
    InsufficientDepth(usize),
    #[error("sign mask is too thin to fit a plane (in-plane spread {0:.4} m)")]
    DegenerateSign(f64),
    #[error("invalid builder config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuilderConfig {
    pub tau_dist: f64,
    pub tau_angle: f64,
    pub sign_cluster_dist: f64,
    pub sign_cluster_angle: f64,
    pub assoc_gate: f64,
    pub ground_band: f64,
    pub voxel: f64,
    pub structure_vocab: Vec<String>,
    pub default_score_threshold: f64,
    pub score_thresholds: BTreeMap<String, f64>,
    pub min_sign_pixels: usize,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        Self {
            tau_dist: 3.5,
            tau_angle: 30.0,
            sign_cluster_dist: 0.5,
            sign_cluster_angle: 20.0,
            assoc_gate: 1.0,
            ground_band: 0.5,
            voxel: 0.05,
            structure_vocab: ["stairs", "escalator", "lift", "door"].map(String::from).to_vec(),
            default_score_threshold: 0.35,
            score_thresholds: BTreeMap::new(),
            min_sign_pixels: 50,
        }
    }
}

impl BuilderConfig {
    pub fn validate(&self) -> Result<(), BuildError> {
        let positive = [
            ("tau_dist", self.tau_dist),
            ("tau_angle", self.tau_angle),
            ("sign_cluster_dist", self.sign_cluster_dist),
            ("sign_cluster_angle", self.sign_cluster_angle),
            ("assoc_gate", self.assoc_gate),
            ("ground_band", self.ground_band),
            ("voxel", self.voxel),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(BuildError::Config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [("tau_angle", self.tau_angle), ("sign_cluster_angle", self.sign_cluster_angle)] {
            if v >= 90.0 {
                return Err(BuildError::Config(format!("{name} must be below 90 degrees")));
            }
        }
        Ok(())
    }

    fn score_threshold(&self, label: &str) -> f64 {
        self.score_thresholds
            .get(label)
            .copied()
            .unwrap_or(self.default_score_threshold)
    }
}

fn angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let c = a.dot(b) / (a.norm() * b.norm());
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Smallest in-plane standard deviation, in metres, of a usable sign patch.
const MIN_SIGN_SPREAD: f64 = 0.02;

/// Centroid and camera-facing plane normal of the sign under a mask.
pub fn estimate_sign_geometry(frame: &Frame, mask_index: usize) -> Result<(Vector3<f64>, Vector3<f64>), BuildError> {
    estimate_geometry_with(frame, mask_index, 50)
}

fn estimate_geometry_with(
    frame: &Frame,
    mask_index: usize,
    min_pixels: usize,
) -> Result<(Vector3<f64>, Vector3<f64>), BuildError> {
    let mask = &frame.sign_masks[mask_index].mask;
    let pts: Vec<Vector3<f64>> = mask
        .pixels()
        .filter_map(|(u, v)| {
            let px = (u as f64 + 0.5, v as f64 + 0.5);
            unproject(px, frame.depth_m(u, v), &frame.intrinsics, &frame.pose).ok()
        })
        .collect();
    if pts.len() < min_pixels.max(3) {
        return Err(BuildError::InsufficientDepth(pts.len()));
    }
    let centroid = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in &pts {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    // Pair each eigenvector with its own Rayleigh quotient: the solver's
    // value/vector pairing is unreliable on nearly diagonal input.
    let eig = SymmetricEigen::new(cov);
    let mut axes: Vec<(f64, Vector3<f64>)> = (0..3)
        .map(|i| {
            let v: Vector3<f64> = eig.eigenvectors.column(i).into_owned().normalize();
            ((v.transpose() * cov * v)[0], v)
        })
        .collect();
    axes.sort_by(|a, b| a.0.total_cmp(&b.0));
    // a sliver along one axis does not pin down the plane
    let spread = (axes[1].0.max(0.0) / pts.len() as f64).sqrt();
    if spread < MIN_SIGN_SPREAD {
        return Err(BuildError::DegenerateSign(spread));
    }
    let mut normal = axes[0].1;
    if normal.dot(&(centroid - frame.pose.translation)) >= 0.0 {
        normal = -normal;
    }
    Ok((centroid, normal))
}

/// Attach an observation to a nearby, similarly oriented sign or start a
/// new one. Returns the sign id.
pub fn cluster_sign(map: &mut AtomMap, centroid: Vector3<f64>, normal: Vector3<f64>, cfg: &BuilderConfig) -> u32 {
    let normal = normal.normalize();
    let best = map
        .signs
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            (s.centroid - centroid).norm() <= cfg.sign_cluster_dist && angle_deg(&s.normal, &normal) <= cfg.sign_cluster_angle
        })
        .min_by(|(_, a), (_, b)| {
            (a.centroid - centroid)
                .norm()
                .total_cmp(&(b.centroid - centroid).norm())
        })
        .map(|(i, _)| i);
    match best {
        Some(i) => {
            let s = &mut map.signs[i];
            let n = s.observation_count as f64;
            s.centroid = (s.centroid * n + centroid) / (n + 1.0);
            let blended = s.normal * n + normal;
            if blended.norm() > 1e-9 {
                s.normal = blended.normalize();
            }
            s.observation_count += 1;
            s.id
        }
        None => {
            let id = map.signs.iter().map(|s| s.id + 1).max().unwrap_or(0);
            map.signs.push(SignInstance::new(id, centroid, normal));
            id
        }
    }
}

/// (distance in XY, viewing angle in degrees) of a camera relative to a sign.
pub fn viewpoint(pose: &Pose3, sign: &SignInstance) -> (f64, f64) {
    let d = pose.translation - sign.centroid;
    let dist = (d.x * d.x + d.y * d.y).sqrt();
    (dist, angle_deg(&pose.forward(), &(-sign.normal)))
}

pub fn viewpoint_suitable(pose: &Pose3, sign: &SignInstance, cfg: &BuilderConfig) -> bool {
    let (dist, angle) = viewpoint(pose, sign);
    dist <= cfg.tau_dist + 1e-9 && angle <= cfg.tau_angle + 1e-9
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection3 {
    pub class_label: String,
    pub cloud: PointCloud3,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Association {
    Matched { detection: usize, structure: u32 },
    Created { detection: usize, structure: u32 },
}

/// Optimal one-to-one association of detections to structures, then fusion.
pub fn associate_structures(
    structures: &mut Vec<StructureInstance>,
    detections: &[Detection3],
    cfg: &BuilderConfig,
) -> Vec<Association> {
    let centers: Vec<Vector3<f64>> = structures.iter().map(|s| s.bbox.center).collect();
    let cost: Vec<Vec<f64>> = detections
        .iter()
        .map(|d| {
            let c = d.cloud.centroid().unwrap_or_else(Vector3::zeros);
            structures
                .iter()
                .zip(&centers)
                .map(|(s, sc)| {
                    let dist = (c - sc).norm();
                    if s.class_label != d.class_label || dist > cfg.assoc_gate {
                        BIG
                    } else {
                        dist
                    }
                })
                .collect()
        })
        .collect();
    let assign = if structures.is_empty() {
        vec![None; detections.len()]
    } else {
        hungarian(&cost)
    };

    let mut out = Vec::with_capacity(detections.len());
    let mut next_id = structures.iter().map(|s| s.id + 1).max().unwrap_or(0);
    for (di, d) in detections.iter().enumerate() {
        match assign[di].filter(|&si| cost[di][si] < BIG) {
            Some(si) => {
                let s = &mut structures[si];
                let mut merged = s.fused_cloud.clone();
                merged.extend_from(&d.cloud);
                s.fused_cloud = voxel_downsample(&merged, cfg.voxel);
                if let Ok(b) = fit_oriented_box(&s.fused_cloud) {
                    s.bbox = b;
                }
                let n = s.detection_count as f64;
                s.confidence = (s.confidence * n + d.score) / (n + 1.0);
                s.detection_count += 1;
                out.push(Association::Matched {
                    detection: di,
                    structure: s.id,
                });
            }
            None => {
                let cloud = voxel_downsample(&d.cloud, cfg.voxel);
                let Ok(bbox) = fit_oriented_box(&cloud) else {
                    continue;
                };
                structures.push(StructureInstance {
                    id: next_id,
                    class_label: d.class_label.clone(),
                    bbox,
                    confidence: d.score,
                    detection_count: 1,
                    fused_cloud: cloud,
                });
                out.push(Association::Created {
                    detection: di,
                    structure: next_id,
                });
                next_id += 1;
            }
        }
    }
    out
}

/// Points of one detection: its mask (or box) pixels with depth, floor
/// removed, nearest depth layer kept.
pub fn lift_detection(frame: &Frame, index: usize) -> PointCloud3 {
    let det = &frame.detections[index];
    let pixels: Vec<(u32, u32)> = match &det.mask {
        Some(m) => m.pixels().collect(),
        None => {
            let [x0, y0, x1, y1] = det.bbox_px;
            (y0..y1).flat_map(|v| (x0..x1).map(move |u| (u, v))).collect()
        }
    };
    let mut pts: Vec<(f64, Vector3<f64>)> = pixels
        .into_iter()
        .filter_map(|(u, v)| {
            let z = frame.depth_m(u, v)?;
            let p = unproject((u as f64 + 0.5, v as f64 + 0.5), Some(z), &frame.intrinsics, &frame.pose).ok()?;
            (p.z > FLOOR_CUT).then_some((z, p))
        })
        .collect();
    if det.mask.is_none() && !pts.is_empty() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut end = 1;
        while end < pts.len() && pts[end].0 - pts[end - 1].0 <= DEPTH_GAP {
            end += 1;
        }
        pts.truncate(end);
    }
    PointCloud3::from_points(pts.into_iter().map(|(_, p)| p))
}

/// Stateful fold of frames into a map.
pub struct MapBuilder<'a> {
    cfg: BuilderConfig,
    dict: SymbolDictionary,
    vlm: &'a dyn Vlm,
    map: AtomMap,
    path_cells: FxHashMap<(i64, i64), (Vector3<f64>, u64)>,
    pub warnings: Vec<String>,
}

impl<'a> MapBuilder<'a> {
    pub fn new(cfg: BuilderConfig, vlm: &'a dyn Vlm) -> Result<Self, BuildError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            dict: SymbolDictionary::default(),
            vlm,
            map: AtomMap::default(),
            path_cells: FxHashMap::default(),
            warnings: Vec::new(),
        })
    }

    pub fn with_dictionary(mut self, dict: SymbolDictionary) -> Self {
        self.dict = dict;
        self
    }

    pub fn config(&self) -> &BuilderConfig {
        &self.cfg
    }

    pub fn map(&self) -> &AtomMap {
        &self.map
    }

    pub fn into_map(self) -> AtomMap {
        self.map
    }

    pub fn fold(&mut self, frame: &Frame) -> Result<(), BuildError> {
        self.map.frame_log.push(FrameLogEntry {
            t: frame.timestamp,
            pose: frame.pose,
        });
        self.fold_signs(frame)?;
        self.fold_structures(frame);
        self.accumulate_path(frame);
        Ok(())
    }

    fn fold_signs(&mut self, frame: &Frame) -> Result<(), BuildError> {
        for j in 0..frame.sign_masks.len() {
            let (centroid, normal) = match estimate_geometry_with(frame, j, self.cfg.min_sign_pixels) {
                Ok(g) => g,
                Err(e) => {
                    self.warnings.push(format!("t={}: sign mask {j}: {e}", frame.timestamp));
                    continue;
                }
            };
            let id = cluster_sign(&mut self.map, centroid, normal, &self.cfg);
            let idx = self.map.signs.iter().position(|s| s.id == id).expect("sign just clustered");
            let sign = &self.map.signs[idx];
            if !viewpoint_suitable(&frame.pose, sign, &self.cfg) {
                continue;
            }
            let (distance_m, angle_deg) = viewpoint(&frame.pose, sign);
            let Some(crop) = frame.sign_masks[j].crop.as_deref().filter(|c| !c.is_empty()) else {
                self.map.signs[idx]
                    .warnings
                    .push(format!("t={}: no sign image to parse", frame.timestamp));
                continue;
            };
            let request = build_parse_request(crop, &self.dict).expect("crop is non-empty");
            let reply = self.vlm.chat(&request)?;
            let sign = &mut self.map.signs[idx];
            match parse_vlm_reply(&reply.text) {
                Ok(parsed) => {
                    sign.warnings
                        .extend(parsed.warnings.into_iter().map(|w| format!("t={}: {w}", frame.timestamp)));
                    sign.parse_history.push(ParseRecord {
                        timestamp: frame.timestamp,
                        cues: parsed.cues,
                        distance_m,
                        angle_deg,
                    });
                    let history: Vec<_> = sign.parse_history.iter().map(|r| r.cues.clone()).collect();
                    sign.merged_cues = merge_cues(&history);
                }
                Err(e) => sign.warnings.push(format!("t={}: {e}", frame.timestamp)),
            }
        }
        Ok(())
    }

    fn fold_structures(&mut self, frame: &Frame) {
        let mut dets = Vec::new();
        for (i, d) in frame.detections.iter().enumerate() {
            if !self.cfg.structure_vocab.iter().any(|c| *c == d.class_label) {
                continue;
            }
            if d.score < self.cfg.score_threshold(&d.class_label) {
                continue;
            }
            let cloud = lift_detection(frame, i);
            if cloud.len() < 4 || fit_oriented_box(&cloud).is_err() {
                continue;
            }
            dets.push(Detection3 {
                class_label: d.class_label.clone(),
                cloud,
                score: d.score,
            });
        }
        if !dets.is_empty() {
            associate_structures(&mut self.map.structures, &dets, &self.cfg);
        }
    }

    /// Add the frame's floor points; one cell per voxel column.
    pub fn accumulate_path(&mut self, frame: &Frame) {
        let v = self.cfg.voxel;
        let mut added = false;
        for (u, vv) in frame.path_mask.pixels() {
            let Ok(p) = unproject(
                (u as f64 + 0.5, vv as f64 + 0.5),
                frame.depth_m(u, vv),
                &frame.intrinsics,
                &frame.pose,
            ) else {
                continue;
            };
            if p.z.abs() > self.cfg.ground_band {
                continue;
            }
            let key = ((p.x / v).floor() as i64, (p.y / v).floor() as i64);
            let e = self.path_cells.entry(key).or_insert((Vector3::zeros(), 0));
            e.0 += p;
            e.1 += 1;
            added = true;
        }
        if added {
            let mut cells: Vec<_> = self.path_cells.iter().collect();
            cells.sort_unstable_by_key(|(k, _)| **k);
            self.map.path_cloud = PointCloud3::from_points(cells.into_iter().map(|(_, (s, n))| quantize(&(s / *n as f64))));
        }
    }
}

/// Fold a whole frame stream.
pub fn build<I>(frames: I, cfg: &BuilderConfig, vlm: &dyn Vlm) -> Result<AtomMap, BuildError>
where
    I: IntoIterator<Item = Result<Frame, PerceptionError>>,
{
    let mut b = MapBuilder::new(cfg.clone(), vlm)?;
    for f in frames {
        b.fold(&f?)?;
    }
    for w in &b.warnings {
        log::warn!("{w}");
    }
    Ok(b.into_map())
}
