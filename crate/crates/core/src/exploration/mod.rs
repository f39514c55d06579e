//! Local exploration around a sign: scan in place, then visit the convex
//! protrusions of the observed ground polygon one by one.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::builder::{BuildError, MapBuilder};
use crate::geometry::Pose3;
use crate::perception::Frame;
use crate::render::{extract_polygon, find_frontiers, sign_frame, Frontier, RenderConfig, RenderError, SignFrame};
use crate::scene::AtomMap;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExploreError {
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error("agent: {0}")]
    Agent(String),
    #[error("map has no sign to explore around")]
    NoSign,
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Build(#[from] BuildError),
}

/// A mobile robot with a camera.
pub trait Agent {
    fn position(&self) -> Vector2<f64>;
    fn yaw(&self) -> f64;
    fn set_yaw(&mut self, yaw: f64);
    /// Drive straight to `target`; fails without moving on collision.
    fn drive_to(&mut self, target: &Vector2<f64>) -> Result<(), ExploreError>;
    fn observe(&mut self) -> Result<Frame, ExploreError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExploreConfig {
    pub scan_steps: usize,
    /// Standoff distance inside the polygon from the frontier.
    pub standoff: f64,
    /// Frontiers this close to a visited point are skipped.
    pub revisit_radius: f64,
    pub max_visits: usize,
    /// Distance in front of the anchor sign used as a routing waypoint.
    pub reader_distance: f64,
    pub render: RenderConfig,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        Self {
            scan_steps: 12,
            standoff: 0.5,
            revisit_radius: 0.5,
            max_visits: 10,
            reader_distance: 2.5,
            // Wide enough to keep whole corridor arms in view while walking them.
            render: RenderConfig {
                radius: 20.0,
                ..RenderConfig::default()
            },
        }
    }
}

/// Rotate a full turn in `n_steps` increments, folding every view.
pub fn scan_in_place(agent: &mut dyn Agent, builder: &mut MapBuilder<'_>, n_steps: usize) -> Result<(), ExploreError> {
    let yaw0 = agent.yaw();
    let n = n_steps.max(1);
    for k in 0..n {
        agent.set_yaw(yaw0 + std::f64::consts::TAU * k as f64 / n as f64);
        let f = agent.observe()?;
        builder.fold(&f)?;
    }
    agent.set_yaw(yaw0);
    Ok(())
}

/// A frontier with its world position and the outward boundary normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierCandidate {
    pub frontier: Frontier,
    pub world: Vector2<f64>,
    pub outward: Vector2<f64>,
}

fn outward_normal(poly: &[Vector2<f64>], p: &Vector2<f64>) -> Vector2<f64> {
    // polygon is counter-clockwise, so the outside is to the right of each edge
    let n = poly.len();
    let mut best = (f64::INFINITY, Vector2::zeros());
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let d = crate::render::point_segment_distance(p, &a, &b);
        let e = b - a;
        if e.norm() > 0.0 && d < best.0 - 1e-9 {
            best = (d, Vector2::new(e.y, -e.x).normalize());
        } else if e.norm() > 0.0 && (d - best.0).abs() <= 1e-9 {
            best.1 = (best.1 + Vector2::new(e.y, -e.x).normalize()).normalize();
        }
    }
    best.1
}

/// Frontiers of the map's current ground polygon around `sign_id`, in the
/// same order as in the render.
pub fn candidate_frontiers(map: &AtomMap, sign_id: u32, cfg: &RenderConfig) -> Result<Vec<FrontierCandidate>, ExploreError> {
    let sign = map.sign(sign_id).ok_or(RenderError::UnknownSign(sign_id))?;
    let frame = if cfg.rotate {
        sign_frame(sign)?
    } else {
        SignFrame::world_aligned(Vector2::new(sign.centroid.x, sign.centroid.y))
    };
    let poly = extract_polygon(&map.path_cloud, &frame, cfg)?;
    Ok(find_frontiers(&poly, cfg)
        .into_iter()
        .map(|f| {
            let n = outward_normal(&poly, &f.point);
            FrontierCandidate {
                world: frame.to_world(&f.point),
                outward: frame.to_world(&n) - frame.origin,
                frontier: f,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub letter: String,
    pub frontier: Vector2<f64>,
    pub standoff: Vector2<f64>,
    pub observations: Vec<FrameStamp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameStamp {
    pub t: f64,
    pub pose: Pose3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub letter: String,
    pub frontier: Vector2<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VisitLog {
    pub sign_id: u32,
    pub initial_frontiers: usize,
    pub visits: Vec<Visit>,
    pub skipped: Vec<Skipped>,
    pub final_frontiers: usize,
}

/// Sign the exploration is anchored to: the one nearest the agent.
fn anchor_sign(map: &AtomMap, at: &Vector2<f64>) -> Option<u32> {
    map.signs
        .iter()
        .min_by(|a, b| {
            let da = (Vector2::new(a.centroid.x, a.centroid.y) - at).norm();
            let db = (Vector2::new(b.centroid.x, b.centroid.y) - at).norm();
            da.total_cmp(&db)
        })
        .map(|s| s.id)
}

fn drive(agent: &mut dyn Agent, target: &Vector2<f64>, waypoints: &[Vector2<f64>]) -> Result<(), ExploreError> {
    let mut err = match agent.drive_to(target) {
        Ok(()) => return Ok(()),
        Err(e) => e,
    };
    for w in waypoints {
        if agent.drive_to(w).is_ok() {
            match agent.drive_to(target) {
                Ok(()) => return Ok(()),
                Err(e) => err = e,
            }
        }
    }
    Err(err)
}

fn capture(agent: &mut dyn Agent, builder: &mut MapBuilder<'_>, yaw: f64) -> Result<FrameStamp, ExploreError> {
    agent.set_yaw(yaw);
    let f = agent.observe()?;
    builder.fold(&f)?;
    Ok(FrameStamp {
        t: f.timestamp,
        pose: f.pose,
    })
}

/// Visit frontiers in order, recomputing them after every visit, until none
/// is left unvisited or `max_visits` is reached. Expects a completed scan.
pub fn explore(agent: &mut dyn Agent, builder: &mut MapBuilder<'_>, cfg: &ExploreConfig) -> Result<VisitLog, ExploreError> {
    let sign_id = anchor_sign(builder.map(), &agent.position()).ok_or(ExploreError::NoSign)?;
    let mut log = VisitLog {
        sign_id,
        initial_frontiers: candidate_frontiers(builder.map(), sign_id, &cfg.render)?.len(),
        ..VisitLog::default()
    };
    let mut visited: Vec<Vector2<f64>> = Vec::new();
    // failed straight drives are retried through the start and the point
    // from which the sign is read
    let waypoints = {
        let sign = builder.map().sign(sign_id).expect("anchor sign exists");
        let n = Vector2::new(sign.normal.x, sign.normal.y);
        let c = Vector2::new(sign.centroid.x, sign.centroid.y);
        let reader = if n.norm() > 1e-9 { c + n.normalize() * cfg.reader_distance } else { c };
        [agent.position(), reader]
    };
    while log.visits.len() < cfg.max_visits {
        let frontiers = candidate_frontiers(builder.map(), sign_id, &cfg.render)?;
        let Some(next) = frontiers
            .into_iter()
            .find(|f| visited.iter().all(|v| (v - f.world).norm() > cfg.revisit_radius))
        else {
            break;
        };
        visited.push(next.world);
        let standoff = next.world - next.outward * cfg.standoff;
        if let Err(e) = drive(agent, &standoff, &waypoints) {
            log.skipped.push(Skipped {
                letter: next.frontier.letter.clone(),
                frontier: next.world,
                reason: e.to_string(),
            });
            continue;
        }
        let out_yaw = next.outward.y.atan2(next.outward.x);
        let inward = capture(agent, builder, out_yaw + std::f64::consts::PI)?;
        let outward = capture(agent, builder, out_yaw)?;
        log.visits.push(Visit {
            letter: next.frontier.letter,
            frontier: next.world,
            standoff,
            observations: vec![inward, outward],
        });
    }
    log.final_frontiers = candidate_frontiers(builder.map(), sign_id, &cfg.render)?.len();
    Ok(log)
}
