use nalgebra::Vector2;

use super::raycast::{observe, SimCamera};
use super::scene::{v2, SceneSpec};
use crate::exploration::{Agent, ExploreError};
use crate::perception::Frame;

/// Spacing of collision probes along a drive.
const PROBE_STEP: f64 = 0.05;

/// Point agent moving on straight segments through a scene.
pub struct SimAgent<'a> {
    scene: &'a SceneSpec,
    camera: SimCamera,
    position: Vector2<f64>,
    yaw: f64,
    t: f64,
    dt: f64,
}

impl<'a> SimAgent<'a> {
    pub fn new(scene: &'a SceneSpec, camera: SimCamera, position: Vector2<f64>, yaw: f64) -> Self {
        Self {
            scene,
            camera,
            position,
            yaw,
            t: 0.0,
            dt: 0.5,
        }
    }

    /// Agent at the scene's start pose.
    pub fn at_start(scene: &'a SceneSpec, camera: SimCamera) -> Self {
        let (p, yaw) = scene.start_pose();
        Self::new(scene, camera, p, yaw)
    }

    pub fn time(&self) -> f64 {
        self.t
    }
}

fn crosses(p: &Vector2<f64>, q: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> bool {
    let orient = |o: &Vector2<f64>, x: &Vector2<f64>, y: &Vector2<f64>| {
        let v = (x - o).perp(&(y - o));
        if v.abs() < 1e-12 {
            0.0
        } else {
            v.signum()
        }
    };
    let (d1, d2) = (orient(a, b, p), orient(a, b, q));
    let (d3, d4) = (orient(p, q, a), orient(p, q, b));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

impl Agent for SimAgent<'_> {
    fn position(&self) -> Vector2<f64> {
        self.position
    }

    fn yaw(&self) -> f64 {
        self.yaw
    }

    fn set_yaw(&mut self, yaw: f64) {
        self.yaw = yaw;
    }

    fn drive_to(&mut self, target: &Vector2<f64>) -> Result<(), ExploreError> {
        let from = self.position;
        let d = target - from;
        let steps = (d.norm() / PROBE_STEP).ceil().max(1.0) as usize;
        for k in 0..=steps {
            let p = from + d * (k as f64 / steps as f64);
            if !self.scene.walkable(&p) {
                return Err(ExploreError::Unreachable(format!("({:.2}, {:.2}) is off the ground", p.x, p.y)));
            }
        }
        if self.scene.occluders.iter().any(|o| crosses(&from, target, &v2(&o.a), &v2(&o.b))) {
            return Err(ExploreError::Unreachable("path crosses a wall".into()));
        }
        if d.norm() > 1e-9 {
            self.yaw = d.y.atan2(d.x);
        }
        self.position = *target;
        Ok(())
    }

    fn observe(&mut self) -> Result<Frame, ExploreError> {
        let f = observe(self.scene, &self.camera, &self.position, self.yaw, self.t)
            .map_err(|e| ExploreError::Agent(e.to_string()))?;
        self.t += self.dt;
        Ok(f)
    }
}
