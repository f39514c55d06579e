use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::RenderError;
use crate::scene::SignInstance;

/// Planar rigid transform between world XY and a sign-centred frame whose
/// +Y is the reader's forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignFrame {
    pub origin: Vector2<f64>,
    pub x_axis: Vector2<f64>,
    pub y_axis: Vector2<f64>,
}

impl SignFrame {
    pub fn world_aligned(origin: Vector2<f64>) -> Self {
        Self {
            origin,
            x_axis: Vector2::new(1.0, 0.0),
            y_axis: Vector2::new(0.0, 1.0),
        }
    }

    /// Frame whose +Y is `forward` (world XY, any length).
    pub fn facing(origin: Vector2<f64>, forward: Vector2<f64>) -> Self {
        let f = forward.normalize();
        Self {
            origin,
            x_axis: Vector2::new(f.y, -f.x),
            y_axis: f,
        }
    }

    pub fn to_local(&self, p: &Vector2<f64>) -> Vector2<f64> {
        let d = p - self.origin;
        Vector2::new(d.dot(&self.x_axis), d.dot(&self.y_axis))
    }

    pub fn to_world(&self, p: &Vector2<f64>) -> Vector2<f64> {
        self.origin + self.x_axis * p.x + self.y_axis * p.y
    }

    pub fn to_local3(&self, p: &Vector3<f64>) -> Vector2<f64> {
        self.to_local(&Vector2::new(p.x, p.y))
    }

    /// Angle of the frame's +X axis in the world.
    pub fn angle(&self) -> f64 {
        self.x_axis.y.atan2(self.x_axis.x)
    }
}

/// Sign-centred frame: origin at the centroid, +Y along the horizontal
/// projection of `-normal`.
pub fn sign_frame(sign: &SignInstance) -> Result<SignFrame, RenderError> {
    let n = sign.normal;
    let h = Vector2::new(-n.x, -n.y);
    if n.z.abs() >= 0.95 || h.norm() < 1e-9 {
        return Err(RenderError::AmbiguousFrame(sign.id));
    }
    Ok(SignFrame::facing(Vector2::new(sign.centroid.x, sign.centroid.y), h))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sign(normal: Vector3<f64>, c: Vector3<f64>) -> SignInstance {
        SignInstance::new(0, c, normal)
    }

    #[test]
    fn axis_aligned() {
        let f = sign_frame(&sign(Vector3::new(0.0, -1.0, 0.0), Vector3::new(3.0, 4.0, 2.0))).unwrap();
        assert!(f.to_local(&Vector2::new(3.0, 4.0)).norm() < 1e-12);
        assert!((f.to_local(&Vector2::new(3.0, 5.0)) - Vector2::new(0.0, 1.0)).norm() < 1e-12);
        assert!((f.to_local(&Vector2::new(4.0, 4.0)) - Vector2::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rotated_quarter_turn() {
        // sign faces +X, so the reader looks along -X and their left is -Y
        let f = sign_frame(&sign(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros())).unwrap();
        assert!((f.to_local(&Vector2::new(0.0, -1.0)) - Vector2::new(-1.0, 0.0)).norm() < 1e-12);
        let p = Vector2::new(0.3, -7.0);
        assert!((f.to_world(&f.to_local(&p)) - p).norm() < 1e-12);
    }

    #[test]
    fn vertical_normal_is_ambiguous() {
        assert!(matches!(
            sign_frame(&sign(Vector3::new(0.0, 0.0, 1.0), Vector3::zeros())),
            Err(RenderError::AmbiguousFrame(0))
        ));
    }
}
