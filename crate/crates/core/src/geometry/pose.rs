use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Rigid transform from a local frame (camera or body) into the Z-up world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose3 {
    pub translation: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

impl Default for Pose3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose3 {
    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn new(translation: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self {
            translation,
            rotation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vector3::new(x, y, z), UnitQuaternion::identity())
    }

    /// Upright pinhole camera at `position` looking along world heading `yaw`
    /// (radians from +X, counter-clockwise). Camera axes: +Z forward, +X right,
    /// +Y down.
    pub fn camera_looking(position: Vector3<f64>, yaw: f64) -> Self {
        let (s, c) = yaw.sin_cos();
        let forward = Vector3::new(c, s, 0.0);
        let right = Vector3::new(s, -c, 0.0);
        let down = Vector3::new(0.0, 0.0, -1.0);
        let m = nalgebra::Matrix3::from_columns(&[right, down, forward]);
        let rot = nalgebra::Rotation3::from_matrix_unchecked(m);
        Self::new(position, UnitQuaternion::from_rotation_matrix(&rot))
    }

    pub fn compose(&self, other: &Pose3) -> Pose3 {
        Pose3 {
            translation: self.translation + self.rotation * other.translation,
            rotation: self.rotation * other.rotation,
        }
    }

    pub fn inverse(&self) -> Pose3 {
        let inv = self.rotation.inverse();
        Pose3 {
            translation: -(inv * self.translation),
            rotation: inv,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Camera optical axis (+Z of the local frame) in world coordinates.
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation * Vector3::z()
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.translation), self.rotation)
    }

    /// Heading of the optical axis projected onto the ground plane.
    pub fn yaw(&self) -> f64 {
        let f = self.forward();
        f.y.atan2(f.x)
    }
}

/// Compose two poses: the result maps `p` to `a(b(p))`.
pub fn compose(a: &Pose3, b: &Pose3) -> Pose3 {
    a.compose(b)
}

#[derive(Serialize, Deserialize)]
struct PoseWire {
    t: [f64; 3],
    q: [f64; 4],
}

impl Serialize for Pose3 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let q = self.rotation.quaternion();
        PoseWire {
            t: [self.translation.x, self.translation.y, self.translation.z],
            q: [q.w, q.i, q.j, q.k],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose3 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let w = PoseWire::deserialize(d)?;
        let q = nalgebra::Quaternion::new(w.q[0], w.q[1], w.q[2], w.q[3]);
        let norm = q.norm();
        if !(norm.is_finite() && (norm - 1.0).abs() <= 1e-6) {
            return Err(serde::de::Error::custom(format!(
                "rotation quaternion is not unit-norm (|q| = {norm})"
            )));
        }
        // Exact components are kept so that a serialize/deserialize cycle is lossless.
        Ok(Pose3 {
            translation: Vector3::new(w.t[0], w.t[1], w.t[2]),
            rotation: UnitQuaternion::new_unchecked(q),
        })
    }
}
