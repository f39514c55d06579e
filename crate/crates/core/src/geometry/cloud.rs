use nalgebra::Vector3;
use rustc_hash::FxHashMap;

use super::GeometryError;

/// Unordered set of world-frame points, in meters.
///
/// Non-finite points are rejected at construction, so every stored
/// coordinate is finite.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud3 {
    points: Vec<Vector3<f64>>,
}

impl PointCloud3 {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build from points, silently skipping any with a non-finite coordinate.
    pub fn from_points<I: IntoIterator<Item = Vector3<f64>>>(points: I) -> Self {
        Self {
            points: points
                .into_iter()
                .filter(|p| p.iter().all(|c| c.is_finite()))
                .collect(),
        }
    }

    pub fn push(&mut self, p: Vector3<f64>) {
        if p.iter().all(|c| c.is_finite()) {
            self.points.push(p);
        }
    }

    pub fn extend_from(&mut self, other: &PointCloud3) {
        self.points.extend_from_slice(&other.points);
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vector3<f64>> {
        self.points.iter()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Vector3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Vector3<f64> = self.points.iter().sum();
        Some(sum / self.points.len() as f64)
    }

    /// Round every coordinate to single precision, the on-disk resolution.
    pub fn quantized(&self) -> Self {
        Self {
            points: self.points.iter().map(quantize).collect(),
        }
    }

    pub fn map<F: Fn(&Vector3<f64>) -> Vector3<f64>>(&self, f: F) -> Self {
        Self::from_points(self.points.iter().map(f))
    }

    /// Binary blob: little-endian u64 count, then `count` x/y/z f32 triples.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 12 * self.points.len());
        out.extend_from_slice(&(self.points.len() as u64).to_le_bytes());
        for p in &self.points {
            for c in p.iter() {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GeometryError> {
        if bytes.len() < 8 {
            return Err(GeometryError::TruncatedCloud { expected: 8, got: bytes.len() });
        }
        let n = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
        let expected = n
            .checked_mul(12)
            .and_then(|b| b.checked_add(8))
            .ok_or(GeometryError::TruncatedCloud { expected: usize::MAX, got: bytes.len() })?;
        if bytes.len() != expected {
            return Err(GeometryError::TruncatedCloud { expected, got: bytes.len() });
        }
        let mut points = Vec::with_capacity(n);
        for chunk in bytes[8..].chunks_exact(12) {
            let c = |i: usize| f32::from_le_bytes(chunk[i * 4..i * 4 + 4].try_into().expect("4 bytes")) as f64;
            let p = Vector3::new(c(0), c(1), c(2));
            if !p.iter().all(|v| v.is_finite()) {
                return Err(GeometryError::NonFinite);
            }
            points.push(p);
        }
        Ok(Self { points })
    }
}

pub fn quantize(p: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(p.x as f32 as f64, p.y as f32 as f64, p.z as f32 as f64)
}

/// Integer voxel key of a point for a cubic voxel of edge `voxel`.
pub fn voxel_key(p: &Vector3<f64>, voxel: f64) -> (i64, i64, i64) {
    (
        (p.x / voxel).floor() as i64,
        (p.y / voxel).floor() as i64,
        (p.z / voxel).floor() as i64,
    )
}

/// Replace the points of each occupied voxel by their centroid.
/// Output is sorted by voxel key and quantized to f32.
pub fn voxel_downsample(cloud: &PointCloud3, voxel: f64) -> PointCloud3 {
    let mut acc: FxHashMap<(i64, i64, i64), (Vector3<f64>, usize)> = FxHashMap::default();
    for p in cloud.iter() {
        let e = acc.entry(voxel_key(p, voxel)).or_insert((Vector3::zeros(), 0));
        e.0 += p;
        e.1 += 1;
    }
    let mut cells: Vec<_> = acc.into_iter().collect();
    cells.sort_unstable_by_key(|(k, _)| *k);
    PointCloud3 {
        points: cells
            .into_iter()
            .map(|(k, (sum, n))| quantize_in_voxel(&(sum / n as f64), k, voxel))
            .collect(),
    }
}

/// f32 rounding can push a centroid sitting on a voxel face into the
/// neighbour; step it back one ulp at a time so a second pass is a no-op.
fn quantize_in_voxel(p: &Vector3<f64>, key: (i64, i64, i64), voxel: f64) -> Vector3<f64> {
    let kk = [key.0, key.1, key.2];
    let mut q = [p.x as f32, p.y as f32, p.z as f32];
    for a in 0..3 {
        for _ in 0..8 {
            let k = (q[a] as f64 / voxel).floor() as i64;
            if k == kk[a] {
                break;
            }
            q[a] = if k > kk[a] { q[a].next_down() } else { q[a].next_up() };
        }
    }
    Vector3::new(q[0] as f64, q[1] as f64, q[2] as f64)
}
