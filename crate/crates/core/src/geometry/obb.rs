use std::f64::consts::FRAC_PI_2;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{GeometryError, PointCloud3};

/// Smallest half extent a fitted box may have along any axis.
const MIN_HALF_EXTENT: f64 = 0.005;
/// Trimming keeps points within the 1st..99th percentile band of each axis,
/// widened by this fraction of the band on either side.
const TRIM_MARGIN: f64 = 0.05;

/// Gravity-aligned box: rotated by `yaw` about +Z, `half_extents.x` measured
/// along the yaw direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox3 {
    pub center: Vector3<f64>,
    pub half_extents: Vector3<f64>,
    pub yaw: f64,
}

impl OrientedBox3 {
    pub fn axes_xy(&self) -> (Vector2<f64>, Vector2<f64>) {
        let (s, c) = self.yaw.sin_cos();
        (Vector2::new(c, s), Vector2::new(-s, c))
    }

    pub fn contains(&self, p: &Vector3<f64>, tol: f64) -> bool {
        let (ax, ay) = self.axes_xy();
        let d = p - self.center;
        let dxy = Vector2::new(d.x, d.y);
        dxy.dot(&ax).abs() <= self.half_extents.x + tol
            && dxy.dot(&ay).abs() <= self.half_extents.y + tol
            && d.z.abs() <= self.half_extents.z + tol
    }

    pub fn volume(&self) -> f64 {
        8.0 * self.half_extents.x * self.half_extents.y * self.half_extents.z
    }

    pub fn footprint_area(&self) -> f64 {
        4.0 * self.half_extents.x * self.half_extents.y
    }

    /// Footprint corners, counter-clockwise.
    pub fn corners_xy(&self) -> [Vector2<f64>; 4] {
        let (ax, ay) = self.axes_xy();
        let c = Vector2::new(self.center.x, self.center.y);
        let (hx, hy) = (self.half_extents.x, self.half_extents.y);
        [
            c - ax * hx - ay * hy,
            c + ax * hx - ay * hy,
            c + ax * hx + ay * hy,
            c - ax * hx + ay * hy,
        ]
    }
}

/// Andrew's monotone chain. Returns the hull counter-clockwise without the
/// closing point; collinear boundary points are dropped.
pub fn convex_hull_2d(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut pts: Vec<Vector2<f64>> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| (a - o).perp(&(b - o));
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(2 * pts.len());
    for p in pts.iter() {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    let lower = hull.len() + 1;
    for p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();
    hull
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Drop points outside the widened 1st..99th percentile band on each axis of
/// the frame rotated by `yaw` (z is always its own axis).
fn trimmed(points: &[Vector3<f64>], yaw: f64) -> Vec<Vector3<f64>> {
    let (s, c) = yaw.sin_cos();
    let local = |p: &Vector3<f64>| [c * p.x + s * p.y, -s * p.x + c * p.y, p.z];
    let coords: Vec<[f64; 3]> = points.iter().map(local).collect();
    let mut bands = [(0.0, 0.0); 3];
    for (axis, band) in bands.iter_mut().enumerate() {
        let mut v: Vec<f64> = coords.iter().map(|p| p[axis]).collect();
        v.sort_by(f64::total_cmp);
        let (lo, hi) = (percentile(&v, 0.01), percentile(&v, 0.99));
        let pad = (hi - lo) * TRIM_MARGIN;
        *band = (lo - pad, hi + pad);
    }
    points
        .iter()
        .zip(&coords)
        .filter(|(_, q)| (0..3).all(|a| q[a] >= bands[a].0 && q[a] <= bands[a].1))
        .map(|(p, _)| *p)
        .collect()
}

fn is_near_line(points: &[Vector3<f64>], tol: f64) -> bool {
    let a = points[0];
    let b = points
        .iter()
        .max_by(|p, q| (*p - a).norm_squared().total_cmp(&(*q - a).norm_squared()))
        .copied()
        .unwrap_or(a);
    let dir = b - a;
    let len = dir.norm();
    if len <= tol {
        return true;
    }
    let dir = dir / len;
    points.iter().all(|p| {
        let d = p - a;
        (d - dir * d.dot(&dir)).norm() <= tol
    })
}

fn normalize_quarter_turn(mut yaw: f64) -> f64 {
    yaw = yaw.rem_euclid(FRAC_PI_2);
    if (FRAC_PI_2 - yaw) < 1e-12 {
        0.0
    } else {
        yaw
    }
}

/// Extents of `pts` along the frame rotated by `yaw`: (min_u, max_u, min_v, max_v).
fn extents(pts: &[Vector2<f64>], yaw: f64) -> (f64, f64, f64, f64) {
    let (s, c) = yaw.sin_cos();
    let ax = Vector2::new(c, s);
    let ay = Vector2::new(-s, c);
    let mut e = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        let (u, v) = (p.dot(&ax), p.dot(&ay));
        e.0 = e.0.min(u);
        e.1 = e.1.max(u);
        e.2 = e.2.min(v);
        e.3 = e.3.max(v);
    }
    e
}

/// Minimum-footprint gravity-aligned box around a cloud (rotating calipers
/// over the XY hull). Yaw is reported in `[0, π/2)`; among equal-area
/// candidates the smaller yaw wins.
pub fn fit_oriented_box(cloud: &PointCloud3) -> Result<OrientedBox3, GeometryError> {
    if cloud.len() < 4 || is_near_line(cloud.points(), 1e-3) {
        return Err(GeometryError::DegenerateCloud);
    }
    // Trimming happens in the frame of the previous fit so the result turns
    // with the cloud.
    let all = cloud.points();
    let mut yaw = min_area_yaw(&convex_hull_2d(&xy_of(all)));
    let mut kept = all.to_vec();
    for _ in 0..2 {
        let t = trimmed(all, yaw);
        if t.len() < 4 {
            break;
        }
        kept = t;
        yaw = min_area_yaw(&convex_hull_2d(&xy_of(&kept)));
    }
    let hull = convex_hull_2d(&xy_of(&kept));
    let (u0, u1, v0, v1) = extents(&hull, yaw);
    let (s, c) = yaw.sin_cos();
    let (uc, vc) = ((u0 + u1) / 2.0, (v0 + v1) / 2.0);
    let center_xy = Vector2::new(c, s) * uc + Vector2::new(-s, c) * vc;

    let (zmin, zmax) = kept
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.z), hi.max(p.z)));

    Ok(OrientedBox3 {
        center: Vector3::new(center_xy.x, center_xy.y, (zmin + zmax) / 2.0),
        half_extents: Vector3::new(
            ((u1 - u0) / 2.0).max(MIN_HALF_EXTENT),
            ((v1 - v0) / 2.0).max(MIN_HALF_EXTENT),
            ((zmax - zmin) / 2.0).max(MIN_HALF_EXTENT),
        ),
        yaw,
    })
}

fn xy_of(points: &[Vector3<f64>]) -> Vec<Vector2<f64>> {
    points.iter().map(|p| Vector2::new(p.x, p.y)).collect()
}

fn min_area_yaw(hull: &[Vector2<f64>]) -> f64 {
    let mut candidates: Vec<f64> = Vec::new();
    if hull.len() >= 2 {
        let n = if hull.len() == 2 { 1 } else { hull.len() };
        for i in 0..n {
            let e = hull[(i + 1) % hull.len()] - hull[i];
            candidates.push(normalize_quarter_turn(e.y.atan2(e.x)));
        }
    } else {
        candidates.push(0.0);
    }
    candidates.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64)> = None;
    for &yaw in &candidates {
        let (u0, u1, v0, v1) = extents(hull, yaw);
        let area = (u1 - u0) * (v1 - v0);
        match best {
            Some((_, a)) if area >= a - 1e-9 * a.max(1.0) => {}
            _ => best = Some((yaw, area)),
        }
    }
    best.map(|(y, _)| y).unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rotz(p: Vector3<f64>, a: f64) -> Vector3<f64> {
        let (s, c) = a.sin_cos();
        Vector3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z)
    }

    fn cube_corners() -> Vec<Vector3<f64>> {
        let mut v = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    v.push(Vector3::new(x, y, z));
                }
            }
        }
        v
    }

    fn yaw_diff_mod_quarter(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(FRAC_PI_2);
        d.min(FRAC_PI_2 - d)
    }

    #[test]
    fn unit_cube() {
        let b = fit_oriented_box(&PointCloud3::from_points(cube_corners())).unwrap();
        assert!((b.center - Vector3::new(0.5, 0.5, 0.5)).norm() < 1e-9);
        assert!((b.half_extents - Vector3::new(0.5, 0.5, 0.5)).norm() < 1e-9);
        assert_eq!(b.yaw, 0.0);
    }

    #[test]
    fn rotated_cube_recovers_yaw() {
        let a = 30f64.to_radians();
        let pts: Vec<_> = cube_corners().into_iter().map(|p| rotz(p, a)).collect();
        let b = fit_oriented_box(&PointCloud3::from_points(pts)).unwrap();
        assert!(yaw_diff_mod_quarter(b.yaw, a) < 1e-9);
        assert!((b.half_extents - Vector3::new(0.5, 0.5, 0.5)).norm() < 1e-6);
    }

    #[test]
    fn sampled_box_area() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<_> = (0..1000)
            .map(|_| {
                let p = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-0.5..0.5), rng.gen_range(0.0..2.0));
                rotz(p, 0.7) + Vector3::new(3.0, -1.0, 0.0)
            })
            .collect();
        let cloud = PointCloud3::from_points(pts);
        let b = fit_oriented_box(&cloud).unwrap();
        assert!((b.footprint_area() - 4.0).abs() / 4.0 < 0.02, "area {}", b.footprint_area());
        let inside = cloud.iter().filter(|p| b.contains(p, 1e-9)).count();
        assert!(inside as f64 >= 0.99 * cloud.len() as f64);
        assert!(b.contains(&b.center, 0.0) && b.volume() > 0.0);
    }

    #[test]
    fn outliers_are_trimmed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pts: Vec<_> = (0..2000)
            .map(|_| Vector3::new(rng.gen_range(0.0..2.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)))
            .collect();
        pts.push(Vector3::new(15.0, 0.5, 0.5));
        let b = fit_oriented_box(&PointCloud3::from_points(pts)).unwrap();
        assert!(b.half_extents.x.max(b.half_extents.y) < 1.1);
    }

    #[test]
    fn collinear_cloud_is_degenerate() {
        let pts: Vec<_> = (0..50).map(|i| Vector3::new(i as f64 * 0.1, i as f64 * 0.2, 0.0005)).collect();
        assert!(matches!(fit_oriented_box(&PointCloud3::from_points(pts)), Err(GeometryError::DegenerateCloud)));
        assert!(fit_oriented_box(&PointCloud3::from_points(cube_corners()[..3].to_vec())).is_err());
    }

    #[test]
    fn footprint_never_exceeds_axis_aligned_rectangle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let pts: Vec<_> = (0..60)
                .map(|_| Vector3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-1.0..1.0) * rng.gen_range(0.1..2.0), rng.gen_range(0.0..1.0)))
                .collect();
            let cloud = PointCloud3::from_points(pts);
            let b = fit_oriented_box(&cloud).unwrap();
            let xy: Vec<_> = cloud.iter().map(|p| Vector2::new(p.x, p.y)).collect();
            let (u0, u1, v0, v1) = extents(&xy, 0.0);
            assert!(b.footprint_area() <= (u1 - u0) * (v1 - v0) + 1e-9);
        }
    }

    #[test]
    fn yaw_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let base: Vec<_> = (0..300)
            .map(|_| Vector3::new(rng.gen_range(0.0..3.0), rng.gen_range(0.0..1.2), rng.gen_range(0.0..1.0)))
            .collect();
        let b0 = fit_oriented_box(&PointCloud3::from_points(base.clone())).unwrap();
        for _ in 0..20 {
            let th = rng.gen_range(-3.0..3.0);
            let b = fit_oriented_box(&PointCloud3::from_points(base.iter().map(|p| rotz(*p, th)))).unwrap();
            assert!(yaw_diff_mod_quarter(b.yaw, b0.yaw + th) < 1e-6);
            let mut e0 = [b0.half_extents.x, b0.half_extents.y];
            let mut e1 = [b.half_extents.x, b.half_extents.y];
            e0.sort_by(f64::total_cmp);
            e1.sort_by(f64::total_cmp);
            assert!((e0[0] - e1[0]).abs() < 1e-6 && (e0[1] - e1[1]).abs() < 1e-6);
            assert!((b.half_extents.z - b0.half_extents.z).abs() < 1e-6);
        }
    }

    #[test]
    fn hull_of_square_with_interior_points() {
        let pts = vec![
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(1.0, 1.0),
            Vector2::new(0.0, 1.0),
            Vector2::new(0.5, 0.5),
            Vector2::new(0.5, 0.0),
        ];
        let h = convex_hull_2d(&pts);
        assert_eq!(h.len(), 4);
    }
}
