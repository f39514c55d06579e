use std::collections::VecDeque;

use nalgebra::Vector2;

use super::{RenderConfig, RenderError, SignFrame};
use crate::geometry::PointCloud3;

/// Minimum number of path points within the render square.
const MIN_POINTS: usize = 100;
/// The component under the sign is preferred when it reaches this close.
const ADJACENT_RADIUS: f64 = 1.5;

pub fn signed_area(poly: &[Vector2<f64>]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i].perp(&poly[(i + 1) % n])).sum::<f64>() / 2.0
}

pub fn perimeter(poly: &[Vector2<f64>]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| (poly[(i + 1) % n] - poly[i]).norm()).sum()
}

pub fn point_segment_distance(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

pub fn boundary_distance(poly: &[Vector2<f64>], p: &Vector2<f64>) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| point_segment_distance(p, &poly[i], &poly[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

pub fn contains(poly: &[Vector2<f64>], p: &Vector2<f64>) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn segments_cross(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>, d: &Vector2<f64>) -> bool {
    let o = |p: &Vector2<f64>, q: &Vector2<f64>, r: &Vector2<f64>| (q - p).perp(&(r - p));
    let (d1, d2, d3, d4) = (o(c, d, a), o(c, d, b), o(a, b, c), o(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |p: &Vector2<f64>, q: &Vector2<f64>, r: &Vector2<f64>, v: f64| {
        v == 0.0 && r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    on(c, d, a, d1) || on(c, d, b, d2) || on(a, b, c, d3) || on(a, b, d, d4)
}

/// No two non-adjacent edges touch and no vertex repeats.
pub fn is_simple(poly: &[Vector2<f64>]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            if poly[i] == poly[j] {
                return false;
            }
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_cross(&poly[i], &poly[(i + 1) % n], &poly[j], &poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

fn dp_chain(pts: &[Vector2<f64>], eps: f64, keep: &mut [bool], lo: usize, hi: usize) {
    if hi <= lo + 1 {
        return;
    }
    let mut best = (0.0, lo);
    for i in lo + 1..hi {
        let d = point_segment_distance(&pts[i], &pts[lo], &pts[hi]);
        if d > best.0 {
            best = (d, i);
        }
    }
    if best.0 > eps {
        keep[best.1] = true;
        dp_chain(pts, eps, keep, lo, best.1);
        dp_chain(pts, eps, keep, best.1, hi);
    }
}

/// Douglas-Peucker on a closed loop, split at the two mutually farthest
/// vertices.
pub fn simplify_closed(poly: &[Vector2<f64>], eps: f64) -> Vec<Vector2<f64>> {
    let n = poly.len();
    if n <= 3 {
        return poly.to_vec();
    }
    let centroid = poly.iter().sum::<Vector2<f64>>() / n as f64;
    let far = |from: &Vector2<f64>| {
        (0..n)
            .max_by(|&i, &j| (poly[i] - from).norm_squared().total_cmp(&(poly[j] - from).norm_squared()))
            .expect("non-empty")
    };
    let a = far(&centroid);
    let b = far(&poly[a]);
    let (a, b) = (a.min(b), a.max(b));
    // unroll so the loop reads a..b..a
    let mut pts: Vec<Vector2<f64>> = poly[a..].to_vec();
    pts.extend_from_slice(&poly[..=a]);
    let mid = b - a;
    let mut keep = vec![false; pts.len()];
    keep[0] = true;
    keep[mid] = true;
    dp_chain(&pts, eps, &mut keep, 0, mid);
    dp_chain(&pts, eps, &mut keep, mid, pts.len() - 1);
    pts.pop();
    keep.pop();
    pts.into_iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p).collect()
}

struct Grid {
    n: usize,
    cells: Vec<bool>,
}

impl Grid {
    fn get(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.n && (y as usize) < self.n && self.cells[y as usize * self.n + x as usize]
    }

    fn morph(&self, dilate: bool) -> Grid {
        let mut out = vec![false; self.cells.len()];
        for y in 0..self.n as isize {
            for x in 0..self.n as isize {
                let mut any = false;
                let mut all = true;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let v = self.get(x + dx, y + dy);
                        any |= v;
                        all &= v;
                    }
                }
                out[y as usize * self.n + x as usize] = if dilate { any } else { all };
            }
        }
        Grid { n: self.n, cells: out }
    }
}

const DIRS: [(isize, isize); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

fn moore_trace(grid: &Grid, start: (isize, isize)) -> Vec<(isize, isize)> {
    // Trace until a (cell, backtrack) state repeats; the periodic part is
    // the border loop.
    let mut out = vec![start];
    let mut seen = rustc_hash::FxHashMap::default();
    let (mut cur, mut back) = (start, (start.0 - 1, start.1));
    seen.insert((cur, back), 0usize);
    loop {
        let k = DIRS
            .iter()
            .position(|d| (cur.0 + d.0, cur.1 + d.1) == back)
            .expect("backtrack is a neighbour");
        let mut found = None;
        let mut prev = back;
        for step in 1..=8 {
            let d = DIRS[(k + 8 - step) % 8];
            let c = (cur.0 + d.0, cur.1 + d.1);
            if grid.get(c.0, c.1) {
                found = Some(c);
                break;
            }
            prev = c;
        }
        let Some(next) = found else {
            return out;
        };
        back = prev;
        cur = next;
        if let Some(&i) = seen.get(&(cur, back)) {
            return out.split_off(i);
        }
        seen.insert((cur, back), out.len());
        out.push(cur);
    }
}

/// Border of the navigable region around the sign, in the sign frame.
pub fn extract_polygon(path_cloud: &PointCloud3, frame: &SignFrame, cfg: &RenderConfig) -> Result<Vec<Vector2<f64>>, RenderError> {
    let r = cfg.radius;
    let local: Vec<Vector2<f64>> = path_cloud
        .iter()
        .map(|p| frame.to_local3(p))
        .filter(|q| q.x.abs() <= r && q.y.abs() <= r)
        .collect();
    if local.len() < MIN_POINTS {
        return Err(RenderError::EmptyScene(local.len()));
    }
    const PAD: isize = 2;
    let inner = (2.0 * r / cfg.cell).ceil() as isize;
    let n = (inner + 2 * PAD) as usize;
    let mut grid = Grid {
        n,
        cells: vec![false; n * n],
    };
    for q in &local {
        let ix = (((q.x + r) / cfg.cell).floor() as isize).clamp(0, inner - 1) + PAD;
        let iy = (((q.y + r) / cfg.cell).floor() as isize).clamp(0, inner - 1) + PAD;
        grid.cells[iy as usize * n + ix as usize] = true;
    }
    let grid = grid.morph(true).morph(false);
    let center = |x: isize, y: isize| {
        Vector2::new(
            -r + ((x - PAD) as f64 + 0.5) * cfg.cell,
            -r + ((y - PAD) as f64 + 0.5) * cfg.cell,
        )
    };

    // 8-connected components in scan order
    let mut label = vec![usize::MAX; n * n];
    let mut sizes = Vec::new();
    for start in 0..n * n {
        if !grid.cells[start] || label[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        let mut queue = VecDeque::from([start]);
        label[start] = id;
        while let Some(c) = queue.pop_front() {
            size += 1;
            let (x, y) = ((c % n) as isize, (c / n) as isize);
            for d in DIRS {
                let (nx, ny) = (x + d.0, y + d.1);
                if grid.get(nx, ny) {
                    let ni = ny as usize * n + nx as usize;
                    if label[ni] == usize::MAX {
                        label[ni] = id;
                        queue.push_back(ni);
                    }
                }
            }
        }
        sizes.push(size);
    }
    if sizes.is_empty() {
        return Err(RenderError::EmptyScene(local.len()));
    }
    let nearest = (0..n * n)
        .filter(|&c| grid.cells[c])
        .map(|c| (center((c % n) as isize, (c / n) as isize).norm(), c))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("non-empty grid");
    let chosen = if nearest.0 <= ADJACENT_RADIUS {
        label[nearest.1]
    } else {
        (0..sizes.len()).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))).expect("components")
    };
    let comp = Grid {
        n,
        cells: label.iter().map(|&l| l == chosen).collect(),
    };
    let first = comp.cells.iter().position(|&c| c).expect("chosen component is non-empty");
    let trace = moore_trace(&comp, ((first % n) as isize, (first / n) as isize));
    let mut raw: Vec<Vector2<f64>> = trace.into_iter().map(|(x, y)| center(x, y)).collect();
    if raw.len() < 3 {
        return Err(RenderError::EmptyScene(local.len()));
    }
    if signed_area(&raw) < 0.0 {
        raw.reverse();
    }

    let mut eps = cfg.simplify_eps;
    let mut poly = simplify_closed(&raw, eps);
    while !(is_simple(&poly) && signed_area(&poly) > 0.0) && eps > cfg.cell / 4.0 {
        eps /= 2.0;
        poly = simplify_closed(&raw, eps);
    }
    if signed_area(&poly) < 0.0 {
        poly.reverse();
    }
    // canonical start: lowest y, then lowest x
    let start = (0..poly.len())
        .min_by(|&i, &j| poly[i].y.total_cmp(&poly[j].y).then(poly[i].x.total_cmp(&poly[j].x)))
        .expect("polygon has vertices");
    poly.rotate_left(start);
    Ok(poly)
}
