use std::f64::consts::PI;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::polygon::point_segment_distance;
use super::RenderConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vertex {
    Convex,
    Reflex,
    Neutral,
}

/// A frontier on the polygon border.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    pub letter: String,
    pub point: Vector2<f64>,
    /// Arc-length interval `[start, end]` of the protrusion, measured CCW
    /// from vertex 0; `end` may exceed the perimeter when the run wraps.
    pub interval: [f64; 2],
}

/// Maximal stretch of non-reflex vertices between two reflex vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub from_reflex: usize,
    pub to_reflex: usize,
    pub vertices: Vec<usize>,
    pub arc: f64,
}

/// Signed exterior turn at each vertex (positive = left turn on a CCW loop).
pub fn turning_angles(poly: &[Vector2<f64>]) -> Vec<f64> {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let a = poly[i] - poly[(i + n - 1) % n];
            let b = poly[(i + 1) % n] - poly[i];
            a.perp(&b).atan2(a.dot(&b))
        })
        .collect()
}

pub fn classify_vertices(poly: &[Vector2<f64>], reflex_eps: f64) -> Vec<Vertex> {
    turning_angles(poly)
        .into_iter()
        .map(|t| {
            if t > reflex_eps {
                Vertex::Convex
            } else if t < -reflex_eps {
                Vertex::Reflex
            } else {
                Vertex::Neutral
            }
        })
        .collect()
}

struct Arc {
    cum: Vec<f64>,
    total: f64,
}

impl Arc {
    fn new(poly: &[Vector2<f64>]) -> Self {
        let n = poly.len();
        let mut cum = Vec::with_capacity(n);
        let mut s = 0.0;
        for i in 0..n {
            cum.push(s);
            s += (poly[(i + 1) % n] - poly[i]).norm();
        }
        Self { cum, total: s }
    }

    /// CCW distance from vertex `i` to vertex `j` (a full loop when equal).
    fn between(&self, i: usize, j: usize) -> f64 {
        let d = self.cum[j] - self.cum[i];
        if d > 0.0 {
            d
        } else {
            d + self.total
        }
    }

    fn point_at(&self, poly: &[Vector2<f64>], s: f64) -> Vector2<f64> {
        let n = poly.len();
        let s = s.rem_euclid(self.total);
        let i = match self.cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let len = (b - a).norm();
        if len == 0.0 {
            a
        } else {
            a + (b - a) * ((s - self.cum[i]) / len)
        }
    }
}

/// Candidate protrusions: non-reflex stretches holding at least one convex
/// vertex, before any length filtering.
pub fn convex_runs(poly: &[Vector2<f64>], reflex_eps: f64) -> Vec<Run> {
    let n = poly.len();
    let kinds = classify_vertices(poly, reflex_eps);
    let reflex: Vec<usize> = (0..n).filter(|&i| kinds[i] == Vertex::Reflex).collect();
    if reflex.is_empty() {
        return Vec::new();
    }
    let arc = Arc::new(poly);
    let mut runs = Vec::new();
    for (k, &ra) in reflex.iter().enumerate() {
        let rb = reflex[(k + 1) % reflex.len()];
        let mut vertices = Vec::new();
        let mut i = (ra + 1) % n;
        while i != rb {
            vertices.push(i);
            i = (i + 1) % n;
        }
        if vertices.iter().any(|&v| kinds[v] == Vertex::Convex) {
            runs.push(Run {
                from_reflex: ra,
                to_reflex: rb,
                vertices,
                arc: arc.between(ra, rb),
            });
        }
    }
    runs
}

/// Disjoint minimal sub-chains of the run turning by at least `tip_turn`,
/// chosen shortest first. Returned as (first, last) positions within the run.
fn tips(run: &Run, turns: &[f64], arc: &Arc, tip_turn: f64) -> Vec<(usize, usize, f64)> {
    let m = run.vertices.len();
    let sum = |a: usize, b: usize| (a..=b).map(|p| turns[run.vertices[p]]).sum::<f64>();
    let mut candidates = Vec::new();
    for a in 0..m {
        for b in a..m {
            if sum(a, b) < tip_turn {
                continue;
            }
            let minimal = (b == a || sum(a + 1, b) < tip_turn) && (b == a || sum(a, b - 1) < tip_turn);
            if minimal {
                let len = if a == b { 0.0 } else { arc.between(run.vertices[a], run.vertices[b]) };
                candidates.push((a, b, len));
            }
            break;
        }
    }
    candidates.sort_by(|x, y| x.2.total_cmp(&y.2).then(x.0.cmp(&y.0)));
    let mut chosen: Vec<(usize, usize, f64)> = Vec::new();
    for c in candidates {
        if chosen.iter().all(|t| c.1 < t.0 || c.0 > t.1) {
            chosen.push(c);
        }
    }
    chosen.sort_by_key(|t| t.0);
    chosen
}

/// Letter order key: angle swept clockwise from the reader's left.
pub fn reading_angle(p: &Vector2<f64>) -> f64 {
    (PI - p.y.atan2(p.x)).rem_euclid(2.0 * PI)
}

pub fn letter(index: usize) -> String {
    let mut i = index;
    let mut s = Vec::new();
    loop {
        s.push(b'A' + (i % 26) as u8);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    s.reverse();
    String::from_utf8(s).expect("ascii")
}

/// Frontier points at the centres of the polygon's convex protrusions,
/// lettered in reading order.
pub fn find_frontiers(poly: &[Vector2<f64>], cfg: &RenderConfig) -> Vec<Frontier> {
    if poly.len() < 3 {
        return Vec::new();
    }
    let arc = Arc::new(poly);
    let turns = turning_angles(poly);
    let mut found: Vec<(Vector2<f64>, [f64; 2])> = Vec::new();

    let runs = convex_runs(poly, cfg.reflex_eps);
    let any_reflex = classify_vertices(poly, cfg.reflex_eps).contains(&Vertex::Reflex);
    if !any_reflex {
        // one protrusion spanning the whole loop: sample opposite the point
        // nearest the sign
        let n = poly.len();
        let (mut best, mut at) = (f64::INFINITY, 0.0);
        for i in 0..n {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let d = point_segment_distance(&Vector2::zeros(), &a, &b);
            if d < best {
                let ab = b - a;
                let t = if ab.norm_squared() > 0.0 {
                    (-a.dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                best = d;
                at = arc.cum[i] + t * ab.norm();
            }
        }
        let s = at + arc.total / 2.0;
        found.push((arc.point_at(poly, s), [0.0, arc.total]));
    }

    for run in runs.iter().filter(|r| r.arc >= cfg.min_protrusion_len) {
        let start = arc.cum[run.from_reflex];
        let t = tips(run, &turns, &arc, cfg.tip_turn);
        let split = t.len() >= 2
            && t.windows(2).all(|w| {
                let gap = arc.between(run.vertices[w[0].1], run.vertices[w[1].0]);
                gap >= cfg.split_ratio * w[0].2.max(w[1].2)
            });
        if split {
            for (a, _, len) in t {
                let s0 = arc.cum[run.vertices[a]];
                found.push((arc.point_at(poly, s0 + len / 2.0), [s0, s0 + len]));
            }
        } else {
            found.push((arc.point_at(poly, start + run.arc / 2.0), [start, start + run.arc]));
        }
    }

    found.sort_by(|a, b| {
        reading_angle(&a.0)
            .total_cmp(&reading_angle(&b.0))
            .then(a.0.norm().total_cmp(&b.0.norm()))
    });
    found
        .into_iter()
        .enumerate()
        .map(|(i, (point, interval))| Frontier {
            letter: letter(i),
            point,
            interval,
        })
        .collect()
}
