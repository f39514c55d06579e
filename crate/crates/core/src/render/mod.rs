//! Sign-centred abstract top view: polygon, frontiers, labelled boxes, and
//! the raster plus machine-readable sidecar handed to the grounder.

mod frame;
mod frontiers;
mod polygon;
pub(crate) mod raster;

use std::f64::consts::FRAC_PI_2;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use frame::{sign_frame, SignFrame};
pub use frontiers::{classify_vertices, convex_runs, find_frontiers, letter, reading_angle, turning_angles, Frontier, Run, Vertex};
pub use polygon::{boundary_distance, point_segment_distance, contains, extract_polygon, is_simple, perimeter, signed_area, simplify_closed};

use crate::perception::png_io;
use crate::scene::AtomMap;
use raster::{Canvas, BLACK, BOX_BLUE, LIGHT_GRAY, WHITE};

pub const RENDER_VERSION: u32 = 1;
/// iTXt keyword carrying the sidecar inside the PNG.
pub const SIDECAR_KEY: &str = "atomnav-sidecar";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("sign {0} normal is too close to vertical to define a frame")]
    AmbiguousFrame(u32),
    #[error("only {0} path points near the sign (need 100)")]
    EmptyScene(usize),
    #[error("no sign with id {0}")]
    UnknownSign(u32),
    #[error("image carries no readable sidecar: {0}")]
    BadImage(String),
    #[error("invalid render config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub cell: f64,
    pub simplify_eps: f64,
    pub reflex_eps: f64,
    pub min_protrusion_len: f64,
    pub radius: f64,
    pub image_px: u32,
    /// Structures below this confidence are left out.
    pub min_confidence: f64,
    /// Total turn (radians) that makes a chain of corners a path end.
    pub tip_turn: f64,
    /// A protrusion splits into one frontier per path end when the border
    /// between ends is at least this many times longer than the ends.
    pub split_ratio: f64,
    /// Align the view with the sign; when false the world axes are kept.
    pub rotate: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            cell: 0.10,
            simplify_eps: 0.30,
            reflex_eps: 0.087,
            min_protrusion_len: 0.6,
            radius: 12.0,
            image_px: 1024,
            min_confidence: 0.0,
            tip_turn: 0.75 * std::f64::consts::PI,
            split_ratio: 2.0,
            rotate: true,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), RenderError> {
        for (name, v) in [
            ("cell", self.cell),
            ("simplify_eps", self.simplify_eps),
            ("reflex_eps", self.reflex_eps),
            ("min_protrusion_len", self.min_protrusion_len),
            ("radius", self.radius),
            ("tip_turn", self.tip_turn),
            ("split_ratio", self.split_ratio),
        ] {
            if !(v > 0.0) {
                return Err(RenderError::Config(format!("{name} must be positive")));
            }
        }
        if self.image_px < 256 {
            return Err(RenderError::Config("image_px must be at least 256".into()));
        }
        Ok(())
    }
}

/// A structure footprint in the sign frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxAnnotation {
    pub label: String,
    pub class_label: String,
    pub structure_id: u32,
    pub center: Vector2<f64>,
    pub half_extents: Vector2<f64>,
    pub yaw: f64,
    pub corners: [Vector2<f64>; 4],
}

/// Everything drawn in the image, in sign-frame meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub render_version: u32,
    pub center_sign_id: u32,
    pub frame: SignFrame,
    pub radius: f64,
    pub image_px: u32,
    pub polygon: Vec<Vector2<f64>>,
    pub frontiers: Vec<Frontier>,
    pub boxes: Vec<BoxAnnotation>,
}

impl Sidecar {
    pub fn to_json(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("sidecar serializes");
        v.push(b'\n');
        v
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, RenderError> {
        serde_json::from_slice(bytes).map_err(|e| RenderError::BadImage(e.to_string()))
    }

    /// Read the sidecar embedded in a rendered PNG.
    pub fn from_png(png: &[u8]) -> Result<Self, RenderError> {
        let text = png_io::text_chunk(png, SIDECAR_KEY).ok_or_else(|| RenderError::BadImage("no sidecar chunk".into()))?;
        Self::from_json(text.as_bytes())
    }

    pub fn frontier(&self, letter: &str) -> Option<&Frontier> {
        self.frontiers.iter().find(|f| f.letter == letter)
    }

    pub fn box_by_label(&self, label: &str) -> Option<&BoxAnnotation> {
        self.boxes.iter().find(|b| b.label == label)
    }

    /// Pixel position of a sign-frame point.
    pub fn to_pixel(&self, p: &Vector2<f64>) -> Vector2<f64> {
        let s = self.image_px as f64 / (2.0 * self.radius);
        Vector2::new((p.x + self.radius) * s, (self.radius - p.y) * s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomRender {
    pub sidecar: Sidecar,
    /// PNG bytes; the sidecar JSON rides along in an iTXt chunk.
    pub image: Vec<u8>,
}

impl AtomRender {
    pub fn center_sign_id(&self) -> u32 {
        self.sidecar.center_sign_id
    }

    pub fn frame(&self) -> &SignFrame {
        &self.sidecar.frame
    }

    pub fn polygon(&self) -> &[Vector2<f64>] {
        &self.sidecar.polygon
    }

    pub fn frontiers(&self) -> &[Frontier] {
        &self.sidecar.frontiers
    }

    pub fn boxes(&self) -> &[BoxAnnotation] {
        &self.sidecar.boxes
    }

    pub fn from_png(png: Vec<u8>) -> Result<Self, RenderError> {
        Ok(Self {
            sidecar: Sidecar::from_png(&png)?,
            image: png,
        })
    }
}

fn box_annotation(s: &crate::scene::StructureInstance, frame: &SignFrame) -> BoxAnnotation {
    let center = frame.to_local3(&s.bbox.center);
    let mut yaw = (s.bbox.yaw - frame.angle()).rem_euclid(std::f64::consts::PI);
    let mut he = Vector2::new(s.bbox.half_extents.x, s.bbox.half_extents.y);
    if yaw >= FRAC_PI_2 {
        yaw -= FRAC_PI_2;
        he = Vector2::new(he.y, he.x);
    }
    let corners = s.bbox.corners_xy().map(|c| frame.to_local(&c));
    BoxAnnotation {
        label: s.label(),
        class_label: s.class_label.clone(),
        structure_id: s.id,
        center,
        half_extents: he,
        yaw,
        corners,
    }
}

fn draw(sidecar: &Sidecar) -> Vec<u8> {
    let px = sidecar.image_px;
    let scale = px as f64 / 1024.0;
    let mut cv = Canvas::new(px, px, WHITE);
    let poly: Vec<Vector2<f64>> = sidecar.polygon.iter().map(|p| sidecar.to_pixel(p)).collect();
    cv.fill_polygon(&poly, LIGHT_GRAY);
    cv.polyline_closed(&poly, (3.0 * scale).max(1.0), BLACK);
    let text_scale = ((2.0 * scale).round() as i64).max(1);
    for b in &sidecar.boxes {
        let corners: Vec<Vector2<f64>> = b.corners.iter().map(|c| sidecar.to_pixel(c)).collect();
        cv.polyline_closed(&corners, (3.0 * scale).max(1.0), BOX_BLUE);
        let c = sidecar.to_pixel(&b.center);
        cv.text(&b.label, c, text_scale, BOX_BLUE);
    }
    let r = 16.0 * scale.max(0.5);
    for f in &sidecar.frontiers {
        let c = sidecar.to_pixel(&f.point);
        cv.disc(c, r, WHITE);
        cv.ring(c, r, (3.0 * scale).max(1.0), BLACK);
        cv.text(&f.letter, c, ((3.0 * scale).round() as i64).max(1), BLACK);
    }
    let json = String::from_utf8(sidecar.to_json()).expect("utf-8 json");
    png_io::encode_rgb8(px, px, &cv.data, &[(SIDECAR_KEY, &json)])
}

/// Sign-centred top view of `map` around sign `sign_id`.
pub fn render(map: &AtomMap, sign_id: u32, cfg: &RenderConfig) -> Result<AtomRender, RenderError> {
    cfg.validate()?;
    let sign = map.sign(sign_id).ok_or(RenderError::UnknownSign(sign_id))?;
    let frame = if cfg.rotate {
        sign_frame(sign)?
    } else {
        SignFrame::world_aligned(Vector2::new(sign.centroid.x, sign.centroid.y))
    };
    let polygon = extract_polygon(&map.path_cloud, &frame, cfg)?;
    let frontiers = find_frontiers(&polygon, cfg);
    let mut boxes: Vec<BoxAnnotation> = map
        .structures
        .iter()
        .filter(|s| s.confidence >= cfg.min_confidence)
        .map(|s| box_annotation(s, &frame))
        .filter(|b| b.center.x.abs() <= cfg.radius && b.center.y.abs() <= cfg.radius)
        .collect();
    boxes.sort_by_key(|b| b.structure_id);
    let sidecar = Sidecar {
        render_version: RENDER_VERSION,
        center_sign_id: sign_id,
        frame,
        radius: cfg.radius,
        image_px: cfg.image_px,
        polygon,
        frontiers,
        boxes,
    };
    let image = draw(&sidecar);
    Ok(AtomRender { sidecar, image })
}
