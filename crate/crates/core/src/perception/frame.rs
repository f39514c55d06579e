use serde::{Deserialize, Serialize};

use crate::geometry::{CameraIntrinsics, Pose3};

/// Binary mask as alternating run lengths over row-major pixels, starting
/// with a (possibly empty) run of zeros.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub width: u32,
    pub height: u32,
    pub counts: Vec<u32>,
}

impl RleMask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            counts: vec![width * height],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: &[bool]) -> Self {
        assert_eq!(bits.len(), (width * height) as usize, "mask size mismatch");
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for &b in bits {
            if b != current {
                counts.push(run);
                run = 0;
                current = b;
            }
            run += 1;
        }
        counts.push(run);
        Self { width, height, counts }
    }

    pub fn to_bits(&self) -> Vec<bool> {
        let mut bits = Vec::with_capacity((self.width * self.height) as usize);
        for (i, &c) in self.counts.iter().enumerate() {
            bits.extend(std::iter::repeat(i % 2 == 1).take(c as usize));
        }
        bits
    }

    pub fn is_consistent(&self) -> bool {
        self.counts.iter().map(|&c| c as u64).sum::<u64>() == self.width as u64 * self.height as u64
    }

    pub fn count(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    /// Set pixels as (u, v), row-major.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        let mut offset = 0u64;
        self.counts.iter().enumerate().flat_map(move |(i, &c)| {
            let start = offset;
            offset += c as u64;
            let range = if i % 2 == 1 { start..start + c as u64 } else { 0..0 };
            range.map(move |p| ((p % w as u64) as u32, (p / w as u64) as u32))
        })
    }

    /// Inclusive-exclusive pixel bounds (x0, y0, x1, y1) of the set pixels.
    pub fn bounds(&self) -> Option<(u32, u32, u32, u32)> {
        let mut b: Option<(u32, u32, u32, u32)> = None;
        for (u, v) in self.pixels() {
            b = Some(match b {
                None => (u, v, u + 1, v + 1),
                Some((x0, y0, x1, y1)) => (x0.min(u), y0.min(v), x1.max(u + 1), y1.max(v + 1)),
            });
        }
        b
    }
}

/// Depth raster in sensor units; `0` marks an invalid pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u16>,
}

impl DepthImage {
    /// Quantize metric depths with `scale` meters per unit. Non-finite,
    /// non-positive or out-of-range values become invalid.
    pub fn from_meters(width: u32, height: u32, meters: &[f64], scale: f64) -> Self {
        let data = meters
            .iter()
            .map(|&m| {
                if !m.is_finite() || m <= 0.0 {
                    return 0;
                }
                let q = (m / scale).round();
                if q >= 1.0 && q <= u16::MAX as f64 {
                    q as u16
                } else {
                    0
                }
            })
            .collect();
        Self { width, height, data }
    }

    pub fn raw(&self, u: u32, v: u32) -> u16 {
        self.data[(v * self.width + u) as usize]
    }

    pub fn meters(&self, u: u32, v: u32, scale: f64) -> Option<f64> {
        if u >= self.width || v >= self.height {
            return None;
        }
        match self.raw(u, v) {
            0 => None,
            d => Some(d as f64 * scale),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_label: String,
    pub bbox_px: [u32; 4],
    pub score: f64,
    /// Instance mask, when the detector provides one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<RleMask>,
}

impl Detection {
    pub fn is_valid(&self, width: u32, height: u32) -> bool {
        let [x0, y0, x1, y1] = self.bbox_px;
        x0 < x1 && y0 < y1 && x1 <= width && y1 <= height && (0.0..=1.0).contains(&self.score)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignMask {
    pub mask: RleMask,
    /// Encoded image of the sign region handed to the VLM for parsing.
    pub crop: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub timestamp: f64,
    pub pose: Pose3,
    pub intrinsics: CameraIntrinsics,
    /// Manifest-relative path of the colour image, if recorded.
    pub rgb_ref: Option<String>,
    pub depth: DepthImage,
    pub depth_scale: f64,
    pub detections: Vec<Detection>,
    pub path_mask: RleMask,
    pub sign_masks: Vec<SignMask>,
}

impl Frame {
    pub fn depth_m(&self, u: u32, v: u32) -> Option<f64> {
        self.depth.meters(u, v, self.depth_scale)
    }

    /// First violated invariant, if any.
    pub fn check(&self) -> Result<(), (String, String)> {
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        if self.depth.width != w || self.depth.height != h || self.depth.data.len() != (w * h) as usize {
            return Err(("depth".into(), "size differs from intrinsics".into()));
        }
        if self.path_mask.width != w || self.path_mask.height != h || !self.path_mask.is_consistent() {
            return Err(("path_mask".into(), "size differs from intrinsics".into()));
        }
        for m in &self.sign_masks {
            if m.mask.width != w || m.mask.height != h || !m.mask.is_consistent() {
                return Err(("sign_masks".into(), "size differs from intrinsics".into()));
            }
        }
        for d in &self.detections {
            if !d.is_valid(w, h) {
                return Err(("detections".into(), format!("invalid detection {:?}", d.bbox_px)));
            }
            if let Some(m) = &d.mask {
                if m.width != w || m.height != h || !m.is_consistent() {
                    return Err(("detections".into(), "mask size differs from intrinsics".into()));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rle_layout() {
        let m = RleMask::from_bits(3, 2, &[true, true, false, false, false, true]);
        assert_eq!(m.counts, vec![0, 2, 3, 1]);
        assert_eq!(m.count(), 3);
        assert_eq!(m.pixels().collect::<Vec<_>>(), vec![(0, 0), (1, 0), (2, 1)]);
        assert_eq!(m.bounds(), Some((0, 0, 3, 2)));
        assert_eq!(RleMask::empty(3, 2).bounds(), None);
    }

    #[test]
    fn depth_quantization() {
        let d = DepthImage::from_meters(4, 1, &[2.0, 0.0, f64::NAN, 1e9], 0.001);
        assert_eq!(d.data, vec![2000, 0, 0, 0]);
        assert_eq!(d.meters(0, 0, 0.001), Some(2.0));
        assert_eq!(d.meters(1, 0, 0.001), None);
        assert_eq!(d.meters(9, 0, 0.001), None);
    }

    proptest! {
        #[test]
        fn rle_round_trip(bits in proptest::collection::vec(any::<bool>(), 12)) {
            let m = RleMask::from_bits(4, 3, &bits);
            prop_assert!(m.is_consistent());
            prop_assert_eq!(m.to_bits(), bits.clone());
            prop_assert_eq!(m.count() as usize, bits.iter().filter(|b| **b).count());
        }
    }
}
