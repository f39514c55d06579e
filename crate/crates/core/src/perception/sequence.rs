use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::png_io::{self, Pixels};
use super::{DepthImage, Detection, Frame, PerceptionError, RleMask, SignMask};
use crate::geometry::{CameraIntrinsics, Pose3};

pub const SEQUENCE_VERSION: u32 = 1;
pub const MANIFEST: &str = "sequence.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub atomnav_sequence: u32,
    pub intrinsics: CameraIntrinsics,
    pub depth_scale: f64,
    pub frames: Vec<FrameEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub t: f64,
    pub pose: Pose3,
    pub assets: Assets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assets {
    pub depth: String,
    pub path_mask: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign_masks: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rgb: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct SignMaskWire {
    rle: RleMask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    crop: Option<String>,
}

/// A recorded sequence on disk. Frames are loaded on demand.
#[derive(Debug, Clone)]
pub struct Sequence {
    root: PathBuf,
    manifest: Manifest,
}

pub fn read_sequence(dir: &Path) -> Result<Sequence, PerceptionError> {
    Sequence::open(dir)
}

impl Sequence {
    pub fn open(dir: &Path) -> Result<Self, PerceptionError> {
        let path = dir.join(MANIFEST);
        let bytes = std::fs::read(&path).map_err(|_| PerceptionError::NotASequence(dir.display().to_string()))?;
        let manifest: Manifest =
            serde_json::from_slice(&bytes).map_err(|e| PerceptionError::Manifest(format!("{}: {e}", path.display())))?;
        if manifest.atomnav_sequence != SEQUENCE_VERSION {
            return Err(PerceptionError::Manifest(format!(
                "unsupported atomnav_sequence {}",
                manifest.atomnav_sequence
            )));
        }
        if !(manifest.depth_scale > 0.0) {
            return Err(PerceptionError::Manifest("depth_scale must be positive".into()));
        }
        manifest
            .intrinsics
            .validate()
            .map_err(|e| PerceptionError::Manifest(e.to_string()))?;
        Ok(Self {
            root: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.manifest.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.frames.is_empty()
    }

    /// Index of the frame recorded at `t` (within 1 µs).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.manifest.frames.iter().position(|f| (f.t - t).abs() <= 1e-6)
    }

    pub fn frames(&self) -> FrameIter<'_> {
        FrameIter {
            seq: self,
            next: 0,
            last_t: f64::NEG_INFINITY,
            failed: false,
        }
    }

    fn read_asset(&self, index: usize, asset: &str, rel: &str) -> Result<Vec<u8>, PerceptionError> {
        std::fs::read(self.root.join(rel)).map_err(|e| PerceptionError::frame(asset, index, format!("{rel}: {e}")))
    }

    pub fn load(&self, index: usize) -> Result<Frame, PerceptionError> {
        let entry = &self.manifest.frames[index];
        let k = self.manifest.intrinsics;
        let (w, h) = (k.width, k.height);

        let depth_png = self.read_asset(index, "depth", &entry.assets.depth)?;
        let depth = match png_io::decode(&depth_png).map_err(|e| PerceptionError::frame("depth", index, e))? {
            d if (d.width, d.height) != (w, h) => {
                return Err(PerceptionError::frame("depth", index, "size differs from intrinsics"))
            }
            png_io::Decoded {
                pixels: Pixels::Gray16(data),
                ..
            } => DepthImage { width: w, height: h, data },
            _ => return Err(PerceptionError::frame("depth", index, "expected 16-bit grayscale")),
        };

        let path_png = self.read_asset(index, "path_mask", &entry.assets.path_mask)?;
        let path_mask = match png_io::decode(&path_png).map_err(|e| PerceptionError::frame("path_mask", index, e))? {
            d if (d.width, d.height) != (w, h) => {
                return Err(PerceptionError::frame("path_mask", index, "size differs from intrinsics"))
            }
            png_io::Decoded {
                pixels: Pixels::Gray8(data),
                ..
            } => RleMask::from_bits(w, h, &data.iter().map(|&b| b > 0).collect::<Vec<_>>()),
            _ => return Err(PerceptionError::frame("path_mask", index, "expected 8-bit grayscale")),
        };

        let rgb = match &entry.assets.rgb {
            Some(rel) => Some(self.read_asset(index, "rgb", rel)?),
            None => None,
        };

        let mut sign_masks = Vec::new();
        if let Some(rel) = &entry.assets.sign_masks {
            let bytes = self.read_asset(index, "sign_masks", rel)?;
            let wire: Vec<SignMaskWire> =
                serde_json::from_slice(&bytes).map_err(|e| PerceptionError::frame("sign_masks", index, e.to_string()))?;
            for m in wire {
                let crop = match &m.crop {
                    Some(rel) => Some(self.read_asset(index, "sign_masks", rel)?),
                    None => rgb.as_deref().and_then(|img| crop_png(img, &m.rle)),
                };
                sign_masks.push(SignMask { mask: m.rle, crop });
            }
        }

        let detections = match &entry.assets.detections {
            Some(rel) => {
                let bytes = self.read_asset(index, "detections", rel)?;
                serde_json::from_slice::<Vec<Detection>>(&bytes)
                    .map_err(|e| PerceptionError::frame("detections", index, e.to_string()))?
            }
            None => Vec::new(),
        };

        let frame = Frame {
            timestamp: entry.t,
            pose: entry.pose,
            intrinsics: k,
            rgb_ref: entry.assets.rgb.clone(),
            depth,
            depth_scale: self.manifest.depth_scale,
            detections,
            path_mask,
            sign_masks,
        };
        frame
            .check()
            .map_err(|(asset, msg)| PerceptionError::frame(&asset, index, msg))?;
        Ok(frame)
    }
}

pub struct FrameIter<'a> {
    seq: &'a Sequence,
    next: usize,
    last_t: f64,
    failed: bool,
}

impl Iterator for FrameIter<'_> {
    type Item = Result<Frame, PerceptionError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.next >= self.seq.len() {
            return None;
        }
        let i = self.next;
        self.next += 1;
        let t = self.seq.manifest.frames[i].t;
        if !(t > self.last_t) {
            self.failed = true;
            return Some(Err(PerceptionError::Ordering {
                index: i,
                previous: self.last_t,
                t,
            }));
        }
        self.last_t = t;
        let r = self.seq.load(i);
        self.failed = r.is_err();
        Some(r)
    }
}

/// Bounding-box crop of an 8-bit RGB(A)/gray PNG around the mask.
fn crop_png(img: &[u8], mask: &RleMask) -> Option<Vec<u8>> {
    let d = png_io::decode(img).ok()?;
    if (d.width, d.height) != (mask.width, mask.height) {
        return None;
    }
    let (x0, y0, x1, y1) = mask.bounds()?;
    let channels = match &d.pixels {
        Pixels::Gray8(_) => 1,
        Pixels::Rgb8(_) => 3,
        Pixels::Rgba8(_) => 4,
        Pixels::Gray16(_) => return None,
    };
    let data = match &d.pixels {
        Pixels::Gray8(v) | Pixels::Rgb8(v) | Pixels::Rgba8(v) => v,
        Pixels::Gray16(_) => unreachable!(),
    };
    let mut out = Vec::with_capacity(((x1 - x0) * (y1 - y0) * 3) as usize);
    for v in y0..y1 {
        for u in x0..x1 {
            let i = ((v * d.width + u) * channels) as usize;
            match channels {
                1 => out.extend([data[i]; 3]),
                _ => out.extend(&data[i..i + 3]),
            }
        }
    }
    Some(png_io::encode_rgb8(x1 - x0, y1 - y0, &out, &[]))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), PerceptionError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| PerceptionError::Io(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| PerceptionError::Io(format!("{}: {e}", path.display())))
}

/// Write frames as a sequence directory. All frames must share intrinsics
/// and depth scale. Colour references are kept as given.
pub fn write_sequence(dir: &Path, frames: &[Frame]) -> Result<Manifest, PerceptionError> {
    let first = frames
        .first()
        .ok_or_else(|| PerceptionError::Manifest("cannot write an empty sequence".into()))?;
    let mut entries = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        if f.intrinsics != first.intrinsics || f.depth_scale != first.depth_scale {
            return Err(PerceptionError::frame("intrinsics", i, "differs from first frame"));
        }
        f.check().map_err(|(asset, msg)| PerceptionError::frame(&asset, i, msg))?;
        let (w, h) = (f.intrinsics.width, f.intrinsics.height);
        let depth = format!("depth/{i:06}.png");
        write(&dir.join(&depth), &png_io::encode_gray16(w, h, &f.depth.data))?;
        let path_mask = format!("path/{i:06}.png");
        let bits: Vec<u8> = f.path_mask.to_bits().into_iter().map(|b| if b { 255 } else { 0 }).collect();
        write(&dir.join(&path_mask), &png_io::encode_gray8(w, h, &bits))?;

        let mut wire = Vec::new();
        for (j, m) in f.sign_masks.iter().enumerate() {
            let crop = match &m.crop {
                Some(bytes) => {
                    let rel = format!("signs/{i:06}_{j}.png");
                    write(&dir.join(&rel), bytes)?;
                    Some(rel)
                }
                None => None,
            };
            wire.push(SignMaskWire {
                rle: m.mask.clone(),
                crop,
            });
        }
        let sign_masks = format!("signs/{i:06}.json");
        write(&dir.join(&sign_masks), &serde_json::to_vec(&wire).expect("masks serialize"))?;
        let detections = format!("det/{i:06}.json");
        write(&dir.join(&detections), &serde_json::to_vec(&f.detections).expect("detections serialize"))?;

        entries.push(FrameEntry {
            t: f.timestamp,
            pose: f.pose,
            assets: Assets {
                depth,
                path_mask,
                sign_masks: Some(sign_masks),
                detections: Some(detections),
                rgb: f.rgb_ref.clone(),
            },
        });
    }
    let manifest = Manifest {
        atomnav_sequence: SEQUENCE_VERSION,
        intrinsics: first.intrinsics,
        depth_scale: first.depth_scale,
        frames: entries,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    write(&dir.join(MANIFEST), &bytes)?;
    Ok(manifest)
}
