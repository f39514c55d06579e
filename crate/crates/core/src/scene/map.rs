use std::path::Path;

use base64::Engine;
use nalgebra::Vector3;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{NavCueSet, SceneError};
use crate::geometry::{OrientedBox3, PointCloud3, Pose3};

pub const ATOM_VERSION: u32 = 1;

/// One VLM parse of a sign, with the viewpoint it was taken from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseRecord {
    pub timestamp: f64,
    pub cues: NavCueSet,
    pub distance_m: f64,
    pub angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignInstance {
    pub id: u32,
    pub centroid: Vector3<f64>,
    /// Outward normal of the sign face (points toward a reader).
    pub normal: Vector3<f64>,
    pub parse_history: Vec<ParseRecord>,
    pub merged_cues: NavCueSet,
    pub observation_count: u32,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl SignInstance {
    pub fn new(id: u32, centroid: Vector3<f64>, normal: Vector3<f64>) -> Self {
        Self {
            id,
            centroid,
            normal: normal.normalize(),
            parse_history: Vec::new(),
            merged_cues: NavCueSet::new(),
            observation_count: 1,
            warnings: Vec::new(),
        }
    }

    pub fn has_parsed_content(&self) -> bool {
        !self.merged_cues.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureInstance {
    pub id: u32,
    pub class_label: String,
    #[serde(rename = "box")]
    pub bbox: OrientedBox3,
    pub confidence: f64,
    pub detection_count: u32,
    #[serde(serialize_with = "cloud_to_b64", deserialize_with = "cloud_from_b64")]
    pub fused_cloud: PointCloud3,
}

impl StructureInstance {
    pub fn label(&self) -> String {
        format!("{} #{}", self.class_label, self.id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameLogEntry {
    pub t: f64,
    pub pose: Pose3,
}

/// The 3D layer of an abstract top-view map.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AtomMap {
    pub signs: Vec<SignInstance>,
    pub structures: Vec<StructureInstance>,
    pub path_cloud: PointCloud3,
    pub frame_log: Vec<FrameLogEntry>,
}

impl AtomMap {
    pub fn sign(&self, id: u32) -> Option<&SignInstance> {
        self.signs.iter().find(|s| s.id == id)
    }

    pub fn last_pose(&self) -> Option<&Pose3> {
        self.frame_log.last().map(|f| &f.pose)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let mut ids: Vec<u32> = self.signs.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(SceneError::Invalid("duplicate sign id".into()));
        }
        let mut ids: Vec<u32> = self.structures.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(SceneError::Invalid("duplicate structure id".into()));
        }
        for s in &self.signs {
            if (s.normal.norm() - 1.0).abs() > 1e-6 {
                return Err(SceneError::Invalid(format!("sign {} normal is not unit length", s.id)));
            }
            if (s.observation_count as usize) < s.parse_history.len() || s.observation_count == 0 {
                return Err(SceneError::Invalid(format!("sign {} observation count too small", s.id)));
            }
        }
        Ok(())
    }
}

fn cloud_to_b64<S: Serializer>(cloud: &PointCloud3, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(cloud.to_bytes()))
}

fn cloud_from_b64<'de, D: Deserializer<'de>>(d: D) -> Result<PointCloud3, D::Error> {
    let s = String::deserialize(d)?;
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(s.as_bytes())
        .map_err(serde::de::Error::custom)?;
    PointCloud3::from_bytes(&bytes).map_err(serde::de::Error::custom)
}

#[derive(Serialize, Deserialize)]
struct InlineCloud(
    #[serde(serialize_with = "cloud_to_b64", deserialize_with = "cloud_from_b64")] PointCloud3,
);

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum CloudRef {
    Inline(InlineCloud),
    File(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomWire {
    #[serde(deserialize_with = "version")]
    atom_version: u32,
    signs: Vec<SignInstance>,
    structures: Vec<StructureInstance>,
    path_cloud: CloudRef,
    frame_log: Vec<FrameLogEntry>,
}

fn version<'de, D: Deserializer<'de>>(d: D) -> Result<u32, D::Error> {
    let v = u32::deserialize(d)?;
    if v != ATOM_VERSION {
        return Err(serde::de::Error::custom(format!("unsupported atom_version {v}")));
    }
    Ok(v)
}

fn encode(map: &AtomMap, cloud: CloudRef) -> Vec<u8> {
    let wire = AtomWire {
        atom_version: ATOM_VERSION,
        signs: map.signs.clone(),
        structures: map.structures.clone(),
        path_cloud: cloud,
        frame_log: map.frame_log.clone(),
    };
    let mut out = serde_json::to_vec_pretty(&wire).expect("map serializes");
    out.push(b'\n');
    out
}

/// Canonical JSON encoding with the path cloud inlined as base64.
/// Equal maps produce identical bytes.
pub fn serialize_atom(map: &AtomMap) -> Vec<u8> {
    encode(map, CloudRef::Inline(InlineCloud(map.path_cloud.clone())))
}

fn offset_of(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut current = 1;
    let mut start = 0;
    for (i, b) in bytes.iter().enumerate() {
        if current == line {
            break;
        }
        if *b == b'\n' {
            current += 1;
            start = i + 1;
        }
    }
    (start + column.saturating_sub(1)).min(bytes.len())
}

fn parse_wire(bytes: &[u8]) -> Result<AtomWire, SceneError> {
    serde_json::from_slice(bytes).map_err(|e| SceneError::Parse {
        offset: offset_of(bytes, e.line(), e.column()),
        message: e.to_string(),
    })
}

fn finish(wire: AtomWire, path_cloud: PointCloud3) -> Result<AtomMap, SceneError> {
    let map = AtomMap {
        signs: wire.signs,
        structures: wire.structures,
        path_cloud,
        frame_log: wire.frame_log,
    };
    map.validate()?;
    Ok(map)
}

pub fn deserialize_atom(bytes: &[u8]) -> Result<AtomMap, SceneError> {
    let mut wire = parse_wire(bytes)?;
    let cloud = match std::mem::replace(&mut wire.path_cloud, CloudRef::File(String::new())) {
        CloudRef::Inline(InlineCloud(c)) => c,
        CloudRef::File(name) => {
            return Err(SceneError::Parse {
                offset: 0,
                message: format!("path cloud lives in sibling file {name:?}; use load_atom"),
            })
        }
    };
    finish(wire, cloud)
}

/// Write `*.atom.json`; with `external_cloud` the path cloud goes to a
/// `*.cloud.bin` sibling.
pub fn save_atom(path: &Path, map: &AtomMap, external_cloud: bool) -> std::io::Result<()> {
    if !external_cloud {
        return std::fs::write(path, serialize_atom(map));
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("map.atom.json");
    let stem = name.strip_suffix(".atom.json").unwrap_or(name);
    let cloud_name = format!("{stem}.cloud.bin");
    std::fs::write(path.with_file_name(&cloud_name), map.path_cloud.to_bytes())?;
    std::fs::write(path, encode(map, CloudRef::File(cloud_name)))
}

pub fn load_atom(path: &Path) -> Result<AtomMap, SceneError> {
    let bytes = std::fs::read(path).map_err(|e| SceneError::Io(format!("{}: {e}", path.display())))?;
    let mut wire = parse_wire(&bytes)?;
    let cloud = match std::mem::replace(&mut wire.path_cloud, CloudRef::File(String::new())) {
        CloudRef::Inline(InlineCloud(c)) => c,
        CloudRef::File(name) => {
            let p = path.with_file_name(&name);
            let blob = std::fs::read(&p).map_err(|e| SceneError::Io(format!("{}: {e}", p.display())))?;
            PointCloud3::from_bytes(&blob).map_err(|e| SceneError::Parse {
                offset: 0,
                message: format!("{}: {e}", p.display()),
            })?
        }
    };
    finish(wire, cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{fit_oriented_box, PointCloud3};
    use crate::scene::Instruction;
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn sample_map(seed: u64, n_path: usize) -> AtomMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut signs = Vec::new();
        for id in 0..2 {
            let mut s = SignInstance::new(
                id,
                Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), 2.2),
                Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0),
            );
            let cues = NavCueSet::from_pairs(&[("pharmacy", Instruction::Left), ("level 1", Instruction::Locational)]);
            s.parse_history.push(ParseRecord {
                timestamp: 0.1 * id as f64,
                cues: cues.clone(),
                distance_m: 2.0,
                angle_deg: 4.5,
            });
            s.merged_cues = cues;
            s.observation_count = 3;
            signs.push(s);
        }
        let structures = (0..3)
            .map(|id| {
                let cloud = PointCloud3::from_points((0..200).map(|_| {
                    Vector3::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..2.0), rng.gen_range(0.0..1.0))
                }))
                .quantized();
                StructureInstance {
                    id,
                    class_label: "stairs".into(),
                    bbox: fit_oriented_box(&cloud).unwrap(),
                    confidence: 0.8,
                    detection_count: 2,
                    fused_cloud: cloud,
                }
            })
            .collect();
        let path_cloud = PointCloud3::from_points(
            (0..n_path).map(|_| Vector3::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-0.01..0.01))),
        )
        .quantized();
        let frame_log = (0..5)
            .map(|i| FrameLogEntry {
                t: i as f64 * 0.1,
                pose: Pose3::new(Vector3::new(i as f64, 0.3, 1.2), UnitQuaternion::from_euler_angles(0.1, 0.2, i as f64)),
            })
            .collect();
        AtomMap {
            signs,
            structures,
            path_cloud,
            frame_log,
        }
    }

    #[test]
    fn empty_map_round_trips() {
        let m = AtomMap::default();
        assert_eq!(deserialize_atom(&serialize_atom(&m)).unwrap(), m);
    }

    #[test]
    fn populated_map_round_trips_deterministically() {
        let m = sample_map(1, 10_000);
        let bytes = serialize_atom(&m);
        let back = deserialize_atom(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(serialize_atom(&back), bytes);
        assert!(std::str::from_utf8(&bytes).unwrap().contains("\"atom_version\": 1"));
    }

    #[test]
    fn truncated_input_reports_offset() {
        let bytes = serialize_atom(&sample_map(2, 100));
        let cut = &bytes[..bytes.len() / 2];
        match deserialize_atom(cut) {
            Err(SceneError::Parse { offset, .. }) => assert!(offset <= cut.len()),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(deserialize_atom(b"{\"atom_version\": 2}"), Err(SceneError::Parse { .. })));
    }

    #[test]
    fn sibling_cloud_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.atom.json");
        let m = sample_map(3, 500);
        save_atom(&path, &m, true).unwrap();
        assert!(dir.path().join("m.cloud.bin").exists());
        assert_eq!(load_atom(&path).unwrap(), m);
        save_atom(&path, &m, false).unwrap();
        assert_eq!(load_atom(&path).unwrap(), m);
    }
}
