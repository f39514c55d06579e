//! Scripted VLM that answers from scene ground truth.

use std::path::Path;
use std::sync::Mutex;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::raycast::SIGN_KEY;
use super::scene::{polyline_distance, ElementKind, SceneSpec};
use crate::perception::{png_io, PerceptionError, Vlm, VlmRequest, VlmResponse};
use crate::render::Sidecar;
use crate::scene::{normalize_phrase, Instruction, NavCueSet};
use crate::signs::parse_vlm_reply;

const PARSE_MARKER: &str = "Break down the directions sign";
const GROUND_MARKER: &str = "Select a letter in a circle";
const LOCATION_OPEN: &str = "potentially closest to ";
const LOCATION_CLOSE: &str = ", given the following list";
const PARSING_OPEN: &str = "direction and places: ";
const PARSING_CLOSE: &str = ". Remember that";

/// Swap each cue's instruction, with probability `p`, for a uniform draw
/// from the other sixteen tokens.
pub fn corrupt_cues<R: Rng>(cues: &NavCueSet, p: f64, rng: &mut R) -> NavCueSet {
    let mut out = NavCueSet::new();
    let entries = cues
        .cues
        .iter()
        .map(|c| (c.location.as_str(), c.instruction))
        .chain(cues.locational.iter().map(|l| (l.as_str(), Instruction::Locational)));
    for (loc, ins) in entries {
        let ins = if p > 0.0 && rng.gen_bool(p.min(1.0)) {
            let k = rng.gen_range(0..Instruction::ALL.len() - 1);
            let k = if k >= ins.index() { k + 1 } else { k };
            Instruction::ALL[k]
        } else {
            ins
        };
        out.insert(loc, ins).expect("phrases came from a valid set");
    }
    out
}

pub struct OracleVlm {
    scene: SceneSpec,
    corruption: f64,
    rng: Mutex<ChaCha8Rng>,
}

impl OracleVlm {
    pub fn new(scene: SceneSpec, corruption: f64, seed: u64) -> Self {
        Self {
            scene,
            corruption,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    /// Oracle for a scene file, without corruption.
    pub fn from_scene_file(path: &Path) -> Result<Self, PerceptionError> {
        let scene = SceneSpec::load(path).map_err(|e| PerceptionError::Endpoint(e.to_string()))?;
        let seed = scene.rng_seed;
        Ok(Self::new(scene, 0.0, seed))
    }

    pub fn scene(&self) -> &SceneSpec {
        &self.scene
    }

    fn answer_parse(&self, req: &VlmRequest) -> Result<String, PerceptionError> {
        let index = req
            .images()
            .find_map(|img| png_io::text_chunk(img, SIGN_KEY))
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|i| *i < self.scene.signs.len())
            .ok_or_else(|| PerceptionError::OracleMismatch("parse request carries no known sign image".into()))?;
        let truth = self.scene.signs[index].cue_set();
        let cues = {
            let mut rng = self.rng.lock().expect("oracle rng lock");
            corrupt_cues(&truth, self.corruption, &mut *rng)
        };
        Ok(cues.to_dict_literal(true))
    }

    fn answer_grounding(&self, req: &VlmRequest) -> Result<String, PerceptionError> {
        let mismatch = |m: &str| PerceptionError::OracleMismatch(m.to_string());
        let sidecar = req
            .images()
            .find_map(|img| Sidecar::from_png(img).ok())
            .ok_or_else(|| mismatch("grounding request carries no render"))?;
        let text = req.texts().find(|t| t.contains(GROUND_MARKER)).unwrap_or_default();
        let location = between(text, LOCATION_OPEN, LOCATION_CLOSE).ok_or_else(|| mismatch("no location in prompt"))?;
        let location = normalize_phrase(location);
        let frame = &sidecar.frame;
        let sign = self
            .scene
            .nearest_sign(&frame.origin)
            .map(|i| &self.scene.signs[i])
            .ok_or_else(|| mismatch("scene has no signs"))?;
        let from_truth = sign
            .cues
            .iter()
            .find(|c| normalize_phrase(&c.location) == location)
            .map(|c| c.instruction);
        let from_prompt = || {
            between(text, PARSING_OPEN, PARSING_CLOSE)
                .and_then(|p| parse_vlm_reply(p).ok())
                .and_then(|r| r.cues.instruction_for(&location))
        };
        let instruction = from_truth
            .or_else(from_prompt)
            .ok_or_else(|| mismatch("location appears neither on the sign nor in the prompt"))?;
        if instruction.is_locational() {
            return Ok("[none]".into());
        }
        let Some(target) = self.scene.ground_truth_rule(frame, instruction) else {
            return Ok("[none]".into());
        };
        let reply = match target.kind {
            ElementKind::Branch(b) => {
                let line = &self.scene.branches[b].polyline;
                sidecar
                    .frontiers
                    .iter()
                    .min_by(|a, b| {
                        let da = polyline_distance(line, &frame.to_world(&a.point));
                        let db = polyline_distance(line, &frame.to_world(&b.point));
                        da.total_cmp(&db)
                    })
                    .map(|f| f.letter.clone())
            }
            ElementKind::Structure(s) => {
                let st = &self.scene.structures[s];
                let c = Vector2::new(st.center[0], st.center[1]);
                sidecar
                    .boxes
                    .iter()
                    .filter(|b| b.class_label == st.class_label)
                    .min_by(|a, b| {
                        let da = (frame.to_world(&a.center) - c).norm();
                        let db = (frame.to_world(&b.center) - c).norm();
                        da.total_cmp(&db)
                    })
                    .map(|b| b.label.clone())
            }
        };
        Ok(format!("[{}]", reply.unwrap_or_else(|| "none".into())))
    }
}

fn between<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let a = text.find(open)? + open.len();
    let b = text[a..].find(close)? + a;
    Some(&text[a..b])
}

impl Vlm for OracleVlm {
    fn chat(&self, req: &VlmRequest) -> Result<VlmResponse, PerceptionError> {
        let text = if req.texts().any(|t| t.contains(PARSE_MARKER)) {
            self.answer_parse(req)?
        } else if req.texts().any(|t| t.contains(GROUND_MARKER)) {
            self.answer_grounding(req)?
        } else {
            return Err(PerceptionError::OracleMismatch("unrecognized prompt".into()));
        };
        Ok(VlmResponse { text })
    }
}
