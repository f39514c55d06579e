//! From a goal phrase to a sign cue, a selected frontier or structure, and a
//! subgoal pose.

mod bench;
mod text;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bench::{run_benchmark, BenchConfig, BenchReport, ChoiceSpec, QueryFile, QueryOutcome, SequenceReport, TruthCue, VlmFactory};
pub use text::{levenshtein, similarity};

use crate::builder::BuildError;
use crate::geometry::unproject;
use crate::perception::{Frame, PerceptionError, Vlm, VlmPart, VlmRequest};
use crate::render::{render, RenderConfig, RenderError, Sidecar};
use crate::scene::{AtomMap, Instruction, NavCue, Semantics, Vertical};
use crate::signs::GROUNDING_PROMPT;

/// Tolerance for treating two cosine scores as tied.
const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroundingError {
    #[error("no sign in the map has parsed cues")]
    NoParsedSigns,
    #[error("no cue matches {query:?} (best score {best:.3})")]
    NoMatch { query: String, best: f64 },
    #[error("no {0} in view")]
    NoSuchStructure(String),
    #[error("render has neither frontiers nor structures")]
    NothingToGround,
    #[error("VLM reply names nothing in the render: {0:?}")]
    UngroundableReply(String),
    #[error("cue is locational and has no direction")]
    NotDirectional,
    #[error("no valid depth under choice {0}")]
    ChoiceDepthMissing(String),
    #[error("no frame recorded at t={0}")]
    FrameMissing(f64),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Build(#[from] BuildError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundingConfig {
    pub accept_threshold: f64,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        Self { accept_threshold: 0.6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grounder {
    Geometric,
    Vlm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationMatch {
    pub sign_id: u32,
    pub location: String,
    pub score: f64,
    pub instruction: Instruction,
}

/// Best fuzzy match of `query` against every cue and locational phrase.
pub fn match_location(query: &str, map: &AtomMap, threshold: f64) -> Result<LocationMatch, GroundingError> {
    let parsed: Vec<_> = map.signs.iter().filter(|s| s.has_parsed_content()).collect();
    if parsed.is_empty() {
        return Err(GroundingError::NoParsedSigns);
    }
    let last = map.last_pose().map(|p| p.translation);
    let dist = |c: &Vector3<f64>| last.map(|l| (c - l).norm()).unwrap_or(0.0);
    let mut best: Option<(LocationMatch, f64)> = None;
    for sign in parsed {
        let d = dist(&sign.centroid);
        let entries = sign
            .merged_cues
            .cues
            .iter()
            .map(|c| (c.location.as_str(), c.instruction))
            .chain(sign.merged_cues.locational.iter().map(|l| (l.as_str(), Instruction::Locational)));
        for (loc, ins) in entries {
            let score = similarity(query, loc);
            let better = match &best {
                None => true,
                Some((b, bd)) => score > b.score + TIE_EPS || ((score - b.score).abs() <= TIE_EPS && b.sign_id != sign.id && d < *bd),
            };
            if better {
                best = Some((
                    LocationMatch {
                        sign_id: sign.id,
                        location: loc.to_string(),
                        score,
                        instruction: ins,
                    },
                    d,
                ));
            }
        }
    }
    let (m, _) = best.expect("at least one parsed sign");
    if m.score < threshold {
        return Err(GroundingError::NoMatch {
            query: query.to_string(),
            best: m.score,
        });
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Selected {
    Frontier {
        letter: String,
    },
    Structure {
        label: String,
        structure_id: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vertical: Option<Vertical>,
    },
    LocationalOnly,
}

/// Something a cue can be grounded to, in the sign frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<T> {
    pub id: T,
    pub point: Vector2<f64>,
    pub class_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Choice<T> {
    Element(T, Option<Vertical>),
    LocationalOnly,
}

fn cosine(p: &Vector2<f64>, d: &Vector2<f64>) -> f64 {
    let n = p.norm();
    if n == 0.0 {
        0.0
    } else {
        p.dot(d) / n
    }
}

fn argmax_cos<'a, T>(cands: impl Iterator<Item = &'a Candidate<T>>, d: &Vector2<f64>) -> Option<&'a Candidate<T>>
where
    T: 'a,
{
    let mut best: Option<(&Candidate<T>, f64)> = None;
    for c in cands {
        let s = cosine(&c.point, d);
        let better = match best {
            None => true,
            Some((b, bs)) => s > bs + TIE_EPS || ((s - bs).abs() <= TIE_EPS && c.point.norm() < b.point.norm()),
        };
        if better {
            best = Some((c, s));
        }
    }
    best.map(|(c, _)| c)
}

/// The deterministic grounding rule over arbitrary candidates.
pub fn select_geometric<T: Clone>(candidates: &[Candidate<T>], instruction: Instruction) -> Result<Choice<T>, GroundingError> {
    let pick = |c: Option<&Candidate<T>>, v: Option<Vertical>| {
        c.map(|c| Choice::Element(c.id.clone(), v))
            .ok_or(GroundingError::NothingToGround)
    };
    match instruction.semantics() {
        Semantics::Locational => Ok(Choice::LocationalOnly),
        Semantics::Structure(class, vertical) => {
            let m = candidates
                .iter()
                .filter(|c| c.class_label.as_deref().is_some_and(|l| class.matches_label(l)))
                .min_by(|a, b| a.point.norm().total_cmp(&b.point.norm()));
            match m {
                Some(c) => Ok(Choice::Element(c.id.clone(), Some(vertical))),
                None => Err(GroundingError::NoSuchStructure(class.as_str().to_string())),
            }
        }
        Semantics::Direction(d) => pick(argmax_cos(candidates.iter(), &d), None),
        Semantics::Compound(x, y) => {
            let blend = (x + y).normalize();
            let ahead: Vec<&Candidate<T>> = candidates.iter().filter(|c| c.point.dot(&x) > 0.0).collect();
            if ahead.is_empty() {
                pick(argmax_cos(candidates.iter(), &x), None)
            } else {
                pick(argmax_cos(ahead.into_iter(), &blend), None)
            }
        }
    }
}

fn render_candidates(sidecar: &Sidecar) -> Vec<Candidate<Selected>> {
    let mut out: Vec<Candidate<Selected>> = sidecar
        .frontiers
        .iter()
        .map(|f| Candidate {
            id: Selected::Frontier { letter: f.letter.clone() },
            point: f.point,
            class_label: None,
        })
        .collect();
    out.extend(sidecar.boxes.iter().map(|b| Candidate {
        id: Selected::Structure {
            label: b.label.clone(),
            structure_id: b.structure_id,
            vertical: None,
        },
        point: b.center,
        class_label: Some(b.class_label.clone()),
    }));
    out
}

fn with_vertical(sel: Selected, v: Option<Vertical>) -> Selected {
    match sel {
        Selected::Structure { label, structure_id, .. } => Selected::Structure {
            label,
            structure_id,
            vertical: v,
        },
        other => other,
    }
}

/// Frontier or structure of the render that best fits the cue.
pub fn ground_geometric(sidecar: &Sidecar, cue: &NavCue) -> Result<Selected, GroundingError> {
    if cue.instruction.is_locational() {
        return Ok(Selected::LocationalOnly);
    }
    let cands = render_candidates(sidecar);
    if cands.is_empty() {
        return Err(GroundingError::NothingToGround);
    }
    match select_geometric(&cands, cue.instruction)? {
        Choice::Element(sel, v) => Ok(with_vertical(sel, v)),
        Choice::LocationalOnly => Ok(Selected::LocationalOnly),
    }
}

/// Grounding prompt with the location and the sign's parse substituted.
pub fn grounding_prompt(location: &str, parsing: &str) -> String {
    GROUNDING_PROMPT.replace("{location}", location).replace("{parsing}", parsing)
}

pub fn build_grounding_request(image: &[u8], location: &str, parsing: &str) -> VlmRequest {
    VlmRequest::new(vec![
        VlmPart::Image(image.to_vec()),
        VlmPart::Text(grounding_prompt(location, parsing)),
    ])
    .expect("two parts")
}

/// Read a reply like `[B]`, `b`, `[Stairs]` or `[stairs #0]` against the
/// render's letters and box labels.
pub fn parse_grounding_reply(sidecar: &Sidecar, reply: &str) -> Result<Selected, GroundingError> {
    let inner = match (reply.find('['), reply.find(']')) {
        (Some(a), Some(b)) if b > a => &reply[a + 1..b],
        _ => reply,
    };
    let token = inner.trim().trim_matches(|c: char| c == '"' || c == '\'' || c == '.').trim().to_lowercase();
    if let Some(f) = sidecar.frontiers.iter().find(|f| f.letter.to_lowercase() == token) {
        return Ok(Selected::Frontier { letter: f.letter.clone() });
    }
    let structure = |b: &crate::render::BoxAnnotation| Selected::Structure {
        label: b.label.clone(),
        structure_id: b.structure_id,
        vertical: None,
    };
    if let Some(b) = sidecar.boxes.iter().find(|b| b.label.to_lowercase() == token) {
        return Ok(structure(b));
    }
    let by_class = sidecar
        .boxes
        .iter()
        .filter(|b| {
            let class = b.class_label.to_lowercase();
            !token.is_empty() && (token == class || token.trim_end_matches('s') == class.trim_end_matches('s') || token.starts_with(&class))
        })
        .min_by(|a, b| a.center.norm().total_cmp(&b.center.norm()));
    if let Some(b) = by_class {
        return Ok(structure(b));
    }
    Err(GroundingError::UngroundableReply(reply.to_string()))
}

/// Ask the VLM to pick an element of the render for `cue`; `parsing` is the
/// sign's merged cue dict.
pub fn ground_vlm(sidecar: &Sidecar, image: &[u8], cue: &NavCue, parsing: &str, vlm: &dyn Vlm) -> Result<Selected, GroundingError> {
    if cue.instruction.is_locational() {
        return Ok(Selected::LocationalOnly);
    }
    let reply = vlm.chat(&build_grounding_request(image, &cue.location, parsing))?;
    let sel = parse_grounding_reply(sidecar, &reply.text)?;
    let vertical = match cue.instruction.semantics() {
        Semantics::Structure(_, v) => Some(v),
        _ => None,
    };
    Ok(with_vertical(sel, vertical))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subgoal {
    pub point: Vector3<f64>,
    /// (x, y, heading) with heading from the sign toward the point.
    pub se2: [f64; 3],
}

pub fn to_subgoal(selected: &Selected, sidecar: &Sidecar, map: &AtomMap) -> Result<Subgoal, GroundingError> {
    let frame = &sidecar.frame;
    let xy = match selected {
        Selected::LocationalOnly => return Err(GroundingError::NotDirectional),
        Selected::Frontier { letter } => {
            let f = sidecar
                .frontier(letter)
                .ok_or_else(|| GroundingError::UngroundableReply(letter.clone()))?;
            frame.to_world(&f.point)
        }
        Selected::Structure { structure_id, label, .. } => match map.structures.iter().find(|s| s.id == *structure_id) {
            Some(s) => Vector2::new(s.bbox.center.x, s.bbox.center.y),
            None => {
                let b = sidecar
                    .box_by_label(label)
                    .ok_or_else(|| GroundingError::UngroundableReply(label.clone()))?;
                frame.to_world(&b.center)
            }
        },
    };
    let d = xy - frame.origin;
    Ok(Subgoal {
        point: Vector3::new(xy.x, xy.y, 0.0),
        se2: [xy.x, xy.y, d.y.atan2(d.x)],
    })
}

/// Answer id whose back-projected pixel lies nearest the subgoal.
pub fn answer_multiple_choice(choices: &[ChoiceSpec], subgoal: &Vector3<f64>, frame: &Frame) -> Result<String, GroundingError> {
    let mut best: Option<(f64, &str)> = None;
    let mut sorted: Vec<&ChoiceSpec> = choices.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    for c in sorted {
        let (u, v) = (c.px[0], c.px[1]);
        let depth = if u >= 0.0 && v >= 0.0 { frame.depth_m(u as u32, v as u32) } else { None };
        let p = unproject((u, v), depth, &frame.intrinsics, &frame.pose)
            .map_err(|_| GroundingError::ChoiceDepthMissing(c.id.clone()))?;
        let d = (p - subgoal).norm();
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, &c.id));
        }
    }
    best.map(|(_, id)| id.to_string())
        .ok_or(GroundingError::NothingToGround)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingResult {
    pub sign_id: u32,
    pub matched_location: String,
    pub match_score: f64,
    pub instruction: Instruction,
    pub selected: Selected,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgoal_3d: Option<Vector3<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgoal_se2: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

/// Match, render, ground and lift to a subgoal.
pub fn ground_query(
    map: &AtomMap,
    query: &str,
    grounder: Grounder,
    vlm: Option<&dyn Vlm>,
    render_cfg: &RenderConfig,
    cfg: &GroundingConfig,
) -> Result<(GroundingResult, Sidecar), GroundingError> {
    let m = match_location(query, map, cfg.accept_threshold)?;
    let r = render(map, m.sign_id, render_cfg)?;
    let cue = NavCue {
        location: m.location.clone(),
        instruction: m.instruction,
    };
    let selected = match (grounder, vlm) {
        (Grounder::Vlm, Some(vlm)) => {
            let sign = map.sign(m.sign_id).expect("matched sign exists");
            ground_vlm(&r.sidecar, &r.image, &cue, &sign.merged_cues.to_dict_literal(false), vlm)?
        }
        (Grounder::Vlm, None) => {
            return Err(GroundingError::Perception(PerceptionError::Endpoint(
                "the vlm grounder needs a VLM endpoint".into(),
            )))
        }
        (Grounder::Geometric, _) => ground_geometric(&r.sidecar, &cue)?,
    };
    let subgoal = match selected {
        Selected::LocationalOnly => None,
        _ => Some(to_subgoal(&selected, &r.sidecar, map)?),
    };
    Ok((
        GroundingResult {
            sign_id: m.sign_id,
            matched_location: m.location,
            match_score: m.score,
            instruction: m.instruction,
            selected,
            subgoal_3d: subgoal.map(|s| s.point),
            subgoal_se2: subgoal.map(|s| s.se2),
            answer: None,
        },
        r.sidecar,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::ReplayVlm;
    use crate::render::{BoxAnnotation, Frontier, SignFrame, RENDER_VERSION};
    use crate::scene::{NavCueSet, SignInstance};
    use std::collections::BTreeMap;

    fn sidecar(frontiers: &[(f64, f64)], boxes: &[(&str, u32, f64, f64)]) -> Sidecar {
        Sidecar {
            render_version: RENDER_VERSION,
            center_sign_id: 0,
            frame: SignFrame::world_aligned(Vector2::new(10.0, 10.0)),
            radius: 12.0,
            image_px: 1024,
            polygon: vec![],
            frontiers: frontiers
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| Frontier {
                    letter: crate::render::letter(i),
                    point: Vector2::new(x, y),
                    interval: [0.0, 0.0],
                })
                .collect(),
            boxes: boxes
                .iter()
                .map(|&(class, id, x, y)| BoxAnnotation {
                    label: format!("{class} #{id}"),
                    class_label: class.into(),
                    structure_id: id,
                    center: Vector2::new(x, y),
                    half_extents: Vector2::new(0.5, 0.5),
                    yaw: 0.0,
                    corners: [Vector2::zeros(); 4],
                })
                .collect(),
        }
    }

    fn cue(loc: &str, ins: Instruction) -> NavCue {
        NavCue::new(loc, ins).unwrap()
    }

    fn letter_of(s: &Selected) -> &str {
        match s {
            Selected::Frontier { letter } => letter,
            _ => panic!("not a frontier: {s:?}"),
        }
    }

    #[test]
    fn directional_examples() {
        let sc = sidecar(&[(-3.0, 1.0), (0.0, 4.0), (3.0, 1.0)], &[]);
        assert_eq!(letter_of(&ground_geometric(&sc, &cue("pharmacy", Instruction::Left)).unwrap()), "A");
        assert_eq!(letter_of(&ground_geometric(&sc, &cue("gate", Instruction::Forward)).unwrap()), "B");
        assert_eq!(letter_of(&ground_geometric(&sc, &cue("x", Instruction::Right)).unwrap()), "C");
        assert_eq!(
            ground_geometric(&sc, &cue("here", Instruction::Locational)).unwrap(),
            Selected::LocationalOnly
        );
    }

    #[test]
    fn structure_token_picks_matching_class() {
        let sc = sidecar(&[(-3.0, 1.0), (0.0, 4.0), (3.0, 1.0)], &[("stairs", 0, 2.0, -1.0)]);
        match ground_geometric(&sc, &cue("terrace", Instruction::UpStairs)).unwrap() {
            Selected::Structure { label, vertical, .. } => {
                assert_eq!(label, "stairs #0");
                assert_eq!(vertical, Some(Vertical::Up));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            ground_geometric(&sc, &cue("mall", Instruction::DownEscalator)),
            Err(GroundingError::NoSuchStructure(_))
        ));
        assert!(matches!(
            ground_geometric(&sidecar(&[], &[]), &cue("a", Instruction::Left)),
            Err(GroundingError::NothingToGround)
        ));
    }

    #[test]
    fn compound_uses_halfplane_then_blend() {
        // left-then-forward: candidates left of the sign, favour the one ahead
        let sc = sidecar(&[(-4.0, 0.0), (-3.0, 3.0), (0.0, 5.0), (4.0, 0.0)], &[]);
        assert_eq!(letter_of(&ground_geometric(&sc, &cue("x", Instruction::LeftThenForward)).unwrap()), "B");
        // nothing to the right: falls back to plain right
        let sc = sidecar(&[(-4.0, 0.0), (0.0, 5.0)], &[]);
        assert_eq!(letter_of(&ground_geometric(&sc, &cue("x", Instruction::RightThenForward)).unwrap()), "B");
    }

    #[test]
    fn scale_invariance() {
        let base = [(-3.0, 1.0), (0.5, 4.0), (3.0, 1.2), (1.0, -4.0)];
        for ins in Instruction::ALL.into_iter().filter(|i| i.direction().is_some()) {
            let a = ground_geometric(&sidecar(&base, &[]), &cue("x", ins)).unwrap();
            for k in [0.1, 2.0, 37.0] {
                let scaled: Vec<(f64, f64)> = base.iter().map(|&(x, y)| (x * k, y * k)).collect();
                assert_eq!(ground_geometric(&sidecar(&scaled, &[]), &cue("x", ins)).unwrap(), a);
            }
        }
    }

    #[test]
    fn vlm_reply_parsing() {
        let sc = sidecar(&[(-3.0, 1.0), (0.0, 4.0), (3.0, 1.0)], &[("stairs", 0, 2.0, -1.0)]);
        assert_eq!(letter_of(&parse_grounding_reply(&sc, "[B]").unwrap()), "B");
        assert_eq!(letter_of(&parse_grounding_reply(&sc, " c ").unwrap()), "C");
        assert!(matches!(parse_grounding_reply(&sc, "Stairs").unwrap(), Selected::Structure { structure_id: 0, .. }));
        assert!(matches!(parse_grounding_reply(&sc, "[stairs #0]").unwrap(), Selected::Structure { .. }));
        assert!(matches!(parse_grounding_reply(&sc, "[Z]"), Err(GroundingError::UngroundableReply(_))));
    }

    #[test]
    fn vlm_grounding_through_replay() {
        let sc = sidecar(&[(-3.0, 1.0), (0.0, 4.0), (3.0, 1.0)], &[]);
        let c = cue("gate", Instruction::Forward);
        let req = build_grounding_request(b"png", "gate", "{'forward': ['gate']}");
        let vlm = ReplayVlm::new(BTreeMap::from([(req.hash(), "[B]".to_string())]));
        let sel = ground_vlm(&sc, b"png", &c, "{'forward': ['gate']}", &vlm).unwrap();
        assert_eq!(letter_of(&sel), "B");
        let text = grounding_prompt("gate", "{'forward': ['gate']}");
        assert!(text.starts_with("Select a letter in a circle"));
        assert!(text.contains("closest to gate, given"));
    }

    #[test]
    fn subgoal_frame_arithmetic() {
        let mut sc = sidecar(&[(0.0, 4.0)], &[]);
        let map = AtomMap::default();
        let sel = Selected::Frontier { letter: "A".into() };
        let g = to_subgoal(&sel, &sc, &map).unwrap();
        assert!((g.point - Vector3::new(10.0, 14.0, 0.0)).norm() < 1e-12);
        assert!((g.se2[2] - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        // frame whose +Y points along world -X
        sc.frame = SignFrame::facing(Vector2::new(10.0, 10.0), Vector2::new(-1.0, 0.0));
        let g = to_subgoal(&sel, &sc, &map).unwrap();
        assert!((g.point - Vector3::new(6.0, 10.0, 0.0)).norm() < 1e-12);
        assert!((g.se2[2].abs() - std::f64::consts::PI).abs() < 1e-12);
        assert!(matches!(to_subgoal(&Selected::LocationalOnly, &sc, &map), Err(GroundingError::NotDirectional)));
    }

    fn map_with(cues: &[(&str, Instruction)]) -> AtomMap {
        let mut s = SignInstance::new(0, Vector3::new(0.0, 0.0, 2.0), Vector3::new(0.0, -1.0, 0.0));
        s.merged_cues = NavCueSet::from_pairs(cues);
        AtomMap {
            signs: vec![s],
            ..AtomMap::default()
        }
    }

    #[test]
    fn location_matching() {
        let m = map_with(&[("pharmacy", Instruction::Left), ("exits", Instruction::Right)]);
        let r = match_location("Pharmacy", &m, 0.6).unwrap();
        assert_eq!((r.location.as_str(), r.score), ("pharmacy", 1.0));
        let r = match_location("exit", &m, 0.6).unwrap();
        assert!((r.score - 0.8).abs() < 1e-12);
        let m = map_with(&[("terrace", Instruction::Left)]);
        assert!(matches!(match_location("parking", &m, 0.6), Err(GroundingError::NoMatch { .. })));
        assert!(matches!(
            match_location("x", &AtomMap::default(), 0.6),
            Err(GroundingError::NoParsedSigns)
        ));
    }
}
