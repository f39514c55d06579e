//! Prompt assembly for sign parsing, reply validation, and temporal merging
//! of parses.

mod reply;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::perception::{VlmPart, VlmRequest};
use crate::scene::{Instruction, NavCueSet};

pub use reply::{parse_vlm_reply, ParsedReply};

pub const INCONTEXT_PROMPT: &str = include_str!("../../assets/incontext_prompt.txt");
pub const PARSE_PROMPT: &str = include_str!("../../assets/parse_prompt.txt");
pub const GROUNDING_PROMPT: &str = include_str!("../../assets/grounding_prompt.txt");

const DEFAULT_SHEET: &[u8] = include_bytes!("../../assets/symbol_dictionary.png");
const DEFAULT_LABELS: &str = include_str!("../../assets/direction_labels.json");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignError {
    #[error("reply contains no dict literal: {0:?}")]
    UnparseableReply(String),
    #[error("symbol label {0:?} is not an instruction token")]
    BadLabel(String),
    #[error("sign image is empty")]
    EmptyImage,
}

/// Prototype sheet of sign symbols and the meaning of each numbered symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolDictionary {
    pub image: Vec<u8>,
    pub labels: BTreeMap<u32, String>,
}

impl Default for SymbolDictionary {
    fn default() -> Self {
        let labels: BTreeMap<u32, String> = serde_json::from_str(DEFAULT_LABELS).expect("bundled labels parse");
        Self::new(DEFAULT_SHEET.to_vec(), labels).expect("bundled labels are valid")
    }
}

impl SymbolDictionary {
    pub fn new(image: Vec<u8>, labels: BTreeMap<u32, String>) -> Result<Self, SignError> {
        for v in labels.values() {
            v.parse::<Instruction>().map_err(|_| SignError::BadLabel(v.clone()))?;
        }
        Ok(Self { image, labels })
    }

    /// Compact JSON with keys in index order.
    pub fn labels_json(&self) -> String {
        serde_json::to_string(&self.labels).expect("labels serialize")
    }
}

/// Parts: dictionary sheet, in-context text, sign image, parsing prompt.
pub fn build_parse_request(sign_image: &[u8], dict: &SymbolDictionary) -> Result<VlmRequest, SignError> {
    if sign_image.is_empty() {
        return Err(SignError::EmptyImage);
    }
    let incontext = INCONTEXT_PROMPT.replace("{symbolDictionary}", &dict.labels_json());
    Ok(VlmRequest::new(vec![
        VlmPart::Image(dict.image.clone()),
        VlmPart::Text(incontext),
        VlmPart::Image(sign_image.to_vec()),
        VlmPart::Text(PARSE_PROMPT.to_string()),
    ])
    .expect("four parts"))
}

/// Per-location mode over the history; ties go to the instruction seen
/// first. Locational phrases are unioned in first-seen order.
pub fn merge_cues(history: &[NavCueSet]) -> NavCueSet {
    // location -> [(instruction, votes)] in first-seen order
    let mut tally: Vec<(String, Vec<(Instruction, usize)>)> = Vec::new();
    let mut out = NavCueSet::new();
    for set in history {
        let mut seen_here: Vec<(&str, Instruction)> = Vec::new();
        for cue in &set.cues {
            if seen_here.contains(&(cue.location.as_str(), cue.instruction)) {
                continue;
            }
            seen_here.push((cue.location.as_str(), cue.instruction));
            let idx = match tally.iter().position(|(l, _)| *l == cue.location) {
                Some(i) => i,
                None => {
                    tally.push((cue.location.clone(), Vec::new()));
                    tally.len() - 1
                }
            };
            let votes = &mut tally[idx].1;
            match votes.iter_mut().find(|(i, _)| *i == cue.instruction) {
                Some(v) => v.1 += 1,
                None => votes.push((cue.instruction, 1)),
            }
        }
        for loc in &set.locational {
            let _ = out.insert(loc, Instruction::Locational);
        }
    }
    for (loc, votes) in tally {
        let mut best = votes[0];
        for v in &votes[1..] {
            if v.1 > best.1 {
                best = *v;
            }
        }
        let _ = out.insert(&loc, best.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Instruction::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn request_layout() {
        let dict = SymbolDictionary::default();
        let req = build_parse_request(&[1, 2, 3], &dict).unwrap();
        assert_eq!(req.parts.len(), 4);
        assert!(matches!(&req.parts[0], VlmPart::Image(b) if *b == dict.image));
        assert!(matches!(&req.parts[2], VlmPart::Image(b) if *b == vec![1, 2, 3]));
        match &req.parts[3] {
            VlmPart::Text(t) => assert!(t.starts_with("Break down the directions sign")),
            _ => panic!("last part must be text"),
        }
        match &req.parts[1] {
            VlmPart::Text(t) => {
                assert!(t.contains(&dict.labels_json()));
                assert!(!t.contains("{symbolDictionary}"));
            }
            _ => panic!("second part must be text"),
        }
        assert_eq!(req, build_parse_request(&[1, 2, 3], &dict).unwrap());
    }

    #[test]
    fn empty_labels() {
        let dict = SymbolDictionary::new(vec![0], BTreeMap::new()).unwrap();
        match &build_parse_request(&[1], &dict).unwrap().parts[1] {
            VlmPart::Text(t) => assert!(t.contains(" {} ")),
            _ => unreachable!(),
        }
        assert!(SymbolDictionary::new(vec![], BTreeMap::from([(0, "sideways".into())])).is_err());
    }

    #[test]
    fn default_dictionary_covers_vocabulary() {
        let dict = SymbolDictionary::default();
        for ins in Instruction::ALL {
            assert!(dict.labels.values().any(|v| v == ins.as_str()), "{ins}");
        }
        assert!(dict.image.starts_with(b"\x89PNG"));
    }

    #[test]
    fn prompt_texts_are_verbatim() {
        assert!(PARSE_PROMPT.contains("    'up-stairs' : [content], \n"));
        assert!(PARSE_PROMPT.ends_with("Return only the dict (no comments or formatting)."));
        assert_eq!(PARSE_PROMPT.lines().count(), 22);
        assert!(GROUNDING_PROMPT.contains("{location}") && GROUNDING_PROMPT.contains("{parsing}"));
        assert!(INCONTEXT_PROMPT.contains("{symbolDictionary}"));
    }

    #[test]
    fn merge_examples() {
        let l = NavCueSet::from_pairs(&[("pharmacy", Left)]);
        let r = NavCueSet::from_pairs(&[("pharmacy", Right)]);
        assert_eq!(merge_cues(&[l.clone()]), l);
        assert_eq!(merge_cues(&[l.clone(), l.clone(), r.clone()]), l);
        let el = NavCueSet::from_pairs(&[("exit", Left)]);
        let er = NavCueSet::from_pairs(&[("exit", Right)]);
        assert_eq!(merge_cues(&[el.clone(), er]), el);
    }

    fn random_set(rng: &mut ChaCha8Rng) -> NavCueSet {
        let locs = ["a", "b", "c"];
        let mut s = NavCueSet::new();
        for _ in 0..rng.gen_range(0..4) {
            let ins = Instruction::ALL[rng.gen_range(0..17)];
            s.insert(locs[rng.gen_range(0..3)], ins).unwrap();
        }
        s
    }

    #[test]
    fn merge_is_idempotent_and_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let h: Vec<NavCueSet> = (0..rng.gen_range(1..7)).map(|_| random_set(&mut rng)).collect();
            let m = merge_cues(&h);
            assert_eq!(merge_cues(&[m.clone()]), m);
            for loc in ["a", "b", "c"] {
                // brute force: count sets voting each instruction
                let mut best: Option<(Instruction, usize, usize)> = None;
                let mut order = 0;
                for set in &h {
                    for cue in set.cues.iter().filter(|c| c.location == loc) {
                        let votes = h
                            .iter()
                            .filter(|s| s.cues.iter().any(|c| c.location == loc && c.instruction == cue.instruction))
                            .count();
                        order += 1;
                        let better = match best {
                            None => true,
                            Some((_, v, _)) => votes > v,
                        };
                        if better {
                            best = Some((cue.instruction, votes, order));
                        }
                    }
                }
                assert_eq!(m.instruction_for(loc), best.map(|b| b.0));
            }
        }
    }
}
