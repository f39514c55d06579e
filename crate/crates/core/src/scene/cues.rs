use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use super::{Instruction, SceneError};

/// Lowercase, NFC, trim, and collapse internal whitespace runs to one space.
pub fn normalize_phrase(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    nfc.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NavCue {
    pub location: String,
    pub instruction: Instruction,
}

impl NavCue {
    pub fn new(location: &str, instruction: Instruction) -> Result<Self, SceneError> {
        let location = normalize_phrase(location);
        if location.is_empty() {
            return Err(SceneError::EmptyLocation);
        }
        Ok(Self {
            location,
            instruction,
        })
    }
}

/// Parsed content of one sign: directed cues plus "you are here" phrases.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavCueSet {
    pub cues: Vec<NavCue>,
    pub locational: Vec<String>,
}

impl NavCueSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Convenience constructor for literal cue tables; panics on empty phrases.
    pub fn from_pairs(pairs: &[(&str, Instruction)]) -> Self {
        let mut set = Self::new();
        for (loc, ins) in pairs {
            set.insert(loc, *ins).expect("non-empty location");
        }
        set
    }

    /// Add a cue. A `Locational` instruction files the phrase under
    /// `locational`. Duplicates are ignored; returns whether anything was added.
    pub fn insert(&mut self, location: &str, instruction: Instruction) -> Result<bool, SceneError> {
        let loc = normalize_phrase(location);
        if loc.is_empty() {
            return Err(SceneError::EmptyLocation);
        }
        if instruction.is_locational() {
            if self.locational.contains(&loc) {
                return Ok(false);
            }
            self.locational.push(loc);
            return Ok(true);
        }
        if self.cues.iter().any(|c| c.location == loc && c.instruction == instruction) {
            return Ok(false);
        }
        self.cues.push(NavCue {
            location: loc,
            instruction,
        });
        Ok(true)
    }

    pub fn is_empty(&self) -> bool {
        self.cues.is_empty() && self.locational.is_empty()
    }

    pub fn instruction_for(&self, location: &str) -> Option<Instruction> {
        let loc = normalize_phrase(location);
        self.cues.iter().find(|c| c.location == loc).map(|c| c.instruction)
    }

    /// Render in the parsing reply's dict layout: every vocabulary key in
    /// prompt order, single-quoted strings.
    pub fn to_dict_literal(&self, include_empty: bool) -> String {
        let mut parts = Vec::new();
        for ins in Instruction::ALL {
            let phrases: Vec<&str> = if ins.is_locational() {
                self.locational.iter().map(String::as_str).collect()
            } else {
                self.cues
                    .iter()
                    .filter(|c| c.instruction == ins)
                    .map(|c| c.location.as_str())
                    .collect()
            };
            if phrases.is_empty() && !include_empty {
                continue;
            }
            let items: Vec<String> = phrases.iter().map(|p| quote_single(p)).collect();
            parts.push(format!("'{}': [{}]", ins.as_str(), items.join(", ")));
        }
        format!("{{{}}}", parts.join(", "))
    }
}

fn quote_single(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for ch in s.chars() {
        if ch == '\'' || ch == '\\' {
            out.push('\\');
        }
        out.push(ch);
    }
    out.push('\'');
    out
}
