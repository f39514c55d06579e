//! Tolerant reader for the dict literal a VLM returns when parsing a sign.

use crate::scene::{Instruction, NavCueSet};

use super::SignError;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedReply {
    pub cues: NavCueSet,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Str(String),
    List(Vec<Value>),
    Null,
}

struct Reader<'a> {
    s: &'a [char],
    i: usize,
}

impl Reader<'_> {
    fn ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_whitespace() {
            self.i += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.s.get(self.i).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        self.ws();
        if self.peek() == Some(c) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn quoted(&mut self) -> Option<String> {
        let q = self.peek()?;
        self.i += 1;
        let mut out = String::new();
        while let Some(c) = self.peek() {
            self.i += 1;
            match c {
                '\\' => {
                    let e = self.peek()?;
                    self.i += 1;
                    out.push(match e {
                        'n' => '\n',
                        't' => '\t',
                        other => other,
                    });
                }
                c if c == q => return Some(out),
                c => out.push(c),
            }
        }
        None
    }

    /// Unquoted text up to a structural delimiter.
    fn bare(&mut self, stops: &[char]) -> String {
        let start = self.i;
        while let Some(c) = self.peek() {
            if stops.contains(&c) {
                break;
            }
            self.i += 1;
        }
        self.s[start..self.i].iter().collect::<String>().trim().to_string()
    }

    fn value(&mut self) -> Option<Value> {
        self.ws();
        match self.peek()? {
            '\'' | '"' => self.quoted().map(Value::Str),
            '[' => {
                self.i += 1;
                let mut items = Vec::new();
                loop {
                    if self.eat(']') {
                        return Some(Value::List(items));
                    }
                    items.push(self.value()?);
                    if !self.eat(',') {
                        return self.eat(']').then_some(Value::List(items));
                    }
                }
            }
            _ => {
                let word = self.bare(&[',', ']', '}']);
                match word.as_str() {
                    "" => None,
                    "None" | "null" => Some(Value::Null),
                    _ => Some(Value::Str(word)),
                }
            }
        }
    }

    fn dict(&mut self) -> Option<Vec<(String, Value)>> {
        if !self.eat('{') {
            return None;
        }
        let mut entries = Vec::new();
        loop {
            if self.eat('}') {
                return Some(entries);
            }
            self.ws();
            let key = match self.peek()? {
                '\'' | '"' => self.quoted()?,
                _ => self.bare(&[':', '}']),
            };
            if !self.eat(':') {
                return None;
            }
            entries.push((key, self.value()?));
            if !self.eat(',') {
                return self.eat('}').then_some(entries);
            }
        }
    }
}

fn strip_fences(text: &str) -> String {
    text.replace("```json", "")
        .replace("```JSON", "")
        .replace("```python", "")
        .replace("```", "")
}

fn collect(value: Value, out: &mut Vec<String>) {
    match value {
        Value::Str(s) => out.push(s),
        Value::List(items) => items.into_iter().for_each(|v| collect(v, out)),
        Value::Null => {}
    }
}

/// Extract the first well-formed dict literal. Only the 17 vocabulary keys
/// are kept; anything else is reported in `warnings`.
pub fn parse_vlm_reply(text: &str) -> Result<ParsedReply, SignError> {
    let cleaned = strip_fences(text);
    let chars: Vec<char> = cleaned.chars().collect();
    let mut entries = None;
    for (i, c) in chars.iter().enumerate() {
        if *c == '{' {
            let mut r = Reader { s: &chars, i };
            if let Some(e) = r.dict() {
                entries = Some(e);
                break;
            }
        }
    }
    let entries = entries.ok_or_else(|| SignError::UnparseableReply(text.to_string()))?;

    let mut out = ParsedReply::default();
    for (key, value) in entries {
        let key_norm = key.trim().to_lowercase();
        let Ok(ins) = key_norm.parse::<Instruction>() else {
            out.warnings.push(format!("dropped unknown key {key:?}"));
            continue;
        };
        let mut phrases = Vec::new();
        collect(value, &mut phrases);
        for p in phrases {
            if out.cues.insert(&p, ins).is_err() {
                out.warnings.push(format!("dropped empty phrase under {key_norm:?}"));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Instruction::*;

    #[test]
    fn direct_mapping() {
        let r = parse_vlm_reply("{'left': ['pharmacy'], 'locational': ['level 1']}").unwrap();
        assert_eq!(r.cues, NavCueSet::from_pairs(&[("pharmacy", Left), ("level 1", Locational)]));
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn all_empty() {
        let r = parse_vlm_reply("{'forward': [], 'left': []}").unwrap();
        assert!(r.cues.is_empty());
    }

    #[test]
    fn fenced_double_quoted() {
        let r = parse_vlm_reply("```json {\"up-escalator\": [\"Sentosa Express\"]} ```").unwrap();
        assert_eq!(r.cues, NavCueSet::from_pairs(&[("sentosa express", UpEscalator)]));
        let r = parse_vlm_reply("```json\n{\"up-escalator\": [\"Sentosa Express\"]}\n```").unwrap();
        assert_eq!(r.cues, NavCueSet::from_pairs(&[("sentosa express", UpEscalator)]));
    }

    #[test]
    fn prompt_layout_and_noise() {
        let text = "Sure! Here it is:\n{\n    'forward': ['Gate 3', \"Bob's Cafe\"], \n    'up-stairs' : ['Terrace'],\n    'sideways': ['x'],\n    'right': [''],\n    'backwards': None,\n}\nHope that helps.";
        let r = parse_vlm_reply(text).unwrap();
        assert_eq!(
            r.cues,
            NavCueSet::from_pairs(&[("gate 3", Forward), ("bob's cafe", Forward), ("terrace", UpStairs)])
        );
        assert_eq!(r.warnings.len(), 2);
    }

    #[test]
    fn escaped_quote_round_trip() {
        let set = NavCueSet::from_pairs(&[("st. john's", Left), ("a\\b", Right)]);
        assert_eq!(parse_vlm_reply(&set.to_dict_literal(true)).unwrap().cues, set);
    }

    #[test]
    fn no_dict_is_an_error() {
        assert!(matches!(parse_vlm_reply("I cannot read this sign."), Err(SignError::UnparseableReply(_))));
        assert!(parse_vlm_reply("{'left': ['unterminated").is_err());
    }
}
