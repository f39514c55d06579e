use std::fmt;
use std::str::FromStr;

use nalgebra::Vector2;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::SceneError;

/// The closed vocabulary of navigational instructions a sign can express.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Instruction {
    Forward,
    Backwards,
    Left,
    Right,
    ForwardLeft,
    ForwardRight,
    BackwardRight,
    BackwardLeft,
    ForwardThenLeft,
    ForwardThenRight,
    LeftThenForward,
    RightThenForward,
    UpStairs,
    DownStairs,
    DownEscalator,
    UpEscalator,
    Locational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StructureClass {
    Stairs,
    Escalator,
}

impl StructureClass {
    pub fn as_str(self) -> &'static str {
        match self {
            StructureClass::Stairs => "stairs",
            StructureClass::Escalator => "escalator",
        }
    }

    pub fn matches_label(self, label: &str) -> bool {
        let label = label.trim().to_lowercase();
        match self {
            StructureClass::Stairs => label == "stairs" || label == "staircase" || label == "stair",
            StructureClass::Escalator => label == "escalator" || label == "escalators",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Vertical {
    Up,
    Down,
}

/// What an instruction means geometrically, in the sign frame (+Y = the
/// reader's forward, +X = the reader's right).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Semantics {
    Direction(Vector2<f64>),
    /// Go along the first direction, then turn to the second.
    Compound(Vector2<f64>, Vector2<f64>),
    Structure(StructureClass, Vertical),
    Locational,
}

impl Instruction {
    /// In the order the parsing prompt lists them.
    pub const ALL: [Instruction; 17] = [
        Instruction::Forward,
        Instruction::Backwards,
        Instruction::Left,
        Instruction::Right,
        Instruction::ForwardLeft,
        Instruction::ForwardRight,
        Instruction::BackwardRight,
        Instruction::BackwardLeft,
        Instruction::ForwardThenLeft,
        Instruction::ForwardThenRight,
        Instruction::LeftThenForward,
        Instruction::RightThenForward,
        Instruction::UpStairs,
        Instruction::DownStairs,
        Instruction::DownEscalator,
        Instruction::UpEscalator,
        Instruction::Locational,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Instruction::Forward => "forward",
            Instruction::Backwards => "backwards",
            Instruction::Left => "left",
            Instruction::Right => "right",
            Instruction::ForwardLeft => "forward-left",
            Instruction::ForwardRight => "forward-right",
            Instruction::BackwardRight => "backward-right",
            Instruction::BackwardLeft => "backward-left",
            Instruction::ForwardThenLeft => "forward-then-left",
            Instruction::ForwardThenRight => "forward-then-right",
            Instruction::LeftThenForward => "left-then-forward",
            Instruction::RightThenForward => "right-then-forward",
            Instruction::UpStairs => "up-stairs",
            Instruction::DownStairs => "down-stairs",
            Instruction::DownEscalator => "down-escalator",
            Instruction::UpEscalator => "up-escalator",
            Instruction::Locational => "locational",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|i| *i == self).expect("member of ALL")
    }

    pub fn semantics(self) -> Semantics {
        use Instruction::*;
        let d = |x: f64, y: f64| Vector2::new(x, y).normalize();
        match self {
            Forward => Semantics::Direction(d(0.0, 1.0)),
            Backwards => Semantics::Direction(d(0.0, -1.0)),
            Left => Semantics::Direction(d(-1.0, 0.0)),
            Right => Semantics::Direction(d(1.0, 0.0)),
            ForwardLeft => Semantics::Direction(d(-1.0, 1.0)),
            ForwardRight => Semantics::Direction(d(1.0, 1.0)),
            BackwardRight => Semantics::Direction(d(1.0, -1.0)),
            BackwardLeft => Semantics::Direction(d(-1.0, -1.0)),
            ForwardThenLeft => Semantics::Compound(d(0.0, 1.0), d(-1.0, 0.0)),
            ForwardThenRight => Semantics::Compound(d(0.0, 1.0), d(1.0, 0.0)),
            LeftThenForward => Semantics::Compound(d(-1.0, 0.0), d(0.0, 1.0)),
            RightThenForward => Semantics::Compound(d(1.0, 0.0), d(0.0, 1.0)),
            UpStairs => Semantics::Structure(StructureClass::Stairs, Vertical::Up),
            DownStairs => Semantics::Structure(StructureClass::Stairs, Vertical::Down),
            DownEscalator => Semantics::Structure(StructureClass::Escalator, Vertical::Down),
            UpEscalator => Semantics::Structure(StructureClass::Escalator, Vertical::Up),
            Locational => Semantics::Locational,
        }
    }

    /// Canonical unit vector for plain directional tokens.
    pub fn direction(self) -> Option<Vector2<f64>> {
        match self.semantics() {
            Semantics::Direction(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_locational(self) -> bool {
        self == Instruction::Locational
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Instruction {
    type Err = SceneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|i| i.as_str() == s)
            .ok_or_else(|| SceneError::UnknownInstruction(s.to_string()))
    }
}

impl Serialize for Instruction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Instruction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_is_closed() {
        assert_eq!(Instruction::ALL.len(), 17);
        for i in Instruction::ALL {
            assert_eq!(i.as_str().parse::<Instruction>().unwrap(), i);
        }
        for bad in ["Forward", "up", "straight", "", "left ", "backward"] {
            assert!(bad.parse::<Instruction>().is_err(), "{bad}");
        }
    }

    #[test]
    fn opposite_directions() {
        let l = Instruction::Left.direction().unwrap();
        let r = Instruction::Right.direction().unwrap();
        let f = Instruction::Forward.direction().unwrap();
        let b = Instruction::Backwards.direction().unwrap();
        assert!((l + r).norm() < 1e-12 && (f + b).norm() < 1e-12);
        assert_eq!(f, Vector2::new(0.0, 1.0));
        assert_eq!(r, Vector2::new(1.0, 0.0));
    }

    #[test]
    fn all_direction_vectors_are_unit() {
        for i in Instruction::ALL {
            match i.semantics() {
                Semantics::Direction(v) => assert!((v.norm() - 1.0).abs() < 1e-12),
                Semantics::Compound(a, b) => {
                    assert!((a.norm() - 1.0).abs() < 1e-12 && (b.norm() - 1.0).abs() < 1e-12)
                }
                _ => {}
            }
        }
        let fl = Instruction::ForwardLeft.direction().unwrap();
        assert!((fl.angle(&Vector2::new(0.0, 1.0)) - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn compound_keeps_order() {
        match Instruction::LeftThenForward.semantics() {
            Semantics::Compound(a, b) => {
                assert_eq!(a, Vector2::new(-1.0, 0.0));
                assert_eq!(b, Vector2::new(0.0, 1.0));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            Instruction::DownEscalator.semantics(),
            Semantics::Structure(StructureClass::Escalator, Vertical::Down)
        );
    }
}
