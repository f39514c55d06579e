//! Signs, cues, structures and the 3D abstract map they live in.

mod cues;
mod instruction;
mod map;

pub use cues::{normalize_phrase, NavCue, NavCueSet};
pub use instruction::{Instruction, Semantics, StructureClass, Vertical};
pub use map::{
    deserialize_atom, load_atom, save_atom, serialize_atom, AtomMap, FrameLogEntry, ParseRecord, SignInstance,
    StructureInstance, ATOM_VERSION,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("unknown instruction token {0:?}")]
    UnknownInstruction(String),
    #[error("location phrase is empty after normalization")]
    EmptyLocation,
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("invalid map: {0}")]
    Invalid(String),
    #[error("i/o: {0}")]
    Io(String),
}
