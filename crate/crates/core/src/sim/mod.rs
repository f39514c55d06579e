//! Synthetic 2.5D scenes that emit perception frames, plus an oracle VLM
//! answering from the scene's ground truth.

mod agent;
mod bench;
mod oracle;
mod raycast;
mod scene;

use thiserror::Error;

pub use agent::SimAgent;
pub use bench::{
    benchmark_trajectory, emit_sequence, make_benchmark, observe_trajectory, write_benchmark, Benchmark, TrajectoryPose,
};
pub use oracle::{corrupt_cues, OracleVlm};
pub use raycast::{observe, observe_full, sign_crop, Hit, Observation, SimCamera, SIGN_KEY};
pub use scene::{
    polyline_distance, BranchSpec, CueSpec, Element, ElementKind, OccluderSpec, SceneSpec, SignSpec, StartSpec,
    StructureSpec,
};

use crate::perception::PerceptionError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid agent pose: {0}")]
    InvalidAgentPose(String),
    #[error("trajectory pose {index}: {message}")]
    Trajectory { index: usize, message: String },
    #[error("scene too simple: {0}")]
    SceneTooSimple(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
}
