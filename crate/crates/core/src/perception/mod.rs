//! Inputs to the pipeline: recorded frames and the VLM chat port.

mod frame;
pub(crate) mod png_io;
mod sequence;
mod vlm;

pub use frame::{DepthImage, Detection, Frame, RleMask, SignMask};
pub use sequence::{read_sequence, write_sequence, Assets, FrameEntry, Manifest, Sequence, MANIFEST, SEQUENCE_VERSION};
pub use vlm::{open_vlm, HttpVlm, RecordingVlm, ReplayVlm, Vlm, VlmPart, VlmRequest, VlmResponse, REPLAY_FILE};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("not a sequence directory (no sequence.json): {0}")]
    NotASequence(String),
    #[error("bad manifest: {0}")]
    Manifest(String),
    #[error("frame {index}: asset {asset:?}: {message}")]
    Frame { asset: String, index: usize, message: String },
    #[error("frame {index}: timestamp {t} does not follow {previous}")]
    Ordering { index: usize, previous: f64, t: f64 },
    #[error("i/o: {0}")]
    Io(String),
    #[error("VLM request has no parts")]
    EmptyRequest,
    #[error("replay store has no response for request {0}")]
    ReplayMiss(String),
    #[error("VLM transport failed after {retries} retries: {message}")]
    Transport { retries: u32, message: String },
    #[error("oracle cannot interpret request: {0}")]
    OracleMismatch(String),
    #[error("unknown VLM endpoint {0:?} (expected replay:DIR, http:URL or oracle:SCENE)")]
    Endpoint(String),
}

impl PerceptionError {
    pub(crate) fn frame(asset: &str, index: usize, message: impl Into<String>) -> Self {
        Self::Frame {
            asset: asset.to_string(),
            index,
            message: message.into(),
        }
    }
}
