//! Synthetic data generation: scenario construction, driver behavior
//! profiles calibrated to the measured per-pose noise statistics, and
//! corpus emission in the JSON Lines sensor-event format.

mod corpus;
mod generate;
mod profile;
mod scenario;

pub use corpus::{
    build_samples, generate_corpus, load_corpus, load_manifest, CorpusConfig, EventRecord,
    FrameRecord, LoadedEvent, Manifest, ManifestUser,
};
pub use generate::{generate_event, EventSpec, GeneratedEvent, Target};
pub use profile::{
    calibrate_pose_profile, AngularNoise, DriverProfile, ModalityNoise, OcclusionEntry,
    OcclusionModel,
};
pub use scenario::{
    build_default_scenario, CarPose, PoseCategory, Scenario, ScenarioFile, ScenarioPoi,
};

use crate::frames::Modality;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("unknown car pose {0}")]
    UnknownPose(u32),
    #[error("unknown target: {0}")]
    UnknownTarget(String),
    #[error("scenario invalid: {0}")]
    InvalidScenario(String),
    #[error("corpus needs at least 2 users, got {0}")]
    TooFewUsers(usize),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Geo(#[from] crate::geo::GeoError),
    #[error("frame error: {0}")]
    Frame(#[from] crate::frames::FrameError),
}

impl SynthError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn format(path: &std::path::Path, message: impl Into<String>) -> Self {
        Self::Format {
            path: path.display().to_string(),
            message: message.into(),
        }
    }
}

/// Modality iteration order used by the occlusion machinery.
pub(crate) const OCCLUDABLE: [Modality; 3] = [Modality::Finger, Modality::Eye, Modality::Head];
