//! End-to-end multimodal driver referencing pipeline: synthetic sensor
//! streams in, fused 3D pointing direction and matched region of
//! interest out.
//!
//! Modules follow the data flow:
//! - [`geo`]: WGS84 → ECEF → car-frame transforms and ground truth
//! - [`frames`]: sensor streams, interpolation and window extraction
//! - [`synth`]: scenario construction and synthetic corpus generation
//! - [`fusion`]: the CNN fusion network, loss, training, checkpoints
//! - [`matching`]: fused vector → referenced ROI
//! - [`eval`]: metrics, user-based splits, ablations and reports

pub mod eval;
pub mod frames;
pub mod fusion;
pub mod geo;
pub mod matching;
pub mod synth;
