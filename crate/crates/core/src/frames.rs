//! Sensor-stream domain model: per-frame modality features, gap
//! interpolation, extrinsic transforms and fixed-length window
//! extraction into the network input tensor.

use crate::geo::{CarVector, ReferenceType, RigidTransform};
use nalgebra::Vector3;
use ndarray::Array3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Frames per second of the nominal sensor streams.
pub const NOMINAL_FPS: f64 = 45.0;
/// Temporal frames per sample (0.8 s at 45 fps).
pub const WINDOW_FRAMES: usize = 36;
/// Features per frame: position and direction for each of the three
/// modalities, in the order finger, eye, head.
pub const N_FEATURES: usize = 6;
/// Coordinates per feature.
pub const N_DIMS: usize = 3;
/// Half window length in seconds on each side of the trigger.
pub const HALF_WINDOW_SECS: f64 = 0.4;

#[derive(Debug, Error, PartialEq)]
pub enum FrameError {
    #[error("modality {0:?} has no valid frame in the stream")]
    EmptyModality(Modality),
    #[error("window around trigger {trigger} extends past stream bounds [{start}, {end}]")]
    InsufficientCoverage {
        trigger: f64,
        start: f64,
        end: f64,
    },
    #[error("timestamps not strictly increasing at index {0}")]
    NonMonotonicTimestamps(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Finger,
    Eye,
    Head,
}

pub const MODALITIES: [Modality; 3] = [Modality::Finger, Modality::Eye, Modality::Head];

/// Tracking state of one modality in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validity {
    Valid,
    Missing,
    Interpolated,
}

impl Validity {
    pub fn is_usable(self) -> bool {
        self != Validity::Missing
    }
}

/// One timestamped reading of all three modalities. Fields of a
/// modality are meaningful only when its validity is not `Missing`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalityFrame {
    pub timestamp: f64,
    pub finger_pos: Vector3<f64>,
    pub finger_dir: Vector3<f64>,
    pub eye_pos: Vector3<f64>,
    pub eye_dir: Vector3<f64>,
    pub head_pos: Vector3<f64>,
    /// Head orientation as (roll, pitch, yaw) in radians.
    pub head_euler: Vector3<f64>,
    pub finger_valid: Validity,
    pub eye_valid: Validity,
    pub head_valid: Validity,
}

impl ModalityFrame {
    pub fn invalid_at(timestamp: f64) -> Self {
        Self {
            timestamp,
            finger_pos: Vector3::zeros(),
            finger_dir: Vector3::zeros(),
            eye_pos: Vector3::zeros(),
            eye_dir: Vector3::zeros(),
            head_pos: Vector3::zeros(),
            head_euler: Vector3::zeros(),
            finger_valid: Validity::Missing,
            eye_valid: Validity::Missing,
            head_valid: Validity::Missing,
        }
    }

    pub fn validity(&self, m: Modality) -> Validity {
        match m {
            Modality::Finger => self.finger_valid,
            Modality::Eye => self.eye_valid,
            Modality::Head => self.head_valid,
        }
    }

    pub fn set_validity(&mut self, m: Modality, v: Validity) {
        match m {
            Modality::Finger => self.finger_valid = v,
            Modality::Eye => self.eye_valid = v,
            Modality::Head => self.head_valid = v,
        }
    }
}

/// Ordered frame sequence with its nominal rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameStream {
    pub frames: Vec<ModalityFrame>,
    pub nominal_fps: f64,
}

impl FrameStream {
    pub fn new(frames: Vec<ModalityFrame>, nominal_fps: f64) -> Result<Self, FrameError> {
        assert!(nominal_fps > 0.0);
        for i in 1..frames.len() {
            if frames[i].timestamp <= frames[i - 1].timestamp {
                return Err(FrameError::NonMonotonicTimestamps(i));
            }
        }
        Ok(Self {
            frames,
            nominal_fps,
        })
    }

    pub fn start(&self) -> f64 {
        self.frames.first().map(|f| f.timestamp).unwrap_or(0.0)
    }

    pub fn end(&self) -> f64 {
        self.frames.last().map(|f| f.timestamp).unwrap_or(0.0)
    }
}

/// Sensor-frame to car-frame transforms for the two camera systems.
/// The gesture camera observes the finger; the visual camera observes
/// head and eyes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorExtrinsics {
    pub gcs: RigidTransform,
    pub vcs: RigidTransform,
}

impl SensorExtrinsics {
    pub fn identity() -> Self {
        Self {
            gcs: RigidTransform::identity(),
            vcs: RigidTransform::identity(),
        }
    }
}

/// Metadata attached to a labeled sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub user_id: String,
    pub pose_id: u32,
    pub roi_id: u32,
    pub ref_type: ReferenceType,
}

/// Network input: (36 frames) x (6 features) x (3 coordinates), plus
/// the ground-truth direction and bookkeeping once labeled.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTensor {
    pub values: Array3<f64>,
    pub label: Option<CarVector>,
    pub meta: Option<SampleMeta>,
}

impl SampleTensor {
    pub fn shape_ok(&self) -> bool {
        self.values.shape() == [WINDOW_FRAMES, N_FEATURES, N_DIMS]
    }
}

/// Converts head Euler angles to the forward-axis unit vector.
///
/// Intrinsic yaw (about z), then pitch (about y), applied to the ISO
/// 8855 forward axis (1, 0, 0); roll spins about the forward axis and
/// does not move it.
pub fn euler_to_direction(head_euler: Vector3<f64>) -> Vector3<f64> {
    let pitch = head_euler.y;
    let yaw = head_euler.z;
    Vector3::new(
        yaw.cos() * pitch.cos(),
        yaw.sin() * pitch.cos(),
        -pitch.sin(),
    )
}

/// Transforms a sensor-frame reading into the car frame: positions are
/// rotated and translated, directions rotated only. Head Euler angles
/// are converted through the rotation of the forward/up axes.
pub fn transform_frame(frame: &ModalityFrame, ext: &SensorExtrinsics) -> ModalityFrame {
    let mut out = *frame;
    out.finger_pos = ext.gcs.apply(frame.finger_pos);
    out.finger_dir = ext.gcs.rotate(frame.finger_dir);
    out.eye_pos = ext.vcs.apply(frame.eye_pos);
    out.eye_dir = ext.vcs.rotate(frame.eye_dir);
    out.head_pos = ext.vcs.apply(frame.head_pos);
    // Rotate the head orientation by mapping its forward and left axes
    // through the extrinsics and re-extracting yaw/pitch/roll.
    let fwd = ext.vcs.rotate(euler_to_direction(frame.head_euler));
    let yaw = fwd.y.atan2(fwd.x);
    let pitch = (-fwd.z).asin();
    // Roll is recovered from the rotated left axis of the head frame.
    let left0 = euler_left_axis(frame.head_euler);
    let left = ext.vcs.rotate(left0);
    let roll = roll_from_axes(fwd, left, yaw, pitch);
    out.head_euler = Vector3::new(roll, pitch, yaw);
    out
}

fn euler_left_axis(e: Vector3<f64>) -> Vector3<f64> {
    let (roll, pitch, yaw) = (e.x, e.y, e.z);
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    // Column 2 of Rz(yaw) Ry(pitch) Rx(roll).
    Vector3::new(
        cy * sp * sr - sy * cr,
        sy * sp * sr + cy * cr,
        cp * sr,
    )
}

fn roll_from_axes(fwd: Vector3<f64>, left: Vector3<f64>, yaw: f64, pitch: f64) -> f64 {
    // Left axis with zero roll at this yaw/pitch.
    let zero_roll = euler_left_axis(Vector3::new(0.0, pitch, yaw));
    let s = fwd.dot(&zero_roll.cross(&left));
    let c = zero_roll.dot(&left);
    s.atan2(c)
}

/// Fills gaps in every modality by linear interpolation between the
/// nearest valid frames on each side; boundary gaps hold the nearest
/// valid value. Direction vectors are re-normalized after
/// interpolation. Frames that were already valid are never modified.
pub fn interpolate_gaps(stream: &FrameStream) -> Result<FrameStream, FrameError> {
    let mut out = stream.clone();
    for m in MODALITIES {
        let valid_idx: Vec<usize> = stream
            .frames
            .iter()
            .enumerate()
            .filter(|(_, f)| f.validity(m) == Validity::Valid)
            .map(|(i, _)| i)
            .collect();
        if valid_idx.is_empty() {
            return Err(FrameError::EmptyModality(m));
        }
        for i in 0..out.frames.len() {
            if stream.frames[i].validity(m) == Validity::Valid {
                continue;
            }
            let after = valid_idx.partition_point(|&v| v < i);
            let filled = match (after.checked_sub(1).map(|k| valid_idx[k]), valid_idx.get(after)) {
                (Some(lo), Some(&hi)) => {
                    let t0 = stream.frames[lo].timestamp;
                    let t1 = stream.frames[hi].timestamp;
                    let w = (stream.frames[i].timestamp - t0) / (t1 - t0);
                    lerp_modality(&stream.frames[lo], &stream.frames[hi], m, w)
                }
                (Some(lo), None) => copy_modality(&stream.frames[lo], m),
                (None, Some(&hi)) => copy_modality(&stream.frames[hi], m),
                (None, None) => unreachable!(),
            };
            apply_modality(&mut out.frames[i], m, filled);
            out.frames[i].set_validity(m, Validity::Interpolated);
        }
    }
    Ok(out)
}

/// Position, direction-or-euler pair for one modality.
#[derive(Clone, Copy)]
struct ModalityFields {
    pos: Vector3<f64>,
    dir: Vector3<f64>,
}

fn copy_modality(f: &ModalityFrame, m: Modality) -> ModalityFields {
    match m {
        Modality::Finger => ModalityFields { pos: f.finger_pos, dir: f.finger_dir },
        Modality::Eye => ModalityFields { pos: f.eye_pos, dir: f.eye_dir },
        Modality::Head => ModalityFields { pos: f.head_pos, dir: f.head_euler },
    }
}

fn lerp_modality(a: &ModalityFrame, b: &ModalityFrame, m: Modality, w: f64) -> ModalityFields {
    let fa = copy_modality(a, m);
    let fb = copy_modality(b, m);
    let pos = fa.pos * (1.0 - w) + fb.pos * w;
    let mut dir = fa.dir * (1.0 - w) + fb.dir * w;
    // Finger and eye carry unit directions; head carries Euler angles.
    if m != Modality::Head {
        let n = dir.norm();
        if n > 1e-12 {
            dir /= n;
        }
    }
    ModalityFields { pos, dir }
}

fn apply_modality(f: &mut ModalityFrame, m: Modality, v: ModalityFields) {
    match m {
        Modality::Finger => {
            f.finger_pos = v.pos;
            f.finger_dir = v.dir;
        }
        Modality::Eye => {
            f.eye_pos = v.pos;
            f.eye_dir = v.dir;
        }
        Modality::Head => {
            f.head_pos = v.pos;
            f.head_euler = v.dir;
        }
    }
}

/// Extracts the 36-frame window around the trigger: the 18 frames at or
/// before it and the 18 after, by timestamp. The stream must already be
/// gap-free.
pub fn extract_window(stream: &FrameStream, trigger_ts: f64) -> Result<SampleTensor, FrameError> {
    let cov_err = FrameError::InsufficientCoverage {
        trigger: trigger_ts,
        start: stream.start(),
        end: stream.end(),
    };
    if stream.frames.is_empty()
        || trigger_ts - HALF_WINDOW_SECS < stream.start() - 1e-9
        || trigger_ts + HALF_WINDOW_SECS > stream.end() + 1e-9
    {
        return Err(cov_err);
    }
    let split = stream
        .frames
        .partition_point(|f| f.timestamp <= trigger_ts);
    let half = WINDOW_FRAMES / 2;
    if split < half || stream.frames.len() - split < half {
        return Err(cov_err);
    }
    let window = &stream.frames[split - half..split + half];

    let mut values = Array3::zeros((WINDOW_FRAMES, N_FEATURES, N_DIMS));
    for (t, f) in window.iter().enumerate() {
        let feats = [
            f.finger_pos,
            f.finger_dir,
            f.eye_pos,
            f.eye_dir,
            f.head_pos,
            euler_to_direction(f.head_euler),
        ];
        for (fi, v) in feats.iter().enumerate() {
            for d in 0..N_DIMS {
                values[[t, fi, d]] = v[d];
            }
        }
    }
    Ok(SampleTensor {
        values,
        label: None,
        meta: None,
    })
}
