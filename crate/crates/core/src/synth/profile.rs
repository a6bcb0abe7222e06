//! Driver behavior profiles: per-pose angular error statistics for each
//! modality, and the occlusion model describing tracking dropouts.
//!
//! Angular errors are sampled as a Gamma-distributed magnitude with a
//! random sign. The Gamma is moment-matched to the measured mean and
//! standard deviation of the absolute error, which a folded normal
//! cannot reproduce once the deviation exceeds the mean (its
//! coefficient of variation is capped near 0.756; several measured rows
//! sit above that).

use crate::frames::Modality;
use crate::synth::scenario::PoseCategory;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Absolute angular error statistics in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularNoise {
    pub mean_deg: f64,
    pub sd_deg: f64,
}

impl AngularNoise {
    /// Moment-matched Gamma parameters (shape, scale) for the error
    /// magnitude: k = (m/s)², θ = s²/m.
    pub fn gamma_params(&self) -> (f64, f64) {
        let m = self.mean_deg;
        let s = self.sd_deg;
        ((m / s) * (m / s), s * s / m)
    }

    /// Samples one signed angular error in radians.
    pub fn sample_rad<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.mean_deg <= 0.0 {
            return 0.0;
        }
        let mag_deg = if self.sd_deg <= 0.0 {
            self.mean_deg
        } else {
            let (k, theta) = self.gamma_params();
            Gamma::new(k, theta)
                .expect("moment-matched parameters are positive")
                .sample(rng)
        };
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        sign * mag_deg.to_radians()
    }
}

/// Yaw and pitch error statistics of one modality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalityNoise {
    pub yaw: AngularNoise,
    pub pitch: AngularNoise,
}

/// Everything the event generator needs about one driver at one pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverProfile {
    pub head: ModalityNoise,
    pub eye: ModalityNoise,
    pub finger: ModalityNoise,
    /// Delay of the pointing gesture behind the gaze, seconds.
    pub finger_lag: f64,
    /// Per-frame angular jitter around the per-event offset, degrees.
    pub jitter_sd_deg: f64,
    /// Probability that the driver points with the left hand.
    pub left_hand_prob: f64,
    /// Multiplier on all occlusion probabilities.
    pub occlusion_scale: f64,
}

impl DriverProfile {
    /// Profile with every error source switched off; the generated
    /// streams then hit the ground truth exactly at the trigger.
    pub fn noiseless() -> Self {
        let silent = ModalityNoise {
            yaw: AngularNoise {
                mean_deg: 0.0,
                sd_deg: 0.0,
            },
            pitch: AngularNoise {
                mean_deg: 0.0,
                sd_deg: 0.0,
            },
        };
        Self {
            head: silent,
            eye: silent,
            finger: silent,
            finger_lag: DEFAULT_FINGER_LAG,
            jitter_sd_deg: 0.0,
            left_hand_prob: 0.0,
            occlusion_scale: 0.0,
        }
    }

    pub fn noise(&self, m: Modality) -> &ModalityNoise {
        match m {
            Modality::Finger => &self.finger,
            Modality::Eye => &self.eye,
            Modality::Head => &self.head,
        }
    }
}

/// Measured per-pose absolute angular error, degrees, as
/// (yaw_mean, yaw_sd, pitch_mean, pitch_sd) for head, eye, finger.
const POSE_STATS: [[(f64, f64, f64, f64); 3]; 4] = [
    // pose 1
    [
        (18.0, 13.0, 20.0, 15.0),
        (8.0, 10.0, 15.0, 11.0),
        (28.0, 24.0, 27.0, 17.0),
    ],
    // pose 2
    [
        (31.0, 21.0, 21.0, 18.0),
        (25.0, 25.0, 18.0, 11.0),
        (49.0, 42.0, 19.0, 14.0),
    ],
    // pose 3
    [
        (25.0, 16.0, 16.0, 13.0),
        (14.0, 17.0, 16.0, 12.0),
        (31.0, 32.0, 25.0, 16.0),
    ],
    // pose 4
    [
        (9.0, 9.0, 9.0, 7.0),
        (6.0, 7.0, 12.0, 9.0),
        (24.0, 19.0, 25.0, 16.0),
    ],
];

const DEFAULT_FINGER_LAG: f64 = 0.15;
const DEFAULT_JITTER_SD_DEG: f64 = 0.5;

/// Builds the profile matching the measured noise table for a pose.
pub fn calibrate_pose_profile(pose_id: u32) -> Result<DriverProfile, super::SynthError> {
    let idx = match pose_id {
        1..=4 => (pose_id - 1) as usize,
        other => return Err(super::SynthError::UnknownPose(other)),
    };
    let row = &POSE_STATS[idx];
    let noise = |i: usize| ModalityNoise {
        yaw: AngularNoise {
            mean_deg: row[i].0,
            sd_deg: row[i].1,
        },
        pitch: AngularNoise {
            mean_deg: row[i].2,
            sd_deg: row[i].3,
        },
    };
    Ok(DriverProfile {
        head: noise(0),
        eye: noise(1),
        finger: noise(2),
        finger_lag: DEFAULT_FINGER_LAG,
        jitter_sd_deg: DEFAULT_JITTER_SD_DEG,
        left_hand_prob: 0.1,
        occlusion_scale: 1.0,
    })
}

/// Dropout behavior of one modality for one target category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcclusionEntry {
    /// Fraction of frames lost to occlusion bursts.
    pub probability: f64,
    /// Mean burst length in frames (geometric).
    pub mean_burst: f64,
}

impl OcclusionEntry {
    pub const NONE: Self = Self {
        probability: 0.0,
        mean_burst: 1.0,
    };
}

/// Occlusion rates keyed by target category and modality. Targets far
/// off-axis force larger head and arm excursions, so their dropouts are
/// markedly more frequent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OcclusionModel {
    entries: HashMap<(PoseCategory, Modality), OcclusionEntry>,
}

impl OcclusionModel {
    /// No occlusion at all.
    pub fn none() -> Self {
        Self::default()
    }

    pub fn default_model() -> Self {
        let mut m = Self::default();
        for cat in [
            PoseCategory::FarLeft,
            PoseCategory::NearLeft,
            PoseCategory::NearRight,
            PoseCategory::FarRight,
        ] {
            let far = cat.is_far();
            m.set(
                cat,
                Modality::Finger,
                OcclusionEntry {
                    probability: if far { 0.35 } else { 0.15 },
                    mean_burst: 4.0,
                },
            );
            m.set(
                cat,
                Modality::Eye,
                OcclusionEntry {
                    probability: if far { 0.25 } else { 0.10 },
                    mean_burst: 3.0,
                },
            );
            m.set(
                cat,
                Modality::Head,
                OcclusionEntry {
                    probability: if far { 0.10 } else { 0.05 },
                    mean_burst: 3.0,
                },
            );
        }
        m
    }

    pub fn set(&mut self, cat: PoseCategory, m: Modality, e: OcclusionEntry) {
        self.entries.insert((cat, m), e);
    }

    pub fn entry(&self, cat: PoseCategory, m: Modality) -> OcclusionEntry {
        self.entries
            .get(&(cat, m))
            .copied()
            .unwrap_or(OcclusionEntry::NONE)
    }
}
