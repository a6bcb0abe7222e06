//! Single referencing-event synthesis: a 1.6 s sensor stream in which
//! the driver sweeps gaze, head and finger from straight ahead onto the
//! target, with per-event angular offsets drawn from the behavior
//! profile, per-frame jitter, a lagging pointing gesture and optional
//! occlusion bursts.

use super::profile::{DriverProfile, OcclusionModel};
use super::scenario::{PoseCategory, Scenario};
use super::{SynthError, OCCLUDABLE};
use crate::frames::{
    euler_to_direction, FrameStream, Modality, ModalityFrame, Validity, HALF_WINDOW_SECS,
    NOMINAL_FPS,
};
use crate::geo::{CarVector, ReferenceType};
use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Frames per generated event stream (1.6 s at 45 fps).
const STREAM_FRAMES: usize = 72;
/// When the gaze sweep leaves the straight-ahead direction, seconds.
const SWEEP_START: f64 = 0.15;
/// Gaze sweep duration, seconds.
const SWEEP_DURATION: f64 = 0.35;

/// What the driver references.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// A whole ROI volume.
    Roi(u32),
    /// A point of interest by index into the scenario POI list.
    Poi(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct EventSpec {
    pub pose_id: u32,
    pub target: Target,
}

/// One synthesized referencing event with its label.
#[derive(Debug, Clone)]
pub struct GeneratedEvent {
    pub stream: FrameStream,
    pub trigger_ts: f64,
    pub truth: CarVector,
    pub pose_id: u32,
    pub roi_id: u32,
    pub poi_index: Option<usize>,
    pub ref_type: ReferenceType,
    pub category: PoseCategory,
}

/// Direction expressed as yaw/pitch in the car frame.
fn dir_to_yaw_pitch(d: &Vector3<f64>) -> (f64, f64) {
    (d.y.atan2(d.x), (-d.z).asin())
}

/// Applies signed yaw/pitch offsets to a unit direction.
fn offset_direction(d: &Vector3<f64>, dyaw: f64, dpitch: f64) -> Vector3<f64> {
    let (yaw, pitch) = dir_to_yaw_pitch(d);
    let pitch = (pitch + dpitch).clamp(-1.55, 1.55);
    euler_to_direction(Vector3::new(0.0, pitch, yaw + dyaw))
}

fn smoothstep(x: f64) -> f64 {
    let s = x.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Normalized linear blend; endpoints are reproduced exactly.
fn blend_dir(a: &Vector3<f64>, b: &Vector3<f64>, w: f64) -> Vector3<f64> {
    if w <= 0.0 {
        return *a;
    }
    if w >= 1.0 {
        return *b;
    }
    (a * (1.0 - w) + b * w).normalize()
}

/// Marks frames occluded with geometrically distributed bursts whose
/// stationary loss fraction matches `probability`.
fn occlusion_mask<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    probability: f64,
    mean_burst: f64,
) -> Vec<bool> {
    let p = probability.clamp(0.0, 1.0);
    if p >= 1.0 {
        return vec![true; n];
    }
    let mut mask = vec![false; n];
    if p <= 0.0 {
        return mask;
    }
    let burst = mean_burst.max(1.0);
    // Burst starts at rate p / mean_burst among non-occluded frames.
    let p_start = (p / burst / (1.0 - p)).min(1.0);
    let p_end = 1.0 / burst;
    let mut occluded = false;
    for slot in mask.iter_mut() {
        if occluded {
            *slot = true;
            if rng.random::<f64>() < p_end {
                occluded = false;
            }
        } else if rng.random::<f64>() < p_start {
            *slot = true;
            // The entry frame counts towards the geometric burst length.
            occluded = rng.random::<f64>() >= p_end;
        }
    }
    mask
}

/// Generates one event. The stream covers `[0, 1.58]` s; the trigger is
/// placed after all modalities have arrived on target, so the window
/// around it always fits.
pub fn generate_event<R: Rng + ?Sized>(
    scenario: &Scenario,
    spec: &EventSpec,
    profile: &DriverProfile,
    occlusion: &OcclusionModel,
    rng: &mut R,
) -> Result<GeneratedEvent, SynthError> {
    let (roi_id, poi_index, ref_type) = match spec.target {
        Target::Roi(id) => (id, None, ReferenceType::Volume),
        Target::Poi(idx) => {
            let poi = scenario
                .pois
                .get(idx)
                .ok_or_else(|| SynthError::UnknownTarget(format!("POI index {idx}")))?;
            (poi.roi_id, Some(idx), ReferenceType::Point)
        }
    };
    let truth = scenario.ground_truth(spec.pose_id, roi_id, poi_index, ref_type)?;
    let category = scenario.categorize(spec.pose_id, roi_id)?;
    let truth_dir = truth.as_vector();
    let forward = Vector3::new(1.0, 0.0, 0.0);

    // Per-event target direction of each modality: truth plus the
    // profile's systematic offset.
    let mut targets = [truth_dir; 3];
    let mut sweep_starts = [SWEEP_START; 3];
    for (i, m) in OCCLUDABLE.iter().enumerate() {
        let n = profile.noise(*m);
        let dyaw = n.yaw.sample_rad(rng);
        let dpitch = n.pitch.sample_rad(rng);
        targets[i] = offset_direction(&truth_dir, dyaw, dpitch);
        if *m == Modality::Finger {
            sweep_starts[i] += profile.finger_lag;
        }
    }

    let jitter = Normal::new(0.0, profile.jitter_sd_deg.to_radians()).expect("sd >= 0");
    let left_hand = rng.random::<f64>() < profile.left_hand_prob;
    // Interior geometry, car frame: head behind and above the front
    // axle, eyes slightly forward of the head, hand low and central.
    let head_pos = Vector3::new(-0.5, 0.4, 1.2);
    let eye_pos = Vector3::new(-0.42, 0.4, 1.22);
    let hand_y = if left_hand { 0.55 } else { 0.25 };

    let dt = 1.0 / NOMINAL_FPS;
    let mut frames = Vec::with_capacity(STREAM_FRAMES);
    for i in 0..STREAM_FRAMES {
        let ts = i as f64 * dt;
        let mut dir = [forward; 3];
        for k in 0..3 {
            let w = smoothstep((ts - sweep_starts[k]) / SWEEP_DURATION);
            let mut d = blend_dir(&forward, &targets[k], w);
            if profile.jitter_sd_deg > 0.0 {
                d = offset_direction(&d, jitter.sample(rng), jitter.sample(rng));
            }
            dir[k] = d;
        }
        let (head_yaw, head_pitch) = dir_to_yaw_pitch(&dir[2]);
        frames.push(ModalityFrame {
            timestamp: ts,
            finger_pos: Vector3::new(-0.45, hand_y, 0.95),
            finger_dir: dir[0],
            eye_pos,
            eye_dir: dir[1],
            head_pos,
            head_euler: Vector3::new(0.0, head_pitch, head_yaw),
            finger_valid: Validity::Valid,
            eye_valid: Validity::Valid,
            head_valid: Validity::Valid,
        });
    }

    // Occlusion bursts per modality.
    for (i, m) in OCCLUDABLE.iter().enumerate() {
        let e = occlusion.entry(category, *m);
        let p = e.probability * profile.occlusion_scale;
        let mask = occlusion_mask(rng, STREAM_FRAMES, p, e.mean_burst);
        for (f, lost) in frames.iter_mut().zip(mask) {
            if lost {
                f.set_validity(OCCLUDABLE[i], Validity::Missing);
            }
        }
    }

    // Trigger after every modality has settled on target; jittered so
    // the trigger does not always fall on the same stream phase.
    let arrival = sweep_starts
        .iter()
        .fold(f64::NEG_INFINITY, |a, &s| a.max(s))
        + SWEEP_DURATION;
    let slack = (STREAM_FRAMES - 1) as f64 * dt - HALF_WINDOW_SECS - arrival - dt;
    let trigger_ts = arrival + dt + rng.random::<f64>() * slack.max(0.0);

    Ok(GeneratedEvent {
        stream: FrameStream::new(frames, NOMINAL_FPS)?,
        trigger_ts,
        truth,
        pose_id: spec.pose_id,
        roi_id,
        poi_index,
        ref_type,
        category,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::profile::calibrate_pose_profile;
    use crate::synth::scenario::{build_default_scenario, Scenario};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scenario() -> Scenario {
        Scenario::from_file_model(&build_default_scenario()).unwrap()
    }

    #[test]
    fn noiseless_event_hits_truth_at_trigger() {
        let s = scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for roi in 0..5 {
            let ev = generate_event(
                &s,
                &EventSpec {
                    pose_id: 1,
                    target: Target::Roi(roi),
                },
                &DriverProfile::noiseless(),
                &OcclusionModel::none(),
                &mut rng,
            )
            .unwrap();
            let truth = ev.truth.as_vector();
            // Every frame at/after the trigger is locked onto the target.
            for f in ev.stream.frames.iter().filter(|f| f.timestamp >= ev.trigger_ts - 1e-9) {
                assert!((f.finger_dir - truth).norm() < 1e-12);
                assert!((f.eye_dir - truth).norm() < 1e-12);
                assert!((euler_to_direction(f.head_euler) - truth).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn stream_starts_forward_and_covers_window() {
        let s = scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ev = generate_event(
            &s,
            &EventSpec {
                pose_id: 2,
                target: Target::Roi(3),
            },
            &DriverProfile::noiseless(),
            &OcclusionModel::none(),
            &mut rng,
        )
        .unwrap();
        let first = &ev.stream.frames[0];
        assert!((first.eye_dir - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!(ev.trigger_ts - HALF_WINDOW_SECS >= ev.stream.start());
        assert!(ev.trigger_ts + HALF_WINDOW_SECS <= ev.stream.end());
        assert_eq!(ev.stream.frames.len(), STREAM_FRAMES);
    }

    #[test]
    fn poi_target_resolves_roi_and_ref_type() {
        let s = scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ev = generate_event(
            &s,
            &EventSpec {
                pose_id: 1,
                target: Target::Poi(4),
            },
            &DriverProfile::noiseless(),
            &OcclusionModel::none(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(ev.ref_type, ReferenceType::Point);
        assert_eq!(ev.roi_id, s.pois[4].roi_id);
        assert_eq!(ev.poi_index, Some(4));
        // The point truth differs from the volume truth of the same ROI.
        let vol = s
            .ground_truth(1, ev.roi_id, None, ReferenceType::Volume)
            .unwrap();
        assert!((ev.truth.as_vector() - vol.as_vector()).norm() > 1e-4);
    }

    #[test]
    fn unknown_poi_rejected() {
        let s = scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(matches!(
            generate_event(
                &s,
                &EventSpec {
                    pose_id: 1,
                    target: Target::Poi(99),
                },
                &DriverProfile::noiseless(),
                &OcclusionModel::none(),
                &mut rng,
            ),
            Err(SynthError::UnknownTarget(_))
        ));
    }

    #[test]
    fn occlusion_rate_matches_entry() {
        let s = scenario();
        let profile = calibrate_pose_profile(2).unwrap();
        let model = OcclusionModel::default_model();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut lost = 0usize;
        let mut total = 0usize;
        for _ in 0..300 {
            let ev = generate_event(
                &s,
                &EventSpec {
                    pose_id: 2,
                    // Far-right for pose 2: highest finger dropout.
                    target: Target::Roi(0),
                },
                &profile,
                &model,
                &mut rng,
            )
            .unwrap();
            assert!(ev.category.is_far());
            for f in &ev.stream.frames {
                total += 1;
                if f.finger_valid == Validity::Missing {
                    lost += 1;
                }
            }
        }
        let rate = lost as f64 / total as f64;
        assert!((rate - 0.35).abs() < 0.05, "finger loss rate {rate}");
    }

    #[test]
    fn full_occlusion_loses_everything() {
        let s = scenario();
        let mut profile = DriverProfile::noiseless();
        profile.occlusion_scale = 10.0;
        let model = OcclusionModel::default_model();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ev = generate_event(
            &s,
            &EventSpec {
                pose_id: 3,
                target: Target::Roi(0),
            },
            &profile,
            &model,
            &mut rng,
        )
        .unwrap();
        assert!(ev
            .stream
            .frames
            .iter()
            .all(|f| f.finger_valid == Validity::Missing));
    }

    #[test]
    fn noisy_event_is_off_truth_but_unit_norm() {
        let s = scenario();
        let profile = calibrate_pose_profile(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ev = generate_event(
            &s,
            &EventSpec {
                pose_id: 1,
                target: Target::Roi(2),
            },
            &profile,
            &OcclusionModel::none(),
            &mut rng,
        )
        .unwrap();
        let last = ev.stream.frames.last().unwrap();
        assert!((last.finger_dir.norm() - 1.0).abs() < 1e-9);
        assert!((last.finger_dir - ev.truth.as_vector()).norm() > 1e-3);
    }

    #[test]
    fn deterministic_for_same_seed() {
        let s = scenario();
        let profile = calibrate_pose_profile(3).unwrap();
        let model = OcclusionModel::default_model();
        let spec = EventSpec {
            pose_id: 3,
            target: Target::Roi(4),
        };
        let ev1 = generate_event(&s, &spec, &profile, &model, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
        let ev2 = generate_event(&s, &spec, &profile, &model, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
        assert_eq!(ev1.stream, ev2.stream);
        assert_eq!(ev1.trigger_ts, ev2.trigger_ts);
    }
}
