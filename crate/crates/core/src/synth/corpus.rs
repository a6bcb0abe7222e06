//! Corpus generation and persistence.
//!
//! A corpus directory holds `scenario.json`, `manifest.json` and one
//! JSON Lines file per event under `events/<user>/`: the first line is
//! the event header, every following line one sensor frame with `null`
//! fields where tracking dropped out.

use super::generate::{generate_event, EventSpec, Target};
use super::profile::{calibrate_pose_profile, DriverProfile, OcclusionModel};
use super::scenario::{Scenario, ScenarioFile};
use super::SynthError;
use crate::frames::{
    extract_window, interpolate_gaps, FrameStream, ModalityFrame, SampleMeta, SampleTensor,
    Validity, MODALITIES, NOMINAL_FPS,
};
use crate::geo::ReferenceType;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub n_users: usize,
    pub events_per_user: usize,
    pub seed: u64,
    /// Car poses to draw events from, cycled per user.
    pub poses: Vec<u32>,
    /// Fraction of events that reference a point instead of a volume.
    pub poi_fraction: f64,
    /// Disables all noise sources (profile offsets, jitter).
    pub noiseless: bool,
    /// Enables the default occlusion model.
    pub occlusion: bool,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_users: 28,
            events_per_user: 40,
            seed: 0,
            poses: vec![1, 2, 3, 4],
            poi_fraction: 0.2,
            noiseless: false,
            occlusion: true,
        }
    }
}

/// Header line of an event file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub user_id: String,
    pub pose_id: u32,
    pub roi_id: u32,
    pub poi_index: Option<usize>,
    pub ref_type: ReferenceType,
    pub trigger_ts: f64,
    pub n_frames: usize,
}

/// One sensor frame. A `None` position/direction pair means the
/// modality was not tracked in that frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub ts: f64,
    pub finger_pos: Option<[f64; 3]>,
    pub finger_dir: Option<[f64; 3]>,
    pub eye_pos: Option<[f64; 3]>,
    pub eye_dir: Option<[f64; 3]>,
    pub head_pos: Option<[f64; 3]>,
    pub head_euler: Option<[f64; 3]>,
}

#[derive(Debug, Clone)]
pub struct LoadedEvent {
    pub record: EventRecord,
    pub stream: FrameStream,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestUser {
    pub user_id: String,
    /// Event file paths relative to the corpus root.
    pub events: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub n_users: usize,
    pub events_per_user: usize,
    pub users: Vec<ManifestUser>,
}

/// splitmix64 finalizer over the corpus seed and per-event indices, so
/// every event owns an independent deterministic stream.
fn event_seed(corpus_seed: u64, user_idx: u64, event_idx: u64) -> u64 {
    let mut x = corpus_seed
        .wrapping_add(user_idx.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(event_idx.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Per-user skill factor applied to every noise statistic.
fn scale_profile(base: &DriverProfile, factor: f64) -> DriverProfile {
    let mut p = base.clone();
    for n in [&mut p.head, &mut p.eye, &mut p.finger] {
        n.yaw.mean_deg *= factor;
        n.yaw.sd_deg *= factor;
        n.pitch.mean_deg *= factor;
        n.pitch.sd_deg *= factor;
    }
    p
}

fn opt_vec(v: &Vector3<f64>, present: bool) -> Option<[f64; 3]> {
    present.then(|| [v.x, v.y, v.z])
}

fn frame_to_record(f: &ModalityFrame) -> FrameRecord {
    FrameRecord {
        ts: f.timestamp,
        finger_pos: opt_vec(&f.finger_pos, f.finger_valid.is_usable()),
        finger_dir: opt_vec(&f.finger_dir, f.finger_valid.is_usable()),
        eye_pos: opt_vec(&f.eye_pos, f.eye_valid.is_usable()),
        eye_dir: opt_vec(&f.eye_dir, f.eye_valid.is_usable()),
        head_pos: opt_vec(&f.head_pos, f.head_valid.is_usable()),
        head_euler: opt_vec(&f.head_euler, f.head_valid.is_usable()),
    }
}

fn record_to_frame(r: &FrameRecord, path: &Path) -> Result<ModalityFrame, SynthError> {
    let mut f = ModalityFrame::invalid_at(r.ts);
    let pair = |pos: &Option<[f64; 3]>,
                dir: &Option<[f64; 3]>,
                what: &str|
     -> Result<Option<(Vector3<f64>, Vector3<f64>)>, SynthError> {
        match (pos, dir) {
            (Some(p), Some(d)) => Ok(Some((Vector3::from(*p), Vector3::from(*d)))),
            (None, None) => Ok(None),
            _ => Err(SynthError::format(
                path,
                format!("{what} has position without direction (or vice versa) at ts {}", r.ts),
            )),
        }
    };
    if let Some((p, d)) = pair(&r.finger_pos, &r.finger_dir, "finger")? {
        f.finger_pos = p;
        f.finger_dir = d;
        f.finger_valid = Validity::Valid;
    }
    if let Some((p, d)) = pair(&r.eye_pos, &r.eye_dir, "eye")? {
        f.eye_pos = p;
        f.eye_dir = d;
        f.eye_valid = Validity::Valid;
    }
    if let Some((p, d)) = pair(&r.head_pos, &r.head_euler, "head")? {
        f.head_pos = p;
        f.head_euler = d;
        f.head_valid = Validity::Valid;
    }
    Ok(f)
}

/// Generates a full corpus into `dir` and returns its manifest.
pub fn generate_corpus(
    scenario_file: &ScenarioFile,
    cfg: &CorpusConfig,
    dir: &Path,
) -> Result<Manifest, SynthError> {
    if cfg.n_users < 2 {
        return Err(SynthError::TooFewUsers(cfg.n_users));
    }
    if cfg.poses.is_empty() {
        return Err(SynthError::InvalidScenario("no poses selected".into()));
    }
    let scenario = Scenario::from_file_model(scenario_file)?;
    fs::create_dir_all(dir).map_err(|e| SynthError::io(dir, e))?;
    let scenario_path = dir.join("scenario.json");
    let text = serde_json::to_string_pretty(scenario_file).expect("scenario serializes");
    fs::write(&scenario_path, text).map_err(|e| SynthError::io(&scenario_path, e))?;

    let occlusion = if cfg.occlusion {
        OcclusionModel::default_model()
    } else {
        OcclusionModel::none()
    };
    let n_rois = scenario.rois.len() as u32;
    let n_pois = scenario.pois.len();

    let mut users = Vec::with_capacity(cfg.n_users);
    for u in 0..cfg.n_users {
        let user_id = format!("u{:02}", u + 1);
        let user_dir = dir.join("events").join(&user_id);
        fs::create_dir_all(&user_dir).map_err(|e| SynthError::io(&user_dir, e))?;
        let mut user_rng = ChaCha20Rng::seed_from_u64(event_seed(cfg.seed, u as u64, u64::MAX));
        let skill: f64 = user_rng.random_range(0.8..1.2);
        let left_hand_prob: f64 = user_rng.random_range(0.0..0.25);

        let mut events = Vec::with_capacity(cfg.events_per_user);
        for e in 0..cfg.events_per_user {
            let mut rng =
                ChaCha20Rng::seed_from_u64(event_seed(cfg.seed, u as u64, e as u64));
            let pose_id = cfg.poses[e % cfg.poses.len()];
            let target = if n_pois > 0 && rng.random::<f64>() < cfg.poi_fraction {
                Target::Poi(rng.random_range(0..n_pois))
            } else {
                Target::Roi(rng.random_range(0..n_rois))
            };
            let profile = if cfg.noiseless {
                DriverProfile::noiseless()
            } else {
                let mut p = scale_profile(&calibrate_pose_profile(pose_id)?, skill);
                p.left_hand_prob = left_hand_prob;
                p
            };
            let ev = generate_event(
                &scenario,
                &EventSpec { pose_id, target },
                &profile,
                &occlusion,
                &mut rng,
            )?;

            let rel = format!("events/{user_id}/e{:04}.jsonl", e + 1);
            let path = dir.join(&rel);
            let mut w = BufWriter::new(File::create(&path).map_err(|e| SynthError::io(&path, e))?);
            let header = EventRecord {
                user_id: user_id.clone(),
                pose_id,
                roi_id: ev.roi_id,
                poi_index: ev.poi_index,
                ref_type: ev.ref_type,
                trigger_ts: ev.trigger_ts,
                n_frames: ev.stream.frames.len(),
            };
            writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))
                .map_err(|err| SynthError::io(&path, err))?;
            for f in &ev.stream.frames {
                let rec = frame_to_record(f);
                writeln!(w, "{}", serde_json::to_string(&rec).expect("frame serializes"))
                    .map_err(|err| SynthError::io(&path, err))?;
            }
            w.flush().map_err(|err| SynthError::io(&path, err))?;
            events.push(rel);
        }
        users.push(ManifestUser { user_id, events });
    }

    let manifest = Manifest {
        seed: cfg.seed,
        n_users: cfg.n_users,
        events_per_user: cfg.events_per_user,
        users,
    };
    let manifest_path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, text).map_err(|e| SynthError::io(&manifest_path, e))?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest, SynthError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| SynthError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| SynthError::format(&path, e.to_string()))
}

fn load_event(path: &PathBuf) -> Result<LoadedEvent, SynthError> {
    let file = File::open(path).map_err(|e| SynthError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| SynthError::format(path, "empty event file"))?
        .map_err(|e| SynthError::io(path, e))?;
    let record: EventRecord = serde_json::from_str(&header_line)
        .map_err(|e| SynthError::format(path, format!("bad header: {e}")))?;
    let mut frames = Vec::with_capacity(record.n_frames);
    for line in lines {
        let line = line.map_err(|e| SynthError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FrameRecord = serde_json::from_str(&line)
            .map_err(|e| SynthError::format(path, format!("bad frame: {e}")))?;
        frames.push(record_to_frame(&rec, path)?);
    }
    if frames.len() != record.n_frames {
        return Err(SynthError::format(
            path,
            format!("header claims {} frames, file has {}", record.n_frames, frames.len()),
        ));
    }
    Ok(LoadedEvent {
        record,
        stream: FrameStream::new(frames, NOMINAL_FPS)?,
    })
}

/// Loads a corpus directory back into memory.
pub fn load_corpus(dir: &Path) -> Result<(Scenario, Vec<LoadedEvent>), SynthError> {
    let scenario = Scenario::load(&dir.join("scenario.json"))?;
    let manifest = load_manifest(dir)?;
    let mut events = Vec::new();
    for user in &manifest.users {
        for rel in &user.events {
            events.push(load_event(&dir.join(rel))?);
        }
    }
    Ok((scenario, events))
}

/// Turns loaded events into labeled network samples: wholly-lost
/// modalities are zero-filled, remaining gaps linearly interpolated,
/// then the 36-frame window around the trigger is cut out and labeled
/// with the scenario ground truth.
pub fn build_samples(
    scenario: &Scenario,
    events: &[LoadedEvent],
) -> Result<Vec<SampleTensor>, SynthError> {
    let mut out = Vec::with_capacity(events.len());
    for ev in events {
        let mut stream = ev.stream.clone();
        for m in MODALITIES {
            if stream.frames.iter().all(|f| !f.validity(m).is_usable()) {
                // Nothing to interpolate from: substitute the all-zero
                // signal so the branch input is well-defined.
                for f in &mut stream.frames {
                    match m {
                        crate::frames::Modality::Finger => {
                            f.finger_pos = Vector3::zeros();
                            f.finger_dir = Vector3::zeros();
                        }
                        crate::frames::Modality::Eye => {
                            f.eye_pos = Vector3::zeros();
                            f.eye_dir = Vector3::zeros();
                        }
                        crate::frames::Modality::Head => {
                            f.head_pos = Vector3::zeros();
                            f.head_euler = Vector3::zeros();
                        }
                    }
                    f.set_validity(m, Validity::Valid);
                }
            }
        }
        let stream = interpolate_gaps(&stream)?;
        let mut tensor = extract_window(&stream, ev.record.trigger_ts)?;
        let truth = scenario.ground_truth(
            ev.record.pose_id,
            ev.record.roi_id,
            ev.record.poi_index,
            ev.record.ref_type,
        )?;
        tensor.label = Some(truth);
        tensor.meta = Some(SampleMeta {
            user_id: ev.record.user_id.clone(),
            pose_id: ev.record.pose_id,
            roi_id: ev.record.roi_id,
            ref_type: ev.record.ref_type,
        });
        out.push(tensor);
    }
    Ok(out)
}
