//! Python bindings for the referencing pipeline: geodetic transforms,
//! scenario handling, corpus generation and ROI matching.

use nalgebra::Vector3;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use refpoint_core::geo::{wgs84_to_ecef as core_wgs84_to_ecef, Ellipsoid, GeodeticPoint, ReferenceType};
use refpoint_core::matching::match_roi;
use refpoint_core::synth::{
    build_default_scenario, generate_corpus, load_corpus, CorpusConfig, Scenario as CoreScenario,
    ScenarioFile, SynthError,
};
use std::path::Path;

fn synth_err(e: SynthError) -> PyErr {
    match &e {
        SynthError::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// WGS84 geodetic (degrees, meters) to ECEF coordinates in meters.
#[pyfunction]
fn wgs84_to_ecef(lat_deg: f64, lon_deg: f64, alt_m: f64) -> PyResult<(f64, f64, f64)> {
    let g = GeodeticPoint::from_degrees(lat_deg, lon_deg, alt_m)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let p = core_wgs84_to_ecef(&g, &Ellipsoid::wgs84());
    Ok((p.x, p.y, p.z))
}

/// A referencing scenario: car poses, ROI boxes and POIs.
#[pyclass]
struct Scenario {
    file: ScenarioFile,
    inner: CoreScenario,
}

#[pymethods]
impl Scenario {
    /// The built-in default scenario.
    #[staticmethod]
    fn default() -> PyResult<Self> {
        let file = build_default_scenario();
        let inner = CoreScenario::from_file_model(&file).map_err(synth_err)?;
        Ok(Self { file, inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let inner = CoreScenario::from_file_model(&file).map_err(synth_err)?;
        Ok(Self { file, inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("scenario serializes")
    }

    #[getter]
    fn n_poses(&self) -> usize {
        self.inner.poses.len()
    }

    #[getter]
    fn n_rois(&self) -> usize {
        self.inner.rois.len()
    }

    #[getter]
    fn n_pois(&self) -> usize {
        self.inner.pois.len()
    }

    /// Distance in meters from the car origin of a pose to a ROI centre.
    fn roi_distance(&self, pose_id: u32, roi_id: u32) -> PyResult<f64> {
        self.inner.roi_distance(pose_id, roi_id).map_err(synth_err)
    }

    /// Side/angle category of a ROI for a pose, e.g. "near_left".
    fn categorize(&self, pose_id: u32, roi_id: u32) -> PyResult<String> {
        let cat = self.inner.categorize(pose_id, roi_id).map_err(synth_err)?;
        Ok(serde_json::to_value(cat)
            .expect("category serializes")
            .as_str()
            .expect("category is a string")
            .to_string())
    }

    /// Ground-truth unit direction to a ROI volume in a pose's car frame.
    fn ground_truth(&self, pose_id: u32, roi_id: u32) -> PyResult<(f64, f64, f64)> {
        let v = self
            .inner
            .ground_truth(pose_id, roi_id, None, ReferenceType::Volume)
            .map_err(synth_err)?;
        Ok((v.x, v.y, v.z))
    }

    /// Matches a fused car-frame direction against the ROI map.
    /// Returns {"chosen": id, "ranking": [{roi_id, distance, centroid_angle}, ...]}.
    fn match_vector<'py>(
        &self,
        py: Python<'py>,
        pose_id: u32,
        vector: (f64, f64, f64),
    ) -> PyResult<Bound<'py, PyDict>> {
        let pose = self.inner.pose(pose_id).map_err(synth_err)?;
        let v = Vector3::new(vector.0, vector.1, vector.2);
        let result = match_roi(&v, &self.inner.roi_map(), &pose.transform)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let out = PyDict::new(py);
        out.set_item("chosen", result.chosen)?;
        let ranking = PyList::empty(py);
        for s in &result.ranking {
            let row = PyDict::new(py);
            row.set_item("roi_id", s.roi_id)?;
            row.set_item("distance", s.distance)?;
            row.set_item("centroid_angle", s.centroid_angle)?;
            ranking.append(row)?;
        }
        out.set_item("ranking", ranking)?;
        Ok(out)
    }

    /// Generates a synthetic corpus under `out_dir` and returns a summary.
    #[pyo3(signature = (out_dir, users=4, events=8, seed=0, noiseless=false, occlusion=true, poi_fraction=0.2))]
    fn generate_corpus<'py>(
        &self,
        py: Python<'py>,
        out_dir: &str,
        users: usize,
        events: usize,
        seed: u64,
        noiseless: bool,
        occlusion: bool,
        poi_fraction: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cfg = CorpusConfig {
            n_users: users,
            events_per_user: events,
            seed,
            noiseless,
            occlusion,
            poi_fraction,
            ..CorpusConfig::default()
        };
        let manifest = generate_corpus(&self.file, &cfg, Path::new(out_dir)).map_err(synth_err)?;
        let out = PyDict::new(py);
        out.set_item("n_users", manifest.n_users)?;
        out.set_item("events_per_user", manifest.events_per_user)?;
        out.set_item("seed", manifest.seed)?;
        out.set_item(
            "n_events",
            manifest.users.iter().map(|u| u.events.len()).sum::<usize>(),
        )?;
        Ok(out)
    }
}

/// Loads a corpus directory and returns per-event header dicts.
#[pyfunction]
fn corpus_events<'py>(py: Python<'py>, dir: &str) -> PyResult<Bound<'py, PyList>> {
    let (_, events) = load_corpus(Path::new(dir)).map_err(synth_err)?;
    let out = PyList::empty(py);
    for ev in &events {
        let row = PyDict::new(py);
        row.set_item("user_id", &ev.record.user_id)?;
        row.set_item("pose_id", ev.record.pose_id)?;
        row.set_item("roi_id", ev.record.roi_id)?;
        row.set_item("trigger_ts", ev.record.trigger_ts)?;
        row.set_item("n_frames", ev.record.n_frames)?;
        out.append(row)?;
    }
    Ok(out)
}

/// Mean and standard deviation of the angular deviation (degrees)
/// between two lists of 3-vectors.
#[pyfunction]
fn mad_metric(pred: Vec<(f64, f64, f64)>, truth: Vec<(f64, f64, f64)>) -> PyResult<(f64, f64)> {
    use ndarray::Array2;
    let to_mat = |rows: &[(f64, f64, f64)]| {
        let mut m = Array2::zeros((rows.len(), 3));
        for (i, r) in rows.iter().enumerate() {
            m[[i, 0]] = r.0;
            m[[i, 1]] = r.1;
            m[[i, 2]] = r.2;
        }
        m
    };
    refpoint_core::eval::mad_metric(&to_mat(&pred), &to_mat(&truth))
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn refpoint_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(wgs84_to_ecef, m)?)?;
    m.add_function(wrap_pyfunction!(corpus_events, m)?)?;
    m.add_function(wrap_pyfunction!(mad_metric, m)?)?;
    m.add_class::<Scenario>()?;
    Ok(())
}
