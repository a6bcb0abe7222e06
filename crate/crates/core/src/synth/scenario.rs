//! Scenario map: car poses, ROI boxes and POIs, stored geodetically in
//! the scenario file and resolved to ECEF plus per-pose car-frame
//! transforms on load.

use super::SynthError;
use crate::geo::{
    car_pose_transform, ground_truth_vector, prime_vertical_radius, wgs84_to_ecef, CarVector,
    EcefPoint, Ellipsoid, GeodeticPoint, ReferenceType, RigidTransform, TyreContacts,
};
use crate::matching::{Roi, RoiMap};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Side/angle category of a ROI relative to a car pose. `Far` means the
/// ROI centre lies more than 45 degrees off the car's forward axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseCategory {
    FarLeft,
    NearLeft,
    NearRight,
    FarRight,
}

impl PoseCategory {
    pub fn is_far(self) -> bool {
        matches!(self, PoseCategory::FarLeft | PoseCategory::FarRight)
    }

    pub fn is_left(self) -> bool {
        matches!(self, PoseCategory::FarLeft | PoseCategory::NearLeft)
    }
}

// ---------------------------------------------------------------------------
// File model (decimal degrees)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EllipsoidSpec {
    pub semi_major: f64,
    pub semi_minor: f64,
}

/// Tyre contact points as [lat_deg, lon_deg, alt_m].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TyreSpec {
    pub fl: [f64; 3],
    pub fr: [f64; 3],
    pub rl: [f64; 3],
    pub rr: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CarPoseSpec {
    pub id: u32,
    pub tyres: TyreSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoiSpec {
    pub id: u32,
    pub vertices: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoiSpec {
    pub roi_id: u32,
    pub point: [f64; 3],
}

/// On-disk scenario map. Latitudes and longitudes are decimal degrees.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub comment: String,
    pub ellipsoid: EllipsoidSpec,
    pub car_poses: Vec<CarPoseSpec>,
    pub rois: Vec<RoiSpec>,
    pub pois: Vec<PoiSpec>,
}

// ---------------------------------------------------------------------------
// Resolved scenario
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CarPose {
    pub id: u32,
    /// ECEF → car transform.
    pub transform: RigidTransform,
}

#[derive(Debug, Clone)]
pub struct ScenarioPoi {
    pub roi_id: u32,
    pub ecef: EcefPoint,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub ellipsoid: Ellipsoid,
    pub poses: Vec<CarPose>,
    pub rois: Vec<Roi>,
    pub pois: Vec<ScenarioPoi>,
    pub comment: String,
}

impl Scenario {
    pub fn from_file_model(file: &ScenarioFile) -> Result<Self, SynthError> {
        let ell = Ellipsoid::new(file.ellipsoid.semi_major, file.ellipsoid.semi_minor)?;
        let to_ecef = |c: &[f64; 3]| -> Result<EcefPoint, SynthError> {
            let g = GeodeticPoint::from_degrees(c[0], c[1], c[2])?;
            Ok(wgs84_to_ecef(&g, &ell))
        };
        let mut poses = Vec::new();
        for p in &file.car_poses {
            let tyres = TyreContacts {
                front_left: to_ecef(&p.tyres.fl)?,
                front_right: to_ecef(&p.tyres.fr)?,
                rear_left: to_ecef(&p.tyres.rl)?,
                rear_right: to_ecef(&p.tyres.rr)?,
            };
            poses.push(CarPose {
                id: p.id,
                transform: car_pose_transform(&tyres)?,
            });
        }
        if file.rois.is_empty() {
            return Err(SynthError::InvalidScenario("no ROIs".into()));
        }
        let mut rois = Vec::new();
        for r in &file.rois {
            if r.vertices.len() != 8 {
                return Err(SynthError::InvalidScenario(format!(
                    "ROI {} has {} vertices, expected 8",
                    r.id,
                    r.vertices.len()
                )));
            }
            let mut vertices = [EcefPoint { x: 0.0, y: 0.0, z: 0.0 }; 8];
            for (i, v) in r.vertices.iter().enumerate() {
                vertices[i] = to_ecef(v)?;
            }
            rois.push(Roi { id: r.id, vertices });
        }
        let mut pois = Vec::new();
        for p in &file.pois {
            if !rois.iter().any(|r| r.id == p.roi_id) {
                return Err(SynthError::InvalidScenario(format!(
                    "POI references unknown ROI {}",
                    p.roi_id
                )));
            }
            pois.push(ScenarioPoi {
                roi_id: p.roi_id,
                ecef: to_ecef(&p.point)?,
            });
        }
        let scenario = Self {
            ellipsoid: ell,
            poses,
            rois,
            pois,
            comment: file.comment.clone(),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|e| SynthError::io(path, e))?;
        let file: ScenarioFile =
            serde_json::from_str(&text).map_err(|e| SynthError::format(path, e.to_string()))?;
        Self::from_file_model(&file)
    }

    fn validate(&self) -> Result<(), SynthError> {
        for poi in &self.pois {
            let roi = self.roi(poi.roi_id).expect("checked above");
            if !poi_on_surface(&poi.ecef, roi, 0.01) {
                return Err(SynthError::InvalidScenario(format!(
                    "POI on ROI {} is not on the box surface",
                    poi.roi_id
                )));
            }
        }
        Ok(())
    }

    pub fn pose(&self, id: u32) -> Result<&CarPose, SynthError> {
        self.poses
            .iter()
            .find(|p| p.id == id)
            .ok_or(SynthError::UnknownPose(id))
    }

    pub fn roi(&self, id: u32) -> Option<&Roi> {
        self.rois.iter().find(|r| r.id == id)
    }

    pub fn roi_map(&self) -> RoiMap {
        RoiMap {
            rois: self.rois.clone(),
        }
    }

    /// ROI centre (vertex mean) in the car frame of a pose.
    pub fn roi_center_car(&self, pose_id: u32, roi_id: u32) -> Result<Vector3<f64>, SynthError> {
        let pose = self.pose(pose_id)?;
        let roi = self
            .roi(roi_id)
            .ok_or_else(|| SynthError::UnknownTarget(format!("ROI {roi_id}")))?;
        let sum: Vector3<f64> = roi
            .vertices
            .iter()
            .map(|v| pose.transform.apply(v.as_vector()))
            .sum();
        Ok(sum / 8.0)
    }

    /// Distance from the car origin to a ROI centre.
    pub fn roi_distance(&self, pose_id: u32, roi_id: u32) -> Result<f64, SynthError> {
        Ok(self.roi_center_car(pose_id, roi_id)?.norm())
    }

    /// Side/angle category of a ROI for a pose: left is positive y
    /// (ISO 8855), far is more than 45 degrees off the forward axis.
    pub fn categorize(&self, pose_id: u32, roi_id: u32) -> Result<PoseCategory, SynthError> {
        let c = self.roi_center_car(pose_id, roi_id)?;
        let bearing = c.y.atan2(c.x);
        let far = bearing.abs() > std::f64::consts::FRAC_PI_4;
        Ok(match (bearing > 0.0, far) {
            (true, true) => PoseCategory::FarLeft,
            (true, false) => PoseCategory::NearLeft,
            (false, false) => PoseCategory::NearRight,
            (false, true) => PoseCategory::FarRight,
        })
    }

    /// Ground-truth unit direction for a target from a pose.
    pub fn ground_truth(
        &self,
        pose_id: u32,
        roi_id: u32,
        poi_index: Option<usize>,
        ref_type: ReferenceType,
    ) -> Result<CarVector, SynthError> {
        let pose = self.pose(pose_id)?;
        match ref_type {
            ReferenceType::Volume => {
                let roi = self
                    .roi(roi_id)
                    .ok_or_else(|| SynthError::UnknownTarget(format!("ROI {roi_id}")))?;
                Ok(ground_truth_vector(
                    &roi.vertices,
                    &pose.transform,
                    ReferenceType::Volume,
                )?)
            }
            ReferenceType::Point => {
                let idx = poi_index
                    .ok_or_else(|| SynthError::UnknownTarget("point event without POI".into()))?;
                let poi = self
                    .pois
                    .get(idx)
                    .ok_or_else(|| SynthError::UnknownTarget(format!("POI index {idx}")))?;
                Ok(ground_truth_vector(
                    &[poi.ecef],
                    &pose.transform,
                    ReferenceType::Point,
                )?)
            }
        }
    }
}

/// Checks that a point lies on the surface of an 8-vertex box (vertex
/// order: the three axis loops of the builder, x outermost).
fn poi_on_surface(p: &EcefPoint, roi: &Roi, tol: f64) -> bool {
    let v0 = roi.vertices[0].as_vector();
    let ex = roi.vertices[4].as_vector() - v0;
    let ey = roi.vertices[2].as_vector() - v0;
    let ez = roi.vertices[1].as_vector() - v0;
    let rel = p.as_vector() - v0;
    let coords = [
        rel.dot(&ex) / ex.norm_squared(),
        rel.dot(&ey) / ey.norm_squared(),
        rel.dot(&ez) / ez.norm_squared(),
    ];
    let lens = [ex.norm(), ey.norm(), ez.norm()];
    // Inside (with tolerance) in every axis, and on a face in at least one.
    let mut inside = true;
    let mut on_face = false;
    for k in 0..3 {
        let m = coords[k] * lens[k];
        if m < -tol || m > lens[k] + tol {
            inside = false;
        }
        if m.abs() <= tol || (m - lens[k]).abs() <= tol {
            on_face = true;
        }
    }
    inside && on_face
}

// ---------------------------------------------------------------------------
// Default scenario construction
// ---------------------------------------------------------------------------

/// Geodetic anchor of the default scenario.
const BASE_LAT_DEG: f64 = 48.220418;
const BASE_LON_DEG: f64 = 11.724965;
const BASE_ALT_M: f64 = 560.0;

/// Offsets a geodetic base point by local east/north/up meters using
/// the ellipsoidal radii of curvature at the base latitude.
fn offset_geodetic(
    base: &GeodeticPoint,
    ell: &Ellipsoid,
    east: f64,
    north: f64,
    up: f64,
) -> [f64; 3] {
    let n = prime_vertical_radius(base.lat, ell);
    let s = base.lat.sin();
    let m = ell.semi_major * (1.0 - ell.ecc_sq) / (1.0 - ell.ecc_sq * s * s).powf(1.5);
    let lat = base.lat + north / (m + base.alt);
    let lon = base.lon + east / ((n + base.alt) * base.lat.cos());
    [lat.to_degrees(), lon.to_degrees(), base.alt + up]
}

struct RoiLayout {
    id: u32,
    east: f64,
    north: f64,
    half_e: f64,
    half_n: f64,
}

struct PoseLayout {
    id: u32,
    east: f64,
    north: f64,
    /// Heading of the car x-axis, radians CCW from east.
    heading: f64,
}

/// Builds the default 4-pose, 5-ROI scenario.
///
/// Poses 1-3 see the ROI cluster from 10-30 m, pose 4 from beyond
/// 100 m. Pose 1 has near ROIs on both sides, pose 2 puts everything on
/// the right (with far-right present), pose 3 everything on the left
/// (with far-left present), pose 4 is the distant case.
pub fn build_default_scenario() -> ScenarioFile {
    let ell = Ellipsoid::wgs84();
    let base = GeodeticPoint::from_degrees(BASE_LAT_DEG, BASE_LON_DEG, BASE_ALT_M)
        .expect("base coordinates valid");
    let at = |e: f64, n: f64, u: f64| offset_geodetic(&base, &ell, e, n, u);

    let rois = [
        RoiLayout { id: 0, east: -8.0, north: 18.0, half_e: 1.5, half_n: 1.5 },
        RoiLayout { id: 1, east: -2.0, north: 22.0, half_e: 2.0, half_n: 1.6 },
        RoiLayout { id: 2, east: 4.0, north: 22.0, half_e: 1.8, half_n: 1.8 },
        RoiLayout { id: 3, east: 10.0, north: 16.0, half_e: 1.6, half_n: 1.4 },
        RoiLayout { id: 4, east: -2.0, north: 12.0, half_e: 1.4, half_n: 1.2 },
    ];
    // Boxes span 0.5..4.5 m above ground.
    let z_lo = 0.5;
    let z_hi = 4.5;

    let poses = [
        PoseLayout { id: 1, east: 0.0, north: 0.0, heading: 90f64.to_radians() },
        PoseLayout { id: 2, east: -18.0, north: 26.0, heading: 20f64.to_radians() },
        PoseLayout { id: 3, east: 20.0, north: 24.0, heading: 160f64.to_radians() },
        PoseLayout { id: 4, east: 0.0, north: -150.0, heading: 90f64.to_radians() },
    ];

    let mut roi_specs = Vec::new();
    let mut poi_specs = Vec::new();
    for r in &rois {
        let mut vertices = Vec::with_capacity(8);
        for de in [-r.half_e, r.half_e] {
            for dn in [-r.half_n, r.half_n] {
                for z in [z_lo, z_hi] {
                    vertices.push(at(r.east + de, r.north + dn, z));
                }
            }
        }
        roi_specs.push(RoiSpec { id: r.id, vertices });
        let z_mid = 0.5 * (z_lo + z_hi);
        // Two POIs per ROI, on the south face centre and east face centre.
        poi_specs.push(PoiSpec {
            roi_id: r.id,
            point: at(r.east, r.north - r.half_n, z_mid),
        });
        poi_specs.push(PoiSpec {
            roi_id: r.id,
            point: at(r.east + r.half_e, r.north, z_mid),
        });
    }

    let half_track = 0.8;
    let wheelbase = 2.9;
    let car_poses = poses
        .iter()
        .map(|p| {
            let (sh, ch) = p.heading.sin_cos();
            // forward = (ch, sh), left = (-sh, ch) in east/north.
            let wheel = |dx: f64, dy: f64| {
                at(
                    p.east + dx * ch - dy * sh,
                    p.north + dx * sh + dy * ch,
                    0.0,
                )
            };
            CarPoseSpec {
                id: p.id,
                tyres: TyreSpec {
                    fl: wheel(0.0, half_track),
                    fr: wheel(0.0, -half_track),
                    rl: wheel(-wheelbase, half_track),
                    rr: wheel(-wheelbase, -half_track),
                },
            }
        })
        .collect();

    ScenarioFile {
        comment: "Default synthetic scenario. Side assignments: pose 2 has all targets on \
                  the right, pose 3 on the left, under the ISO 8855 sign convention used \
                  here (positive yaw = left)."
            .to_string(),
        ellipsoid: EllipsoidSpec {
            semi_major: ell.semi_major,
            semi_minor: ell.semi_minor,
        },
        car_poses,
        rois: roi_specs,
        pois: poi_specs,
    }
}
