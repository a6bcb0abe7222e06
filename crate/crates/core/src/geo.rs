//! Geodetic to vehicle-frame coordinate machinery and ground-truth
//! direction construction.
//!
//! Positions move through three frames: WGS84 geodetic (latitude,
//! longitude, altitude), Earth-Centered Earth-Fixed Cartesian, and the
//! ISO 8855 car frame (x forward, y left, z up, origin at the centre of
//! the front axle). All angles are radians internally; degrees appear
//! only in files.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// WGS84 defining semi-major axis in meters.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS84 semi-minor axis in meters.
pub const WGS84_B: f64 = 6_356_752.3142;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("tyre footprint is degenerate (collinear or overlapping points)")]
    DegenerateFootprint,
    #[error("target lies at the frame origin (distance {0} m < 1 mm)")]
    OriginTarget(f64),
    #[error("latitude {0} rad outside [-pi/2, pi/2]")]
    LatitudeOutOfRange(f64),
    #[error("ellipsoid axes invalid: a={a} b={b}")]
    BadEllipsoid { a: f64, b: f64 },
}

/// Geodetic position: latitude and longitude in radians, altitude in
/// meters above the ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodeticPoint {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

impl GeodeticPoint {
    pub fn new(lat: f64, lon: f64, alt: f64) -> Result<Self, GeoError> {
        if lat.abs() > std::f64::consts::FRAC_PI_2 {
            return Err(GeoError::LatitudeOutOfRange(lat));
        }
        Ok(Self { lat, lon, alt })
    }

    /// Builds from decimal degrees, the convention used in scenario files.
    pub fn from_degrees(lat_deg: f64, lon_deg: f64, alt: f64) -> Result<Self, GeoError> {
        Self::new(lat_deg.to_radians(), lon_deg.to_radians(), alt)
    }
}

/// Reference ellipsoid. The eccentricity is always recomputed from the
/// axes so the three fields cannot drift apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub semi_major: f64,
    pub semi_minor: f64,
    pub ecc_sq: f64,
}

impl Ellipsoid {
    pub fn new(semi_major: f64, semi_minor: f64) -> Result<Self, GeoError> {
        if !(semi_minor > 0.0 && semi_minor <= semi_major) {
            return Err(GeoError::BadEllipsoid {
                a: semi_major,
                b: semi_minor,
            });
        }
        Ok(Self {
            semi_major,
            semi_minor,
            ecc_sq: 1.0 - (semi_minor * semi_minor) / (semi_major * semi_major),
        })
    }

    pub fn wgs84() -> Self {
        Self::new(WGS84_A, WGS84_B).expect("WGS84 constants are valid")
    }
}

impl Default for Ellipsoid {
    fn default() -> Self {
        Self::wgs84()
    }
}

/// ECEF Cartesian position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcefPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl EcefPoint {
    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self {
            x: v.x,
            y: v.y,
            z: v.z,
        }
    }
}

/// Position or direction in the ISO 8855 car frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// True when this value is a unit direction rather than a position.
    pub normalized: bool,
}

impl CarVector {
    pub fn position(x: f64, y: f64, z: f64) -> Self {
        Self {
            x,
            y,
            z,
            normalized: false,
        }
    }

    pub fn direction(v: Vector3<f64>) -> Self {
        let u = v.normalize();
        Self {
            x: u.x,
            y: u.y,
            z: u.z,
            normalized: true,
        }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn norm(&self) -> f64 {
        self.as_vector().norm()
    }
}

/// Rigid transform `p_car = rotation * p_ecef + translation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    const ORTHO_TOL: f64 = 1e-9;

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeoError> {
        let t = Self {
            rotation,
            translation,
        };
        if !t.is_valid() {
            return Err(GeoError::DegenerateFootprint);
        }
        Ok(t)
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn is_valid(&self) -> bool {
        let rtr = self.rotation.transpose() * self.rotation;
        let ortho_err = (rtr - Matrix3::identity()).abs().max();
        let det_err = (self.rotation.determinant() - 1.0).abs();
        ortho_err <= Self::ORTHO_TOL && det_err <= Self::ORTHO_TOL
    }

    pub fn apply(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotates a direction without translating it.
    pub fn rotate(&self, d: Vector3<f64>) -> Vector3<f64> {
        self.rotation * d
    }

    pub fn inverse(&self) -> Self {
        let rot_inv = self.rotation.transpose();
        Self {
            rotation: rot_inv,
            translation: -(rot_inv * self.translation),
        }
    }

    /// Composes `self` after `other`: (self ∘ other)(p) = self(other(p)).
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

/// Prime vertical radius of curvature N(φ) = a / sqrt(1 - e² sin²φ).
pub fn prime_vertical_radius(lat: f64, ell: &Ellipsoid) -> f64 {
    let s = lat.sin();
    ell.semi_major / (1.0 - ell.ecc_sq * s * s).sqrt()
}

/// Geodetic to ECEF conversion.
pub fn wgs84_to_ecef(p: &GeodeticPoint, ell: &Ellipsoid) -> EcefPoint {
    let n = prime_vertical_radius(p.lat, ell);
    let (sin_lat, cos_lat) = p.lat.sin_cos();
    let (sin_lon, cos_lon) = p.lon.sin_cos();
    EcefPoint {
        x: (n + p.alt) * cos_lat * cos_lon,
        y: (n + p.alt) * cos_lat * sin_lon,
        z: (1.0 - ell.ecc_sq) * (n + p.alt) * sin_lat,
    }
}

/// The four tyre ground-contact points of a parked car, labeled
/// explicitly since the frame construction needs to know which axle is
/// the front one.
#[derive(Debug, Clone, Copy)]
pub struct TyreContacts {
    pub front_left: EcefPoint,
    pub front_right: EcefPoint,
    pub rear_left: EcefPoint,
    pub rear_right: EcefPoint,
}

/// Fits the ECEF→car transform from the tyre contact points.
///
/// Car frame per ISO 8855: origin at the front-axle centre (midpoint of
/// the front tyres), x along the rear-to-front centreline, z along the
/// footprint plane normal, y completing the right-handed frame (left).
pub fn car_pose_transform(tyres: &TyreContacts) -> Result<RigidTransform, GeoError> {
    let fl = tyres.front_left.as_vector();
    let fr = tyres.front_right.as_vector();
    let rl = tyres.rear_left.as_vector();
    let rr = tyres.rear_right.as_vector();

    let pts = [fl, fr, rl, rr];
    for i in 0..4 {
        for j in (i + 1)..4 {
            if (pts[i] - pts[j]).norm() <= 0.5 {
                return Err(GeoError::DegenerateFootprint);
            }
        }
    }

    let front_mid = (fl + fr) * 0.5;
    let rear_mid = (rl + rr) * 0.5;
    let forward = front_mid - rear_mid;
    let leftward = fl - fr;
    let up = forward.cross(&leftward);
    if up.norm() < 1e-6 * forward.norm() * leftward.norm() {
        return Err(GeoError::DegenerateFootprint);
    }

    let x_axis = forward.normalize();
    let z_axis = up.normalize();
    let y_axis = z_axis.cross(&x_axis);

    // Rows of the rotation are the car axes expressed in ECEF, so the
    // matrix maps ECEF vectors into car coordinates.
    let rotation = Matrix3::from_rows(&[
        x_axis.transpose(),
        y_axis.transpose(),
        z_axis.transpose(),
    ]);
    let translation = -(rotation * front_mid);
    RigidTransform::new(rotation, translation)
}

/// Applies the ECEF→car transform to a position.
pub fn ecef_to_car(p: &EcefPoint, t: &RigidTransform) -> CarVector {
    let v = t.apply(p.as_vector());
    CarVector::position(v.x, v.y, v.z)
}

/// Referencing target: a full landmark volume or a designated point on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceType {
    Volume,
    Point,
}

/// Ground-truth unit vector from the car origin towards the target.
///
/// Volume targets aim at the arithmetic mean of the vertices; point
/// targets aim at the POI itself. `vertices` are ECEF.
pub fn ground_truth_vector(
    vertices: &[EcefPoint],
    t: &RigidTransform,
    ref_type: ReferenceType,
) -> Result<CarVector, GeoError> {
    let target = match ref_type {
        ReferenceType::Point => {
            assert!(!vertices.is_empty(), "point target needs one point");
            t.apply(vertices[0].as_vector())
        }
        ReferenceType::Volume => {
            assert!(vertices.len() >= 3, "volume target needs >= 3 vertices");
            let sum: Vector3<f64> = vertices.iter().map(|v| t.apply(v.as_vector())).sum();
            sum / vertices.len() as f64
        }
    };
    let dist = target.norm();
    if dist < 1e-3 {
        return Err(GeoError::OriginTarget(dist));
    }
    Ok(CarVector::direction(target))
}
