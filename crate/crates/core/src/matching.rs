//! Maps a fused direction vector to the referenced region of interest.
//!
//! Each ROI is an 8-vertex box. Its vertices are brought into the car
//! frame and normalized row-wise; the per-axis clamp distance of the
//! normalized fused vector to the axis-aligned bounds of those vertex
//! directions decides the match. When more than one ROI reaches
//! distance zero, the one whose vertex-mean direction is angularly
//! closest to the fused vector wins. Exact ties fall back to the lowest
//! ROI id so results are deterministic.

use crate::geo::{EcefPoint, RigidTransform};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("fused vector has zero norm")]
    ZeroVector,
    #[error("ROI map is empty")]
    EmptyMap,
}

/// One region of interest: id plus its 8 box vertices in ECEF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub id: u32,
    pub vertices: [EcefPoint; 8],
}

/// The full landmark map handed to the matcher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiMap {
    pub rois: Vec<Roi>,
}

/// Per-ROI evaluation detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiScore {
    pub roi_id: u32,
    /// Clamp distance of the fused direction to the normalized-vertex box.
    pub distance: f64,
    /// Angle in radians between the fused vector and the vertex mean.
    pub centroid_angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub chosen: u32,
    /// All ROIs sorted best-first.
    pub ranking: Vec<RoiScore>,
}

fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let c = (a.dot(b) / (a.norm() * b.norm())).clamp(-1.0, 1.0);
    c.acos()
}

fn score_roi(fused_unit: &Vector3<f64>, roi: &Roi, pose: &RigidTransform) -> RoiScore {
    let car: Vec<Vector3<f64>> = roi
        .vertices
        .iter()
        .map(|v| pose.apply(v.as_vector()))
        .collect();
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in &car {
        let u = p / p.norm();
        for k in 0..3 {
            lo[k] = lo[k].min(u[k]);
            hi[k] = hi[k].max(u[k]);
        }
    }
    let mut d_sq = 0.0;
    for k in 0..3 {
        let d = (lo[k] - fused_unit[k]).max(0.0).max(fused_unit[k] - hi[k]);
        d_sq += d * d;
    }
    let mean: Vector3<f64> = car.iter().sum::<Vector3<f64>>() / car.len() as f64;
    RoiScore {
        roi_id: roi.id,
        distance: d_sq.sqrt(),
        centroid_angle: angle_between(fused_unit, &mean),
    }
}

/// Full ranking of all ROIs, best first: ascending clamp distance, then
/// centroid angle, then id.
pub fn rank_rois(
    fused: &Vector3<f64>,
    rois: &RoiMap,
    pose: &RigidTransform,
) -> Result<Vec<RoiScore>, MatchError> {
    let n = fused.norm();
    if n <= 1e-12 {
        return Err(MatchError::ZeroVector);
    }
    if rois.rois.is_empty() {
        return Err(MatchError::EmptyMap);
    }
    let unit = fused / n;
    let mut scores: Vec<RoiScore> = rois.rois.iter().map(|r| score_roi(&unit, r, pose)).collect();
    scores.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.centroid_angle.total_cmp(&b.centroid_angle))
            .then(a.roi_id.cmp(&b.roi_id))
    });
    Ok(scores)
}

/// Picks the referenced ROI for a fused direction vector.
pub fn match_roi(
    fused: &Vector3<f64>,
    rois: &RoiMap,
    pose: &RigidTransform,
) -> Result<MatchResult, MatchError> {
    let ranking = rank_rois(fused, rois, pose)?;
    Ok(MatchResult {
        chosen: ranking[0].roi_id,
        ranking,
    })
}

/// Alternative matcher doing a true ray vs axis-aligned box test on the
/// unnormalized car-frame vertices. Comparison experiments only; the
/// production path is [`match_roi`].
pub fn match_roi_raycast(
    fused: &Vector3<f64>,
    rois: &RoiMap,
    pose: &RigidTransform,
) -> Result<MatchResult, MatchError> {
    let n = fused.norm();
    if n <= 1e-12 {
        return Err(MatchError::ZeroVector);
    }
    if rois.rois.is_empty() {
        return Err(MatchError::EmptyMap);
    }
    let dir = fused / n;
    let mut scores: Vec<RoiScore> = rois
        .rois
        .iter()
        .map(|roi| {
            let car: Vec<Vector3<f64>> = roi
                .vertices
                .iter()
                .map(|v| pose.apply(v.as_vector()))
                .collect();
            let mut lo = Vector3::repeat(f64::INFINITY);
            let mut hi = Vector3::repeat(f64::NEG_INFINITY);
            for p in &car {
                for k in 0..3 {
                    lo[k] = lo[k].min(p[k]);
                    hi[k] = hi[k].max(p[k]);
                }
            }
            // Slab test for the ray origin..infinity against [lo, hi].
            let mut t_near = 0.0f64;
            let mut t_far = f64::INFINITY;
            let mut hit = true;
            for k in 0..3 {
                if dir[k].abs() < 1e-15 {
                    if lo[k] > 0.0 || hi[k] < 0.0 {
                        hit = false;
                        break;
                    }
                } else {
                    let t0 = lo[k] / dir[k];
                    let t1 = hi[k] / dir[k];
                    t_near = t_near.max(t0.min(t1));
                    t_far = t_far.min(t0.max(t1));
                }
            }
            let mean: Vector3<f64> = car.iter().sum::<Vector3<f64>>() / car.len() as f64;
            let angle = angle_between(&dir, &mean);
            let distance = if hit && t_near <= t_far { 0.0 } else { angle };
            RoiScore {
                roi_id: roi.id,
                distance,
                centroid_angle: angle,
            }
        })
        .collect();
    scores.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.centroid_angle.total_cmp(&b.centroid_angle))
            .then(a.roi_id.cmp(&b.roi_id))
    });
    Ok(MatchResult {
        chosen: scores[0].roi_id,
        ranking: scores,
    })
}
