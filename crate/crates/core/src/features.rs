//! Skeleton-normalized feature vectors.
//!
//! Each of the 25 keypoints contributes `[x_rel, y_rel, depth_rel, confidence]`.
//! Positions are taken relative to the neck (or the centroid of the visible
//! keypoints when the neck is missing) and divided by the torso length
//! (neck to mid-hip, falling back to the bounding-box diagonal). Depth is
//! relative to the median depth of the patient. Missing keypoints encode as
//! four zeros, so the confidence slot doubles as a validity mask.

use alloc::vec::Vec;
use core::ops::Deref;

use thiserror::Error;

use crate::data::{body25, Skeleton, NUM_KEYPOINTS};
use crate::tracking::{median, PatientFrame};

pub const VALUES_PER_KEYPOINT: usize = 4;
pub const FEATURE_DIM: usize = NUM_KEYPOINTS * VALUES_PER_KEYPOINT;

const MIN_SCALE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("skeleton has {0} visible keypoints, need at least 2")]
    NotEnoughKeypoints(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    /// Wraps raw values; `None` unless exactly [`FEATURE_DIM`] long.
    pub fn from_values(values: Vec<f64>) -> Option<Self> {
        (values.len() == FEATURE_DIM).then_some(FeatureVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn reference_and_scale(skeleton: &Skeleton) -> ((f64, f64), f64) {
    let neck = &skeleton.keypoints[body25::NECK];
    let hip = &skeleton.keypoints[body25::MID_HIP];

    let reference = if neck.is_missing() {
        let n = skeleton.visible_count() as f64;
        let (sx, sy) = skeleton.visible().fold((0.0, 0.0), |(sx, sy), (_, k)| (sx + k.x_px, sy + k.y_px));
        (sx / n, sy / n)
    } else {
        neck.position()
    };

    let torso = (!neck.is_missing() && !hip.is_missing())
        .then(|| libm::hypot(neck.x_px - hip.x_px, neck.y_px - hip.y_px))
        .filter(|&len| len > MIN_SCALE);
    let scale = torso.unwrap_or_else(|| {
        let diag = skeleton
            .bounding_box()
            .map(|(x0, y0, x1, y1)| libm::hypot(x1 - x0, y1 - y0))
            .unwrap_or(0.0);
        if diag > MIN_SCALE { diag } else { 1.0 }
    });
    (reference, scale)
}

pub fn extract_skeleton_features(skeleton: &Skeleton) -> Result<FeatureVector, FeatureError> {
    let visible = skeleton.visible_count();
    if visible < 2 {
        return Err(FeatureError::NotEnoughKeypoints(visible));
    }
    let ((rx, ry), scale) = reference_and_scale(skeleton);

    let mut depths: Vec<f64> = skeleton.visible().filter_map(|(_, k)| k.depth_m).collect();
    let median_depth = median(&mut depths);

    let mut values = Vec::with_capacity(FEATURE_DIM);
    for k in skeleton.keypoints.iter() {
        if k.is_missing() {
            values.extend_from_slice(&[0.0; VALUES_PER_KEYPOINT]);
            continue;
        }
        let depth_rel = match (k.depth_m, median_depth) {
            (Some(d), Some(m)) => d - m,
            _ => 0.0,
        };
        values.push((k.x_px - rx) / scale);
        values.push((k.y_px - ry) / scale);
        values.push(depth_rel);
        values.push(k.confidence);
    }
    Ok(FeatureVector(values))
}

pub fn extract_features(patient: &PatientFrame) -> Result<FeatureVector, FeatureError> {
    extract_skeleton_features(&patient.skeleton)
}
