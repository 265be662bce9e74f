//! Visual and spatial similarity scores used by re-identification and retrieval.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::Box3D;
use crate::math;

/// Weight of the first (text-aligned) appearance channel in [`visual_similarity`].
pub const CLIP_WEIGHT: f64 = 0.15;
/// Weight of the second (self-supervised) appearance channel.
pub const DINO_WEIGHT: f64 = 0.85;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("embedding dimension mismatch: {left} vs {right}")]
pub struct SimilarityError {
    pub left: usize,
    pub right: usize,
}

/// Two appearance embeddings of the same crop. The channel names follow the
/// models usually plugged in; the engine treats them as opaque unit vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePair {
    pub clip: Vec<f64>,
    pub dino: Vec<f64>,
}

impl FeaturePair {
    pub fn new(clip: Vec<f64>, dino: Vec<f64>) -> Self {
        FeaturePair { clip, dino }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.clip.len(), self.dino.len())
    }

    pub fn normalize(&mut self) {
        math::normalize_in_place(&mut self.clip);
        math::normalize_in_place(&mut self.dino);
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        is_unit(&self.clip, tol) && is_unit(&self.dino, tol)
    }
}

pub fn is_unit(v: &[f64], tol: f64) -> bool {
    (math::norm(v) - 1.0).abs() <= tol
}

/// Cosine similarity; errors when lengths differ.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, SimilarityError> {
    if a.len() != b.len() {
        return Err(SimilarityError { left: a.len(), right: b.len() });
    }
    Ok(math::cosine(a, b))
}

/// `0.15·cos(clip) + 0.85·cos(dino)`.
pub fn visual_similarity(a: &FeaturePair, b: &FeaturePair) -> Result<f64, SimilarityError> {
    Ok(CLIP_WEIGHT * cosine(&a.clip, &b.clip)? + DINO_WEIGHT * cosine(&a.dino, &b.dino)?)
}

/// Intersection over union; 0 when the union is empty.
pub fn spatial_iou(a: &Box3D, b: &Box3D) -> f64 {
    let inter = a.intersection_volume(b);
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Largest ratio of the intersection to either box's volume.
///
/// A zero-volume box contributes 1 when it lies inside the other box and 0
/// otherwise, so a flat lifted box still matches the solid it sits in.
pub fn spatial_maxios(a: &Box3D, b: &Box3D) -> f64 {
    let inter = a.intersection_volume(b);
    let ratio = |own: &Box3D, other: &Box3D| {
        let v = own.volume();
        if v > 0.0 {
            (inter / v).clamp(0.0, 1.0)
        } else if other.contains_box(own) {
            1.0
        } else {
            0.0
        }
    };
    ratio(a, b).max(ratio(b, a))
}

/// `min(V_a, V_b) / max(V_a, V_b)`; 1 when both are empty, 0 when only one is.
pub fn spatial_vol_sim(a: &Box3D, b: &Box3D) -> f64 {
    let (va, vb) = (a.volume(), b.volume());
    match (va > 0.0, vb > 0.0) {
        (false, false) => 1.0,
        (true, true) => va.min(vb) / va.max(vb),
        _ => 0.0,
    }
}
