//! Pinhole-camera ranging of the rogue drone from bounding-box widths.
//!
//! Detection itself is replaced by [`synthesize_box`], which projects the
//! true relative position into a noisy box.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scenario::CameraParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraCalibration {
    pub focal_px: f64,
    pub ref_width_m: f64,
    pub ref_width_px: f64,
    pub ref_distance_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxObservation {
    pub step: usize,
    pub width_px: f64,
    /// Horizontal offset of the box centre from the image centre; positive
    /// to the left of the boresight.
    pub center_offset_px: f64,
    pub target_width_m: f64,
}

/// f = w_ref_px * d_ref / w_ref_m.
pub fn calibrate_focal(ref_width_px: f64, ref_distance_m: f64, ref_width_m: f64) -> Result<CameraCalibration> {
    for (name, v) in [
        ("ref_width_px", ref_width_px),
        ("ref_distance_m", ref_distance_m),
        ("ref_width_m", ref_width_m),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Validation(alloc::format!("{name} must be > 0")));
        }
    }
    Ok(CameraCalibration {
        focal_px: ref_width_px * ref_distance_m / ref_width_m,
        ref_width_m,
        ref_width_px,
        ref_distance_m,
    })
}

impl CameraCalibration {
    pub fn from_params(params: &CameraParams) -> Result<Self> {
        calibrate_focal(params.ref_width_px, params.ref_distance_m, params.ref_width_m)
    }
}

/// d_c = w_target_m * f / w_box_px.
pub fn depth_distance(obs: &BoxObservation, cal: &CameraCalibration) -> f64 {
    obs.target_width_m * cal.focal_px / obs.width_px
}

/// Lateral offset by pinhole projection: d_c * offset_px / f.
pub fn horizontal_distance(obs: &BoxObservation, depth_m: f64, cal: &CameraCalibration) -> f64 {
    depth_m * obs.center_offset_px / cal.focal_px
}

/// Per-component mean of the last `min(window, len)` `(depth, lateral)`
/// pairs. `None` for an empty history.
pub fn smoothed_distance(history: &[(f64, f64)], window: usize) -> Option<(f64, f64)> {
    if history.is_empty() {
        return None;
    }
    let take = window.max(1).min(history.len());
    let tail = &history[history.len() - take..];
    let n = take as f64;
    let (sd, sl) = tail.iter().fold((0.0, 0.0), |(a, b), (d, l)| (a + d, b + l));
    Some((sd / n, sl / n))
}

/// Box the detector would report for a target `forward_m` ahead along the
/// boresight and `lateral_m` to its left. `None` when the target is behind
/// the camera.
pub fn synthesize_box<R: Rng + ?Sized>(
    step: usize,
    forward_m: f64,
    lateral_m: f64,
    cal: &CameraCalibration,
    params: &CameraParams,
    rng: &mut R,
) -> Option<BoxObservation> {
    if !(forward_m > 0.0) {
        return None;
    }
    let zw: f64 = rng.sample(StandardNormal);
    let zc: f64 = rng.sample(StandardNormal);
    let width = cal.focal_px * params.target_width_m / forward_m + params.pixel_noise_px * zw;
    let offset = cal.focal_px * lateral_m / forward_m + params.pixel_noise_px * zc;
    Some(BoxObservation {
        step,
        width_px: width.max(params.min_width_px),
        center_offset_px: offset,
        target_width_m: params.target_width_m,
    })
}
