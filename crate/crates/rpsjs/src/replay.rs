//! Position estimation from recorded sweep and inertial logs.

use std::collections::BTreeMap;

use nalgebra::Vector2;
use rpsjs_core::controller::RadioMode;
use rpsjs_core::positioning::{ekf_predict, estimate_position, NavState, PositioningContext};
use rpsjs_core::sweep::{extract_moments, frames_from_rows, select_transmitters};
use rpsjs_core::vision::{depth_distance, horizontal_distance, smoothed_distance, BoxObservation, CameraCalibration};
use rpsjs_core::{BandId, Error, ScenarioConfig, Transmitter};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::files::{DetectionRow, ImuRow, SweepRow, TrajectoryRow};

/// Runs the filter over logged sweeps and inertial velocities.
///
/// `params` supplies the noise model and selection settings; its
/// transmitters are replaced by `transmitters`. Steps with a sweep are
/// positioning steps, steps with only an inertial sample are dead-reckoned.
/// Steps before the first sweep produce no estimate.
pub fn replay(
    sweeps: &[SweepRow],
    imu: &[ImuRow],
    transmitters: Vec<Transmitter>,
    params: &ScenarioConfig,
) -> Result<Vec<TrajectoryRow>> {
    let mut cfg = params.clone();
    cfg.transmitters = transmitters;
    if cfg.transmitters.len() < 4 {
        return Err(Error::Validation(format!(
            "at least 4 transmitters required, got {}",
            cfg.transmitters.len()
        ))
        .into());
    }
    let frames = frames_from_rows(sweeps.iter().map(|r| (r.step, BandId(r.band), r.rss_dbm)));
    let moments: Vec<_> = frames.iter().map(extract_moments).collect();
    let calibration = &moments[..cfg.calibration_sweeps.min(moments.len())];
    let selected = select_transmitters(calibration, &cfg.controller)?;
    let ctx = PositioningContext::new(&cfg, selected);

    let by_step: BTreeMap<usize, usize> = moments.iter().enumerate().map(|(i, m)| (m.step, i)).collect();
    let inertial: BTreeMap<usize, &ImuRow> = imu.iter().map(|r| (r.step, r)).collect();
    let mut steps: Vec<usize> = by_step.keys().chain(inertial.keys()).copied().collect();
    steps.sort_unstable();
    steps.dedup();

    let mut nav: Option<NavState> = None;
    let mut rows = Vec::with_capacity(steps.len());
    for step in steps {
        let (u, dt) = inertial
            .get(&step)
            .map_or((Vector2::zeros(), cfg.dt_s), |r| (Vector2::new(r.vx_mps, r.vy_mps), r.dt_s));
        let (next, mode) = match by_step.get(&step) {
            Some(&i) => {
                let fix = estimate_position(&moments[i], nav.as_ref(), u, dt, &ctx).map_err(|e| at_step(e, step))?;
                (fix.nav, RadioMode::RpsActive)
            }
            None => match &nav {
                Some(n) => (ekf_predict(n, u, dt, &ctx.ekf), RadioMode::Jamming),
                None => continue,
            },
        };
        let p = next.covariance;
        rows.push(TrajectoryRow {
            step,
            x_m: next.estimate.x,
            y_m: next.estimate.y,
            p11: Some(p[(0, 0)]),
            p12: Some(p[(0, 1)]),
            p22: Some(p[(1, 1)]),
            mode: Some(mode.as_str().to_string()),
        });
        nav = Some(next);
    }
    Ok(rows)
}

fn at_step(e: Error, step: usize) -> Error {
    Error::AtStep {
        step,
        source: Box::new(e),
    }
}

/// Vision ranges from a detection log: `step,d_c_m,lateral_m,d_c_smoothed_m,lateral_smoothed_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisionRow {
    pub step: usize,
    pub d_c_m: f64,
    pub lateral_m: f64,
    pub d_c_smoothed_m: f64,
    pub lateral_smoothed_m: f64,
}

pub fn vision_ranges(detections: &[DetectionRow], cfg: &ScenarioConfig) -> Result<Vec<VisionRow>> {
    let cal = CameraCalibration::from_params(&cfg.camera)?;
    let mut history = Vec::with_capacity(detections.len());
    let mut out = Vec::with_capacity(detections.len());
    for d in detections {
        if d.w_rp_px.is_nan() || d.w_rp_px <= 0.0 {
            return Err(Error::Validation(format!("step {}: w_rp_px must be > 0", d.step)).into());
        }
        let obs = BoxObservation {
            step: d.step,
            width_px: d.w_rp_px,
            center_offset_px: d.center_offset_px,
            target_width_m: cfg.camera.target_width_m,
        };
        let depth = depth_distance(&obs, &cal);
        let lateral = horizontal_distance(&obs, depth, &cal);
        history.push((depth, lateral));
        let (ds, ls) = smoothed_distance(&history, cfg.camera.smoothing_window).expect("nonempty history");
        out.push(VisionRow {
            step: d.step,
            d_c_m: depth,
            lateral_m: lateral,
            d_c_smoothed_m: ds,
            lateral_smoothed_m: ls,
        });
    }
    Ok(out)
}
