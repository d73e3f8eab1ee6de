//! The single-radio mode switcher.
//!
//! While positioning, the radio sweeps the SOP bands and the filter is
//! updated. Once the vision range drops to `d_jam` the radio jams instead and
//! the filter dead-reckons; the drift proxy `e_m = sqrt(trace P)` grows until
//! it reaches the switching threshold `T_d`, at which point positioning
//! resumes for a tick.
//!
//! `T_d` is the mean plus the a-th percentile of recent innovation
//! magnitudes `|d_i - h_i(p)|`, collected only on positioning ticks that
//! follow another positioning tick, so the post-jam recovery tick does not
//! feed its own drift back into the threshold.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmath;
use crate::positioning::{ekf_predict, estimate_position, NavState, PositioningContext};
use crate::scenario::{ControllerParams, Position2D};
use crate::sweep::BandMoments;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RadioMode {
    #[serde(rename = "RPS_ACTIVE")]
    RpsActive,
    #[serde(rename = "JAMMING")]
    Jamming,
}

impl RadioMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RadioMode::RpsActive => "RPS_ACTIVE",
            RadioMode::Jamming => "JAMMING",
        }
    }
}

impl fmt::Display for RadioMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What the radio did during a tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadioAction {
    Sweep,
    Jam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransitionCause {
    /// `d_c <= d_jam`
    #[serde(rename = "target_in_range")]
    TargetInRange,
    /// `e_m >= T_d`
    #[serde(rename = "drift_exceeded")]
    DriftExceeded,
}

impl TransitionCause {
    pub fn as_str(&self) -> &'static str {
        match self {
            TransitionCause::TargetInRange => "target_in_range",
            TransitionCause::DriftExceeded => "drift_exceeded",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub step: usize,
    pub from: RadioMode,
    pub to: RadioMode,
    pub cause: TransitionCause,
    pub d_c_m: Option<f64>,
    pub e_m_m: f64,
    pub t_d_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingState {
    pub mode: RadioMode,
    /// `None` until the first residual window is available.
    pub t_d: Option<f64>,
    pub e_m: f64,
    /// Innovation magnitudes, one entry per calibration step.
    pub residual_window: VecDeque<Vec<f64>>,
    pub window_steps: usize,
    /// Mean range of the latest positioning step.
    pub mean_range_m: Option<f64>,
    pub switch_count: usize,
    pub events: Vec<Transition>,
    last_tick: Option<RadioMode>,
}

impl SwitchingState {
    pub fn new(params: &ControllerParams) -> Self {
        SwitchingState {
            mode: RadioMode::RpsActive,
            t_d: None,
            e_m: 0.0,
            residual_window: VecDeque::with_capacity(params.calib_window_steps),
            window_steps: params.calib_window_steps,
            mean_range_m: None,
            switch_count: 0,
            events: Vec::new(),
            last_tick: None,
        }
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.residual_window.iter().flatten().copied().collect()
    }

    fn push_residuals(&mut self, residuals: Vec<f64>) {
        if residuals.is_empty() {
            return;
        }
        while self.residual_window.len() >= self.window_steps.max(1) {
            self.residual_window.pop_front();
        }
        self.residual_window.push_back(residuals);
    }

    fn transition(&mut self, step: usize, to: RadioMode, cause: TransitionCause, d_c: Option<f64>) {
        self.events.push(Transition {
            step,
            from: self.mode,
            to,
            cause,
            d_c_m: d_c,
            e_m_m: self.e_m,
            t_d_m: self.t_d,
        });
        self.mode = to;
        self.switch_count += 1;
    }
}

/// Percentile by linear interpolation between order statistics (rank
/// `a/100 * (n-1)`).
pub fn percentile(values: &[f64], a_percentile: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (a_percentile / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = fmath::floor(rank) as usize;
    let hi = fmath::ceil(rank) as usize;
    let frac = rank - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// T_d = mean(residuals) + percentile_a(residuals).
pub fn compute_threshold(residuals: &[f64], a_percentile: f64) -> Result<f64> {
    let p = percentile(residuals, a_percentile).ok_or(Error::NoCalibrationResiduals)?;
    let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
    Ok(mean + p)
}

/// e_m = sqrt(trace P).
pub fn drift_error(nav: &NavState) -> f64 {
    fmath::sqrt(nav.trace().max(0.0))
}

pub fn update_drift_error(state: &mut SwitchingState, nav: &NavState) {
    state.e_m = drift_error(nav);
}

/// Applies the mode rules: enter jamming when `d_c <= d_jam` (and a
/// threshold exists), keep jamming while `e_m < T_d`.
pub fn step_mode(state: &mut SwitchingState, step: usize, d_c: Option<f64>, params: &ControllerParams) {
    match state.mode {
        RadioMode::RpsActive => {
            if state.t_d.is_none() {
                return;
            }
            if let Some(d) = d_c {
                if d <= params.d_jam_m {
                    state.transition(step, RadioMode::Jamming, TransitionCause::TargetInRange, d_c);
                }
            }
        }
        RadioMode::Jamming => {
            let t_d = state.t_d.expect("jamming entered without a threshold");
            if !(state.e_m < t_d) {
                state.transition(step, RadioMode::RpsActive, TransitionCause::DriftExceeded, d_c);
            }
        }
    }
}

/// Per-tick inputs.
#[derive(Debug, Clone, Copy)]
pub struct TickInputs<'a> {
    pub step: usize,
    /// Moments of this tick's sweep; must be present exactly when the radio
    /// is positioning.
    pub moments: Option<&'a BandMoments>,
    /// Smoothed vision range, when the target is detected.
    pub d_c: Option<f64>,
    /// Inertial velocity over the tick.
    pub u: Vector2<f64>,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutcome {
    pub nav: NavState,
    pub action: RadioAction,
    /// Mode the radio was in during this tick.
    pub mode: RadioMode,
    /// LSQ fix, on positioning ticks.
    pub lsq: Option<Position2D>,
}

/// Advances the controller by one tick and returns the new navigation state.
pub fn controller_tick(
    state: &mut SwitchingState,
    nav: Option<&NavState>,
    inputs: &TickInputs<'_>,
    ctx: &PositioningContext,
    params: &ControllerParams,
) -> Result<TickOutcome> {
    let mode = state.mode;
    let (new_nav, action, lsq) = match mode {
        RadioMode::RpsActive => {
            let moments = inputs
                .moments
                .ok_or(Error::RadioContract("positioning tick without a sweep"))?;
            let fix = estimate_position(moments, nav, inputs.u, inputs.dt, ctx)?;
            let n = fix.ranges.len().max(1) as f64;
            state.mean_range_m = Some(fix.ranges.iter().map(|r| r.distance_m).sum::<f64>() / n);
            // the first tick after a jam episode carries the accumulated drift
            if state.last_tick != Some(RadioMode::Jamming) {
                state.push_residuals(fix.innovations.iter().map(|(_, v)| v.abs()).collect());
            }
            let residuals = state.residuals();
            if !residuals.is_empty() {
                state.t_d = Some(compute_threshold(&residuals, params.a_percentile)?);
            }
            (fix.nav, RadioAction::Sweep, Some(fix.lsq))
        }
        RadioMode::Jamming => {
            if inputs.moments.is_some() {
                return Err(Error::RadioContract("sweep supplied while jamming"));
            }
            let nav = nav.ok_or(Error::RadioContract("jamming before any position fix"))?;
            (ekf_predict(nav, inputs.u, inputs.dt, &ctx.ekf), RadioAction::Jam, None)
        }
    };
    update_drift_error(state, &new_nav);
    state.last_tick = Some(mode);
    step_mode(state, inputs.step, inputs.d_c, params);
    Ok(TickOutcome {
        nav: new_nav,
        action,
        mode,
        lsq,
    })
}

/// Jam ticks needed for `sqrt(trace)` to climb from `sqrt(start_trace)` to
/// `t_d` when every tick adds `trace_q`.
pub fn predicted_episode_length(start_trace: f64, trace_q: f64, t_d: f64) -> usize {
    let need = t_d * t_d - start_trace;
    if need <= 0.0 {
        return 1;
    }
    (fmath::ceil(need / trace_q) as usize).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::positioning::{EkfConfig, RangeNoise};
    use nalgebra::Matrix2;

    fn params() -> ControllerParams {
        ControllerParams {
            t_i: 4,
            n_pl: 2.8,
            a_percentile: 50.0,
            d_jam_m: 10.0,
            calib_window_steps: 5,
        }
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(compute_threshold(&[1.0, 1.0, 1.0, 1.0], 50.0).unwrap(), 2.0);
        assert_eq!(compute_threshold(&[0.5, 1.0, 1.5, 2.0], 100.0).unwrap(), 3.25);
        assert_eq!(compute_threshold(&[], 50.0), Err(Error::NoCalibrationResiduals));
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0], 50.0), Some(2.5));
        assert_eq!(percentile(&[1.0, 2.0, 3.0], 0.0), Some(1.0));
        assert_eq!(percentile(&[7.0], 95.0), Some(7.0));
    }

    #[test]
    fn drift_error_examples() {
        let nav = NavState::new(Position2D::ORIGIN, Matrix2::identity(), 0);
        assert!((drift_error(&nav) - 2f64.sqrt()).abs() < 1e-15);
        let nav = NavState::new(Position2D::ORIGIN, Matrix2::zeros(), 0);
        assert_eq!(drift_error(&nav), 0.0);

        let cfg = EkfConfig {
            transition: Matrix2::identity(),
            process_noise: Matrix2::identity() * 0.01,
            range_noise: RangeNoise::Constant { variance_m2: 1.0 },
            initial_covariance: Matrix2::zeros(),
        };
        let mut nav = nav;
        for _ in 0..20 {
            nav = ekf_predict(&nav, Vector2::zeros(), 1.0, &cfg);
        }
        assert!((drift_error(&nav) - 0.4f64.sqrt()).abs() < 1e-12);
    }

    fn calibrated(mode: RadioMode, t_d: f64, e_m: f64) -> SwitchingState {
        let mut s = SwitchingState::new(&params());
        s.mode = mode;
        s.t_d = Some(t_d);
        s.e_m = e_m;
        s
    }

    #[test]
    fn entry_is_inclusive() {
        let mut s = calibrated(RadioMode::RpsActive, 1.3, 0.2);
        step_mode(&mut s, 4, Some(10.0), &params());
        assert_eq!(s.mode, RadioMode::Jamming);
        assert_eq!(s.switch_count, 1);
        assert_eq!(s.events[0].cause, TransitionCause::TargetInRange);
        assert_eq!(s.events[0].step, 4);
    }

    #[test]
    fn continue_is_strict() {
        let mut s = calibrated(RadioMode::Jamming, 1.3, 1.3 - 1e-9);
        step_mode(&mut s, 0, Some(5.0), &params());
        assert_eq!(s.mode, RadioMode::Jamming);
        s.e_m = 1.3;
        step_mode(&mut s, 1, Some(5.0), &params());
        assert_eq!(s.mode, RadioMode::RpsActive);
        assert_eq!(s.events.last().unwrap().cause, TransitionCause::DriftExceeded);
    }

    #[test]
    fn out_of_range_stays_put() {
        let mut s = calibrated(RadioMode::RpsActive, 1.3, 0.2);
        step_mode(&mut s, 0, Some(10.0 + 1e-9), &params());
        step_mode(&mut s, 1, None, &params());
        assert_eq!(s.mode, RadioMode::RpsActive);
        assert!(s.events.is_empty());
    }

    #[test]
    fn no_jamming_before_calibration() {
        let mut s = SwitchingState::new(&params());
        step_mode(&mut s, 0, Some(1.0), &params());
        assert_eq!(s.mode, RadioMode::RpsActive);
    }

    #[test]
    fn residual_window_slides() {
        let mut s = SwitchingState::new(&params());
        for i in 0..8 {
            s.push_residuals(alloc::vec![i as f64; 2]);
        }
        assert_eq!(s.residual_window.len(), 5);
        assert_eq!(s.residuals()[0], 3.0);
    }

    #[test]
    fn closed_form_episode_length() {
        assert_eq!(predicted_episode_length(0.0, 0.02, 0.4f64.sqrt()), 20);
        assert_eq!(predicted_episode_length(0.5, 0.1, 1.0), 5);
        assert_eq!(predicted_episode_length(2.0, 0.1, 1.0), 1);
    }
}
