//! Closed-loop engagement simulation and its evaluation metrics.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::Vector2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::controller::{controller_tick, RadioMode, SwitchingState, TickInputs, Transition};
use crate::error::{Error, Result};
use crate::fmath;
use crate::jamming::{evaluate_link, gps_position_fix, jam_to_signal, satellites_core, GpsLinkState, JamGeometry};
use crate::positioning::{NavState, PositioningContext};
use crate::scenario::{streams, waypoint_label, BandId, JamParams, Position2D, ScenarioConfig, Waypoint3D};
use crate::sweep::{extract_moments, select_transmitters, simulate_sweep};
use crate::vision::{depth_distance, horizontal_distance, smoothed_distance, synthesize_box, CameraCalibration};

/// One simulated tick.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub step: usize,
    pub pursuer_truth: Position2D,
    pub rogue_truth: Position2D,
    pub rogue_altitude_m: f64,
    pub estimate: NavState,
    /// Mode the radio was in during this tick.
    pub mode: RadioMode,
    /// Fresh pursuer GPS fix, if the receiver produced one this tick.
    pub gps_fix: Option<Position2D>,
    /// What the pursuer reports as its GPS position: the fresh fix, or the
    /// last one held while unavailable.
    pub gps_report: Option<Position2D>,
    pub gps_held: bool,
    pub rogue_link: GpsLinkState,
    pub pursuer_link: GpsLinkState,
    /// Smoothed vision range.
    pub d_c_m: Option<f64>,
    pub e_m_m: f64,
    pub t_d_m: Option<f64>,
    pub lsq: Option<Position2D>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub records: Vec<SimRecord>,
    pub events: Vec<Transition>,
    /// Step at which the rogue reached each route waypoint.
    pub waypoint_steps: Vec<Option<usize>>,
    pub selected_bands: Vec<BandId>,
}

/// Moves along the route at constant speed, holding at each waypoint.
struct RouteFollower<'a> {
    route: &'a [Waypoint3D],
    step_length: f64,
    x: f64,
    y: f64,
    altitude: f64,
    target: usize,
    hold_left: usize,
    arrivals: Vec<Option<usize>>,
}

impl<'a> RouteFollower<'a> {
    fn new(route: &'a [Waypoint3D], speed_mps: f64, dt: f64) -> Self {
        let mut arrivals = alloc::vec![None; route.len()];
        arrivals[0] = Some(0);
        RouteFollower {
            route,
            step_length: speed_mps * dt,
            x: route[0].x,
            y: route[0].y,
            altitude: route[0].altitude,
            target: 1,
            hold_left: route[0].hold_steps,
            arrivals,
        }
    }

    fn advance(&mut self, step: usize) {
        if self.hold_left > 0 {
            self.hold_left -= 1;
            return;
        }
        let Some(wp) = self.route.get(self.target) else { return };
        let dx = wp.x - self.x;
        let dy = wp.y - self.y;
        let remaining = fmath::hypot(dx, dy);
        if remaining <= self.step_length {
            self.x = wp.x;
            self.y = wp.y;
            self.altitude = wp.altitude;
            self.arrivals[self.target] = Some(step);
            self.hold_left = wp.hold_steps;
            self.target += 1;
        } else {
            let f = self.step_length / remaining;
            self.x += dx * f;
            self.y += dy * f;
            self.altitude += (wp.altitude - self.altitude) * f;
        }
    }

    fn planar(&self) -> Position2D {
        Position2D::new(self.x, self.y)
    }
}

/// Moves the pursuer toward `pursuer + relative_target` by at most
/// `max_speed * dt`, never closer than `standoff_m`.
pub fn pursuit_step(
    pursuer: Position2D,
    relative_target: Vector2<f64>,
    max_speed_mps: f64,
    dt: f64,
    standoff_m: f64,
) -> Position2D {
    let dist = relative_target.norm();
    if !(dist > standoff_m) || dist == 0.0 {
        return pursuer;
    }
    let advance = (max_speed_mps * dt).min(dist - standoff_m);
    pursuer.offset(relative_target * (advance / dist))
}

/// GPS receiver that needs a number of consecutive good steps to regain lock.
struct GpsReceiver {
    locked: bool,
    good_streak: usize,
    reacquire_steps: usize,
    last_fix: Option<Position2D>,
}

impl GpsReceiver {
    fn new(reacquire_steps: usize) -> Self {
        GpsReceiver {
            locked: true,
            good_streak: 0,
            reacquire_steps,
            last_fix: None,
        }
    }

    fn observe<R: Rng + ?Sized>(
        &mut self,
        truth: Position2D,
        link: &GpsLinkState,
        params: &JamParams,
        sigma: f64,
        rng: &mut R,
    ) -> Option<Position2D> {
        if !link.fix_available {
            self.locked = false;
            self.good_streak = 0;
            return None;
        }
        if !self.locked {
            self.good_streak += 1;
            if self.good_streak < self.reacquire_steps {
                return None;
            }
            self.locked = true;
        }
        let fix = gps_position_fix(truth, link, params, sigma, rng);
        if fix.is_some() {
            self.last_fix = fix;
        }
        fix
    }
}

/// Runs one engagement. Identical configs give bit-identical logs.
pub fn run_scenario(config: &ScenarioConfig) -> Result<SimLog> {
    config.validate()?;
    let dt = config.dt_s;
    let mut sweep_rng = config.rng_stream(streams::SWEEP);
    let mut imu_rng = config.rng_stream(streams::IMU);
    let mut vision_rng = config.rng_stream(streams::VISION);
    let mut gps_rng = config.rng_stream(streams::GPS);
    let mut jam_rogue_rng = config.rng_stream(streams::JAM_ROGUE);
    let mut jam_pursuer_rng = config.rng_stream(streams::JAM_PURSUER);

    // band selection from sweeps at the start position
    let calibration: Vec<_> = (0..config.calibration_sweeps)
        .map(|i| extract_moments(&simulate_sweep(config, config.pursuer_init, i, &mut sweep_rng)))
        .collect();
    let selected = select_transmitters(&calibration, &config.controller)?;
    let ctx = PositioningContext::new(config, selected.clone());
    let camera = CameraCalibration::from_params(&config.camera)?;
    let standoff = config.standoff_m();

    let mut rogue = RouteFollower::new(&config.rogue_route, config.rogue_speed_mps, dt);
    let mut pursuer = config.pursuer_init;
    let mut yaw = {
        let rel = rogue.planar() - pursuer;
        fmath::atan2(rel.y, rel.x)
    };
    let mut vision_history: Vec<(f64, f64)> = Vec::new();
    let mut receiver = GpsReceiver::new(config.pursuer.gps_reacquire_steps);
    let mut switching = SwitchingState::new(&config.controller);
    let mut nav: Option<NavState> = None;
    let mut records = Vec::with_capacity(config.duration_steps);

    for step in 0..config.duration_steps {
        rogue.advance(step);
        let rogue_pos = rogue.planar();

        // vision: project the true relative position into the camera frame
        let heading = Vector2::new(fmath::cos(yaw), fmath::sin(yaw));
        let left = Vector2::new(-heading.y, heading.x);
        let rel_truth = rogue_pos - pursuer;
        let detection = synthesize_box(
            step,
            rel_truth.dot(&heading),
            rel_truth.dot(&left),
            &camera,
            &config.camera,
            &mut vision_rng,
        );
        let mut relative_estimate = None;
        if let Some(b) = detection {
            let depth = depth_distance(&b, &camera);
            vision_history.push((depth, horizontal_distance(&b, depth, &camera)));
            if vision_history.len() > config.camera.smoothing_window {
                vision_history.remove(0);
            }
        }
        let smoothed = smoothed_distance(&vision_history, config.camera.smoothing_window);
        if let Some((depth, lateral)) = smoothed {
            let rel = heading * depth + left * lateral;
            if rel.norm() > 0.0 {
                yaw = fmath::atan2(rel.y, rel.x);
            }
            relative_estimate = Some(rel);
        }
        let d_c = smoothed.map(|(d, _)| d);

        // pursuit and inertial measurement
        let next = match relative_estimate {
            Some(rel) => pursuit_step(pursuer, rel, config.pursuer.max_speed_mps, dt, standoff),
            None => pursuer,
        };
        let velocity = (next - pursuer) / dt;
        pursuer = next;
        let zx: f64 = imu_rng.sample(StandardNormal);
        let zy: f64 = imu_rng.sample(StandardNormal);
        let u = velocity + Vector2::new(zx, zy) * config.imu_velocity_noise_sigma_mps;

        // jamming link for both receivers
        let mode = switching.mode;
        let jamming = mode == RadioMode::Jamming;
        let rogue_geom = JamGeometry::from_offsets(
            rogue_pos.distance(&pursuer),
            rogue.altitude - config.pursuer.altitude_m,
        );
        let own_geom = JamGeometry::from_offsets(config.pursuer.self_jam_separation_m, 0.0);
        let rogue_link = evaluate_link(&config.jam, jamming.then_some(&rogue_geom), &mut jam_rogue_rng);
        let pursuer_link = evaluate_link(&config.jam, jamming.then_some(&own_geom), &mut jam_pursuer_rng);
        let gps_fix = receiver.observe(pursuer, &pursuer_link, &config.jam, config.gps_noise_sigma_m, &mut gps_rng);

        let moments = (!jamming).then(|| extract_moments(&simulate_sweep(config, pursuer, step, &mut sweep_rng)));
        let inputs = TickInputs {
            step,
            moments: moments.as_ref(),
            d_c,
            u,
            dt,
        };
        let outcome = controller_tick(&mut switching, nav.as_ref(), &inputs, &ctx, &config.controller)
            .map_err(|e| e.at_step(step))?;
        nav = Some(outcome.nav);

        records.push(SimRecord {
            step,
            pursuer_truth: pursuer,
            rogue_truth: rogue_pos,
            rogue_altitude_m: rogue.altitude,
            estimate: outcome.nav,
            mode,
            gps_fix,
            gps_report: gps_fix.or(receiver.last_fix),
            gps_held: gps_fix.is_none() && receiver.last_fix.is_some(),
            rogue_link,
            pursuer_link,
            d_c_m: d_c,
            e_m_m: switching.e_m,
            t_d_m: switching.t_d,
            lsq: outcome.lsq,
        });
    }

    Ok(SimLog {
        records,
        events: switching.events,
        waypoint_steps: rogue.arrivals,
        selected_bands: selected,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub label: String,
    pub start_step: usize,
    pub end_step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsOptions {
    /// Spacing of the samples used for segment path lengths.
    pub segment_stride_steps: usize,
    pub cdf_resolution_m: f64,
    /// Error level for the within / above fractions.
    pub error_threshold_m: f64,
    pub duty_window_steps: usize,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            segment_stride_steps: 25,
            cdf_resolution_m: 0.1,
            error_threshold_m: 6.0,
            duty_window_steps: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsSample {
    pub reported: Option<Position2D>,
    pub fresh: bool,
}

/// Trajectories to evaluate, all indexed by step.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryInput<'a> {
    pub truth: &'a [Position2D],
    pub relative: &'a [Position2D],
    pub gps: Option<&'a [GpsSample]>,
    pub modes: Option<&'a [RadioMode]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub error_m: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub samples: usize,
    pub mae_m: f64,
    pub rmse_m: f64,
    pub max_error_m: f64,
    pub fraction_within_threshold: f64,
    pub cdf: Vec<CdfPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsMetrics {
    /// Errors of the reported (fix-or-held) GPS trajectory.
    pub reported: ErrorStats,
    /// Errors of fresh fixes only; `None` when there were none.
    pub fix_only: Option<ErrorStats>,
    pub held_steps: usize,
    pub unavailable_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRow {
    pub label: String,
    pub start_step: usize,
    pub end_step: usize,
    pub gt_m: f64,
    pub relative_m: f64,
    pub relative_diff_pct: f64,
    pub gps_m: Option<f64>,
    pub gps_diff_pct: Option<f64>,
    /// Fraction of the segment's ticks spent jamming.
    pub jam_fraction: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DutyWindow {
    pub start_step: usize,
    pub rps_fraction: f64,
    pub jam_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub steps: usize,
    pub error_threshold_m: f64,
    pub relative: ErrorStats,
    pub gps: Option<GpsMetrics>,
    pub segments: Vec<SegmentRow>,
    pub switch_count: usize,
    pub jam_episode_lengths: Vec<usize>,
    pub rps_episode_lengths: Vec<usize>,
    pub jam_fraction: Option<f64>,
    pub duty_cycle: Vec<DutyWindow>,
}

/// Empirical CDF sampled every `resolution` metres from 0 up to the first
/// grid point at or above the largest error.
pub fn error_cdf(errors: &[f64], resolution: f64) -> Vec<CdfPoint> {
    let mut sorted: Vec<f64> = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return Vec::new();
    }
    let max = sorted[n - 1];
    let last = fmath::ceil(max / resolution - 1e-9).max(0.0) as usize;
    let mut out = Vec::with_capacity(last + 1);
    let mut idx = 0;
    for i in 0..=last {
        let e = i as f64 * resolution;
        while idx < n && sorted[idx] <= e + 1e-9 {
            idx += 1;
        }
        let fraction = if i == last { 1.0 } else { idx as f64 / n as f64 };
        out.push(CdfPoint { error_m: e, fraction });
    }
    out
}

fn error_stats(errors: &[f64], opts: &MetricsOptions) -> ErrorStats {
    let n = errors.len().max(1) as f64;
    ErrorStats {
        samples: errors.len(),
        mae_m: errors.iter().sum::<f64>() / n,
        rmse_m: fmath::sqrt(errors.iter().map(|e| e * e).sum::<f64>() / n),
        max_error_m: errors.iter().copied().fold(0.0, f64::max),
        fraction_within_threshold: errors.iter().filter(|&&e| e <= opts.error_threshold_m).count() as f64 / n,
        cdf: error_cdf(errors, opts.cdf_resolution_m),
    }
}

/// Path length through the samples `start, start + stride, ..., end`.
pub fn path_length(points: &[Position2D], start: usize, end: usize, stride: usize) -> f64 {
    if end <= start || end >= points.len() {
        return 0.0;
    }
    let stride = stride.max(1);
    let mut total = 0.0;
    let mut prev = start;
    let mut i = start + stride;
    while i < end {
        total += points[prev].distance(&points[i]);
        prev = i;
        i += stride;
    }
    total + points[prev].distance(&points[end])
}

fn diff_pct(est: f64, gt: f64) -> f64 {
    if gt > 0.0 {
        (est - gt).abs() / gt * 100.0
    } else {
        0.0
    }
}

fn episodes(modes: &[RadioMode]) -> (Vec<usize>, Vec<usize>, usize) {
    let mut jam = Vec::new();
    let mut rps = Vec::new();
    let mut switches = 0;
    let mut run = 0;
    for (i, m) in modes.iter().enumerate() {
        run += 1;
        let ends = i + 1 == modes.len() || modes[i + 1] != *m;
        if ends {
            match m {
                RadioMode::Jamming => jam.push(run),
                RadioMode::RpsActive => rps.push(run),
            }
            if i + 1 < modes.len() {
                switches += 1;
            }
            run = 0;
        }
    }
    (jam, rps, switches)
}

/// Evaluation metrics: relative-trajectory error statistics, GPS error
/// statistics, segment distances and switching statistics.
pub fn compute_metrics(input: &TrajectoryInput<'_>, segments: &[Segment], opts: &MetricsOptions) -> Result<MetricsReport> {
    let n = input.truth.len();
    if n == 0 {
        return Err(Error::validation("metrics need a nonempty log"));
    }
    if input.relative.len() != n
        || input.gps.is_some_and(|g| g.len() != n)
        || input.modes.is_some_and(|m| m.len() != n)
    {
        return Err(Error::validation("trajectories must have equal lengths"));
    }
    let errors: Vec<f64> = input
        .truth
        .iter()
        .zip(input.relative)
        .map(|(t, e)| t.distance(e))
        .collect();
    let relative = error_stats(&errors, opts);

    let gps = input.gps.map(|samples| {
        let mut reported = Vec::new();
        let mut fresh = Vec::new();
        let mut held = 0;
        let mut unavailable = 0;
        for (s, t) in samples.iter().zip(input.truth) {
            if !s.fresh {
                unavailable += 1;
            }
            if let Some(p) = s.reported {
                reported.push(p.distance(t));
                if s.fresh {
                    fresh.push(p.distance(t));
                } else {
                    held += 1;
                }
            }
        }
        GpsMetrics {
            reported: error_stats(&reported, opts),
            fix_only: (!fresh.is_empty()).then(|| error_stats(&fresh, opts)),
            held_steps: held,
            unavailable_steps: unavailable,
        }
    });

    let gps_track: Option<Vec<Position2D>> = input.gps.map(|samples| {
        let mut last = None;
        samples
            .iter()
            .zip(input.truth)
            .map(|(s, t)| {
                if s.reported.is_some() {
                    last = s.reported;
                }
                last.unwrap_or(*t)
            })
            .collect()
    });

    let mut rows = Vec::with_capacity(segments.len());
    for seg in segments {
        if seg.end_step >= n || seg.end_step <= seg.start_step {
            return Err(Error::validation(alloc::format!(
                "segment {} spans steps {}..{} outside the {n}-step log",
                seg.label,
                seg.start_step,
                seg.end_step
            )));
        }
        let stride = opts.segment_stride_steps;
        let gt = path_length(input.truth, seg.start_step, seg.end_step, stride);
        let rel = path_length(input.relative, seg.start_step, seg.end_step, stride);
        let gps_m = gps_track
            .as_ref()
            .map(|g| path_length(g, seg.start_step, seg.end_step, stride));
        let jam_fraction = input.modes.map(|m| {
            let span = &m[seg.start_step..=seg.end_step];
            span.iter().filter(|&&x| x == RadioMode::Jamming).count() as f64 / span.len() as f64
        });
        rows.push(SegmentRow {
            label: seg.label.clone(),
            start_step: seg.start_step,
            end_step: seg.end_step,
            gt_m: gt,
            relative_m: rel,
            relative_diff_pct: diff_pct(rel, gt),
            gps_m,
            gps_diff_pct: gps_m.map(|g| diff_pct(g, gt)),
            jam_fraction,
        });
    }

    let (jam_eps, rps_eps, switches, jam_fraction, duty) = match input.modes {
        Some(modes) => {
            let (j, r, s) = episodes(modes);
            let frac = modes.iter().filter(|&&m| m == RadioMode::Jamming).count() as f64 / n as f64;
            let w = opts.duty_window_steps.max(1);
            let duty = modes
                .chunks(w)
                .enumerate()
                .map(|(i, c)| {
                    let jam = c.iter().filter(|&&m| m == RadioMode::Jamming).count() as f64 / c.len() as f64;
                    DutyWindow {
                        start_step: i * w,
                        rps_fraction: 1.0 - jam,
                        jam_fraction: jam,
                    }
                })
                .collect();
            (j, r, s, Some(frac), duty)
        }
        None => (Vec::new(), Vec::new(), 0, None, Vec::new()),
    };

    Ok(MetricsReport {
        steps: n,
        error_threshold_m: opts.error_threshold_m,
        relative,
        gps,
        segments: rows,
        switch_count: switches,
        jam_episode_lengths: jam_eps,
        rps_episode_lengths: rps_eps,
        jam_fraction,
        duty_cycle: duty,
    })
}

impl SimLog {
    pub fn truth(&self) -> Vec<Position2D> {
        self.records.iter().map(|r| r.pursuer_truth).collect()
    }

    pub fn estimates(&self) -> Vec<Position2D> {
        self.records.iter().map(|r| r.estimate.estimate).collect()
    }

    pub fn gps_samples(&self) -> Vec<GpsSample> {
        self.records
            .iter()
            .map(|r| GpsSample {
                reported: r.gps_report,
                fresh: r.gps_fix.is_some(),
            })
            .collect()
    }

    pub fn modes(&self) -> Vec<RadioMode> {
        self.records.iter().map(|r| r.mode).collect()
    }

    /// Consecutive-waypoint segments, from arrival at one waypoint to arrival
    /// at the next, for every pair the rogue completed.
    pub fn route_segments(&self) -> Vec<Segment> {
        self.waypoint_steps
            .windows(2)
            .enumerate()
            .filter_map(|(i, w)| match (w[0], w[1]) {
                (Some(a), Some(b)) if b > a => Some(Segment {
                    label: alloc::format!("{}-{}", waypoint_label(i), waypoint_label(i + 1)),
                    start_step: a,
                    end_step: b,
                }),
                _ => None,
            })
            .collect()
    }

    pub fn metrics(&self, segments: &[Segment], opts: &MetricsOptions) -> Result<MetricsReport> {
        let truth = self.truth();
        let est = self.estimates();
        let gps = self.gps_samples();
        let modes = self.modes();
        let mut report = compute_metrics(
            &TrajectoryInput {
                truth: &truth,
                relative: &est,
                gps: Some(&gps),
                modes: Some(&modes),
            },
            segments,
            opts,
        )?;
        report.switch_count = self.events.len();
        Ok(report)
    }
}

/// One field-test cell: geometry labels and whether the victim kept its fix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternCell {
    pub altitude_m: f64,
    pub distance_m: f64,
    pub elevation_deg: f64,
    pub fix_expected: bool,
}

impl PatternCell {
    pub fn geometry(&self) -> JamGeometry {
        JamGeometry::labeled(self.altitude_m, self.distance_m, self.elevation_deg)
    }
}

/// Target outcome pattern plus the link parameters that are not calibrated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JamPattern {
    pub base: JamParams,
    pub cells: Vec<PatternCell>,
}

/// The six outdoor jamming cells: fix lost everywhere except 50 m altitude
/// at 10 m.
pub fn field_test_cells() -> Vec<PatternCell> {
    let cell = |altitude_m, distance_m, elevation_deg, fix_expected| PatternCell {
        altitude_m,
        distance_m,
        elevation_deg,
        fix_expected,
    };
    alloc::vec![
        cell(25.0, 5.0, 0.0, false),
        cell(25.0, 10.0, 30.0, false),
        cell(30.0, 5.0, 0.0, false),
        cell(30.0, 10.0, 30.0, false),
        cell(50.0, 5.0, 0.0, false),
        cell(50.0, 10.0, 30.0, true),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationGrid {
    pub threshold_step_db: f64,
    /// Threshold search extends this far beyond the cells' J/S range.
    pub threshold_margin_db: f64,
    pub slope_min: f64,
    pub slope_max: f64,
    pub slope_step: f64,
}

impl Default for CalibrationGrid {
    fn default() -> Self {
        CalibrationGrid {
            threshold_step_db: 0.05,
            threshold_margin_db: 20.0,
            slope_min: 0.1,
            slope_max: 4.0,
            slope_step: 0.05,
        }
    }
}

/// Jitter-free fix outcome of every cell.
pub fn pattern_outcomes(params: &JamParams, cells: &[PatternCell]) -> Vec<bool> {
    cells
        .iter()
        .map(|c| satellites_core(jam_to_signal(params, &c.geometry()), params) >= params.fix_min_sats)
        .collect()
}

/// Grid search over `(js_threshold, sat_loss_slope)` for parameters whose
/// jitter-free satellite model reproduces every cell. Among feasible grid
/// points, returns one whose lost-fix cutoff is farthest in J/S from every
/// cell, breaking ties by distance to the centroid of the feasible set.
pub fn calibrate_jamming(pattern: &JamPattern, grid: &CalibrationGrid) -> Result<JamParams> {
    pattern.base.validate()?;
    if pattern.cells.is_empty() {
        return Err(Error::validation("jamming pattern has no cells"));
    }
    let js: Vec<f64> = pattern
        .cells
        .iter()
        .map(|c| jam_to_signal(&pattern.base, &c.geometry()))
        .collect();
    let finite: Vec<f64> = js.iter().copied().filter(|v| v.is_finite()).collect();
    let (lo, hi) = if finite.is_empty() {
        (0.0, 0.0)
    } else {
        (
            finite.iter().copied().fold(f64::INFINITY, f64::min),
            finite.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    };
    let t0 = fmath::floor((lo - grid.threshold_margin_db) / grid.threshold_step_db) * grid.threshold_step_db;
    let t_count = fmath::floor((hi - lo + 2.0 * grid.threshold_margin_db) / grid.threshold_step_db) as usize + 1;
    let s_count = fmath::floor((grid.slope_max - grid.slope_min) / grid.slope_step + 1e-9) as usize + 1;

    let mut feasible: Vec<(f64, f64)> = Vec::new();
    let mut best_miss = (usize::MAX, 0.0, 0.0);
    let mut params = pattern.base.clone();
    for ti in 0..t_count {
        let thr = t0 + ti as f64 * grid.threshold_step_db;
        for si in 0..s_count {
            let slope = grid.slope_min + si as f64 * grid.slope_step;
            params.js_threshold_db = thr;
            params.sat_loss_slope = slope;
            let violated = pattern
                .cells
                .iter()
                .zip(&js)
                .filter(|(c, &j)| (satellites_core(j, &params) >= params.fix_min_sats) != c.fix_expected)
                .count();
            if violated == 0 {
                feasible.push((thr, slope));
            } else if violated < best_miss.0 {
                best_miss = (violated, thr, slope);
            }
        }
    }
    if feasible.is_empty() {
        return Err(Error::InfeasiblePattern {
            nearest_threshold_db: best_miss.1,
            nearest_slope: best_miss.2,
            violated_cells: best_miss.0,
        });
    }
    // J/S distance from the lost-fix cutoff to the nearest cell
    let fix_lost_after = (pattern.base.n_nominal - pattern.base.fix_min_sats.min(pattern.base.n_nominal) + 1) as f64;
    let margin = |(thr, slope): (f64, f64)| {
        let cutoff = thr + fix_lost_after / slope;
        pattern
            .cells
            .iter()
            .zip(&js)
            .filter(|(_, j)| j.is_finite())
            .map(|(c, &j)| if c.fix_expected { cutoff - j } else { j - cutoff })
            .fold(f64::INFINITY, f64::min)
    };
    let best = feasible.iter().map(|&p| margin(p)).fold(f64::NEG_INFINITY, f64::max);
    let deepest: Vec<(f64, f64)> = feasible
        .iter()
        .copied()
        .filter(|&p| margin(p) >= best - 1e-9)
        .collect();
    let k = feasible.len() as f64;
    let ct = feasible.iter().map(|p| p.0).sum::<f64>() / k;
    let cs = feasible.iter().map(|p| p.1).sum::<f64>() / k;
    let t_span = (t_count as f64 * grid.threshold_step_db).max(1e-12);
    let s_span = (grid.slope_max - grid.slope_min).max(1e-12);
    let (thr, slope) = deepest
        .iter()
        .copied()
        .min_by(|a, b| {
            let dist = |p: (f64, f64)| {
                let (u, v) = ((p.0 - ct) / t_span, (p.1 - cs) / s_span);
                u * u + v * v
            };
            dist(*a).total_cmp(&dist(*b))
        })
        .expect("nonempty");
    let mut out = pattern.base.clone();
    // round to the grid resolution so the stored values are stable
    out.js_threshold_db = libm::round(thr * 1e6) / 1e6;
    out.sat_loss_slope = libm::round(slope * 1e6) / 1e6;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::reference_scenario;
    use alloc::vec;

    #[test]
    fn pursuit_cases() {
        let p = Position2D::new(1.0, 1.0);
        assert_eq!(pursuit_step(p, Vector2::new(7.5, 0.0), 5.0, 1.0, 7.5), p);
        let n = pursuit_step(Position2D::ORIGIN, Vector2::new(60.0, 80.0), 5.0, 1.0, 7.5);
        assert!((n.distance(&Position2D::ORIGIN) - 5.0).abs() < 1e-12);
        assert!((n.x - 3.0).abs() < 1e-12 && (n.y - 4.0).abs() < 1e-12);
        assert_eq!(pursuit_step(p, Vector2::zeros(), 5.0, 1.0, 0.0), p);
        // never overshoots the standoff ring
        let n = pursuit_step(Position2D::ORIGIN, Vector2::new(9.0, 0.0), 5.0, 1.0, 7.5);
        assert!((n.x - 1.5).abs() < 1e-12);
    }

    #[test]
    fn cdf_perfect_and_constant_offset() {
        let c = error_cdf(&[0.0; 10], 0.1);
        assert_eq!(c, vec![CdfPoint { error_m: 0.0, fraction: 1.0 }]);
        let c = error_cdf(&[3.0; 10], 0.1);
        assert_eq!(c.last().unwrap().error_m, 3.0);
        assert_eq!(c.last().unwrap().fraction, 1.0);
        assert_eq!(c[29].fraction, 0.0);
        assert_eq!(c.len(), 31);
    }

    #[test]
    fn metrics_constant_offset() {
        let truth: Vec<Position2D> = (0..50).map(|i| Position2D::new(i as f64, 0.0)).collect();
        let est: Vec<Position2D> = truth.iter().map(|p| Position2D::new(p.x, p.y + 3.0)).collect();
        let r = compute_metrics(
            &TrajectoryInput {
                truth: &truth,
                relative: &est,
                gps: None,
                modes: None,
            },
            &[],
            &MetricsOptions::default(),
        )
        .unwrap();
        assert!((r.relative.mae_m - 3.0).abs() < 1e-12);
        let perfect = compute_metrics(
            &TrajectoryInput {
                truth: &truth,
                relative: &truth,
                gps: None,
                modes: None,
            },
            &[],
            &MetricsOptions::default(),
        )
        .unwrap();
        assert_eq!(perfect.relative.mae_m, 0.0);
        assert_eq!(perfect.relative.cdf[0].fraction, 1.0);
    }

    #[test]
    fn segment_row_percentages() {
        // 20 m ground truth, relative track covers 18 m
        let truth: Vec<Position2D> = (0..=20).map(|i| Position2D::new(i as f64, 0.0)).collect();
        let rel: Vec<Position2D> = (0..=20).map(|i| Position2D::new(0.9 * i as f64, 0.0)).collect();
        let seg = Segment {
            label: "A-B".into(),
            start_step: 0,
            end_step: 20,
        };
        let r = compute_metrics(
            &TrajectoryInput {
                truth: &truth,
                relative: &rel,
                gps: None,
                modes: None,
            },
            &[seg],
            &MetricsOptions::default(),
        )
        .unwrap();
        let row = &r.segments[0];
        assert!((row.gt_m - 20.0).abs() < 1e-9);
        assert!((row.relative_m - 18.0).abs() < 1e-9);
        assert!((row.relative_diff_pct - 10.0).abs() < 1e-9);
    }

    #[test]
    fn unavailable_gps_counted_separately() {
        let truth: Vec<Position2D> = (0..4).map(|i| Position2D::new(i as f64, 0.0)).collect();
        let gps = [
            GpsSample { reported: Some(Position2D::new(0.0, 1.0)), fresh: true },
            GpsSample { reported: Some(Position2D::new(0.0, 1.0)), fresh: false },
            GpsSample { reported: Some(Position2D::new(0.0, 1.0)), fresh: false },
            GpsSample { reported: Some(Position2D::new(3.0, 2.0)), fresh: true },
        ];
        let r = compute_metrics(
            &TrajectoryInput {
                truth: &truth,
                relative: &truth,
                gps: Some(&gps),
                modes: None,
            },
            &[],
            &MetricsOptions::default(),
        )
        .unwrap();
        let g = r.gps.unwrap();
        assert_eq!(g.unavailable_steps, 2);
        assert_eq!(g.held_steps, 2);
        assert_eq!(g.fix_only.unwrap().samples, 2);
        assert_eq!(g.reported.samples, 4);
    }

    #[test]
    fn episode_counting() {
        use RadioMode::*;
        let (j, r, s) = episodes(&[RpsActive, RpsActive, Jamming, Jamming, Jamming, RpsActive, Jamming]);
        assert_eq!(j, vec![3, 1]);
        assert_eq!(r, vec![2, 1]);
        assert_eq!(s, 3);
    }

    #[test]
    fn path_length_stride_includes_endpoint() {
        let pts: Vec<Position2D> = (0..11).map(|i| Position2D::new(i as f64, 0.0)).collect();
        assert_eq!(path_length(&pts, 0, 10, 3), 10.0);
        assert_eq!(path_length(&pts, 2, 7, 100), 5.0);
        assert_eq!(path_length(&pts, 5, 5, 1), 0.0);
    }

    #[test]
    fn inert_run() {
        let mut cfg = reference_scenario();
        cfg.duration_steps = 10;
        cfg.pursuer_init = Position2D::new(150.0, 150.0);
        let log = run_scenario(&cfg).unwrap();
        assert_eq!(log.records.len(), 10);
        assert!(log.records.iter().all(|r| r.mode == RadioMode::RpsActive));
        assert!(log.events.is_empty());
    }

    #[test]
    fn calibration_slack_and_contradiction() {
        let base = reference_scenario().jam;
        let all_jammed: Vec<PatternCell> = field_test_cells()
            .into_iter()
            .map(|mut c| {
                c.fix_expected = false;
                c
            })
            .collect();
        let p = calibrate_jamming(
            &JamPattern { base: base.clone(), cells: all_jammed.clone() },
            &CalibrationGrid::default(),
        )
        .unwrap();
        assert!(pattern_outcomes(&p, &all_jammed).iter().all(|&f| !f));

        let mut cells = field_test_cells();
        let mut twin = cells[0].clone();
        twin.fix_expected = true;
        cells.push(twin);
        let err = calibrate_jamming(&JamPattern { base, cells }, &CalibrationGrid::default()).unwrap_err();
        assert!(matches!(err, Error::InfeasiblePattern { violated_cells: 1, .. }), "{err}");
    }
}
