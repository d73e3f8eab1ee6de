//! World description, tunable parameters and seeded random streams.
//!
//! Every other module reads its parameters from a [`ScenarioConfig`]. The
//! config is immutable once validated, so it can be shared read-only across
//! concurrent runs.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Sub};

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fmath;

/// Spectrum band index; each SOP transmitter occupies exactly one band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BandId(pub u32);

impl fmt::Display for BandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Planar position in metres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position2D {
    #[serde(rename = "x_m")]
    pub x: f64,
    #[serde(rename = "y_m")]
    pub y: f64,
}

impl Position2D {
    pub const ORIGIN: Position2D = Position2D { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Position2D { x, y }
    }

    pub fn distance(&self, other: &Position2D) -> f64 {
        fmath::hypot(self.x - other.x, self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn from_vector(v: Vector2<f64>) -> Self {
        Position2D::new(v.x, v.y)
    }

    /// Position advanced by a displacement vector.
    pub fn offset(&self, delta: Vector2<f64>) -> Position2D {
        Position2D::new(self.x + delta.x, self.y + delta.y)
    }
}

impl Add for Position2D {
    type Output = Position2D;
    fn add(self, rhs: Position2D) -> Position2D {
        Position2D::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Position2D {
    type Output = Vector2<f64>;
    fn sub(self, rhs: Position2D) -> Vector2<f64> {
        Vector2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// A fixed SOP transmitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transmitter {
    pub id: BandId,
    /// True location, used to synthesise sweeps.
    pub position: Position2D,
    pub ref_rss_dbm: f64,
    #[serde(default = "default_d0")]
    pub d0_m: f64,
    /// Error of the position the estimator is given, relative to `position`.
    #[serde(default)]
    pub position_offset: Position2D,
}

impl Transmitter {
    /// Position the estimator believes the transmitter is at.
    pub fn estimated_position(&self) -> Position2D {
        self.position + self.position_offset
    }
}

fn default_d0() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint3D {
    #[serde(rename = "x_m")]
    pub x: f64,
    #[serde(rename = "y_m")]
    pub y: f64,
    #[serde(rename = "altitude_m")]
    pub altitude: f64,
    #[serde(default)]
    pub hold_steps: usize,
}

impl Waypoint3D {
    pub fn planar(&self) -> Position2D {
        Position2D::new(self.x, self.y)
    }
}

/// Parameters of the positioning / jamming switcher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    /// Number of SOP transmitters (bands) used for ranging.
    pub t_i: usize,
    /// Path-loss exponent.
    pub n_pl: f64,
    /// Percentile in (0, 100] added to the mean residual to form the
    /// switching threshold.
    pub a_percentile: f64,
    pub d_jam_m: f64,
    /// Length of the sliding residual window, in positioning steps.
    pub calib_window_steps: usize,
}

/// Link-budget parameters of the GPS jammer and the victim receivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JamParams {
    pub tx_power_mw: f64,
    pub tx_gain: f64,
    pub rx_gain: f64,
    pub tx_height_m: f64,
    pub rx_height_m: f64,
    /// J/S at which satellites start being lost.
    pub js_threshold_db: f64,
    /// Satellites lost per dB of J/S above the threshold.
    #[serde(rename = "sat_loss_slope_per_db")]
    pub sat_loss_slope: f64,
    pub n_nominal: u32,
    #[serde(default = "default_fix_min_sats")]
    pub fix_min_sats: u32,
    pub gps_signal_power_dbm: f64,
    /// Exponent of the cos(elevation) roll-off applied to jam power.
    #[serde(default = "default_elevation_exponent")]
    pub elevation_exponent: f64,
}

fn default_fix_min_sats() -> u32 {
    4
}

fn default_elevation_exponent() -> f64 {
    2.0
}

impl JamParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tx_power_mw > 0.0) {
            return Err(Error::validation("jam tx power must be > 0"));
        }
        if !(self.tx_gain > 0.0 && self.rx_gain > 0.0) {
            return Err(Error::validation("antenna gains must be > 0"));
        }
        if !(self.tx_height_m > 0.0 && self.rx_height_m > 0.0) {
            return Err(Error::validation("antenna heights must be > 0"));
        }
        if !(self.sat_loss_slope >= 0.0) || !self.js_threshold_db.is_finite() {
            return Err(Error::validation("satellite loss model must be finite and non-negative"));
        }
        if self.n_nominal < self.fix_min_sats {
            return Err(Error::validation("n_nominal must be >= fix_min_sats"));
        }
        if !(self.elevation_exponent >= 0.0) {
            return Err(Error::validation("elevation exponent must be >= 0"));
        }
        Ok(())
    }
}

/// Pinhole camera reference calibration plus the synthetic detector model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    /// Reference object width in pixels at the reference distance.
    pub ref_width_px: f64,
    pub ref_distance_m: f64,
    pub ref_width_m: f64,
    /// Assumed physical width of the rogue drone.
    #[serde(default = "default_target_width")]
    pub target_width_m: f64,
    #[serde(default = "default_pixel_noise")]
    pub pixel_noise_px: f64,
    #[serde(default = "default_smoothing_window")]
    pub smoothing_window: usize,
    /// Smallest box width the detector reports.
    #[serde(default = "default_min_width")]
    pub min_width_px: f64,
}

fn default_target_width() -> f64 {
    0.4
}
fn default_pixel_noise() -> f64 {
    2.0
}
fn default_smoothing_window() -> usize {
    5
}
fn default_min_width() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PursuerParams {
    pub altitude_m: f64,
    pub max_speed_mps: f64,
    /// Distance at which pursuit stops; defaults to half of `d_jam`.
    #[serde(default)]
    pub standoff_m: Option<f64>,
    /// Distance between the pursuer's jamming antenna and its own GPS antenna.
    pub self_jam_separation_m: f64,
    /// Consecutive steps with enough satellites before a receiver that lost
    /// lock reports a fix again.
    #[serde(default)]
    pub gps_reacquire_steps: usize,
}

/// Complete, self-contained description of one simulated engagement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub duration_steps: usize,
    pub dt_s: f64,
    pub seed: u64,
    pub transmitters: Vec<Transmitter>,
    pub pursuer_init: Position2D,
    pub pursuer: PursuerParams,
    pub rogue_route: Vec<Waypoint3D>,
    pub rogue_speed_mps: f64,
    /// Per-sample log-normal shadowing of SOP RSS.
    pub shadowing_sigma_db: f64,
    #[serde(default = "default_samples_per_band")]
    pub samples_per_band: usize,
    /// Sweeps taken at the start position to pick the ranging bands.
    #[serde(default = "default_calibration_sweeps")]
    pub calibration_sweeps: usize,
    /// Extra range uncertainty the filter assumes on top of shadowing.
    #[serde(default)]
    pub range_noise_sigma_m: f64,
    pub imu_velocity_noise_sigma_mps: f64,
    pub gps_noise_sigma_m: f64,
    /// 1-sigma of the initial position covariance, per axis.
    #[serde(default = "default_initial_sigma")]
    pub initial_position_sigma_m: f64,
    pub jam: JamParams,
    pub controller: ControllerParams,
    pub camera: CameraParams,
}

fn default_samples_per_band() -> usize {
    16
}
fn default_calibration_sweeps() -> usize {
    5
}
fn default_initial_sigma() -> f64 {
    2.0
}

impl ScenarioConfig {
    /// Checks every invariant, naming the first one violated.
    pub fn validate(&self) -> Result<()> {
        if self.duration_steps == 0 {
            return Err(Error::validation("duration_steps must be > 0"));
        }
        if !(self.dt_s > 0.0) || !self.dt_s.is_finite() {
            return Err(Error::validation("dt_s must be > 0"));
        }
        if self.transmitters.len() < 4 {
            return Err(Error::validation(format!(
                "at least 4 transmitters required, got {}",
                self.transmitters.len()
            )));
        }
        let mut ids: Vec<BandId> = self.transmitters.iter().map(|t| t.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation("transmitter band ids must be unique"));
        }
        for t in &self.transmitters {
            if !(t.d0_m > 0.0) {
                return Err(Error::validation(format!("transmitter {}: d0 must be > 0", t.id)));
            }
            if !t.position.is_finite() || !t.position_offset.is_finite() || !t.ref_rss_dbm.is_finite() {
                return Err(Error::validation(format!("transmitter {}: non-finite value", t.id)));
            }
        }
        let sigmas = [
            ("shadowing_sigma_db", self.shadowing_sigma_db),
            ("range_noise_sigma_m", self.range_noise_sigma_m),
            ("imu_velocity_noise_sigma_mps", self.imu_velocity_noise_sigma_mps),
            ("gps_noise_sigma_m", self.gps_noise_sigma_m),
            ("initial_position_sigma_m", self.initial_position_sigma_m),
            ("pixel_noise_px", self.camera.pixel_noise_px),
        ];
        for (name, s) in sigmas {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::validation(format!("{name} must be >= 0")));
            }
        }
        if self.samples_per_band == 0 {
            return Err(Error::validation("samples_per_band must be > 0"));
        }
        if self.calibration_sweeps == 0 {
            return Err(Error::validation("calibration_sweeps must be > 0"));
        }
        if !self.pursuer_init.is_finite() {
            return Err(Error::validation("pursuer_init must be finite"));
        }
        if self.rogue_route.is_empty() {
            return Err(Error::validation("rogue_route must have at least one waypoint"));
        }
        for w in &self.rogue_route {
            if !(w.altitude >= 0.0) {
                return Err(Error::validation("waypoint altitude must be >= 0"));
            }
            if !w.x.is_finite() || !w.y.is_finite() {
                return Err(Error::validation("waypoint must be finite"));
            }
        }
        if !(self.rogue_speed_mps >= 0.0) {
            return Err(Error::validation("rogue_speed_mps must be >= 0"));
        }
        self.controller.validate()?;
        if self.controller.t_i > self.transmitters.len() {
            return Err(Error::validation(format!(
                "t_i = {} exceeds the {} configured transmitters",
                self.controller.t_i,
                self.transmitters.len()
            )));
        }
        self.jam.validate()?;
        let cam = &self.camera;
        if !(cam.ref_width_px > 0.0 && cam.ref_distance_m > 0.0 && cam.ref_width_m > 0.0) {
            return Err(Error::validation("camera reference values must be > 0"));
        }
        if !(cam.target_width_m > 0.0) || !(cam.min_width_px > 0.0) || cam.smoothing_window == 0 {
            return Err(Error::validation("camera detector values must be > 0"));
        }
        let p = &self.pursuer;
        if !(p.max_speed_mps > 0.0) {
            return Err(Error::validation("pursuer max_speed_mps must be > 0"));
        }
        if !(p.altitude_m >= 0.0) || !(p.self_jam_separation_m > 0.0) {
            return Err(Error::validation("pursuer altitude >= 0 and self_jam_separation_m > 0 required"));
        }
        if let Some(s) = p.standoff_m {
            if !(s >= 0.0) {
                return Err(Error::validation("standoff_m must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn standoff_m(&self) -> f64 {
        self.pursuer.standoff_m.unwrap_or(self.controller.d_jam_m / 2.0)
    }

    pub fn transmitter(&self, id: BandId) -> Option<&Transmitter> {
        self.transmitters.iter().find(|t| t.id == id)
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<()> {
        if self.t_i < 4 {
            return Err(Error::validation("t_i must be >= 4"));
        }
        if !(self.n_pl > 0.0) {
            return Err(Error::validation("n_pl must be > 0"));
        }
        if !(self.a_percentile > 0.0 && self.a_percentile <= 100.0) {
            return Err(Error::validation("a_percentile must be in (0, 100]"));
        }
        if !(self.d_jam_m > 0.0) {
            return Err(Error::validation("d_jam_m must be > 0"));
        }
        if self.calib_window_steps == 0 {
            return Err(Error::validation("calib_window_steps must be > 0"));
        }
        Ok(())
    }
}

/// Deterministic random stream keyed by the scenario seed and a label.
pub type RngStream = ChaCha8Rng;

/// Derives the stream for `(seed, label)`; the key is a SHA-256 of both so
/// distinct labels give unrelated streams.
///
/// # Panics
/// If `label` is empty.
pub fn rng_stream(seed: u64, label: &str) -> RngStream {
    assert!(!label.is_empty(), "rng stream label must be nonempty");
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

impl ScenarioConfig {
    pub fn rng_stream(&self, label: &str) -> RngStream {
        rng_stream(self.seed, label)
    }
}

/// Labels of the streams used by the simulator.
pub mod streams {
    pub const SWEEP: &str = "sweep";
    pub const IMU: &str = "imu";
    pub const VISION: &str = "vision";
    pub const GPS: &str = "gps";
    pub const JAM_ROGUE: &str = "jam-rogue";
    pub const JAM_PURSUER: &str = "jam-pursuer";
}

/// Jamming calibration result for the field-test pattern, shipped with the reference scenario.
pub const REFERENCE_JS_THRESHOLD_DB: f64 = 74.85;
pub const REFERENCE_SAT_LOSS_SLOPE: f64 = 2.65;

/// The reference engagement: a 300 m, five-segment rogue route flown over
/// 2600 steps, ranged against 16 SOP transmitters ringed around a 500 m field
/// of which the 13 strongest are used.
pub fn reference_scenario() -> ScenarioConfig {
    let ring_radius = 250.0;
    let mut transmitters = Vec::new();
    for k in 0..16u32 {
        let angle = (k as f64) * core::f64::consts::PI * 2.0 / 16.0 + 0.1;
        // three weak bands the selector has to reject
        let ref_rss = if k % 5 == 2 { -75.0 } else { -20.0 - (k % 4) as f64 * 3.0 };
        transmitters.push(Transmitter {
            id: BandId(100 + 7 * k),
            position: Position2D::new(ring_radius * fmath::cos(angle), ring_radius * fmath::sin(angle)),
            ref_rss_dbm: ref_rss,
            d0_m: 1.0,
            position_offset: Position2D::ORIGIN,
        });
    }
    // A-B 64 m, B-C 48 m, C-D 96 m, D-E 48 m, E-F 44 m: 300 m in total.
    let rogue_route = alloc::vec![
        Waypoint3D { x: -40.0, y: -30.0, altitude: 30.0, hold_steps: 150 },
        Waypoint3D { x: 24.0, y: -30.0, altitude: 30.0, hold_steps: 40 },
        Waypoint3D { x: 24.0, y: 18.0, altitude: 30.0, hold_steps: 40 },
        Waypoint3D { x: -72.0, y: 18.0, altitude: 30.0, hold_steps: 40 },
        Waypoint3D { x: -72.0, y: 66.0, altitude: 30.0, hold_steps: 40 },
        Waypoint3D { x: -28.0, y: 66.0, altitude: 30.0, hold_steps: 0 },
    ];
    ScenarioConfig {
        duration_steps: 2600,
        dt_s: 0.2,
        seed: 7,
        transmitters,
        pursuer_init: Position2D::new(-70.0, -60.0),
        pursuer: PursuerParams {
            altitude_m: 28.0,
            max_speed_mps: 2.5,
            standoff_m: None,
            self_jam_separation_m: 0.5,
            gps_reacquire_steps: 1,
        },
        rogue_route,
        rogue_speed_mps: 0.8,
        shadowing_sigma_db: 0.17,
        samples_per_band: 16,
        calibration_sweeps: 5,
        range_noise_sigma_m: 0.0,
        imu_velocity_noise_sigma_mps: 0.4,
        gps_noise_sigma_m: 2.0,
        initial_position_sigma_m: 2.0,
        jam: JamParams {
            tx_power_mw: 10.0,
            tx_gain: 1.0,
            rx_gain: 1.0,
            tx_height_m: 1.5,
            rx_height_m: 1.5,
            js_threshold_db: REFERENCE_JS_THRESHOLD_DB,
            sat_loss_slope: REFERENCE_SAT_LOSS_SLOPE,
            n_nominal: 12,
            fix_min_sats: 4,
            gps_signal_power_dbm: -130.0,
            elevation_exponent: 2.0,
        },
        controller: ControllerParams {
            t_i: 13,
            n_pl: 2.8,
            a_percentile: 50.0,
            d_jam_m: 15.0,
            calib_window_steps: 50,
        },
        camera: CameraParams {
            ref_width_px: 100.0,
            ref_distance_m: 4.0,
            ref_width_m: 0.4,
            target_width_m: 0.4,
            pixel_noise_px: 2.0,
            smoothing_window: 5,
            min_width_px: 1.0,
        },
    }
}

/// Label for a waypoint index: 0 -> "A", 1 -> "B", ...
pub fn waypoint_label(index: usize) -> String {
    if index < 26 {
        String::from(char::from(b'A' + index as u8))
    } else {
        format!("W{index}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use rand::Rng;

    #[test]
    fn reference_scenario_is_valid() {
        let cfg = reference_scenario();
        cfg.validate().unwrap();
        assert_eq!(cfg.controller.t_i, 13);
        assert_eq!(cfg.controller.n_pl, 2.8);
        assert_eq!(cfg.duration_steps, 2600);
    }

    #[test]
    fn reference_route_is_300_m() {
        let cfg = reference_scenario();
        let len: f64 = cfg
            .rogue_route
            .windows(2)
            .map(|w| w[0].planar().distance(&w[1].planar()))
            .sum();
        assert!((len - 300.0).abs() < 1e-9);
    }

    #[test]
    fn four_transmitters_is_minimum() {
        let mut cfg = reference_scenario();
        cfg.transmitters.truncate(4);
        cfg.controller.t_i = 4;
        cfg.validate().unwrap();
        cfg.transmitters.truncate(3);
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("at least 4 transmitters"), "{err}");
    }

    #[test]
    fn invariant_violations_are_named() {
        let mut cfg = reference_scenario();
        cfg.dt_s = 0.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("dt_s"));

        let mut cfg = reference_scenario();
        cfg.shadowing_sigma_db = -1.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("shadowing_sigma_db"));

        let mut cfg = reference_scenario();
        cfg.controller.n_pl = 0.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("n_pl"));

        let mut cfg = reference_scenario();
        cfg.transmitters[0].d0_m = 0.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("d0"));

        let mut cfg = reference_scenario();
        cfg.duration_steps = 0;
        assert!(cfg.validate().is_err());
    }

    fn first_samples(mut rng: RngStream) -> Vec<u64> {
        (0..100).map(|_| rng.random::<u64>()).collect()
    }

    #[test]
    fn streams_are_deterministic_and_independent() {
        assert_eq!(first_samples(rng_stream(7, "sweep")), first_samples(rng_stream(7, "sweep")));
        assert_ne!(first_samples(rng_stream(7, "sweep")), first_samples(rng_stream(7, "imu")));
        assert_ne!(first_samples(rng_stream(7, "sweep")), first_samples(rng_stream(8, "sweep")));
    }

    #[test]
    #[should_panic]
    fn empty_label_is_rejected() {
        let _ = rng_stream(1, "");
    }

    #[test]
    fn labels() {
        assert_eq!(waypoint_label(0), "A");
        assert_eq!(waypoint_label(5), "F");
    }
}
