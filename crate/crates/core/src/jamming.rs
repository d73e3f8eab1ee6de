//! GPS link of a receiver under jamming, at power level.
//!
//! Jam power follows the two-ray ground-reflection law, attenuated by a
//! `cos(elevation)^k` antenna roll-off. The resulting J/S ratio drives a
//! piecewise-linear satellite-loss model that decides fix availability.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::fmath;
use crate::scenario::{JamParams, Position2D};

/// Thermal noise floor of a 2 MHz L1 front end, dBm.
pub const GPS_NOISE_FLOOR_DBM: f64 = -111.0;

/// Jammer-to-receiver geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JamGeometry {
    /// Absolute (slant) distance between jammer and receiver.
    pub distance_m: f64,
    pub altitude_diff_m: f64,
    pub elevation_deg: f64,
}

impl JamGeometry {
    /// Geometry from horizontal separation and altitude difference; the
    /// elevation is the angle of the line of sight above the horizontal.
    pub fn from_offsets(horizontal_m: f64, altitude_diff_m: f64) -> Self {
        JamGeometry {
            distance_m: fmath::hypot(horizontal_m, altitude_diff_m),
            altitude_diff_m,
            elevation_deg: fmath::atan2(altitude_diff_m.abs(), horizontal_m.abs()).to_degrees(),
        }
    }

    /// Geometry of a field-test cell, taking the recorded elevation label at
    /// face value: jammer at ground level, receiver at `altitude_m`,
    /// `horizontal_m` apart.
    pub fn labeled(altitude_m: f64, horizontal_m: f64, elevation_deg: f64) -> Self {
        JamGeometry {
            distance_m: fmath::hypot(horizontal_m, altitude_m),
            altitude_diff_m: altitude_m,
            elevation_deg,
        }
    }
}

/// Two-ray received power in mW: P_t G_t G_r h_t^2 h_r^2 / d^4.
pub fn two_ray_rss(params: &JamParams, distance_m: f64) -> f64 {
    let h = params.tx_height_m * params.tx_height_m * params.rx_height_m * params.rx_height_m;
    let d2 = distance_m * distance_m;
    params.tx_power_mw * params.tx_gain * params.rx_gain * h / (d2 * d2)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * fmath::log10(mw)
}

/// Jam power at the receiver after the elevation roll-off, dBm.
pub fn jam_power_dbm(params: &JamParams, geometry: &JamGeometry) -> f64 {
    let c = fmath::cos(geometry.elevation_deg.to_radians());
    let roll_off_db = if c <= 1e-12 {
        if params.elevation_exponent == 0.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        10.0 * params.elevation_exponent * fmath::log10(c)
    };
    mw_to_dbm(two_ray_rss(params, geometry.distance_m)) + roll_off_db
}

/// J/S ratio in dB.
pub fn jam_to_signal(params: &JamParams, geometry: &JamGeometry) -> f64 {
    jam_power_dbm(params, geometry) - params.gps_signal_power_dbm
}

/// Satellites tracked for a given J/S without the random jitter.
pub fn satellites_core(js_db: f64, params: &JamParams) -> u32 {
    let excess = (js_db - params.js_threshold_db).max(0.0);
    let lost = fmath::floor(excess * params.sat_loss_slope);
    let n = params.n_nominal as f64 - lost;
    n.clamp(0.0, params.n_nominal as f64) as u32
}

/// Satellites tracked: the jitter-free count minus a fair 0/1 jitter,
/// clamped to `[0, n_nominal]`.
pub fn satellites_visible<R: Rng + ?Sized>(js_db: f64, params: &JamParams, rng: &mut R) -> u32 {
    let jitter = u32::from(rng.random_bool(0.5));
    satellites_core(js_db, params).saturating_sub(jitter)
}

/// Receiver-side power bookkeeping for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsLinkState {
    pub signal_dbm: f64,
    /// `-inf` when the jammer is silent.
    pub jam_dbm: f64,
    pub noise_dbm: f64,
    pub js_db: f64,
    pub n_s: u32,
    pub fix_available: bool,
}

/// Evaluates the link; `geometry` is `None` while the jammer is off.
pub fn evaluate_link<R: Rng + ?Sized>(params: &JamParams, geometry: Option<&JamGeometry>, rng: &mut R) -> GpsLinkState {
    let jam_dbm = geometry.map_or(f64::NEG_INFINITY, |g| jam_power_dbm(params, g));
    let js_db = jam_dbm - params.gps_signal_power_dbm;
    let n_s = satellites_visible(js_db, params, rng);
    GpsLinkState {
        signal_dbm: params.gps_signal_power_dbm,
        jam_dbm,
        noise_dbm: GPS_NOISE_FLOOR_DBM,
        js_db,
        n_s,
        fix_available: n_s >= params.fix_min_sats,
    }
}

/// GPS fix: truth plus isotropic Gaussian error whose sigma scales with
/// `n_nominal / max(n_s, fix_min)`; `None` without a fix.
pub fn gps_position_fix<R: Rng + ?Sized>(
    truth: Position2D,
    link: &GpsLinkState,
    params: &JamParams,
    gps_noise_sigma_m: f64,
    rng: &mut R,
) -> Option<Position2D> {
    if !link.fix_available {
        return None;
    }
    let sigma = gps_noise_sigma_m * params.n_nominal as f64 / link.n_s.max(params.fix_min_sats) as f64;
    let zx: f64 = rng.sample(StandardNormal);
    let zy: f64 = rng.sample(StandardNormal);
    Some(Position2D::new(truth.x + sigma * zx, truth.y + sigma * zy))
}
