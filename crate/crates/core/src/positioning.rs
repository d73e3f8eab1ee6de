//! SOP relative positioning: path-loss ranging, linearised least-squares
//! multilateration and an extended Kalman filter fusing ranges with inertial
//! velocity.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::fmath;
use crate::scenario::{BandId, Position2D, ScenarioConfig, Transmitter};
use crate::sweep::BandMoments;

/// Ranges shorter than this are clamped.
pub const MIN_RANGE_M: f64 = 0.1;
/// Ranges longer than this are clamped.
pub const MAX_RANGE_M: f64 = 50_000.0;
/// Jacobian rows are dropped when the estimate is this close to a transmitter.
pub const COINCIDENT_TOLERANCE_M: f64 = 1e-6;
/// Added to every diagonal entry of R so it stays positive definite with
/// noiseless sweeps.
pub const MIN_RANGE_VARIANCE_M2: f64 = 1e-6;

/// Estimator-side transmitter positions, keyed by band.
pub type AnchorMap = BTreeMap<BandId, Position2D>;

pub fn anchors_from(transmitters: &[Transmitter]) -> AnchorMap {
    transmitters.iter().map(|t| (t.id, t.estimated_position())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeObservation {
    pub transmitter: BandId,
    pub distance_m: f64,
    pub band: BandId,
}

/// Position estimate and its covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavState {
    pub estimate: Position2D,
    pub covariance: Matrix2<f64>,
    pub step: usize,
}

impl NavState {
    pub fn new(estimate: Position2D, covariance: Matrix2<f64>, step: usize) -> Self {
        NavState {
            estimate,
            covariance,
            step,
        }
    }

    /// True when the covariance is symmetric and its eigenvalues are at least
    /// `-1e-9`.
    pub fn covariance_is_valid(&self) -> bool {
        let p = &self.covariance;
        let scale = p.abs().max().max(1.0);
        if (p[(0, 1)] - p[(1, 0)]).abs() > 1e-12 * scale {
            return false;
        }
        let (lo, _) = sym2_eigenvalues(p);
        lo >= -1e-9
    }

    pub fn trace(&self) -> f64 {
        self.covariance.trace()
    }
}

/// Eigenvalues (ascending) of a symmetric 2x2 matrix.
pub fn sym2_eigenvalues(m: &Matrix2<f64>) -> (f64, f64) {
    let a = m[(0, 0)];
    let d = m[(1, 1)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let mean = 0.5 * (a + d);
    let r = fmath::hypot(0.5 * (a - d), b);
    (mean - r, mean + r)
}

/// Diagonal measurement-noise model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RangeNoise {
    /// The same variance for every range.
    Constant { variance_m2: f64 },
    /// First-order propagation of RSS noise through the path-loss inverse:
    /// sigma_d = d ln10 sigma_rss / (10 n), plus a floor added in quadrature.
    PathLoss {
        rss_sigma_db: f64,
        n_pl: f64,
        floor_sigma_m: f64,
    },
}

impl RangeNoise {
    pub fn variance(&self, range_m: f64) -> f64 {
        match *self {
            RangeNoise::Constant { variance_m2 } => variance_m2,
            RangeNoise::PathLoss {
                rss_sigma_db,
                n_pl,
                floor_sigma_m,
            } => {
                let s = range_m * core::f64::consts::LN_10 * rss_sigma_db / (10.0 * n_pl);
                s * s + floor_sigma_m * floor_sigma_m + MIN_RANGE_VARIANCE_M2
            }
        }
    }
}

/// Filter matrices. H is recomputed from the geometry at every update.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfConfig {
    pub transition: Matrix2<f64>,
    pub process_noise: Matrix2<f64>,
    pub range_noise: RangeNoise,
    pub initial_covariance: Matrix2<f64>,
}

impl EkfConfig {
    /// Q = (sigma_v dt)^2 I, R from shadowing of the per-band sweep mean,
    /// P0 = sigma_0^2 I.
    pub fn from_scenario(config: &ScenarioConfig) -> Self {
        let q = config.imu_velocity_noise_sigma_mps * config.dt_s;
        let s0 = config.initial_position_sigma_m;
        // the filter sees the mean of `samples_per_band` shadowed samples
        let rss_sigma = config.shadowing_sigma_db / fmath::sqrt(config.samples_per_band as f64);
        EkfConfig {
            transition: Matrix2::identity(),
            process_noise: Matrix2::identity() * (q * q),
            range_noise: RangeNoise::PathLoss {
                rss_sigma_db: rss_sigma,
                n_pl: config.controller.n_pl,
                floor_sigma_m: config.range_noise_sigma_m,
            },
            initial_covariance: Matrix2::identity() * (s0 * s0),
        }
    }
}

/// Range from a band's mean RSS by inverting the log-distance model, clamped
/// to `[MIN_RANGE_M, MAX_RANGE_M]`.
pub fn invert_pathloss(rss_mean_dbm: f64, transmitter: &Transmitter, n_pl: f64) -> RangeObservation {
    debug_assert!(n_pl > 0.0);
    let raw = transmitter.d0_m * fmath::pow10((transmitter.ref_rss_dbm - rss_mean_dbm) / (10.0 * n_pl));
    let distance_m = if raw.is_nan() || raw < MIN_RANGE_M {
        log::warn!("band {}: range {raw} m clamped to {MIN_RANGE_M} m", transmitter.id);
        MIN_RANGE_M
    } else if raw > MAX_RANGE_M {
        log::warn!("band {}: range {raw} m clamped to {MAX_RANGE_M} m", transmitter.id);
        MAX_RANGE_M
    } else {
        raw
    };
    RangeObservation {
        transmitter: transmitter.id,
        distance_m,
        band: transmitter.id,
    }
}

fn anchor(anchors: &AnchorMap, id: BandId) -> Result<Position2D> {
    anchors.get(&id).copied().ok_or(Error::UnknownTransmitter(id))
}

/// Relative threshold on the singular values of the difference system.
const RANK_TOLERANCE: f64 = 1e-9;
const GAUSS_NEWTON_MAX_ITERS: usize = 25;

/// Linearised least-squares multilateration.
///
/// The first observation is the anchor; every other row is
/// `2 (p_i - p_1)^T p = |p_i|^2 - |p_1|^2 - d_i^2 + d_1^2`, solved by SVD. The
/// linear solution is then polished with Gauss-Newton on the range residuals
/// so the result is the minimiser of `sum (|p - p_i| - d_i)^2`.
pub fn multilaterate_lsq(observations: &[RangeObservation], anchors: &AnchorMap) -> Result<Position2D> {
    if observations.len() < 4 {
        return Err(Error::NotEnoughObservations {
            got: observations.len(),
            need: 4,
        });
    }
    let pts: Vec<(Vector2<f64>, f64)> = observations
        .iter()
        .map(|o| anchor(anchors, o.transmitter).map(|p| (p.to_vector(), o.distance_m)))
        .collect::<Result<_>>()?;

    let (p1, d1) = pts[0];
    let rows = pts.len() - 1;
    let mut a = DMatrix::<f64>::zeros(rows, 2);
    let mut b = DVector::<f64>::zeros(rows);
    for (r, &(pi, di)) in pts[1..].iter().enumerate() {
        let diff = (pi - p1) * 2.0;
        a[(r, 0)] = diff.x;
        a[(r, 1)] = diff.y;
        b[r] = pi.norm_squared() - p1.norm_squared() - di * di + d1 * d1;
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= RANK_TOLERANCE * smax {
        return Err(Error::DegenerateGeometry);
    }
    let linear = svd.solve(&b, 0.0).map_err(|_| Error::DegenerateGeometry)?;
    let linear = Vector2::new(linear[0], linear[1]);
    Ok(Position2D::from_vector(gauss_newton_polish(&pts, linear)))
}

fn range_cost(pts: &[(Vector2<f64>, f64)], p: &Vector2<f64>) -> f64 {
    pts.iter().map(|(pi, di)| (p - pi).norm() - di).map(|r| r * r).sum()
}

fn gauss_newton_polish(pts: &[(Vector2<f64>, f64)], start: Vector2<f64>) -> Vector2<f64> {
    let mut p = start;
    let mut cost = range_cost(pts, &p);
    for _ in 0..GAUSS_NEWTON_MAX_ITERS {
        let mut jtj = Matrix2::<f64>::zeros();
        let mut jtr = Vector2::<f64>::zeros();
        for (pi, di) in pts {
            let delta = p - pi;
            let range = delta.norm();
            if range <= COINCIDENT_TOLERANCE_M {
                continue;
            }
            let j = delta / range;
            jtj += j * j.transpose();
            jtr += j * (range - di);
        }
        let Some(inv) = jtj.try_inverse() else { break };
        let step = -(inv * jtr);
        // backtrack until the cost does not increase
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..20 {
            let cand = p + step * scale;
            let c = range_cost(pts, &cand);
            if c <= cost {
                accepted = Some((cand, c));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, c)) = accepted else { break };
        let moved = (cand - p).norm();
        p = cand;
        cost = c;
        if moved < 1e-12 {
            break;
        }
    }
    p
}

/// Time update: `p <- F p + u dt`, `P <- F P F^T + Q`.
pub fn ekf_predict(state: &NavState, u: Vector2<f64>, dt: f64, cfg: &EkfConfig) -> NavState {
    let f = cfg.transition;
    let p = f * state.estimate.to_vector() + u * dt;
    let cov = f * state.covariance * f.transpose() + cfg.process_noise;
    NavState {
        estimate: Position2D::from_vector(p),
        covariance: symmetrize(&cov),
        step: state.step + 1,
    }
}

fn symmetrize(m: &Matrix2<f64>) -> Matrix2<f64> {
    (m + m.transpose()) * 0.5
}

/// Predicted range to a transmitter.
pub fn range_model(p: &Position2D, transmitter: &Position2D) -> f64 {
    p.distance(transmitter)
}

/// Row of dh/dp for one transmitter, or `None` when the point sits on the
/// transmitter.
pub fn range_jacobian(p: &Position2D, transmitter: &Position2D) -> Option<Vector2<f64>> {
    let delta = *p - *transmitter;
    let r = delta.norm();
    (r > COINCIDENT_TOLERANCE_M).then(|| delta / r)
}

/// Result of a measurement update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub state: NavState,
    /// `d_i - h_i(p)` at the prior estimate, for every range actually used.
    pub innovations: Vec<(BandId, f64)>,
}

/// Measurement update with range observations.
pub fn ekf_update(
    state: &NavState,
    ranges: &[RangeObservation],
    anchors: &AnchorMap,
    cfg: &EkfConfig,
) -> Result<NavState> {
    ekf_update_iterated(state, ranges, anchors, cfg, 1).map(|o| o.state)
}

/// Iterated EKF update: re-linearises `h` about the running estimate while
/// keeping the prior fixed. One iteration is the ordinary EKF update
/// `p <- p + K (d - h(p))`, `P <- (I - K H) P`, with `P` symmetrised after.
pub fn ekf_update_iterated(
    state: &NavState,
    ranges: &[RangeObservation],
    anchors: &AnchorMap,
    cfg: &EkfConfig,
    iterations: usize,
) -> Result<UpdateOutcome> {
    let prior = state.estimate.to_vector();
    let p_prior = state.covariance;
    let mut lin_point = state.estimate;
    let mut result = None;
    let mut innovations = Vec::new();

    for iter in 0..iterations.max(1) {
        let mut rows: Vec<(BandId, Vector2<f64>, f64, f64)> = Vec::with_capacity(ranges.len());
        for obs in ranges {
            let tx = anchor(anchors, obs.transmitter)?;
            match range_jacobian(&lin_point, &tx) {
                Some(h) => rows.push((obs.transmitter, h, range_model(&lin_point, &tx), obs.distance_m)),
                None => log::warn!("transmitter {} coincides with the estimate; row dropped", obs.transmitter),
            }
        }
        if rows.is_empty() {
            log::warn!("no usable ranges at step {}; update skipped", state.step);
            return Ok(UpdateOutcome {
                state: *state,
                innovations,
            });
        }
        let m = rows.len();
        let mut h = DMatrix::<f64>::zeros(m, 2);
        let mut y = DVector::<f64>::zeros(m);
        let mut r = DMatrix::<f64>::zeros(m, m);
        let offset = prior - lin_point.to_vector();
        for (i, (_, hi, pred, meas)) in rows.iter().enumerate() {
            h[(i, 0)] = hi.x;
            h[(i, 1)] = hi.y;
            // relinearised innovation; equals d - h(p) on the first pass
            y[i] = meas - pred - hi.dot(&offset);
            r[(i, i)] = cfg.range_noise.variance(*meas);
        }
        if iter == 0 {
            innovations = rows.iter().map(|(id, _, pred, meas)| (*id, meas - pred)).collect();
        }
        let p_dyn = DMatrix::from_column_slice(2, 2, p_prior.as_slice());
        let pht = &p_dyn * h.transpose();
        let s = &h * &pht + &r;
        let chol = s.cholesky().ok_or(Error::SingularInnovation)?;
        // K = P H^T S^-1, computed as (S^-1 H P)^T
        let k = chol.solve(&pht.transpose()).transpose();
        if !k.iter().all(|v| v.is_finite()) {
            return Err(Error::SingularInnovation);
        }
        let dx = &k * &y;
        let post = prior + Vector2::new(dx[0], dx[1]);
        let kh = &k * &h;
        let kh2 = Matrix2::new(kh[(0, 0)], kh[(0, 1)], kh[(1, 0)], kh[(1, 1)]);
        let cov = (Matrix2::identity() - kh2) * p_prior;
        lin_point = Position2D::from_vector(post);
        result = Some(NavState {
            estimate: lin_point,
            covariance: symmetrize(&cov),
            step: state.step,
        });
    }
    Ok(UpdateOutcome {
        state: result.unwrap_or(*state),
        innovations,
    })
}

/// Output of one positioning step.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionFix {
    pub nav: NavState,
    /// Least-squares fix from this sweep alone.
    pub lsq: Position2D,
    pub ranges: Vec<RangeObservation>,
    pub innovations: Vec<(BandId, f64)>,
}

/// Everything positioning needs that does not change during a run.
#[derive(Debug, Clone)]
pub struct PositioningContext {
    pub transmitters: BTreeMap<BandId, Transmitter>,
    pub anchors: AnchorMap,
    pub selected: Vec<BandId>,
    pub ekf: EkfConfig,
    pub n_pl: f64,
}

impl PositioningContext {
    pub fn new(config: &ScenarioConfig, selected: Vec<BandId>) -> Self {
        PositioningContext {
            transmitters: config.transmitters.iter().map(|t| (t.id, t.clone())).collect(),
            anchors: anchors_from(&config.transmitters),
            selected,
            ekf: EkfConfig::from_scenario(config),
            n_pl: config.controller.n_pl,
        }
    }

    /// Ranges for the selected bands from one sweep's moments.
    pub fn ranges(&self, moments: &BandMoments) -> Result<Vec<RangeObservation>> {
        self.selected
            .iter()
            .map(|band| {
                let rss = *moments.mean.get(band).ok_or(Error::MissingBand(*band))?;
                let tx = self.transmitters.get(band).ok_or(Error::UnknownTransmitter(*band))?;
                // ranging uses the estimator's view of the transmitter
                let mut believed = tx.clone();
                believed.position = tx.estimated_position();
                Ok(invert_pathloss(rss, &believed, self.n_pl))
            })
            .collect()
    }
}

/// LSQ / EKF disagreement above which a warning is logged.
const LSQ_MONITOR_WARN_M: f64 = 50.0;

/// One RPS positioning step: path-loss ranges, an LSQ fix, then EKF predict
/// and update.
///
/// With no prior state the filter is initialised at the LSQ fix with the
/// configured initial covariance and only the update is applied; afterwards
/// the LSQ fix serves as a consistency monitor.
pub fn estimate_position(
    moments: &BandMoments,
    state: Option<&NavState>,
    u: Vector2<f64>,
    dt: f64,
    ctx: &PositioningContext,
) -> Result<PositionFix> {
    let ranges = ctx.ranges(moments)?;
    let lsq = multilaterate_lsq(&ranges, &ctx.anchors)?;
    let predicted = match state {
        None => NavState::new(lsq, ctx.ekf.initial_covariance, moments.step),
        Some(s) => ekf_predict(s, u, dt, &ctx.ekf),
    };
    let outcome = ekf_update_iterated(&predicted, &ranges, &ctx.anchors, &ctx.ekf, 1)?;
    let gap = outcome.state.estimate.distance(&lsq);
    if gap > LSQ_MONITOR_WARN_M {
        log::warn!("step {}: EKF and LSQ fixes disagree by {gap:.1} m", moments.step);
    }
    Ok(PositionFix {
        nav: outcome.state,
        lsq,
        ranges,
        innovations: outcome.innovations,
    })
}
