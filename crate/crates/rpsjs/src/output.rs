//! Files written by `simulate`.

use std::fs;
use std::path::Path;

use rpsjs_core::harness::{MetricsOptions, MetricsReport, SimLog};

use crate::error::{Result, RunError};
use crate::files::{write_csv, write_json, EventRow, GpsRow, JamLinkRow, TrajectoryRow, TruthRow};

pub const TRAJECTORIES_CSV: &str = "trajectories.csv";
pub const TRUTH_CSV: &str = "truth.csv";
pub const GPS_CSV: &str = "gps.csv";
pub const EVENTS_CSV: &str = "events.csv";
pub const JAMLINK_CSV: &str = "jamlink.csv";
pub const METRICS_JSON: &str = "metrics.json";

pub fn trajectory_rows(log: &SimLog) -> Vec<TrajectoryRow> {
    log.records
        .iter()
        .map(|r| {
            let p = r.estimate.covariance;
            TrajectoryRow {
                step: r.step,
                x_m: r.estimate.estimate.x,
                y_m: r.estimate.estimate.y,
                p11: Some(p[(0, 0)]),
                p12: Some(p[(0, 1)]),
                p22: Some(p[(1, 1)]),
                mode: Some(r.mode.as_str().to_string()),
            }
        })
        .collect()
}

pub fn truth_rows(log: &SimLog) -> Vec<TruthRow> {
    log.records
        .iter()
        .map(|r| TruthRow {
            step: r.step,
            x_m: r.pursuer_truth.x,
            y_m: r.pursuer_truth.y,
            rogue_x_m: r.rogue_truth.x,
            rogue_y_m: r.rogue_truth.y,
            rogue_altitude_m: r.rogue_altitude_m,
        })
        .collect()
}

pub fn gps_rows(log: &SimLog) -> Vec<GpsRow> {
    log.records
        .iter()
        .map(|r| GpsRow {
            step: r.step,
            x_m: r.gps_report.map(|p| p.x),
            y_m: r.gps_report.map(|p| p.y),
            fix: r.gps_fix.is_some(),
            held: r.gps_held,
        })
        .collect()
}

pub fn event_rows(log: &SimLog) -> Vec<EventRow> {
    log.events
        .iter()
        .map(|e| EventRow {
            step: e.step,
            from_mode: e.from.as_str().to_string(),
            to_mode: e.to.as_str().to_string(),
            cause: e.cause.as_str().to_string(),
            d_c_m: e.d_c_m,
            e_m_m: e.e_m_m,
            t_d_m: e.t_d_m,
        })
        .collect()
}

/// Two rows per step: the rogue's receiver, then the pursuer's own.
pub fn jamlink_rows(log: &SimLog) -> Vec<JamLinkRow> {
    log.records
        .iter()
        .flat_map(|r| {
            [("rogue", &r.rogue_link), ("pursuer", &r.pursuer_link)].map(|(target, l)| JamLinkRow {
                step: r.step,
                js_db: l.js_db,
                n_s: l.n_s,
                fix_available: l.fix_available,
                target: target.to_string(),
            })
        })
        .collect()
}

/// Writes every output of one run into `dir` and returns its metrics.
pub fn write_simulation(dir: &Path, log: &SimLog) -> Result<MetricsReport> {
    fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    write_csv(&dir.join(TRAJECTORIES_CSV), trajectory_rows(log))?;
    write_csv(&dir.join(TRUTH_CSV), truth_rows(log))?;
    write_csv(&dir.join(GPS_CSV), gps_rows(log))?;
    write_csv(&dir.join(EVENTS_CSV), event_rows(log))?;
    write_csv(&dir.join(JAMLINK_CSV), jamlink_rows(log))?;
    let metrics = log.metrics(&log.route_segments(), &MetricsOptions::default())?;
    write_json(&dir.join(METRICS_JSON), &metrics)?;
    Ok(metrics)
}
