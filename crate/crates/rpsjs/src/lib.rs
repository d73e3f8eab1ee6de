//! File formats, batch execution and log replay around `rpsjs-core`.

pub mod batch;
pub mod error;
pub mod files;
pub mod output;
pub mod replay;

use std::path::Path;

use rpsjs_core::controller::RadioMode;
use rpsjs_core::harness::{compute_metrics, GpsSample, MetricsOptions, MetricsReport, Segment, TrajectoryInput};
use rpsjs_core::Position2D;

use crate::error::{Result, RunError};
use crate::files::{read_csv, GpsRow, TrajectoryRow};

pub use crate::error::RunError as Error;

fn parse_mode(s: &str) -> Option<RadioMode> {
    match s {
        "RPS_ACTIVE" => Some(RadioMode::RpsActive),
        "JAMMING" => Some(RadioMode::Jamming),
        _ => None,
    }
}

/// Metrics from trajectory files. Rows are matched by step; both files must
/// cover the same steps. Switching statistics are included when every
/// estimate row carries a mode.
pub fn metrics_from_files(
    truth_path: &Path,
    est_path: &Path,
    gps_path: Option<&Path>,
    segments: &[Segment],
) -> Result<MetricsReport> {
    let truth: Vec<TrajectoryRow> = read_csv(truth_path)?;
    let est: Vec<TrajectoryRow> = read_csv(est_path)?;
    if truth.len() != est.len() || truth.iter().zip(&est).any(|(t, e)| t.step != e.step) {
        return Err(RunError::parse(est_path, None, "estimate steps do not match the truth steps"));
    }
    let gps = match gps_path {
        Some(path) => {
            let rows: Vec<GpsRow> = read_csv(path)?;
            if rows.len() != truth.len() || rows.iter().zip(&truth).any(|(g, t)| g.step != t.step) {
                return Err(RunError::parse(path, None, "GPS steps do not match the truth steps"));
            }
            Some(
                rows.iter()
                    .map(|g| GpsSample {
                        reported: g.x_m.zip(g.y_m).map(|(x, y)| Position2D::new(x, y)),
                        fresh: g.fix,
                    })
                    .collect::<Vec<_>>(),
            )
        }
        None => None,
    };
    let modes: Option<Vec<RadioMode>> = est.iter().map(|r| r.mode.as_deref().and_then(parse_mode)).collect();
    // segment bounds are steps; convert them to row indices
    let index_of = |step: usize| truth.iter().position(|t| t.step == step);
    let mut indexed = Vec::with_capacity(segments.len());
    for s in segments {
        let (Some(a), Some(b)) = (index_of(s.start_step), index_of(s.end_step)) else {
            return Err(RunError::Usage(format!("segment {} refers to steps outside the log", s.label)));
        };
        indexed.push(Segment {
            label: s.label.clone(),
            start_step: a,
            end_step: b,
        });
    }
    let truth_pos: Vec<Position2D> = truth.iter().map(|r| Position2D::new(r.x_m, r.y_m)).collect();
    let est_pos: Vec<Position2D> = est.iter().map(|r| Position2D::new(r.x_m, r.y_m)).collect();
    let report = compute_metrics(
        &TrajectoryInput {
            truth: &truth_pos,
            relative: &est_pos,
            gps: gps.as_deref(),
            modes: modes.as_deref(),
        },
        &indexed,
        &MetricsOptions::default(),
    )?;
    Ok(report)
}
