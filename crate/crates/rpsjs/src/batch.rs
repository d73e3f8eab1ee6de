//! Independent runs over many configurations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rpsjs_core::harness::{run_scenario, MetricsOptions, MetricsReport};
use rpsjs_core::ScenarioConfig;

/// Runs every config and computes its metrics over the route segments.
/// Results keep the input order; a failing run does not stop the others.
pub fn batch_run(configs: &[ScenarioConfig]) -> Vec<Result<MetricsReport, rpsjs_core::Error>> {
    configs
        .par_iter()
        .map(|cfg| {
            let log = run_scenario(cfg)?;
            log.metrics(&log.route_segments(), &MetricsOptions::default())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchFailure {
    pub index: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub runs: usize,
    pub succeeded: usize,
    pub failures: Vec<BatchFailure>,
    pub seeds: Vec<u64>,
    pub median_relative_mae_m: Option<f64>,
    pub median_gps_mae_m: Option<f64>,
    pub median_relative_within_threshold: Option<f64>,
    pub median_gps_above_threshold: Option<f64>,
    pub median_switch_count: Option<f64>,
    pub mean_switch_count: Option<f64>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

pub fn summarize(configs: &[ScenarioConfig], results: &[Result<MetricsReport, rpsjs_core::Error>]) -> BatchSummary {
    let ok: Vec<&MetricsReport> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let failures = results
        .iter()
        .enumerate()
        .filter_map(|(index, r)| {
            r.as_ref().err().map(|e| BatchFailure {
                index,
                seed: configs[index].seed,
                message: e.to_string(),
            })
        })
        .collect();
    let collect = |f: &dyn Fn(&MetricsReport) -> Option<f64>| ok.iter().filter_map(|m| f(m)).collect::<Vec<f64>>();
    let switches = collect(&|m| Some(m.switch_count as f64));
    BatchSummary {
        runs: results.len(),
        succeeded: ok.len(),
        failures,
        seeds: configs.iter().map(|c| c.seed).collect(),
        median_relative_mae_m: median(&collect(&|m| Some(m.relative.mae_m))),
        median_gps_mae_m: median(&collect(&|m| m.gps.as_ref().map(|g| g.reported.mae_m))),
        median_relative_within_threshold: median(&collect(&|m| Some(m.relative.fraction_within_threshold))),
        median_gps_above_threshold: median(&collect(&|m| {
            m.gps.as_ref().map(|g| 1.0 - g.reported.fraction_within_threshold)
        })),
        median_switch_count: median(&switches),
        mean_switch_count: (!switches.is_empty()).then(|| switches.iter().sum::<f64>() / switches.len() as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_cases() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
