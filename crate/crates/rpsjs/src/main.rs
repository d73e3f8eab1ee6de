use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use rpsjs::batch::{batch_run, summarize};
use rpsjs::error::{Result, RunError};
use rpsjs::files::{load_json, load_pattern, load_scenario, load_segments, load_transmitters, read_csv, write_csv, write_json};
use rpsjs::output::write_simulation;
use rpsjs::replay::{replay, vision_ranges};
use rpsjs_core::harness::{calibrate_jamming, pattern_outcomes, run_scenario, CalibrationGrid};
use rpsjs_core::scenario::reference_scenario;
use rpsjs_core::ScenarioConfig;

#[derive(Parser)]
#[command(name = "rpsjs", version, about = "Counter-drone positioning and jamming simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one engagement and write trajectories, events, jam link and metrics.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the seed in the scenario file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate a trajectory from recorded sweep and inertial logs.
    Replay {
        #[arg(long)]
        sweeps: PathBuf,
        #[arg(long)]
        imu: PathBuf,
        /// JSON list of transmitters.
        #[arg(long)]
        transmitters: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Scenario file supplying noise, selection and camera settings;
        /// defaults to the reference scenario.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Detection log to range with the camera model.
        #[arg(long)]
        detections: Option<PathBuf>,
    },
    /// Compare an estimated trajectory against truth.
    Metrics {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        est: PathBuf,
        /// JSON list of `{label, start_step, end_step}` segments.
        #[arg(long)]
        segments: Option<PathBuf>,
        /// Reported GPS trajectory to compare as well.
        #[arg(long)]
        gps: Option<PathBuf>,
        /// Write metrics here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the satellite-loss parameters to a jamming outcome pattern.
    CalibrateJam {
        #[arg(long)]
        pattern: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one scenario over a range of seeds.
    Batch {
        #[arg(long)]
        scenario: PathBuf,
        /// Inclusive seed range `k1..k2`, or a single seed.
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || RunError::Usage(format!("invalid seed range '{s}', expected k1..k2"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a.trim(), b.trim().trim_start_matches('=')),
        None => (s.trim(), s.trim()),
    };
    let a: u64 = a.parse().map_err(|_| bad())?;
    let b: u64 = b.parse().map_err(|_| bad())?;
    if b < a {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { scenario, seed, out } => {
            let mut cfg = load_scenario(&scenario)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let log = run_scenario(&cfg)?;
            let m = write_simulation(&out, &log)?;
            println!(
                "{}",
                json!({
                    "steps": m.steps,
                    "relative_mae_m": m.relative.mae_m,
                    "gps_mae_m": m.gps.as_ref().map(|g| g.reported.mae_m),
                    "switch_count": m.switch_count,
                    "out": out.display().to_string(),
                })
            );
        }
        Command::Replay {
            sweeps,
            imu,
            transmitters,
            out,
            params,
            detections,
        } => {
            let params: ScenarioConfig = match params {
                Some(p) => load_json(&p)?,
                None => reference_scenario(),
            };
            let rows = replay(&read_csv(&sweeps)?, &read_csv(&imu)?, load_transmitters(&transmitters)?, &params)?;
            create_dir(&out)?;
            write_csv(&out.join(rpsjs::output::TRAJECTORIES_CSV), &rows)?;
            if let Some(d) = detections {
                write_csv(&out.join("vision.csv"), vision_ranges(&read_csv(&d)?, &params)?)?;
            }
            println!("{}", json!({ "estimates": rows.len(), "out": out.display().to_string() }));
        }
        Command::Metrics {
            truth,
            est,
            segments,
            gps,
            out,
        } => {
            let segments = match segments {
                Some(p) => load_segments(&p)?,
                None => Vec::new(),
            };
            let report = rpsjs::metrics_from_files(&truth, &est, gps.as_deref(), &segments)?;
            match out {
                Some(p) => write_json(&p, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report).expect("metrics serialise")),
            }
        }
        Command::CalibrateJam { pattern, out } => {
            let pattern = load_pattern(&pattern)?;
            let params = calibrate_jamming(&pattern, &CalibrationGrid::default())?;
            write_json(&out, &params)?;
            println!(
                "{}",
                json!({
                    "js_threshold_db": params.js_threshold_db,
                    "sat_loss_slope_per_db": params.sat_loss_slope,
                    "fix_kept": pattern_outcomes(&params, &pattern.cells),
                })
            );
        }
        Command::Batch { scenario, seeds, out } => {
            let base = load_scenario(&scenario)?;
            let configs: Vec<ScenarioConfig> = parse_seeds(&seeds)?
                .into_iter()
                .map(|seed| ScenarioConfig { seed, ..base.clone() })
                .collect();
            let results = batch_run(&configs);
            create_dir(&out)?;
            for (cfg, r) in configs.iter().zip(&results) {
                if let Ok(m) = r {
                    write_json(&out.join(format!("metrics_seed_{}.json", cfg.seed)), m)?;
                }
            }
            let summary = summarize(&configs, &results);
            write_json(&out.join("summary.json"), &summary)?;
            println!("{}", serde_json::to_string(&summary).expect("summary serialises"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.report()).expect("error report serialises"));
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seeds("1..3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("5").unwrap(), vec![5]);
        assert_eq!(parse_seeds("0..=1").unwrap(), vec![0, 1]);
        assert!(parse_seeds("3..1").is_err());
        assert!(parse_seeds("a..b").is_err());
    }
}
