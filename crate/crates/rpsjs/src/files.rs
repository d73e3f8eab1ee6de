//! JSON and CSV file formats.
//!
//! Every CSV file carries a header row; columns are matched by name, so
//! extra columns are ignored and missing ones are reported with the line
//! that lacks them.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use rpsjs_core::harness::{JamPattern, Segment};
use rpsjs_core::{ScenarioConfig, Transmitter};

use crate::error::{Result, RunError};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| RunError::io(path, e))
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| {
        let line = (e.line() > 0).then_some(e.line() as u64);
        RunError::parse(path, line, e.to_string())
    })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| RunError::parse(path, None, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| RunError::io(path, e))
}

/// Loads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = load_json(path)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn save_scenario(path: &Path, cfg: &ScenarioConfig) -> Result<()> {
    write_json(path, cfg)
}

pub fn load_transmitters(path: &Path) -> Result<Vec<Transmitter>> {
    load_json(path)
}

pub fn load_segments(path: &Path) -> Result<Vec<Segment>> {
    load_json(path)
}

pub fn load_pattern(path: &Path) -> Result<JamPattern> {
    load_json(path)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| RunError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row.map_err(|e| {
            let line = e.position().map(|p| p.line());
            let message = match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                _ => e.to_string(),
            };
            RunError::parse(path, line, message)
        })?);
    }
    Ok(rows)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_write_error(path, e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| csv_write_error(path, e))?;
    }
    writer.flush().map_err(|e| RunError::io(path, e))
}

fn csv_write_error(path: &Path, e: csv::Error) -> RunError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => RunError::io(path, io),
        other => RunError::parse(path, None, format!("{other:?}")),
    }
}

/// Sweep log: `step,band,rss_dbm`, one row per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub step: usize,
    pub band: u32,
    pub rss_dbm: f64,
}

/// Detection log: `step,w_rp_px,center_offset_px`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub step: usize,
    pub w_rp_px: f64,
    pub center_offset_px: f64,
}

/// Inertial log: `step,dt_s,vx_mps,vy_mps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuRow {
    pub step: usize,
    pub dt_s: f64,
    pub vx_mps: f64,
    pub vy_mps: f64,
}

/// Estimated trajectory: `step,x_m,y_m,p11,p12,p22,mode`. Only the first
/// three columns are required when reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub x_m: f64,
    pub y_m: f64,
    #[serde(default)]
    pub p11: Option<f64>,
    #[serde(default)]
    pub p12: Option<f64>,
    #[serde(default)]
    pub p22: Option<f64>,
    #[serde(default)]
    pub mode: Option<String>,
}

/// Ground truth: `step,x_m,y_m,rogue_x_m,rogue_y_m,rogue_altitude_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub step: usize,
    pub x_m: f64,
    pub y_m: f64,
    pub rogue_x_m: f64,
    pub rogue_y_m: f64,
    pub rogue_altitude_m: f64,
}

/// Reported GPS trajectory: `step,x_m,y_m,fix,held`; position columns are
/// empty before the first fix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsRow {
    pub step: usize,
    pub x_m: Option<f64>,
    pub y_m: Option<f64>,
    pub fix: bool,
    pub held: bool,
}

/// Mode transitions: `step,from_mode,to_mode,cause,d_c_m,e_m_m,t_d_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub step: usize,
    pub from_mode: String,
    pub to_mode: String,
    pub cause: String,
    pub d_c_m: Option<f64>,
    pub e_m_m: f64,
    pub t_d_m: Option<f64>,
}

/// GPS link under jamming: `step,js_db,n_s,fix_available,target`. `js_db`
/// is `-inf` while the jammer is silent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JamLinkRow {
    pub step: usize,
    pub js_db: f64,
    pub n_s: u32,
    pub fix_available: bool,
    pub target: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn temp_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_errors_name_the_line() {
        let f = temp_file("step,band,rss_dbm\n0,1,-50\n1,2,oops\n");
        let err = read_csv::<SweepRow>(f.path()).unwrap_err();
        assert!(matches!(err, RunError::Parse { line: Some(3), .. }), "{err}");
    }

    #[test]
    fn missing_column_is_a_parse_error() {
        let f = temp_file("step,band\n0,1\n");
        let err = read_csv::<SweepRow>(f.path()).unwrap_err();
        assert!(err.to_string().contains("rss_dbm"), "{err}");
    }

    #[test]
    fn trajectory_extra_columns_optional() {
        let f = temp_file("step,x_m,y_m\n0,1.5,2\n");
        let rows = read_csv::<TrajectoryRow>(f.path()).unwrap();
        assert_eq!(rows[0].x_m, 1.5);
        assert_eq!(rows[0].mode, None);
    }

    #[test]
    fn json_errors_name_the_line() {
        let f = temp_file("{\n  \"duration_steps\": 10,\n  oops\n}\n");
        let err = load_scenario(f.path()).unwrap_err();
        assert!(matches!(err, RunError::Parse { line: Some(3), .. }), "{err}");
    }

    #[test]
    fn non_finite_js_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("jam.csv");
        let row = JamLinkRow {
            step: 0,
            js_db: f64::NEG_INFINITY,
            n_s: 12,
            fix_available: true,
            target: "rogue".into(),
        };
        write_csv(&path, [&row]).unwrap();
        assert_eq!(read_csv::<JamLinkRow>(&path).unwrap(), vec![row]);
    }
}
