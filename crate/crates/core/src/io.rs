//! Plain-text artifacts: trajectory and coverage tables, run summaries and
//! the run manifest.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{wrap_angle, Trajectory, VehicleState};
use crate::error::{Error, Result};
use crate::risk::grid::CoverageGrid;

/// Header of the trajectory table.
pub const TRAJECTORY_HEADER: [&str; 7] = ["vehicle_id", "t_s", "x_m", "y_m", "psi_rad", "r_rad_s", "rudder_rad"];

/// Header of the coverage table.
pub const COVERAGE_HEADER: [&str; 5] = ["cell_x_m", "cell_y_m", "exposure", "seen", "valid"];

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format { path: path.display().to_string(), message: message.into() }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    format_error(path, e.to_string())
}

/// Writes every vehicle's samples, one row per sample. Headings are wrapped
/// to `(-pi, pi]`; numbers use the shortest representation that reads back
/// to the same value.
pub fn write_trajectories(path: &Path, trajs: &[Trajectory]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(TRAJECTORY_HEADER).map_err(|e| csv_error(path, e))?;
    for (v, t) in trajs.iter().enumerate() {
        for (i, s) in t.states.iter().enumerate() {
            let rudder = t.rudder.get(i).copied().unwrap_or(0.0);
            let time = i as f64 * t.dt;
            w.write_record([
                v.to_string(),
                time.to_string(),
                s.x.to_string(),
                s.y.to_string(),
                wrap_angle(s.psi).to_string(),
                s.r.to_string(),
                rudder.to_string(),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory table written by [`write_trajectories`].
///
/// Rows of one vehicle must be contiguous, start at `t = 0` and be evenly
/// spaced in time; vehicle ids must run `0, 1, ...`. Errors name the row
/// (1-based, header excluded) and column at fault.
pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != TRAJECTORY_HEADER {
        return Err(format_error(path, format!("expected header {}", TRAJECTORY_HEADER.join(","))));
    }
    let mut rows: Vec<(usize, f64, VehicleState, f64)> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| format_error(path, format!("row {row}: {e}")))?;
        let num = |c: usize| -> Result<f64> {
            let field = rec.get(c).unwrap_or("");
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| format_error(path, format!("row {row}, column {}: '{field}' is not a number", TRAJECTORY_HEADER[c])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format_error(path, format!("row {row}, column {}: value is not finite", TRAJECTORY_HEADER[c])))
            }
        };
        let id_field = rec.get(0).unwrap_or("");
        let id: usize = id_field
            .trim()
            .parse()
            .map_err(|_| format_error(path, format!("row {row}, column vehicle_id: '{id_field}' is not a vehicle index")))?;
        rows.push((id, num(1)?, VehicleState::new(num(2)?, num(3)?, num(4)?, num(5)?), num(6)?));
    }
    if rows.is_empty() {
        return Err(format_error(path, "no trajectory rows"));
    }
    let mut out: Vec<Trajectory> = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let id = rows[start].0;
        if id != out.len() {
            return Err(format_error(
                path,
                format!("row {}, column vehicle_id: expected vehicle {}, found {id}", start + 1, out.len()),
            ));
        }
        let end = rows[start..].iter().position(|r| r.0 != id).map_or(rows.len(), |p| start + p);
        let block = &rows[start..end];
        if block[0].1 != 0.0 {
            return Err(format_error(path, format!("row {}, column t_s: vehicle {id} must start at t = 0", start + 1)));
        }
        let n = block.len();
        let dt = if n > 1 { block[n - 1].1 / (n - 1) as f64 } else { 0.0 };
        for (j, r) in block.iter().enumerate() {
            let expected = j as f64 * dt;
            if (r.1 - expected).abs() > 1e-9 * dt.max(1.0) {
                return Err(format_error(path, format!("row {}, column t_s: samples must be evenly spaced", start + j + 1)));
            }
        }
        out.push(Trajectory { dt, states: block.iter().map(|r| r.2).collect(), rudder: block.iter().map(|r| r.3).collect() });
        start = end;
    }
    Ok(out)
}

/// Writes the coverage grid, one row per cell.
pub fn write_coverage(path: &Path, grid: &CoverageGrid) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(COVERAGE_HEADER).map_err(|e| csv_error(path, e))?;
    for c in &grid.cells {
        w.write_record([
            c.x.to_string(),
            c.y.to_string(),
            c.exposure.to_string(),
            u8::from(c.seen).to_string(),
            u8::from(c.valid).to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `value` as pretty JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| format_error(path, e.to_string()))
}

/// Hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Record of one command invocation; written last, so its presence marks a
/// complete run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub scenario: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Command-line values that replaced scenario-file values.
    pub overrides: Vec<String>,
    /// RFC 3339 timestamps.
    pub started: String,
    pub finished: String,
    pub wall_time_s: f64,
    pub exit_code: i32,
    /// Files produced by the run, relative to `output_dir`.
    pub artifacts: Vec<String>,
}
