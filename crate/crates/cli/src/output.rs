//! CSV and JSON artifacts.

use std::fs;
use std::path::Path;

use popdyn_core::Trajectory;

use crate::CliError;

/// Shortest round-tripping form is not fixed-width; 17 significant digits are.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// `t, s_1, ..., s_n` with the distribution function of each sampled state.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let n = traj.grid().len();
    let mut header = Vec::with_capacity(n + 1);
    header.push("t".to_string());
    header.extend((1..=n).map(|i| format!("s_{i}")));
    w.write_record(&header)?;
    for (t, state) in traj.times.iter().zip(&traj.states) {
        let cdf = state.cdf()?;
        let mut row = Vec::with_capacity(n + 1);
        row.push(fmt(*t));
        row.extend(cdf.into_iter().map(fmt));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_grid(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "s"])?;
    for (i, s) in traj.grid().points().iter().enumerate() {
        w.write_record([(i + 1).to_string(), fmt(*s)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_diagnostics(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "nash_gap", "storage", "sigma", "mass_error"])?;
    for (t, d) in traj.times.iter().zip(&traj.diagnostics) {
        w.write_record([fmt(*t), fmt(d.nash_gap), fmt(d.storage), fmt(d.sigma), fmt(d.mass_error)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
