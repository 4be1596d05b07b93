//! File formats: datasets in, affinity matrices both ways, trajectories and
//! run reports out.
//!
//! Trajectory JSON uses the shortest round-trip float representation, so
//! a written trajectory reads back bit-identically.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::affinity::{load_affinity, AffinityMatrix, Bandwidths, HighDimDataset, SquareMatrix};
use crate::diagnostics::ExponentFit;
use crate::error::{Error, Result};
use crate::experiments::CriterionOutcome;
use crate::integrator::Trajectory;
use crate::ode::Stats;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Parses numeric CSV rows. A first line that does not parse as numbers is
/// treated as a header and skipped.
pub fn parse_dataset_csv(text: &str) -> Result<HighDimDataset> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if rows.is_empty() && lineno == 0 => continue,
            Err(e) => return Err(Error::Parse(format!("line {}: {e}", lineno + 1))),
        }
    }
    HighDimDataset::from_rows(&rows)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DatasetJson {
    Rows(Vec<Vec<f64>>),
    Object { points: Vec<Vec<f64>> },
}

/// Accepts either `[[...], ...]` or `{"points": [[...], ...]}`.
pub fn parse_dataset_json(text: &str) -> Result<HighDimDataset> {
    let rows = match serde_json::from_str::<DatasetJson>(text).map_err(json_error)? {
        DatasetJson::Rows(rows) | DatasetJson::Object { points: rows } => rows,
    };
    HighDimDataset::from_rows(&rows)
}

/// Reads a dataset, choosing the format by extension (`.json`, otherwise
/// CSV).
pub fn read_dataset(path: &Path) -> Result<HighDimDataset> {
    let text = read_text(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("json") => parse_dataset_json(&text),
        _ => parse_dataset_csv(&text),
    }
}

/// On-disk affinity matrix: `n` and the `n * n` entries in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityFile {
    pub n: usize,
    pub entries: Vec<f64>,
}

impl From<&AffinityMatrix> for AffinityFile {
    fn from(p: &AffinityMatrix) -> Self {
        AffinityFile { n: p.n(), entries: p.entries().to_vec() }
    }
}

impl AffinityFile {
    /// Validates through [`load_affinity`], which repairs tiny asymmetry
    /// and normalization error.
    pub fn into_affinity(self) -> Result<AffinityMatrix> {
        let AffinityFile { n, entries } = self;
        if entries.len() != n * n {
            return Err(Error::InvalidAffinity(format!(
                "expected {} entries for n = {n}, got {}",
                n * n,
                entries.len()
            )));
        }
        let mut m = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, entries[i * n + j]);
            }
        }
        load_affinity(&m)
    }
}

pub fn parse_affinity_json(text: &str) -> Result<AffinityMatrix> {
    serde_json::from_str::<AffinityFile>(text).map_err(json_error)?.into_affinity()
}

pub fn read_affinity(path: &Path) -> Result<AffinityMatrix> {
    parse_affinity_json(&read_text(path)?)
}

pub fn write_affinity(path: &Path, p: &AffinityMatrix) -> Result<()> {
    write_text(path, &to_json(&AffinityFile::from(p))?)
}

pub fn write_bandwidths(path: &Path, bw: &Bandwidths) -> Result<()> {
    write_text(path, &to_json(bw)?)
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(json_error)?;
    s.push('\n');
    Ok(s)
}

pub fn trajectory_to_json(traj: &Trajectory) -> Result<String> {
    to_json(traj)
}

pub fn trajectory_from_json(text: &str) -> Result<Trajectory> {
    serde_json::from_str(text).map_err(json_error)
}

pub fn read_trajectory_json(path: &Path) -> Result<Trajectory> {
    trajectory_from_json(&read_text(path)?)
}

pub fn write_trajectory_json(path: &Path, traj: &Trajectory) -> Result<()> {
    write_text(path, &trajectory_to_json(traj)?)
}

/// One row per snapshot: `t, cost, S, diam, min_sqdist, max_sqdist,
/// com_norm`, followed by `y{i}_{k}` columns when `coords` is set.
pub fn trajectory_to_csv(traj: &Trajectory, coords: bool) -> String {
    let mut out = String::from("t,cost,S,diam,min_sqdist,max_sqdist,com_norm");
    let first = traj.snapshots.first().map(|s| &s.state.config);
    if coords {
        if let Some(c) = first {
            for i in 0..c.n() {
                for k in 0..c.s() {
                    let _ = write!(out, ",y{i}_{k}");
                }
            }
        }
    }
    out.push('\n');
    for snap in &traj.snapshots {
        let r = &snap.record;
        let _ = write!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.t, r.cost, r.second_moment, r.diam, r.min_sqdist, r.max_sqdist, r.com_norm
        );
        if coords {
            for v in snap.state.config.coords() {
                let _ = write!(out, ",{v:.16e}");
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory, coords: bool) -> Result<()> {
    write_text(path, &trajectory_to_csv(traj, coords))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub threshold: f64,
    /// `None` when no snapshot reached the threshold.
    pub min_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub description: String,
    pub max_rel_discrepancy: f64,
    pub max_symmetry_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Scenario name, or `custom` for runs from explicit inputs.
    pub scenario: String,
    pub kernel: String,
    pub t_end: f64,
    pub exponent_fits: Vec<ExponentFit>,
    pub separation: SeparationReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSummary>,
    pub acceptance: Vec<CriterionOutcome>,
    pub stats: Stats,
}

impl RunReport {
    pub fn all_passed(&self) -> bool {
        self.acceptance.iter().all(|c| c.passed)
    }
}

pub fn write_report(path: &Path, report: &RunReport) -> Result<()> {
    write_text(path, &to_json(report)?)
}
