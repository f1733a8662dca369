//! Result tables, manifests and binary field dumps.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wave3_core::lemmas::LemmaReport;
use wave3_core::regularity::ExponentFit;
use wave3_core::simulator::{ModelDescription, RunOutput};

use crate::config::{Command, ExperimentConfig};
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

/// Everything needed to rerun a command bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub seed: u64,
    pub threads: usize,
    /// Resolved acceptance tolerance of the command.
    pub tolerance: f64,
    pub quadrature: QuadratureManifest,
    pub config: ExperimentConfig,
    /// Files written by the run, relative to the output directory.
    pub outputs: Vec<String>,
    pub exit_code: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureManifest {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Rules used by the one-dimensional integrals.
    pub rules: Vec<String>,
}

impl QuadratureManifest {
    pub fn from_config(c: &ExperimentConfig) -> Self {
        Self {
            abs_tol: c.quad_abs_tol,
            rel_tol: c.quad_rel_tol,
            rules: vec![
                "adaptive Gauss-Kronrod 7-15".into(),
                "tanh-sinh for endpoint singularities".into(),
                "van Wijngaarden summation of oscillatory tails".into(),
            ],
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    csv::Writer::from_path(path).map_err(csv_error)
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e.to_string()))
}

/// Value of a named report parameter as a CSV cell (empty when absent).
fn cell(report: &LemmaReport, name: &str) -> String {
    report.param(name).map(|v| v.to_string()).unwrap_or_default()
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per evaluated point of every report. Fit columns repeat the
/// report's fit; `satisfied` and `converged` are per report.
pub fn write_lemma_csv(path: &Path, reports: &[LemmaReport]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "lemma", "beta", "delta", "alpha", "b", "t", "t_bar", "separation", "value", "error", "slope", "stderr", "r2",
        "satisfied", "converged",
    ])
    .map_err(csv_error)?;
    for r in reports {
        let (slope, stderr, r2) = match &r.fit {
            Some(f) => (Some(f.slope), Some(f.stderr), Some(f.r2)),
            None => (None, None, None),
        };
        for p in &r.points {
            let (t_bar, separation) = if r.lemma.starts_with("time-increment") {
                (r.param("t").map(|t| t + p.abscissa), p.abscissa.to_string())
            } else if r.lemma.starts_with("space-increment") {
                (None, p.abscissa.to_string())
            } else {
                (None, String::new())
            };
            w.write_record([
                r.lemma.clone(),
                cell(r, "beta"),
                cell(r, "delta"),
                cell(r, "alpha"),
                cell(r, "b"),
                cell(r, "t"),
                opt(t_bar),
                separation,
                p.value.to_string(),
                p.error.to_string(),
                opt(slope),
                opt(stderr),
                opt(r2),
                r.satisfied.to_string(),
                (r.converged && p.converged).to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Generic table with a header row.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Probe series as `(t, x_index, value, replica)`, with `x_index` the flat
/// lattice index of the probe.
pub fn write_probe_csv(path: &Path, out: &RunOutput, n: usize, first_replica: u64) -> Result<(), CliError> {
    let rows = out.series.iter().enumerate().flat_map(|(r, per_probe)| {
        per_probe.iter().enumerate().flat_map(move |(p, series)| {
            let [i, j, l] = out.probes[p].grid;
            let x_index = (i * n + j) * n + l;
            series.iter().enumerate().map(move |(k, v)| {
                vec![out.times[k].to_string(), x_index.to_string(), v.to_string(), (first_replica + r as u64).to_string()]
            })
        })
    });
    write_table(path, &["t", "x_index", "value", "replica"], rows)
}

/// Structure-function table `(lag, moment, mc_err)`, lags in physical units.
pub fn write_fit_csv(path: &Path, fit: &ExponentFit) -> Result<(), CliError> {
    let rows = (0..fit.lags.len()).map(|i| vec![fit.lags[i].to_string(), fit.moments[i].to_string(), fit.mc_errors[i].to_string()]);
    write_table(path, &["lag", "moment", "mc_err"], rows)
}

/// Header of a binary field dump: `n^3` little-endian `f64` values in
/// lattice order (last index fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceHeader {
    pub n: usize,
    pub box_side_len: f64,
    pub window_side_len: f64,
    pub dt: f64,
    pub t: f64,
    pub seed: u64,
    pub replica: u64,
    pub engine: String,
    pub model: Option<ModelDescription>,
    pub model_hash: String,
    /// Upper end of the Hölder exponent window of the model.
    pub window_high: f64,
    pub dtype: String,
    pub endianness: String,
}

/// SHA-256 of the canonical JSON of a value.
pub fn hash_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let bytes = serde_json::to_vec(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    Ok(format!("{:x}", Sha256::digest(bytes)))
}

pub fn slice_stem(replica: u64) -> String {
    format!("slice_r{replica:05}")
}

/// Writes `<stem>.bin` and `<stem>.json`; returns both file names.
pub fn write_slice(dir: &Path, header: &SliceHeader, values: &[f64]) -> Result<[String; 2], CliError> {
    let stem = slice_stem(header.replica);
    let bin = format!("{stem}.bin");
    let json = format!("{stem}.json");
    let mut w = BufWriter::new(File::create(dir.join(&bin))?);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    write_json(&dir.join(&json), header)?;
    Ok([bin, json])
}

/// All slice dumps of a directory, sorted by replica.
pub fn read_slices(dir: &Path) -> Result<Vec<(SliceHeader, Vec<f64>)>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Usage(format!("cannot read dump directory {}: {e}", dir.display())))?;
    let mut headers: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_name().and_then(|f| f.to_str()).is_some_and(|f| f.starts_with("slice_r"))
        })
        .collect();
    headers.sort();
    if headers.is_empty() {
        return Err(CliError::Usage(format!("no field dumps (slice_r*.json) in {}", dir.display())));
    }
    headers
        .iter()
        .map(|path| {
            let header: SliceHeader = read_json(path)?;
            let bin = path.with_extension("bin");
            let mut bytes = Vec::new();
            File::open(&bin)
                .and_then(|mut f| f.read_to_end(&mut bytes))
                .map_err(|e| CliError::Usage(format!("missing dump {}: {e}", bin.display())))?;
            let expected = header.n.pow(3) * 8;
            if bytes.len() != expected || header.dtype != "f64" || header.endianness != "little" {
                return Err(CliError::Usage(format!(
                    "{}: expected {expected} bytes of little-endian f64, found {} bytes",
                    bin.display(),
                    bytes.len()
                )));
            }
            let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            Ok((header, values))
        })
        .collect()
}
