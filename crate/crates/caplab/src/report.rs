//! Structured result emission: JSON reports, CSV tables, and the run
//! manifest. Artifacts are byte-identical for identical configs and seeds;
//! wall time lives only in the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::quadrature::{SpaceTimeField, SurfaceDensity, ValueWithUncertainty};

/// JSON record for a norm: {value, tail, resolution}.
#[derive(Debug, Clone, Serialize)]
pub struct NormRecord {
    pub value: f64,
    pub tail: f64,
    pub resolution: usize,
}

/// Hash of the canonical config serialization, embedded in every artifact.
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<String> {
    let bytes = serde_json::to_vec(cfg)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize())[..16].to_string())
}

/// Envelope written around every JSON artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Artifact<T: Serialize> {
    pub config_hash: String,
    pub payload: T,
}

pub fn write_json<T: Serialize>(path: &Path, config_hash: &str, payload: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let artifact = Artifact {
        config_hash: config_hash.to_string(),
        payload,
    };
    let mut text = serde_json::to_string_pretty(&artifact)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Run manifest: config hash, version, wall time. Kept out of the
/// deterministic artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_hash: String,
    pub version: String,
    pub wall_time_seconds: f64,
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(dir.join("run_manifest.json"), text)?;
    Ok(())
}

/// Space-time field as CSV: t, x…, Re, Im.
pub fn write_field_csv(path: &Path, field: &SpaceTimeField) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    let dim = field.grid.dim;
    if dim == 1 {
        w.write_record(["t", "x", "re", "im"]).map_err(io_err)?;
    } else {
        w.write_record(["t", "x1", "x2", "re", "im"]).map_err(io_err)?;
    }
    for ((x, t), v) in field.grid.points().iter().zip(&field.values) {
        let mut rec = vec![format!("{t:.12e}"), format!("{:.12e}", x[0])];
        if dim == 2 {
            rec.push(format!("{:.12e}", x[1]));
        }
        rec.push(format!("{:.12e}", v.re));
        rec.push(format!("{:.12e}", v.im));
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Density samples as CSV: chart coordinates, sphere point, weight, value.
pub fn write_density_csv(path: &Path, f: &SurfaceDensity) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(["u1", "u2", "p1", "p2", "p3", "sigma_weight", "re", "im"])
        .map_err(io_err)?;
    for i in 0..f.grid.len() {
        let u = f.grid.nodes_u[i];
        let p = f.grid.sphere_nodes[i];
        let v: Complex64 = f.values[i];
        w.write_record(&[
            format!("{:.12e}", u[0]),
            format!("{:.12e}", u[1]),
            format!("{:.12e}", p[0]),
            format!("{:.12e}", p[1]),
            format!("{:.12e}", p[2]),
            format!("{:.12e}", f.grid.sigma_weights[i]),
            format!("{:.12e}", v.re),
            format!("{:.12e}", v.im),
        ])
        .map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Two-column (plus header) numeric CSV for curves and fits.
pub fn write_curve_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        let rec: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Matrix CSV with a leading index column.
pub fn write_matrix_csv(path: &Path, name: &str, matrix: &[Vec<f64>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    let cols = matrix.first().map(|r| r.len()).unwrap_or(0);
    let mut header = vec![name.to_string()];
    for j in 0..cols {
        header.push(format!("nu{j}"));
    }
    w.write_record(&header).map_err(io_err)?;
    for (i, row) in matrix.iter().enumerate() {
        let mut rec = vec![format!("{i}")];
        rec.extend(row.iter().map(|v| format!("{v:.12e}")));
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn norm_record(v: &ValueWithUncertainty, resolution: usize) -> NormRecord {
    NormRecord {
        value: v.value,
        tail: v.uncertainty,
        resolution,
    }
}

pub fn artifact_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn io_err(e: csv::Error) -> crate::error::Error {
    crate::error::Error::Io(std::io::Error::other(e))
}
