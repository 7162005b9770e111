use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::stats::pearson;

/// Pearson correlation between `series[..n-lag]` and `series[lag..]`.
pub fn autocorrelation(series: &[f64], lag: usize) -> Result<f64> {
    if series.len() <= lag + 1 {
        return Err(Error::InsufficientData(format!(
            "autocorrelation at lag {lag} needs more than {} samples, got {}",
            lag + 1,
            series.len()
        )));
    }
    let n = series.len();
    pearson(&series[..n - lag], &series[lag..])
}

/// Write a point cloud as CSV with header `x,y,z`.
///
/// Values are written with Rust's shortest round-trip float formatting, so
/// reading the file back yields the exact same `f64`s.
pub fn export_attractor(points: &[[f64; 3]], path: &Path) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InsufficientData("no points to export".into()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x,y,z")?;
    for [x, y, z] in points {
        writeln!(w, "{x},{y},{z}")?;
    }
    w.flush()?;
    Ok(())
}

/// Read back a file written by [`export_attractor`].
pub fn read_attractor(path: &Path) -> Result<Vec<[f64; 3]>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["x", "y", "z"] {
        return Err(Error::SchemaMismatch(format!("expected header x,y,z, found {headers:?}")));
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize::<(f64, f64, f64)>() {
        let (x, y, z) = rec?;
        out.push([x, y, z]);
    }
    Ok(out)
}
