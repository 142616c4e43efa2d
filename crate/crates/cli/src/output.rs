use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Shortest decimal that parses back to the same value; empty for NaN.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Reads a CSV whose header must be exactly `expected`, returning parsed numbers.
/// Empty cells become NaN.
pub fn read_numeric_csv(path: &Path, expected: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != expected {
        anyhow::bail!("{}: expected columns {} but found {}", path.display(), expected.join(","), header.join(","));
    }
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: reading row {}", path.display(), k + 2))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                let cell = cell.trim();
                if cell.is_empty() {
                    Ok(f64::NAN)
                } else {
                    cell.parse::<f64>()
                        .with_context(|| format!("{}: line {}, column {}: not a number: {cell:?}", path.display(), k + 2, c + 1))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}
