//! CSV manifests: `id,hor_path,ver_path,pre_va,post_va`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const HEADER: [&str; 5] = ["id", "hor_path", "ver_path", "pre_va", "post_va"];

/// Upper end of the accepted VA range.
pub const VA_MAX: f64 = 1.5;

/// One manifest row with image paths resolved against the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub hor_path: PathBuf,
    pub ver_path: PathBuf,
    pub pre_va: f64,
    pub post_va: f64,
}

fn row_err(row: usize, msg: impl std::fmt::Display) -> Error {
    Error::data(format!("manifest row {row}: {msg}"))
}

fn parse_va(row: usize, column: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| row_err(row, format!("{column} {raw:?} is not a number")))?;
    if !v.is_finite() || !(0.0..=VA_MAX).contains(&v) {
        return Err(row_err(row, format!("{column} {v} outside [0, {VA_MAX}]")));
    }
    Ok(v)
}

/// Reads a manifest. Rows are numbered from 1, not counting the header.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader.headers().map_err(|e| Error::data(format!("manifest header: {e}")))?.clone();
    if let Some(missing) = HEADER.iter().find(|c| !header.iter().any(|h| h == **c)) {
        return Err(Error::data(format!("manifest is missing column {missing}")));
    }
    if header.len() != HEADER.len() || header.iter().zip(HEADER).any(|(a, b)| a != b) {
        return Err(Error::data(format!("manifest header must be exactly {}", HEADER.join(","))));
    }

    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| row_err(row, e))?;
        let id = record[0].trim().to_owned();
        if id.is_empty() {
            return Err(row_err(row, "empty id"));
        }
        if !seen.insert(id.clone()) {
            return Err(row_err(row, format!("duplicate id {id:?}")));
        }
        let resolve = |raw: &str, column: &str| -> Result<PathBuf> {
            let p = base.join(raw.trim());
            if !p.is_file() {
                return Err(row_err(row, format!("{column} {} does not exist", p.display())));
            }
            Ok(p)
        };
        entries.push(ManifestEntry {
            hor_path: resolve(&record[1], "hor_path")?,
            ver_path: resolve(&record[2], "ver_path")?,
            pre_va: parse_va(row, "pre_va", &record[3])?,
            post_va: parse_va(row, "post_va", &record[4])?,
            id,
        });
    }
    Ok(entries)
}

/// Writes a manifest whose paths are stored as given.
pub fn write_manifest(path: &Path, rows: &[(String, String, String, f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| Error::data(format!("{}: {e}", path.display()));
    w.write_record(HEADER).map_err(csv_err)?;
    for (id, hor, ver, pre, post) in rows {
        w.write_record([id.as_str(), hor.as_str(), ver.as_str(), &pre.to_string(), &post.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
