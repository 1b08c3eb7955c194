//! Feature dumps: CSV, a raw binary matrix, and a JSON schema sidecar.
//! File names carry the configuration hash so dumps double as a cache.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FeatureConfig, FeatureError, Result, Schema};

const MATRIX_MAGIC: &[u8; 8] = b"ACTXFEAT";
const MATRIX_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpSidecar {
    pub config_hash: String,
    pub config: FeatureConfig,
    pub schema: Schema,
    pub rows: usize,
    pub cols: usize,
    /// One identifier per row (e.g. `source_id#segment`).
    pub row_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DumpPaths {
    pub csv: PathBuf,
    pub matrix: PathBuf,
    pub sidecar: PathBuf,
}

impl DumpPaths {
    pub fn for_config(dir: &Path, cfg: &FeatureConfig) -> Self {
        let hash = cfg.hash();
        Self {
            csv: dir.join(format!("features-{hash}.csv")),
            matrix: dir.join(format!("features-{hash}.bin")),
            sidecar: dir.join(format!("features-{hash}.schema.json")),
        }
    }
}

/// Writes rows as CSV with the schema names as header.
pub fn write_csv<W: Write>(mut out: W, schema: &Schema, rows: &[Vec<f64>]) -> Result<()> {
    let header: Vec<&str> = schema.column_names().collect();
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

fn write_matrix(path: &Path, cols: usize, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MATRIX_MAGIC)?;
    out.write_all(&MATRIX_VERSION.to_le_bytes())?;
    out.write_all(&(rows.len() as u64).to_le_bytes())?;
    out.write_all(&(cols as u64).to_le_bytes())?;
    for row in rows {
        for v in row {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a binary matrix written by [`write_dump`] as `(rows, cols, data)`,
/// data in row-major order.
pub fn read_matrix(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 28 || &bytes[..8] != MATRIX_MAGIC {
        return Err(FeatureError::Malformed("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != MATRIX_VERSION {
        return Err(FeatureError::Malformed(format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[20..28].try_into().unwrap()) as usize;
    let body = &bytes[28..];
    if body.len() != rows * cols * 8 {
        return Err(FeatureError::Malformed(format!("expected {rows}x{cols} values, found {} bytes", body.len())));
    }
    let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((rows, cols, data))
}

/// Writes CSV, binary matrix and schema sidecar into `dir`.
pub fn write_dump(dir: &Path, cfg: &FeatureConfig, schema: &Schema, rows: &[Vec<f64>], row_ids: Vec<String>) -> Result<DumpPaths> {
    if let Some(bad) = rows.iter().find(|r| r.len() != schema.len()) {
        return Err(FeatureError::Malformed(format!("row of {} values for a {}-column schema", bad.len(), schema.len())));
    }
    if row_ids.len() != rows.len() {
        return Err(FeatureError::Malformed("one row id per row required".into()));
    }
    fs::create_dir_all(dir)?;
    let paths = DumpPaths::for_config(dir, cfg);
    let mut csv = BufWriter::new(File::create(&paths.csv)?);
    write_csv(&mut csv, schema, rows)?;
    csv.flush()?;
    write_matrix(&paths.matrix, schema.len(), rows)?;
    let sidecar = DumpSidecar {
        config_hash: cfg.hash(),
        config: cfg.clone(),
        schema: schema.clone(),
        rows: rows.len(),
        cols: schema.len(),
        row_ids,
    };
    fs::write(&paths.sidecar, serde_json::to_string_pretty(&sidecar)? + "\n")?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = FeatureConfig::default();
        let schema = cfg.schema();
        let rows: Vec<Vec<f64>> = (0..3).map(|r| (0..schema.len()).map(|c| (r * 1000 + c) as f64 * 0.5).collect()).collect();
        let ids = vec!["a#0".into(), "a#1".into(), "b#0".into()];
        let paths = write_dump(dir.path(), &cfg, &schema, &rows, ids).unwrap();
        assert!(paths.csv.to_string_lossy().contains(&cfg.hash()));

        let (r, c, data) = read_matrix(&paths.matrix).unwrap();
        assert_eq!((r, c), (3, schema.len()));
        assert_eq!(data, rows.concat());

        let csv = fs::read_to_string(&paths.csv).unwrap();
        let header = csv.lines().next().unwrap();
        assert_eq!(header.split(',').count(), schema.len());
        assert!(header.starts_with("fft_mag_0000,"));
        let side: DumpSidecar = serde_json::from_str(&fs::read_to_string(&paths.sidecar).unwrap()).unwrap();
        assert_eq!(side.schema, schema);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = FeatureConfig::default();
        let schema = cfg.schema();
        assert!(write_dump(dir.path(), &cfg, &schema, &[vec![1.0]], vec!["x".into()]).is_err());
    }
}
