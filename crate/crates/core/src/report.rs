//! Report tables: one row per scheme and feedback budget.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize, Serializer};

use crate::config::ReportFormat;
use crate::error::{Error, Result};

pub const HEADER: [&str; 6] = ["scheme", "n_bits", "rho", "params", "flops", "wall_seconds"];

/// Integral values print without a fractional part.
fn compact<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        s.serialize_i64(*x as i64)
    } else {
        s.serialize_f64(*x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scheme: String,
    /// Feedback bits per sample; a mean for variable-rate schemes.
    #[serde(serialize_with = "compact")]
    pub n_bits: f64,
    pub rho: Option<f64>,
    pub params: Option<u64>,
    pub flops: Option<u64>,
    pub wall_seconds: f64,
}

impl ReportRow {
    /// The row without its timing, for reproducibility comparisons.
    pub fn deterministic_part(&self) -> (String, f64, Option<f64>, Option<u64>, Option<u64>) {
        (self.scheme.clone(), self.n_bits, self.rho, self.params, self.flops)
    }
}

pub fn to_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(HEADER).map_err(|e| Error::Format(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn from_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| Error::Format(e.to_string()))?;
    if header.iter().ne(HEADER) {
        return Err(Error::Format(format!("unexpected report header {:?}", header)));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Format(format!("report row: {e}"))))
        .collect()
}

pub fn file_name(format: ReportFormat) -> &'static str {
    match format {
        ReportFormat::Csv => "report.csv",
        ReportFormat::Json => "report.json",
    }
}

pub fn write_rows(dir: &Path, rows: &[ReportRow], format: ReportFormat) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(file_name(format));
    let text = match format {
        ReportFormat::Csv => to_csv(rows)?,
        ReportFormat::Json => serde_json::to_string_pretty(rows).expect("rows serialize") + "\n",
    };
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Rows of one run directory, from whichever report file it holds.
pub fn read_rows(dir: &Path) -> Result<Vec<ReportRow>> {
    let csv_path = dir.join(file_name(ReportFormat::Csv));
    let json_path = dir.join(file_name(ReportFormat::Json));
    if csv_path.is_file() {
        let text = std::fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        from_csv(&text)
    } else {
        let text = std::fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", json_path.display())))
    }
}

fn has_report(dir: &Path) -> bool {
    [ReportFormat::Csv, ReportFormat::Json]
        .iter()
        .any(|&f| dir.join(file_name(f)).is_file())
}

/// Concatenates the rows of several run directories, in the given order.
/// Every missing run is named in the error.
pub fn consolidate(run_dirs: &[PathBuf]) -> Result<Vec<ReportRow>> {
    let missing: Vec<String> = run_dirs
        .iter()
        .filter(|d| !has_report(d))
        .map(|d| d.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!("missing runs: {}", missing.join(", "))));
    }
    let mut rows = Vec::new();
    for d in run_dirs {
        rows.extend(read_rows(d)?);
    }
    Ok(rows)
}

/// Run directories directly under `root` that hold a report, sorted by name.
pub fn discover_runs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        if path.is_dir() && has_report(&path) {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(scheme: &str, bits: f64, rho: Option<f64>) -> ReportRow {
        ReportRow {
            scheme: scheme.into(),
            n_bits: bits,
            rho,
            params: Some(41592),
            flops: None,
            wall_seconds: 0.25,
        }
    }

    #[test]
    fn csv_layout_and_round_trip() {
        let rows = vec![row("type1", 8.0, Some(0.5)), row("type2", 247.5, None)];
        let text = to_csv(&rows).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "scheme,n_bits,rho,params,flops,wall_seconds");
        assert_eq!(lines[1], "type1,8,0.5,41592,,0.25");
        assert_eq!(lines[2], "type2,247.5,,41592,,0.25");
        assert_eq!(from_csv(&text).unwrap(), rows);
        assert_eq!(from_csv("a,b\n").unwrap_err().class(), "format");
    }

    #[test]
    fn consolidation_names_missing_runs() {
        let root = tempfile::tempdir().unwrap();
        let a = root.path().join("a");
        let b = root.path().join("b");
        write_rows(&a, &[row("type1", 8.0, Some(0.9))], ReportFormat::Csv).unwrap();
        write_rows(&b, &[row("net", 6.0, Some(0.8))], ReportFormat::Json).unwrap();
        let rows = consolidate(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].scheme, "net");
        assert_eq!(discover_runs(root.path()).unwrap(), vec![a.clone(), b]);
        let err = consolidate(&[a, root.path().join("gone"), root.path().join("lost")]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gone") && msg.contains("lost"), "{msg}");
        assert_eq!(err.class(), "config");
    }
}
