use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// One verified inequality or identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub suite: String,
    pub check: String,
    /// The statement being tested, written out as a formula.
    pub anchor: String,
    /// Parameters of the check, as a compact JSON object.
    pub inputs: String,
    /// First 16 hex digits of the SHA-256 of `inputs`.
    pub inputs_digest: String,
    /// Measured quantity; `None` when the computation itself failed.
    pub value: Option<f64>,
    pub bound: Option<f64>,
    /// Distance to failure: positive means the check holds with room.
    pub margin: Option<f64>,
    pub pass: bool,
    pub note: String,
}

/// Direction of a comparison `value ? bound`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    AtMost,
    AtLeast,
}

pub fn digest(inputs: &str) -> String {
    let h = Sha256::digest(inputs.as_bytes());
    h[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl CheckRecord {
    /// Record for `value` compared against `bound`.
    pub fn compare(suite: &str, check: &str, anchor: &str, inputs: String, value: f64, cmp: Cmp, bound: f64) -> Self {
        let margin = match cmp {
            Cmp::AtMost => bound - value,
            Cmp::AtLeast => value - bound,
        };
        let pass = margin >= 0.0 && value.is_finite();
        CheckRecord {
            suite: suite.into(),
            check: check.into(),
            anchor: anchor.into(),
            inputs_digest: digest(&inputs),
            inputs,
            value: finite(value),
            bound: finite(bound),
            margin: finite(margin),
            pass,
            note: if value.is_finite() { String::new() } else { format!("non-finite value {value}") },
        }
    }

    /// Record for a check whose computation failed.
    pub fn failed(suite: &str, check: &str, anchor: &str, inputs: String, note: String) -> Self {
        CheckRecord {
            suite: suite.into(),
            check: check.into(),
            anchor: anchor.into(),
            inputs_digest: digest(&inputs),
            inputs,
            value: None,
            bound: None,
            margin: None,
            pass: false,
            note,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        let note = note.into();
        if self.note.is_empty() {
            self.note = note;
        } else if !note.is_empty() {
            self.note = format!("{}; {note}", self.note);
        }
        self
    }
}

/// Row of `plotdata_normbound.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub system: String,
    pub d: usize,
    pub p: f64,
    pub n: usize,
    pub lower_bound: Option<f64>,
    pub paper_bound: f64,
    pub margin: Option<f64>,
}

/// Row of `plotdata_embedding.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub system: String,
    pub d: usize,
    pub p: f64,
    pub trials: usize,
    pub max_ratio: Option<f64>,
    pub mean_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub records: Vec<CheckRecord>,
    pub summary: Summary,
    pub wall_time_s: f64,
    pub norm_rows: Vec<NormRow>,
    pub embedding_rows: Vec<EmbeddingRow>,
}

impl SuiteReport {
    pub fn new(suite: &str, seed: u64) -> Self {
        SuiteReport {
            suite: suite.into(),
            seed,
            records: Vec::new(),
            summary: Summary::default(),
            wall_time_s: 0.0,
            norm_rows: Vec::new(),
            embedding_rows: Vec::new(),
        }
    }

    pub fn refresh_summary(&mut self) {
        let passed = self.records.iter().filter(|r| r.pass).count();
        self.summary = Summary { total: self.records.len(), passed, failed: self.records.len() - passed };
    }

    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.records.iter().filter(|r| !r.pass)
    }
}

/// I/O failure with the path it concerns.
#[derive(Debug, thiserror::Error)]
#[error("{path}: {source}")]
pub struct EmitError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

fn at(path: &Path) -> impl Fn(io::Error) -> EmitError + '_ {
    move |source| EmitError { path: path.to_path_buf(), source }
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

const RECORD_HEADER: [&str; 11] =
    ["suite", "check", "anchor", "inputs", "inputs_digest", "value", "bound", "margin", "pass", "note", ""];

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), EmitError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(|e| at(path)(csv_err(e)))?;
    w.write_record(header).map_err(|e| at(path)(csv_err(e)))?;
    for r in rows {
        w.serialize(r).map_err(|e| at(path)(csv_err(e)))?;
    }
    w.flush().map_err(at(path))
}

/// Write `report.json`, `report.csv`, `plotdata_normbound.csv` and
/// `plotdata_embedding.csv` into `dir`, creating it if needed. The CSV files
/// carry no timing, so identical runs give identical bytes.
pub fn emit(report: &SuiteReport, dir: &Path) -> Result<Vec<PathBuf>, EmitError> {
    fs::create_dir_all(dir).map_err(at(dir))?;
    let json = dir.join("report.json");
    let text = serde_json::to_string_pretty(report).map_err(|e| at(&json)(e.into()))?;
    fs::write(&json, text).map_err(at(&json))?;

    let csv_path = dir.join("report.csv");
    write_csv(&csv_path, &RECORD_HEADER[..10], &report.records)?;

    let norm = dir.join("plotdata_normbound.csv");
    write_csv(&norm, &["system", "d", "p", "n", "lower_bound", "paper_bound", "margin"], &report.norm_rows)?;

    let emb = dir.join("plotdata_embedding.csv");
    write_csv(&emb, &["system", "d", "p", "trials", "max_ratio", "mean_ratio"], &report.embedding_rows)?;
    Ok(vec![json, csv_path, norm, emb])
}

pub fn read_report(path: &Path) -> Result<SuiteReport, EmitError> {
    let text = fs::read_to_string(path).map_err(at(path))?;
    serde_json::from_str(&text).map_err(|e| at(path)(e.into()))
}

pub fn read_records_csv(path: &Path) -> Result<Vec<CheckRecord>, EmitError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| at(path)(csv_err(e)))?;
    r.deserialize().collect::<Result<Vec<CheckRecord>, _>>().map_err(|e| at(path)(csv_err(e)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SuiteReport {
        let mut r = SuiteReport::new("constants", 3);
        r.records.push(CheckRecord::compare("constants", "h_sup", "sup H < 6", "{\"s\":1}".into(), 5.8, Cmp::AtMost, 6.0));
        r.records.push(CheckRecord::failed("constants", "x", "a, \"quoted\"", "{}".into(), "boom".into()));
        r.records.push(CheckRecord::compare("constants", "tiny", "v >= 0", "{}".into(), 1e-300 / 3.0, Cmp::AtLeast, 0.0));
        r.norm_rows.push(NormRow { system: "ou".into(), d: 1, p: 1.25, n: 4, lower_bound: Some(1.0), paper_bound: 96.0, margin: Some(95.0) });
        r.refresh_summary();
        r
    }

    #[test]
    fn compare_semantics() {
        let r = CheckRecord::compare("s", "c", "a", "{}".into(), 2.0, Cmp::AtMost, 1.0);
        assert!(!r.pass);
        assert_eq!(r.margin, Some(-1.0));
        let r = CheckRecord::compare("s", "c", "a", "{}".into(), f64::NAN, Cmp::AtMost, 1.0);
        assert!(!r.pass && r.value.is_none());
        assert_eq!(digest("{}").len(), 16);
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rep = sample();
        emit(&rep, dir.path()).unwrap();
        assert_eq!(read_report(&dir.path().join("report.json")).unwrap(), rep);
        assert_eq!(read_records_csv(&dir.path().join("report.csv")).unwrap(), rep.records);
    }

    #[test]
    fn empty_report_gives_header_only_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut rep = SuiteReport::new("all", 0);
        rep.refresh_summary();
        emit(&rep, dir.path()).unwrap();
        assert!(read_records_csv(&dir.path().join("report.csv")).unwrap().is_empty());
        let plot = fs::read_to_string(dir.path().join("plotdata_normbound.csv")).unwrap();
        assert_eq!(plot.lines().count(), 1);
        assert!(rep.passed());
    }

    #[test]
    fn unwritable_directory_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("occupied");
        fs::write(&file, "x").unwrap();
        let err = emit(&SuiteReport::new("all", 0), &file).unwrap_err();
        assert!(err.to_string().contains("occupied"));
    }
}
