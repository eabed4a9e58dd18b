//! On-disk formats.
//!
//! Result rows are CSV with the header
//! `L,p,tau,N,N_f,P_fail,sigma,master_seed,wall_time_seconds`. Floats are
//! written in shortest round-trip form, so reading a file back gives
//! bit-identical values. Every row is checked on read: `P_fail` and `sigma`
//! must agree with `N` and `N_f`.
//!
//! Fit reports are plain text, one `key = value ± uncertainty` per line,
//! with `#` comment lines for the row-filter audit.

use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montecarlo::{FailureEstimate, TrialConfig};
use crate::scaling::{DataPoint, ThresholdParams, UniversalScalingParams};

pub const CSV_HEADER: &str = "L,p,tau,N,N_f,P_fail,sigma,master_seed,wall_time_seconds";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    #[serde(rename = "L")]
    pub size: usize,
    pub p: f64,
    pub tau: f64,
    #[serde(rename = "N")]
    pub trials: u64,
    #[serde(rename = "N_f")]
    pub failures: u64,
    #[serde(rename = "P_fail")]
    pub p_fail: f64,
    pub sigma: f64,
    pub master_seed: u64,
    pub wall_time_seconds: f64,
}

impl ResultRow {
    pub fn new(config: &TrialConfig, estimate: &FailureEstimate, wall_time_seconds: f64) -> Self {
        ResultRow {
            size: config.size,
            p: config.p,
            tau: config.tau,
            trials: estimate.trials,
            failures: estimate.failures,
            p_fail: estimate.p_fail,
            sigma: estimate.sigma,
            master_seed: config.master_seed,
            wall_time_seconds,
        }
    }

    /// Checks that `P_fail` and `sigma` follow from `N` and `N_f`.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.trials == 0 || self.failures > self.trials {
            return Err(format!("need 0 <= N_f <= N with N > 0, got N = {}, N_f = {}", self.trials, self.failures));
        }
        let expected = FailureEstimate::new(self.trials, self.failures);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(f64::MIN_POSITIVE);
        if !close(self.p_fail, expected.p_fail) {
            return Err(format!("P_fail = {} but N_f / N = {}", self.p_fail, expected.p_fail));
        }
        if !close(self.sigma, expected.sigma) {
            return Err(format!("sigma = {} but recomputed sigma = {}", self.sigma, expected.sigma));
        }
        Ok(())
    }

    pub fn data_point(&self) -> DataPoint {
        DataPoint {
            size: self.size,
            p: self.p,
            p_fail: self.p_fail,
            sigma: self.sigma,
        }
    }

    /// Same cell, seed and outcome; wall time is ignored.
    pub fn same_result(&self, other: &ResultRow) -> bool {
        ResultRow { wall_time_seconds: 0.0, ..*self } == ResultRow { wall_time_seconds: 0.0, ..*other }
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse { line, message: e.to_string() }
}

/// Reads and validates every row.
pub fn read_rows<R: Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let found: Vec<&str> = header.iter().collect();
    if found.join(",") != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{CSV_HEADER}`, found `{}`", found.join(",")),
        });
    }
    let mut rows = Vec::new();
    for record in rdr.deserialize::<ResultRow>() {
        let row = record.map_err(csv_error)?;
        row.validate().map_err(|message| Error::Parse { line: rows.len() + 2, message })?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_rows_from_path(path: &Path) -> Result<Vec<ResultRow>> {
    read_rows(File::open(path)?)
}

/// Writes a header and the rows.
pub fn write_rows<W: Write>(writer: W, rows: &[ResultRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        wtr.write_record(CSV_HEADER.split(',')).map_err(csv_error)?;
    }
    for row in rows {
        wtr.serialize(row).map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Appends rows to `path`, writing the header first if the file is new or
/// empty. Each call flushes, so an interrupted sweep keeps completed cells.
pub fn append_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut wtr = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    if fresh && rows.is_empty() {
        wtr.write_record(CSV_HEADER.split(',')).map_err(csv_error)?;
    }
    for row in rows {
        wtr.serialize(row).map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

/// One `key = value ± uncertainty` line.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub key: String,
    pub value: f64,
    pub uncertainty: Option<f64>,
}

/// A line-oriented fit report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitReport {
    pub entries: Vec<ReportEntry>,
    pub comments: Vec<String>,
}

pub const CHI2_KEY: &str = "residual_chi2_per_dof";

impl FitReport {
    pub fn push(&mut self, key: &str, value: f64, uncertainty: Option<f64>) {
        self.entries.push(ReportEntry { key: key.to_string(), value, uncertainty });
    }

    pub fn comment(&mut self, text: impl Into<String>) {
        self.comments.push(text.into());
    }

    pub fn get(&self, key: &str) -> Option<&ReportEntry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }

    pub fn value(&self, key: &str) -> Option<f64> {
        self.get(key).map(|e| e.value)
    }

    /// Later reports override earlier ones key by key.
    pub fn merge(&mut self, other: &FitReport) {
        self.entries.extend(other.entries.iter().cloned());
        self.comments.extend(other.comments.iter().cloned());
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut report = FitReport::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                report.comments.push(c.trim().to_string());
                continue;
            }
            let err = |message: String| Error::Parse { line: i + 1, message };
            let (key, rest) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (value, unc) = match rest.split_once('±').or_else(|| rest.split_once("+/-")) {
                Some((v, u)) => (v, Some(u)),
                None => (rest, None),
            };
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| err(format!("bad number `{}`: {e}", s.trim())));
            report.entries.push(ReportEntry {
                key: key.trim().to_string(),
                value: num(value)?,
                uncertainty: unc.map(num).transpose()?,
            });
        }
        Ok(report)
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Near-threshold constants; every key must be present.
    pub fn threshold_params(&self) -> Result<ThresholdParams> {
        let mut v = [0.0; 7];
        for (slot, name) in v.iter_mut().zip(ThresholdParams::NAMES) {
            *slot = self
                .value(name)
                .ok_or_else(|| Error::InsufficientData(format!("fit report lacks `{name}`")))?;
        }
        Ok(ThresholdParams::from_array(v))
    }

    /// Universal-scaling constants, taking `A`, `p_c0`, `nu0` and `a` from
    /// the report where present and from the reference values otherwise.
    pub fn universal_params(&self) -> UniversalScalingParams {
        let r = UniversalScalingParams::REFERENCE;
        UniversalScalingParams {
            amplitude: self.value("A").unwrap_or(r.amplitude),
            decay: self.value("a").unwrap_or(r.decay),
            p_c0: self.value("p_c0").unwrap_or(r.p_c0),
            nu0: self.value("nu0").unwrap_or(r.nu0),
        }
    }
}

impl std::fmt::Display for FitReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut out = String::new();
        for c in &self.comments {
            let _ = writeln!(out, "# {c}");
        }
        for e in &self.entries {
            match e.uncertainty {
                Some(u) => {
                    let _ = writeln!(out, "{} = {} ± {}", e.key, e.value, u);
                }
                None => {
                    let _ = writeln!(out, "{} = {}", e.key, e.value);
                }
            }
        }
        f.write_str(&out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(n: u64, nf: u64) -> ResultRow {
        let est = FailureEstimate::new(n, nf);
        let cfg = TrialConfig { size: 5, p: 0.05, trials: n, tau: 0.02, master_seed: 7 };
        ResultRow::new(&cfg, &est, 0.25)
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![row(10_000, 123), row(3, 1), row(100, 0)];
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(read_rows(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn inconsistent_rows_are_rejected() {
        let text = format!("{CSV_HEADER}\n5,0.05,0.02,100,3,0.04,0.017,1,0.1\n");
        let err = read_rows(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
        let bad_header = "L,p\n5,0.1\n";
        assert!(read_rows(bad_header.as_bytes()).is_err());
        let more = format!("{CSV_HEADER}\n5,0.05,0.02,10,11,1.1,0,1,0.1\n");
        assert!(read_rows(more.as_bytes()).is_err());
    }

    #[test]
    fn append_writes_header_once() {
        let dir = std::env::temp_dir().join(format!("toric-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rows.csv");
        let _ = std::fs::remove_file(&path);
        append_rows(&path, &[row(10, 1)]).unwrap();
        append_rows(&path, &[row(20, 2), row(30, 3)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("L,p").count(), 1);
        assert_eq!(read_rows_from_path(&path).unwrap().len(), 3);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn report_round_trip() {
        let mut r = FitReport::default();
        r.comment("kind: decay");
        r.push("a", 32.31, Some(0.13));
        r.push(CHI2_KEY, 0.9, None);
        let parsed = FitReport::parse(&r.to_string()).unwrap();
        assert_eq!(parsed, r);
        assert_eq!(parsed.universal_params().decay, 32.31);
        assert_eq!(parsed.universal_params().p_c0, 0.1028);
        assert!(parsed.threshold_params().is_err());
        assert_eq!(FitReport::parse("x = 1 +/- 2").unwrap().get("x").unwrap().uncertainty, Some(2.0));
        assert!(matches!(FitReport::parse("\nx 1"), Err(Error::Parse { line: 2, .. })));
        assert!(FitReport::parse("x = abc").is_err());
    }

    proptest! {
        #[test]
        fn csv_floats_are_lossless(p in 0.0f64..0.5, tau in 0.0f64..0.1, n in 1u64..1_000_000, frac in 0.0f64..=1.0, wall in 0.0f64..1e4) {
            let nf = (n as f64 * frac) as u64;
            let est = FailureEstimate::new(n, nf);
            let cfg = TrialConfig { size: 9, p, trials: n, tau, master_seed: u64::MAX };
            let rows = vec![ResultRow::new(&cfg, &est, wall)];
            let mut buf = Vec::new();
            write_rows(&mut buf, &rows).unwrap();
            prop_assert_eq!(read_rows(buf.as_slice()).unwrap(), rows);
        }
    }
}
