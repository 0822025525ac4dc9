//! Report serialization: deterministic CSV and JSON.
//!
//! Identical reports serialize to identical bytes. CSV uses `.` as the
//! decimal separator and 17 significant digits for reals; whole numbers
//! print without an exponent.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiments::{ExperimentReport, Table};
use crate::stationary::{CoefficientSequence, RootClassification};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Domain(format!("unknown format {other:?} (csv|json)"))),
        }
    }
}

/// A real with 17 significant digits; integers stay plain.
pub fn fmt_real(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 9.0e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:.16e}")
    }
}

/// One table as CSV (header then rows).
pub fn table_to_csv(table: &Table) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", table.columns.join(","));
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|&v| fmt_real(v)).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

/// A whole report as CSV: each table prefixed by a `# table:` comment line.
pub fn report_to_csv(report: &ExperimentReport) -> String {
    let mut out = String::new();
    for table in &report.tables {
        let _ = writeln!(out, "# table: {}", table.name);
        out.push_str(&table_to_csv(table));
    }
    out
}

pub fn report_to_json(report: &ExperimentReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serialization");
    s.push('\n');
    s
}

/// Writes a report in the requested format.
pub fn emit_report(report: &ExperimentReport, path: &Path, format: Format) -> Result<()> {
    let bytes = match format {
        Format::Csv => report_to_csv(report),
        Format::Json => report_to_json(report),
    };
    fs::write(path, bytes)?;
    Ok(())
}

/// Coefficient sequence as CSV with columns `h,b_h`.
pub fn coefficients_to_csv(seq: &CoefficientSequence) -> String {
    let mut out = String::from("h,b_h\n");
    for (h, &b) in seq.b.iter().enumerate() {
        let _ = writeln!(out, "{h},{}", fmt_real(b));
    }
    out
}

#[derive(Serialize)]
struct RootEntry {
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct RootCounts {
    inside: usize,
    on: usize,
    outside: usize,
}

#[derive(Serialize)]
struct RootsJson {
    roots: Vec<RootEntry>,
    counts: RootCounts,
    nu1: f64,
}

/// Root classification as JSON: `roots[{re,im}]`, `counts{inside,on,outside}`,
/// `nu1`.
pub fn roots_to_json(rc: &RootClassification) -> String {
    let doc = RootsJson {
        roots: rc
            .roots
            .iter()
            .map(|z: &Complex64| RootEntry { re: z.re, im: z.im })
            .collect(),
        counts: RootCounts {
            inside: rc.inside,
            on: rc.on_circle,
            outside: rc.outside,
        },
        nu1: rc.nu1,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("roots serialization");
    s.push('\n');
    s
}

/// Writes arbitrary bytes, mapping failures to I/O errors.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stationary::solve_b;

    #[test]
    fn real_formatting() {
        assert_eq!(fmt_real(3.0), "3");
        assert_eq!(fmt_real(-14.0), "-14");
        assert_eq!(fmt_real(0.5), "5.0000000000000000e-1");
        // 17 significant digits round-trip.
        let x = 0.1234567890123456789;
        let s = fmt_real(x);
        assert_eq!(s.parse::<f64>().unwrap(), x);
    }

    #[test]
    fn coefficient_csv_layout() {
        let seq = solve_b(0.75, 1, 1, 5).unwrap();
        let csv = coefficients_to_csv(&seq);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "h,b_h");
        let first = lines.next().unwrap();
        assert!(first.starts_with("0,"));
        assert_eq!(csv.lines().count(), 7);
    }

    #[test]
    fn roots_json_schema() {
        let rc = crate::stationary::char_roots(0.5, 2, 1).unwrap();
        let json = roots_to_json(&rc);
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(value["roots"].as_array().unwrap().len() == 3);
        assert!(value["roots"][0]["re"].is_number());
        assert!(value["roots"][0]["im"].is_number());
        assert_eq!(value["counts"]["inside"], 1);
        assert_eq!(value["counts"]["on"], 1);
        assert_eq!(value["counts"]["outside"], 1);
        assert!(value["nu1"].is_number());
        // Emission is deterministic.
        assert_eq!(json, roots_to_json(&rc));
    }
}
