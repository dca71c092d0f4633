//! Report rows and their CSV and text renderings.

use std::fmt::Write as _;

use cdep_bounds::{BoundFlag, BoundInterval};
use sha2::{Digest, Sha256};

use crate::problem::GridPoint;

/// Formats with 12 significant digits in the shortest round-trip form.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    rounded.to_string()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

fn flag_name(f: BoundFlag) -> &'static str {
    match f {
        BoundFlag::CollapsedSensitivity => "collapsed_sensitivity",
        BoundFlag::ClampedSensitivity => "clamped_sensitivity",
        BoundFlag::CopulaDependent => "copula_dependent",
    }
}

/// SHA-256 hex digest of arbitrary bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub estimand: String,
    pub params: String,
    pub grid_index: usize,
    pub level: String,
    pub lambda_lo: Option<f64>,
    pub lambda_hi: Option<f64>,
    pub c_lo_min: f64,
    pub c_hi_max: f64,
    /// First 12 hex digits of the digest of all per-cell `(c_lo, c_hi)`.
    pub cells_digest: String,
    pub lo: f64,
    pub hi: f64,
    pub flags: Vec<BoundFlag>,
}

impl ReportRow {
    pub fn new(point: &GridPoint, b: BoundInterval) -> Self {
        let listing: String = point
            .per_cell
            .iter()
            .map(|s| format!("{}:{};", fmt_num(s.c_lo), fmt_num(s.c_hi)))
            .collect();
        Self {
            estimand: b.estimand.tag().to_string(),
            params: b.estimand.params_label(),
            grid_index: point.index,
            level: point.level.clone(),
            lambda_lo: point.lambda.map(|l| l.0),
            lambda_hi: point.lambda.map(|l| l.1),
            c_lo_min: point.per_cell.iter().map(|s| s.c_lo).fold(f64::INFINITY, f64::min),
            c_hi_max: point.per_cell.iter().map(|s| s.c_hi).fold(f64::NEG_INFINITY, f64::max),
            cells_digest: sha256_hex(listing.as_bytes())[..12].to_string(),
            lo: b.lo,
            hi: b.hi,
            flags: b.flags,
        }
    }

    fn fields(&self) -> [String; 12] {
        [
            self.estimand.clone(),
            self.params.clone(),
            self.grid_index.to_string(),
            self.level.clone(),
            fmt_opt(self.lambda_lo),
            fmt_opt(self.lambda_hi),
            fmt_num(self.c_lo_min),
            fmt_num(self.c_hi_max),
            self.cells_digest.clone(),
            fmt_num(self.lo),
            fmt_num(self.hi),
            self.flags.iter().map(|f| flag_name(*f)).collect::<Vec<_>>().join(";"),
        ]
    }
}

pub const CSV_HEADER: [&str; 12] = [
    "estimand",
    "params",
    "grid_index",
    "level",
    "lambda_lo",
    "lambda_hi",
    "c_lo_min",
    "c_hi_max",
    "cells_digest",
    "lo",
    "hi",
    "flags",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub input_digest: String,
    pub config: String,
    pub version: String,
    pub dropped_cells: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreakdownRow {
    pub estimand: String,
    pub params: String,
    pub target: f64,
    pub lambda_max: f64,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub breakdowns: Vec<BreakdownRow>,
    pub provenance: Provenance,
}

impl Report {
    pub fn new(rows: Vec<ReportRow>) -> Self {
        Self {
            rows,
            breakdowns: Vec::new(),
            provenance: Provenance {
                version: env!("CARGO_PKG_VERSION").to_string(),
                ..Provenance::default()
            },
        }
    }

    fn provenance_lines(&self) -> Vec<String> {
        let p = &self.provenance;
        let mut lines = vec![
            format!("cdep-bounds version: {}", p.version),
            format!("input sha256: {}", p.input_digest),
            format!(
                "dropped cells: {}",
                if p.dropped_cells.is_empty() { "none".to_string() } else { p.dropped_cells.join(", ") }
            ),
            "config:".to_string(),
        ];
        lines.extend(p.config.lines().map(|l| format!("  {l}").trim_end().to_string()));
        lines
    }

    /// The bound table alone, with header.
    pub fn rows_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.fields()).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    /// Provenance as `#` comment lines, then the bound table, then
    /// breakdown values as trailing comments.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for line in self.provenance_lines() {
            writeln!(out, "# {line}").unwrap();
        }
        out.push_str(&self.rows_csv());
        for b in &self.breakdowns {
            writeln!(out, "# {}", breakdown_line(b)).unwrap();
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("cdep-bounds report\n");
        for line in self.provenance_lines() {
            writeln!(out, "{line}").unwrap();
        }
        let mut current = None;
        for row in &self.rows {
            let key = (row.estimand.as_str(), row.params.as_str());
            if current != Some(key) {
                if row.params.is_empty() {
                    writeln!(out, "\n[{}]", row.estimand).unwrap();
                } else {
                    writeln!(out, "\n[{} {}]", row.estimand, row.params).unwrap();
                }
                current = Some(key);
            }
            let f = row.fields();
            write!(out, "  {:>3}  {:<18} [{}, {}]", row.grid_index, row.level, f[9], f[10]).unwrap();
            write!(out, "  c in [{}, {}] digest {}", f[6], f[7], f[8]).unwrap();
            if !f[11].is_empty() {
                write!(out, "  ({})", f[11]).unwrap();
            }
            out.push('\n');
        }
        if !self.breakdowns.is_empty() {
            out.push_str("\nbreakdown\n");
            for b in &self.breakdowns {
                writeln!(out, "  {}", breakdown_line(b)).unwrap();
            }
        }
        out
    }
}

fn breakdown_line(b: &BreakdownRow) -> String {
    let value = match b.value {
        Some(v) => fmt_num(v),
        None => format!("none (not reached by lambda {})", fmt_num(b.lambda_max)),
    };
    let label = if b.params.is_empty() { b.estimand.clone() } else { format!("{} {}", b.estimand, b.params) };
    format!("breakdown {label} target={}: lambda={value}", fmt_num(b.target))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting() {
        assert_eq!(fmt_num(2.0 / 7.0), "0.285714285714");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(123456789.123456789), "123456789.123");
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
    }

    #[test]
    fn empty_report_has_provenance() {
        let mut r = Report::new(vec![]);
        r.provenance.input_digest = "abc".into();
        let csv = r.to_csv();
        assert!(csv.starts_with("# cdep-bounds version"));
        assert!(csv.contains("input sha256: abc"));
        assert!(csv.trim_end().ends_with("flags"));
    }
}
