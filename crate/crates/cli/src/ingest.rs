//! Reading cells from micro-data or cell-summary CSV files.
//!
//! Cell-summary files are in long format with header
//! `cell,weight,p1,arm,value,mass`: one row per support point of one arm of
//! one cell, `arm` being `1` (treated) or `0` (control).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use cdep_bounds::{Cell, StepCdf};

use crate::config::Columns;
use crate::error::{CliError, Result};

/// Cells plus the ids of cells removed for lack of overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub cells: Vec<Cell>,
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct OverlapPolicy {
    pub epsilon: f64,
    pub drop: bool,
}

#[derive(Default)]
struct Tally {
    treated: BTreeMap<OrderedValue, u64>,
    control: BTreeMap<OrderedValue, u64>,
}

/// `f64` keyed by its total order, so outcomes can index a `BTreeMap`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct OrderedValue(f64);

impl Eq for OrderedValue {}

impl PartialOrd for OrderedValue {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedValue {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| CliError::Validation(format!("missing column '{name}'")))
}

fn parse_real(text: &str, what: &str, line: u64) -> Result<f64> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| CliError::Validation(format!("line {line}: {what} '{text}' is not a number")))?;
    if !v.is_finite() {
        return Err(CliError::Validation(format!("line {line}: {what} is not finite")));
    }
    Ok(v)
}

fn counts_to_cdf(counts: &BTreeMap<OrderedValue, u64>) -> Result<StepCdf> {
    let n: u64 = counts.values().sum();
    StepCdf::from_masses(counts.iter().map(|(v, &c)| (v.0, c as f64 / n as f64)))
        .map_err(CliError::bounds("building arm distribution"))
}

/// Applies the overlap policy and renormalizes weights of kept cells.
fn apply_overlap(candidates: Vec<(String, f64, f64, Option<StepCdf>, Option<StepCdf>)>, policy: OverlapPolicy) -> Result<Ingested> {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (id, weight, p1, f1, f0) in candidates {
        let violates = p1 < policy.epsilon || p1 > 1.0 - policy.epsilon || f1.is_none() || f0.is_none() || p1 <= 0.0 || p1 >= 1.0;
        if violates {
            if policy.drop {
                dropped.push(id);
                continue;
            }
            let reason = match (&f1, &f0) {
                (None, _) => "no treated units".to_string(),
                (_, None) => "no control units".to_string(),
                _ => format!("propensity {p1} outside [{e}, {}]", 1.0 - policy.epsilon, e = policy.epsilon),
            };
            return Err(CliError::Overlap(format!("cell '{id}': {reason}")));
        }
        kept.push((id, weight, p1, f1.expect("checked"), f0.expect("checked")));
    }
    if kept.is_empty() {
        return Err(CliError::Overlap("no cell satisfies overlap".into()));
    }
    let total: f64 = kept.iter().map(|k| k.1).sum();
    let renormalize = !dropped.is_empty();
    let cells = kept
        .into_iter()
        .map(|(id, w, p1, f1, f0)| {
            let weight = if renormalize { w / total } else { w };
            Cell::new(id.clone(), weight, p1, f1, f0).map_err(CliError::bounds(format!("cell '{id}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ingested { cells, dropped })
}

/// Reads micro-data `(outcome, treatment, covariates...)`.
///
/// Each distinct covariate tuple becomes a cell with id `v1|v2|...`.
pub fn ingest_csv<R: Read>(reader: R, columns: &Columns, policy: OverlapPolicy) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let yi = column_index(&headers, &columns.outcome)?;
    let xi = column_index(&headers, &columns.treatment)?;
    if columns.covariates.is_empty() {
        return Err(CliError::Validation("at least one covariate column is required".into()));
    }
    let wi: Vec<usize> = columns
        .covariates
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<_>>()?;

    let mut tallies: BTreeMap<String, Tally> = BTreeMap::new();
    let mut n = 0u64;
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let line = row as u64 + 2;
        let y = parse_real(&record[yi], "outcome", line)?;
        let x = parse_real(&record[xi], "treatment", line)?;
        let id = wi.iter().map(|&i| record[i].to_string()).collect::<Vec<_>>().join("|");
        let tally = tallies.entry(id).or_default();
        let arm = if x == 1.0 {
            &mut tally.treated
        } else if x == 0.0 {
            &mut tally.control
        } else {
            return Err(CliError::Validation(format!("line {line}: non-binary treatment '{}'", &record[xi])));
        };
        *arm.entry(OrderedValue(y)).or_default() += 1;
        n += 1;
    }
    if n == 0 {
        return Err(CliError::Validation("no data rows".into()));
    }

    let candidates = tallies
        .into_iter()
        .map(|(id, t)| {
            let n1: u64 = t.treated.values().sum();
            let n0: u64 = t.control.values().sum();
            let weight = (n1 + n0) as f64 / n as f64;
            let p1 = n1 as f64 / (n1 + n0) as f64;
            let f1 = if n1 > 0 { Some(counts_to_cdf(&t.treated)?) } else { None };
            let f0 = if n0 > 0 { Some(counts_to_cdf(&t.control)?) } else { None };
            Ok((id, weight, p1, f1, f0))
        })
        .collect::<Result<Vec<_>>>()?;
    apply_overlap(candidates, policy)
}

#[derive(Default)]
struct SummaryCell {
    weight: Option<f64>,
    p1: Option<f64>,
    treated: Vec<(f64, f64)>,
    control: Vec<(f64, f64)>,
}

/// Reads a cell-summary file.
pub fn ingest_cell_summary<R: Read>(reader: R, policy: OverlapPolicy) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = ["cell", "weight", "p1", "arm", "value", "mass"]
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<_>>()?;
    let mut cells: BTreeMap<String, SummaryCell> = BTreeMap::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let line = row as u64 + 2;
        let id = record[idx[0]].to_string();
        let weight = parse_real(&record[idx[1]], "weight", line)?;
        let p1 = parse_real(&record[idx[2]], "p1", line)?;
        let value = parse_real(&record[idx[4]], "value", line)?;
        let mass = parse_real(&record[idx[5]], "mass", line)?;
        let entry = cells.entry(id.clone()).or_default();
        for (slot, v, name) in [(&mut entry.weight, weight, "weight"), (&mut entry.p1, p1, "p1")] {
            match slot {
                Some(prev) if *prev != v => {
                    return Err(CliError::Validation(format!("line {line}: inconsistent {name} for cell '{id}'")))
                }
                _ => *slot = Some(v),
            }
        }
        match record[idx[3]].trim() {
            "1" => entry.treated.push((value, mass)),
            "0" => entry.control.push((value, mass)),
            other => return Err(CliError::Validation(format!("line {line}: non-binary treatment arm '{other}'"))),
        }
    }
    if cells.is_empty() {
        return Err(CliError::Validation("no data rows".into()));
    }
    let total: f64 = cells.values().map(|c| c.weight.unwrap_or(0.0)).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(CliError::Validation(format!("cell weights sum to {total}")));
    }
    let candidates = cells
        .into_iter()
        .map(|(id, c)| {
            let build = |points: Vec<(f64, f64)>| -> Result<Option<StepCdf>> {
                if points.is_empty() {
                    return Ok(None);
                }
                StepCdf::from_masses(points)
                    .map(Some)
                    .map_err(CliError::bounds(format!("cell '{id}'")))
            };
            let (w, p1) = (c.weight.expect("set with first row"), c.p1.expect("set with first row"));
            Ok((id.clone(), w, p1, build(c.treated)?, build(c.control)?))
        })
        .collect::<Result<Vec<_>>>()?;
    apply_overlap(candidates, policy)
}

/// Writes cells in the cell-summary format.
pub fn write_cell_summary<W: Write>(cells: &[Cell], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["cell", "weight", "p1", "arm", "value", "mass"])?;
    for cell in cells {
        for (arm, cdf) in [("1", &cell.f_treated), ("0", &cell.f_control)] {
            for (value, mass) in cdf.masses() {
                w.write_record([
                    cell.id.clone(),
                    cell.weight.to_string(),
                    cell.p1.to_string(),
                    arm.to_string(),
                    value.to_string(),
                    mass.to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(CliError::io("cell summary"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const STRICT: OverlapPolicy = OverlapPolicy { epsilon: 0.0, drop: false };

    #[test]
    fn fixture_micro_data() {
        let data = "y,x,w\n0,1,a\n1,1,a\n0,0,a\n1,0,a\n";
        let got = ingest_csv(data.as_bytes(), &Columns::default(), STRICT).unwrap();
        assert_eq!(got.cells.len(), 1);
        let c = &got.cells[0];
        assert_eq!((c.id.as_str(), c.weight, c.p1), ("a", 1.0, 0.5));
        assert_eq!(c.f_treated, StepCdf::two_point(0.0, 1.0, 0.5).unwrap());
        assert_eq!(c.f_control, c.f_treated);
    }

    #[test]
    fn rejects_non_binary_treatment() {
        let data = "y,x,w\n0,2,a\n";
        let err = ingest_csv(data.as_bytes(), &Columns::default(), STRICT).unwrap_err();
        assert!(err.to_string().contains("non-binary treatment"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn missing_column() {
        let err = ingest_csv("y,t,w\n0,1,a\n".as_bytes(), &Columns::default(), STRICT).unwrap_err();
        assert!(err.to_string().contains("missing column 'x'"));
    }

    #[test]
    fn empty_arm_is_overlap_violation() {
        let data = "y,x,w\n0,1,a\n1,0,a\n0,1,b\n";
        let err = ingest_csv(data.as_bytes(), &Columns::default(), STRICT).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("'b'"));
        let got = ingest_csv(data.as_bytes(), &Columns::default(), OverlapPolicy { epsilon: 0.0, drop: true }).unwrap();
        assert_eq!(got.dropped, vec!["b".to_string()]);
        assert_eq!(got.cells[0].weight, 1.0);
    }

    #[test]
    fn summary_round_trip() {
        let data = "y,x,w,v\n0,1,a,1\n1,1,a,1\n0,0,a,1\n2,0,a,1\n5,1,b,1\n1,0,b,1\n3,0,b,1\n";
        let columns = Columns {
            covariates: vec!["w".into(), "v".into()],
            ..Columns::default()
        };
        let got = ingest_csv(data.as_bytes(), &columns, STRICT).unwrap();
        assert_eq!(got.cells[1].id, "b|1");
        let mut buf = Vec::new();
        write_cell_summary(&got.cells, &mut buf).unwrap();
        let again = ingest_cell_summary(buf.as_slice(), STRICT).unwrap();
        assert_eq!(again.cells.len(), 2);
        for (a, b) in got.cells.iter().zip(&again.cells) {
            assert_eq!((a.weight, a.p1), (b.weight, b.p1));
            assert_eq!(a.f_treated.support(), b.f_treated.support());
            for (x, y) in a.f_control.cumulative().iter().zip(b.f_control.cumulative()) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn summary_validation() {
        let bad = "cell,weight,p1,arm,value,mass\na,0.5,0.5,1,0,1\na,0.6,0.5,0,0,1\n";
        assert!(ingest_cell_summary(bad.as_bytes(), STRICT).is_err());
        let bad = "cell,weight,p1,arm,value,mass\na,1,0.5,2,0,1\n";
        assert!(ingest_cell_summary(bad.as_bytes(), STRICT).is_err());
        let no_control = "cell,weight,p1,arm,value,mass\na,1,0.5,1,0,1\n";
        assert_eq!(ingest_cell_summary(no_control.as_bytes(), STRICT).unwrap_err().exit_code(), 3);
    }
}
