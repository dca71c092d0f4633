//! Oracle suite on a small problem.

use cdep_bounds::oracle::{attainable_cdf_range, verify_witness};
use cdep_bounds::{compute_envelopes, Arm, Conditioning, Side};

use crate::error::{CliError, Result};
use crate::problem::{grid_points, Problem};
use crate::report::fmt_num;

/// Largest arm support the check enumerates.
pub const MAX_CHECK_SUPPORT: usize = 4;

/// Attained values may exit the envelope band by at most this much.
pub const SOUNDNESS_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub lines: Vec<String>,
    pub failures: usize,
    pub skipped: usize,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Compares the oracle range of every envelope value with the closed form
/// and verifies the switching-score witnesses, at every grid point.
pub fn oracle_check(problem: &Problem, resolution: usize, gap_tolerance: f64) -> Result<CheckOutcome> {
    let points = grid_points(&problem.cells, &problem.sensitivity)?;
    let mut out = CheckOutcome {
        lines: Vec::new(),
        failures: 0,
        skipped: 0,
    };
    for point in &points {
        for (cell, &s) in problem.cells.iter().zip(&point.per_cell) {
            let env = compute_envelopes(cell, s).map_err(CliError::bounds(format!("cell '{}'", cell.id)))?;
            for arm in Arm::BOTH {
                let observed = cell.observed(arm);
                if observed.len() > MAX_CHECK_SUPPORT {
                    out.skipped += 1;
                    out.lines.push(format!("SKIP {} {} {arm:?}: support {} too large", point.level, cell.id, observed.len()));
                    continue;
                }
                for &y in observed.support() {
                    let lo = env.get(arm, Side::Lo, Conditioning::Marginal).eval(y);
                    let hi = env.get(arm, Side::Hi, Conditioning::Marginal).eval(y);
                    let r = attainable_cdf_range(cell, s, arm, y, resolution)
                        .map_err(CliError::bounds(format!("oracle on cell '{}'", cell.id)))?;
                    let sound = r.min >= lo - SOUNDNESS_SLACK && r.max <= hi + SOUNDNESS_SLACK;
                    let gap = (r.min - lo).max(hi - r.max);
                    let ok = sound && gap <= gap_tolerance;
                    out.failures += usize::from(!ok);
                    out.lines.push(format!(
                        "{} {} {} {arm:?} y={}: band [{}, {}] oracle [{}, {}]",
                        if ok { "PASS" } else { "FAIL" },
                        point.level,
                        cell.id,
                        fmt_num(y),
                        fmt_num(lo),
                        fmt_num(hi),
                        fmt_num(r.min),
                        fmt_num(r.max)
                    ));
                }
                for side in Side::BOTH {
                    let report = verify_witness(cell, s, arm, side);
                    out.failures += usize::from(!report.passed());
                    out.lines.push(format!(
                        "{} {} {} witness {arm:?} {side:?}{}",
                        if report.passed() { "PASS" } else { "FAIL" },
                        point.level,
                        cell.id,
                        if report.passed() { String::new() } else { format!(": {}", report.failed_checks().join(", ")) }
                    ));
                }
            }
        }
    }
    Ok(out)
}
