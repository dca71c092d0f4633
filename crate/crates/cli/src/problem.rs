//! Problem assembly, sensitivity grids, grid sweeps and breakdown search.

use cdep_bounds::models::{cdep_from_conditional_c, cdep_from_gmsm};
use cdep_bounds::params::bounds;
use cdep_bounds::{BoundFlag, BoundInterval, Cell, CellSensitivity, Estimand, GmsmBounds, ProblemEnvelopes};
use rayon::prelude::*;

use crate::config::SensitivitySpec;
use crate::error::{CliError, Result};
use crate::report::{Report, ReportRow};

/// Slack for the end-to-end nesting re-check across grid points.
pub const NESTING_SLACK: f64 = 1e-9;

/// Bisection tolerance of [`breakdown`] on Λ.
pub const BREAKDOWN_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub cells: Vec<Cell>,
    pub estimands: Vec<Estimand>,
    pub sensitivity: SensitivitySpec,
    pub epsilon_overlap: f64,
}

impl Problem {
    pub fn new(mut cells: Vec<Cell>, estimands: Vec<Estimand>, sensitivity: SensitivitySpec, epsilon_overlap: f64) -> Result<Self> {
        if cells.is_empty() {
            return Err(CliError::Validation("problem has no cells".into()));
        }
        let total: f64 = cells.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(CliError::Validation(format!("cell weights sum to {total}")));
        }
        for c in &cells {
            c.check_overlap(epsilon_overlap)
                .map_err(|e| CliError::Overlap(e.to_string()))?;
        }
        cells.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Self {
            cells,
            estimands,
            sensitivity,
            epsilon_overlap,
        })
    }
}

/// One sensitivity level resolved to per-cell `(c_lo, c_hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub level: String,
    pub lambda: Option<(f64, f64)>,
    pub per_cell: Vec<CellSensitivity>,
    pub clamped: bool,
}

fn gmsm_point(cells: &[Cell], index: usize, level: String, g: GmsmBounds) -> Result<GridPoint> {
    let per_cell = cells
        .iter()
        .map(|c| cdep_from_gmsm(c.p1, g).map_err(CliError::bounds(format!("cell '{}'", c.id))))
        .collect::<Result<_>>()?;
    Ok(GridPoint {
        index,
        level,
        lambda: Some((g.lambda_lo, g.lambda_hi)),
        per_cell,
        clamped: false,
    })
}

/// Resolves a sensitivity specification against the (sorted) cells.
pub fn grid_points(cells: &[Cell], spec: &SensitivitySpec) -> Result<Vec<GridPoint>> {
    let model = |e| CliError::bounds("sensitivity")(e);
    match spec {
        SensitivitySpec::Msm { lambdas } => lambdas
            .iter()
            .enumerate()
            .map(|(i, &l)| gmsm_point(cells, i, format!("lambda={l}"), GmsmBounds::msm(l).map_err(model)?))
            .collect(),
        SensitivitySpec::Gmsm { pairs } => pairs
            .iter()
            .enumerate()
            .map(|(i, &[lo, hi])| gmsm_point(cells, i, format!("lambda=({lo},{hi})"), GmsmBounds::new(lo, hi).map_err(model)?))
            .collect(),
        SensitivitySpec::ConditionalC { values } => values
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                if !(c >= 0.0 && c.is_finite()) {
                    return Err(CliError::Validation(format!("conditional c {c} must be nonnegative")));
                }
                let resolved: Vec<_> = cells.iter().map(|cell| cdep_from_conditional_c(cell.p1, c)).collect();
                Ok(GridPoint {
                    index: i,
                    level: format!("c={c}"),
                    lambda: None,
                    clamped: resolved.iter().any(|r| r.clamped),
                    per_cell: resolved.into_iter().map(|r| r.sensitivity).collect(),
                })
            })
            .collect(),
        SensitivitySpec::Raw { cells: raw } => {
            let per_cell = cells
                .iter()
                .map(|c| {
                    raw.get(&c.id)
                        .map(|&[lo, hi]| CellSensitivity::new(lo, hi))
                        .ok_or_else(|| CliError::Validation(format!("no sensitivity for cell '{}'", c.id)))
                })
                .collect::<Result<_>>()?;
            Ok(vec![GridPoint {
                index: 0,
                level: "raw".into(),
                lambda: None,
                per_cell,
                clamped: false,
            }])
        }
    }
}

fn evaluate_point(cells: &[Cell], point: &GridPoint, estimands: &[Estimand]) -> Result<Vec<BoundInterval>> {
    let problem = ProblemEnvelopes::new(cells.to_vec(), &point.per_cell)
        .map_err(CliError::bounds(format!("grid point {}", point.level)))?;
    estimands
        .iter()
        .map(|e| {
            let mut b = bounds(&problem, e).map_err(CliError::bounds(format!("{} at {}", e.tag(), point.level)))?;
            if point.clamped {
                b.add_flag(BoundFlag::ClampedSensitivity);
            }
            Ok(b)
        })
        .collect()
}

/// Checks that intervals grow with Λ for symmetric odds-ratio grids.
fn check_nesting(points: &[GridPoint], results: &[Vec<BoundInterval>]) -> Result<()> {
    let mut order: Vec<usize> = (0..points.len()).filter(|&i| points[i].lambda.is_some()).collect();
    order.sort_by(|&a, &b| {
        let (la, lb) = (points[a].lambda.unwrap(), points[b].lambda.unwrap());
        la.1.total_cmp(&lb.1)
    });
    for pair in order.windows(2) {
        let (inner, outer) = (points[pair[0]].lambda.unwrap(), points[pair[1]].lambda.unwrap());
        if !(outer.0 <= inner.0 && outer.1 >= inner.1) {
            continue;
        }
        for (a, b) in results[pair[0]].iter().zip(&results[pair[1]]) {
            if !a.is_within(b, NESTING_SLACK) {
                return Err(CliError::Invariant(format!(
                    "{} interval at {} is not nested in the one at {}",
                    a.estimand.tag(),
                    points[pair[0]].level,
                    points[pair[1]].level
                )));
            }
        }
    }
    Ok(())
}

/// Evaluates every estimand at every grid point.
pub fn run(problem: &Problem) -> Result<Report> {
    let points = grid_points(&problem.cells, &problem.sensitivity)?;
    let results = points
        .par_iter()
        .map(|p| evaluate_point(&problem.cells, p, &problem.estimands))
        .collect::<Result<Vec<_>>>()?;
    check_nesting(&points, &results)?;
    let mut rows: Vec<(usize, ReportRow)> = Vec::new();
    for (point, intervals) in points.iter().zip(results) {
        for (k, interval) in intervals.into_iter().enumerate() {
            rows.push((k, ReportRow::new(point, interval)));
        }
    }
    rows.sort_by(|(ka, a), (kb, b)| {
        a.estimand
            .cmp(&b.estimand)
            .then(ka.cmp(kb))
            .then(a.grid_index.cmp(&b.grid_index))
    });
    Ok(Report::new(rows.into_iter().map(|(_, r)| r).collect()))
}

fn covers_at(cells: &[Cell], estimand: &Estimand, target: f64, lambda: f64) -> Result<bool> {
    let point = gmsm_point(cells, 0, String::new(), GmsmBounds::msm(lambda).map_err(CliError::bounds("breakdown"))?)?;
    let b = evaluate_point(cells, &point, std::slice::from_ref(estimand))?;
    Ok(b[0].contains(target, 0.0))
}

/// Smallest Λ (to [`BREAKDOWN_TOLERANCE`]) whose interval covers `target`,
/// or `None` if even `lambda_max` does not.
pub fn breakdown(problem: &Problem, estimand: &Estimand, target: f64, lambda_max: f64) -> Result<Option<f64>> {
    if estimand.is_copula_dependent() {
        return Err(CliError::Validation(format!(
            "breakdown is not defined for copula-dependent estimand '{}'",
            estimand.tag()
        )));
    }
    if !(lambda_max >= 1.0 && lambda_max.is_finite()) {
        return Err(CliError::Validation(format!("lambda_max {lambda_max} must be at least 1")));
    }
    let cells = &problem.cells;
    if covers_at(cells, estimand, target, 1.0)? {
        return Ok(Some(1.0));
    }
    if !covers_at(cells, estimand, target, lambda_max)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (1.0, lambda_max);
    while hi - lo > BREAKDOWN_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if covers_at(cells, estimand, target, mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use cdep_bounds::StepCdf;

    fn fixture_cells() -> Vec<Cell> {
        let b = StepCdf::two_point(0.0, 1.0, 0.5).unwrap();
        vec![Cell::new("a", 1.0, 0.5, b.clone(), b).unwrap()]
    }

    fn msm(lambdas: &[f64]) -> SensitivitySpec {
        SensitivitySpec::Msm { lambdas: lambdas.to_vec() }
    }

    #[test]
    fn fixture_runs() {
        let p = Problem::new(fixture_cells(), vec![Estimand::Ate], msm(&[1.0]), 0.0).unwrap();
        let r = run(&p).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!((r.rows[0].lo, r.rows[0].hi), (0.0, 0.0));

        let p = Problem::new(fixture_cells(), vec![Estimand::Ate], msm(&[1.0, 2.0]), 0.0).unwrap();
        let r = run(&p).unwrap();
        let direct = ProblemEnvelopes::uniform(fixture_cells(), CellSensitivity::new(1.0 / 3.0, 2.0 / 3.0)).unwrap();
        let b = bounds(&direct, &Estimand::Ate).unwrap();
        assert!((r.rows[1].lo - b.lo).abs() < 1e-12 && (r.rows[1].hi - b.hi).abs() < 1e-12);

        let p = Problem::new(fixture_cells(), vec![], msm(&[1.0]), 0.0).unwrap();
        assert!(run(&p).unwrap().rows.is_empty());
    }

    #[test]
    fn grid_kinds() {
        let cells = fixture_cells();
        let g = grid_points(&cells, &SensitivitySpec::ConditionalC { values: vec![0.1, 0.6] }).unwrap();
        assert!(!g[0].clamped && g[1].clamped);
        let g = grid_points(&cells, &SensitivitySpec::Gmsm { pairs: vec![[0.5, 2.0]] }).unwrap();
        assert!((g[0].per_cell[0].c_lo - 1.0 / 3.0).abs() < 1e-15);
        assert!(grid_points(&cells, &SensitivitySpec::Raw { cells: Default::default() }).is_err());
        assert!(grid_points(&cells, &msm(&[0.5])).is_err());
    }

    #[test]
    fn breakdown_examples() {
        let p = Problem::new(fixture_cells(), vec![], msm(&[1.0]), 0.0).unwrap();
        assert_eq!(breakdown(&p, &Estimand::Ate, 0.0, 10.0).unwrap(), Some(1.0));
        assert_eq!(breakdown(&p, &Estimand::Ate, 5.0, 10.0).unwrap(), None);
        assert!(breakdown(&p, &Estimand::Dte { z: 0.0 }, 0.0, 10.0).is_err());

        // point-identified ATE of 0.3
        let f1 = StepCdf::two_point(0.0, 1.0, 0.2).unwrap();
        let f0 = StepCdf::two_point(0.0, 1.0, 0.5).unwrap();
        let cells = vec![Cell::new("a", 1.0, 0.5, f1, f0).unwrap()];
        let p = Problem::new(cells.clone(), vec![], msm(&[1.0]), 0.0).unwrap();
        let star = breakdown(&p, &Estimand::Ate, 0.0, 10.0).unwrap().unwrap();
        assert!(star > 1.0);
        assert!(covers_at(&cells, &Estimand::Ate, 0.0, star + 1e-4).unwrap());
        assert!(!covers_at(&cells, &Estimand::Ate, 0.0, star - 1e-4).unwrap());
    }

    #[test]
    fn problem_validation() {
        let mut cells = fixture_cells();
        cells[0].weight = 0.5;
        assert!(Problem::new(cells, vec![], msm(&[1.0]), 0.0).is_err());
        let e = Problem::new(fixture_cells(), vec![], msm(&[1.0]), 0.6).unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }
}
