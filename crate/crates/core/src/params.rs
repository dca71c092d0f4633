//! Bound intervals for treatment-effect parameters.
//!
//! Copula-free estimands are monotone in the potential-outcome CDFs, so
//! their sharp bounds come from substituting the CDF envelopes with the
//! orientation fixed per estimand. The mean of an *upper* CDF envelope is a
//! *lower* expectation bound, and the left-inverse of an upper CDF envelope
//! is a lower quantile bound.
//!
//! The joint CDF and the distribution of `Y₁ − Y₀` also depend on the
//! copula; they use Fréchet–Hoeffding and Makarov bounds evaluated against
//! the `(X, W)`-conditional envelopes.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dist::StepCdf;
use crate::envelopes::{
    aggregate_marginal, aggregate_treated_control_outcome, aggregate_treated_outcome, envelope_quantile, Arm, Cell,
    CellEnvelopes, Conditioning, ProblemEnvelopes, Side,
};
use crate::error::{BoundsError, Result};
use crate::models::CellSensitivity;

/// Allowed slack in `lo <= hi`.
pub const ORDER_SLACK: f64 = 1e-12;

/// Per-cell weight function `ω(w)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum WeightFunction {
    Constant(f64),
    /// Keyed by cell id; every cell must be present.
    PerCell(BTreeMap<String, f64>),
}

impl WeightFunction {
    pub fn one() -> Self {
        WeightFunction::Constant(1.0)
    }

    /// Values aligned with `cells`, each checked to lie in `[min, max]`.
    pub fn resolve(&self, cells: &[Cell], min: f64, max: f64) -> Result<Vec<f64>> {
        let values = match self {
            WeightFunction::Constant(v) => vec![*v; cells.len()],
            WeightFunction::PerCell(map) => cells
                .iter()
                .map(|c| {
                    map.get(&c.id)
                        .copied()
                        .ok_or_else(|| BoundsError::InvalidWeights(format!("no weight for cell '{}'", c.id)))
                })
                .collect::<Result<_>>()?,
        };
        if let Some(bad) = values.iter().find(|v| !(**v >= min && **v <= max)) {
            return Err(BoundsError::InvalidWeights(format!("weight {bad} outside [{min}, {max}]")));
        }
        Ok(values)
    }
}

/// Estimand together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "estimand", rename_all = "snake_case")]
pub enum Estimand {
    Cate { cell: String },
    Ate,
    Wate { omega: WeightFunction },
    Att,
    Cqte { cell: String, tau: f64 },
    Qte { tau: f64 },
    Qtt { tau: f64 },
    Qcate { tau: f64 },
    Aww { omega: WeightFunction },
    JointCdf { y1: f64, y0: f64 },
    Dte { z: f64 },
    Qdte { tau: f64 },
}

impl Estimand {
    pub fn tag(&self) -> &'static str {
        match self {
            Estimand::Cate { .. } => "cate",
            Estimand::Ate => "ate",
            Estimand::Wate { .. } => "wate",
            Estimand::Att => "att",
            Estimand::Cqte { .. } => "cqte",
            Estimand::Qte { .. } => "qte",
            Estimand::Qtt { .. } => "qtt",
            Estimand::Qcate { .. } => "qcate",
            Estimand::Aww { .. } => "aww",
            Estimand::JointCdf { .. } => "joint_cdf",
            Estimand::Dte { .. } => "dte",
            Estimand::Qdte { .. } => "qdte",
        }
    }

    /// Parameters as a short `key=value` list.
    pub fn params_label(&self) -> String {
        fn omega(w: &WeightFunction) -> String {
            match w {
                WeightFunction::Constant(v) => format!("omega={v}"),
                WeightFunction::PerCell(m) => {
                    let parts: Vec<String> = m.iter().map(|(k, v)| format!("{k}:{v}")).collect();
                    format!("omega={}", parts.join(","))
                }
            }
        }
        match self {
            Estimand::Cate { cell } => format!("cell={cell}"),
            Estimand::Ate | Estimand::Att => String::new(),
            Estimand::Wate { omega: w } | Estimand::Aww { omega: w } => omega(w),
            Estimand::Cqte { cell, tau } => format!("cell={cell};tau={tau}"),
            Estimand::Qte { tau } | Estimand::Qtt { tau } | Estimand::Qcate { tau } | Estimand::Qdte { tau } => {
                format!("tau={tau}")
            }
            Estimand::JointCdf { y1, y0 } => format!("y1={y1};y0={y0}"),
            Estimand::Dte { z } => format!("z={z}"),
        }
    }

    /// Depends on the copula of `(Y₁, Y₀)`, not only on the marginals.
    pub fn is_copula_dependent(&self) -> bool {
        matches!(self, Estimand::JointCdf { .. } | Estimand::Dte { .. } | Estimand::Qdte { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundFlag {
    /// At least one cell had `c_lo = c_hi = p1`; thresholds are undefined.
    CollapsedSensitivity,
    /// A sensitivity bound was clamped into `(0, 1)` during conversion.
    ClampedSensitivity,
    /// The interval covers every copula; interior attainment is not claimed.
    CopulaDependent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundInterval {
    pub lo: f64,
    pub hi: f64,
    pub estimand: Estimand,
    pub sensitivity: Vec<CellSensitivity>,
    pub flags: Vec<BoundFlag>,
}

impl BoundInterval {
    fn build(lo: f64, hi: f64, estimand: Estimand, sensitivity: Vec<CellSensitivity>) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi + ORDER_SLACK {
            return Err(BoundsError::InvariantBreach(format!(
                "{} interval [{lo}, {hi}] is not ordered",
                estimand.tag()
            )));
        }
        let mut flags = Vec::new();
        if sensitivity.iter().any(|s| s.is_collapsed()) {
            flags.push(BoundFlag::CollapsedSensitivity);
        }
        if estimand.is_copula_dependent() {
            flags.push(BoundFlag::CopulaDependent);
        }
        Ok(Self {
            lo,
            hi,
            estimand,
            sensitivity,
            flags,
        })
    }

    fn for_problem(lo: f64, hi: f64, estimand: Estimand, problem: &ProblemEnvelopes) -> Result<Self> {
        Self::build(lo, hi, estimand, problem.sensitivities())
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, value: f64, slack: f64) -> bool {
        value >= self.lo - slack && value <= self.hi + slack
    }

    /// `self ⊆ other` up to `slack`.
    pub fn is_within(&self, other: &BoundInterval, slack: f64) -> bool {
        self.lo >= other.lo - slack && self.hi <= other.hi + slack
    }

    pub fn add_flag(&mut self, flag: BoundFlag) {
        if !self.flags.contains(&flag) {
            self.flags.push(flag);
            self.flags.sort();
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(BoundsError::ProbabilityOutOfRange { value: tau, range: "(0, 1)" })
    }
}

fn marginal_mean(env: &CellEnvelopes, arm: Arm, side: Side) -> f64 {
    env.get(arm, side, Conditioning::Marginal).mean()
}

fn cate_endpoints(env: &CellEnvelopes) -> (f64, f64) {
    let lo = marginal_mean(env, Arm::Treated, Side::Hi) - marginal_mean(env, Arm::Control, Side::Lo);
    let hi = marginal_mean(env, Arm::Treated, Side::Lo) - marginal_mean(env, Arm::Control, Side::Hi);
    (lo, hi)
}

/// `E[Y₁ − Y₀ | W = w]`.
pub fn cate_bounds(cell: &Cell, env: &CellEnvelopes) -> Result<BoundInterval> {
    let (lo, hi) = cate_endpoints(env);
    BoundInterval::build(lo, hi, Estimand::Cate { cell: cell.id.clone() }, vec![env.sensitivity])
}

/// `E[ω(W)(Y₁ − Y₀)]` for nonnegative `ω`; `ω ≡ 1` is the ATE.
pub fn ate_wate_bounds(problem: &ProblemEnvelopes, omega: &WeightFunction) -> Result<BoundInterval> {
    let omegas = omega.resolve(&problem.cells, 0.0, f64::INFINITY)?;
    let (mut lo, mut hi) = (0.0, 0.0);
    for ((cell, env), w) in problem.iter().zip(&omegas) {
        let (l, h) = cate_endpoints(env);
        lo += cell.weight * w * l;
        hi += cell.weight * w * h;
    }
    let estimand = match omega {
        WeightFunction::Constant(v) if *v == 1.0 => Estimand::Ate,
        _ => Estimand::Wate { omega: omega.clone() },
    };
    BoundInterval::for_problem(lo, hi, estimand, problem)
}

/// `E[Y₁ − Y₀ | X = 1]`.
pub fn att_bounds(problem: &ProblemEnvelopes) -> Result<BoundInterval> {
    let observed = aggregate_treated_outcome(&problem.cells)?.mean();
    let upper_cf = aggregate_treated_control_outcome(&problem.cells, &problem.envs, Side::Lo)?.mean();
    let lower_cf = aggregate_treated_control_outcome(&problem.cells, &problem.envs, Side::Hi)?.mean();
    BoundInterval::for_problem(observed - upper_cf, observed - lower_cf, Estimand::Att, problem)
}

/// Conditional quantile treatment effect in one cell.
pub fn cqte_bounds(cell: &Cell, env: &CellEnvelopes, tau: f64) -> Result<BoundInterval> {
    check_tau(tau)?;
    let m = Conditioning::Marginal;
    let lo = envelope_quantile(env, Arm::Treated, Side::Lo, m, tau)? - envelope_quantile(env, Arm::Control, Side::Hi, m, tau)?;
    let hi = envelope_quantile(env, Arm::Treated, Side::Hi, m, tau)? - envelope_quantile(env, Arm::Control, Side::Lo, m, tau)?;
    BoundInterval::build(lo, hi, Estimand::Cqte { cell: cell.id.clone(), tau }, vec![env.sensitivity])
}

/// `Q_{Y₁}(τ) − Q_{Y₀}(τ)`.
pub fn qte_bounds(problem: &ProblemEnvelopes, tau: f64) -> Result<BoundInterval> {
    check_tau(tau)?;
    let agg = |arm, side| aggregate_marginal(&problem.cells, &problem.envs, arm, side);
    let lo = agg(Arm::Treated, Side::Hi)?.quantile(tau)? - agg(Arm::Control, Side::Lo)?.quantile(tau)?;
    let hi = agg(Arm::Treated, Side::Lo)?.quantile(tau)? - agg(Arm::Control, Side::Hi)?.quantile(tau)?;
    BoundInterval::for_problem(lo, hi, Estimand::Qte { tau }, problem)
}

/// `Q_{Y|X=1}(τ) − Q_{Y₀|X=1}(τ)`.
pub fn qtt_bounds(problem: &ProblemEnvelopes, tau: f64) -> Result<BoundInterval> {
    check_tau(tau)?;
    let observed = aggregate_treated_outcome(&problem.cells)?.quantile(tau)?;
    let upper_cf = aggregate_treated_control_outcome(&problem.cells, &problem.envs, Side::Lo)?.quantile(tau)?;
    let lower_cf = aggregate_treated_control_outcome(&problem.cells, &problem.envs, Side::Hi)?.quantile(tau)?;
    BoundInterval::for_problem(observed - upper_cf, observed - lower_cf, Estimand::Qtt { tau }, problem)
}

/// `τ`-quantile of the distribution of `CATE(W)`.
pub fn qcate_bounds(problem: &ProblemEnvelopes, tau: f64) -> Result<BoundInterval> {
    check_tau(tau)?;
    let endpoints: Vec<(f64, f64)> = problem.envs.iter().map(cate_endpoints).collect();
    let quantile = |pick: fn(&(f64, f64)) -> f64| {
        StepCdf::from_masses(problem.cells.iter().zip(&endpoints).map(|(c, e)| (pick(e), c.weight)))?.quantile(tau)
    };
    let lo = quantile(|e| e.0)?;
    let hi = quantile(|e| e.1)?;
    BoundInterval::for_problem(lo, hi, Estimand::Qcate { tau }, problem)
}

/// `E[ω(W)Y₁ + (1 − ω(W))Y₀]` for `ω` with values in `[0, 1]`.
pub fn aww_bounds(problem: &ProblemEnvelopes, omega: &WeightFunction) -> Result<BoundInterval> {
    let omegas = omega.resolve(&problem.cells, 0.0, 1.0)?;
    let (mut lo, mut hi) = (0.0, 0.0);
    for ((cell, env), w) in problem.iter().zip(&omegas) {
        let side_value = |side| w * marginal_mean(env, Arm::Treated, side) + (1.0 - w) * marginal_mean(env, Arm::Control, side);
        lo += cell.weight * side_value(Side::Hi);
        hi += cell.weight * side_value(Side::Lo);
    }
    BoundInterval::for_problem(lo, hi, Estimand::Aww { omega: omega.clone() }, problem)
}

/// `(X, W)`-conditional CDFs `(G₁, G₀)` of `(Y₁, Y₀)` on one envelope side,
/// with the weight `P(W = w) p_{x|w}` of that stratum.
fn strata(problem: &ProblemEnvelopes, side1: Side, side0: Side) -> Vec<(f64, &StepCdf, &StepCdf)> {
    let mut out = Vec::with_capacity(2 * problem.len());
    for (cell, env) in problem.iter() {
        out.push((
            cell.weight * cell.p1,
            &cell.f_treated,
            env.get(Arm::Control, side0, Conditioning::Cross),
        ));
        out.push((
            cell.weight * (1.0 - cell.p1),
            env.get(Arm::Treated, side1, Conditioning::Cross),
            &cell.f_control,
        ));
    }
    out
}

/// `P(Y₁ <= y1, Y₀ <= y0)` via Fréchet–Hoeffding bounds in each `(X, W)`
/// stratum.
pub fn joint_cdf_bounds(problem: &ProblemEnvelopes, y1: f64, y0: f64) -> Result<BoundInterval> {
    let lo: f64 = strata(problem, Side::Lo, Side::Lo)
        .into_iter()
        .map(|(w, g1, g0)| w * (g1.eval(y1) + g0.eval(y0) - 1.0).max(0.0))
        .sum();
    let hi: f64 = strata(problem, Side::Hi, Side::Hi)
        .into_iter()
        .map(|(w, g1, g0)| w * g1.eval(y1).min(g0.eval(y0)))
        .sum();
    BoundInterval::for_problem(lo, hi, Estimand::JointCdf { y1, y0 }, problem)
}

/// Lower Makarov bound `max{sup_y G₁(y) − G₀((y − z)−), 0}` on
/// `P(Y₁ − Y₀ <= z)` for fixed marginals.
///
/// The supremum is attained at a jump of `G₁`. Support differences are
/// compared directly against `z` so that ties are exact.
pub fn makarov_lower(g1: &StepCdf, g0: &StepCdf, z: f64) -> f64 {
    let mut best: f64 = 0.0;
    for (&s1, &c1) in g1.support().iter().zip(g1.cumulative()) {
        let below: f64 = g0.masses().filter(|&(s0, _)| s1 - s0 > z).map(|(_, m)| m).sum();
        best = best.max(c1 - below);
    }
    best.clamp(0.0, 1.0)
}

/// Upper Makarov bound `1 + min{inf_y G₁(y) − G₀(y − z), 0}`.
///
/// The infimum is attained at a jump of `G₁` or at a shifted jump `s₀ + z`
/// of `G₀`, both evaluated with right-continuous values.
pub fn makarov_upper(g1: &StepCdf, g0: &StepCdf, z: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (&s1, &c1) in g1.support().iter().zip(g1.cumulative()) {
        let at: f64 = g0.masses().filter(|&(s0, _)| s1 - s0 >= z).map(|(_, m)| m).sum();
        worst = worst.min(c1 - at);
    }
    for (&s0, &c0) in g0.support().iter().zip(g0.cumulative()) {
        let at: f64 = g1.masses().filter(|&(s1, _)| s1 - s0 <= z).map(|(_, m)| m).sum();
        worst = worst.min(at - c0);
    }
    (1.0 + worst).clamp(0.0, 1.0)
}

fn dte_curves(problem: &ProblemEnvelopes, z: f64) -> (f64, f64) {
    let lo = strata(problem, Side::Lo, Side::Hi)
        .into_iter()
        .map(|(w, g1, g0)| w * makarov_lower(g1, g0, z))
        .sum::<f64>();
    let hi = strata(problem, Side::Hi, Side::Lo)
        .into_iter()
        .map(|(w, g1, g0)| w * makarov_upper(g1, g0, z))
        .sum::<f64>();
    (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0))
}

/// `P(Y₁ − Y₀ <= z)`.
pub fn dte_bounds(problem: &ProblemEnvelopes, z: f64) -> Result<BoundInterval> {
    let (lo, hi) = dte_curves(problem, z);
    BoundInterval::for_problem(lo, hi, Estimand::Dte { z }, problem)
}

fn support_differences(problem: &ProblemEnvelopes) -> Vec<f64> {
    let mut diffs = Vec::new();
    for (cell, env) in problem.iter() {
        let g1s = [&cell.f_treated, env.get(Arm::Treated, Side::Lo, Conditioning::Cross), env.get(Arm::Treated, Side::Hi, Conditioning::Cross)];
        let g0s = [&cell.f_control, env.get(Arm::Control, Side::Lo, Conditioning::Cross), env.get(Arm::Control, Side::Hi, Conditioning::Cross)];
        for g1 in g1s {
            for g0 in g0s {
                for &s1 in g1.support() {
                    diffs.extend(g0.support().iter().map(|&s0| s1 - s0));
                }
            }
        }
    }
    diffs.sort_by(f64::total_cmp);
    diffs.dedup();
    diffs
}

/// `inf{z : g(z) >= τ}` for a nondecreasing step function `g` whose jumps
/// lie in `candidates`; `g` may be left- or right-continuous at a jump.
fn invert_step(candidates: &[f64], tau: f64, g: impl Fn(f64) -> f64) -> f64 {
    for (i, &z) in candidates.iter().enumerate() {
        let next = candidates.get(i + 1).map_or(z + 1.0, |&n| 0.5 * (z + n));
        if g(z) >= tau || g(next) >= tau {
            return z;
        }
    }
    *candidates.last().expect("at least one support difference")
}

/// `τ`-quantile of `Y₁ − Y₀`, by left-inverting the DTE bound curves.
pub fn qdte_bounds(problem: &ProblemEnvelopes, tau: f64) -> Result<BoundInterval> {
    check_tau(tau)?;
    let candidates = support_differences(problem);
    let lo = invert_step(&candidates, tau, |z| dte_curves(problem, z).1);
    let hi = invert_step(&candidates, tau, |z| dte_curves(problem, z).0);
    BoundInterval::for_problem(lo, hi, Estimand::Qdte { tau }, problem)
}

/// Dispatches on the estimand.
pub fn bounds(problem: &ProblemEnvelopes, estimand: &Estimand) -> Result<BoundInterval> {
    let find_cell = |id: &str| {
        problem
            .iter()
            .find(|(c, _)| c.id == id)
            .ok_or_else(|| BoundsError::Misaligned(format!("unknown cell '{id}'")))
    };
    match estimand {
        Estimand::Cate { cell } => {
            let (c, e) = find_cell(cell)?;
            let mut b = cate_bounds(c, e)?;
            b.sensitivity = problem.sensitivities();
            Ok(b)
        }
        Estimand::Ate => ate_wate_bounds(problem, &WeightFunction::one()),
        Estimand::Wate { omega } => {
            let mut b = ate_wate_bounds(problem, omega)?;
            b.estimand = estimand.clone();
            Ok(b)
        }
        Estimand::Att => att_bounds(problem),
        Estimand::Cqte { cell, tau } => {
            let (c, e) = find_cell(cell)?;
            let mut b = cqte_bounds(c, e, *tau)?;
            b.sensitivity = problem.sensitivities();
            Ok(b)
        }
        Estimand::Qte { tau } => qte_bounds(problem, *tau),
        Estimand::Qtt { tau } => qtt_bounds(problem, *tau),
        Estimand::Qcate { tau } => qcate_bounds(problem, *tau),
        Estimand::Aww { omega } => aww_bounds(problem, omega),
        Estimand::JointCdf { y1, y0 } => joint_cdf_bounds(problem, *y1, *y0),
        Estimand::Dte { z } => dte_bounds(problem, *z),
        Estimand::Qdte { tau } => qdte_bounds(problem, *tau),
    }
}

/// `∫₀ᵃ Q_F(u) du`, extended by 0 below 0 and by the mean above 1.
fn quantile_integral(f: &StepCdf, a: f64) -> f64 {
    if a <= 0.0 {
        0.0
    } else if a >= 1.0 {
        f.mean()
    } else {
        f.partial_quantile_integral(a).expect("a in (0, 1)")
    }
}

/// `(scale below cutoff, scale above cutoff, cutoff level)` of the mean of
/// one marginal envelope, written out per arm and side.
fn mean_pieces(p1: f64, s: CellSensitivity, arm: Arm, side: Side) -> (f64, f64, f64) {
    let (p, q, l, h) = (p1, 1.0 - p1, s.c_lo, s.c_hi);
    let tau1 = (p - l) * h / (p * (h - l));
    let tau0 = (h - p) * (1.0 - l) / (q * (h - l));
    match (arm, side) {
        (Arm::Treated, Side::Hi) => (p / l, p / h, 1.0 - tau1),
        (Arm::Treated, Side::Lo) => (p / h, p / l, tau1),
        (Arm::Control, Side::Hi) => (q / (1.0 - h), q / (1.0 - l), 1.0 - tau0),
        (Arm::Control, Side::Lo) => (q / (1.0 - l), q / (1.0 - h), tau0),
    }
}

/// Mean of a marginal envelope from quantile integrals of the observed arm
/// distribution, without materializing the envelope.
pub fn closed_form_envelope_mean(cell: &Cell, s: CellSensitivity, arm: Arm, side: Side) -> f64 {
    let observed = cell.observed(arm);
    if s.is_collapsed() {
        return observed.mean();
    }
    let (below, above, cut) = mean_pieces(cell.p1, s, arm, side);
    let head = quantile_integral(observed, cut);
    below * head + above * (observed.mean() - head)
}

/// Simplified mean for the case `F_x(Q) = τ` at the cutoff quantile `Q`,
/// as a weighted combination of the two truncated means. `None` when the
/// cutoff falls inside an atom.
pub fn continuous_envelope_mean(cell: &Cell, s: CellSensitivity, arm: Arm, side: Side) -> Option<f64> {
    if !s.is_strict(cell.p1) {
        return None;
    }
    let (below, above, cut) = mean_pieces(cell.p1, s, arm, side);
    let tm = cell.observed(arm).truncated_means(cut).ok()?;
    if (tm.mass_at_or_below - cut).abs() > 1e-12 {
        return None;
    }
    Some(below * cut * tm.lower_mean + above * (1.0 - cut) * tm.upper_mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelopes::compute_envelopes;
    use proptest::prelude::*;

    const TOL: f64 = 1e-12;

    fn bern() -> StepCdf {
        StepCdf::two_point(0.0, 1.0, 0.5).unwrap()
    }

    fn fixture_cell(id: &str, weight: f64) -> Cell {
        Cell::new(id, weight, 0.5, bern(), bern()).unwrap()
    }

    fn wide() -> CellSensitivity {
        CellSensitivity::new(0.3, 0.7)
    }

    fn fixture(s: CellSensitivity) -> ProblemEnvelopes {
        ProblemEnvelopes::uniform(vec![fixture_cell("a", 1.0)], s).unwrap()
    }

    fn close(b: &BoundInterval, lo: f64, hi: f64) -> bool {
        (b.lo - lo).abs() < TOL && (b.hi - hi).abs() < TOL
    }

    #[test]
    fn cate_examples() {
        let p = fixture(wide());
        let b = cate_bounds(&p.cells[0], &p.envs[0]).unwrap();
        assert!(close(&b, -2.0 / 7.0, 2.0 / 7.0), "{b:?}");

        let p = fixture(CellSensitivity::collapsed(0.5));
        let b = cate_bounds(&p.cells[0], &p.envs[0]).unwrap();
        assert!(close(&b, 0.0, 0.0));
        assert_eq!(b.flags, vec![BoundFlag::CollapsedSensitivity]);

        let cell = Cell::new("d", 1.0, 0.5, bern(), StepCdf::point_mass(0.0)).unwrap();
        let env = compute_envelopes(&cell, wide()).unwrap();
        let b = cate_bounds(&cell, &env).unwrap();
        assert!(close(&b, 5.0 / 14.0, 9.0 / 14.0));
    }

    #[test]
    fn ate_wate_examples() {
        let p = fixture(wide());
        let b = ate_wate_bounds(&p, &WeightFunction::one()).unwrap();
        assert!(close(&b, -2.0 / 7.0, 2.0 / 7.0));
        assert_eq!(b.estimand, Estimand::Ate);
        let b = ate_wate_bounds(&p, &WeightFunction::Constant(0.0)).unwrap();
        assert!(close(&b, 0.0, 0.0));
        assert!(ate_wate_bounds(&p, &WeightFunction::Constant(-1.0)).is_err());

        // second cell with a wider outcome scale doubles its CATE interval
        let two = StepCdf::two_point(0.0, 2.0, 0.5).unwrap();
        let cells = vec![
            fixture_cell("a", 0.5),
            Cell::new("b", 0.5, 0.5, two.clone(), two).unwrap(),
        ];
        let p = ProblemEnvelopes::uniform(cells, wide()).unwrap();
        let b = ate_wate_bounds(&p, &WeightFunction::one()).unwrap();
        let (a, c) = (2.0 / 7.0, 4.0 / 7.0);
        assert!(close(&b, -(a + c) / 2.0, (a + c) / 2.0), "{b:?}");
    }

    #[test]
    fn att_examples() {
        let b = att_bounds(&fixture(CellSensitivity::collapsed(0.5))).unwrap();
        assert!(close(&b, 0.0, 0.0));
        // counterfactual mean bounds from the cross envelopes: [3/14, 11/14]
        let b = att_bounds(&fixture(wide())).unwrap();
        assert!(close(&b, 0.5 - 11.0 / 14.0, 0.5 - 3.0 / 14.0), "{b:?}");
        let cell = Cell::new("d", 1.0, 0.5, bern(), StepCdf::point_mass(3.0)).unwrap();
        let p = ProblemEnvelopes::uniform(vec![cell], wide()).unwrap();
        let b = att_bounds(&p).unwrap();
        assert!(close(&b, -2.5, -2.5));
    }

    #[test]
    fn quantile_examples() {
        let p = fixture(wide());
        let b = cqte_bounds(&p.cells[0], &p.envs[0], 0.5).unwrap();
        assert!(close(&b, -1.0, 1.0));
        let b = qte_bounds(&p, 0.5).unwrap();
        assert!(close(&b, -1.0, 1.0));
        assert!(qte_bounds(&p, 0.0).is_err());
        assert!(qte_bounds(&p, 1.0).is_err());

        let p = fixture(CellSensitivity::collapsed(0.5));
        assert!(close(&cqte_bounds(&p.cells[0], &p.envs[0], 0.5).unwrap(), 0.0, 0.0));

        let d = Cell::new("d", 1.0, 0.5, StepCdf::point_mass(2.0), StepCdf::point_mass(2.0)).unwrap();
        let p = ProblemEnvelopes::uniform(vec![d], wide()).unwrap();
        assert!(close(&qte_bounds(&p, 0.5).unwrap(), 0.0, 0.0));
    }

    #[test]
    fn qtt_examples() {
        assert!(close(&qtt_bounds(&fixture(CellSensitivity::collapsed(0.5)), 0.5).unwrap(), 0.0, 0.0));
        let cell = Cell::new("d", 1.0, 0.5, bern(), StepCdf::point_mass(3.0)).unwrap();
        let p = ProblemEnvelopes::uniform(vec![cell], wide()).unwrap();
        assert!(close(&qtt_bounds(&p, 0.5).unwrap(), -3.0, -3.0));
        // cross envelopes of the control arm at 0 are 3/14 and 11/14
        assert!(close(&qtt_bounds(&fixture(wide()), 0.5).unwrap(), -1.0, 0.0));
    }

    #[test]
    fn qcate_examples() {
        let p = fixture(wide());
        for tau in [0.1, 0.5, 0.9] {
            assert!(close(&qcate_bounds(&p, tau).unwrap(), -2.0 / 7.0, 2.0 / 7.0));
        }
        let one = StepCdf::point_mass(1.0);
        let zero = StepCdf::point_mass(0.0);
        let cells = vec![
            Cell::new("a", 0.5, 0.5, zero.clone(), zero.clone()).unwrap(),
            Cell::new("b", 0.5, 0.5, one, zero).unwrap(),
        ];
        let p = ProblemEnvelopes::uniform(cells, CellSensitivity::collapsed(0.5)).unwrap();
        assert!(close(&qcate_bounds(&p, 0.5).unwrap(), 0.0, 0.0));
        assert!(close(&qcate_bounds(&p, 0.75).unwrap(), 1.0, 1.0));

        let p = ProblemEnvelopes::uniform(vec![fixture_cell("a", 0.5), fixture_cell("b", 0.5)], wide()).unwrap();
        assert!(close(&qcate_bounds(&p, 0.5).unwrap(), -2.0 / 7.0, 2.0 / 7.0));
    }

    #[test]
    fn aww_examples() {
        let p = fixture(wide());
        assert!(close(&aww_bounds(&p, &WeightFunction::Constant(1.0)).unwrap(), 5.0 / 14.0, 9.0 / 14.0));
        assert!(close(&aww_bounds(&p, &WeightFunction::Constant(0.0)).unwrap(), 5.0 / 14.0, 9.0 / 14.0));
        let p = fixture(CellSensitivity::collapsed(0.5));
        assert!(close(&aww_bounds(&p, &WeightFunction::Constant(0.5)).unwrap(), 0.5, 0.5));
        assert!(aww_bounds(&p, &WeightFunction::Constant(1.5)).is_err());
    }

    #[test]
    fn joint_cdf_examples() {
        let p = fixture(wide());
        assert!(close(&joint_cdf_bounds(&p, 10.0, 10.0).unwrap(), 1.0, 1.0));
        assert!(close(&joint_cdf_bounds(&p, -1.0, 0.0).unwrap(), 0.0, 0.0));
        let p = fixture(CellSensitivity::collapsed(0.5));
        let b = joint_cdf_bounds(&p, 0.0, 0.0).unwrap();
        assert!(close(&b, 0.0, 0.5));
        assert!(b.flags.contains(&BoundFlag::CopulaDependent));
    }

    #[test]
    fn dte_examples() {
        let p = fixture(wide());
        assert!(close(&dte_bounds(&p, 1.0).unwrap(), 1.0, 1.0));
        assert!(close(&dte_bounds(&p, -1.5).unwrap(), 0.0, 0.0));
        let p = fixture(CellSensitivity::collapsed(0.5));
        assert!(close(&dte_bounds(&p, 0.0).unwrap(), 0.5, 1.0));
    }

    #[test]
    fn qdte_examples() {
        let d = Cell::new("d", 1.0, 0.5, StepCdf::point_mass(3.0), StepCdf::point_mass(1.0)).unwrap();
        let p = ProblemEnvelopes::uniform(vec![d], CellSensitivity::collapsed(0.5)).unwrap();
        for tau in [0.1, 0.5, 0.9] {
            assert!(close(&qdte_bounds(&p, tau).unwrap(), 2.0, 2.0));
        }
        // at unconfoundedness: DTE(-1) ∈ [0, 0.5], DTE(0) ∈ [0.5, 1], DTE(1) = 1
        let p = fixture(CellSensitivity::collapsed(0.5));
        assert!(close(&qdte_bounds(&p, 0.5).unwrap(), -1.0, 0.0));
        assert!(close(&qdte_bounds(&p, 0.75).unwrap(), 0.0, 1.0));
        assert!(qdte_bounds(&p, 1.0).is_err());
    }

    #[test]
    fn dispatch_matches_direct_calls() {
        let p = fixture(wide());
        let b = bounds(&p, &Estimand::Cate { cell: "a".into() }).unwrap();
        assert!(close(&b, -2.0 / 7.0, 2.0 / 7.0));
        assert!(bounds(&p, &Estimand::Cate { cell: "zz".into() }).is_err());
        let w = Estimand::Wate { omega: WeightFunction::Constant(2.0) };
        let b = bounds(&p, &w).unwrap();
        assert!(close(&b, -4.0 / 7.0, 4.0 / 7.0));
        assert_eq!(b.estimand, w);
        assert_eq!(Estimand::Qte { tau: 0.5 }.params_label(), "tau=0.5");
    }

    #[test]
    fn per_cell_weights() {
        let cells = vec![fixture_cell("a", 0.5), fixture_cell("b", 0.5)];
        let omega = WeightFunction::PerCell([("a".to_string(), 1.0)].into());
        assert!(omega.resolve(&cells, 0.0, 1.0).is_err());
        let omega = WeightFunction::PerCell([("a".to_string(), 1.0), ("b".to_string(), 0.0)].into());
        assert_eq!(omega.resolve(&cells, 0.0, 1.0).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn closed_form_means_on_fixture() {
        let cell = fixture_cell("a", 1.0);
        assert!((closed_form_envelope_mean(&cell, wide(), Arm::Treated, Side::Hi) - 5.0 / 14.0).abs() < TOL);
        assert!((closed_form_envelope_mean(&cell, wide(), Arm::Treated, Side::Lo) - 9.0 / 14.0).abs() < TOL);
        // cutoff 0.3 falls inside the atom at 0
        assert_eq!(continuous_envelope_mean(&cell, wide(), Arm::Treated, Side::Hi), None);
        // s = (0.3, 0.9) puts the treated-arm cutoffs at 0.4 and 0.6, both cumulative levels
        let u = StepCdf::uniform(&[0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let cell = Cell::new("u", 1.0, 0.5, u.clone(), u).unwrap();
        let s = CellSensitivity::new(0.3, 0.9);
        for side in Side::BOTH {
            let c = continuous_envelope_mean(&cell, s, Arm::Treated, side).expect("cutoff on a level");
            assert!((c - closed_form_envelope_mean(&cell, s, Arm::Treated, side)).abs() < 1e-12);
        }
    }

    prop_compose! {
        fn arb_cdf()(pts in prop::collection::vec((-10i32..10, 1u32..20), 1..7)) -> StepCdf {
            let total: u32 = pts.iter().map(|p| p.1).sum();
            StepCdf::from_masses(pts.into_iter().map(|(v, w)| (v as f64, w as f64 / total as f64))).unwrap()
        }
    }

    prop_compose! {
        fn arb_cell()(f1 in arb_cdf(), f0 in arb_cdf(), p1 in 0.05f64..0.95, u in 0.0f64..1.0, v in 0.0f64..1.0)
            -> (Cell, CellSensitivity) {
            let s = CellSensitivity::new(p1 * (1.0 - 0.98 * u), p1 + v * 0.98 * (1.0 - p1));
            (Cell::new("w", 1.0, p1, f1, f0).unwrap(), s)
        }
    }

    proptest! {
        #[test]
        fn envelope_means_match_closed_form((cell, s) in arb_cell()) {
            let env = compute_envelopes(&cell, s).unwrap();
            for arm in Arm::BOTH {
                for side in Side::BOTH {
                    let direct = env.get(arm, side, Conditioning::Marginal).mean();
                    let closed = closed_form_envelope_mean(&cell, s, arm, side);
                    prop_assert!((direct - closed).abs() < 1e-10, "{:?} {:?}: {} vs {}", arm, side, direct, closed);
                    if let Some(c) = continuous_envelope_mean(&cell, s, arm, side) {
                        prop_assert!((direct - c).abs() < 1e-10);
                    }
                }
            }
        }

        #[test]
        fn dte_curves_are_monotone_cdfs((cell, s) in arb_cell(), zs in prop::collection::vec(-25.0f64..25.0, 2..6)) {
            let p = ProblemEnvelopes::uniform(vec![cell], s).unwrap();
            let mut zs = zs;
            zs.sort_by(f64::total_cmp);
            let mut prev = (0.0, 0.0);
            for z in zs {
                let b = dte_bounds(&p, z).unwrap();
                prop_assert!(b.lo >= prev.0 - 1e-12 && b.hi >= prev.1 - 1e-12);
                prop_assert!(b.lo >= 0.0 && b.hi <= 1.0 && b.lo <= b.hi + 1e-12);
                prev = (b.lo, b.hi);
            }
            let b = dte_bounds(&p, 100.0).unwrap();
            prop_assert!((b.lo - 1.0).abs() < 1e-12 && (b.hi - 1.0).abs() < 1e-12);
            let b = dte_bounds(&p, -100.0).unwrap();
            prop_assert!(b.lo.abs() < 1e-12 && b.hi.abs() < 1e-12);
        }

        #[test]
        fn collapse_gives_points((cell, _s) in arb_cell(), tau in 0.01f64..0.99) {
            let s = CellSensitivity::collapsed(cell.p1);
            let p = ProblemEnvelopes::uniform(vec![cell], s).unwrap();
            for e in [Estimand::Ate, Estimand::Att, Estimand::Qte { tau }, Estimand::Qtt { tau },
                      Estimand::Qcate { tau }, Estimand::Aww { omega: WeightFunction::Constant(0.3) }] {
                let b = bounds(&p, &e).unwrap();
                prop_assert!(b.width().abs() <= 1e-10, "{:?}: {:?}", e, b);
            }
        }
    }
}
