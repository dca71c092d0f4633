//! Brute-force ground truth on tiny instances.
//!
//! Latent propensity scores are enumerated on a grid over `[c_lo, c_hi]`
//! at every support point except one, whose score is then solved exactly
//! from the normalization of the implied potential-outcome distribution and
//! kept if it lies in `[c_lo, c_hi]`. Every enumerated score is feasible, so
//! each attained value is a certificate of attainability.
//!
//! Couplings of two fixed marginals are handled exactly: by the one-parameter
//! family for two-point marginals, and by a max-flow/min-cut formula on
//! small supports otherwise.

use rayon::prelude::*;
use serde::Serialize;

use crate::dist::StepCdf;
use crate::envelopes::{compute_envelopes, switching_score, Arm, Cell, Conditioning, Side, SwitchingScore};
use crate::error::{BoundsError, Result};
use crate::models::{validate_sensitivity, CellSensitivity};

/// Largest number of score vectors a single enumeration may visit.
pub const MAX_ENUMERATION: u64 = 50_000_000;

/// Largest support accepted by [`coupling_range`] on either side.
pub const MAX_COUPLING_SUPPORT: usize = 12;

/// Slack on `[c_lo, c_hi]` when accepting a solved score.
const SCORE_SLACK: f64 = 1e-12;

/// Tolerance of the witness checks.
pub const WITNESS_TOLERANCE: f64 = 1e-10;

/// Candidate scores `c_lo + k (c_hi − c_lo) / n` for `k = 0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatentScoreGrid {
    pub c_lo: f64,
    pub c_hi: f64,
    pub resolution: usize,
}

impl LatentScoreGrid {
    pub fn new(s: CellSensitivity, resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(BoundsError::InvalidModel(format!("grid resolution {resolution} < 2")));
        }
        Ok(Self {
            c_lo: s.c_lo,
            c_hi: s.c_hi,
            resolution,
        })
    }

    /// Distinct grid values in increasing order; endpoints are exact.
    pub fn values(&self) -> Vec<f64> {
        if self.c_lo == self.c_hi {
            return vec![self.c_lo];
        }
        let n = self.resolution;
        let step = (self.c_hi - self.c_lo) / n as f64;
        (0..=n)
            .map(|k| if k == n { self.c_hi } else { self.c_lo + k as f64 * step })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttainedRange {
    pub min: f64,
    pub max: f64,
    /// Number of feasible score vectors visited.
    pub feasible: u64,
}

impl AttainedRange {
    fn empty() -> Self {
        Self {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            feasible: 0,
        }
    }

    fn push(mut self, v: f64) -> Self {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
        self.feasible += 1;
        self
    }

    fn merge(self, other: Self) -> Self {
        Self {
            min: self.min.min(other.min),
            max: self.max.max(other.max),
            feasible: self.feasible + other.feasible,
        }
    }
}

/// Functional of the implied potential-outcome distribution of one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum OracleTarget {
    CdfAt(f64),
    Mean,
    Quantile(f64),
}

impl OracleTarget {
    fn eval(&self, support: &[f64], pmf: &[f64]) -> f64 {
        match *self {
            OracleTarget::CdfAt(y) => support.iter().zip(pmf).filter(|(&v, _)| v <= y).map(|(_, &m)| m).sum(),
            OracleTarget::Mean => support.iter().zip(pmf).map(|(v, m)| v * m).sum(),
            OracleTarget::Quantile(tau) => {
                let mut cum = 0.0;
                for (&v, &m) in support.iter().zip(pmf) {
                    cum += m;
                    if cum >= tau {
                        return v;
                    }
                }
                *support.last().expect("nonempty support")
            }
        }
    }
}

/// Estimands supported by [`attainable_param_range`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum OracleEstimand {
    Mean(Arm),
    Quantile(Arm, f64),
    Cate,
}

/// Probability of `X = x` given the latent score `s`.
fn arm_probability(arm: Arm, score: f64) -> f64 {
    match arm {
        Arm::Treated => score,
        Arm::Control => 1.0 - score,
    }
}

fn score_from_arm_probability(arm: Arm, prob: f64) -> f64 {
    match arm {
        Arm::Treated => prob,
        Arm::Control => 1.0 - prob,
    }
}

fn enumerate_arm(cell: &Cell, s: CellSensitivity, arm: Arm, resolution: usize, target: OracleTarget) -> Result<AttainedRange> {
    validate_sensitivity(cell.p1, s).map_err(|violation| BoundsError::InvalidSensitivity { p1: cell.p1, violation })?;
    let observed = cell.observed(arm);
    let k = observed.len();
    let grid = LatentScoreGrid::new(s, resolution)?.values();
    let g = grid.len() as u64;
    let combos = g
        .checked_pow((k - 1) as u32)
        .and_then(|c| c.checked_mul(k as u64))
        .filter(|&c| c <= MAX_ENUMERATION)
        .ok_or_else(|| BoundsError::TooLarge(format!("{k} support points at resolution {resolution}")))?;
    debug_assert!(combos > 0);

    let share = cell.arm_share(arm);
    let support = observed.support();
    let joint: Vec<f64> = (0..k).map(|i| share * observed.mass(i)).collect();
    let others = (k - 1) as u32;

    let visit = |free: usize, index: u64| -> Option<f64> {
        let mut pmf = vec![0.0; k];
        let mut rest = index;
        let mut used = 0.0;
        for i in (0..k).filter(|&i| i != free) {
            let score = grid[(rest % g) as usize];
            rest /= g;
            pmf[i] = joint[i] / arm_probability(arm, score);
            used += pmf[i];
        }
        let remaining = 1.0 - used;
        if !(remaining > 0.0) {
            return None;
        }
        let score = score_from_arm_probability(arm, joint[free] / remaining);
        if score < s.c_lo - SCORE_SLACK || score > s.c_hi + SCORE_SLACK {
            return None;
        }
        pmf[free] = remaining;
        Some(target.eval(support, &pmf))
    };

    let per_free = g.pow(others);
    let range = (0..k)
        .into_par_iter()
        .flat_map(|free| (0..per_free).into_par_iter().map(move |idx| (free, idx)))
        .fold(AttainedRange::empty, |acc, (free, idx)| match visit(free, idx) {
            Some(v) => acc.push(v),
            None => acc,
        })
        .reduce(AttainedRange::empty, AttainedRange::merge);
    if range.feasible == 0 {
        return Err(BoundsError::InvariantBreach("no feasible latent score on the grid".into()));
    }
    Ok(range)
}

/// Range of `F_{Y_x|W}(y)` over enumerated feasible latent scores.
pub fn attainable_cdf_range(cell: &Cell, s: CellSensitivity, arm: Arm, y: f64, resolution: usize) -> Result<AttainedRange> {
    enumerate_arm(cell, s, arm, resolution, OracleTarget::CdfAt(y))
}

/// Range of a one-cell estimand over enumerated feasible latent scores.
///
/// The two arms' scores are constrained separately, so the CATE range is
/// the difference of the per-arm mean ranges.
pub fn attainable_param_range(
    cell: &Cell,
    s: CellSensitivity,
    estimand: OracleEstimand,
    resolution: usize,
) -> Result<AttainedRange> {
    match estimand {
        OracleEstimand::Mean(arm) => enumerate_arm(cell, s, arm, resolution, OracleTarget::Mean),
        OracleEstimand::Quantile(arm, tau) => {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(BoundsError::ProbabilityOutOfRange { value: tau, range: "(0, 1)" });
            }
            enumerate_arm(cell, s, arm, resolution, OracleTarget::Quantile(tau))
        }
        OracleEstimand::Cate => {
            let m1 = enumerate_arm(cell, s, Arm::Treated, resolution, OracleTarget::Mean)?;
            let m0 = enumerate_arm(cell, s, Arm::Control, resolution, OracleTarget::Mean)?;
            Ok(AttainedRange {
                min: m1.min - m0.max,
                max: m1.max - m0.min,
                feasible: m1.feasible * m0.feasible,
            })
        }
    }
}

/// Largest mass a coupling of `(a, b)` can put on the cells `allowed(i, j)`.
///
/// Max-flow/min-cut on the bipartite transport network: the optimum is
/// `min over row subsets I of a(rows \ I) + b(neighbours of I)`.
fn max_mass_on(a: &[f64], b: &[f64], allowed: impl Fn(usize, usize) -> bool) -> f64 {
    let rows = a.len();
    let mut best = f64::INFINITY;
    for subset in 0u32..(1 << rows) {
        let mut cut = 0.0;
        let mut neighbours = vec![false; b.len()];
        for (i, &ai) in a.iter().enumerate() {
            if subset & (1 << i) == 0 {
                cut += ai;
            } else {
                for (j, n) in neighbours.iter_mut().enumerate() {
                    *n |= allowed(i, j);
                }
            }
        }
        cut += b.iter().zip(&neighbours).filter(|(_, &n)| n).map(|(bj, _)| bj).sum::<f64>();
        best = best.min(cut);
    }
    best
}

/// `P(Y₁ − Y₀ <= z)` over all couplings with marginals `f1`, `f0`.
pub fn coupling_range(f1: &StepCdf, f0: &StepCdf, z: f64) -> Result<(f64, f64)> {
    if f1.len() > MAX_COUPLING_SUPPORT || f0.len() > MAX_COUPLING_SUPPORT {
        return Err(BoundsError::TooLarge(format!(
            "coupling of supports {} x {} exceeds {MAX_COUPLING_SUPPORT}",
            f1.len(),
            f0.len()
        )));
    }
    if f1.len() == 2 && f0.len() == 2 {
        return Ok(two_point_coupling_range(f1, f0, z));
    }
    let a: Vec<f64> = f1.masses().map(|(_, m)| m).collect();
    let b: Vec<f64> = f0.masses().map(|(_, m)| m).collect();
    let (s1, s0) = (f1.support(), f0.support());
    let hi = max_mass_on(&a, &b, |i, j| s1[i] - s0[j] <= z);
    let lo = 1.0 - max_mass_on(&a, &b, |i, j| s1[i] - s0[j] > z);
    Ok((lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0)))
}

/// Two-point marginals: the joint is `p₁₁ ∈ [max(0, a + b − 1), min(a, b)]`
/// with `a = P(Y₁ = low)`, `b = P(Y₀ = low)`, and the event probability is
/// affine in `p₁₁`.
fn two_point_coupling_range(f1: &StepCdf, f0: &StepCdf, z: f64) -> (f64, f64) {
    let (s1, s0) = (f1.support(), f0.support());
    let (a, b) = (f1.mass(0), f0.mass(0));
    let hit = |i: usize, j: usize| if s1[i] - s0[j] <= z { 1.0 } else { 0.0 };
    let event = |p11: f64| {
        let p10 = a - p11;
        let p01 = b - p11;
        let p00 = 1.0 - a - b + p11;
        p11 * hit(0, 0) + p10 * hit(0, 1) + p01 * hit(1, 0) + p00 * hit(1, 1)
    };
    let ends = [event((a + b - 1.0).max(0.0)), event(a.min(b))];
    (ends[0].min(ends[1]).clamp(0.0, 1.0), ends[0].max(ends[1]).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessReport {
    pub arm: Arm,
    pub side: Side,
    pub score: Option<SwitchingScore>,
    pub checks: Vec<WitnessCheck>,
}

impl WitnessReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }
}

/// Checks that the switching score attains the `side` envelope of `arm`.
pub fn verify_witness(cell: &Cell, s: CellSensitivity, arm: Arm, side: Side) -> WitnessReport {
    match switching_score(cell, s, arm, side) {
        Ok(score) => verify_score(cell, s, arm, side, &score),
        Err(e) => WitnessReport {
            arm,
            side,
            score: None,
            checks: vec![WitnessCheck {
                name: "sensitivity",
                passed: false,
                detail: e.to_string(),
            }],
        },
    }
}

/// Runs the four witness checks against an arbitrary candidate score:
/// `identity` (reweighting reproduces the envelope), `pmf` (implied
/// distributions are valid), `range` (score values in `[c_lo, c_hi]`) and
/// `constraint` (the score averages to `p1`).
pub fn verify_score(cell: &Cell, s: CellSensitivity, arm: Arm, side: Side, score: &SwitchingScore) -> WitnessReport {
    let mut report = WitnessReport {
        arm,
        side,
        score: Some(*score),
        checks: Vec::with_capacity(4),
    };
    let env = match compute_envelopes(cell, s) {
        Ok(env) => env,
        Err(e) => {
            report.checks.push(WitnessCheck {
                name: "sensitivity",
                passed: false,
                detail: e.to_string(),
            });
            return report;
        }
    };
    let observed = cell.observed(arm);
    let share = cell.arm_share(arm);
    let envelope = env.get(arm, side, Conditioning::Marginal);
    let scores: Vec<f64> = observed.support().iter().map(|&y| score.eval(y)).collect();
    let pmf: Vec<f64> = observed
        .masses()
        .zip(&scores)
        .map(|((_, m), &sc)| share * m / arm_probability(arm, sc))
        .collect();

    let mut worst: f64 = 0.0;
    let mut cum = 0.0;
    for (i, &y) in observed.support().iter().enumerate() {
        cum += pmf[i];
        worst = worst.max((cum - envelope.eval(y)).abs());
    }
    report.checks.push(WitnessCheck {
        name: "identity",
        passed: worst <= WITNESS_TOLERANCE,
        detail: format!("max deviation from envelope {worst:e}"),
    });

    let other = 1.0 - share;
    let total: f64 = pmf.iter().sum();
    let min_cross = pmf
        .iter()
        .zip(observed.masses())
        .map(|(&g, (_, m))| (g - share * m) / other)
        .fold(f64::INFINITY, f64::min);
    let pmf_ok = pmf.iter().all(|&g| g.is_finite() && g >= 0.0) && min_cross >= -WITNESS_TOLERANCE && (total - 1.0).abs() <= WITNESS_TOLERANCE;
    report.checks.push(WitnessCheck {
        name: "pmf",
        passed: pmf_ok,
        detail: format!("total mass {total}, smallest cross-arm mass {min_cross:e}"),
    });

    let declared = [score.below_value, score.at_value, score.above_value];
    let out_of_range = declared
        .iter()
        .chain(&scores)
        .copied()
        .find(|&v| !(v >= s.c_lo - SCORE_SLACK && v <= s.c_hi + SCORE_SLACK));
    report.checks.push(WitnessCheck {
        name: "range",
        passed: out_of_range.is_none(),
        detail: match out_of_range {
            Some(v) => format!("score {v} outside [{}, {}]", s.c_lo, s.c_hi),
            None => "all score values within bounds".into(),
        },
    });

    let average: f64 = pmf.iter().zip(&scores).map(|(g, sc)| g * sc).sum();
    report.checks.push(WitnessCheck {
        name: "constraint",
        passed: (average - cell.p1).abs() <= WITNESS_TOLERANCE,
        detail: format!("E[score] = {average}, p1 = {}", cell.p1),
    });
    report
}
