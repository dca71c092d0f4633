//! Per-cell sharp envelopes for the potential-outcome distributions.
//!
//! For arm `x` in covariate cell `w`, every envelope is the observed arm CDF
//! `F_x = F_{Y|X=x,W=w}` pushed through the min or max of two increasing
//! affine maps. The lower envelope `F̲` is a max, the upper envelope `F̄` a
//! min. The same holds for the envelopes of `Y_x` among units in the *other*
//! arm (the "cross" envelopes), which are the marginal envelopes with the
//! observed own-arm part removed:
//!
//! ```text
//! F̄_{Y_x|W} = p_{1-x} · F̄_{Y_x|X=1-x,W} + p_x · F_x
//! ```
//!
//! Each envelope is attained by a switching latent propensity score that
//! sits at one bound of `[c_lo, c_hi]` below a quantile threshold of `F_x`
//! and at the other bound above it, with an interior value on the threshold
//! itself when `F_x` has an atom there.

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::dist::StepCdf;
use crate::error::{BoundsError, Result};
use crate::models::{validate_sensitivity, CellSensitivity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Treated, Arm::Control];

    pub fn other(self) -> Arm {
        match self {
            Arm::Control => Arm::Treated,
            Arm::Treated => Arm::Control,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Side {
    Lo,
    Hi,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Lo, Side::Hi];

    pub fn flip(self) -> Side {
        match self {
            Side::Lo => Side::Hi,
            Side::Hi => Side::Lo,
        }
    }
}

/// Whether an envelope bounds `Y_x | W` or `Y_x | X = 1-x, W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Conditioning {
    Marginal,
    Cross,
}

/// One discrete covariate value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub id: String,
    /// `P(W = w)`.
    pub weight: f64,
    /// `P(X = 1 | W = w)`.
    pub p1: f64,
    /// `F_{Y | X=1, W=w}`.
    pub f_treated: StepCdf,
    /// `F_{Y | X=0, W=w}`.
    pub f_control: StepCdf,
}

impl Cell {
    pub fn new(
        id: impl Into<String>,
        weight: f64,
        p1: f64,
        f_treated: StepCdf,
        f_control: StepCdf,
    ) -> Result<Self> {
        let id = id.into();
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(BoundsError::InvalidCell {
                cell: id,
                reason: format!("weight {weight} outside (0, 1]"),
            });
        }
        if !(p1 > 0.0 && p1 < 1.0) {
            return Err(BoundsError::InvalidCell {
                cell: id,
                reason: format!("propensity {p1} outside (0, 1)"),
            });
        }
        Ok(Self {
            id,
            weight,
            p1,
            f_treated,
            f_control,
        })
    }

    /// Observed outcome distribution in arm `x`.
    pub fn observed(&self, arm: Arm) -> &StepCdf {
        match arm {
            Arm::Treated => &self.f_treated,
            Arm::Control => &self.f_control,
        }
    }

    /// `P(X = x | W = w)`.
    pub fn arm_share(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Treated => self.p1,
            Arm::Control => 1.0 - self.p1,
        }
    }

    /// Overlap: `p1 ∈ [ε, 1 - ε]`.
    pub fn check_overlap(&self, epsilon: f64) -> Result<()> {
        if self.p1 < epsilon || self.p1 > 1.0 - epsilon {
            return Err(BoundsError::InvalidCell {
                cell: self.id.clone(),
                reason: format!("propensity {} violates overlap ε = {epsilon}", self.p1),
            });
        }
        Ok(())
    }
}

/// Quantile thresholds and mass-point score values for one arm.
///
/// `a_lo`/`a_hi` are the switching-score values on the threshold atom,
/// expressed on the latent-propensity scale (so both lie in
/// `[c_lo, c_hi]`). For the control arm this is one minus the
/// control-probability constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub tau_lo: f64,
    pub tau_hi: f64,
    pub q_lo: f64,
    pub q_hi: f64,
    pub a_lo: f64,
    pub a_hi: f64,
}

impl Thresholds {
    pub fn tau(&self, side: Side) -> f64 {
        match side {
            Side::Lo => self.tau_lo,
            Side::Hi => self.tau_hi,
        }
    }

    pub fn q(&self, side: Side) -> f64 {
        match side {
            Side::Lo => self.q_lo,
            Side::Hi => self.q_hi,
        }
    }

    pub fn a(&self, side: Side) -> f64 {
        match side {
            Side::Lo => self.a_lo,
            Side::Hi => self.a_hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmEnvelopes {
    pub lo_marginal: StepCdf,
    pub hi_marginal: StepCdf,
    pub lo_cross: StepCdf,
    pub hi_cross: StepCdf,
    /// `None` unless `c_lo < p1 < c_hi`.
    pub thresholds: Option<Thresholds>,
}

impl ArmEnvelopes {
    pub fn get(&self, side: Side, conditioning: Conditioning) -> &StepCdf {
        match (side, conditioning) {
            (Side::Lo, Conditioning::Marginal) => &self.lo_marginal,
            (Side::Hi, Conditioning::Marginal) => &self.hi_marginal,
            (Side::Lo, Conditioning::Cross) => &self.lo_cross,
            (Side::Hi, Conditioning::Cross) => &self.hi_cross,
        }
    }
}

/// All eight envelopes of one cell plus what is needed to recompute them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellEnvelopes {
    pub sensitivity: CellSensitivity,
    pub p1: f64,
    pub treated: ArmEnvelopes,
    pub control: ArmEnvelopes,
    observed_treated: StepCdf,
    observed_control: StepCdf,
}

impl CellEnvelopes {
    pub fn arm(&self, arm: Arm) -> &ArmEnvelopes {
        match arm {
            Arm::Treated => &self.treated,
            Arm::Control => &self.control,
        }
    }

    pub fn get(&self, arm: Arm, side: Side, conditioning: Conditioning) -> &StepCdf {
        self.arm(arm).get(side, conditioning)
    }

    pub fn observed(&self, arm: Arm) -> &StepCdf {
        match arm {
            Arm::Treated => &self.observed_treated,
            Arm::Control => &self.observed_control,
        }
    }

    /// True when thresholds (and switching scores) are undefined.
    pub fn thresholds_undefined(&self) -> bool {
        self.treated.thresholds.is_none()
    }
}

/// Three-branch latent propensity score `P(X = 1 | Y_x = y, W = w)`.
///
/// A constant score (unconfoundedness) has no threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwitchingScore {
    pub threshold: Option<f64>,
    pub below_value: f64,
    pub at_value: f64,
    pub above_value: f64,
}

impl SwitchingScore {
    pub fn constant(p: f64) -> Self {
        Self {
            threshold: None,
            below_value: p,
            at_value: p,
            above_value: p,
        }
    }

    pub fn eval(&self, y: f64) -> f64 {
        match self.threshold {
            None => self.below_value,
            Some(t) if y < t => self.below_value,
            Some(t) if y > t => self.above_value,
            Some(_) => self.at_value,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Affine {
    intercept: f64,
    slope: f64,
}

impl Affine {
    fn apply(&self, f: f64) -> f64 {
        self.intercept + self.slope * f
    }

    fn inverse(&self, t: f64) -> f64 {
        (t - self.intercept) / self.slope
    }
}

/// `y ↦ min/max{low(F_x(y)), high(F_x(y))}`; `low` is the branch that is
/// active below the threshold.
#[derive(Debug, Clone, Copy)]
struct EnvelopeMap {
    side: Side,
    low: Affine,
    high: Affine,
}

impl EnvelopeMap {
    fn new(p1: f64, s: CellSensitivity, arm: Arm, side: Side, conditioning: Conditioning) -> Self {
        let (p, q, l, h) = (p1, 1.0 - p1, s.c_lo, s.c_hi);
        let (low, high) = match (arm, conditioning, side) {
            (Arm::Treated, Conditioning::Marginal, Side::Hi) => (
                Affine { intercept: 0.0, slope: p / l },
                Affine { intercept: (h - p) / h, slope: p / h },
            ),
            (Arm::Treated, Conditioning::Marginal, Side::Lo) => (
                Affine { intercept: 0.0, slope: p / h },
                Affine { intercept: (l - p) / l, slope: p / l },
            ),
            (Arm::Treated, Conditioning::Cross, Side::Hi) => (
                Affine { intercept: 0.0, slope: p * (1.0 - l) / (q * l) },
                Affine { intercept: (h - p) / (h * q), slope: p * (1.0 - h) / (q * h) },
            ),
            (Arm::Treated, Conditioning::Cross, Side::Lo) => (
                Affine { intercept: 0.0, slope: p * (1.0 - h) / (q * h) },
                Affine { intercept: (l - p) / (l * q), slope: p * (1.0 - l) / (q * l) },
            ),
            (Arm::Control, Conditioning::Marginal, Side::Lo) => (
                Affine { intercept: 0.0, slope: q / (1.0 - l) },
                Affine { intercept: (p - h) / (1.0 - h), slope: q / (1.0 - h) },
            ),
            (Arm::Control, Conditioning::Marginal, Side::Hi) => (
                Affine { intercept: 0.0, slope: q / (1.0 - h) },
                Affine { intercept: (p - l) / (1.0 - l), slope: q / (1.0 - l) },
            ),
            (Arm::Control, Conditioning::Cross, Side::Lo) => (
                Affine { intercept: 0.0, slope: q * l / (p * (1.0 - l)) },
                Affine { intercept: (p - h) / ((1.0 - h) * p), slope: q * h / (p * (1.0 - h)) },
            ),
            (Arm::Control, Conditioning::Cross, Side::Hi) => (
                Affine { intercept: 0.0, slope: q * h / (p * (1.0 - h)) },
                Affine { intercept: (p - l) / ((1.0 - l) * p), slope: q * l / (p * (1.0 - l)) },
            ),
        };
        Self { side, low, high }
    }

    fn apply(&self, f: f64) -> f64 {
        let (a, b) = (self.low.apply(f), self.high.apply(f));
        match self.side {
            Side::Lo => a.max(b),
            Side::Hi => a.min(b),
        }
    }

    /// The level `u` with `Q_env(τ) = Q_{F_x}(u)`.
    fn quantile_argument(&self, tau: f64) -> f64 {
        let (a, b) = (self.low.inverse(tau), self.high.inverse(tau));
        match self.side {
            Side::Lo => a.min(b),
            Side::Hi => a.max(b),
        }
    }

    fn materialize(&self, observed: &StepCdf) -> Result<StepCdf> {
        let values: Vec<f64> = observed
            .cumulative()
            .iter()
            .map(|&f| self.apply(f))
            .collect();
        StepCdf::from_cumulative(observed.support(), &values)
    }
}

/// Lower-side threshold level `τ̲ₓ`; the upper side uses `1 - τ̲ₓ`.
fn tau_lo(p1: f64, s: CellSensitivity, arm: Arm) -> f64 {
    let (p, l, h) = (p1, s.c_lo, s.c_hi);
    match arm {
        Arm::Treated => (p - l) * h / (p * (h - l)),
        Arm::Control => (h - p) * (1.0 - l) / ((1.0 - p) * (h - l)),
    }
}

fn side_tau(p1: f64, s: CellSensitivity, arm: Arm, side: Side) -> f64 {
    let t = tau_lo(p1, s, arm);
    match side {
        Side::Lo => t,
        Side::Hi => 1.0 - t,
    }
}

/// Score values `(below, above)` of the switching score attaining the
/// `side` envelope of arm `arm`.
fn score_branches(s: CellSensitivity, arm: Arm, side: Side) -> (f64, f64) {
    match (arm, side) {
        (Arm::Treated, Side::Hi) | (Arm::Control, Side::Lo) => (s.c_lo, s.c_hi),
        (Arm::Treated, Side::Lo) | (Arm::Control, Side::Hi) => (s.c_hi, s.c_lo),
    }
}

/// Atom value of the switching score, on the latent-propensity scale.
///
/// The arm-`x` probability at the threshold `Q` is
/// `P(Y = Q, X = x | w) / (high(F_x(Q)) − low(F_x(Q−)))`, falling back to
/// `p_{x|w}` when the denominator vanishes.
fn atom_score(cell: &Cell, map: &EnvelopeMap, arm: Arm, q: f64) -> f64 {
    let observed = cell.observed(arm);
    let share = cell.arm_share(arm);
    let numerator = share * observed.mass_at(q);
    let denominator = map.high.apply(observed.eval(q)) - map.low.apply(observed.left_limit(q));
    let a = if denominator == 0.0 {
        share
    } else {
        numerator / denominator
    };
    match arm {
        Arm::Treated => a,
        Arm::Control => 1.0 - a,
    }
}

fn arm_thresholds(cell: &Cell, s: CellSensitivity, arm: Arm) -> Thresholds {
    let observed = cell.observed(arm);
    let tau_lo = side_tau(cell.p1, s, arm, Side::Lo);
    let tau_hi = side_tau(cell.p1, s, arm, Side::Hi);
    let q_lo = observed.quantile_unchecked(tau_lo);
    let q_hi = observed.quantile_unchecked(tau_hi);
    let map_lo = EnvelopeMap::new(cell.p1, s, arm, Side::Lo, Conditioning::Marginal);
    let map_hi = EnvelopeMap::new(cell.p1, s, arm, Side::Hi, Conditioning::Marginal);
    Thresholds {
        tau_lo,
        tau_hi,
        q_lo,
        q_hi,
        a_lo: atom_score(cell, &map_lo, arm, q_lo),
        a_hi: atom_score(cell, &map_hi, arm, q_hi),
    }
}

fn arm_envelopes(cell: &Cell, s: CellSensitivity, arm: Arm) -> Result<ArmEnvelopes> {
    let observed = cell.observed(arm);
    if s.is_collapsed() {
        return Ok(ArmEnvelopes {
            lo_marginal: observed.clone(),
            hi_marginal: observed.clone(),
            lo_cross: observed.clone(),
            hi_cross: observed.clone(),
            thresholds: None,
        });
    }
    let build = |side, conditioning| {
        EnvelopeMap::new(cell.p1, s, arm, side, conditioning).materialize(observed)
    };
    Ok(ArmEnvelopes {
        lo_marginal: build(Side::Lo, Conditioning::Marginal)?,
        hi_marginal: build(Side::Hi, Conditioning::Marginal)?,
        lo_cross: build(Side::Lo, Conditioning::Cross)?,
        hi_cross: build(Side::Hi, Conditioning::Cross)?,
        thresholds: s.is_strict(cell.p1).then(|| arm_thresholds(cell, s, arm)),
    })
}

fn check_sensitivity(p1: f64, s: CellSensitivity) -> Result<()> {
    validate_sensitivity(p1, s).map_err(|violation| BoundsError::InvalidSensitivity { p1, violation })
}

/// Envelopes, thresholds and atom scores of one cell.
pub fn compute_envelopes(cell: &Cell, s: CellSensitivity) -> Result<CellEnvelopes> {
    check_sensitivity(cell.p1, s)?;
    if cell.f_treated.is_empty() || cell.f_control.is_empty() {
        return Err(BoundsError::InvalidCell {
            cell: cell.id.clone(),
            reason: "empty arm distribution".into(),
        });
    }
    Ok(CellEnvelopes {
        sensitivity: s,
        p1: cell.p1,
        treated: arm_envelopes(cell, s, Arm::Treated)?,
        control: arm_envelopes(cell, s, Arm::Control)?,
        observed_treated: cell.f_treated.clone(),
        observed_control: cell.f_control.clone(),
    })
}

/// Bound on the `tau`-quantile of `Y_x` (marginal) or `Y_x | X = 1-x`
/// (cross). `bound = Hi` is the upper quantile bound, i.e. the left-inverse
/// of the *lower* CDF envelope, and conversely.
///
/// The result is the left-inverse of the stored envelope. The closed form
/// `Q_{F_x}(u(τ))` is recomputed as a cross-check; a disagreement is logged
/// and resolved toward the left-inverse.
pub fn envelope_quantile(
    env: &CellEnvelopes,
    arm: Arm,
    bound: Side,
    conditioning: Conditioning,
    tau: f64,
) -> Result<f64> {
    let q = env.get(arm, bound.flip(), conditioning).quantile(tau)?;
    if !env.sensitivity.is_collapsed() {
        let closed = closed_form_quantile(env, arm, bound, conditioning, tau);
        if closed != q {
            warn!(
                "envelope quantile mismatch: arm {arm:?}, bound {bound:?}, {conditioning:?}, \
                 tau {tau}: left-inverse {q}, closed form {closed}"
            );
        }
    }
    Ok(q)
}

/// `Q_{F_x}` evaluated at the min/max of the inverted affine branches.
pub fn closed_form_quantile(
    env: &CellEnvelopes,
    arm: Arm,
    bound: Side,
    conditioning: Conditioning,
    tau: f64,
) -> f64 {
    let observed = env.observed(arm);
    if env.sensitivity.is_collapsed() {
        return observed.quantile_unchecked(tau);
    }
    let map = EnvelopeMap::new(env.p1, env.sensitivity, arm, bound.flip(), conditioning);
    observed.quantile_unchecked(map.quantile_argument(tau))
}

/// Switching latent propensity score attaining the `side` CDF envelope of
/// `arm`. Outside the strict case `c_lo < p1 < c_hi` the constant score
/// `p1` is returned.
pub fn switching_score(cell: &Cell, s: CellSensitivity, arm: Arm, side: Side) -> Result<SwitchingScore> {
    check_sensitivity(cell.p1, s)?;
    if !s.is_strict(cell.p1) {
        return Ok(SwitchingScore::constant(cell.p1));
    }
    let thresholds = arm_thresholds(cell, s, arm);
    let (below_value, above_value) = score_branches(s, arm, side);
    Ok(SwitchingScore {
        threshold: Some(thresholds.q(side)),
        below_value,
        at_value: thresholds.a(side),
        above_value,
    })
}

fn check_aligned(cells: &[Cell], envs: &[CellEnvelopes]) -> Result<()> {
    if cells.is_empty() {
        return Err(BoundsError::Misaligned("no cells".into()));
    }
    if cells.len() != envs.len() {
        return Err(BoundsError::Misaligned(format!(
            "{} cells but {} envelope sets",
            cells.len(),
            envs.len()
        )));
    }
    for (c, e) in cells.iter().zip(envs) {
        if c.p1 != e.p1 || &c.f_treated != e.observed(Arm::Treated) {
            return Err(BoundsError::Misaligned(format!(
                "envelopes do not belong to cell '{}'",
                c.id
            )));
        }
    }
    Ok(())
}

/// `E_W[env(y | W)]` for one marginal envelope.
pub fn aggregate_marginal(cells: &[Cell], envs: &[CellEnvelopes], arm: Arm, side: Side) -> Result<StepCdf> {
    check_aligned(cells, envs)?;
    let parts: Vec<(f64, &StepCdf)> = cells
        .iter()
        .zip(envs)
        .map(|(c, e)| (c.weight, e.get(arm, side, Conditioning::Marginal)))
        .collect();
    StepCdf::weighted_average(&parts)
}

/// Treated units' share of each cell, `P(W = w | X = 1)`.
pub fn treated_cell_weights(cells: &[Cell]) -> Result<Vec<f64>> {
    let total: f64 = cells.iter().map(|c| c.weight * c.p1).sum();
    if !(total > 0.0) {
        return Err(BoundsError::ZeroTreatedMass);
    }
    Ok(cells.iter().map(|c| c.weight * c.p1 / total).collect())
}

/// Envelope of `F_{Y_0 | X=1}`: cross-arm control envelopes averaged over
/// the treated units' covariate distribution.
pub fn aggregate_treated_control_outcome(
    cells: &[Cell],
    envs: &[CellEnvelopes],
    side: Side,
) -> Result<StepCdf> {
    check_aligned(cells, envs)?;
    let weights = treated_cell_weights(cells)?;
    let parts: Vec<(f64, &StepCdf)> = weights
        .iter()
        .zip(envs)
        .map(|(&w, e)| (w, e.get(Arm::Control, side, Conditioning::Cross)))
        .collect();
    StepCdf::weighted_average(&parts)
}

/// Observed `F_{Y | X=1}`.
pub fn aggregate_treated_outcome(cells: &[Cell]) -> Result<StepCdf> {
    let weights = treated_cell_weights(cells)?;
    let parts: Vec<(f64, &StepCdf)> = weights.iter().zip(cells).map(|(&w, c)| (w, &c.f_treated)).collect();
    StepCdf::weighted_average(&parts)
}

/// Cells (sorted by id) with their envelopes at one sensitivity point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemEnvelopes {
    pub cells: Vec<Cell>,
    pub envs: Vec<CellEnvelopes>,
}

impl ProblemEnvelopes {
    /// Validates the cell collection and computes every cell's envelopes.
    ///
    /// Cells are reordered by id; `sensitivities[i]` belongs to `cells[i]`.
    pub fn new(cells: Vec<Cell>, sensitivities: &[CellSensitivity]) -> Result<Self> {
        if cells.is_empty() {
            return Err(BoundsError::Misaligned("no cells".into()));
        }
        if cells.len() != sensitivities.len() {
            return Err(BoundsError::Misaligned(format!(
                "{} cells but {} sensitivity pairs",
                cells.len(),
                sensitivities.len()
            )));
        }
        let total: f64 = cells.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(BoundsError::InvalidWeights(format!("cell weights sum to {total}")));
        }
        let mut paired: Vec<(Cell, CellSensitivity)> = cells.into_iter().zip(sensitivities.iter().copied()).collect();
        paired.sort_by(|a, b| a.0.id.cmp(&b.0.id));
        if paired.windows(2).any(|w| w[0].0.id == w[1].0.id) {
            return Err(BoundsError::Misaligned("duplicate cell ids".into()));
        }
        let envs = paired
            .par_iter()
            .map(|(c, s)| {
                compute_envelopes(c, *s).map_err(|e| match e {
                    BoundsError::InvalidSensitivity { .. } => BoundsError::InvalidCell {
                        cell: c.id.clone(),
                        reason: e.to_string(),
                    },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let cells = paired.into_iter().map(|(c, _)| c).collect();
        Ok(Self { cells, envs })
    }

    /// Same sensitivity pair in every cell.
    pub fn uniform(cells: Vec<Cell>, s: CellSensitivity) -> Result<Self> {
        let n = cells.len();
        Self::new(cells, &vec![s; n])
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Cell, &CellEnvelopes)> {
        self.cells.iter().zip(&self.envs)
    }

    pub fn sensitivities(&self) -> Vec<CellSensitivity> {
        self.envs.iter().map(|e| e.sensitivity).collect()
    }
}
