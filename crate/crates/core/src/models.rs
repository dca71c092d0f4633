//! Sensitivity parameterizations.
//!
//! Marginal c-dependence bounds the latent propensity score
//! `P(X = 1 | Y_x = y, W = w)` to `[c_lo, c_hi]`. The generalized marginal
//! sensitivity model bounds the odds ratio between the latent and the
//! observed propensity to `[Λ_lo, Λ_hi]`. For a fixed observed propensity
//! `p1` the two are in exact one-to-one correspondence.

use std::fmt;

use serde::Serialize;

use crate::error::{BoundsError, Result};

/// Clamp applied by [`cdep_from_conditional_c`] to keep bounds inside `(0, 1)`.
pub const CONDITIONAL_C_CLAMP: f64 = 1e-9;

/// Bounds `(c_lo, c_hi)` on the latent propensity score in one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellSensitivity {
    pub c_lo: f64,
    pub c_hi: f64,
}

/// Odds-ratio bounds `(Λ_lo, Λ_hi)` with `Λ_lo ∈ (0, 1]`, `Λ_hi ∈ [1, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GmsmBounds {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
}

/// Which inequality of `0 < c_lo <= p1 <= c_hi < 1` fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SensitivityViolation {
    NotFinite,
    CLoNotPositive,
    CLoAboveP1,
    P1AboveCHi,
    CHiNotBelowOne,
    P1OutsideUnit,
}

impl fmt::Display for SensitivityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            Self::NotFinite => "bounds must be finite",
            Self::CLoNotPositive => "c_lo <= 0",
            Self::CLoAboveP1 => "c_lo > p1",
            Self::P1AboveCHi => "p1 > c_hi",
            Self::CHiNotBelowOne => "c_hi >= 1",
            Self::P1OutsideUnit => "p1 outside (0, 1)",
        };
        f.write_str(msg)
    }
}

/// Result of [`cdep_from_conditional_c`]; `clamped` records whether either
/// bound hit the clamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClampedSensitivity {
    pub sensitivity: CellSensitivity,
    pub clamped: bool,
}

impl CellSensitivity {
    pub fn new(c_lo: f64, c_hi: f64) -> Self {
        Self { c_lo, c_hi }
    }

    /// The unconfoundedness point `(p1, p1)`.
    pub fn collapsed(p1: f64) -> Self {
        Self { c_lo: p1, c_hi: p1 }
    }

    pub fn is_collapsed(&self) -> bool {
        self.c_lo == self.c_hi
    }

    /// `c_lo < p1 < c_hi`: the case in which thresholds and switching scores
    /// are defined.
    pub fn is_strict(&self, p1: f64) -> bool {
        self.c_lo < p1 && p1 < self.c_hi
    }

    /// True when `self ⊆ other` as intervals.
    pub fn is_within(&self, other: &CellSensitivity) -> bool {
        other.c_lo <= self.c_lo && self.c_hi <= other.c_hi
    }
}

impl GmsmBounds {
    pub fn new(lambda_lo: f64, lambda_hi: f64) -> Result<Self> {
        let g = Self {
            lambda_lo,
            lambda_hi,
        };
        g.validate()?;
        Ok(g)
    }

    /// The standard MSM with a single `Λ >= 1`: `(1/Λ, Λ)`.
    pub fn msm(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 1.0) {
            return Err(BoundsError::InvalidModel(format!(
                "MSM requires Λ >= 1, got {lambda}"
            )));
        }
        Self::new(1.0 / lambda, lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_lo > 0.0 && self.lambda_lo <= 1.0) {
            return Err(BoundsError::InvalidModel(format!(
                "Λ_lo must lie in (0, 1], got {}",
                self.lambda_lo
            )));
        }
        if !(self.lambda_hi >= 1.0 && self.lambda_hi.is_finite()) {
            return Err(BoundsError::InvalidModel(format!(
                "Λ_hi must lie in [1, ∞), got {}",
                self.lambda_hi
            )));
        }
        Ok(())
    }
}

fn check_p1(p1: f64) -> Result<()> {
    if p1 > 0.0 && p1 < 1.0 {
        Ok(())
    } else {
        Err(BoundsError::InvalidSensitivity {
            p1,
            violation: SensitivityViolation::P1OutsideUnit,
        })
    }
}

fn odds_to_score(p1: f64, lambda: f64) -> f64 {
    let a = p1 * lambda;
    a / ((1.0 - p1) + a)
}

fn score_to_odds(p1: f64, c: f64) -> f64 {
    (c / (1.0 - c)) * ((1.0 - p1) / p1)
}

/// `c = p1 Λ / (p0 + p1 Λ)` at each endpoint.
pub fn cdep_from_gmsm(p1: f64, g: GmsmBounds) -> Result<CellSensitivity> {
    check_p1(p1)?;
    g.validate()?;
    let mut s = CellSensitivity {
        c_lo: odds_to_score(p1, g.lambda_lo),
        c_hi: odds_to_score(p1, g.lambda_hi),
    };
    // Λ = 1 is the fixed point; keep it exact so the collapsed branch fires
    if g.lambda_lo == 1.0 {
        s.c_lo = p1;
    }
    if g.lambda_hi == 1.0 {
        s.c_hi = p1;
    }
    Ok(s)
}

/// `Λ = (c / (1 - c)) (p0 / p1)` at each endpoint.
pub fn gmsm_from_cdep(p1: f64, s: CellSensitivity) -> Result<GmsmBounds> {
    validate_sensitivity(p1, s).map_err(|violation| BoundsError::InvalidSensitivity { p1, violation })?;
    let mut g = GmsmBounds {
        lambda_lo: score_to_odds(p1, s.c_lo),
        lambda_hi: score_to_odds(p1, s.c_hi),
    };
    if s.c_lo == p1 {
        g.lambda_lo = 1.0;
    }
    if s.c_hi == p1 {
        g.lambda_hi = 1.0;
    }
    Ok(g)
}

/// Bounds `p1 ± c`, clamped to `[κ, 1 - κ]` with κ = [`CONDITIONAL_C_CLAMP`].
pub fn cdep_from_conditional_c(p1: f64, c: f64) -> ClampedSensitivity {
    let c = c.max(0.0);
    let raw_lo = p1 - c;
    let raw_hi = p1 + c;
    let c_lo = raw_lo.max(CONDITIONAL_C_CLAMP);
    let c_hi = raw_hi.min(1.0 - CONDITIONAL_C_CLAMP);
    ClampedSensitivity {
        sensitivity: CellSensitivity { c_lo, c_hi },
        clamped: c_lo != raw_lo || c_hi != raw_hi,
    }
}

/// Checks `0 < c_lo <= p1 <= c_hi < 1`.
pub fn validate_sensitivity(
    p1: f64,
    s: CellSensitivity,
) -> std::result::Result<(), SensitivityViolation> {
    if !(s.c_lo.is_finite() && s.c_hi.is_finite() && p1.is_finite()) {
        return Err(SensitivityViolation::NotFinite);
    }
    if !(p1 > 0.0 && p1 < 1.0) {
        return Err(SensitivityViolation::P1OutsideUnit);
    }
    if s.c_lo <= 0.0 {
        return Err(SensitivityViolation::CLoNotPositive);
    }
    if s.c_lo > p1 {
        return Err(SensitivityViolation::CLoAboveP1);
    }
    if p1 > s.c_hi {
        return Err(SensitivityViolation::P1AboveCHi);
    }
    if s.c_hi >= 1.0 {
        return Err(SensitivityViolation::CHiNotBelowOne);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn gmsm_to_cdep_examples() {
        let s = cdep_from_gmsm(0.5, GmsmBounds::new(0.5, 2.0).unwrap()).unwrap();
        assert!(close(s.c_lo, 1.0 / 3.0) && close(s.c_hi, 2.0 / 3.0));

        let s = cdep_from_gmsm(0.5, GmsmBounds::new(1.0, 1.0).unwrap()).unwrap();
        assert_eq!((s.c_lo, s.c_hi), (0.5, 0.5));

        let s = cdep_from_gmsm(0.2, GmsmBounds::msm(1.0).unwrap()).unwrap();
        assert_eq!((s.c_lo, s.c_hi), (0.2, 0.2));

        assert!(cdep_from_gmsm(1.0, GmsmBounds::msm(2.0).unwrap()).is_err());
        assert!(GmsmBounds::new(1.5, 2.0).is_err());
        assert!(GmsmBounds::new(0.5, 0.9).is_err());
        assert!(GmsmBounds::msm(0.5).is_err());
    }

    #[test]
    fn cdep_to_gmsm_examples() {
        let g = gmsm_from_cdep(0.5, CellSensitivity::new(1.0 / 3.0, 2.0 / 3.0)).unwrap();
        assert!(close(g.lambda_lo, 0.5) && close(g.lambda_hi, 2.0));

        let g = gmsm_from_cdep(0.5, CellSensitivity::new(0.5, 0.5)).unwrap();
        assert_eq!((g.lambda_lo, g.lambda_hi), (1.0, 1.0));
        let g = gmsm_from_cdep(0.7, CellSensitivity::new(0.7, 0.7)).unwrap();
        assert_eq!((g.lambda_lo, g.lambda_hi), (1.0, 1.0));

        assert!(gmsm_from_cdep(0.5, CellSensitivity::new(0.6, 0.7)).is_err());
    }

    #[test]
    fn conditional_c_examples() {
        let r = cdep_from_conditional_c(0.5, 0.0);
        assert_eq!(r.sensitivity, CellSensitivity::new(0.5, 0.5));
        assert!(!r.clamped);

        let r = cdep_from_conditional_c(0.5, 0.2);
        assert!(close(r.sensitivity.c_lo, 0.3) && close(r.sensitivity.c_hi, 0.7));

        let r = cdep_from_conditional_c(0.1, 0.5);
        assert_eq!(r.sensitivity.c_lo, 1e-9);
        assert!(close(r.sensitivity.c_hi, 0.6));
        assert!(r.clamped);
    }

    #[test]
    fn validation_reports() {
        assert_eq!(validate_sensitivity(0.5, CellSensitivity::new(0.3, 0.7)), Ok(()));
        assert_eq!(
            validate_sensitivity(0.5, CellSensitivity::new(0.6, 0.7)),
            Err(SensitivityViolation::CLoAboveP1)
        );
        assert_eq!(
            validate_sensitivity(0.5, CellSensitivity::new(0.3, 1.0)),
            Err(SensitivityViolation::CHiNotBelowOne)
        );
        assert_eq!(
            validate_sensitivity(0.5, CellSensitivity::new(0.0, 0.7)),
            Err(SensitivityViolation::CLoNotPositive)
        );
        assert_eq!(
            validate_sensitivity(0.8, CellSensitivity::new(0.3, 0.7)),
            Err(SensitivityViolation::P1AboveCHi)
        );
    }

    proptest! {
        #[test]
        fn round_trip_through_gmsm(p1 in 0.01f64..0.99, u in 0.0f64..1.0, v in 0.0f64..1.0) {
            let s = CellSensitivity::new(0.005 + u * (p1 - 0.005), p1 + v * (0.995 - p1));
            let back = cdep_from_gmsm(p1, gmsm_from_cdep(p1, s).unwrap()).unwrap();
            prop_assert!(close(back.c_lo, s.c_lo) && close(back.c_hi, s.c_hi));
        }

        #[test]
        fn round_trip_through_cdep(p1 in 0.01f64..0.99, lo in 0.05f64..=1.0, hi in 1.0f64..20.0) {
            let g = GmsmBounds::new(lo, hi).unwrap();
            let back = gmsm_from_cdep(p1, cdep_from_gmsm(p1, g).unwrap()).unwrap();
            prop_assert!((back.lambda_lo - lo).abs() < 1e-12 * lo.max(1.0));
            prop_assert!((back.lambda_hi - hi).abs() < 1e-12 * hi);
        }

        #[test]
        fn monotone_in_lambda(p1 in 0.01f64..0.99, a in 1.0f64..10.0, d in 0.01f64..5.0) {
            let small = cdep_from_gmsm(p1, GmsmBounds::msm(a).unwrap()).unwrap();
            let large = cdep_from_gmsm(p1, GmsmBounds::msm(a + d).unwrap()).unwrap();
            prop_assert!(large.c_hi > small.c_hi);
            prop_assert!(large.c_lo < small.c_lo);
            prop_assert!(validate_sensitivity(p1, large).is_ok());
        }

        #[test]
        fn unit_lambda_is_unconfoundedness(p1 in 0.001f64..0.999) {
            let s = cdep_from_gmsm(p1, GmsmBounds::msm(1.0).unwrap()).unwrap();
            prop_assert_eq!(s, CellSensitivity::collapsed(p1));
        }
    }
}
