//! Sharp partial-identification bounds for treatment-effect parameters when
//! unconfoundedness is relaxed to marginal (or joint) c-dependence, or
//! equivalently to the generalized marginal sensitivity model.
//!
//! All distributions are finitely supported step CDFs ([`dist::StepCdf`]).
//! Covariates enter as discrete cells ([`envelopes::Cell`]). The crate is
//! layered bottom-up:
//!
//! - [`dist`]: step-CDF algebra (evaluation, left limits, left-inverse
//!   quantiles, mixtures, means, truncated means, partial quantile integrals).
//! - [`models`]: sensitivity parameterizations and the conversions between
//!   c-dependence bounds and odds-ratio (Λ) bounds.
//! - [`envelopes`]: per-cell sharp CDF envelopes, thresholds, mass-point
//!   constants and switching latent propensity scores.
//! - [`params`]: bound intervals for the supported estimands.
//! - [`oracle`]: brute-force ground truth on tiny instances.

pub mod dist;
pub mod envelopes;
pub mod error;
pub mod models;
pub mod oracle;
pub mod params;

pub use dist::{StepCdf, TruncatedMeans};
pub use envelopes::{
    compute_envelopes, Arm, ArmEnvelopes, Cell, CellEnvelopes, Conditioning, ProblemEnvelopes,
    Side, SwitchingScore, Thresholds,
};
pub use error::{BoundsError, Result};
pub use models::{CellSensitivity, GmsmBounds, SensitivityViolation};
pub use params::{BoundFlag, BoundInterval, Estimand, WeightFunction};
