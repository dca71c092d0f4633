//! Finitely supported distribution functions.
//!
//! A [`StepCdf`] stores the strictly increasing support of a discrete
//! distribution together with the cumulative probability at each support
//! point. Evaluation is right-continuous; quantiles are left-inverses.
//! Every distribution handled by the crate (observed arm distributions,
//! envelopes, aggregated envelopes, the distribution of cell-level effects)
//! is one of these.

use serde::Serialize;

use crate::error::{BoundsError, Result};

/// Total mass may deviate from one by at most this much before rejection.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Outcome values closer than this are merged into one support point.
pub const SUPPORT_MERGE_TOLERANCE: f64 = 1e-12;

/// Right-continuous distribution function with finite support.
///
/// Invariants: `support` is strictly increasing, `cum` is strictly
/// increasing with `cum[0] > 0` and `cum[last] == 1.0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepCdf {
    support: Vec<f64>,
    cum: Vec<f64>,
}

/// Decomposition of a distribution at the `a`-quantile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncatedMeans {
    /// `E[Y | Y <= cutoff]`.
    pub lower_mean: f64,
    /// `E[Y | Y > cutoff]`, or 0 when `upper_empty`.
    pub upper_mean: f64,
    /// `F(cutoff)`.
    pub mass_at_or_below: f64,
    /// The left-inverse quantile at `a`.
    pub cutoff: f64,
    /// Set when no mass lies strictly above the cutoff.
    pub upper_empty: bool,
}

fn check_open_unit(value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(BoundsError::ProbabilityOutOfRange {
            value,
            range: "(0, 1)",
        })
    }
}

/// Sorted union of supports with near-equal values merged.
pub(crate) fn merged_support<'a, I>(cdfs: I) -> Vec<f64>
where
    I: IntoIterator<Item = &'a StepCdf>,
{
    let mut all: Vec<f64> = cdfs
        .into_iter()
        .flat_map(|f| f.support.iter().copied())
        .collect();
    all.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(all.len());
    for v in all {
        match out.last() {
            Some(&last) if v - last < SUPPORT_MERGE_TOLERANCE => {}
            _ => out.push(v),
        }
    }
    out
}

impl StepCdf {
    /// Builds a distribution from `(value, probability)` pairs.
    ///
    /// Pairs may be unsorted and may repeat values; repeated values (up to
    /// [`SUPPORT_MERGE_TOLERANCE`]) have their masses merged. Zero masses are
    /// dropped. The total must be within [`MASS_TOLERANCE`] of one and is
    /// renormalized.
    pub fn from_masses<I>(points: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut pts: Vec<(f64, f64)> = points.into_iter().collect();
        for &(v, m) in &pts {
            if !v.is_finite() {
                return Err(BoundsError::InvalidDistribution(format!(
                    "non-finite support value {v}"
                )));
            }
            if !m.is_finite() || m < 0.0 {
                return Err(BoundsError::InvalidDistribution(format!(
                    "invalid mass {m} at {v}"
                )));
            }
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
        for (v, m) in pts {
            match merged.last_mut() {
                Some(last) if v - last.0 < SUPPORT_MERGE_TOLERANCE => last.1 += m,
                _ => merged.push((v, m)),
            }
        }
        merged.retain(|&(_, m)| m > 0.0);

        let total: f64 = merged.iter().map(|&(_, m)| m).sum();
        if merged.is_empty() {
            return Err(BoundsError::InvalidDistribution("empty support".into()));
        }
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(BoundsError::InvalidDistribution(format!(
                "total mass {total} is not 1"
            )));
        }

        let mut support = Vec::with_capacity(merged.len());
        let mut cum = Vec::with_capacity(merged.len());
        let mut acc = 0.0;
        for (v, m) in merged {
            acc += m / total;
            let c = acc.min(1.0);
            if cum.last().is_some_and(|&prev| c <= prev) {
                continue;
            }
            support.push(v);
            cum.push(c);
        }
        *cum.last_mut().expect("nonempty") = 1.0;
        Ok(Self { support, cum })
    }

    /// Builds a distribution from CDF values taken at strictly increasing
    /// support points.
    ///
    /// Values are clamped to `[0, 1]`; dips below the running maximum of at
    /// most `1e-12` are absorbed, larger ones are rejected. Points with no
    /// increment are dropped. The final value must be within
    /// [`MASS_TOLERANCE`] of one.
    pub fn from_cumulative(support: &[f64], values: &[f64]) -> Result<Self> {
        if support.len() != values.len() {
            return Err(BoundsError::InvalidDistribution(
                "support and cumulative lengths differ".into(),
            ));
        }
        if support.is_empty() {
            return Err(BoundsError::InvalidDistribution("empty support".into()));
        }
        let last = values[values.len() - 1];
        if !last.is_finite() || (last - 1.0).abs() > MASS_TOLERANCE {
            return Err(BoundsError::InvalidDistribution(format!(
                "cumulative probabilities end at {last}, not 1"
            )));
        }

        let mut out_support: Vec<f64> = Vec::with_capacity(support.len());
        let mut out_cum: Vec<f64> = Vec::with_capacity(support.len());
        let mut prev_value = f64::NEG_INFINITY;
        let mut running = 0.0_f64;
        for (i, (&y, &v)) in support.iter().zip(values).enumerate() {
            if !y.is_finite() || !v.is_finite() {
                return Err(BoundsError::InvalidDistribution(
                    "non-finite support or cumulative value".into(),
                ));
            }
            if y <= prev_value {
                return Err(BoundsError::InvalidDistribution(format!(
                    "support not strictly increasing at {y}"
                )));
            }
            prev_value = y;
            let mut c = if i + 1 == support.len() {
                1.0
            } else {
                v.clamp(0.0, 1.0)
            };
            if c < running - 1e-12 {
                return Err(BoundsError::InvalidDistribution(format!(
                    "cumulative probabilities decrease at {y}"
                )));
            }
            c = c.max(running);
            let merge = out_support
                .last()
                .is_some_and(|&s| y - s < SUPPORT_MERGE_TOLERANCE);
            if merge {
                *out_cum.last_mut().expect("nonempty") = c;
            } else if c > running {
                out_support.push(y);
                out_cum.push(c);
            }
            running = c;
        }
        Ok(Self {
            support: out_support,
            cum: out_cum,
        })
    }

    pub fn point_mass(value: f64) -> Self {
        Self {
            support: vec![value],
            cum: vec![1.0],
        }
    }

    /// Uniform distribution over the given (distinct) values.
    pub fn uniform(values: &[f64]) -> Result<Self> {
        let m = 1.0 / values.len() as f64;
        Self::from_masses(values.iter().map(|&v| (v, m)))
    }

    /// Two-point distribution with `P(Y = low) = p_low`.
    pub fn two_point(low: f64, high: f64, p_low: f64) -> Result<Self> {
        Self::from_masses([(low, p_low), (high, 1.0 - p_low)])
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cum
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.support[0]
    }

    pub fn max(&self) -> f64 {
        self.support[self.support.len() - 1]
    }

    /// Probability of the `i`-th support point.
    pub fn mass(&self, i: usize) -> f64 {
        if i == 0 {
            self.cum[0]
        } else {
            self.cum[i] - self.cum[i - 1]
        }
    }

    /// `(value, probability)` pairs in increasing order of value.
    pub fn masses(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.len()).map(move |i| (self.support[i], self.mass(i)))
    }

    /// `F(y) = P(Y <= y)`.
    pub fn eval(&self, y: f64) -> f64 {
        let idx = self.support.partition_point(|&s| s <= y);
        if idx == 0 {
            0.0
        } else {
            self.cum[idx - 1]
        }
    }

    /// `F(y-) = P(Y < y)`.
    pub fn left_limit(&self, y: f64) -> f64 {
        let idx = self.support.partition_point(|&s| s < y);
        if idx == 0 {
            0.0
        } else {
            self.cum[idx - 1]
        }
    }

    /// `P(Y = y)`.
    pub fn mass_at(&self, y: f64) -> f64 {
        self.eval(y) - self.left_limit(y)
    }

    /// Left-inverse `inf{y : F(y) >= tau}` for `tau` in `(0, 1)`.
    pub fn quantile(&self, tau: f64) -> Result<f64> {
        check_open_unit(tau)?;
        Ok(self.quantile_unchecked(tau))
    }

    /// Left-inverse without the range check; `tau <= 0` maps to the minimum
    /// and `tau >= 1` to the maximum of the support.
    pub(crate) fn quantile_unchecked(&self, tau: f64) -> f64 {
        let idx = self.cum.partition_point(|&c| c < tau);
        self.support[idx.min(self.support.len() - 1)]
    }

    pub fn mean(&self) -> f64 {
        self.masses().map(|(v, m)| v * m).sum()
    }

    /// `∫₀ᵃ Q(u) du`, via the truncated-mean decomposition at `Q(a)`.
    ///
    /// The complementary integral over `(a, 1)` is `mean() - result`.
    pub fn partial_quantile_integral(&self, a: f64) -> Result<f64> {
        check_open_unit(a)?;
        let cutoff = self.quantile_unchecked(a);
        let f_cut = self.eval(cutoff);
        let below: f64 = self
            .masses()
            .take_while(|&(v, _)| v <= cutoff)
            .map(|(v, m)| v * m)
            .sum();
        Ok(below - cutoff * (f_cut - a))
    }

    pub fn truncated_means(&self, a: f64) -> Result<TruncatedMeans> {
        check_open_unit(a)?;
        let cutoff = self.quantile_unchecked(a);
        let split = self.support.partition_point(|&s| s <= cutoff);
        let mass_at_or_below = self.cum[split - 1];
        let below: f64 = (0..split).map(|i| self.support[i] * self.mass(i)).sum();
        let above: f64 = (split..self.len())
            .map(|i| self.support[i] * self.mass(i))
            .sum();
        let upper_mass = 1.0 - mass_at_or_below;
        let upper_empty = split == self.len();
        Ok(TruncatedMeans {
            lower_mean: below / mass_at_or_below,
            upper_mean: if upper_empty { 0.0 } else { above / upper_mass },
            mass_at_or_below,
            cutoff,
            upper_empty,
        })
    }

    /// Pointwise convex combination `eps * f + (1 - eps) * g`.
    pub fn mix(f: &StepCdf, g: &StepCdf, eps: f64) -> Result<StepCdf> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(BoundsError::ProbabilityOutOfRange {
                value: eps,
                range: "[0, 1]",
            });
        }
        let support = merged_support([f, g]);
        let values: Vec<f64> = support
            .iter()
            .map(|&y| eps * f.eval(y) + (1.0 - eps) * g.eval(y))
            .collect();
        StepCdf::from_cumulative(&support, &values)
    }

    /// Pointwise weighted average `Σ wₖ Fₖ`, summed in the given order.
    ///
    /// Weights must be nonnegative and sum to one within [`MASS_TOLERANCE`].
    pub fn weighted_average(parts: &[(f64, &StepCdf)]) -> Result<StepCdf> {
        if parts.is_empty() {
            return Err(BoundsError::Misaligned("no distributions to average".into()));
        }
        if parts.iter().any(|&(w, _)| !w.is_finite() || w < 0.0) {
            return Err(BoundsError::InvalidWeights(
                "averaging weights must be nonnegative".into(),
            ));
        }
        let total: f64 = parts.iter().map(|&(w, _)| w).sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(BoundsError::InvalidWeights(format!(
                "averaging weights sum to {total}"
            )));
        }
        let support = merged_support(parts.iter().map(|&(_, f)| f));
        let values: Vec<f64> = support
            .iter()
            .map(|&y| parts.iter().map(|&(w, f)| w * f.eval(y)).sum())
            .collect();
        StepCdf::from_cumulative(&support, &values)
    }
}
