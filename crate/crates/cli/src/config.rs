//! TOML run configuration.
//!
//! ```toml
//! epsilon_overlap = 0.01
//! drop_nonoverlap = false
//!
//! [columns]
//! outcome = "y"
//! treatment = "x"
//! covariates = ["w"]
//!
//! [sensitivity]
//! kind = "msm"            # msm | gmsm | conditional_c | raw
//! lambdas = [1.0, 1.5, 2.0]
//!
//! [[estimands]]
//! kind = "qte"
//! tau = 0.5
//!
//! [breakdown]
//! target = 0.0
//! lambda_max = 20.0
//! ```

use std::collections::BTreeMap;

use cdep_bounds::{Estimand, WeightFunction};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub epsilon_overlap: f64,
    #[serde(default)]
    pub drop_nonoverlap: bool,
    #[serde(default)]
    pub columns: Columns,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<SensitivitySpec>,
    #[serde(default)]
    pub estimands: Vec<EstimandSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<BreakdownSpec>,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Columns {
    pub outcome: String,
    pub treatment: String,
    pub covariates: Vec<String>,
}

impl Default for Columns {
    fn default() -> Self {
        Self {
            outcome: "y".into(),
            treatment: "x".into(),
            covariates: vec!["w".into()],
        }
    }
}

/// How sensitivity levels are specified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SensitivitySpec {
    /// Symmetric odds-ratio bounds `(1/Λ, Λ)`.
    Msm { lambdas: Vec<f64> },
    /// Explicit `(Λ_lo, Λ_hi)` pairs.
    Gmsm { pairs: Vec<[f64; 2]> },
    /// `[p1 − c, p1 + c]` in every cell.
    ConditionalC { values: Vec<f64> },
    /// One `(c_lo, c_hi)` pair per cell id.
    Raw { cells: BTreeMap<String, [f64; 2]> },
}

impl Default for SensitivitySpec {
    fn default() -> Self {
        SensitivitySpec::Msm { lambdas: vec![1.0] }
    }
}

/// Parses `"start:stop:step"` into an inclusive Λ grid.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || CliError::Validation(format!("grid '{text}' is not start:stop:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(bad());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    if count > 100_000 {
        return Err(CliError::Validation(format!("grid '{text}' has too many points")));
    }
    Ok((0..=count).map(|k| start + k as f64 * step).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OmegaSpec {
    Constant(f64),
    PerCell(BTreeMap<String, f64>),
}

impl From<&OmegaSpec> for WeightFunction {
    fn from(o: &OmegaSpec) -> Self {
        match o {
            OmegaSpec::Constant(v) => WeightFunction::Constant(*v),
            OmegaSpec::PerCell(m) => WeightFunction::PerCell(m.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimandSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<OmegaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<String>,
}

impl EstimandSpec {
    pub fn named(kind: &str) -> Self {
        Self {
            kind: kind.into(),
            tau: None,
            z: None,
            y1: None,
            y0: None,
            omega: None,
            cell: None,
        }
    }

    pub fn to_estimand(&self) -> Result<Estimand> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| CliError::Validation(format!("estimand '{}' needs {name}", self.kind)))
        };
        let cell = || {
            self.cell
                .clone()
                .ok_or_else(|| CliError::Validation(format!("estimand '{}' needs cell", self.kind)))
        };
        let omega = |default: Option<f64>| match (&self.omega, default) {
            (Some(o), _) => Ok(WeightFunction::from(o)),
            (None, Some(d)) => Ok(WeightFunction::Constant(d)),
            (None, None) => Err(CliError::Validation(format!("estimand '{}' needs omega", self.kind))),
        };
        Ok(match self.kind.as_str() {
            "ate" => Estimand::Ate,
            "wate" => Estimand::Wate { omega: omega(None)? },
            "att" => Estimand::Att,
            "cate" => Estimand::Cate { cell: cell()? },
            "cqte" => Estimand::Cqte {
                cell: cell()?,
                tau: need(self.tau, "tau")?,
            },
            "qte" => Estimand::Qte { tau: need(self.tau, "tau")? },
            "qtt" => Estimand::Qtt { tau: need(self.tau, "tau")? },
            "qcate" => Estimand::Qcate { tau: need(self.tau, "tau")? },
            "aww" => Estimand::Aww { omega: omega(None)? },
            "joint_cdf" => Estimand::JointCdf {
                y1: need(self.y1, "y1")?,
                y0: need(self.y0, "y0")?,
            },
            "dte" => Estimand::Dte { z: need(self.z, "z")? },
            "qdte" => Estimand::Qdte { tau: need(self.tau, "tau")? },
            other => return Err(CliError::Validation(format!("unknown estimand '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BreakdownSpec {
    #[serde(default)]
    pub target: f64,
    #[serde(default = "default_lambda_max")]
    pub lambda_max: f64,
}

fn default_lambda_max() -> f64 {
    20.0
}

impl Default for BreakdownSpec {
    fn default() -> Self {
        Self {
            target: 0.0,
            lambda_max: default_lambda_max(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let text = r#"
epsilon_overlap = 0.05

[columns]
outcome = "out"
treatment = "t"
covariates = ["a", "b"]

[sensitivity]
kind = "gmsm"
pairs = [[0.5, 2.0]]

[[estimands]]
kind = "qte"
tau = 0.25

[[estimands]]
kind = "aww"
omega = { a = 0.5 }
"#;
        let c = Config::from_toml(text).unwrap();
        assert_eq!(c.columns.covariates, vec!["a", "b"]);
        assert_eq!(c.sensitivity, Some(SensitivitySpec::Gmsm { pairs: vec![[0.5, 2.0]] }));
        assert_eq!(c.estimands[0].to_estimand().unwrap(), Estimand::Qte { tau: 0.25 });
        assert!(matches!(c.estimands[1].omega, Some(OmegaSpec::PerCell(_))));
        let again = Config::from_toml(&c.to_toml()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rejects_unknown_keys_and_estimands() {
        assert!(Config::from_toml("bogus = 1").is_err());
        assert!(EstimandSpec::named("nope").to_estimand().is_err());
        assert!(EstimandSpec::named("qte").to_estimand().is_err());
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("1:3:0.5").unwrap(), vec![1.0, 1.5, 2.0, 2.5, 3.0]);
        assert_eq!(parse_grid("1:3:0.25").unwrap().len(), 9);
        assert!(parse_grid("1:3").is_err());
        assert!(parse_grid("3:1:0.5").is_err());
        assert!(parse_grid("1:3:0").is_err());
    }
}
