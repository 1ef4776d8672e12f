//! Run configuration: a JSON document merged with command-line flags, the
//! flags taking precedence.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use robust_dpd::io::read_matrix;
use robust_dpd::sim::SimConfig;
use robust_dpd::Restriction;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothesis: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<PowerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub influence: Option<InfluenceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    /// Direction of the contiguous alternative `β0 + Δ/√n`.
    #[serde(default)]
    pub delta: Vec<f64>,
    /// Multiples of `delta` at which power is reported.
    #[serde(default = "default_scales")]
    pub scales: Vec<f64>,
    /// Scale at which the law is evaluated; defaults to the restricted fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<f64>,
}

fn default_scales() -> Vec<f64> {
    vec![1.0]
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self { delta: Vec::new(), scales: default_scales(), sigma0: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    IfBeta,
    IfSigma,
    IfRbeta,
    If2,
    Pif,
    Lif,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl Grid {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        if !(self.from.is_finite() && self.to.is_finite()) || self.steps == 0 {
            return Err(CliError::Usage("t grid needs finite bounds and at least one step".into()));
        }
        if self.steps == 1 {
            return Ok(vec![self.from]);
        }
        let h = (self.to - self.from) / (self.steps - 1) as f64;
        Ok((0..self.steps).map(|k| self.from + h * k as f64).collect())
    }
}

/// Influence curves: contamination at residual offset `t` from `x_iᵀβ0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfluenceConfig {
    pub quantity: Quantity,
    /// Coefficient index for β curves.
    #[serde(default)]
    pub component: usize,
    /// Contaminated observation; all observations when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<usize>,
    pub t_grid: Grid,
    /// Model point; defaults to the restricted fit of the data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<f64>,
    /// Alternative direction for the power influence function.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        // relative paths in a config file are relative to that file
        let base = path.parent().unwrap_or(Path::new(""));
        config.data = config.data.map(|p| base.join(p));
        config.out = config.out.map(|p| base.join(p));
        if let Some(h) = &config.hypothesis {
            config.hypothesis = Some(rebase_hypothesis(h, base));
        }
        Ok(config)
    }

    pub fn tau(&self) -> Result<f64, CliError> {
        nonneg("tau", self.tau.unwrap_or(0.0))
    }

    /// γ defaults to τ.
    pub fn gamma(&self) -> Result<f64, CliError> {
        nonneg("gamma", self.gamma.or(self.tau).unwrap_or(0.0))
    }

    pub fn alpha(&self) -> Result<f64, CliError> {
        let a = self.alpha.unwrap_or(0.05);
        if a > 0.0 && a < 1.0 {
            Ok(a)
        } else {
            Err(CliError::Usage(format!("alpha must lie in (0, 1), got {a}")))
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn data_path(&self) -> Result<&Path, CliError> {
        let path = self.data.as_deref().ok_or_else(|| CliError::Usage("--data is required".into()))?;
        if !path.is_file() {
            return Err(CliError::Usage(format!("data file {} does not exist", path.display())));
        }
        Ok(path)
    }

    pub fn restriction(&self, p: usize) -> Result<Option<Restriction>, CliError> {
        self.hypothesis.as_deref().map(|h| parse_hypothesis(h, p)).transpose()
    }

    pub fn require_restriction(&self, p: usize) -> Result<Restriction, CliError> {
        self.restriction(p)?.ok_or_else(|| CliError::Usage("--hypothesis is required".into()))
    }
}

fn nonneg(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("{name} must be a finite non-negative number, got {v}")))
    }
}

fn rebase_hypothesis(h: &str, base: &Path) -> String {
    match h.split(':').collect::<Vec<_>>().as_slice() {
        ["linear", l, l0] => format!("linear:{}:{}", base.join(l).display(), base.join(l0).display()),
        _ => h.to_string(),
    }
}

/// Parses `first:r:v1,..,vr` or `linear:LFILE:l0FILE`. `LFILE` holds the
/// `p × r` matrix `L` (one row per coefficient) and `l0FILE` the `r` values.
pub fn parse_hypothesis(spec: &str, p: usize) -> Result<Restriction, CliError> {
    let usage = |m: String| CliError::Usage(format!("hypothesis '{spec}': {m}"));
    let parts: Vec<&str> = spec.splitn(3, ':').collect();
    match parts.as_slice() {
        ["first", r, values] => {
            let r: usize = r.trim().parse().map_err(|_| usage("r must be a positive integer".into()))?;
            let values = values
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| usage(format!("'{v}' is not a number"))))
                .collect::<Result<Vec<_>, _>>()?;
            if r == 0 || r != values.len() {
                return Err(usage(format!("expected {r} values, found {}", values.len())));
            }
            if r > p {
                return Err(usage(format!("cannot fix {r} of {p} coefficients")));
            }
            Ok(Restriction::first_components(&values)?)
        }
        ["linear", lfile, l0file] => {
            let read = |f: &str| {
                std::fs::read_to_string(f).map_err(|e| usage(format!("{f}: {e}"))).and_then(|t| Ok(read_matrix(&t)?))
            };
            let l = read(lfile)?;
            let l0 = read(l0file)?;
            if l.nrows() != p {
                return Err(usage(format!("L must have {p} rows, found {}", l.nrows())));
            }
            let l0 = DVector::from_iterator(l0.len(), l0.iter().copied());
            Ok(Restriction::linear(l, l0)?)
        }
        _ => Err(usage("expected first:r:v1,..,vr or linear:LFILE:l0FILE".into())),
    }
}
