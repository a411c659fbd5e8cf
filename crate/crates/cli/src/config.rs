//! Run configuration files (TOML).
//!
//! ```toml
//! seed = 42
//!
//! [scheme]
//! kind = "poisson_pair"      # or equidistant_sync, intermeshed
//! theta1 = 1.0
//! theta2 = 0.5
//! intensity = 5000
//! horizon = 1.0
//!
//! [coefficients]
//! breakpoints = [0.5]
//! pieces = [
//!   { sigma_x = 1.0, sigma_y = 1.0, rho = 0.5 },
//!   { sigma_x = 2.0, sigma_y = 1.0, rho = -0.2, mu_x = 0.1 },
//! ]
//!
//! [inference]
//! level = 0.95
//! bins = "auto"              # or a bin count
//! method = "histogram"       # or lag_corrected
//!
//! [mc]
//! replications = 1000
//! refresh_previous_tick = true
//! fixed_grid_widths = [0.02, 0.005]
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use hycov::inference::{AvarConfig, AvarMethod, BinAnchor, BinRule};
use hycov::sampling::{SchemeKind, SchemeSpec};
use hycov::simulate::{CoefficientPiece, CoefficientSpec};
use serde::{Deserialize, Serialize};

use crate::Invalid;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub scheme: Option<SchemeSection>,
    pub coefficients: Option<CoefficientsSection>,
    #[serde(default)]
    pub inference: InferenceSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Flat mirror of [`SchemeSpec`]; explicit time lists belong in tick files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub kind: SchemeName,
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    pub intensity: u64,
    #[serde(default = "one")]
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    PoissonPair,
    EquidistantSync,
    Intermeshed,
}

fn one() -> f64 {
    1.0
}

impl SchemeSection {
    pub fn to_spec(&self) -> Result<SchemeSpec, Invalid> {
        let spec = match self.kind {
            SchemeName::PoissonPair => {
                let (Some(theta1), Some(theta2)) = (self.theta1, self.theta2) else {
                    return Err(Invalid("scheme: poisson_pair needs theta1 and theta2".into()));
                };
                SchemeSpec::poisson(theta1, theta2, self.intensity, self.horizon)
            }
            SchemeName::EquidistantSync | SchemeName::Intermeshed => {
                if self.theta1.is_some() || self.theta2.is_some() {
                    return Err(Invalid(format!("scheme: theta1/theta2 do not apply to {:?}", self.kind)));
                }
                if self.kind == SchemeName::Intermeshed {
                    SchemeSpec::intermeshed(self.intensity, self.horizon)
                } else {
                    SchemeSpec::equidistant(self.intensity, self.horizon)
                }
            }
        };
        spec.validate().map_err(|e| Invalid(format!("scheme: {e}")))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsSection {
    #[serde(default)]
    pub breakpoints: Vec<f64>,
    pub pieces: Vec<CoefficientPiece>,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub y0: f64,
}

impl CoefficientsSection {
    pub fn to_spec(&self, horizon: f64) -> Result<CoefficientSpec, Invalid> {
        CoefficientSpec::piecewise(horizon, self.breakpoints.clone(), self.pieces.clone())
            .map(|c| c.with_start(self.x0, self.y0))
            .map_err(|e| Invalid(format!("coefficients: {e}")))
    }
}

/// `bins = "auto"` or `bins = 12`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BinsSetting {
    Count(usize),
    Named(AutoBins),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoBins {
    Auto,
}

impl Default for BinsSetting {
    fn default() -> Self {
        BinsSetting::Named(AutoBins::Auto)
    }
}

impl std::str::FromStr for BinsSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(BinsSetting::Named(AutoBins::Auto));
        }
        match s.parse::<usize>() {
            Ok(k) if k > 0 => Ok(BinsSetting::Count(k)),
            _ => Err(format!("expected `auto` or a positive integer, got `{s}`")),
        }
    }
}

impl From<BinsSetting> for BinRule {
    fn from(b: BinsSetting) -> Self {
        match b {
            BinsSetting::Count(k) => BinRule::Fixed(k),
            BinsSetting::Named(AutoBins::Auto) => BinRule::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSection {
    pub level: f64,
    pub bins: BinsSetting,
    pub anchor: BinAnchor,
    pub method: AvarMethod,
}

impl Default for InferenceSection {
    fn default() -> Self {
        Self {
            level: 0.95,
            bins: BinsSetting::default(),
            anchor: BinAnchor::default(),
            method: AvarMethod::default(),
        }
    }
}

impl InferenceSection {
    pub fn avar(&self) -> AvarConfig {
        AvarConfig {
            bins: self.bins.into(),
            anchor: self.anchor,
            method: self.method,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub replications: usize,
    pub refresh_previous_tick: bool,
    pub fixed_grid_widths: Vec<f64>,
    pub decomposition: bool,
    pub qcv_slopes: bool,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            replications: 100,
            refresh_previous_tick: false,
            fixed_grid_widths: Vec::new(),
            decomposition: false,
            qcv_slopes: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Invalid(format!("reading {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())).into())
    }

    pub fn scheme_spec(&self) -> Result<SchemeSpec, Invalid> {
        self.scheme
            .as_ref()
            .ok_or_else(|| Invalid("config has no [scheme] section".into()))?
            .to_spec()
    }

    pub fn coefficient_spec(&self, horizon: f64) -> Result<CoefficientSpec, Invalid> {
        self.coefficients
            .as_ref()
            .ok_or_else(|| Invalid("config has no [coefficients] section".into()))?
            .to_spec(horizon)
    }
}

/// Inverse of [`SchemeSection::to_spec`], for echoing resolved settings.
pub fn describe_scheme(spec: &SchemeSpec) -> serde_json::Value {
    let (kind, t1, t2) = match &spec.kind {
        SchemeKind::PoissonPair { theta1, theta2 } => ("poisson_pair", Some(*theta1), Some(*theta2)),
        SchemeKind::EquidistantSync => ("equidistant_sync", None, None),
        SchemeKind::Intermeshed => ("intermeshed", None, None),
        SchemeKind::Explicit { .. } => ("explicit", None, None),
    };
    serde_json::json!({
        "kind": kind,
        "theta1": t1,
        "theta2": t2,
        "intensity": spec.intensity,
        "horizon": spec.horizon,
    })
}
