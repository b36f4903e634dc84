//! Declarative scenario files.
//!
//! A scenario is a JSON document with a `schema_version` field. Exactly one
//! of three drivers selects what it describes:
//!
//! * `policy`: a fixed affine policy to propagate, verify or simulate;
//! * `synthesis`: a synthesis configuration, the policy is computed;
//! * `initial.grid`: candidate initial measures for the feasible-set map.
//!
//! Unknown fields are rejected. Parse errors name the offending field path
//! together with its line and column. Serialization uses a fixed field
//! order, so serialize → parse → serialize is byte-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::Measure1D;
use crate::propagation::{AffinePolicy, SystemModel, DEFAULT_TOL};
use crate::sets::RandomSetSpec;
use crate::synthesis::{GridAxes, SynthesisConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Standard deviations of the finite-σ approximants drawn next to the atom
/// limit in figure exports.
pub const DEFAULT_FIGURE_SIGMAS: [f64; 3] = [0.2, 0.05, 0.005];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Initial {
    Measure(Measure1D),
    Grid(GridSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub axes: GridAxes,
    /// Per-cell synthesis settings.
    #[serde(default)]
    pub synthesis: SynthesisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub n: usize,
    pub seed: u64,
    pub alpha: f64,
    pub couple_random_sets: bool,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            n: 100_000,
            seed: 0,
            alpha: 0.05,
            couple_random_sets: true,
        }
    }
}

/// Grid of `x` values for cdf exports. Without an explicit window the range
/// is derived from the measures being exported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    pub points: usize,
    pub sigmas: Vec<f64>,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            x_min: None,
            x_max: None,
            points: 1001,
            sigmas: DEFAULT_FIGURE_SIGMAS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub system: SystemModel,
    pub initial: Initial,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<AffinePolicy>,
    pub avoid: RandomSetSpec,
    pub target: RandomSetSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<SynthesisConfig>,
    /// Desired intermediate measures `Φ_{x_1} … Φ_{x_{N-1}}` for synthesis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<Vec<Measure1D>>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
    #[serde(default)]
    pub export: ExportConfig,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Verify,
    Synthesize,
    FeasibleSet,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Verify => "verify (fixed policy)",
            Mode::Synthesize => "synthesize",
            Mode::FeasibleSet => "feasible-set (grid)",
        })
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let field = if path.is_empty() || path == "." {
                "scenario".to_string()
            } else {
                format!("field `{path}`")
            };
            Error::Config(format!(
                "{field}: {} (line {}, column {})",
                strip_position(&inner.to_string()),
                inner.line(),
                inner.column()
            ))
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn mode(&self) -> Mode {
        match (&self.initial, &self.policy) {
            (Initial::Grid(_), _) => Mode::FeasibleSet,
            (_, Some(_)) => Mode::Verify,
            _ => Mode::Synthesize,
        }
    }

    /// Initial measure of a policy- or synthesis-driven scenario.
    pub fn initial_measure(&self) -> Result<&Measure1D> {
        match &self.initial {
            Initial::Measure(m) => Ok(m),
            Initial::Grid(_) => Err(Error::Config(
                "scenario describes a grid of initial measures, not a single one".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "field `schema_version`: unsupported version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        let drivers = [
            self.policy.is_some(),
            self.synthesis.is_some(),
            matches!(self.initial, Initial::Grid(_)),
        ];
        match drivers.iter().filter(|&&d| d).count() {
            1 => {}
            0 => {
                return Err(Error::Config(
                    "scenario needs one of `policy`, `synthesis` or `initial.grid`".into(),
                ))
            }
            _ => {
                return Err(Error::Config(
                    "only one of `policy`, `synthesis` and `initial.grid` may be given".into(),
                ))
            }
        }
        if let Some(p) = &self.policy {
            if p.len() != self.system.horizon() {
                return Err(Error::Config(format!(
                    "field `policy`: {} steps for a horizon of {}",
                    p.len(),
                    self.system.horizon()
                )));
            }
        }
        if let Some(cfg) = &self.synthesis {
            cfg.validate()
                .map_err(|e| Error::Config(format!("field `synthesis`: {e}")))?;
        }
        if let Initial::Grid(g) = &self.initial {
            g.axes
                .validate()
                .map_err(|e| Error::Config(format!("field `initial.grid.axes`: {e}")))?;
            g.synthesis
                .validate()
                .map_err(|e| Error::Config(format!("field `initial.grid.synthesis`: {e}")))?;
        }
        if let Some(w) = &self.waypoints {
            if self.synthesis.is_none() {
                return Err(Error::Config(
                    "field `waypoints` is only used together with `synthesis`".into(),
                ));
            }
            if w.len() + 1 != self.system.horizon() {
                return Err(Error::Config(format!(
                    "field `waypoints`: {} measures, expected horizon - 1 = {}",
                    w.len(),
                    self.system.horizon() - 1
                )));
            }
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!("field `tol`: {} must be >= 0", self.tol)));
        }
        let mc = &self.monte_carlo;
        if mc.n == 0 {
            return Err(Error::Config("field `monte_carlo.n`: must be positive".into()));
        }
        if !(mc.alpha > 0.0 && mc.alpha < 1.0) {
            return Err(Error::Config(format!(
                "field `monte_carlo.alpha`: {} must lie in (0, 1)",
                mc.alpha
            )));
        }
        let ex = &self.export;
        if ex.points < 2 {
            return Err(Error::Config("field `export.points`: must be at least 2".into()));
        }
        if let (Some(lo), Some(hi)) = (ex.x_min, ex.x_max) {
            if !(lo < hi) {
                return Err(Error::Config("field `export`: x_min must be below x_max".into()));
            }
        }
        if ex.sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config(
                "field `export.sigmas`: every sigma must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}

/// serde_json appends " at line L column C"; the caller reports it itself.
fn strip_position(msg: &str) -> &str {
    match msg.rfind(" at line ") {
        Some(i) => &msg[..i],
        None => msg,
    }
}
