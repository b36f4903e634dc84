//! Forward propagation of state measures through the affine closed loop,
//! the constraint schedule, and certificates of infeasibility.
//!
//! The closed loop is `x_{k+1} = (1 + dt·h_k)·x_k + dt·v_k + w_k`. Mean and
//! variance therefore evolve as
//! `m' = (1 + dt·h)·m + dt·v + m_w` and `s'² = (1 + dt·h)²·s² + s_w²`.
//! The gain enters the variance squared; with `h = 0` this coincides with
//! the unsquared form sometimes printed for this recursion.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::Measure1D;
use crate::sets::{ext_real, RandomSetSpec};
use crate::transport::{avoid_residual, target_deficit};

/// Default tolerance for almost-sure checks on atom-based measures.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemRepr {
    dt: f64,
    horizon: usize,
    noise_per_step: Vec<Measure1D>,
    #[serde(with = "ext_real")]
    input_min: f64,
    #[serde(with = "ext_real")]
    input_max: f64,
}

/// Time-discretized single integrator with additive disturbance and a
/// compact (or, for thought experiments, unbounded) input interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemRepr", into = "SystemRepr")]
pub struct SystemModel {
    dt: f64,
    noise_per_step: Vec<Measure1D>,
    input_min: f64,
    input_max: f64,
}

impl TryFrom<SystemRepr> for SystemModel {
    type Error = Error;

    fn try_from(r: SystemRepr) -> Result<Self> {
        if r.noise_per_step.len() != r.horizon {
            return Err(Error::HorizonMismatch {
                what: "noise_per_step",
                expected: r.horizon,
                got: r.noise_per_step.len(),
            });
        }
        SystemModel::new(r.dt, r.noise_per_step, r.input_min, r.input_max)
    }
}

impl From<SystemModel> for SystemRepr {
    fn from(s: SystemModel) -> Self {
        SystemRepr {
            dt: s.dt,
            horizon: s.noise_per_step.len(),
            noise_per_step: s.noise_per_step,
            input_min: s.input_min,
            input_max: s.input_max,
        }
    }
}

impl SystemModel {
    pub fn new(
        dt: f64,
        noise_per_step: Vec<Measure1D>,
        input_min: f64,
        input_max: f64,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dt = {dt} must be positive and finite")));
        }
        if noise_per_step.is_empty() {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if input_min.is_nan() || input_max.is_nan() || !(input_min < input_max) {
            return Err(Error::Config(format!(
                "input bounds [{input_min}, {input_max}] need input_min < input_max"
            )));
        }
        Ok(Self {
            dt,
            noise_per_step,
            input_min,
            input_max,
        })
    }

    /// Same noise at every step.
    pub fn stationary(
        dt: f64,
        horizon: usize,
        noise: Measure1D,
        input_min: f64,
        input_max: f64,
    ) -> Result<Self> {
        Self::new(dt, vec![noise; horizon], input_min, input_max)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> usize {
        self.noise_per_step.len()
    }

    pub fn noise(&self, k: usize) -> &Measure1D {
        &self.noise_per_step[k]
    }

    pub fn noise_per_step(&self) -> &[Measure1D] {
        &self.noise_per_step
    }

    pub fn input_min(&self) -> f64 {
        self.input_min
    }

    pub fn input_max(&self) -> f64 {
        self.input_max
    }

    pub fn inputs_unbounded(&self) -> bool {
        self.input_min == f64::NEG_INFINITY && self.input_max == f64::INFINITY
    }

    /// Copy with different input bounds.
    pub fn with_input_bounds(&self, input_min: f64, input_max: f64) -> Result<Self> {
        Self::new(self.dt, self.noise_per_step.clone(), input_min, input_max)
    }
}

/// `u = gain·x + feedforward`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffinePolicyStep {
    pub gain: f64,
    pub feedforward: f64,
}

impl AffinePolicyStep {
    pub fn new(gain: f64, feedforward: f64) -> Self {
        Self { gain, feedforward }
    }

    pub fn feedforward_only(v: f64) -> Self {
        Self::new(0.0, v)
    }

    pub fn input(&self, x: f64) -> f64 {
        self.gain * x + self.feedforward
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AffinePolicy {
    pub steps: Vec<AffinePolicyStep>,
}

impl AffinePolicy {
    pub fn new(steps: Vec<AffinePolicyStep>) -> Self {
        Self { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    fn check_horizon(&self, sys: &SystemModel) -> Result<()> {
        if self.len() != sys.horizon() {
            return Err(Error::HorizonMismatch {
                what: "policy",
                expected: sys.horizon(),
                got: self.len(),
            });
        }
        if self
            .steps
            .iter()
            .any(|s| !s.gain.is_finite() || !s.feedforward.is_finite())
        {
            return Err(Error::Domain("policy steps must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    AvoidViolation,
    TargetDeficit,
    InputBoundViolation,
    /// An intermediate step could not reach its prescribed waypoint measure.
    WaypointMismatch,
}

impl fmt::Display for CertificateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::AvoidViolation => "avoid_violation",
            Self::TargetDeficit => "target_deficit",
            Self::InputBoundViolation => "input_bound_violation",
            Self::WaypointMismatch => "waypoint_mismatch",
        })
    }
}

/// Witness that a constraint of the schedule fails at `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub step: usize,
    pub kind: CertificateKind,
    pub residual: f64,
    pub detail: String,
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at step {} (residual {:.6e}): {}",
            self.kind, self.step, self.residual, self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationTrace {
    /// `Φ_{x_0} … Φ_{x_N}`.
    pub measures: Vec<Measure1D>,
    /// Avoid residual of `Φ_{x_k}` for `k < N`.
    pub avoid_residuals: Vec<f64>,
    pub terminal_deficit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub trace: PropagationTrace,
    /// Every violated constraint, in schedule order.
    pub certificates: Vec<Certificate>,
}

impl Verification {
    /// The first violated constraint in time order.
    pub fn certificate(&self) -> Option<&Certificate> {
        self.certificates.first()
    }

    pub fn passed(&self) -> bool {
        self.certificates.is_empty()
    }
}

/// `Φ_{x_{k+1}}` from `Φ_{x_k}` under one affine policy step.
pub fn propagate_step(
    m: &Measure1D,
    step: &AffinePolicyStep,
    sys: &SystemModel,
    k: usize,
) -> Result<Measure1D> {
    if k >= sys.horizon() {
        return Err(Error::Domain(format!(
            "step index {k} is outside the horizon {}",
            sys.horizon()
        )));
    }
    let a = 1.0 + sys.dt * step.gain;
    let b = sys.dt * step.feedforward;
    m.pushforward_affine(a, b).convolve(sys.noise(k))
}

/// Feedforward interval that keeps `u` inside the bounds almost surely for
/// the given gain, or `None` if no feedforward does.
pub fn admissible_feedforward(m: &Measure1D, gain: f64, sys: &SystemModel) -> Option<(f64, f64)> {
    if sys.inputs_unbounded() {
        return Some((f64::NEG_INFINITY, f64::INFINITY));
    }
    if gain != 0.0 && m.has_continuous_part() {
        return None;
    }
    let (mut lo, mut hi) = (sys.input_min, sys.input_max);
    for c in m.components() {
        let hx = if c.is_atom() { gain * c.mean } else { 0.0 };
        lo = lo.max(sys.input_min - hx);
        hi = hi.min(sys.input_max - hx);
    }
    (lo <= hi).then_some((lo, hi))
}

/// Passes iff `P{u_min <= gain·x + feedforward <= u_max} = 1` under `m`.
///
/// On failure the certificate's residual is the total weight of components
/// whose input support leaves the bounds.
pub fn check_input_bound(
    m: &Measure1D,
    step: &AffinePolicyStep,
    sys: &SystemModel,
    k: usize,
) -> std::result::Result<(), Certificate> {
    if sys.inputs_unbounded() {
        return Ok(());
    }
    let mut offending = 0.0;
    let mut worst: Option<String> = None;
    for c in m.components() {
        if c.is_atom() || step.gain == 0.0 {
            let u = step.input(c.mean);
            if u < sys.input_min || u > sys.input_max {
                offending += c.weight;
                worst.get_or_insert_with(|| {
                    format!(
                        "input {u} at x = {} is outside [{}, {}]",
                        c.mean, sys.input_min, sys.input_max
                    )
                });
            }
        } else {
            offending += c.weight;
            worst.get_or_insert_with(|| {
                format!(
                    "gain {} on a Gaussian component (mean {}, stddev {}) makes the input unbounded",
                    step.gain, c.mean, c.stddev
                )
            });
        }
    }
    match worst {
        None => Ok(()),
        Some(detail) => Err(Certificate {
            step: k,
            kind: CertificateKind::InputBoundViolation,
            residual: offending,
            detail,
        }),
    }
}

/// Propagate `init` under `policy` and check the schedule: the avoid
/// constraint on `Φ_{x_k}` for every `k < N`, the input bound at every
/// step, and the target constraint on `Φ_{x_N}`.
pub fn verify_policy(
    init: &Measure1D,
    policy: &AffinePolicy,
    sys: &SystemModel,
    avoid: &RandomSetSpec,
    target: &RandomSetSpec,
    tol: f64,
) -> Result<Verification> {
    policy.check_horizon(sys)?;
    if !(tol >= 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be >= 0")));
    }
    let n = sys.horizon();
    let mut measures = Vec::with_capacity(n + 1);
    let mut avoid_residuals = Vec::with_capacity(n);
    let mut certificates = Vec::new();
    measures.push(init.clone());

    for (k, step) in policy.steps.iter().enumerate() {
        let current = &measures[k];
        let r = avoid_residual(current, avoid);
        avoid_residuals.push(r);
        if r > tol {
            certificates.push(Certificate {
                step: k,
                kind: CertificateKind::AvoidViolation,
                residual: r,
                detail: format!("state measure puts mass {r} in the avoid set at step {k}"),
            });
        }
        if let Err(c) = check_input_bound(current, step, sys, k) {
            certificates.push(c);
        }
        let next = propagate_step(current, step, sys, k)?;
        measures.push(next);
    }

    let terminal_deficit = target_deficit(&measures[n], target);
    if terminal_deficit > tol {
        certificates.push(Certificate {
            step: n,
            kind: CertificateKind::TargetDeficit,
            residual: terminal_deficit,
            detail: format!(
                "terminal measure misses the target with probability {terminal_deficit}"
            ),
        });
    }

    Ok(Verification {
        trace: PropagationTrace {
            measures,
            avoid_residuals,
            terminal_deficit,
        },
        certificates,
    })
}
