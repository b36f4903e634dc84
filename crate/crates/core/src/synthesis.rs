//! Per-step affine feedback synthesis under hard input bounds, and a grid
//! classifier for the set of initial measures from which the reach-avoid
//! requirement holds almost surely.
//!
//! Every step is a nested search: a finite list of candidate gains, each
//! filtered by the almost-sure input bound, times a line search over the
//! feedforward term. For any measure with a Gaussian component the bound
//! forces the gain to zero, so in practice the search is one-dimensional.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::Measure1D;
use crate::propagation::{
    admissible_feedforward, propagate_step, verify_policy, AffinePolicy, AffinePolicyStep,
    Certificate, CertificateKind, PropagationTrace, SystemModel,
};
use crate::search;
use crate::sets::RandomSetSpec;
use crate::transport::{avoid_residual, target_deficit, w1};

/// Distance from an input bound within which a feedforward counts as
/// saturated.
pub const SATURATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub v_grid_points: usize,
    pub refine_iters: usize,
    pub gain_candidates: Vec<f64>,
    pub tol: f64,
    /// Half-width of the feedforward window searched along an unbounded
    /// input direction.
    pub unbounded_search_radius: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            v_grid_points: 201,
            refine_iters: 60,
            gain_candidates: vec![0.0],
            tol: 1e-9,
            unbounded_search_radius: 10.0,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.v_grid_points < 3 {
            return Err(Error::Config(format!(
                "v_grid_points = {} must be at least 3",
                self.v_grid_points
            )));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config(format!("tol = {} must be >= 0", self.tol)));
        }
        if self.gain_candidates.is_empty() || self.gain_candidates.iter().any(|g| !g.is_finite())
        {
            return Err(Error::Config(
                "gain_candidates must be a non-empty list of finite numbers".into(),
            ));
        }
        if !(self.unbounded_search_radius > 0.0 && self.unbounded_search_radius.is_finite()) {
            return Err(Error::Config(
                "unbounded_search_radius must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}

/// Result of one synthesized step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSolution {
    pub step: AffinePolicyStep,
    pub objective: f64,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub policy: AffinePolicy,
    pub per_step_objective: Vec<f64>,
    /// First violated constraint in time order, if any.
    pub certificate: Option<Certificate>,
    /// Every violated constraint in time order.
    pub certificates: Vec<Certificate>,
    pub saturated: Vec<bool>,
    pub trace: PropagationTrace,
}

impl SynthesisReport {
    pub fn passed(&self) -> bool {
        self.certificates.is_empty()
    }

    pub fn certificate_of(&self, kind: CertificateKind) -> Option<&Certificate> {
        self.certificates.iter().find(|c| c.kind == kind)
    }
}

/// Search window for one gain: the admissible feedforward interval with
/// unbounded sides truncated, plus which ends are genuine input bounds.
fn feedforward_window(lo: f64, hi: f64, radius: f64) -> (f64, f64, bool, bool) {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (lo, hi, true, true),
        (true, false) => (lo, lo.max(0.0) + radius, true, false),
        (false, true) => (hi.min(0.0) - radius, hi, false, true),
        (false, false) => (-radius, radius, false, false),
    }
}

/// Minimize `objective(next_measure)` over admissible `(gain, feedforward)`.
fn search_step<F>(
    m: &Measure1D,
    sys: &SystemModel,
    k: usize,
    cfg: &SynthesisConfig,
    objective: F,
) -> Result<StepSolution>
where
    F: Fn(&Measure1D) -> f64,
{
    cfg.validate()?;
    // The component count does not depend on (h, v); surface capacity
    // errors once, up front.
    propagate_step(m, &AffinePolicyStep::new(0.0, 0.0), sys, k)?;

    let mut best: Option<StepSolution> = None;
    for &gain in &cfg.gain_candidates {
        let Some((lo, hi)) = admissible_feedforward(m, gain, sys) else {
            continue;
        };
        let (lo, hi, lo_bound, hi_bound) = feedforward_window(lo, hi, cfg.unbounded_search_radius);
        let eval = |v: f64| {
            propagate_step(m, &AffinePolicyStep::new(gain, v), sys, k)
                .map_or(f64::NAN, |next| objective(&next))
        };
        let found = search::minimize(eval, lo, hi, cfg.v_grid_points, cfg.refine_iters);
        let (mut x, mut value) = (found.x, found.value);
        let near_lo = lo_bound && (x - lo).abs() <= SATURATION_TOL;
        let near_hi = hi_bound && (x - hi).abs() <= SATURATION_TOL;
        // Points within SATURATION_TOL of a bound whose objective differs only
        // at rounding level are reported on the bound itself.
        for (hit, bound) in [(near_lo, lo), (near_hi, hi)] {
            if hit && x != bound {
                let at_bound = eval(bound);
                if at_bound <= value + 4.0 * f64::EPSILON * value.abs() {
                    x = bound;
                    value = at_bound;
                }
            }
        }
        let candidate = StepSolution {
            step: AffinePolicyStep::new(gain, x),
            objective: value,
            saturated: near_lo || near_hi,
        };
        best = match best {
            None => Some(candidate),
            Some(b) if better(&candidate, &b) => Some(candidate),
            keep => keep,
        };
    }

    best.ok_or_else(|| {
        Error::InputInfeasible(Box::new(Certificate {
            step: k,
            kind: CertificateKind::InputBoundViolation,
            residual: 1.0,
            detail: format!(
                "no gain in {:?} admits a feedforward keeping the input in [{}, {}] almost surely",
                cfg.gain_candidates,
                sys.input_min(),
                sys.input_max()
            ),
        }))
    })
}

fn better(a: &StepSolution, b: &StepSolution) -> bool {
    if a.objective != b.objective {
        return a.objective < b.objective;
    }
    let (va, vb) = (a.step.feedforward, b.step.feedforward);
    if va.abs() != vb.abs() {
        return va.abs() < vb.abs();
    }
    if va != vb {
        return va < vb;
    }
    a.step.gain.abs() < b.step.gain.abs()
}

/// Last step: drive the terminal target deficit to its minimum.
pub fn synthesize_terminal_step(
    m: &Measure1D,
    sys: &SystemModel,
    target: &RandomSetSpec,
    cfg: &SynthesisConfig,
) -> Result<StepSolution> {
    let k = sys.horizon() - 1;
    search_step(m, sys, k, cfg, |next| target_deficit(next, target))
}

/// Intermediate step: get as close as possible, in W1, to a prescribed
/// next-step measure.
pub fn synthesize_intermediate_step(
    m: &Measure1D,
    desired_next: &Measure1D,
    sys: &SystemModel,
    k: usize,
    cfg: &SynthesisConfig,
) -> Result<StepSolution> {
    search_step(m, sys, k, cfg, |next| w1(next, desired_next).distance)
}

/// Intermediate step with no waypoint: minimize the avoid residual of the
/// next state measure.
pub fn synthesize_avoiding_step(
    m: &Measure1D,
    avoid: &RandomSetSpec,
    sys: &SystemModel,
    k: usize,
    cfg: &SynthesisConfig,
) -> Result<StepSolution> {
    search_step(m, sys, k, cfg, |next| avoid_residual(next, avoid))
}

fn kind_rank(kind: CertificateKind) -> u8 {
    match kind {
        CertificateKind::AvoidViolation => 0,
        CertificateKind::WaypointMismatch => 1,
        CertificateKind::InputBoundViolation => 2,
        CertificateKind::TargetDeficit => 3,
    }
}

/// Chain per-step synthesis forward from `init`.
///
/// `waypoints`, when given, hold the desired `Φ_{x_1} … Φ_{x_{N-1}}` and the
/// intermediate steps match them in W1; otherwise intermediate steps
/// minimize the next step's avoid residual. The final step always minimizes
/// the target deficit. The resulting policy is then verified and every
/// violated constraint (residual above `cfg.tol`) is reported.
pub fn synthesize_policy(
    init: &Measure1D,
    sys: &SystemModel,
    avoid: &RandomSetSpec,
    target: &RandomSetSpec,
    waypoints: Option<&[Measure1D]>,
    cfg: &SynthesisConfig,
) -> Result<SynthesisReport> {
    cfg.validate()?;
    let n = sys.horizon();
    if let Some(w) = waypoints {
        if w.len() != n - 1 {
            return Err(Error::HorizonMismatch {
                what: "waypoints",
                expected: n - 1,
                got: w.len(),
            });
        }
    }

    let mut steps = Vec::with_capacity(n);
    let mut objectives = Vec::with_capacity(n);
    let mut saturated = Vec::with_capacity(n);
    let mut extra = Vec::new();
    let mut m = init.clone();
    for k in 0..n {
        let sol = if k == n - 1 {
            synthesize_terminal_step(&m, sys, target, cfg)?
        } else if let Some(w) = waypoints {
            let sol = synthesize_intermediate_step(&m, &w[k], sys, k, cfg)?;
            if sol.objective > cfg.tol {
                extra.push(Certificate {
                    step: k + 1,
                    kind: CertificateKind::WaypointMismatch,
                    residual: sol.objective,
                    detail: format!(
                        "closest reachable measure is {} away (W1) from the waypoint for step {}",
                        sol.objective,
                        k + 1
                    ),
                });
            }
            sol
        } else {
            synthesize_avoiding_step(&m, avoid, sys, k, cfg)?
        };
        m = propagate_step(&m, &sol.step, sys, k)?;
        steps.push(sol.step);
        objectives.push(sol.objective);
        saturated.push(sol.saturated);
    }

    let policy = AffinePolicy::new(steps);
    let verification = verify_policy(init, &policy, sys, avoid, target, cfg.tol)?;
    let mut certificates = verification.certificates;
    certificates.extend(extra);
    certificates.sort_by_key(|c| (c.step, kind_rank(c.kind)));

    Ok(SynthesisReport {
        policy,
        per_step_objective: objectives,
        certificate: certificates.first().cloned(),
        certificates,
        saturated,
        trace: verification.trace,
    })
}

/// Evenly spaced axis values, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl AxisRange {
    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => vec![],
            1 => vec![self.min],
            n => (0..n)
                .map(|i| {
                    if i == n - 1 {
                        self.max
                    } else {
                        self.min + (self.max - self.min) * i as f64 / (n - 1) as f64
                    }
                })
                .collect(),
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::Config(format!("axis {name} needs finite min <= max")));
        }
        if self.points == 0 {
            return Err(Error::Config(format!("axis {name} needs at least one point")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureFamily {
    SingleGaussian,
    TwoAtomMixture,
}

/// Parametric family of candidate initial measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridAxes {
    /// `N(mean, stddev)`; a zero stddev gives an atom.
    SingleGaussian { mean: AxisRange, stddev: Vec<f64> },
    /// `w·N(m1, s) + (1 − w)·N(m2, s)`.
    TwoAtomMixture {
        mean_1: AxisRange,
        mean_2: AxisRange,
        weight_1: f64,
        #[serde(default)]
        stddev: f64,
    },
}

impl GridAxes {
    pub fn family(&self) -> MeasureFamily {
        match self {
            Self::SingleGaussian { .. } => MeasureFamily::SingleGaussian,
            Self::TwoAtomMixture { .. } => MeasureFamily::TwoAtomMixture,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::SingleGaussian { mean, stddev } => {
                mean.validate("mean")?;
                if stddev.is_empty() || stddev.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
                    return Err(Error::Config(
                        "stddev axis must be a non-empty list of finite values >= 0".into(),
                    ));
                }
            }
            Self::TwoAtomMixture {
                mean_1,
                mean_2,
                weight_1,
                stddev,
            } => {
                mean_1.validate("mean_1")?;
                mean_2.validate("mean_2")?;
                if !(*weight_1 > 0.0 && *weight_1 < 1.0) {
                    return Err(Error::Config("weight_1 must lie in (0, 1)".into()));
                }
                if !(*stddev >= 0.0 && stddev.is_finite()) {
                    return Err(Error::Config("stddev must be finite and >= 0".into()));
                }
            }
        }
        Ok(())
    }

    /// Candidate measures as `(weight, mean, stddev)` triples, row-major.
    pub fn cells(&self) -> Vec<Vec<(f64, f64, f64)>> {
        match self {
            Self::SingleGaussian { mean, stddev } => {
                let means = mean.values();
                stddev
                    .iter()
                    .flat_map(|&s| means.iter().map(move |&m| vec![(1.0, m, s)]))
                    .collect()
            }
            Self::TwoAtomMixture {
                mean_1,
                mean_2,
                weight_1,
                stddev,
            } => {
                let (m1s, m2s) = (mean_1.values(), mean_2.values());
                m1s.iter()
                    .flat_map(|&m1| {
                        m2s.iter().map(move |&m2| {
                            vec![(*weight_1, m1, *stddev), (1.0 - *weight_1, m2, *stddev)]
                        })
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellLabel {
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub index: usize,
    /// `(weight, mean, stddev)` per component.
    pub components: Vec<(f64, f64, f64)>,
    pub label: CellLabel,
    /// First certificate's residual when infeasible; otherwise the largest
    /// constraint residual met.
    pub residual: f64,
    pub certificate: Option<Certificate>,
    pub policy: AffinePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityGrid {
    pub family: MeasureFamily,
    pub axes: GridAxes,
    pub cells: Vec<GridCell>,
}

impl FeasibilityGrid {
    pub fn feasible_cells(&self) -> impl Iterator<Item = &GridCell> {
        self.cells.iter().filter(|c| c.label == CellLabel::Feasible)
    }
}

fn classify_cell(
    index: usize,
    components: Vec<(f64, f64, f64)>,
    sys: &SystemModel,
    avoid: &RandomSetSpec,
    target: &RandomSetSpec,
    cfg: &SynthesisConfig,
) -> Result<GridCell> {
    let init = Measure1D::mixture(&components)?;
    let (policy, certificate, residual) =
        match synthesize_policy(&init, sys, avoid, target, None, cfg) {
            Ok(report) => {
                let worst = report
                    .trace
                    .avoid_residuals
                    .iter()
                    .copied()
                    .fold(report.trace.terminal_deficit, f64::max);
                let residual = report.certificate.as_ref().map_or(worst, |c| c.residual);
                (report.policy, report.certificate, residual)
            }
            Err(Error::InputInfeasible(c)) => {
                let r = c.residual;
                (AffinePolicy::default(), Some(*c), r)
            }
            Err(e) => return Err(e),
        };
    Ok(GridCell {
        index,
        components,
        label: if certificate.is_none() {
            CellLabel::Feasible
        } else {
            CellLabel::Infeasible
        },
        residual,
        certificate,
        policy,
    })
}

/// Classify every candidate initial measure of `axes`: feasible iff the
/// synthesized policy passes verification at `cfg.tol`. Cells are
/// independent and evaluated in parallel; results keep grid order.
pub fn feasible_initial_set(
    sys: &SystemModel,
    avoid: &RandomSetSpec,
    target: &RandomSetSpec,
    axes: &GridAxes,
    cfg: &SynthesisConfig,
) -> Result<FeasibilityGrid> {
    axes.validate()?;
    cfg.validate()?;
    let cells = axes
        .cells()
        .into_par_iter()
        .enumerate()
        .map(|(i, comps)| classify_cell(i, comps, sys, avoid, target, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeasibilityGrid {
        family: axes.family(),
        axes: axes.clone(),
        cells,
    })
}
