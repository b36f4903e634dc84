//! Closed-loop trajectory sampling, reach-avoid probability estimates and
//! Kolmogorov–Smirnov validation of analytic propagation.
//!
//! Each trajectory owns its random streams: the initial draw uses
//! `(seed, InitialState, 0, i)`, the step-`k` disturbance uses
//! `(seed, Disturbance, k, i)` and random-set branches use
//! `(seed, SetBranch, ·, i)`. Results are bit-identical for any thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::Measure1D;
use crate::propagation::{AffinePolicy, PropagationTrace, SystemModel};
use crate::rng::{keyed_rng, open_unit, Purpose};
use crate::sets::RandomSetSpec;
use crate::transport::pairwise_sum;

/// Smallest trajectory count accepted by [`validate_trace`].
pub const MIN_VALIDATION_N: usize = 10_000;

/// `n × (N + 1)` sampled states, row-major by trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    n: usize,
    width: usize,
    data: Vec<f64>,
}

impl Trajectories {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::Domain(
                "trajectories must be a non-empty rectangular matrix".into(),
            ));
        }
        Ok(Self {
            n: rows.len(),
            width,
            data: rows.concat(),
        })
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// Number of time steps `N`; each row holds `N + 1` states.
    pub fn horizon(&self) -> usize {
        self.width - 1
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.width)
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows().map(|r| r[k]).collect()
    }
}

/// Sample `n` closed-loop trajectories
/// `x_{k+1} = x_k + dt·(h_k·x_k + v_k) + w_k`, `x_0 ~ init`.
pub fn simulate(
    init: &Measure1D,
    policy: &AffinePolicy,
    sys: &SystemModel,
    n: usize,
    seed: u64,
) -> Result<Trajectories> {
    if policy.len() != sys.horizon() {
        return Err(Error::HorizonMismatch {
            what: "policy",
            expected: sys.horizon(),
            got: policy.len(),
        });
    }
    if n == 0 {
        return Err(Error::Domain("trajectory count must be positive".into()));
    }
    let horizon = sys.horizon();
    let dt = sys.dt();
    let rows: Vec<Vec<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::with_capacity(horizon + 1);
            let mut x = init.draw(&mut keyed_rng(seed, Purpose::InitialState, 0, i));
            row.push(x);
            for (k, step) in policy.steps.iter().enumerate() {
                let mut rng = keyed_rng(seed, Purpose::Disturbance, k as u64, i);
                let w = sys.noise(k).draw(&mut rng);
                x = x + dt * (step.gain * x + step.feedforward) + w;
                row.push(x);
            }
            row
        })
        .collect();
    Trajectories::from_rows(rows)
}

/// Monte Carlo estimate of `P{x_N ∈ 𝒯 and x_k ∉ 𝒜 for all k < N}`.
///
/// Every trajectory draws one branch of each random set. With
/// `couple_random_sets` both draws share a single uniform, so sets with
/// matching branch weights always pick the same branch index; otherwise the
/// two branches are drawn independently.
pub fn estimate_reach_avoid(
    traj: &Trajectories,
    avoid: &RandomSetSpec,
    target: &RandomSetSpec,
    seed: u64,
    couple_random_sets: bool,
) -> f64 {
    let horizon = traj.horizon();
    let hits: Vec<f64> = (0..traj.count())
        .into_par_iter()
        .map(|i| {
            let row = traj.row(i);
            let mut rng = keyed_rng(seed, Purpose::SetBranch, 0, i as u64);
            let u_avoid = open_unit(&mut rng);
            let u_target = if couple_random_sets {
                u_avoid
            } else {
                open_unit(&mut rng)
            };
            let a = &avoid.branches()[avoid.select_branch(u_avoid)].region;
            let t = &target.branches()[target.select_branch(u_target)].region;
            let ok = t.contains(row[horizon]) && row[..horizon].iter().all(|&x| !a.contains(x));
            if ok {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    (pairwise_sum(&hits) / traj.count() as f64).clamp(0.0, 1.0)
}

/// Exact two-sided KS distance `sup_x |F_n(x) − F(x)|` between the empirical
/// cdf of `samples` and `m`, including atoms of either side.
pub fn ks_statistic(samples: &[f64], m: &Measure1D) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut worst: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        let below = i as f64 / n;
        let upto = j as f64 / n;
        worst = worst
            .max((m.cdf_left(v) - below).abs())
            .max((m.cdf(v) - upto).abs());
        i = j;
    }
    worst.clamp(0.0, 1.0)
}

/// Half-width of the DKW confidence band at level `1 − alpha`.
pub fn dkw_bound(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub n: usize,
    pub seed: u64,
    pub reach_avoid_estimate: Option<f64>,
    pub ks_per_step: Vec<f64>,
    pub alpha: f64,
    pub dkw_bound: f64,
    /// Whether some step's KS distance exceeds `dkw_bound`.
    pub flagged: bool,
}

/// Simulate `policy` and compare each step's empirical cdf with the
/// analytic measure in `trace`.
pub fn validate_trace(
    trace: &PropagationTrace,
    sys: &SystemModel,
    policy: &AffinePolicy,
    n: usize,
    seed: u64,
    alpha: f64,
) -> Result<SimulationReport> {
    let traj = validation_run(trace, sys, policy, n, seed, alpha)?;
    Ok(report_from(trace, &traj, seed, alpha))
}

/// [`validate_trace`] plus the reach-avoid estimate on the same trajectories.
#[allow(clippy::too_many_arguments)]
pub fn validate_with_estimate(
    trace: &PropagationTrace,
    sys: &SystemModel,
    policy: &AffinePolicy,
    avoid: &RandomSetSpec,
    target: &RandomSetSpec,
    n: usize,
    seed: u64,
    alpha: f64,
    couple_random_sets: bool,
) -> Result<(SimulationReport, Trajectories)> {
    let traj = validation_run(trace, sys, policy, n, seed, alpha)?;
    let mut report = report_from(trace, &traj, seed, alpha);
    report.reach_avoid_estimate = Some(estimate_reach_avoid(
        &traj,
        avoid,
        target,
        seed,
        couple_random_sets,
    ));
    Ok((report, traj))
}

fn validation_run(
    trace: &PropagationTrace,
    sys: &SystemModel,
    policy: &AffinePolicy,
    n: usize,
    seed: u64,
    alpha: f64,
) -> Result<Trajectories> {
    if n < MIN_VALIDATION_N {
        return Err(Error::Domain(format!(
            "validation needs at least {MIN_VALIDATION_N} trajectories, got {n}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    if trace.measures.len() != sys.horizon() + 1 {
        return Err(Error::HorizonMismatch {
            what: "trace measures",
            expected: sys.horizon() + 1,
            got: trace.measures.len(),
        });
    }
    simulate(&trace.measures[0], policy, sys, n, seed)
}

fn report_from(
    trace: &PropagationTrace,
    traj: &Trajectories,
    seed: u64,
    alpha: f64,
) -> SimulationReport {
    let ks_per_step: Vec<f64> = trace
        .measures
        .par_iter()
        .enumerate()
        .map(|(k, m)| ks_statistic(&traj.column(k), m))
        .collect();
    let bound = dkw_bound(traj.count(), alpha);
    SimulationReport {
        n: traj.count(),
        seed,
        reach_avoid_estimate: None,
        flagged: ks_per_step.iter().any(|&d| d > bound),
        ks_per_step,
        alpha,
        dkw_bound: bound,
    }
}
