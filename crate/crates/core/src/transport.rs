//! 1-Wasserstein distances and the reach/avoid residuals.
//!
//! On the real line the Kantorovich–Rubinstein dual value equals the
//! primal `∫ |F_a(x) − F_b(x)| dx`, which is what gets computed here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{Measure1D, SampleBatch};
use crate::normal::{std_cdf, std_pdf};
use crate::sets::{random_set_mass, RandomSetSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum W1Method {
    ClosedForm,
    QuantileQuadrature,
    EmpiricalSort,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct W1Result {
    pub distance: f64,
    pub method: W1Method,
    pub est_error: f64,
}

/// Total absolute tolerance handed to the adaptive quadrature.
pub const QUADRATURE_TOL: f64 = 1e-6;
/// Upper bound on the tolerance of any single panel.
pub const PANEL_TOL: f64 = 1e-7;

const BREAK_OFFSETS: [f64; 9] = [-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0];

/// W1 between two measures. Single-component pairs and atom-only pairs
/// are evaluated exactly; everything else by adaptive quadrature.
pub fn w1(a: &Measure1D, b: &Measure1D) -> W1Result {
    if a.len() == 1 && b.len() == 1 {
        let (ca, cb) = (a.components()[0], b.components()[0]);
        return W1Result {
            distance: w1_gaussian(ca.mean, ca.stddev, cb.mean, cb.stddev),
            method: W1Method::ClosedForm,
            est_error: 0.0,
        };
    }
    if a.is_atomic() && b.is_atomic() {
        return W1Result {
            distance: w1_atomic(a, b),
            method: W1Method::ClosedForm,
            est_error: 0.0,
        };
    }
    w1_quadrature(a, b)
}

/// W1 between N(m1, s1) and N(m2, s2) (either may be an atom).
///
/// Under the quantile coupling the difference is `Δm + Δs·Z`, so the
/// distance is the mean of a folded normal.
pub fn w1_gaussian(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    let dm = m2 - m1;
    let ds = (s2 - s1).abs();
    if ds == 0.0 {
        return dm.abs();
    }
    let r = dm / ds;
    ds * 2.0 * std_pdf(r) + dm * (1.0 - 2.0 * std_cdf(-r))
}

fn w1_atomic(a: &Measure1D, b: &Measure1D) -> f64 {
    let mut points: Vec<f64> = a.atom_locations().chain(b.atom_locations()).collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    points
        .windows(2)
        .map(|w| (a.cdf(w[0]) - b.cdf(w[0])).abs() * (w[1] - w[0]))
        .sum()
}

/// `∫ |F_a − F_b| dx` by adaptive Simpson, split at every atom and at a
/// ladder of stddev offsets around every Gaussian mean.
pub fn w1_quadrature(a: &Measure1D, b: &Measure1D) -> W1Result {
    let mut breaks: Vec<f64> = Vec::new();
    for c in a.components().iter().chain(b.components()) {
        if c.is_atom() {
            breaks.push(c.mean);
        } else {
            breaks.extend(BREAK_OFFSETS.iter().map(|k| c.mean + k * c.stddev));
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let panels = breaks.len().saturating_sub(1).max(1);
    let tol = PANEL_TOL.min(QUADRATURE_TOL / panels as f64);
    let mut distance = 0.0;
    let mut est_error = 0.0;
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        // Right endpoint uses left limits so an atom at `hi` belongs to the
        // next panel.
        let f = |x: f64| {
            if x >= hi {
                (a.cdf_left(hi) - b.cdf_left(hi)).abs()
            } else {
                (a.cdf(x) - b.cdf(x)).abs()
            }
        };
        let (v, e) = adaptive_simpson(&f, lo, hi, tol);
        distance += v;
        est_error += e;
    }
    // Tails beyond 8 stddevs: ∫ Φ(z) dz over (-inf, -8] is below 1e-16.
    let tail: f64 = a
        .components()
        .iter()
        .chain(b.components())
        .map(|c| 2.0 * c.weight * c.stddev * 1e-16)
        .sum();
    W1Result {
        distance,
        method: W1Method::QuantileQuadrature,
        est_error: est_error + tail,
    }
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    if b <= a {
        return (0.0, 0.0);
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 0)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> (f64, f64) {
    const MIN_DEPTH: u32 = 3;
    const MAX_DEPTH: u32 = 48;
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth >= MAX_DEPTH || (depth >= MIN_DEPTH && delta.abs() <= 15.0 * tol) {
        return (left + right + delta / 15.0, delta.abs() / 15.0);
    }
    let (lv, le) = simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1);
    let (rv, re) = simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
    (lv + rv, le + re)
}

/// W1 between two equal-size empirical measures: mean absolute difference
/// of order statistics.
pub fn w1_empirical(a: &SampleBatch, b: &SampleBatch) -> Result<W1Result> {
    Ok(W1Result {
        distance: w1_samples(&a.values, &b.values)?,
        method: W1Method::EmpiricalSort,
        est_error: 0.0,
    })
}

pub fn w1_samples(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!(
            "empirical W1 needs equal sample counts, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Domain("empirical W1 of empty samples".into()));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let diffs: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| (x - y).abs()).collect();
    Ok(pairwise_sum(&diffs) / a.len() as f64)
}

pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        v.iter().sum()
    } else {
        let (l, r) = v.split_at(v.len() / 2);
        pairwise_sum(l) + pairwise_sum(r)
    }
}

/// Probability of being in the avoid set: `Σ_j p_j · mu(𝒜_j)`, which is
/// `1 − Σ_j p_j · mu(𝒜_j^∁)`. Zero exactly when the tube constraint holds
/// almost surely.
pub fn avoid_residual(m: &Measure1D, avoid: &RandomSetSpec) -> f64 {
    random_set_mass(m, avoid)
}

/// `1 − Σ_j p_j · mu(𝒯_j)` for the terminal measure, taken on the
/// complement so upper tails stay accurate.
pub fn target_deficit(m: &Measure1D, target: &RandomSetSpec) -> f64 {
    random_set_mass(m, &target.complement())
}

/// Reference cdf for a target: `Σ_j p_j · [x >= sup 𝒯_j]`. A state cdf that
/// reaches this curve from above everywhere has reached the target.
pub fn target_reference_cdf(target: &RandomSetSpec, x: f64) -> f64 {
    target
        .branches()
        .iter()
        .filter(|b| b.region.sup().is_finite() && x >= b.region.sup())
        .map(|b| b.weight)
        .sum()
}

/// Diagnostic `∫ max(0, R(x) − F_m(x)) dx` against [`target_reference_cdf`].
pub fn target_cdf_gap(m: &Measure1D, target: &RandomSetSpec) -> f64 {
    let mut sups: Vec<(f64, f64)> = target
        .branches()
        .iter()
        .map(|b| (b.region.sup(), b.weight))
        .filter(|(s, _)| s.is_finite())
        .collect();
    if sups.is_empty() {
        return 0.0;
    }
    sups.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (_, hi) = m.bracket(10.0);
    let end = hi.max(sups.last().unwrap().0) + 1.0;
    let mut knots: Vec<f64> = sups.iter().map(|s| s.0).collect();
    knots.extend(m.atom_locations().filter(|&x| x > sups[0].0));
    knots.extend(
        m.components()
            .iter()
            .filter(|c| !c.is_atom())
            .flat_map(|c| BREAK_OFFSETS.iter().map(move |k| c.mean + k * c.stddev))
            .filter(|&x| x > sups[0].0),
    );
    knots.push(end);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut total = 0.0;
    for w in knots.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let f = |x: f64| {
            let (r, fm) = if x >= hi {
                (target_reference_cdf(target, hi) - reference_jump(&sups, hi), m.cdf_left(hi))
            } else {
                (target_reference_cdf(target, x), m.cdf(x))
            };
            (r - fm).max(0.0)
        };
        total += adaptive_simpson(&f, lo, hi, PANEL_TOL).0;
    }
    // Past `end` the state cdf is 1 to working precision.
    total
}

fn reference_jump(sups: &[(f64, f64)], x: f64) -> f64 {
    sups.iter().filter(|s| s.0 == x).map(|s| s.1).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal::std_sf;
    use crate::sets::{Interval, RegionSet};

    fn g(m: f64, s: f64) -> Measure1D {
        Measure1D::gaussian(m, s).unwrap()
    }

    #[test]
    fn w1_equal_width_gaussians() {
        let r = w1(&g(0.0, 1.0), &g(1.0, 1.0));
        assert_eq!(r.method, W1Method::ClosedForm);
        assert!((r.distance - 1.0).abs() < 1e-12);
        let q = w1_quadrature(&g(0.0, 1.0), &g(1.0, 1.0));
        assert!((q.distance - 1.0).abs() < 1e-6);
        assert!(q.est_error <= 1e-6);
    }

    #[test]
    fn w1_identity() {
        let m = Measure1D::mixture(&[(0.3, 0.0, 1.0), (0.7, 2.0, 0.0)]).unwrap();
        assert_eq!(w1(&m, &m).distance, 0.0);
    }

    #[test]
    fn w1_equal_mean_gaussians() {
        let want = (2.0 / std::f64::consts::PI).sqrt();
        assert!((w1(&g(0.0, 1.0), &g(0.0, 2.0)).distance - want).abs() < 1e-12);
        assert!((w1_quadrature(&g(0.0, 1.0), &g(0.0, 2.0)).distance - want).abs() < 1e-6);
    }

    #[test]
    fn w1_general_gaussian_closed_form_matches_quadrature() {
        for (m1, s1, m2, s2) in [(0.0, 1.0, 0.3, 2.0), (-1.0, 0.2, 2.0, 1.5), (0.0, 0.0, 0.5, 1.0)] {
            let c = w1_gaussian(m1, s1, m2, s2);
            let q = w1_quadrature(&g(m1, s1), &g(m2, s2)).distance;
            assert!((c - q).abs() < 1e-6, "{c} vs {q}");
            assert!((c - w1_gaussian(m2, s2, m1, s1)).abs() < 1e-14);
        }
    }

    #[test]
    fn w1_atoms_exact() {
        let a = Measure1D::mixture(&[(0.5, 0.0, 0.0), (0.5, 1.0, 0.0)]).unwrap();
        let b = Measure1D::atom(1.0).unwrap();
        assert!((w1(&a, &b).distance - 0.5).abs() < 1e-15);
        assert!((w1_quadrature(&a, &b).distance - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empirical_examples() {
        let s = |v: &[f64]| SampleBatch::from_values(v.to_vec());
        assert_eq!(w1_empirical(&s(&[0.0, 1.0]), &s(&[0.0, 1.0])).unwrap().distance, 0.0);
        assert_eq!(w1_empirical(&s(&[1.0, 0.0]), &s(&[0.0, 1.0])).unwrap().distance, 0.0);
        assert_eq!(w1_empirical(&s(&[0.0, 0.0]), &s(&[1.0, 1.0])).unwrap().distance, 1.0);
        assert!(matches!(
            w1_empirical(&s(&[0.0]), &s(&[0.0, 1.0])),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn empirical_converges_to_closed_form() {
        let a = g(0.0, 1.0).sample(100_000, 11).unwrap();
        let b = g(1.0, 1.0).sample(100_000, 12).unwrap();
        let d = w1_empirical(&a, &b).unwrap().distance;
        assert!((d - 1.0).abs() < 0.02, "{d}");
    }

    fn avoid_a() -> RandomSetSpec {
        RandomSetSpec::certain(RegionSet::single(Interval::open(-0.5, 0.5).unwrap()))
    }

    fn target_le(c: f64) -> RandomSetSpec {
        RandomSetSpec::certain(RegionSet::single(Interval::at_most(c).unwrap()))
    }

    #[test]
    fn avoid_residual_examples() {
        assert_eq!(avoid_residual(&Measure1D::atom(0.5).unwrap(), &avoid_a()), 0.0);
        assert_eq!(avoid_residual(&Measure1D::atom(-0.5).unwrap(), &avoid_a()), 0.0);
        assert_eq!(avoid_residual(&Measure1D::atom(0.0).unwrap(), &avoid_a()), 1.0);
        // Half the Gaussian falls inside; the far edge at -0.5 is 20 sd away.
        assert!((avoid_residual(&g(0.5, 0.05), &avoid_a()) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn target_deficit_examples() {
        assert_eq!(target_deficit(&Measure1D::atom(0.9).unwrap(), &target_le(1.0)), 0.0);
        let d = target_deficit(&g(0.4, 1.0), &target_le(1.0));
        assert!((d - 0.274_253_117_750_073_6).abs() < 1e-15);
        let m = Measure1D::mixture(&[(0.2, 0.4, 1.0), (0.8, 0.9, 1.0)]).unwrap();
        let t = RandomSetSpec::from_pairs(vec![
            (0.2, RegionSet::single(Interval::at_most(-0.5).unwrap())),
            (0.8, RegionSet::single(Interval::at_most(-1.0).unwrap())),
        ])
        .unwrap();
        let want = 1.0
            - (0.2 * (0.2 * std_cdf(-0.9) + 0.8 * std_cdf(-1.4))
                + 0.8 * (0.2 * std_cdf(-1.4) + 0.8 * std_cdf(-1.9)));
        assert!((target_deficit(&m, &t) - want).abs() < 1e-14);
    }

    #[test]
    fn cdf_gap_is_expected_overshoot() {
        // For 𝒯 = {x <= c} the gap is E[(X - c)+].
        let m = g(0.4, 1.0);
        let z = 0.6;
        let want = std_pdf(z) - z * std_sf(z);
        assert!((target_cdf_gap(&m, &target_le(1.0)) - want).abs() < 1e-6);
        assert_eq!(target_cdf_gap(&Measure1D::atom(0.9).unwrap(), &target_le(1.0)), 0.0);
        let over = target_cdf_gap(&Measure1D::atom(1.5).unwrap(), &target_le(1.0));
        assert!((over - 0.5).abs() < 1e-9);
    }

    #[test]
    fn reference_cdf_steps() {
        let t = RandomSetSpec::from_pairs(vec![
            (0.2, RegionSet::single(Interval::at_most(-0.5).unwrap())),
            (0.8, RegionSet::single(Interval::at_most(-1.0).unwrap())),
        ])
        .unwrap();
        assert_eq!(target_reference_cdf(&t, -1.1), 0.0);
        assert_eq!(target_reference_cdf(&t, -1.0), 0.8);
        assert_eq!(target_reference_cdf(&t, -0.5), 1.0);
    }
}
