mod common;

use proptest::prelude::*;

use mreach_core::montecarlo::{estimate_reach_avoid, ks_statistic, simulate, validate_trace};
use mreach_core::propagation::{propagate_step, verify_policy};
use mreach_core::synthesis::{
    feasible_initial_set, synthesize_policy, synthesize_terminal_step, AxisRange, GridAxes,
    SynthesisConfig,
};
use mreach_core::transport::{target_deficit, w1, w1_samples};
use mreach_core::{
    AffinePolicy, AffinePolicyStep, Interval, Measure1D, RandomSetSpec, RegionSet, Scenario,
    SystemModel,
};

use common::{sf, sum_at_most};

fn left(c: f64) -> RegionSet {
    RegionSet::single(Interval::at_most(c).unwrap())
}

fn open(lo: f64, hi: f64) -> RegionSet {
    RegionSet::single(Interval::open(lo, hi).unwrap())
}

fn bundled(name: &str) -> Scenario {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"));
    Scenario::load(&path).unwrap()
}

fn mixture() -> impl Strategy<Value = Measure1D> {
    prop::collection::vec((0.1f64..1.0, -3.0f64..3.0, 0.1f64..2.0), 1..4).prop_map(|raw| {
        let total: f64 = raw.iter().map(|r| r.0).sum();
        let parts: Vec<_> = raw.iter().map(|&(w, m, s)| (w / total, m, s)).collect();
        Measure1D::mixture(&parts).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn w1_is_a_metric(a in mixture(), b in mixture(), c in mixture()) {
        let ab = w1(&a, &b).distance;
        prop_assert!((ab - w1(&b, &a).distance).abs() <= 1e-8);
        prop_assert!(w1(&a, &c).distance <= ab + w1(&b, &c).distance + 1e-6);
        prop_assert!(w1(&a, &a).distance <= 1e-9);
    }

    #[test]
    fn w1_is_translation_equivariant(a in mixture(), b in mixture(), t in -100.0f64..100.0) {
        let shifted = w1(&a.pushforward_affine(1.0, t), &b.pushforward_affine(1.0, t)).distance;
        prop_assert!((shifted - w1(&a, &b).distance).abs() <= 1e-8);
    }

    #[test]
    fn trace_measures_stay_normalized(
        m in mixture(),
        gains in prop::collection::vec(-0.5f64..0.5, 3),
        ffs in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let sys = SystemModel::stationary(
            0.5, 3, Measure1D::mixture(&[(0.5, -0.2, 0.3), (0.5, 0.3, 0.1)]).unwrap(),
            f64::NEG_INFINITY, f64::INFINITY,
        ).unwrap();
        let policy = AffinePolicy::new(
            gains.iter().zip(&ffs).map(|(&h, &v)| AffinePolicyStep::new(h, v)).collect(),
        );
        let avoid = RandomSetSpec::certain(open(-0.1, 0.1));
        let target = RandomSetSpec::certain(left(1.0));
        let v = verify_policy(&m, &policy, &sys, &avoid, &target, 1e-9).unwrap();
        for m in &v.trace.measures {
            let total: f64 = m.components().iter().map(|c| c.weight).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn deficit_is_monotone_in_feedforward(c in -2.0f64..2.0, m0 in -2.0f64..2.0, dv in 0.001f64..1.0, v in -3.0f64..3.0) {
        let sys = SystemModel::stationary(
            1.0, 1, Measure1D::gaussian(0.0, 1.0).unwrap(), f64::NEG_INFINITY, f64::INFINITY,
        ).unwrap();
        let target = RandomSetSpec::certain(left(c));
        let init = Measure1D::atom(m0).unwrap();
        let d = |v: f64| {
            target_deficit(&propagate_step(&init, &AffinePolicyStep::feedforward_only(v), &sys, 0).unwrap(), &target)
        };
        prop_assert!(d(v - dv) <= d(v));
    }
}

#[test]
fn w1_matches_empirical_transport() {
    let a = Measure1D::mixture(&[(0.3, -1.0, 0.5), (0.7, 0.8, 1.0)]).unwrap();
    let b = Measure1D::mixture(&[(0.5, 0.0, 0.2), (0.5, 1.5, 0.7)]).unwrap();
    let sa = a.sample(100_000, 1).unwrap();
    let sb = b.sample(100_000, 2).unwrap();
    let emp = w1_samples(&sa.values, &sb.values).unwrap();
    let exact = w1(&a, &b).distance;
    assert!((emp - exact).abs() < 0.02, "{emp} vs {exact}");
}

#[test]
fn sampled_mixture_stays_in_ks_band() {
    let m = Measure1D::mixture(&[(0.25, -1.0, 0.3), (0.5, 0.5, 1.2), (0.25, 2.0, 0.0)]).unwrap();
    let n = 100_000;
    let s = m.sample(n, 77).unwrap();
    let d = ks_statistic(&s.values, &m);
    assert!(d < 1.63 / (n as f64).sqrt(), "{d}");
}

#[test]
fn verify_at_zero_tolerance_needs_exact_zeros() {
    let avoid = RandomSetSpec::certain(open(-0.5, 0.5));
    let target = RandomSetSpec::certain(left(1.0));
    let policy = AffinePolicy::new(vec![AffinePolicyStep::feedforward_only(-0.1)]);
    let mut accepted = 0;
    for noise in [
        Measure1D::atom(0.0).unwrap(),
        Measure1D::gaussian(0.0, 0.05).unwrap(),
        Measure1D::gaussian(0.0, 0.5).unwrap(),
    ] {
        let sys = SystemModel::stationary(1.0, 1, noise, -0.1, 0.1).unwrap();
        for m0 in [-2.0, -0.5, 0.0, 1.1, 1.2] {
            let v = verify_policy(&Measure1D::atom(m0).unwrap(), &policy, &sys, &avoid, &target, 0.0).unwrap();
            let all_zero = v.trace.avoid_residuals.iter().all(|&r| r == 0.0) && v.trace.terminal_deficit == 0.0;
            assert_eq!(v.passed(), all_zero, "m0 = {m0}");
            accepted += usize::from(v.passed());
        }
    }
    // Atoms at -2, -0.5 and 1.1 without noise; the σ = 0.05 tail past x = 1
    // from -2.1 underflows to zero.
    assert!(accepted >= 3, "{accepted}");
}

#[test]
fn grid_refinement_changes_objective_little() {
    for name in ["sv_a_nonrandom", "sv_b_random"] {
        let sc = bundled(name);
        let init = sc.initial_measure().unwrap();
        let base = SynthesisConfig::default();
        let fine = SynthesisConfig {
            v_grid_points: 2 * base.v_grid_points,
            ..base.clone()
        };
        for sys in [
            sc.system.clone(),
            sc.system.with_input_bounds(f64::NEG_INFINITY, f64::INFINITY).unwrap(),
        ] {
            let a = synthesize_terminal_step(init, &sys, &sc.target, &base).unwrap();
            let b = synthesize_terminal_step(init, &sys, &sc.target, &fine).unwrap();
            assert!((a.objective - b.objective).abs() < 1e-6, "{name}: {} vs {}", a.objective, b.objective);
        }
    }
}

#[test]
fn saturation_whenever_bound_deficit_exceeds_tol() {
    let sys = SystemModel::stationary(1.0, 1, Measure1D::gaussian(0.0, 1.0).unwrap(), -0.1, 0.1).unwrap();
    for c in [-1.0, 0.0, 1.0, 3.0] {
        for m0 in [-1.0, 0.5, 2.0] {
            let target = RandomSetSpec::certain(left(c));
            let sol = synthesize_terminal_step(&Measure1D::atom(m0).unwrap(), &sys, &target, &SynthesisConfig::default()).unwrap();
            let at_bound = sf(c - m0 + 0.1);
            assert!(at_bound > 1e-9);
            assert_eq!(sol.step.feedforward, -0.1, "c = {c}, m0 = {m0}");
            assert!((sol.objective - at_bound).abs() < 1e-12);
        }
    }
}

#[test]
fn feasible_set_ignores_visit_order() {
    let sys = SystemModel::stationary(1.0, 1, Measure1D::atom(0.0).unwrap(), -0.1, 0.1).unwrap();
    let avoid = RandomSetSpec::certain(open(-0.5, 0.5));
    let target = RandomSetSpec::certain(left(1.0));
    let axes = GridAxes::SingleGaussian {
        mean: AxisRange { min: -3.0, max: 3.0, points: 121 },
        stddev: vec![0.0, 0.1],
    };
    let cfg = SynthesisConfig::default();
    let parallel = feasible_initial_set(&sys, &avoid, &target, &axes, &cfg).unwrap();
    let serial = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| feasible_initial_set(&sys, &avoid, &target, &axes, &cfg).unwrap());
    assert_eq!(parallel, serial);
    // Reversing the mean axis visits the same measures in the opposite order.
    let mut reversed: Vec<_> = parallel.cells.iter().filter(|c| c.components[0].2 == 0.0).collect();
    reversed.reverse();
    for cell in reversed {
        let m = Measure1D::mixture(&cell.components).unwrap();
        let report = synthesize_policy(&m, &sys, &avoid, &target, None, &cfg).unwrap();
        assert_eq!(report.certificate, cell.certificate);
    }
}

#[test]
fn two_atom_grid_family() {
    let sys = SystemModel::stationary(1.0, 1, Measure1D::atom(0.0).unwrap(), -0.1, 0.1).unwrap();
    let avoid = RandomSetSpec::from_pairs(vec![(0.2, open(-0.5, 0.5)), (0.8, open(-1.0, 1.0))]).unwrap();
    let target = RandomSetSpec::from_pairs(vec![(0.2, left(-0.5)), (0.8, left(-1.0))]).unwrap();
    let axes = GridAxes::TwoAtomMixture {
        mean_1: AxisRange { min: -2.0, max: 1.0, points: 13 },
        mean_2: AxisRange { min: -2.0, max: 1.0, points: 13 },
        weight_1: 0.2,
        stddev: 0.0,
    };
    let grid = feasible_initial_set(&sys, &avoid, &target, &axes, &SynthesisConfig::default()).unwrap();
    assert_eq!(grid.cells.len(), 169);
    for cell in &grid.cells {
        let (m1, m2) = (cell.components[0].1, cell.components[1].1);
        // Both atoms outside the wider avoid branch (−1, 1), and both
        // steerable into the tighter target ray {x <= -1}.
        let outside = |x: f64| x <= -1.0 || x >= 1.0;
        let expected = outside(m1) && outside(m2) && sum_at_most(m1.max(m2), -0.1, -1.0);
        let got = cell.label == mreach_core::synthesis::CellLabel::Feasible;
        assert_eq!(got, expected, "m1 = {m1}, m2 = {m2}: {:?}", cell.certificate);
    }
    assert_eq!(grid.feasible_cells().count(), 25);
}

/// Each (seed, step) KS value of a continuous law exceeds the 95% DKW band
/// with probability about 0.05. Over 2 scenarios × 20 seeds the exceedance
/// count should look Binomial(40, 0.05) and √n·D should average about
/// E[Kolmogorov] = √(π/2)·ln 2 ≈ 0.8687.
#[test]
fn ks_values_follow_the_kolmogorov_law() {
    let n = 100_000;
    let mut scaled = Vec::new();
    let mut exceed = 0;
    for name in ["sv_a_nonrandom", "sv_b_random"] {
        let sc = bundled(name);
        let init = sc.initial_measure().unwrap();
        let policy = AffinePolicy::new(vec![AffinePolicyStep::feedforward_only(-0.1)]);
        let trace = verify_policy(init, &policy, &sc.system, &sc.avoid, &sc.target, sc.tol).unwrap().trace;
        for seed in 1..=20 {
            let r = validate_trace(&trace, &sc.system, &policy, n, seed, 0.05).unwrap();
            if init.len() == 1 {
                assert_eq!(r.ks_per_step[0], 0.0);
            }
            let d = r.ks_per_step[1];
            scaled.push(d * (n as f64).sqrt());
            exceed += usize::from(d > r.dkw_bound);
        }
    }
    let mean = scaled.iter().sum::<f64>() / scaled.len() as f64;
    let kolmogorov_mean = (std::f64::consts::PI / 2.0).sqrt() * std::f64::consts::LN_2;
    // Kolmogorov sd ≈ 0.2603; four standard errors over 40 draws.
    assert!((mean - kolmogorov_mean).abs() < 4.0 * 0.2603 / 40f64.sqrt(), "{mean}");
    // P(Binomial(40, 0.05) >= 8) < 1e-3.
    assert!(exceed < 8, "{exceed} exceedances");
}

#[test]
fn corollary_agreement_at_default_tolerance() {
    // Noise small enough that verification passes at 1e-9.
    let sys = SystemModel::stationary(1.0, 1, Measure1D::gaussian(0.0, 0.05).unwrap(), -0.1, 0.1).unwrap();
    let avoid = RandomSetSpec::certain(open(-0.5, 0.5));
    let target = RandomSetSpec::certain(left(1.0));
    let init = Measure1D::atom(-1.0).unwrap();
    let policy = AffinePolicy::new(vec![AffinePolicyStep::feedforward_only(0.0)]);
    let v = verify_policy(&init, &policy, &sys, &avoid, &target, 1e-9).unwrap();
    assert!(v.passed() && v.trace.terminal_deficit <= 1e-9);
    let n = 100_000;
    let traj = simulate(&init, &policy, &sys, n, 3).unwrap();
    let p = estimate_reach_avoid(&traj, &avoid, &target, 3, true);
    assert!(p >= 0.999 && p >= 1.0 - 10.0 / n as f64, "{p}");
}
