//! Reference computations shared by the integration tests. None of these
//! call into the library's numerics.

#![allow(dead_code)]

use std::f64::consts::PI;

use mreach_core::Measure1D;

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal cdf by Marsaglia's Taylor series
/// `Φ(x) = 1/2 + φ(x)·(x + x³/3 + x⁵/(3·5) + …)`, evaluated on the side
/// that keeps the result accurate. Good to ~1e-15 for |x| ≤ 8.
pub fn phi(x: f64) -> f64 {
    if x.is_infinite() {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    if x.abs() > 8.0 {
        // Mills-ratio asymptotics; far below any tolerance used here.
        let t = x.abs();
        let tail = pdf(t) / t * (1.0 - 1.0 / (t * t) + 3.0 / t.powi(4));
        return if x > 0.0 { 1.0 - tail } else { tail };
    }
    let mut term = x;
    let mut sum = x;
    let x2 = x * x;
    let mut k = 1.0;
    loop {
        k += 2.0;
        term *= x2 / k;
        let next = sum + term;
        if next == sum {
            break;
        }
        sum = next;
    }
    0.5 + pdf(x) * sum
}

/// Upper tail `1 − Φ(x)` without cancellation for large positive x.
pub fn sf(x: f64) -> f64 {
    if x > 3.0 {
        phi(-x)
    } else {
        1.0 - phi(x)
    }
}

/// `Φ⁻¹(p)` by bisection on [`phi`].
pub fn phi_inv(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Mixture cdf from `(weight, mean, stddev)` triples.
pub fn mixture_cdf(parts: &[(f64, f64, f64)], x: f64) -> f64 {
    parts
        .iter()
        .map(|&(w, m, s)| {
            w * if s == 0.0 {
                if x >= m {
                    1.0
                } else {
                    0.0
                }
            } else {
                phi((x - m) / s)
            }
        })
        .sum()
}

pub fn parts(m: &Measure1D) -> Vec<(f64, f64, f64)> {
    m.components()
        .iter()
        .map(|c| (c.weight, c.mean, c.stddev))
        .collect()
}

/// `∫ |F_a − F_b| dx` by composite Simpson on a uniform grid wide enough to
/// hold both measures. Only meant for Gaussian components.
pub fn w1_oracle(a: &[(f64, f64, f64)], b: &[(f64, f64, f64)]) -> f64 {
    let (lo, hi) = a.iter().chain(b).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, m, s)| {
        (lo.min(m - 12.0 * s), hi.max(m + 12.0 * s))
    });
    let n = 200_000usize;
    let h = (hi - lo) / n as f64;
    let f = |x: f64| (mixture_cdf(a, x) - mixture_cdf(b, x)).abs();
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        let x = lo + h * i as f64;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    acc * h / 3.0
}

/// `E[(X − c)+]` for one component.
fn partial_expectation(m: f64, s: f64, c: f64) -> f64 {
    if s == 0.0 {
        (m - c).max(0.0)
    } else {
        let z = (m - c) / s;
        (m - c) * phi(z) + s * pdf(z)
    }
}

/// Piecewise-linear function `f(x) = f0 + s0·x + Σ_i d_i·(x − c_i)+`.
/// Its Lipschitz constant is the largest |slope| over the pieces.
#[derive(Debug, Clone)]
pub struct Witness {
    pub f0: f64,
    pub s0: f64,
    pub kinks: Vec<(f64, f64)>,
}

impl Witness {
    /// Build from knots and the slope on each of the `knots.len() + 1`
    /// pieces, left to right.
    pub fn from_slopes(f0: f64, knots: &[f64], slopes: &[f64]) -> Self {
        assert_eq!(slopes.len(), knots.len() + 1);
        let kinks = knots
            .iter()
            .zip(slopes.windows(2))
            .map(|(&c, w)| (c, w[1] - w[0]))
            .collect();
        Self {
            f0,
            s0: slopes[0],
            kinks,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.f0 + self.s0 * x + self.kinks.iter().map(|&(c, d)| d * (x - c).max(0.0)).sum::<f64>()
    }

    /// Exact `E[f(X)]` under a mixture.
    pub fn expectation(&self, parts: &[(f64, f64, f64)]) -> f64 {
        parts
            .iter()
            .map(|&(w, m, s)| {
                w * (self.f0
                    + self.s0 * m
                    + self
                        .kinks
                        .iter()
                        .map(|&(c, d)| d * partial_expectation(m, s, c))
                        .sum::<f64>())
            })
            .sum()
    }
}

/// Error-free `a + b = s + e` (Knuth's TwoSum).
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// Exact test of `a + b ≤ c` for doubles.
pub fn sum_at_most(a: f64, b: f64, c: f64) -> bool {
    let (s, e) = two_sum(a, b);
    s < c || (s == c && e <= 0.0)
}

/// Branch × component double sum `1 − Σ_j p_j Σ_i w_i Φ((c_j − m_i)/σ)`
/// for left-ray targets `{x ≤ c_j}` and Gaussian components of width σ.
pub fn left_ray_deficit(branches: &[(f64, f64)], means: &[(f64, f64)], sigma: f64) -> f64 {
    let hit: f64 = branches
        .iter()
        .map(|&(p, c)| p * means.iter().map(|&(w, m)| w * phi((c - m) / sigma)).sum::<f64>())
        .sum();
    1.0 - hit
}
