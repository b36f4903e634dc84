//! One-dimensional probability measures as finite Gaussian/atomic mixtures.
//!
//! A component with zero standard deviation is an exact point mass. Atoms
//! are kept exact (rather than as narrow Gaussians) so that membership of a
//! boundary point in an open or closed set is decided correctly.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::{std_cdf, std_sf};
use crate::rng::{keyed_rng, open_unit, Purpose};

/// Largest number of components a mixture may carry.
pub const MAX_COMPONENTS: usize = 64;

/// Tolerance on the total weight of a mixture.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub stddev: f64,
}

impl MixtureComponent {
    pub fn new(weight: f64, mean: f64, stddev: f64) -> Result<Self> {
        let c = Self {
            weight,
            mean,
            stddev,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight > 0.0 && self.weight <= 1.0 + WEIGHT_SUM_TOL) {
            return Err(Error::InvalidMeasure(format!(
                "component weight {} is outside (0, 1]",
                self.weight
            )));
        }
        if !self.mean.is_finite() {
            return Err(Error::InvalidMeasure(format!(
                "component mean {} is not finite",
                self.mean
            )));
        }
        if !(self.stddev >= 0.0 && self.stddev.is_finite()) {
            return Err(Error::InvalidMeasure(format!(
                "component stddev {} must be finite and >= 0",
                self.stddev
            )));
        }
        Ok(())
    }

    pub fn is_atom(&self) -> bool {
        self.stddev == 0.0
    }

    fn cdf(&self, x: f64) -> f64 {
        if self.is_atom() {
            if x >= self.mean {
                1.0
            } else {
                0.0
            }
        } else {
            std_cdf((x - self.mean) / self.stddev)
        }
    }

    fn cdf_left(&self, x: f64) -> f64 {
        if self.is_atom() {
            if x > self.mean {
                1.0
            } else {
                0.0
            }
        } else {
            std_cdf((x - self.mean) / self.stddev)
        }
    }

    fn interval_mass(&self, lo: f64, hi: f64, lo_closed: bool, hi_closed: bool) -> f64 {
        if self.is_atom() {
            let m = self.mean;
            let above = if lo_closed { m >= lo } else { m > lo };
            let below = if hi_closed { m <= hi } else { m < hi };
            return if above && below { 1.0 } else { 0.0 };
        }
        let z_lo = (lo - self.mean) / self.stddev;
        let z_hi = (hi - self.mean) / self.stddev;
        // Difference taken on the tail where both terms are small.
        let mass = if z_lo >= 0.0 {
            std_sf(z_lo) - std_sf(z_hi)
        } else if z_hi <= 0.0 {
            std_cdf(z_hi) - std_cdf(z_lo)
        } else {
            1.0 - std_cdf(z_lo) - std_sf(z_hi)
        };
        mass.clamp(0.0, 1.0)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.is_atom() {
            self.mean
        } else {
            let z: f64 = rng.sample(StandardNormal);
            self.mean + self.stddev * z
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureRepr {
    components: Vec<MixtureComponent>,
}

/// A probability measure on the real line.
///
/// The component list is ordered and validated at construction: weights
/// are positive and sum to one within [`WEIGHT_SUM_TOL`], and there are at
/// most [`MAX_COMPONENTS`] of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct Measure1D {
    components: Vec<MixtureComponent>,
}

impl TryFrom<MeasureRepr> for Measure1D {
    type Error = Error;

    fn try_from(r: MeasureRepr) -> Result<Self> {
        Measure1D::new(r.components)
    }
}

impl From<Measure1D> for MeasureRepr {
    fn from(m: Measure1D) -> Self {
        MeasureRepr {
            components: m.components,
        }
    }
}

impl Measure1D {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidMeasure("mixture has no components".into()));
        }
        if components.len() > MAX_COMPONENTS {
            return Err(Error::Capacity {
                components: components.len(),
                cap: MAX_COMPONENTS,
            });
        }
        for c in &components {
            c.validate()?;
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { components })
    }

    /// Build from `(weight, mean, stddev)` triples.
    pub fn mixture(parts: &[(f64, f64, f64)]) -> Result<Self> {
        let comps = parts
            .iter()
            .map(|&(w, m, s)| MixtureComponent::new(w, m, s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(comps)
    }

    pub fn atom(point: f64) -> Result<Self> {
        Self::dirac_approx(point, 0.0)
    }

    pub fn gaussian(mean: f64, stddev: f64) -> Result<Self> {
        Self::new(vec![MixtureComponent::new(1.0, mean, stddev)?])
    }

    /// Normal approximation of the Dirac measure at `point`. A zero
    /// `stddev` gives the exact point mass.
    pub fn dirac_approx(point: f64, stddev: f64) -> Result<Self> {
        Self::gaussian(point, stddev)
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn is_atomic(&self) -> bool {
        self.components.iter().all(MixtureComponent::is_atom)
    }

    pub fn has_continuous_part(&self) -> bool {
        self.components.iter().any(|c| !c.is_atom())
    }

    pub fn atom_locations(&self) -> impl Iterator<Item = f64> + '_ {
        self.components
            .iter()
            .filter(|c| c.is_atom())
            .map(|c| c.mean)
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.components
            .iter()
            .map(|c| c.weight * (c.stddev * c.stddev + (c.mean - mu) * (c.mean - mu)))
            .sum()
    }

    /// Right-continuous cdf, P(X <= x).
    pub fn cdf(&self, x: f64) -> f64 {
        let v: f64 = self.components.iter().map(|c| c.weight * c.cdf(x)).sum();
        v.clamp(0.0, 1.0)
    }

    /// Left limit of the cdf, P(X < x).
    pub fn cdf_left(&self, x: f64) -> f64 {
        let v: f64 = self
            .components
            .iter()
            .map(|c| c.weight * c.cdf_left(x))
            .sum();
        v.clamp(0.0, 1.0)
    }

    /// Mass of the interval between `lo` and `hi` with the given endpoint
    /// closedness.
    pub fn interval_mass(&self, lo: f64, hi: f64, lo_closed: bool, hi_closed: bool) -> f64 {
        if lo > hi {
            return 0.0;
        }
        let v: f64 = self
            .components
            .iter()
            .map(|c| c.weight * c.interval_mass(lo, hi, lo_closed, hi_closed))
            .sum();
        v.clamp(0.0, 1.0)
    }

    /// Generalized inverse `inf { x : cdf(x) >= p }` by bisection.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("quantile level {p} is outside (0, 1)")));
        }
        let (mut lo, mut hi) = self.bracket(40.0);
        lo -= 1.0;
        hi += 1.0;
        while self.cdf(lo) >= p {
            lo -= (hi - lo).max(1.0);
        }
        while self.cdf(hi) < p {
            hi += (hi - lo).max(1.0);
        }
        for _ in 0..400 {
            if hi - lo <= 1e-12 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) >= p {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // Snap to an atom inside the final bracket so point masses come back
        // exactly.
        let snapped = self
            .atom_locations()
            .filter(|&a| a > lo && a <= hi && self.cdf(a) >= p)
            .fold(f64::INFINITY, f64::min);
        Ok(if snapped.is_finite() { snapped } else { hi })
    }

    /// Smallest interval holding every atom and `width` stddevs around
    /// every Gaussian mean.
    pub fn bracket(&self, width: f64) -> (f64, f64) {
        self.components.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(lo, hi), c| {
                (
                    lo.min(c.mean - width * c.stddev),
                    hi.max(c.mean + width * c.stddev),
                )
            },
        )
    }

    /// Law of `a * X + b`.
    pub fn pushforward_affine(&self, a: f64, b: f64) -> Measure1D {
        let components = self
            .components
            .iter()
            .map(|c| MixtureComponent {
                weight: c.weight,
                mean: a * c.mean + b,
                stddev: a.abs() * c.stddev,
            })
            .collect();
        Measure1D { components }
    }

    /// Law of `X + W` for independent `X ~ self`, `W ~ noise`.
    pub fn convolve(&self, noise: &Measure1D) -> Result<Measure1D> {
        let count = self.len() * noise.len();
        if count > MAX_COMPONENTS {
            return Err(Error::Capacity {
                components: count,
                cap: MAX_COMPONENTS,
            });
        }
        let mut components = Vec::with_capacity(count);
        for c in &self.components {
            for n in &noise.components {
                components.push(MixtureComponent {
                    weight: c.weight * n.weight,
                    mean: c.mean + n.mean,
                    stddev: c.stddev.hypot(n.stddev),
                });
            }
        }
        Ok(Measure1D { components })
    }

    /// Same weights and means with every stddev set to `stddev`.
    pub fn with_stddev(&self, stddev: f64) -> Result<Measure1D> {
        let comps = self
            .components
            .iter()
            .map(|c| MixtureComponent::new(c.weight, c.mean, stddev))
            .collect::<Result<Vec<_>>>()?;
        Measure1D::new(comps)
    }

    /// One draw: pick a component by weight, then draw from it.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = open_unit(rng);
        let mut acc = 0.0;
        let last = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc || i == last {
                return c.draw(rng);
            }
        }
        unreachable!("mixture is never empty")
    }

    /// Index of the component a draw came from, together with the value.
    pub fn draw_labeled<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, f64) {
        let u = open_unit(rng);
        let mut acc = 0.0;
        let last = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc || i == last {
                return (i, c.draw(rng));
            }
        }
        unreachable!("mixture is never empty")
    }

    /// `count` i.i.d. draws; draw `i` uses its own keyed stream.
    pub fn sample(&self, count: usize, seed: u64) -> Result<SampleBatch> {
        if count == 0 {
            return Err(Error::Domain("sample count must be positive".into()));
        }
        let values = (0..count as u64)
            .map(|i| {
                let mut rng = keyed_rng(seed, Purpose::MeasureSample, 0, i);
                self.draw(&mut rng)
            })
            .collect();
        Ok(SampleBatch {
            values,
            seed,
            count,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub values: Vec<f64>,
    pub seed: u64,
    pub count: usize,
}

impl SampleBatch {
    pub fn from_values(values: Vec<f64>) -> Self {
        let count = values.len();
        Self {
            values,
            seed: 0,
            count,
        }
    }
}
