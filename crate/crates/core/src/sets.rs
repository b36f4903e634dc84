//! Target and avoid regions on the real line, their random (finitely
//! branched) versions, and the mass a measure puts on them.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{Measure1D, WEIGHT_SUM_TOL};

/// Serde helpers for numbers that may be infinite, written as `"inf"` and
/// `"-inf"` in JSON.
pub mod ext_real {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else if *v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    struct ExtRealVisitor;

    impl Visitor<'_> for ExtRealVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a number, \"inf\" or \"-inf\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(ExtRealVisitor)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntervalRepr {
    #[serde(with = "ext_real")]
    lo: f64,
    #[serde(with = "ext_real")]
    hi: f64,
    lo_closed: bool,
    hi_closed: bool,
}

/// A non-empty interval of the extended real line. Infinite endpoints are
/// always open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntervalRepr", into = "IntervalRepr")]
pub struct Interval {
    lo: f64,
    hi: f64,
    lo_closed: bool,
    hi_closed: bool,
}

impl TryFrom<IntervalRepr> for Interval {
    type Error = Error;

    fn try_from(r: IntervalRepr) -> Result<Self> {
        Interval::new(r.lo, r.hi, r.lo_closed, r.hi_closed)
    }
}

impl From<Interval> for IntervalRepr {
    fn from(i: Interval) -> Self {
        IntervalRepr {
            lo: i.lo,
            hi: i.hi,
            lo_closed: i.lo_closed,
            hi_closed: i.hi_closed,
        }
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64, lo_closed: bool, hi_closed: bool) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() {
            return Err(Error::InvalidRegion("interval endpoint is NaN".into()));
        }
        let lo_closed = lo_closed && lo.is_finite();
        let hi_closed = hi_closed && hi.is_finite();
        if lo > hi || (lo == hi && !(lo_closed && hi_closed)) {
            return Err(Error::InvalidRegion(format!(
                "interval with lo = {lo}, hi = {hi} is empty"
            )));
        }
        if lo == f64::INFINITY || hi == f64::NEG_INFINITY {
            return Err(Error::InvalidRegion(format!(
                "interval with lo = {lo}, hi = {hi} is empty"
            )));
        }
        Ok(Self {
            lo,
            hi,
            lo_closed,
            hi_closed,
        })
    }

    pub fn open(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, false, false)
    }

    pub fn closed(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, true, true)
    }

    /// `(-inf, c]`
    pub fn at_most(c: f64) -> Result<Self> {
        Self::new(f64::NEG_INFINITY, c, false, true)
    }

    /// `[c, inf)`
    pub fn at_least(c: f64) -> Result<Self> {
        Self::new(c, f64::INFINITY, true, false)
    }

    pub fn real_line() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            lo_closed: false,
            hi_closed: false,
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn lo_closed(&self) -> bool {
        self.lo_closed
    }

    pub fn hi_closed(&self) -> bool {
        self.hi_closed
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }

    fn mass(&self, m: &Measure1D) -> f64 {
        m.interval_mass(self.lo, self.hi, self.lo_closed, self.hi_closed)
    }
}

/// Finite union of pairwise-disjoint intervals in canonical form: sorted,
/// with overlapping or touching pieces merged whenever their union is an
/// interval.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<Interval>", into = "Vec<Interval>")]
pub struct RegionSet {
    intervals: Vec<Interval>,
}

impl TryFrom<Vec<Interval>> for RegionSet {
    type Error = Error;

    fn try_from(v: Vec<Interval>) -> Result<Self> {
        Ok(RegionSet::new(v))
    }
}

impl From<RegionSet> for Vec<Interval> {
    fn from(r: RegionSet) -> Self {
        r.intervals
    }
}

impl RegionSet {
    pub fn new(mut intervals: Vec<Interval>) -> Self {
        intervals.sort_by(|a, b| {
            a.lo.partial_cmp(&b.lo)
                .unwrap_or(Ordering::Equal)
                .then(b.lo_closed.cmp(&a.lo_closed))
        });
        let mut out: Vec<Interval> = Vec::with_capacity(intervals.len());
        for iv in intervals {
            if let Some(cur) = out.last_mut() {
                let joins = iv.lo < cur.hi || (iv.lo == cur.hi && (cur.hi_closed || iv.lo_closed));
                if joins {
                    match iv.hi.partial_cmp(&cur.hi) {
                        Some(Ordering::Greater) => {
                            cur.hi = iv.hi;
                            cur.hi_closed = iv.hi_closed;
                        }
                        Some(Ordering::Equal) => cur.hi_closed |= iv.hi_closed,
                        _ => {}
                    }
                    if iv.lo == cur.lo {
                        cur.lo_closed |= iv.lo_closed;
                    }
                    continue;
                }
            }
            out.push(iv);
        }
        Self { intervals: out }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(iv: Interval) -> Self {
        Self::new(vec![iv])
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|iv| iv.contains(x))
    }

    /// Supremum of the set, `-inf` when empty.
    pub fn sup(&self) -> f64 {
        self.intervals.last().map_or(f64::NEG_INFINITY, |iv| iv.hi)
    }

    /// Complement in the real line, endpoint closedness toggled.
    pub fn complement(&self) -> RegionSet {
        let mut out = Vec::with_capacity(self.intervals.len() + 1);
        let mut cursor = f64::NEG_INFINITY;
        let mut cursor_closed = false;
        for iv in &self.intervals {
            if iv.lo > cursor || (iv.lo == cursor && cursor_closed && !iv.lo_closed) {
                if let Ok(gap) = Interval::new(cursor, iv.lo, cursor_closed, !iv.lo_closed) {
                    out.push(gap);
                }
            }
            cursor = iv.hi;
            cursor_closed = !iv.hi_closed;
        }
        if cursor < f64::INFINITY {
            if let Ok(gap) = Interval::new(cursor, f64::INFINITY, cursor_closed, false) {
                out.push(gap);
            }
        }
        RegionSet { intervals: out }
    }
}

/// `mu(r) = ∫ δ_y(r) dΦ(y)`, with boundary atoms counted iff the endpoint
/// is closed.
pub fn mass_in_region(m: &Measure1D, r: &RegionSet) -> f64 {
    let total: f64 = r.intervals.iter().map(|iv| iv.mass(m)).sum();
    total.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub weight: f64,
    pub region: RegionSet,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomSetRepr {
    branches: Vec<Branch>,
}

/// A random region with finitely many outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RandomSetRepr", into = "RandomSetRepr")]
pub struct RandomSetSpec {
    branches: Vec<Branch>,
}

impl TryFrom<RandomSetRepr> for RandomSetSpec {
    type Error = Error;

    fn try_from(r: RandomSetRepr) -> Result<Self> {
        RandomSetSpec::new(r.branches)
    }
}

impl From<RandomSetSpec> for RandomSetRepr {
    fn from(s: RandomSetSpec) -> Self {
        RandomSetRepr {
            branches: s.branches,
        }
    }
}

impl RandomSetSpec {
    pub fn new(branches: Vec<Branch>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::InvalidRegion("random set has no branches".into()));
        }
        if let Some(b) = branches
            .iter()
            .find(|b| !(b.weight > 0.0 && b.weight <= 1.0 + WEIGHT_SUM_TOL))
        {
            return Err(Error::InvalidRegion(format!(
                "branch weight {} is outside (0, 1]",
                b.weight
            )));
        }
        let total: f64 = branches.iter().map(|b| b.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidRegion(format!(
                "branch weights sum to {total}, not 1"
            )));
        }
        Ok(Self { branches })
    }

    pub fn from_pairs(pairs: Vec<(f64, RegionSet)>) -> Result<Self> {
        Self::new(
            pairs
                .into_iter()
                .map(|(weight, region)| Branch { weight, region })
                .collect(),
        )
    }

    /// A non-random region.
    pub fn certain(region: RegionSet) -> Self {
        Self {
            branches: vec![Branch {
                weight: 1.0,
                region,
            }],
        }
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    /// Same weights, every region complemented.
    pub fn complement(&self) -> RandomSetSpec {
        RandomSetSpec {
            branches: self
                .branches
                .iter()
                .map(|b| Branch {
                    weight: b.weight,
                    region: b.region.complement(),
                })
                .collect(),
        }
    }

    /// Branch index selected by a uniform draw `u` in (0, 1).
    pub fn select_branch(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, b) in self.branches.iter().enumerate() {
            acc += b.weight;
            if u < acc {
                return i;
            }
        }
        self.branches.len() - 1
    }
}

/// `Σ_j p_j · mu(region_j)`.
pub fn random_set_mass(m: &Measure1D, s: &RandomSetSpec) -> f64 {
    let total: f64 = s
        .branches
        .iter()
        .map(|b| b.weight * mass_in_region(m, &b.region))
        .sum();
    total.clamp(0.0, 1.0)
}
