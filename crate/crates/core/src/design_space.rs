//! Box-bounded design spaces.
//!
//! Every algorithm in the crate works in the unit cube `[0, 1]^m`: distances,
//! the rejection threshold and kernel radii all use normalized coordinates so
//! that a single threshold is meaningful whatever the problem units are.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SsboError};

/// Tolerance on normalized coordinates.
pub const UNIT_TOLERANCE: f64 = 1e-12;

/// Relative tolerance (fraction of the range) accepted by [`DesignSpace::normalize`].
pub const BOUNDS_TOLERANCE: f64 = 1e-9;

/// Axis-aligned box `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DesignSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(SsboError::InvalidBounds("dimension must be at least 1".into()));
        }
        if lower.len() != upper.len() {
            return Err(SsboError::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        for (i, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(SsboError::InvalidBounds(format!("bound {i} is not finite")));
            }
            if lo >= hi {
                return Err(SsboError::InvalidBounds(format!(
                    "lower[{i}] = {lo} is not below upper[{i}] = {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The unit cube `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }

    /// Clamps `x` onto the box in place.
    pub fn clip(&self, x: &mut [f64]) {
        for (v, (&lo, &hi)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(lo, hi);
        }
    }

    /// Maps a point in problem units onto the unit cube.
    pub fn normalize(&self, x: &[f64]) -> Result<UnitPoint> {
        self.check_dim(x.len())?;
        let mut coords = Vec::with_capacity(x.len());
        for (i, &v) in x.iter().enumerate() {
            if !v.is_finite() {
                return Err(SsboError::NonFinite("point to normalize"));
            }
            let (lo, hi) = (self.lower[i], self.upper[i]);
            let slack = BOUNDS_TOLERANCE * (hi - lo);
            if v < lo - slack || v > hi + slack {
                return Err(SsboError::OutOfBounds {
                    index: i,
                    value: v,
                    lower: lo,
                    upper: hi,
                });
            }
            coords.push(((v - lo) / (hi - lo)).clamp(0.0, 1.0));
        }
        Ok(UnitPoint(coords))
    }

    /// Maps a unit-cube point back to problem units.
    pub fn denormalize(&self, u: &UnitPoint) -> Result<Vec<f64>> {
        self.check_dim(u.dim())?;
        Ok(u
            .0
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&c, (&lo, &hi))| {
                if c == 1.0 {
                    hi
                } else {
                    lo + c * (hi - lo)
                }
            })
            .collect())
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim() {
            return Err(SsboError::DimensionMismatch {
                expected: self.dim(),
                found,
            });
        }
        Ok(())
    }
}

/// A point in normalized coordinates; every coordinate lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitPoint(Vec<f64>);

impl UnitPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(SsboError::Empty { what: "unit point" });
        }
        for (i, &c) in coords.iter().enumerate() {
            if !c.is_finite() {
                return Err(SsboError::NonFinite("unit point"));
            }
            if !(-UNIT_TOLERANCE..=1.0 + UNIT_TOLERANCE).contains(&c) {
                return Err(SsboError::OutOfBounds {
                    index: i,
                    value: c,
                    lower: 0.0,
                    upper: 1.0,
                });
            }
        }
        Ok(Self(coords.into_iter().map(|c| c.clamp(0.0, 1.0)).collect()))
    }

    /// Wraps coordinates already known to be inside the cube, clamping
    /// away rounding noise.
    pub(crate) fn from_clamped(mut coords: Vec<f64>) -> Self {
        for c in &mut coords {
            *c = c.clamp(0.0, 1.0);
        }
        Self(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn distance(&self, other: &UnitPoint) -> f64 {
        squared_distance(&self.0, &other.0).sqrt()
    }
}

impl AsRef<[f64]> for UnitPoint {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Options for [`lhs_sample_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LhsOptions {
    /// Jitter each point uniformly inside its stratum; otherwise use the
    /// stratum center.
    pub jitter: bool,
}

impl Default for LhsOptions {
    fn default() -> Self {
        Self { jitter: true }
    }
}

/// Latin hypercube sample of `n` points in `[0, 1]^m`, seeded.
pub fn lhs_sample(n: usize, m: usize, seed: u64) -> Result<Vec<UnitPoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    lhs_sample_with(n, m, &mut rng, LhsOptions::default())
}

/// Latin hypercube sample drawing from a caller-supplied generator.
///
/// Each dimension is an independent random permutation of the `n` strata
/// `[k/n, (k+1)/n)`, so every 1-D projection has exactly one point per
/// stratum.
pub fn lhs_sample_with<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    rng: &mut R,
    options: LhsOptions,
) -> Result<Vec<UnitPoint>> {
    if n == 0 {
        return Err(SsboError::Empty { what: "latin hypercube sample" });
    }
    if m == 0 {
        return Err(SsboError::InvalidConfig("dimension must be at least 1".into()));
    }
    let scale = n as f64;
    let mut coords = vec![vec![0.0; m]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for j in 0..m {
        strata.shuffle(rng);
        for (point, &k) in coords.iter_mut().zip(&strata) {
            let offset = if options.jitter { rng.random::<f64>() } else { 0.5 };
            let mut v = (k as f64 + offset) / scale;
            // (k + u) / n can round up onto the next stratum edge.
            if (v * scale).floor() as usize != k {
                v = (k as f64 + 0.5) / scale;
            }
            point[j] = v;
        }
    }
    Ok(coords.into_iter().map(UnitPoint::from_clamped).collect())
}

/// Euclidean distance from `x` to the nearest member of `set`.
pub fn min_distance(x: &UnitPoint, set: &[UnitPoint]) -> Result<f64> {
    min_distance_by(x.coords(), set.iter().map(UnitPoint::coords))
}

pub(crate) fn min_distance_by<'a, I>(x: &[f64], set: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut best = f64::INFINITY;
    let mut any = false;
    for p in set {
        if p.len() != x.len() {
            return Err(SsboError::DimensionMismatch {
                expected: x.len(),
                found: p.len(),
            });
        }
        any = true;
        best = best.min(squared_distance(x, p));
    }
    if !any {
        return Err(SsboError::Empty { what: "reference set" });
    }
    Ok(best.sqrt())
}
