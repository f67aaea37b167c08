//! Discrete probability and signed measures on a [`StrategyGrid`], payoff
//! vectors, and the norms and pairings between them.

use std::sync::Arc;

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bl::bl_norm_on_points;
use crate::error::{Error, Result};
use crate::grid::{ensure_same_grid, StrategyGrid};

/// Weights below `-NEGATIVE_TOL` are rejected for probability measures;
/// weights in `[-NEGATIVE_TOL, 0)` are clamped to zero.
pub const NEGATIVE_TOL: f64 = 1e-12;
/// Allowed deviation of a probability measure's total mass from 1.
pub const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureKind {
    Probability,
    Signed,
}

/// Finite measure with one atom per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    grid: Arc<StrategyGrid>,
    weights: Vec<f64>,
    kind: MeasureKind,
}

/// A payoff function sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffVector {
    grid: Arc<StrategyGrid>,
    values: Vec<f64>,
}

fn check_len(grid: &StrategyGrid, len: usize) -> Result<()> {
    if grid.len() != len {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            actual: len,
        });
    }
    Ok(())
}

impl DiscreteMeasure {
    /// Probability measure; tiny negative weights are clamped to zero.
    pub fn probability(grid: &Arc<StrategyGrid>, mut weights: Vec<f64>) -> Result<Self> {
        check_len(grid, weights.len())?;
        for (i, w) in weights.iter_mut().enumerate() {
            if !w.is_finite() || *w < -NEGATIVE_TOL {
                return Err(Error::param(
                    "measure.weights",
                    format!("weight {w} at index {i} is not a probability weight"),
                ));
            }
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::param(
                "measure.weights",
                format!("total mass {total} is not 1"),
            ));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            weights,
            kind: MeasureKind::Probability,
        })
    }

    pub fn signed(grid: &Arc<StrategyGrid>, weights: Vec<f64>) -> Result<Self> {
        check_len(grid, weights.len())?;
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::param("measure.weights", "non-finite weight"));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            weights,
            kind: MeasureKind::Signed,
        })
    }

    /// Normalizes nonnegative weights to a probability measure.
    pub fn from_unnormalized(grid: &Arc<StrategyGrid>, weights: Vec<f64>) -> Result<Self> {
        check_len(grid, weights.len())?;
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::param("measure.weights", "weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::param("measure.weights", "zero total mass"));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            weights: weights.into_iter().map(|w| w / total).collect(),
            kind: MeasureKind::Probability,
        })
    }

    pub fn zero(grid: &Arc<StrategyGrid>) -> Self {
        Self {
            grid: Arc::clone(grid),
            weights: vec![0.0; grid.len()],
            kind: MeasureKind::Signed,
        }
    }

    pub fn dirac(grid: &Arc<StrategyGrid>, index: usize) -> Result<Self> {
        if index >= grid.len() {
            return Err(Error::IndexOutOfRange {
                index,
                len: grid.len(),
            });
        }
        let mut weights = vec![0.0; grid.len()];
        weights[index] = 1.0;
        Ok(Self {
            grid: Arc::clone(grid),
            weights,
            kind: MeasureKind::Probability,
        })
    }

    pub fn uniform(grid: &Arc<StrategyGrid>) -> Self {
        let n = grid.len();
        Self {
            grid: Arc::clone(grid),
            weights: vec![1.0 / n as f64; n],
            kind: MeasureKind::Probability,
        }
    }

    /// Gaussian bump `exp(-(s - mean)^2 / (2 variance))` sampled on the grid and normalized.
    pub fn gaussian(grid: &Arc<StrategyGrid>, mean: f64, variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::param("initial.variance", format!("must be positive, got {variance}")));
        }
        if !mean.is_finite() {
            return Err(Error::param("initial.mean", "must be finite"));
        }
        let weights: Vec<f64> = grid
            .points()
            .iter()
            .map(|s| (-(s - mean).powi(2) / (2.0 * variance)).exp())
            .collect();
        Self::from_unnormalized(grid, weights)
    }

    /// Uniform sample from the simplex: normalized i.i.d. exponential weights.
    pub fn random(grid: &Arc<StrategyGrid>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_with(grid, &mut rng)
    }

    pub fn random_with<R: Rng + ?Sized>(grid: &Arc<StrategyGrid>, rng: &mut R) -> Self {
        let raw: Vec<f64> = (0..grid.len())
            .map(|_| -rng.sample::<f64, _>(Open01).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        Self {
            grid: Arc::clone(grid),
            weights: raw.into_iter().map(|w| w / total).collect(),
            kind: MeasureKind::Probability,
        }
    }

    pub fn grid(&self) -> &Arc<StrategyGrid> {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    /// `self - other`; always signed.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        ensure_same_grid(&self.grid, &other.grid)?;
        Ok(Self {
            grid: Arc::clone(&self.grid),
            weights: self
                .weights
                .iter()
                .zip(&other.weights)
                .map(|(a, b)| a - b)
                .collect(),
            kind: MeasureKind::Signed,
        })
    }

    /// `a * self + b * other`. Stays a probability measure only for convex weights.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        ensure_same_grid(&self.grid, &other.grid)?;
        let weights = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(x, y)| a * x + b * y)
            .collect();
        let convex = a >= 0.0
            && b >= 0.0
            && (a + b - 1.0).abs() < 1e-15
            && self.kind == MeasureKind::Probability
            && other.kind == MeasureKind::Probability;
        Ok(Self {
            grid: Arc::clone(&self.grid),
            weights,
            kind: if convex {
                MeasureKind::Probability
            } else {
                MeasureKind::Signed
            },
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            weights: self.weights.iter().map(|w| c * w).collect(),
            kind: MeasureKind::Signed,
        }
    }

    /// Total variation norm `sum |w_i|`.
    pub fn tv_norm(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    /// Bounded-Lipschitz norm: the sup of `sum g_i w_i` over `g` with
    /// `|g| <= 1` and Lipschitz constant at most 1.
    pub fn bl_norm(&self) -> f64 {
        bl_norm_on_points(self.grid.points(), &self.weights)
    }

    pub fn bl_distance(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.bl_norm())
    }

    /// Distribution function values `mu([lower, s_i])`.
    pub fn cdf(&self) -> Result<Vec<f64>> {
        if self.kind != MeasureKind::Probability {
            return Err(Error::KindMismatch {
                expected: "probability",
            });
        }
        Ok(self
            .weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect())
    }

    /// Indices carrying more than `tol` mass.
    pub fn support(&self, tol: f64) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > tol)
            .map(|(i, _)| i)
            .collect()
    }
}

impl PayoffVector {
    pub fn new(grid: &Arc<StrategyGrid>, values: Vec<f64>) -> Result<Self> {
        check_len(grid, values.len())?;
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn constant(grid: &Arc<StrategyGrid>, c: f64) -> Self {
        Self {
            grid: Arc::clone(grid),
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: &Arc<StrategyGrid>, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: Arc::clone(grid),
            values: grid.points().iter().map(|&s| f(s)).collect(),
        }
    }

    pub fn grid(&self) -> &Arc<StrategyGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `<rho, mu> = sum_i rho_i w_i`.
pub fn pairing(rho: &PayoffVector, mu: &DiscreteMeasure) -> Result<f64> {
    ensure_same_grid(&rho.grid, &mu.grid)?;
    Ok(dot(&rho.values, &mu.weights))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid3() -> Arc<StrategyGrid> {
        StrategyGrid::uniform(3, 0.0, 2.0).unwrap()
    }

    #[test]
    fn dirac_examples() {
        let g = grid3();
        assert_eq!(DiscreteMeasure::dirac(&g, 0).unwrap().weights(), &[1.0, 0.0, 0.0]);
        assert_eq!(DiscreteMeasure::dirac(&g, 2).unwrap().weights(), &[0.0, 0.0, 1.0]);
        assert!(DiscreteMeasure::dirac(&g, 3).is_err());
        let rho = PayoffVector::new(&g, vec![0.3, -1.0, 4.0]).unwrap();
        for i in 0..3 {
            let d = DiscreteMeasure::dirac(&g, i).unwrap();
            assert_eq!(pairing(&rho, &d).unwrap(), rho.values()[i]);
        }
    }

    #[test]
    fn gaussian_examples() {
        let g = StrategyGrid::uniform(21, 0.0, 2.0).unwrap();
        let mu = DiscreteMeasure::gaussian(&g, 1.0, 0.1).unwrap();
        let w = mu.weights();
        for i in 0..21 {
            assert!((w[i] - w[20 - i]).abs() < 1e-15);
        }
        assert!((mu.mass() - 1.0).abs() < 1e-15);
        let flat = DiscreteMeasure::gaussian(&g, 1.0, 1e6).unwrap();
        assert!(flat.weights().iter().all(|w| (w - 1.0 / 21.0).abs() < 1e-6));
        let one_sided = DiscreteMeasure::gaussian(&g, -5.0, 0.5).unwrap();
        assert!((one_sided.mass() - 1.0).abs() < 1e-15);
        assert!(DiscreteMeasure::gaussian(&g, 1.0, 0.0).is_err());
        assert!(DiscreteMeasure::gaussian(&g, 1.0, -1.0).is_err());
    }

    #[test]
    fn uniform_examples() {
        let g4 = StrategyGrid::uniform(4, 0.0, 1.0).unwrap();
        assert_eq!(DiscreteMeasure::uniform(&g4).weights(), &[0.25; 4]);
        let g2 = StrategyGrid::uniform(2, 0.0, 1.0).unwrap();
        assert_eq!(DiscreteMeasure::uniform(&g2).weights(), &[0.5, 0.5]);
    }

    #[test]
    fn random_measure_properties() {
        let g = StrategyGrid::uniform(17, 0.0, 1.0).unwrap();
        assert_eq!(DiscreteMeasure::random(&g, 7), DiscreteMeasure::random(&g, 7));
        assert_ne!(DiscreteMeasure::random(&g, 7), DiscreteMeasure::random(&g, 8));
        for seed in 0..100 {
            let mu = DiscreteMeasure::random(&g, seed);
            assert!((mu.mass() - 1.0).abs() < 1e-12);
            assert!(mu.weights().iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn pairing_examples() {
        let g = StrategyGrid::uniform(2, 0.0, 1.0).unwrap();
        let rho = PayoffVector::new(&g, vec![1.0, 0.0]).unwrap();
        let mu = DiscreteMeasure::uniform(&g);
        assert_eq!(pairing(&rho, &mu).unwrap(), 0.5);
        let c = PayoffVector::constant(&g, 3.5);
        let r = DiscreteMeasure::random(&g, 3);
        assert!((pairing(&c, &r).unwrap() - 3.5).abs() < 1e-15);
        let tangent = DiscreteMeasure::dirac(&g, 0)
            .unwrap()
            .sub(&DiscreteMeasure::dirac(&g, 1).unwrap())
            .unwrap();
        let rho = PayoffVector::new(&g, vec![2.5, -0.5]).unwrap();
        assert_eq!(pairing(&rho, &tangent).unwrap(), 3.0);

        let other = StrategyGrid::uniform(2, 0.0, 2.0).unwrap();
        let foreign = DiscreteMeasure::uniform(&other);
        assert_eq!(pairing(&rho, &foreign), Err(Error::GridMismatch));
    }

    #[test]
    fn tv_examples() {
        let g = grid3();
        assert!((DiscreteMeasure::random(&g, 1).tv_norm() - 1.0).abs() < 1e-15);
        let d = DiscreteMeasure::dirac(&g, 0)
            .unwrap()
            .sub(&DiscreteMeasure::dirac(&g, 1).unwrap())
            .unwrap();
        assert_eq!(d.tv_norm(), 2.0);
        assert_eq!(DiscreteMeasure::zero(&g).tv_norm(), 0.0);
    }

    #[test]
    fn bl_examples() {
        let g = grid3();
        let d = |i| DiscreteMeasure::dirac(&g, i).unwrap();
        assert!((d(0).bl_distance(&d(1)).unwrap() - 1.0).abs() < 1e-15);
        assert!((d(0).bl_distance(&d(2)).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(DiscreteMeasure::zero(&g).bl_norm(), 0.0);
        let mu = DiscreteMeasure::random(&g, 4);
        let nu = DiscreteMeasure::random(&g, 5);
        assert_eq!(mu.bl_distance(&mu).unwrap(), 0.0);
        let ab = mu.bl_distance(&nu).unwrap();
        let ba = nu.bl_distance(&mu).unwrap();
        assert!((ab - ba).abs() < 1e-15);
        assert!(ab <= mu.sub(&nu).unwrap().tv_norm() + 1e-15);
    }

    #[test]
    fn cdf_examples() {
        let g4 = StrategyGrid::uniform(4, 0.0, 1.0).unwrap();
        assert_eq!(
            DiscreteMeasure::dirac(&g4, 3).unwrap().cdf().unwrap(),
            vec![0.0, 0.0, 0.0, 1.0]
        );
        assert_eq!(
            DiscreteMeasure::uniform(&g4).cdf().unwrap(),
            vec![0.25, 0.5, 0.75, 1.0]
        );
        let r = DiscreteMeasure::random(&g4, 9).cdf().unwrap();
        assert!(r.windows(2).all(|w| w[0] <= w[1]));
        assert!((r[3] - 1.0).abs() < 1e-9);
        assert!(DiscreteMeasure::zero(&g4).cdf().is_err());
    }

    #[test]
    fn support_examples() {
        let g4 = StrategyGrid::uniform(4, 0.0, 1.0).unwrap();
        assert_eq!(DiscreteMeasure::dirac(&g4, 0).unwrap().support(1e-9), vec![0]);
        assert_eq!(DiscreteMeasure::uniform(&g4).support(1e-9), vec![0, 1, 2, 3]);
        assert!(DiscreteMeasure::random(&g4, 2).support(1.1).is_empty());
    }

    #[test]
    fn probability_constructor_clamps_and_rejects() {
        let g = grid3();
        let mu = DiscreteMeasure::probability(&g, vec![-1e-13, 0.5, 0.5]).unwrap();
        assert_eq!(mu.weights()[0], 0.0);
        assert!(DiscreteMeasure::probability(&g, vec![-1e-6, 0.5, 0.5]).is_err());
        assert!(DiscreteMeasure::probability(&g, vec![0.2, 0.2, 0.2]).is_err());
    }
}
