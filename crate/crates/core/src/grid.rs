//! Discretized one-dimensional strategy sets and reference measures.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Sorted discretization of a compact interval `[lower, upper]`.
///
/// Both endpoints are always grid members.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyGrid {
    points: Vec<f64>,
}

impl StrategyGrid {
    /// `n` equally spaced points from `lower` to `upper` inclusive.
    pub fn uniform(n: usize, lower: f64, upper: f64) -> Result<Arc<Self>> {
        if n < 2 {
            return Err(Error::param("grid.n", format!("need at least 2 points, got {n}")));
        }
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(Error::param(
                "grid.bounds",
                format!("need finite lower < upper, got [{lower}, {upper}]"),
            ));
        }
        let step = (upper - lower) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| lower + i as f64 * step).collect();
        points[n - 1] = upper;
        Ok(Arc::new(Self { points }))
    }

    /// Builds a grid from explicit points, which must be finite and strictly increasing.
    pub fn from_points(points: Vec<f64>) -> Result<Arc<Self>> {
        if points.is_empty() {
            return Err(Error::param("grid.points", "empty point list"));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::param("grid.points", "non-finite point"));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("grid.points", "points must be strictly increasing"));
        }
        Ok(Arc::new(Self { points }))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lower(&self) -> f64 {
        self.points[0]
    }

    pub fn upper(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> f64 {
        self.points[i]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        (self.points[i] - self.points[j]).abs()
    }

    /// Index of the grid point closest to `s`.
    pub fn nearest_index(&self, s: f64) -> usize {
        let idx = self.points.partition_point(|&p| p < s);
        if idx == 0 {
            0
        } else if idx == self.points.len() {
            idx - 1
        } else if (self.points[idx] - s).abs() < (s - self.points[idx - 1]).abs() {
            idx
        } else {
            idx - 1
        }
    }
}

/// Compares grids by identity first, then by value.
pub(crate) fn same_grid(a: &Arc<StrategyGrid>, b: &Arc<StrategyGrid>) -> bool {
    Arc::ptr_eq(a, b) || a.points == b.points
}

pub(crate) fn ensure_same_grid(a: &Arc<StrategyGrid>, b: &Arc<StrategyGrid>) -> Result<()> {
    if same_grid(a, b) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// The revision reference measure: full-support probability weights on a grid,
/// times a total mass (1 unless set otherwise).
///
/// The dynamics use the atoms `total_mass * weights`; with unit mass and
/// uniform weights every rate carries a factor `1/n`, while the counting
/// measure gives the canonical finite mean dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMeasure {
    grid: Arc<StrategyGrid>,
    weights: Vec<f64>,
    normalization: f64,
    total_mass: f64,
    atoms: Vec<f64>,
}

impl ReferenceMeasure {
    /// Weight `1/n` on each of the `n` grid points.
    pub fn uniform(grid: &Arc<StrategyGrid>) -> Self {
        let n = grid.len();
        Self {
            grid: Arc::clone(grid),
            weights: vec![1.0 / n as f64; n],
            normalization: 1.0,
            total_mass: 1.0,
            atoms: vec![1.0 / n as f64; n],
        }
    }

    /// Unit mass on each grid point: uniform weights with total mass `n`.
    pub fn counting(grid: &Arc<StrategyGrid>) -> Self {
        let n = grid.len();
        Self {
            grid: Arc::clone(grid),
            weights: vec![1.0 / n as f64; n],
            normalization: 1.0,
            total_mass: n as f64,
            atoms: vec![1.0; n],
        }
    }

    pub fn with_total_mass(mut self, mass: f64) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::param("reference.mass", format!("must be positive, got {mass}")));
        }
        self.total_mass = mass;
        self.atoms = self.weights.iter().map(|w| w * mass).collect();
        Ok(self)
    }

    /// Normalizes strictly positive `weights` to a probability vector.
    pub fn new(grid: &Arc<StrategyGrid>, weights: &[f64]) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                actual: weights.len(),
            });
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::param(
                "reference.weights",
                format!("full support required, weight {w} at index {i}"),
            ));
        }
        let total: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        Ok(Self {
            grid: Arc::clone(grid),
            atoms: weights.clone(),
            weights,
            normalization: total,
            total_mass: 1.0,
        })
    }

    pub fn grid(&self) -> &Arc<StrategyGrid> {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// `total_mass * weights`: the values `lambda_n(s_i)` entering the rates.
    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    /// Sum of the raw weights before renormalization.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }
}
