//! Payoff kernels `f(s, s')` and the linear games `F(mu)(s) = sum_j f(s, s_j) mu_j`
//! they induce on a grid.

use std::io::Read;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{ensure_same_grid, StrategyGrid};
use crate::measure::{dot, DiscreteMeasure, MeasureKind, PayoffVector};

/// Tolerance below which a sampled monotonicity form counts as nonpositive.
pub const MONOTONE_TOL: f64 = 1e-9;

/// Continuous surrogate for the unit step, with `theta(x) + theta(-x) = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaSpec {
    /// `1 / (1 + exp(-alpha x))`.
    Logistic { alpha: f64 },
    /// Linear ramp from 0 at `-x0` to 1 at `x0`.
    PiecewiseLinear { x0: f64 },
}

impl Default for ThetaSpec {
    fn default() -> Self {
        ThetaSpec::Logistic { alpha: 100.0 }
    }
}

impl ThetaSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThetaSpec::Logistic { alpha } if !(alpha.is_finite() && alpha > 0.0) => {
                Err(Error::param("game.theta.alpha", format!("must be positive, got {alpha}")))
            }
            ThetaSpec::PiecewiseLinear { x0 } if !(x0.is_finite() && x0 > 0.0) => {
                Err(Error::param("game.theta.x0", format!("must be positive, got {x0}")))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ThetaSpec::Logistic { alpha } => 1.0 / (1.0 + (-alpha * x).exp()),
            ThetaSpec::PiecewiseLinear { x0 } => {
                if x < -x0 {
                    0.0
                } else if x > x0 {
                    1.0
                } else {
                    x / (2.0 * x0) + 0.5
                }
            }
        }
    }
}

/// Which payoff function a kernel tabulates.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// Classical war of attrition with prize `v`; discontinuous on the diagonal.
    WarOfAttrition { v: f64 },
    /// `v * theta(s - s') - min(s, s')`.
    ContinuousWar { v: f64, theta: ThetaSpec },
    /// `cos(2 pi s) - cos(2 pi s')`.
    Cosine,
    /// User-supplied matrix.
    Table,
}

/// A payoff kernel tabulated on a grid: `matrix[i * n + j] = f(s_i, s_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffKernel {
    grid: Arc<StrategyGrid>,
    spec: KernelSpec,
    matrix: Vec<f64>,
}

/// War of attrition payoff to `s` against `s_opp` with prize `v`.
pub fn war_of_attrition_payoff(v: f64, s: f64, s_opp: f64) -> f64 {
    if s_opp < s {
        v - s_opp
    } else if s_opp == s {
        v / 2.0 - s
    } else {
        -s
    }
}

impl PayoffKernel {
    fn tabulate(grid: &Arc<StrategyGrid>, spec: KernelSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let pts = grid.points();
        let n = pts.len();
        let mut matrix = Vec::with_capacity(n * n);
        for &s in pts {
            for &t in pts {
                matrix.push(f(s, t));
            }
        }
        Self {
            grid: Arc::clone(grid),
            spec,
            matrix,
        }
    }

    pub fn war_of_attrition(v: f64, grid: &Arc<StrategyGrid>) -> Result<Self> {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::param("game.V", format!("must be positive, got {v}")));
        }
        if grid.upper() <= v / 2.0 {
            return Err(Error::param(
                "grid.upper",
                format!("need T > V/2, got T = {} and V = {v}", grid.upper()),
            ));
        }
        Ok(Self::tabulate(grid, KernelSpec::WarOfAttrition { v }, |s, t| {
            war_of_attrition_payoff(v, s, t)
        }))
    }

    pub fn continuous_war(v: f64, theta: ThetaSpec, grid: &Arc<StrategyGrid>) -> Result<Self> {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::param("game.V", format!("must be positive, got {v}")));
        }
        theta.validate()?;
        check_theta_symmetry(&theta, grid)?;
        Ok(Self::tabulate(grid, KernelSpec::ContinuousWar { v, theta }, |s, t| {
            v * theta.eval(s - t) - s.min(t)
        }))
    }

    pub fn cosine(grid: &Arc<StrategyGrid>) -> Self {
        use std::f64::consts::TAU;
        Self::tabulate(grid, KernelSpec::Cosine, |s, t| (TAU * s).cos() - (TAU * t).cos())
    }

    /// Row-major `n x n` table, row `i` holding the payoffs of strategy `s_i`.
    pub fn table(grid: &Arc<StrategyGrid>, matrix: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if matrix.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                actual: matrix.len(),
            });
        }
        if matrix.iter().any(|a| !a.is_finite()) {
            return Err(Error::param("game.table", "non-finite entry"));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            spec: KernelSpec::Table,
            matrix,
        })
    }

    pub fn from_rows(grid: &Arc<StrategyGrid>, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != grid.len() || rows.iter().any(|r| r.len() != grid.len()) {
            return Err(Error::param(
                "game.table",
                format!("expected a {0}x{0} table", grid.len()),
            ));
        }
        Self::table(grid, rows.concat())
    }

    /// Reads a headerless CSV: row `i` lists `f(s_i, s_j)` for every `j`.
    pub fn table_from_csv<R: Read>(grid: &Arc<StrategyGrid>, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            let row = record
                .iter()
                .map(|cell| {
                    cell.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("row {}: `{cell}`: {e}", line + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::from_rows(grid, &rows)
    }

    pub fn zero(grid: &Arc<StrategyGrid>) -> Self {
        let n = grid.len();
        Self {
            grid: Arc::clone(grid),
            spec: KernelSpec::Table,
            matrix: vec![0.0; n * n],
        }
    }

    pub fn grid(&self) -> &Arc<StrategyGrid> {
        &self.grid
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.n() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.matrix[i * n..(i + 1) * n]
    }

    /// Matrix-vector product on raw weights.
    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.apply_into(w, &mut out);
        out
    }

    pub(crate) fn apply_into(&self, w: &[f64], out: &mut [f64]) {
        let n = self.n();
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&self.matrix[i * n..(i + 1) * n], w);
        }
    }

    /// The mean payoff vector `F(mu)`.
    pub fn evaluate(&self, mu: &DiscreteMeasure) -> Result<PayoffVector> {
        ensure_same_grid(&self.grid, mu.grid())?;
        PayoffVector::new(&self.grid, self.apply(mu.weights()))
    }

    /// `sum_ij f(s_i, s_j) a_i b_j`.
    pub fn bilinear_form(&self, a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
        ensure_same_grid(&self.grid, a.grid())?;
        ensure_same_grid(&self.grid, b.grid())?;
        Ok(self.bilinear_raw(a.weights(), b.weights()))
    }

    pub(crate) fn bilinear_raw(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = self.n();
        a.iter()
            .enumerate()
            .map(|(i, ai)| ai * dot(&self.matrix[i * n..(i + 1) * n], b))
            .sum()
    }

    /// Samples random probability pairs and reports the largest value of
    /// `<F(mu) - F(nu), mu - nu>`.
    pub fn monotonicity_test(&self, trials: usize, seed: u64) -> Result<MonotonicityReport> {
        if trials == 0 {
            return Err(Error::param("trials", "need at least one trial"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut max_value = f64::NEG_INFINITY;
        let mut worst = None;
        for _ in 0..trials {
            let mu = DiscreteMeasure::random_with(&self.grid, &mut rng);
            let nu = DiscreteMeasure::random_with(&self.grid, &mut rng);
            let d = mu.sub(&nu)?;
            let value = self.bilinear_raw(d.weights(), d.weights());
            if value > max_value {
                max_value = value;
                worst = Some((mu, nu));
            }
        }
        let monotone = max_value <= MONOTONE_TOL;
        Ok(MonotonicityReport {
            max_value,
            trials,
            monotone,
            violating_pair: if monotone { None } else { worst },
        })
    }
}

fn check_theta_symmetry(theta: &ThetaSpec, grid: &StrategyGrid) -> Result<()> {
    let span = grid.upper() - grid.lower();
    for k in 0..=64 {
        let x = span * k as f64 / 64.0;
        let sum = theta.eval(x) + theta.eval(-x);
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::param(
                "game.theta",
                format!("theta(x) + theta(-x) = {sum} at x = {x}"),
            ));
        }
        let t = theta.eval(x);
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::param("game.theta", format!("theta({x}) = {t} outside [0, 1]")));
        }
    }
    Ok(())
}

/// The `v * theta(s - s')` part of the continuous war of attrition.
pub fn continuous_war_theta_part(v: f64, theta: ThetaSpec, grid: &Arc<StrategyGrid>) -> PayoffKernel {
    PayoffKernel::tabulate(grid, KernelSpec::Table, |s, t| v * theta.eval(s - t))
}

/// The `-min(s, s')` part of the continuous war of attrition.
pub fn continuous_war_min_part(grid: &Arc<StrategyGrid>) -> PayoffKernel {
    PayoffKernel::tabulate(grid, KernelSpec::Table, |s, t| -s.min(t))
}

#[derive(Debug, Clone)]
pub struct MonotonicityReport {
    pub max_value: f64,
    pub trials: usize,
    pub monotone: bool,
    /// The sampled `(mu, nu)` attaining `max_value`, when it exceeds the tolerance.
    pub violating_pair: Option<(DiscreteMeasure, DiscreteMeasure)>,
}

/// `-int_0^T (mu[t, inf) - nu[t, inf))^2 dt`, computed exactly from the step tails.
///
/// Equals the monotonicity form of the continuous war of attrition for any
/// symmetric `theta`; used as an independent check of the tabulated kernel.
pub fn continuous_war_bilinear_oracle(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    ensure_same_grid(mu.grid(), nu.grid())?;
    let pts = mu.grid().points();
    let d: Vec<f64> = mu.weights().iter().zip(nu.weights()).map(|(a, b)| a - b).collect();
    // tail(t) on (s_{k-1}, s_k] is sum_{i >= k} d_i; on [0, s_0] it is the full sum.
    let mut tails = vec![0.0; d.len() + 1];
    for k in (0..d.len()).rev() {
        tails[k] = tails[k + 1] + d[k];
    }
    let mut integral = tails[0] * tails[0] * pts[0].max(0.0);
    for k in 1..d.len() {
        integral += tails[k] * tails[k] * (pts[k] - pts[k - 1]);
    }
    Ok(-integral)
}

/// Closed-form equilibrium of the war of attrition, binned onto a grid.
#[derive(Debug, Clone)]
pub struct WarNashEquilibrium {
    pub measure: DiscreteMeasure,
    /// Upper end `T - V/2` of the continuous part.
    pub s_star: f64,
    /// Mass of the atom at `T`, `exp(-s_star / V)`.
    pub atom: f64,
    pub binning: &'static str,
}

pub const WAR_NASH_BINNING: &str = "right-endpoint: cell (s_{i-1}, s_i] mass assigned to s_i";

/// Equilibrium distribution function of the war of attrition on `[0, T]`.
pub fn war_nash_cdf(v: f64, upper: f64, s: f64) -> f64 {
    let s_star = upper - v / 2.0;
    if s >= upper {
        1.0
    } else if s >= s_star {
        1.0 - (-s_star / v).exp()
    } else if s >= 0.0 {
        1.0 - (-s / v).exp()
    } else {
        0.0
    }
}

pub fn war_nash_equilibrium(v: f64, grid: &Arc<StrategyGrid>) -> Result<WarNashEquilibrium> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::param("game.V", format!("must be positive, got {v}")));
    }
    let upper = grid.upper();
    if upper <= v / 2.0 {
        return Err(Error::param(
            "grid.upper",
            format!("need T > V/2, got T = {upper} and V = {v}"),
        ));
    }
    let s_star = upper - v / 2.0;
    let pts = grid.points();
    let n = pts.len();
    let mut weights = Vec::with_capacity(n);
    let mut prev = 0.0;
    for (i, &s) in pts.iter().enumerate() {
        // The last cell ends at T, where the CDF jumps to 1.
        let c = if i + 1 == n { 1.0 } else { war_nash_cdf(v, upper, s) };
        weights.push(c - prev);
        prev = c;
    }
    let measure = DiscreteMeasure::probability(grid, weights)?;
    debug_assert_eq!(measure.kind(), MeasureKind::Probability);
    Ok(WarNashEquilibrium {
        measure,
        s_star,
        atom: (-s_star / v).exp(),
        binning: WAR_NASH_BINNING,
    })
}
