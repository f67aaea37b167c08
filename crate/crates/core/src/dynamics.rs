//! Revision protocols, the finite mean-dynamics vector field, and fixed-step
//! integration of closed-loop (static feedback) and smoothed-payoff dynamics.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics;
use crate::error::{Error, Result};
use crate::game::PayoffKernel;
use crate::grid::{ensure_same_grid, ReferenceMeasure, StrategyGrid};
use crate::measure::{dot, DiscreteMeasure, PayoffVector, NEGATIVE_TOL};

/// Total-mass deviation that triggers renormalization after a step.
pub const RENORMALIZE_TOL: f64 = 1e-12;

pub type RateFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Rate `phi(rho(target) - rho(source))` of an impartial pairwise comparison
/// protocol, with an optional antiderivative `tau(r) = int_0^r phi` that
/// defines its storage function.
#[derive(Clone)]
pub struct ImpartialRate {
    label: String,
    phi: RateFn,
    tau: Option<RateFn>,
}

impl ImpartialRate {
    pub fn new(label: impl Into<String>, phi: RateFn) -> Self {
        Self {
            label: label.into(),
            phi,
            tau: None,
        }
    }

    pub fn with_tau(mut self, tau: RateFn) -> Self {
        self.tau = Some(tau);
        self
    }

    /// `scale * max(0, r)^exponent`, with its analytic antiderivative.
    pub fn power(exponent: f64, scale: f64) -> Result<Self> {
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(Error::param("protocol.exponent", format!("must be positive, got {exponent}")));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::param("protocol.scale", format!("must be positive, got {scale}")));
        }
        let phi: RateFn = Arc::new(move |r: f64| scale * r.max(0.0).powf(exponent));
        let tau: RateFn =
            Arc::new(move |r: f64| scale * r.max(0.0).powf(exponent + 1.0) / (exponent + 1.0));
        Ok(Self::new(format!("power(p={exponent}, c={scale})"), phi).with_tau(tau))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn phi(&self, r: f64) -> f64 {
        (self.phi)(r)
    }

    pub fn tau(&self) -> Option<&RateFn> {
        self.tau.as_ref()
    }
}

impl fmt::Debug for ImpartialRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImpartialRate")
            .field("label", &self.label)
            .field("has_tau", &self.tau.is_some())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum RevisionProtocol {
    /// Brown-von Neumann-Nash: switch toward `s'` at rate `max(0, rho(s') - <rho, mu>)`.
    Bnn,
    /// Pairwise comparison with `phi(r) = max(0, r)`.
    Smith,
    ImpartialPairwise(ImpartialRate),
}

impl RevisionProtocol {
    pub fn name(&self) -> String {
        match self {
            RevisionProtocol::Bnn => "bnn".into(),
            RevisionProtocol::Smith => "smith".into(),
            RevisionProtocol::ImpartialPairwise(rate) => format!("impartial-pairwise {}", rate.label),
        }
    }

    pub fn is_pairwise(&self) -> bool {
        !matches!(self, RevisionProtocol::Bnn)
    }

    /// Pairwise rate `phi(rho_to - rho_from)`; `None` for BNN.
    pub fn pairwise_rate(&self, diff: f64) -> Option<f64> {
        match self {
            RevisionProtocol::Bnn => None,
            RevisionProtocol::Smith => Some(diff.max(0.0)),
            RevisionProtocol::ImpartialPairwise(rate) => Some(rate.phi(diff)),
        }
    }

    /// The antiderivative of the pairwise rate, when known in closed form.
    pub fn tau(&self, r: f64) -> Option<f64> {
        match self {
            RevisionProtocol::Bnn => None,
            RevisionProtocol::Smith => Some(0.5 * r.max(0.0).powi(2)),
            RevisionProtocol::ImpartialPairwise(rate) => rate.tau.as_ref().map(|t| t(r)),
        }
    }

    /// Switch rate from strategy `from` to `to` given payoffs and state.
    pub fn switch_rate(&self, x: &[f64], rho: &[f64], from: usize, to: usize) -> f64 {
        match self {
            RevisionProtocol::Bnn => (rho[to] - dot(rho, x)).max(0.0),
            _ => self.pairwise_rate(rho[to] - rho[from]).unwrap_or(0.0),
        }
    }
}

/// Writes `xdot_i = lambda_i sum_j rate(j -> i) x_j - x_i sum_j rate(i -> j) lambda_j` into `out`.
pub(crate) fn field_raw(
    protocol: &RevisionProtocol,
    x: &[f64],
    rho: &[f64],
    lambda: &[f64],
    out: &mut [f64],
) {
    match protocol {
        RevisionProtocol::Bnn => {
            let avg = dot(rho, x);
            let mut total = 0.0;
            for (o, (r, l)) in out.iter_mut().zip(rho.iter().zip(lambda)) {
                let inflow = l * (r - avg).max(0.0);
                total += inflow;
                *o = inflow;
            }
            for (o, xi) in out.iter_mut().zip(x) {
                *o -= xi * total;
            }
        }
        RevisionProtocol::Smith => pairwise_field(x, rho, lambda, out, |d| d.max(0.0)),
        RevisionProtocol::ImpartialPairwise(rate) => {
            let phi = &rate.phi;
            pairwise_field(x, rho, lambda, out, |d| phi(d))
        }
    }
}

fn pairwise_field(x: &[f64], rho: &[f64], lambda: &[f64], out: &mut [f64], phi: impl Fn(f64) -> f64) {
    for i in 0..x.len() {
        let ri = rho[i];
        let mut inflow = 0.0;
        let mut outflow = 0.0;
        for j in 0..x.len() {
            let d = ri - rho[j];
            inflow += x[j] * phi(d);
            outflow += lambda[j] * phi(-d);
        }
        out[i] = lambda[i] * inflow - x[i] * outflow;
    }
}

/// The mean-dynamics vector field at state `x` under payoff `rho`; a tangent vector.
pub fn mean_field(
    protocol: &RevisionProtocol,
    x: &DiscreteMeasure,
    rho: &PayoffVector,
    lambda: &ReferenceMeasure,
) -> Result<DiscreteMeasure> {
    ensure_same_grid(x.grid(), rho.grid())?;
    ensure_same_grid(x.grid(), lambda.grid())?;
    let mut out = vec![0.0; x.len()];
    field_raw(protocol, x.weights(), rho.values(), lambda.atoms(), &mut out);
    DiscreteMeasure::signed(x.grid(), out)
}

/// Checks `sign(phi(rho_j - rho_i)) == sign(max(0, rho_j - rho_i))` on random
/// payoff differences, including exact ties.
pub fn sign_preservation_check(protocol: &RevisionProtocol, trials: usize, seed: u64) -> Result<bool> {
    if !protocol.is_pairwise() {
        return Err(Error::UnsupportedProtocol(protocol.name()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..trials {
        let rho_i: f64 = rng.gen_range(-5.0..5.0);
        let rho_j: f64 = match k % 4 {
            0 => rho_i,
            1 => rho_i + rng.gen_range(1e-9..1e-3),
            2 => rho_i - rng.gen_range(1e-9..1e-3),
            _ => rng.gen_range(-5.0..5.0),
        };
        let rate = protocol.pairwise_rate(rho_j - rho_i).unwrap_or(0.0);
        let expected = (rho_j - rho_i).max(0.0);
        let sign = |v: f64| if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 };
        if !rate.is_finite() || sign(rate) != sign(expected) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    Euler,
    #[default]
    Rk4,
}

/// Time grid of a fixed-step run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_end: f64,
    pub dt: f64,
    pub method: Method,
    /// Record a sample every this many steps (t = 0 and t_end are always recorded).
    pub sample_every: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, dt: f64, method: Method, sample_every: usize) -> Result<Self> {
        let tg = Self {
            t_end,
            dt,
            method,
            sample_every,
        };
        tg.validate()?;
        Ok(tg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::param("time.t_end", format!("must be positive, got {}", self.t_end)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param("time.dt", format!("must be positive, got {}", self.dt)));
        }
        if self.sample_every == 0 {
            return Err(Error::param("time.sample_every", "must be at least 1"));
        }
        Ok(())
    }

    /// Number of steps; the last one is shortened to land on `t_end`.
    pub fn steps(&self) -> usize {
        ((self.t_end / self.dt) - 1e-9).ceil().max(1.0) as usize
    }

    fn step_size(&self, k: usize) -> f64 {
        let n = self.steps();
        if k + 1 == n {
            self.t_end - (n - 1) as f64 * self.dt
        } else {
            self.dt
        }
    }

    fn time_after(&self, k: usize) -> f64 {
        if k + 1 >= self.steps() {
            self.t_end
        } else {
            (k + 1) as f64 * self.dt
        }
    }
}

/// Per-sample scalar diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleDiagnostics {
    /// Nash gap of the state against the game payoff `F(mu)`.
    pub nash_gap: f64,
    /// Storage of the protocol evaluated at the payoff input driving the dynamics
    /// (NaN when the protocol has no closed-form storage).
    pub storage: f64,
    pub sigma: f64,
    pub mass_error: f64,
}

/// Counters accumulated over every field evaluation and step of a run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntegrationStats {
    pub field_evaluations: usize,
    /// Largest `|sum_i field_i|` seen.
    pub max_field_mass: f64,
    /// Largest `|sum_i x_i - 1|` before the guard renormalized.
    pub max_mass_drift: f64,
    /// Most negative weight clamped by the guard (0 if none).
    pub min_clamped_weight: f64,
    pub renormalizations: usize,
    /// Extra internal steps taken to keep `h * rate` inside the stability region.
    pub extra_substeps: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DiscreteMeasure>,
    /// The payoff input at each sample (equal to `F(mu)` under static feedback).
    pub payoffs: Vec<PayoffVector>,
    pub diagnostics: Vec<SampleDiagnostics>,
    pub stats: IntegrationStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &DiscreteMeasure {
        self.states.last().expect("trajectory always holds t = 0")
    }

    pub fn grid(&self) -> &Arc<StrategyGrid> {
        self.states[0].grid()
    }
}

/// Applies the simplex guard in place, returning the pre-guard mass drift.
fn guard(x: &mut [f64], t: f64, stats: &mut IntegrationStats) -> Result<()> {
    for (i, w) in x.iter_mut().enumerate() {
        if !w.is_finite() {
            return Err(Error::NonFinite { t });
        }
        if *w < -NEGATIVE_TOL {
            return Err(Error::NegativeWeight { index: i, weight: *w, t });
        }
        if *w < 0.0 {
            stats.min_clamped_weight = stats.min_clamped_weight.min(*w);
            *w = 0.0;
        } else if *w < f64::MIN_POSITIVE {
            // Subnormal weights carry no mass worth keeping and slow every later operation.
            *w = 0.0;
        }
    }
    let total: f64 = x.iter().sum();
    let drift = (total - 1.0).abs();
    stats.max_mass_drift = stats.max_mass_drift.max(drift);
    if drift > RENORMALIZE_TOL {
        stats.renormalizations += 1;
        for w in x.iter_mut() {
            *w /= total;
        }
    }
    Ok(())
}

/// One explicit step of `y' = f(y)` on a flat state vector.
fn integrate_step<F>(f: &mut F, y: &mut [f64], h: f64, method: Method, t: f64, scratch: &mut Scratch) -> Result<()>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = y.len();
    let check = |v: &[f64]| -> Result<()> {
        if v.iter().all(|a| a.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { t })
        }
    };
    match method {
        Method::Euler => {
            f(y, &mut scratch.k1);
            check(&scratch.k1)?;
            for i in 0..n {
                y[i] += h * scratch.k1[i];
            }
        }
        Method::Rk4 => {
            let Scratch { k1, k2, k3, k4, tmp } = scratch;
            f(y, k1);
            check(k1)?;
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k1[i];
            }
            f(tmp, k2);
            check(k2)?;
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k2[i];
            }
            f(tmp, k3);
            check(k3)?;
            for i in 0..n {
                tmp[i] = y[i] + h * k3[i];
            }
            f(tmp, k4);
            check(k4)?;
            for i in 0..n {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
    Ok(())
}

struct Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

/// Largest total switch-away rate `sum_j lambda_j rate(i -> j)` over strategies.
fn outflow_bound(protocol: &RevisionProtocol, x: &[f64], rho: &[f64], lambda: &[f64]) -> f64 {
    match protocol {
        RevisionProtocol::Bnn => {
            let avg = dot(rho, x);
            rho.iter().zip(lambda).map(|(r, l)| l * (r - avg).max(0.0)).sum()
        }
        _ => rho
            .iter()
            .map(|ri| {
                lambda
                    .iter()
                    .zip(rho)
                    .map(|(l, rj)| l * protocol.pairwise_rate(rj - ri).unwrap_or(0.0))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max),
    }
}

/// Number of equal substeps splitting a step of size `h` so that each keeps
/// `h * rate` at most 1 (RK4) or 1/2 (Euler).
fn substeps(h: f64, rate: f64, method: Method) -> usize {
    let limit = match method {
        Method::Rk4 => 1.0,
        Method::Euler => 0.5,
    };
    let m = (h * rate / limit).ceil();
    if m.is_finite() && m > 1.0 {
        (m as usize).min(1 << 20)
    } else {
        1
    }
}

/// One step of `x' = mean_field(x, rho(x))` followed by the simplex guard.
///
/// `rho_provider` maps the (stage) state weights to the payoff input.
pub fn step(
    protocol: &RevisionProtocol,
    lambda: &ReferenceMeasure,
    x: &DiscreteMeasure,
    rho_provider: impl Fn(&[f64]) -> Vec<f64>,
    dt: f64,
    method: Method,
) -> Result<DiscreteMeasure> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::param("time.dt", format!("must be positive, got {dt}")));
    }
    ensure_same_grid(x.grid(), lambda.grid())?;
    let mut y = x.weights().to_vec();
    let mut scratch = Scratch::new(y.len());
    let lam = lambda.atoms();
    let mut f = |state: &[f64], out: &mut [f64]| {
        let rho = rho_provider(state);
        if rho.len() != state.len() || rho.iter().any(|r| !r.is_finite()) {
            // Surfaces as a non-finite field below.
            out.fill(f64::NAN);
            return;
        }
        field_raw(protocol, state, &rho, lam, out);
    };
    integrate_step(&mut f, &mut y, dt, method, 0.0, &mut scratch)?;
    guard(&mut y, dt, &mut IntegrationStats::default())?;
    DiscreteMeasure::probability(x.grid(), y)
}

fn check_setup(kernel: &PayoffKernel, lambda: &ReferenceMeasure, x0: &DiscreteMeasure) -> Result<()> {
    ensure_same_grid(kernel.grid(), lambda.grid())?;
    ensure_same_grid(kernel.grid(), x0.grid())?;
    if x0.kind() != crate::measure::MeasureKind::Probability {
        return Err(Error::KindMismatch {
            expected: "probability",
        });
    }
    Ok(())
}

fn sample(
    kernel: &PayoffKernel,
    protocol: &RevisionProtocol,
    lambda: &ReferenceMeasure,
    x: &[f64],
    rho: &[f64],
) -> Result<(DiscreteMeasure, PayoffVector, SampleDiagnostics)> {
    let grid = kernel.grid();
    let mu = DiscreteMeasure::probability(grid, x.to_vec())?;
    let rho = PayoffVector::new(grid, rho.to_vec())?;
    let game_payoff = kernel.evaluate(&mu)?;
    let nash_gap = diagnostics::nash_gap(&mu, &game_payoff)?;
    let storage = diagnostics::storage(protocol, &mu, &rho, lambda).unwrap_or(f64::NAN);
    let sigma = diagnostics::dissipation_rate(protocol, &mu, &rho, lambda).unwrap_or(f64::NAN);
    let d = SampleDiagnostics {
        nash_gap,
        storage,
        sigma,
        mass_error: (mu.mass() - 1.0).abs(),
    };
    Ok((mu, rho, d))
}

/// Integrates the closed loop `mu' = v(mu, F(mu))`; payoffs are recomputed at every stage.
pub fn simulate_edm(
    kernel: &PayoffKernel,
    protocol: &RevisionProtocol,
    lambda: &ReferenceMeasure,
    x0: &DiscreteMeasure,
    time: TimeGrid,
) -> Result<Trajectory> {
    time.validate()?;
    check_setup(kernel, lambda, x0)?;
    let n = x0.len();
    let lam = lambda.atoms();
    let mut stats = IntegrationStats::default();
    let mut rho_buf = vec![0.0; n];
    let mut f = |state: &[f64], out: &mut [f64], stats: &mut IntegrationStats| {
        kernel.apply_into(state, &mut rho_buf);
        field_raw(protocol, state, &rho_buf, lam, out);
        stats.field_evaluations += 1;
        stats.max_field_mass = stats.max_field_mass.max(out.iter().sum::<f64>().abs());
    };

    let mut y = x0.weights().to_vec();
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        payoffs: Vec::new(),
        diagnostics: Vec::new(),
        stats,
    };
    let push = |traj: &mut Trajectory, t: f64, y: &[f64]| -> Result<()> {
        let rho = kernel.apply(y);
        let (mu, rho, d) = sample(kernel, protocol, lambda, y, &rho)?;
        traj.times.push(t);
        traj.states.push(mu);
        traj.payoffs.push(rho);
        traj.diagnostics.push(d);
        Ok(())
    };
    push(&mut traj, 0.0, &y)?;

    let mut scratch = Scratch::new(n);
    let mut rho_probe = vec![0.0; n];
    let steps = time.steps();
    for k in 0..steps {
        let h = time.step_size(k);
        let t_next = time.time_after(k);
        kernel.apply_into(&y, &mut rho_probe);
        let m = substeps(h, outflow_bound(protocol, &y, &rho_probe, lam), time.method);
        stats.extra_substeps += m - 1;
        for _ in 0..m {
            {
                let mut g = |s: &[f64], o: &mut [f64]| f(s, o, &mut stats);
                integrate_step(&mut g, &mut y, h / m as f64, time.method, t_next, &mut scratch)?;
            }
            guard(&mut y, t_next, &mut stats)?;
        }
        if (k + 1) % time.sample_every == 0 || k + 1 == steps {
            push(&mut traj, t_next, &y)?;
        }
    }
    traj.stats = stats;
    Ok(traj)
}

/// Smoothing rate of the payoff filter `rho' = lambda_s (F(mu) - rho)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    pub lambda_s: f64,
}

impl SmoothingConfig {
    pub fn new(lambda_s: f64) -> Result<Self> {
        if !(lambda_s.is_finite() && lambda_s > 0.0) {
            return Err(Error::param(
                "feedback.lambda_s",
                format!("must be positive, got {lambda_s}"),
            ));
        }
        Ok(Self { lambda_s })
    }
}

/// Integrates the coupled system `mu' = v(mu, rho)`, `rho' = lambda_s (F(mu) - rho)`.
pub fn simulate_dpedm(
    kernel: &PayoffKernel,
    protocol: &RevisionProtocol,
    lambda: &ReferenceMeasure,
    smoothing: SmoothingConfig,
    x0: &DiscreteMeasure,
    rho0: &PayoffVector,
    time: TimeGrid,
) -> Result<Trajectory> {
    time.validate()?;
    SmoothingConfig::new(smoothing.lambda_s)?;
    check_setup(kernel, lambda, x0)?;
    ensure_same_grid(kernel.grid(), rho0.grid())?;
    let n = x0.len();
    let lam = lambda.atoms();
    let ls = smoothing.lambda_s;
    let mut stats = IntegrationStats::default();
    let mut fx = vec![0.0; n];
    let mut f = |state: &[f64], out: &mut [f64], stats: &mut IntegrationStats| {
        let (x, rho) = state.split_at(n);
        let (ox, orho) = out.split_at_mut(n);
        field_raw(protocol, x, rho, lam, ox);
        kernel.apply_into(x, &mut fx);
        for i in 0..n {
            orho[i] = ls * (fx[i] - rho[i]);
        }
        stats.field_evaluations += 1;
        stats.max_field_mass = stats.max_field_mass.max(ox.iter().sum::<f64>().abs());
    };

    let mut y = Vec::with_capacity(2 * n);
    y.extend_from_slice(x0.weights());
    y.extend_from_slice(rho0.values());
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        payoffs: Vec::new(),
        diagnostics: Vec::new(),
        stats,
    };
    let push = |traj: &mut Trajectory, t: f64, y: &[f64]| -> Result<()> {
        let (mu, rho, d) = sample(kernel, protocol, lambda, &y[..n], &y[n..])?;
        traj.times.push(t);
        traj.states.push(mu);
        traj.payoffs.push(rho);
        traj.diagnostics.push(d);
        Ok(())
    };
    push(&mut traj, 0.0, &y)?;

    let mut scratch = Scratch::new(2 * n);
    let steps = time.steps();
    for k in 0..steps {
        let h = time.step_size(k);
        let t_next = time.time_after(k);
        let rate = outflow_bound(protocol, &y[..n], &y[n..], lam).max(ls);
        let m = substeps(h, rate, time.method);
        stats.extra_substeps += m - 1;
        for _ in 0..m {
            {
                let mut g = |s: &[f64], o: &mut [f64]| f(s, o, &mut stats);
                integrate_step(&mut g, &mut y, h / m as f64, time.method, t_next, &mut scratch)?;
            }
            guard(&mut y[..n], t_next, &mut stats)?;
            if y[n..].iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { t: t_next });
            }
        }
        if (k + 1) % time.sample_every == 0 || k + 1 == steps {
            push(&mut traj, t_next, &y)?;
        }
    }
    traj.stats = stats;
    Ok(traj)
}
