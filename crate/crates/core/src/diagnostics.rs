//! Nash-equilibrium checks and the storage / dissipation / supply quantities
//! certifying that BNN and impartial pairwise dynamics are passive.

use crate::dynamics::{field_raw, mean_field, RevisionProtocol, Trajectory};
use crate::error::{Error, Result};
use crate::game::PayoffKernel;
use crate::grid::{ensure_same_grid, ReferenceMeasure};
use crate::measure::{dot, pairing, DiscreteMeasure, PayoffVector};

/// Mass above which a grid point counts as part of the support in Nash checks.
pub const SUPPORT_TOL: f64 = 1e-9;
/// Ratio between the Nash tolerance and the rest-point tolerance when the
/// two checks are compared.
pub const REST_NASH_TOL_RATIO: f64 = 100.0;

/// `max_s rho(s) - <rho, mu>`.
pub fn nash_gap(mu: &DiscreteMeasure, rho: &PayoffVector) -> Result<f64> {
    let avg = pairing(rho, mu)?;
    Ok(rho.max() - avg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NashViolation {
    /// Index of the better reply.
    pub strategy: usize,
    /// Index of the support point it beats.
    pub support_strategy: usize,
    pub amount: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NashCheck {
    pub holds: bool,
    /// The largest `rho(s) - rho(s')` over grid `s` and support `s'`.
    pub worst: Option<NashViolation>,
}

/// Support form of the Nash condition: `rho(s) <= rho(s') + tol` for every
/// grid point `s` and every support point `s'`.
pub fn nash_check(mu: &DiscreteMeasure, rho: &PayoffVector, tol: f64) -> Result<NashCheck> {
    ensure_same_grid(mu.grid(), rho.grid())?;
    if !(tol >= 0.0) {
        return Err(Error::param("tol", "must be nonnegative"));
    }
    let values = rho.values();
    let best = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let worst_support = mu
        .support(SUPPORT_TOL)
        .into_iter()
        .map(|j| (j, values[j]))
        .fold(None, |acc: Option<(usize, f64)>, (j, v)| match acc {
            Some((_, w)) if w <= v => acc,
            _ => Some((j, v)),
        });
    let Some((j, v)) = worst_support else {
        return Ok(NashCheck { holds: true, worst: None });
    };
    let amount = best.1 - v;
    Ok(NashCheck {
        holds: amount <= tol,
        worst: Some(NashViolation {
            strategy: best.0,
            support_strategy: j,
            amount,
        }),
    })
}

/// BNN excess payoffs `max(0, rho_i - <rho, mu>)`.
fn excess(mu: &[f64], rho: &[f64]) -> Vec<f64> {
    let avg = dot(rho, mu);
    rho.iter().map(|r| (r - avg).max(0.0)).collect()
}

/// `1/2 sum_i lambda_i max(0, rho_i - <rho, mu>)^2`.
pub fn bnn_storage(mu: &DiscreteMeasure, rho: &PayoffVector, lambda: &ReferenceMeasure) -> Result<f64> {
    ensure_same_grid(mu.grid(), rho.grid())?;
    ensure_same_grid(mu.grid(), lambda.grid())?;
    Ok(bnn_storage_raw(mu.weights(), rho.values(), lambda.atoms()))
}

fn bnn_storage_raw(mu: &[f64], rho: &[f64], lambda: &[f64]) -> f64 {
    0.5 * excess(mu, rho)
        .iter()
        .zip(lambda)
        .map(|(e, l)| l * e * e)
        .sum::<f64>()
}

/// `sum_i mu_i sum_j lambda_j tau(rho_j - rho_i)`; linear in `mu`, so it also
/// accepts signed measures.
pub fn pc_storage(
    mu: &DiscreteMeasure,
    rho: &PayoffVector,
    lambda: &ReferenceMeasure,
    tau: impl Fn(f64) -> f64,
) -> Result<f64> {
    ensure_same_grid(mu.grid(), rho.grid())?;
    ensure_same_grid(mu.grid(), lambda.grid())?;
    Ok(pc_storage_raw(mu.weights(), rho.values(), lambda.atoms(), tau))
}

fn pc_storage_raw(mu: &[f64], rho: &[f64], lambda: &[f64], tau: impl Fn(f64) -> f64) -> f64 {
    mu.iter()
        .zip(rho)
        .filter(|(m, _)| **m != 0.0)
        .map(|(m, ri)| m * lambda.iter().zip(rho).map(|(l, rj)| l * tau(rj - ri)).sum::<f64>())
        .sum()
}

fn tau_of(protocol: &RevisionProtocol) -> Result<impl Fn(f64) -> f64 + '_> {
    if protocol.tau(0.0).is_none() {
        return Err(Error::UnsupportedProtocol(format!(
            "{} (no closed-form rate antiderivative)",
            protocol.name()
        )));
    }
    Ok(move |r| protocol.tau(r).unwrap_or(f64::NAN))
}

/// Storage function of the protocol at `(mu, rho)`.
pub fn storage(
    protocol: &RevisionProtocol,
    mu: &DiscreteMeasure,
    rho: &PayoffVector,
    lambda: &ReferenceMeasure,
) -> Result<f64> {
    match protocol {
        RevisionProtocol::Bnn => bnn_storage(mu, rho, lambda),
        _ => pc_storage(mu, rho, lambda, tau_of(protocol)?),
    }
}

/// Dissipation rate `sigma(mu, rho)`.
///
/// BNN: `<rho, v> * sum_i lambda_i e_i` with `e_i = max(0, rho_i - <rho, mu>)`,
/// evaluated as `(sum_i lambda_i e_i^2) (sum_i lambda_i e_i)`.
/// Pairwise: minus the storage extended linearly to the field `v`, evaluated
/// as `sum_{i,j} mu_j lambda_i phi(rho_i - rho_j) (T_j - T_i)` with
/// `T_i = sum_k lambda_k tau(rho_k - rho_i)`. Both forms are sums of
/// nonnegative terms, so the sign survives rounding.
pub fn dissipation_rate(
    protocol: &RevisionProtocol,
    mu: &DiscreteMeasure,
    rho: &PayoffVector,
    lambda: &ReferenceMeasure,
) -> Result<f64> {
    ensure_same_grid(mu.grid(), rho.grid())?;
    ensure_same_grid(mu.grid(), lambda.grid())?;
    let (x, r, l) = (mu.weights(), rho.values(), lambda.atoms());
    match protocol {
        RevisionProtocol::Bnn => {
            let e = excess(x, r);
            let first: f64 = e.iter().zip(l).map(|(ei, li)| li * ei).sum();
            let second: f64 = e.iter().zip(l).map(|(ei, li)| li * ei * ei).sum();
            Ok(first * second)
        }
        _ => {
            let tau = tau_of(protocol)?;
            // Summed in a fixed order, so T is monotone in rho_i even after rounding.
            let t: Vec<f64> = r
                .iter()
                .map(|ri| l.iter().zip(r).map(|(lk, rk)| lk * tau(rk - ri)).sum())
                .collect();
            let mut sigma = 0.0;
            for (j, xj) in x.iter().enumerate() {
                if *xj == 0.0 {
                    continue;
                }
                let inner: f64 = (0..r.len())
                    .map(|i| {
                        let rate = protocol.pairwise_rate(r[i] - r[j]).unwrap_or(0.0);
                        if rate > 0.0 {
                            l[i] * rate * (t[j] - t[i])
                        } else {
                            0.0
                        }
                    })
                    .sum();
                sigma += xj * inner;
            }
            Ok(sigma)
        }
    }
}

/// Directional derivative of the storage at `(mu, rho)` along `(d_mu, d_rho)`,
/// from the closed-form partial derivatives.
pub fn storage_derivative(
    protocol: &RevisionProtocol,
    mu: &DiscreteMeasure,
    rho: &PayoffVector,
    lambda: &ReferenceMeasure,
    d_mu: &DiscreteMeasure,
    d_rho: &PayoffVector,
) -> Result<f64> {
    for g in [rho.grid(), lambda.grid(), d_mu.grid(), d_rho.grid()] {
        ensure_same_grid(mu.grid(), g)?;
    }
    let (m, r, l, eta) = (mu.weights(), rho.values(), lambda.atoms(), d_rho.values());
    match protocol {
        RevisionProtocol::Bnn => {
            let e = excess(m, r);
            let mass = dot(&e, l);
            let d1 = -dot(r, d_mu.weights()) * mass;
            let eta_avg = dot(eta, m);
            let d2: f64 = e
                .iter()
                .zip(l)
                .zip(eta)
                .map(|((ei, li), ni)| li * ei * (ni - eta_avg))
                .sum();
            Ok(d1 + d2)
        }
        _ => {
            let d1 = pc_storage_raw(d_mu.weights(), r, l, tau_of(protocol)?);
            let mut d2 = 0.0;
            for i in 0..m.len() {
                if m[i] == 0.0 {
                    continue;
                }
                let inner: f64 = (0..m.len())
                    .map(|j| l[j] * protocol.pairwise_rate(r[j] - r[i]).unwrap_or(0.0) * (eta[j] - eta[i]))
                    .sum();
                d2 += m[i] * inner;
            }
            Ok(d1 + d2)
        }
    }
}

/// `w(nu, eta) = <eta, nu>`.
pub fn supply_rate(nu: &DiscreteMeasure, eta: &PayoffVector) -> Result<f64> {
    pairing(eta, nu)
}

/// `<F(v), v>`: the supply delivered by a linear game along the field `v`.
pub fn closed_loop_supply(kernel: &PayoffKernel, v: &DiscreteMeasure) -> Result<f64> {
    kernel.bilinear_form(v, v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipativityReport {
    pub storage: f64,
    pub dissipation_sigma: f64,
    pub supply_w: f64,
    /// Closed-form derivative of the storage along `(v(mu, rho), eta)`.
    pub derivative: f64,
    /// Central finite difference of the same derivative.
    pub fd_derivative: f64,
    /// `-sigma + w - derivative`; zero for a passive protocol.
    pub slack: f64,
}

pub fn dissipativity_report(
    protocol: &RevisionProtocol,
    mu: &DiscreteMeasure,
    rho: &PayoffVector,
    eta: &PayoffVector,
    lambda: &ReferenceMeasure,
) -> Result<DissipativityReport> {
    let v = mean_field(protocol, mu, rho, lambda)?;
    let s = storage(protocol, mu, rho, lambda)?;
    let sigma = dissipation_rate(protocol, mu, rho, lambda)?;
    let w = supply_rate(&v, eta)?;
    let derivative = storage_derivative(protocol, mu, rho, lambda, &v, eta)?;

    // The storage is only C^1 where an excess crosses zero, so the error is O(h) there.
    let h = 1e-8;
    let shifted = |c: f64| -> Result<f64> {
        let m = DiscreteMeasure::signed(
            mu.grid(),
            mu.weights().iter().zip(v.weights()).map(|(a, b)| a + c * b).collect(),
        )?;
        let r = PayoffVector::new(
            rho.grid(),
            rho.values().iter().zip(eta.values()).map(|(a, b)| a + c * b).collect(),
        )?;
        let raw = match protocol {
            RevisionProtocol::Bnn => bnn_storage_raw(m.weights(), r.values(), lambda.atoms()),
            _ => pc_storage_raw(m.weights(), r.values(), lambda.atoms(), tau_of(protocol)?),
        };
        Ok(raw)
    };
    let fd = (shifted(h)? - shifted(-h)?) / (2.0 * h);
    Ok(DissipativityReport {
        storage: s,
        dissipation_sigma: sigma,
        supply_w: w,
        derivative,
        fd_derivative: fd,
        slack: -sigma + w - derivative,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageTraceReport {
    /// Storage `V(t_k)` along the trajectory, evaluated at `rho = F(mu)`.
    pub storage: Vec<f64>,
    /// Largest `V(t_{k+1}) - V(t_k)`.
    pub max_increase: f64,
    /// Largest gap between a central difference of `V` and `-sigma + <F(v), v>`.
    pub energy_balance_residual: f64,
    pub monotonicity_max: f64,
}

/// Lyapunov check of a static-feedback trajectory: the storage should not
/// increase, and its rate should match `-sigma + <F(v), v>`.
pub fn storage_trace_check(
    trajectory: &Trajectory,
    protocol: &RevisionProtocol,
    kernel: &PayoffKernel,
    lambda: &ReferenceMeasure,
) -> Result<StorageTraceReport> {
    let mono = kernel.monotonicity_test(200, 0)?;
    if !mono.monotone {
        return Err(Error::NotMonotone {
            value: mono.max_value,
        });
    }
    let mut storage_values = Vec::with_capacity(trajectory.len());
    let mut rates = Vec::with_capacity(trajectory.len());
    for mu in &trajectory.states {
        let rho = kernel.evaluate(mu)?;
        storage_values.push(storage(protocol, mu, &rho, lambda)?);
        let v = mean_field(protocol, mu, &rho, lambda)?;
        let sigma = dissipation_rate(protocol, mu, &rho, lambda)?;
        rates.push(-sigma + closed_loop_supply(kernel, &v)?);
    }
    let max_increase = storage_values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let t = &trajectory.times;
    let mut residual: f64 = 0.0;
    for k in 1..t.len().saturating_sub(1) {
        let (back, fwd) = (t[k] - t[k - 1], t[k + 1] - t[k]);
        if (back - fwd).abs() > 1e-9 * back {
            continue;
        }
        let fd = (storage_values[k + 1] - storage_values[k - 1]) / (t[k + 1] - t[k - 1]);
        residual = residual.max((fd - rates[k]).abs());
    }
    Ok(StorageTraceReport {
        storage: storage_values,
        max_increase: if max_increase.is_finite() { max_increase } else { 0.0 },
        energy_balance_residual: residual,
        monotonicity_max: mono.max_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestPointReport {
    pub is_rest: bool,
    /// `||v(mu, F(mu))||_TV`.
    pub field_tv: f64,
    /// Nash check at `REST_NASH_TOL_RATIO * tol`.
    pub nash_holds: bool,
    pub agrees: bool,
}

pub fn rest_point_check(
    mu: &DiscreteMeasure,
    kernel: &PayoffKernel,
    protocol: &RevisionProtocol,
    lambda: &ReferenceMeasure,
    tol: f64,
) -> Result<RestPointReport> {
    if !(tol >= 0.0) {
        return Err(Error::param("tol", "must be nonnegative"));
    }
    let rho = kernel.evaluate(mu)?;
    let field_tv = mean_field(protocol, mu, &rho, lambda)?.tv_norm();
    let is_rest = field_tv <= tol;
    let nash_holds = nash_check(mu, &rho, REST_NASH_TOL_RATIO * tol)?.holds;
    Ok(RestPointReport {
        is_rest,
        field_tv,
        nash_holds,
        agrees: is_rest == nash_holds,
    })
}

/// `h(eta) = <F((1 - eta) mu + eta nu), nu - mu>`.
pub fn score_function(kernel: &PayoffKernel, nu: &DiscreteMeasure, mu: &DiscreteMeasure, eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::param("eta", format!("must lie in (0, 1], got {eta}")));
    }
    let mix = mu.combine(1.0 - eta, nu, eta)?;
    let f = kernel.evaluate(&mix)?;
    pairing(&f, &nu.sub(mu)?)
}

/// `||v(x, rho)||_TV` on raw slices; used by the acceptance checks.
pub fn field_tv_raw(protocol: &RevisionProtocol, x: &[f64], rho: &[f64], lambda: &[f64]) -> f64 {
    let mut out = vec![0.0; x.len()];
    field_raw(protocol, x, rho, lambda, &mut out);
    out.iter().map(|v| v.abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ImpartialRate, Method, TimeGrid};
    use crate::grid::StrategyGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn two() -> (Arc<StrategyGrid>, ReferenceMeasure) {
        let g = StrategyGrid::uniform(2, 0.0, 1.0).unwrap();
        let l = ReferenceMeasure::uniform(&g);
        (g, l)
    }

    fn cosine_setup() -> (Arc<StrategyGrid>, PayoffKernel) {
        let g = StrategyGrid::uniform(9, 0.0, 2.0).unwrap(); // contains 0, .5, 1, 1.5, 2
        let k = PayoffKernel::cosine(&g);
        (g, k)
    }

    fn mix_of(g: &Arc<StrategyGrid>, pts: &[(usize, f64)]) -> DiscreteMeasure {
        let mut w = vec![0.0; g.len()];
        for &(i, m) in pts {
            w[i] = m;
        }
        DiscreteMeasure::probability(g, w).unwrap()
    }

    #[test]
    fn nash_gap_examples() {
        let (g, k) = cosine_setup();
        let third = mix_of(&g, &[(0, 1.0 / 3.0), (4, 1.0 / 3.0), (8, 1.0 / 3.0)]);
        assert!(nash_gap(&third, &k.evaluate(&third).unwrap()).unwrap().abs() < 1e-12);
        let half = DiscreteMeasure::dirac(&g, 2).unwrap();
        assert!((nash_gap(&half, &k.evaluate(&half).unwrap()).unwrap() - 2.0).abs() < 1e-12);
        let c = PayoffVector::constant(&g, 1.5);
        assert!(nash_gap(&DiscreteMeasure::random(&g, 1), &c).unwrap().abs() < 1e-15);
    }

    #[test]
    fn nash_check_examples() {
        let (g, k) = cosine_setup();
        let half = mix_of(&g, &[(0, 0.5), (8, 0.5)]);
        assert!(nash_check(&half, &k.evaluate(&half).unwrap(), 1e-12).unwrap().holds);
        let u = DiscreteMeasure::uniform(&g);
        let check = nash_check(&u, &k.evaluate(&u).unwrap(), 1e-12).unwrap();
        assert!(!check.holds);
        let worst = check.worst.unwrap();
        assert!(worst.amount > 1.0);
        let c = PayoffVector::constant(&g, -3.0);
        assert!(nash_check(&DiscreteMeasure::random(&g, 2), &c, 0.0).unwrap().holds);
    }

    #[test]
    fn bnn_storage_examples() {
        let (g, l) = two();
        let mu = DiscreteMeasure::uniform(&g);
        let rho = PayoffVector::new(&g, vec![1.0, 0.0]).unwrap();
        assert!((bnn_storage(&mu, &rho, &l).unwrap() - 0.0625).abs() < 1e-15);
        assert_eq!(bnn_storage(&mu, &PayoffVector::constant(&g, 2.0), &l).unwrap(), 0.0);
    }

    #[test]
    fn pc_storage_examples() {
        let (g, l) = two();
        let mu = DiscreteMeasure::dirac(&g, 0).unwrap();
        let rho = PayoffVector::new(&g, vec![0.0, 1.0]).unwrap();
        let smith = RevisionProtocol::Smith;
        assert!((storage(&smith, &mu, &rho, &l).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(storage(&smith, &mu, &PayoffVector::constant(&g, 1.0), &l).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g5 = StrategyGrid::uniform(5, 0.0, 1.0).unwrap();
        let l5 = ReferenceMeasure::uniform(&g5);
        for seed in 0..50 {
            let m = DiscreteMeasure::random(&g5, seed);
            let r = PayoffVector::new(&g5, (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            assert!(storage(&smith, &m, &r, &l5).unwrap() >= 0.0);
        }
        let no_tau = RevisionProtocol::ImpartialPairwise(ImpartialRate::new("one", Arc::new(|r: f64| r.max(0.0))));
        assert!(matches!(storage(&no_tau, &mu, &rho, &l), Err(Error::UnsupportedProtocol(_))));
    }

    #[test]
    fn dissipation_examples() {
        let (g, l) = two();
        let mu = DiscreteMeasure::uniform(&g);
        let rho = PayoffVector::new(&g, vec![1.0, 0.0]).unwrap();
        assert!((dissipation_rate(&RevisionProtocol::Bnn, &mu, &rho, &l).unwrap() - 0.03125).abs() < 1e-15);
        let x = DiscreteMeasure::dirac(&g, 0).unwrap();
        let rho = PayoffVector::new(&g, vec![0.0, 1.0]).unwrap();
        assert!((dissipation_rate(&RevisionProtocol::Smith, &x, &rho, &l).unwrap() - 0.125).abs() < 1e-15);
        let c = PayoffVector::constant(&g, 0.4);
        for p in [RevisionProtocol::Bnn, RevisionProtocol::Smith] {
            assert_eq!(dissipation_rate(&p, &mu, &c, &l).unwrap(), 0.0);
        }
    }

    #[test]
    fn supply_examples() {
        let (g, _) = two();
        let eta = PayoffVector::new(&g, vec![1.0, 0.0]).unwrap();
        assert_eq!(supply_rate(&DiscreteMeasure::zero(&g), &eta).unwrap(), 0.0);
        let nu = DiscreteMeasure::signed(&g, vec![0.5, -0.5]).unwrap();
        assert_eq!(supply_rate(&nu, &PayoffVector::constant(&g, 3.0)).unwrap(), 0.0);
        assert_eq!(supply_rate(&nu, &eta).unwrap(), 0.5);

        let id = PayoffKernel::from_rows(&g, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((closed_loop_supply(&id, &nu).unwrap() - 0.5).abs() < 1e-15);
        let (g9, cos) = cosine_setup();
        let v = DiscreteMeasure::random(&g9, 1).sub(&DiscreteMeasure::random(&g9, 2)).unwrap();
        assert!(closed_loop_supply(&cos, &v).unwrap().abs() < 1e-15);
        let cw = PayoffKernel::continuous_war(1.0, Default::default(), &g9).unwrap();
        assert!(closed_loop_supply(&cw, &v).unwrap() <= 0.0);
    }

    #[test]
    fn closed_form_derivative_matches_finite_difference() {
        let g = StrategyGrid::uniform(12, 0.0, 2.0).unwrap();
        let l = ReferenceMeasure::uniform(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let protocols = [
            RevisionProtocol::Bnn,
            RevisionProtocol::Smith,
            RevisionProtocol::ImpartialPairwise(ImpartialRate::power(2.0, 0.5).unwrap()),
        ];
        for seed in 0..40 {
            let mu = DiscreteMeasure::random(&g, seed);
            let rho = PayoffVector::new(&g, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let eta = PayoffVector::new(&g, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            for p in &protocols {
                let r = dissipativity_report(p, &mu, &rho, &eta, &l).unwrap();
                assert!((r.derivative - r.fd_derivative).abs() < 1e-7, "{} {:?}", p.name(), r);
                assert!(r.slack.abs() < 1e-12, "{} {:?}", p.name(), r);
                assert!(r.storage >= 0.0 && r.dissipation_sigma >= -1e-15);
            }
        }
    }

    #[test]
    fn rest_point_examples() {
        let (g, k) = cosine_setup();
        let l = ReferenceMeasure::uniform(&g);
        let half = mix_of(&g, &[(0, 0.5), (8, 0.5)]);
        for p in [RevisionProtocol::Bnn, RevisionProtocol::Smith] {
            let r = rest_point_check(&half, &k, &p, &l, 1e-12).unwrap();
            assert!(r.is_rest && r.nash_holds && r.agrees);
            let u = DiscreteMeasure::uniform(&g);
            let r = rest_point_check(&u, &k, &p, &l, 1e-12).unwrap();
            assert!(!r.is_rest && !r.nash_holds && r.agrees);
            let z = PayoffKernel::zero(&g);
            assert!(rest_point_check(&DiscreteMeasure::random(&g, 3), &z, &p, &l, 0.0).unwrap().is_rest);
        }
    }

    #[test]
    fn score_function_examples() {
        let (g, k) = cosine_setup();
        let mu = DiscreteMeasure::dirac(&g, 0).unwrap();
        let nu = DiscreteMeasure::dirac(&g, 2).unwrap();
        for eta in [0.1, 0.5, 1.0] {
            assert!((score_function(&k, &nu, &mu, eta).unwrap() + 2.0).abs() < 1e-12);
            assert_eq!(score_function(&k, &mu, &mu, eta).unwrap(), 0.0);
        }
        // Small eta approaches <F(mu), nu - mu>.
        let a = DiscreteMeasure::random(&g, 1);
        let b = DiscreteMeasure::random(&g, 2);
        let limit = pairing(&k.evaluate(&a).unwrap(), &b.sub(&a).unwrap()).unwrap();
        assert!((score_function(&k, &b, &a, 1e-9).unwrap() - limit).abs() < 1e-8);
        assert!(score_function(&k, &b, &a, 0.0).is_err());
    }

    #[test]
    fn storage_trace_on_rest_point_is_flat() {
        let (g, k) = cosine_setup();
        let l = ReferenceMeasure::uniform(&g);
        let half = mix_of(&g, &[(0, 0.5), (8, 0.5)]);
        let traj = crate::dynamics::simulate_edm(
            &k,
            &RevisionProtocol::Smith,
            &l,
            &half,
            TimeGrid::new(1.0, 0.1, Method::Rk4, 1).unwrap(),
        )
        .unwrap();
        let r = storage_trace_check(&traj, &RevisionProtocol::Smith, &k, &l).unwrap();
        assert!(r.storage.iter().all(|&v| v == 0.0));
        assert!(r.max_increase <= 0.0);
        assert!(r.energy_balance_residual < 1e-15);
    }

    #[test]
    fn storage_trace_rejects_non_monotone_game() {
        let (g, _) = two();
        let l = ReferenceMeasure::uniform(&g);
        let id = PayoffKernel::from_rows(&g, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let traj = crate::dynamics::simulate_edm(
            &id,
            &RevisionProtocol::Bnn,
            &l,
            &DiscreteMeasure::uniform(&g),
            TimeGrid::new(0.5, 0.1, Method::Rk4, 1).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            storage_trace_check(&traj, &RevisionProtocol::Bnn, &id, &l),
            Err(Error::NotMonotone { .. })
        ));
    }
}
