//! Grid-refinement studies, the Grönwall error bound, and choice-mobility
//! diagnostics for families of finite mean dynamics.

use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bl::bl_norm_on_points;
use crate::dynamics::{field_raw, simulate_edm, RevisionProtocol, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::game::PayoffKernel;
use crate::grid::{ReferenceMeasure, StrategyGrid};
use crate::measure::DiscreteMeasure;

/// Regularity constants of a dynamics map: the rate bound `m` and the
/// Lipschitz constants `l1` (in the strategy), `l2` (in the payoff) and `l3`
/// (in the state).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityConstants {
    pub m: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl RegularityConstants {
    pub fn new(m: f64, l1: f64, l2: f64, l3: f64) -> Result<Self> {
        for (name, v) in [("M", m), ("L1", l1), ("L2", l2), ("L3", l3)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("must be finite and nonnegative, got {v}")));
            }
        }
        Ok(Self { m, l1, l2, l3 })
    }

    /// `K = max{2 L3 + 3 max{L1, M}, 3 max{L2, M}}`.
    pub fn k(&self) -> f64 {
        (2.0 * self.l3 + 3.0 * self.l1.max(self.m)).max(3.0 * self.l2.max(self.m))
    }
}

/// `-d_lambda + (d_lambda + d_mu0) e^{K t}` with `K` taken from `consts`.
pub fn gronwall_bound(consts: &RegularityConstants, d_lambda: f64, d_mu0: f64, t: f64) -> f64 {
    gronwall_bound_with_rate(consts.k(), d_lambda, d_mu0, t)
}

pub fn gronwall_bound_with_rate(k: f64, d_lambda: f64, d_mu0: f64, t: f64) -> f64 {
    -d_lambda + (d_lambda + d_mu0) * (k * t).exp()
}

/// Largest closed-loop switch rate seen over `samples` random states; a lower
/// bound on the protocol bound `M`.
pub fn protocol_bound_estimate(
    protocol: &RevisionProtocol,
    kernel: &PayoffKernel,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::param("samples", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = kernel.grid();
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let mu = DiscreteMeasure::random_with(grid, &mut rng);
        best = best.max(max_switch_rate(protocol, mu.weights(), &kernel.apply(mu.weights())));
    }
    Ok(best)
}

fn max_switch_rate(protocol: &RevisionProtocol, x: &[f64], rho: &[f64]) -> f64 {
    let (lo, hi) = rho
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
    // Every supported rate is nondecreasing in the payoff difference, so the
    // extremes are attained at the largest gain.
    match protocol {
        RevisionProtocol::Bnn => protocol.switch_rate(x, rho, 0, argmax(rho)),
        _ => protocol.pairwise_rate(hi - lo).unwrap_or(0.0).max(0.0),
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc })
        .0
}

/// The sorted union of two grids' points; points closer than `1e-12` merge.
pub fn union_grid(a: &StrategyGrid, b: &StrategyGrid) -> Result<Arc<StrategyGrid>> {
    let mut pts: Vec<f64> = a.points().iter().chain(b.points()).copied().collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|x, y| (*x - *y).abs() <= 1e-12);
    StrategyGrid::from_points(pts)
}

/// Re-expresses `mu` on `target`, a grid containing every point of `mu`'s grid.
pub fn embed(mu: &DiscreteMeasure, target: &Arc<StrategyGrid>) -> Result<DiscreteMeasure> {
    let mut w = vec![0.0; target.len()];
    for (s, m) in mu.grid().points().iter().zip(mu.weights()) {
        let idx = target.nearest_index(*s);
        if (target.point(idx) - s).abs() > 1e-12 {
            return Err(Error::GridMismatch);
        }
        w[idx] += m;
    }
    match mu.kind() {
        crate::measure::MeasureKind::Probability => DiscreteMeasure::probability(target, w),
        crate::measure::MeasureKind::Signed => DiscreteMeasure::signed(target, w),
    }
}

/// BL distance between measures on possibly different grids, via the union grid.
pub fn bl_distance_across(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    let u = union_grid(a.grid(), b.grid())?;
    embed(a, &u)?.bl_distance(&embed(b, &u)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementRow {
    pub n_coarse: usize,
    pub n_fine: usize,
    /// Largest BL distance over the shared sample times.
    pub sup_bl: f64,
    pub t_of_max: f64,
    /// BL distance of the two initial states.
    pub initial_bl: f64,
}

#[derive(Debug, Clone)]
pub struct RefinementReport {
    pub rows: Vec<RefinementRow>,
    pub trajectories: Vec<Trajectory>,
}

impl RefinementReport {
    /// Whether `sup_bl` strictly decreases along the refinement sequence.
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].sup_bl < w[0].sup_bl)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Inconsistent(format!("csv write: {e}"));
        w.write_record(["n_coarse", "n_fine", "sup_bl", "t_of_max"]).map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.n_coarse.to_string(),
                r.n_fine.to_string(),
                format!("{:.16e}", r.sup_bl),
                format!("{:.16e}", r.t_of_max),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Inconsistent(format!("csv write: {e}")))
    }
}

/// Setup shared by every member of a refinement sequence.
pub struct RefinementSetup<'a> {
    pub lower: f64,
    pub upper: f64,
    pub kernel_family: &'a (dyn Fn(&Arc<StrategyGrid>) -> Result<PayoffKernel> + Sync),
    pub x0_family: &'a (dyn Fn(&Arc<StrategyGrid>) -> Result<DiscreteMeasure> + Sync),
    pub protocol: &'a RevisionProtocol,
    pub time: TimeGrid,
}

/// Simulates the static-feedback dynamics on uniform grids of each size in `ns`
/// and reports the sup-over-time BL distance between consecutive refinements.
/// Runs on up to `jobs` threads.
pub fn refine_study(setup: &RefinementSetup<'_>, ns: &[usize], jobs: usize) -> Result<RefinementReport> {
    if ns.is_empty() {
        return Err(Error::param("refine.ns", "must not be empty"));
    }
    if ns.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("refine.ns", "must be nondecreasing"));
    }
    setup.time.validate()?;
    let run = |&n: &usize| -> Result<Trajectory> {
        let grid = StrategyGrid::uniform(n, setup.lower, setup.upper)?;
        let kernel = (setup.kernel_family)(&grid)?;
        let x0 = (setup.x0_family)(&grid)?;
        if kernel.n() != n || x0.len() != n {
            return Err(Error::Inconsistent(format!(
                "families produced sizes {} and {} for n = {n}",
                kernel.n(),
                x0.len()
            )));
        }
        simulate_edm(&kernel, setup.protocol, &ReferenceMeasure::uniform(&grid), &x0, setup.time)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Inconsistent(format!("thread pool: {e}")))?;
    let trajectories: Vec<Trajectory> = pool.install(|| ns.par_iter().map(run).collect::<Result<_>>())?;

    let mut rows = Vec::with_capacity(ns.len().saturating_sub(1));
    for (k, pair) in trajectories.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        if a.times != b.times {
            return Err(Error::Inconsistent("refinement runs sampled at different times".into()));
        }
        let u = union_grid(a.grid(), b.grid())?;
        let ia = embed_index(a.grid(), &u)?;
        let ib = embed_index(b.grid(), &u)?;
        let mut diff = vec![0.0; u.len()];
        let mut sup = (f64::NEG_INFINITY, 0.0);
        let mut initial = 0.0;
        for (idx, t) in a.times.iter().enumerate() {
            diff.iter_mut().for_each(|d| *d = 0.0);
            for (&i, w) in ia.iter().zip(a.states[idx].weights()) {
                diff[i] += w;
            }
            for (&i, w) in ib.iter().zip(b.states[idx].weights()) {
                diff[i] -= w;
            }
            let d = bl_norm_on_points(u.points(), &diff);
            if idx == 0 {
                initial = d;
            }
            if d > sup.0 {
                sup = (d, *t);
            }
        }
        rows.push(RefinementRow {
            n_coarse: ns[k],
            n_fine: ns[k + 1],
            sup_bl: sup.0,
            t_of_max: sup.1,
            initial_bl: initial,
        });
    }
    Ok(RefinementReport { rows, trajectories })
}

fn embed_index(from: &StrategyGrid, to: &StrategyGrid) -> Result<Vec<usize>> {
    from.points()
        .iter()
        .map(|&s| {
            let i = to.nearest_index(s);
            if (to.point(i) - s).abs() > 1e-12 {
                Err(Error::GridMismatch)
            } else {
                Ok(i)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MobilityVerdict {
    ChoiceMobile,
    ParalysisSuspected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceMobilityReport {
    pub times: Vec<f64>,
    /// `c(t) = sup_n ||x_n(t) - limit_n||_1`.
    pub c: Vec<f64>,
    pub verdict: MobilityVerdict,
}

/// Tracks how far a family of trajectories stays from its limit candidates.
pub fn choice_mobility_trace(
    trajectories: &[Trajectory],
    limits: &[DiscreteMeasure],
    threshold: f64,
) -> Result<ChoiceMobilityReport> {
    if trajectories.len() != limits.len() {
        return Err(Error::LengthMismatch {
            expected: trajectories.len(),
            actual: limits.len(),
        });
    }
    let Some(first) = trajectories.first() else {
        return Err(Error::param("trajectories", "must not be empty"));
    };
    if trajectories.iter().any(|t| t.times != first.times) {
        return Err(Error::Inconsistent("trajectories sampled at different times".into()));
    }
    let mut c = vec![0.0_f64; first.len()];
    for (traj, limit) in trajectories.iter().zip(limits) {
        for (ck, state) in c.iter_mut().zip(&traj.states) {
            *ck = ck.max(state.sub(limit)?.tv_norm());
        }
    }
    let verdict = if c.last().copied().unwrap_or(0.0) < threshold {
        MobilityVerdict::ChoiceMobile
    } else {
        MobilityVerdict::ParalysisSuspected
    };
    Ok(ChoiceMobilityReport {
        times: first.times.clone(),
        c,
        verdict,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeBoundReport {
    /// Largest `||x'(t)||_1` over the samples.
    pub max_speed: f64,
    /// Largest switch rate over the samples, the bound `M` on this trajectory.
    pub rate_bound: f64,
    /// `2 M lambda(S)`; equals `2 M` for a probability reference measure.
    pub speed_bound: f64,
    pub holds: bool,
}

/// Checks `||x'(t)||_1 <= 2 M lambda(S)` along a trajectory, with `M` the
/// largest switch rate realised at the sampled states and payoffs.
pub fn derivative_bound_check(
    trajectory: &Trajectory,
    protocol: &RevisionProtocol,
    lambda: &ReferenceMeasure,
) -> Result<DerivativeBoundReport> {
    let n = trajectory.grid().len();
    if lambda.atoms().len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: lambda.atoms().len(),
        });
    }
    let mut out = vec![0.0; n];
    let mass: f64 = lambda.atoms().iter().sum();
    let (mut speed, mut rate): (f64, f64) = (0.0, 0.0);
    let mut holds = true;
    for (mu, rho) in trajectory.states.iter().zip(&trajectory.payoffs) {
        field_raw(protocol, mu.weights(), rho.values(), lambda.atoms(), &mut out);
        let s: f64 = out.iter().map(|v| v.abs()).sum();
        let m = max_switch_rate(protocol, mu.weights(), rho.values());
        holds &= s <= 2.0 * m * mass * (1.0 + 1e-12) + 1e-15;
        speed = speed.max(s);
        rate = rate.max(m);
    }
    Ok(DerivativeBoundReport {
        max_speed: speed,
        rate_bound: rate,
        speed_bound: 2.0 * rate * mass,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ImpartialRate, Method};
    use rand::Rng;

    #[test]
    fn gronwall_examples() {
        let c = RegularityConstants::new(0.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(c.k(), 0.0);
        for t in [0.0, 1.0, 7.5] {
            assert_eq!(gronwall_bound(&c, 0.0, 0.0, t), 0.0);
            assert_eq!(gronwall_bound(&c, 0.3, 0.2, t), 0.2);
        }
        let v = gronwall_bound_with_rate(1.0, 0.1, 0.0, 1.0);
        assert!((v - 0.1 * (std::f64::consts::E - 1.0)).abs() < 1e-15);
        assert!((v - 0.171828).abs() < 1e-6);
        let c = RegularityConstants::new(1.0, 2.0, 0.5, 0.25).unwrap();
        assert_eq!(c.k(), 6.5);
        assert!(RegularityConstants::new(-1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn gronwall_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let base: [f64; 4] = [rng.gen_range(0.0..3.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..2.0)];
            let f = |a: [f64; 4]| gronwall_bound_with_rate(a[0], a[1], a[2], a[3]);
            for i in 0..4 {
                let mut up = base;
                up[i] += rng.gen_range(0.0..0.5);
                assert!(f(up) >= f(base) - 1e-12 * f(base).abs().max(1.0));
            }
            assert!(f([base[0], base[1], base[2], 0.0]) >= base[2] - 1e-15);
        }
    }

    #[test]
    fn protocol_bound_examples() {
        let g = StrategyGrid::uniform(21, 0.0, 2.0).unwrap();
        assert_eq!(protocol_bound_estimate(&RevisionProtocol::Smith, &PayoffKernel::zero(&g), 10, 0).unwrap(), 0.0);
        let cos = PayoffKernel::cosine(&g);
        let mut prev = 0.0;
        for samples in [1, 5, 25, 100] {
            let m = protocol_bound_estimate(&RevisionProtocol::Smith, &cos, samples, 3).unwrap();
            assert!(m <= 4.0 && m >= prev);
            prev = m;
        }
        assert!(protocol_bound_estimate(&RevisionProtocol::Bnn, &cos, 0, 0).is_err());
    }

    #[test]
    fn max_switch_rate_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let protocols = [
            RevisionProtocol::Bnn,
            RevisionProtocol::Smith,
            RevisionProtocol::ImpartialPairwise(ImpartialRate::power(1.5, 2.0).unwrap()),
        ];
        for _ in 0..100 {
            let n = rng.gen_range(2..7);
            let x: Vec<f64> = {
                let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
                let s: f64 = w.iter().sum();
                w.iter().map(|v| v / s).collect()
            };
            let rho: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            for p in &protocols {
                let mut brute: f64 = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        brute = brute.max(p.switch_rate(&x, &rho, i, j));
                    }
                }
                assert!((max_switch_rate(p, &x, &rho) - brute).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn union_embedding_preserves_bl_norm() {
        let a = StrategyGrid::uniform(25, 0.0, 2.0).unwrap();
        let b = StrategyGrid::uniform(50, 0.0, 2.0).unwrap();
        let u = union_grid(&a, &b).unwrap();
        assert_eq!(u.len(), 25 + 50 - 2);
        for seed in 0..20 {
            let d = DiscreteMeasure::random(&a, seed).sub(&DiscreteMeasure::uniform(&a)).unwrap();
            let e = embed(&d, &u).unwrap();
            assert!((e.bl_norm() - d.bl_norm()).abs() < 1e-12);
        }
        let c = StrategyGrid::uniform(5, 0.0, 3.0).unwrap();
        let other = StrategyGrid::uniform(4, 0.0, 2.0).unwrap();
        assert!(embed(&DiscreteMeasure::uniform(&c), &other).is_err());
    }

    fn setup_time() -> TimeGrid {
        TimeGrid::new(1.0, 0.05, Method::Rk4, 5).unwrap()
    }

    #[test]
    fn identical_sizes_give_zero() {
        let kf = |g: &Arc<StrategyGrid>| Ok(PayoffKernel::cosine(g));
        let xf = |g: &Arc<StrategyGrid>| DiscreteMeasure::gaussian(g, 1.0, 0.1);
        let setup = RefinementSetup {
            lower: 0.0,
            upper: 2.0,
            kernel_family: &kf,
            x0_family: &xf,
            protocol: &RevisionProtocol::Smith,
            time: setup_time(),
        };
        let r = refine_study(&setup, &[15, 15], 2).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].sup_bl, 0.0);
    }

    #[test]
    fn zero_kernel_keeps_initial_distance() {
        let kf = |g: &Arc<StrategyGrid>| Ok(PayoffKernel::zero(g));
        let xf = |g: &Arc<StrategyGrid>| DiscreteMeasure::gaussian(g, 1.0, 0.1);
        let setup = RefinementSetup {
            lower: 0.0,
            upper: 2.0,
            kernel_family: &kf,
            x0_family: &xf,
            protocol: &RevisionProtocol::Bnn,
            time: setup_time(),
        };
        let ns = [10, 20, 40];
        let r = refine_study(&setup, &ns, 1).unwrap();
        for (row, w) in r.rows.iter().zip(ns.windows(2)) {
            let a = xf(&StrategyGrid::uniform(w[0], 0.0, 2.0).unwrap()).unwrap();
            let b = xf(&StrategyGrid::uniform(w[1], 0.0, 2.0).unwrap()).unwrap();
            let d = bl_distance_across(&a, &b).unwrap();
            assert_eq!(row.sup_bl, d);
            assert_eq!(row.initial_bl, d);
        }
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n_coarse,n_fine,sup_bl,t_of_max\n"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn refine_rejects_bad_inputs() {
        let kf = |g: &Arc<StrategyGrid>| Ok(PayoffKernel::zero(g));
        let bad = |_: &Arc<StrategyGrid>| Ok(DiscreteMeasure::uniform(&StrategyGrid::uniform(3, 0.0, 2.0).unwrap()));
        let setup = RefinementSetup {
            lower: 0.0,
            upper: 2.0,
            kernel_family: &kf,
            x0_family: &bad,
            protocol: &RevisionProtocol::Bnn,
            time: setup_time(),
        };
        assert!(matches!(refine_study(&setup, &[5, 10], 1), Err(Error::Inconsistent(_))));
        assert!(refine_study(&setup, &[10, 5], 1).is_err());
        assert!(refine_study(&setup, &[], 1).is_err());
    }

    #[test]
    fn mobility_at_limits_is_zero() {
        let g = StrategyGrid::uniform(9, 0.0, 2.0).unwrap();
        let k = PayoffKernel::cosine(&g);
        let l = ReferenceMeasure::uniform(&g);
        let mut w = vec![0.0; 9];
        w[0] = 0.5;
        w[8] = 0.5;
        let ne = DiscreteMeasure::probability(&g, w).unwrap();
        let traj = simulate_edm(&k, &RevisionProtocol::Smith, &l, &ne, setup_time()).unwrap();
        let r = choice_mobility_trace(&[traj.clone(), traj], &[ne.clone(), ne], 1e-9).unwrap();
        assert!(r.c.iter().all(|&c| c == 0.0));
        assert_eq!(r.verdict, MobilityVerdict::ChoiceMobile);
    }

    #[test]
    fn scaled_protocol_bounds_mobility_from_below() {
        // phi / n: the rate bound shrinks with n, so mobility decays slowly.
        let mut trajectories = Vec::new();
        let mut limits = Vec::new();
        let mut max_m: f64 = 0.0;
        let eps = 1.0;
        let time = TimeGrid::new(0.5, 0.01, Method::Rk4, 1).unwrap();
        for n in [5usize, 10, 20] {
            let g = StrategyGrid::uniform(n, 0.0, 2.0).unwrap();
            let k = PayoffKernel::cosine(&g);
            let l = ReferenceMeasure::uniform(&g);
            let scale = 1.0 / n as f64;
            let p = RevisionProtocol::ImpartialPairwise(ImpartialRate::power(1.0, scale).unwrap());
            let x0 = DiscreteMeasure::dirac(&g, n / 2).unwrap();
            let traj = simulate_edm(&k, &p, &l, &x0, time).unwrap();
            let dn = derivative_bound_check(&traj, &p, &l).unwrap();
            assert!(dn.holds);
            max_m = max_m.max(dn.rate_bound);
            // A limit candidate separated from the start by at least eps.
            let limit = DiscreteMeasure::dirac(&g, 0).unwrap();
            assert!(x0.sub(&limit).unwrap().tv_norm() >= eps);
            trajectories.push(traj);
            limits.push(limit);
        }
        let r = choice_mobility_trace(&trajectories, &limits, 1e-3).unwrap();
        for (t, c) in r.times.iter().zip(&r.c) {
            assert!(*c >= eps - 2.0 * max_m * t - 1e-12, "t={t} c={c}");
        }
    }

    #[test]
    fn mobility_rejects_mismatched_inputs() {
        let g = StrategyGrid::uniform(4, 0.0, 1.0).unwrap();
        let k = PayoffKernel::zero(&g);
        let l = ReferenceMeasure::uniform(&g);
        let x = DiscreteMeasure::uniform(&g);
        let a = simulate_edm(&k, &RevisionProtocol::Bnn, &l, &x, setup_time()).unwrap();
        let b = simulate_edm(&k, &RevisionProtocol::Bnn, &l, &x, TimeGrid::new(2.0, 0.05, Method::Rk4, 5).unwrap()).unwrap();
        assert!(choice_mobility_trace(&[a.clone()], &[], 0.1).is_err());
        assert!(choice_mobility_trace(&[a, b], &[x.clone(), x], 0.1).is_err());
    }
}
