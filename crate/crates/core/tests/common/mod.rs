//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::sync::Arc;

use popdyn_core::{DiscreteMeasure, StrategyGrid};
use rand::Rng;

/// Bounded-Lipschitz norm by exhaustive maximization over test functions
/// taking values on the lattice `{-1, -1 + step, ..., 1}`.
///
/// On a line, 1-Lipschitz between neighbours implies 1-Lipschitz everywhere,
/// so a Viterbi pass over the lattice visits every feasible lattice function.
pub fn bl_norm_lattice(points: &[f64], w: &[f64], step: f64) -> f64 {
    let levels = (2.0 / step).round() as usize + 1;
    let value = |k: usize| -1.0 + k as f64 * step;
    let mut best: Vec<f64> = (0..levels).map(|k| w[0] * value(k)).collect();
    for i in 1..points.len() {
        let reach = ((points[i] - points[i - 1]) / step + 1e-9).floor() as usize;
        let mut next = vec![f64::NEG_INFINITY; levels];
        // Sliding-window maximum of `best` over [k - reach, k + reach].
        let mut window = std::collections::VecDeque::<usize>::new();
        let mut hi = 0;
        for k in 0..levels {
            let top = (k + reach).min(levels - 1);
            while hi <= top {
                while window.back().is_some_and(|&b| best[b] <= best[hi]) {
                    window.pop_back();
                }
                window.push_back(hi);
                hi += 1;
            }
            while window.front().is_some_and(|&f| f + reach < k) {
                window.pop_front();
            }
            next[k] = best[*window.front().unwrap()] + w[i] * value(k);
        }
        best = next;
    }
    best.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// `-int (mu[t, inf) - nu[t, inf))^2 dt` by midpoint sampling of the tails on
/// each cell between consecutive grid points; the tails are constant there.
pub fn tail_form(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let pts = mu.grid().points();
    let tail = |t: f64| -> f64 {
        pts.iter()
            .zip(mu.weights().iter().zip(nu.weights()))
            .filter(|(s, _)| **s >= t)
            .map(|(_, (a, b))| a - b)
            .sum()
    };
    let mut total = 0.0;
    let mut left = 0.0_f64.min(pts[0]);
    for &right in pts {
        if right > left {
            let d = tail(0.5 * (left + right));
            total += d * d * (right - left);
        }
        left = right;
    }
    -total
}

pub fn random_grid<R: Rng>(rng: &mut R, n: usize, upper: f64) -> Arc<StrategyGrid> {
    let mut pts: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..upper)).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    StrategyGrid::from_points(pts).unwrap()
}

/// A point of the simplex supported on a random nonempty subset of indices.
pub fn random_face_state<R: Rng>(rng: &mut R, grid: &Arc<StrategyGrid>) -> DiscreteMeasure {
    let n = grid.len();
    loop {
        let w: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.5) { -rng.gen_range(1e-12f64..1.0).ln() } else { 0.0 })
            .collect();
        if w.iter().any(|&x| x > 0.0) {
            return DiscreteMeasure::from_unnormalized(grid, w).unwrap();
        }
    }
}

/// Sorted distinct grid points drawn from the multiples of `step` in `[0, upper]`.
pub fn random_lattice_grid<R: Rng>(rng: &mut R, n: usize, upper: f64, step: f64) -> Arc<StrategyGrid> {
    let top = (upper / step).round() as u64;
    let mut ks: Vec<u64> = (0..n).map(|_| rng.gen_range(0..=top)).collect();
    ks.sort_unstable();
    ks.dedup();
    StrategyGrid::from_points(ks.into_iter().map(|k| k as f64 * step).collect()).unwrap()
}
