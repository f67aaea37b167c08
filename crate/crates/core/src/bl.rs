//! Exact bounded-Lipschitz norm of a signed measure on a one-dimensional grid.
//!
//! The norm is the value of the linear program
//!
//! ```text
//! maximize   sum_i g_i w_i
//! subject to |g_i| <= 1,  |g_{i+1} - g_i| <= s_{i+1} - s_i
//! ```
//!
//! On a line the adjacent-pair constraints imply every pairwise Lipschitz
//! constraint, so the program is a chain and can be solved by dynamic
//! programming over `g`. The value function of each prefix is a concave
//! piecewise-linear function on `[-1, 1]`, kept as a list of
//! `(length, slope)` segments; the two DP operations (adding a linear term
//! and a sup-convolution with a box of half-width `h`) act on that list
//! directly, so the optimum is exact up to rounding.

#[derive(Debug, Clone)]
struct ConcavePiecewise {
    /// Value at g = -1.
    left_value: f64,
    /// Segments from -1 to 1, slopes strictly decreasing.
    segments: Vec<(f64, f64)>,
}

impl ConcavePiecewise {
    fn linear(slope: f64) -> Self {
        Self {
            left_value: -slope,
            segments: vec![(2.0, slope)],
        }
    }

    fn add_linear(&mut self, c: f64) {
        self.left_value -= c;
        for seg in &mut self.segments {
            seg.1 += c;
        }
    }

    fn maximum(&self) -> f64 {
        self.left_value
            + self
                .segments
                .iter()
                .filter(|(_, slope)| *slope > 0.0)
                .map(|(len, slope)| len * slope)
                .sum::<f64>()
    }

    /// Replaces `V` by `g -> max { V(g') : |g' - g| <= h, g' in [-1, 1] }`.
    fn sup_convolve(&mut self, h: f64) {
        let vmax = self.maximum();
        let pos: Vec<(f64, f64)> = self.segments.iter().copied().filter(|s| s.1 > 0.0).collect();
        let neg: Vec<(f64, f64)> = self.segments.iter().copied().filter(|s| s.1 < 0.0).collect();
        let pos_len: f64 = pos.iter().map(|s| s.0).sum();
        let neg_len: f64 = neg.iter().map(|s| s.0).sum();

        let mut segments = Vec::with_capacity(self.segments.len() + 1);

        // Increasing part shifts left by h; the first h of it falls off the domain.
        let mut left_value = vmax;
        let mut left_len = 0.0;
        if pos_len > h {
            let mut skip = h;
            let mut value = self.left_value;
            let mut started = false;
            for &(len, slope) in &pos {
                if started {
                    segments.push((len, slope));
                    left_len += len;
                } else if skip >= len {
                    skip -= len;
                    value += len * slope;
                } else {
                    value += skip * slope;
                    left_value = value;
                    segments.push((len - skip, slope));
                    left_len += len - skip;
                    started = true;
                }
            }
        }

        // Decreasing part shifts right by h; only its first (neg_len - h) survives.
        let mut right = Vec::new();
        let mut right_len = 0.0;
        if neg_len > h {
            let mut keep = neg_len - h;
            for &(len, slope) in &neg {
                if keep <= 0.0 {
                    break;
                }
                let take = len.min(keep);
                right.push((take, slope));
                right_len += take;
                keep -= take;
            }
        }

        let plateau = 2.0 - left_len - right_len;
        if plateau > 0.0 {
            segments.push((plateau, 0.0));
        }
        segments.extend(right);
        self.left_value = left_value;
        self.segments = segments;
    }
}

/// BL norm of the signed weights `w` placed at the sorted `points`.
pub(crate) fn bl_norm_on_points(points: &[f64], w: &[f64]) -> f64 {
    debug_assert_eq!(points.len(), w.len());
    if w.is_empty() {
        return 0.0;
    }
    let mut value = ConcavePiecewise::linear(w[0]);
    for i in 1..w.len() {
        let h = points[i] - points[i - 1];
        value.sup_convolve(h);
        value.add_linear(w[i]);
    }
    value.maximum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_is_absolute_value() {
        assert_eq!(bl_norm_on_points(&[0.3], &[-0.7]), 0.7);
    }

    #[test]
    fn dirac_differences() {
        let pts = [0.0, 1.0, 2.0];
        assert!((bl_norm_on_points(&pts, &[1.0, -1.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((bl_norm_on_points(&pts, &[1.0, 0.0, -1.0]) - 2.0).abs() < 1e-15);
        assert!((bl_norm_on_points(&[0.0, 0.1], &[1.0, -1.0]) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn positive_measure_is_total_mass() {
        let pts = [0.0, 0.5, 0.7, 3.0];
        let w = [0.2, 0.1, 0.3, 0.4];
        assert!((bl_norm_on_points(&pts, &w) - 1.0).abs() < 1e-15);
    }
}
