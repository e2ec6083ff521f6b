//! Ellipsoid search state for the concave dual maximisation.
//!
//! The state is the localisation ellipsoid `{x : (x - lambda)' D^-1
//! (x - lambda) <= 1}` known to contain the dual optimum. Each iteration
//! cuts with the supergradient half-space; when the best dual value seen
//! so far exceeds the centre's value the cut is deepened accordingly,
//! which collapses wildly oversized initial ellipsoids in few steps while
//! reducing to the plain central cut (`alpha = 0`) otherwise.

use ndarray::{Array1, Array2, Axis};

/// Dual iterate: multipliers, localisation matrix and iteration count.
#[derive(Debug, Clone)]
pub struct DualState {
    /// Current multipliers (ellipsoid centre), elementwise >= 0.
    pub lambda: Array1<f64>,
    /// Symmetric positive-definite localisation matrix D.
    pub ellipsoid_matrix: Array2<f64>,
    pub iteration: usize,
}

pub(crate) enum CutOutcome {
    Updated,
    /// Cut direction numerically degenerate (g'Dg not positive finite).
    Degenerate,
}

/// Depths are clamped here. A computed depth can exceed 1 only through
/// floating-point slop (with the optimum enclosed it is bounded by 1);
/// clamping below 1 keeps a superset of the admissible region, which is
/// always safe.
pub(crate) const MAX_CUT_DEPTH: f64 = 0.995;

impl DualState {
    /// Ball of squared radius `radius_sq` centred at `center`.
    pub fn ball(center: Array1<f64>, radius_sq: f64) -> Self {
        let dim = center.len();
        DualState {
            lambda: center,
            ellipsoid_matrix: Array2::eye(dim) * radius_sq,
            iteration: 0,
        }
    }

    /// `sqrt(g' D g)`, the supergradient norm in the ellipsoid metric.
    pub fn metric_norm(&self, g: &Array1<f64>) -> f64 {
        let dg = self.ellipsoid_matrix.dot(g);
        g.dot(&dg).max(0.0).sqrt()
    }

    /// Applies a (possibly deep) supergradient cut keeping the half-space
    /// `{x : g'(x - lambda) >= alpha sqrt(g'Dg)}`. `alpha` is clamped into
    /// `[0, MAX_CUT_DEPTH]`; `alpha = 0` is the central cut. The centre is
    /// NOT clipped here; nonnegativity is restored with
    /// [`Self::enforce_nonnegative`] so the enclosure stays valid.
    pub(crate) fn deep_cut(&mut self, g: &Array1<f64>, alpha: f64) -> CutOutcome {
        let dim = self.lambda.len();
        let dg = self.ellipsoid_matrix.dot(g);
        let s_sq = g.dot(&dg);
        if !(s_sq.is_finite() && s_sq > 0.0) {
            return CutOutcome::Degenerate;
        }
        let s = s_sq.sqrt();
        let alpha = alpha.clamp(0.0, MAX_CUT_DEPTH);

        if dim == 1 {
            // Interval bisection: keep [centre + alpha r, centre + r].
            let r = self.ellipsoid_matrix[[0, 0]].sqrt();
            let dir = if g[0] >= 0.0 { 1.0 } else { -1.0 };
            self.lambda[0] += dir * (1.0 + alpha) / 2.0 * r;
            let shrink = (1.0 - alpha) / 2.0;
            self.ellipsoid_matrix[[0, 0]] *= shrink * shrink;
            self.iteration += 1;
            return CutOutcome::Updated;
        }

        let n = dim as f64;
        let tau = (1.0 + n * alpha) / (n + 1.0);
        let delta = (n * n / (n * n - 1.0)) * (1.0 - alpha * alpha);
        let sigma = 2.0 * (1.0 + n * alpha) / ((n + 1.0) * (1.0 + alpha));

        let step = &dg * (tau / s);
        self.lambda += &step;

        let dg_col = dg.view().insert_axis(Axis(1));
        let outer = dg_col.dot(&dg_col.t());
        self.ellipsoid_matrix = (&self.ellipsoid_matrix - &(&outer * (sigma / s_sq))) * delta;
        // Keep D numerically symmetric.
        let sym = (&self.ellipsoid_matrix + &self.ellipsoid_matrix.t()) * 0.5;
        self.ellipsoid_matrix = sym;
        self.iteration += 1;
        CutOutcome::Updated
    }

    /// Restores `lambda >= 0` with feasibility cuts `{x_i >= 0}` (the
    /// optimum is nonnegative, so these keep the enclosure exact, unlike
    /// clipping the centre). Residual sub-epsilon negatives after the cut
    /// budget are clamped.
    pub(crate) fn enforce_nonnegative(&mut self, max_cuts: usize) {
        let dim = self.lambda.len();
        for _ in 0..max_cuts {
            let mut worst = 0usize;
            let mut worst_val = 0.0f64;
            for i in 0..dim {
                if self.lambda[i] < worst_val {
                    worst_val = self.lambda[i];
                    worst = i;
                }
            }
            if worst_val >= 0.0 {
                return;
            }
            let d_ii = self.ellipsoid_matrix[[worst, worst]].max(0.0);
            let s = d_ii.sqrt();
            if !(s.is_finite() && s > 0.0) {
                break;
            }
            let alpha = -self.lambda[worst] / s;
            let mut e = Array1::<f64>::zeros(dim);
            e[worst] = 1.0;
            if !matches!(self.deep_cut(&e, alpha), CutOutcome::Updated) {
                break;
            }
        }
        self.lambda.mapv_inplace(|v| v.max(0.0));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn central_cut_matches_textbook_coefficients() {
        // dim 2, D = I, g = e1: centre moves by 1/(n+1) along e1 and the
        // matrix contracts to n^2/(n^2-1) * diag(1 - 2/(n+1), 1).
        let mut st = DualState::ball(array![1.0, 1.0], 1.0);
        st.deep_cut(&array![1.0, 0.0], 0.0);
        assert!((st.lambda[0] - (1.0 + 1.0 / 3.0)).abs() < 1e-12);
        assert!((st.lambda[1] - 1.0).abs() < 1e-12);
        let d = &st.ellipsoid_matrix;
        assert!((d[[0, 0]] - (4.0 / 3.0) * (1.0 - 2.0 / 3.0)).abs() < 1e-12);
        assert!((d[[1, 1]] - 4.0 / 3.0).abs() < 1e-12);
        assert!(d[[0, 1]].abs() < 1e-15);
    }

    #[test]
    fn volume_shrinks_every_cut() {
        let mut st = DualState::ball(array![0.5, 0.5, 0.5], 4.0);
        for i in 0..50 {
            let g = array![
                (i as f64 * 0.7).sin(),
                (i as f64 * 1.3).cos(),
                ((i * i) as f64 * 0.1).sin() + 0.1
            ];
            let det_before = det3(&st.ellipsoid_matrix);
            st.deep_cut(&g, 0.0);
            let det_after = det3(&st.ellipsoid_matrix);
            assert!(det_after < det_before, "iteration {i}");
        }
    }

    #[test]
    fn one_dimensional_cut_bisects() {
        let mut st = DualState::ball(array![8.0], 16.0);
        st.deep_cut(&array![-1.0], 0.0);
        assert!((st.lambda[0] - 6.0).abs() < 1e-12);
        assert!((st.ellipsoid_matrix[[0, 0]] - 4.0).abs() < 1e-12);
        // Deep cut with alpha = 0.5 keeps a quarter of the interval.
        let mut st = DualState::ball(array![8.0], 16.0);
        st.deep_cut(&array![1.0], 0.5);
        assert!((st.lambda[0] - 11.0).abs() < 1e-12);
        assert!((st.ellipsoid_matrix[[0, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deep_cut_contracts_faster() {
        let mut central = DualState::ball(array![1.0, 1.0], 1e6);
        let mut deep = central.clone();
        let g = array![1.0, 0.5];
        central.deep_cut(&g, 0.0);
        deep.deep_cut(&g, 0.9);
        assert!(det2(&deep.ellipsoid_matrix) < det2(&central.ellipsoid_matrix));
    }

    #[test]
    fn feasibility_cuts_restore_nonnegativity() {
        let mut st = DualState::ball(array![0.1, 0.1], 100.0);
        st.deep_cut(&array![-1.0, -1.0], 0.0);
        assert!(st.lambda.iter().any(|&v| v < 0.0));
        let det_before = det2(&st.ellipsoid_matrix);
        st.enforce_nonnegative(8);
        assert!(st.lambda.iter().all(|&v| v >= 0.0));
        // The cuts shrink the localisation set rather than teleporting it.
        assert!(det2(&st.ellipsoid_matrix) < det_before);
    }

    fn det2(d: &Array2<f64>) -> f64 {
        d[[0, 0]] * d[[1, 1]] - d[[0, 1]] * d[[1, 0]]
    }

    fn det3(d: &Array2<f64>) -> f64 {
        d[[0, 0]] * (d[[1, 1]] * d[[2, 2]] - d[[1, 2]] * d[[2, 1]])
            - d[[0, 1]] * (d[[1, 0]] * d[[2, 2]] - d[[1, 2]] * d[[2, 0]])
            + d[[0, 2]] * (d[[1, 0]] * d[[2, 1]] - d[[1, 1]] * d[[2, 0]])
    }
}
