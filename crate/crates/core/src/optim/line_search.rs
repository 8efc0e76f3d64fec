//! Exact line search along a feasible direction by bisection on the
//! derivative of the one-dimensional restriction of the objective.

use super::loss::smoothed_hinge_deriv;

const MAX_BISECTIONS: usize = 200;

/// `g(γ) = (1/T) Σ ℓ'(m_t + γ b_t) b_t`, the derivative of `γ ↦ f(M + γD)`
/// where `b_t = ⟨A_t, D⟩`. Nondecreasing in `γ` because `f` is convex.
pub fn directional_slope(margins: &[f64], directions: &[f64], gamma: f64) -> f64 {
    if margins.is_empty() {
        return 0.0;
    }
    let sum: f64 = margins
        .iter()
        .zip(directions)
        .filter(|(_, &b)| b != 0.0)
        .map(|(&m, &b)| smoothed_hinge_deriv(m + gamma * b) * b)
        .sum();
    sum / margins.len() as f64
}

/// Minimizes `f(M + γD)` over `γ ∈ [0, γ_max]`.
///
/// Returns `0` when the slope is already nonnegative at zero, `γ_max` when it
/// is still nonpositive there, and otherwise a point with `|g(γ)| ≤ tol` (or
/// the bracket midpoint once the bracket can no longer shrink).
pub fn line_search(margins: &[f64], directions: &[f64], gamma_max: f64, tol: f64) -> f64 {
    debug_assert_eq!(margins.len(), directions.len());
    debug_assert!(gamma_max > 0.0 && gamma_max.is_finite());
    if directional_slope(margins, directions, 0.0) >= 0.0 {
        return 0.0;
    }
    if directional_slope(margins, directions, gamma_max) <= 0.0 {
        return gamma_max;
    }
    let (mut lo, mut hi) = (0.0, gamma_max);
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g = directional_slope(margins, directions, mid);
        if g.abs() <= tol {
            return mid;
        }
        if g < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::loss::objective;

    #[test]
    fn full_step_when_slope_stays_negative() {
        // m = 0, b = 0.5: g(γ) = ℓ'(γ/2)/2 < 0 on [0, 1]
        assert_eq!(line_search(&[0.0], &[0.5], 1.0, 1e-6), 1.0);
    }

    #[test]
    fn no_step_when_slope_starts_nonnegative() {
        assert_eq!(line_search(&[0.5], &[-1.0], 1.0, 1e-6), 0.0);
        assert_eq!(line_search(&[2.0], &[1.0], 1.0, 1e-6), 0.0);
    }

    #[test]
    fn hand_solved_root() {
        // m = 0, b = 1: g(γ) = γ - 1 on (0, 1), root at the upper bound
        assert_eq!(line_search(&[0.0], &[1.0], 1.0, 1e-6), 1.0);
        // m = (0, 1), b = (1, -1): g(γ) = (2γ - 1)/2 on (0, 1), root at 1/2
        let g = line_search(&[0.0, 1.0], &[1.0, -1.0], 4.0, 1e-9);
        assert!((g - 0.5).abs() <= 1e-8, "{g}");
    }

    #[test]
    fn result_minimizes_on_grid() {
        let margins = [0.2, -0.4, 0.9, 1.3, 0.0];
        let dirs = [0.7, 1.1, -0.5, -0.9, 0.3];
        let gamma = line_search(&margins, &dirs, 2.0, 1e-10);
        let f_at = |g: f64| {
            let m: Vec<f64> = margins.iter().zip(&dirs).map(|(m, b)| m + g * b).collect();
            objective(&m)
        };
        let best = f_at(gamma);
        for k in 0..=2000 {
            let g = 2.0 * k as f64 / 2000.0;
            assert!(best <= f_at(g) + 1e-12);
        }
    }
}
