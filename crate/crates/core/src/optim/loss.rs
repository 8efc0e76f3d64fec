//! Smoothed hinge loss on constraint margins and the resulting gradient weights.

/// `0` for `s ≥ 1`, `1/2 - s` for `s ≤ 0`, `(1 - s)²/2` in between.
#[inline]
pub fn smoothed_hinge(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else if s <= 0.0 {
        0.5 - s
    } else {
        0.5 * (1.0 - s) * (1.0 - s)
    }
}

/// Derivative of [`smoothed_hinge`]; continuous at both breakpoints.
#[inline]
pub fn smoothed_hinge_deriv(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else if s <= 0.0 {
        -1.0
    } else {
        s - 1.0
    }
}

/// `f(M) = (1/T) Σ ℓ(⟨A_t, M⟩)` from cached margins.
pub fn objective(margins: &[f64]) -> f64 {
    if margins.is_empty() {
        return 0.0;
    }
    margins.iter().map(|&m| smoothed_hinge(m)).sum::<f64>() / margins.len() as f64
}

/// Per-constraint weights `c_t = ℓ'(⟨A_t, M⟩)`, so that `∇f = (1/T) Σ c_t A_t`.
/// Satisfied constraints get exactly zero and are skipped downstream.
pub fn gradient_coefficients(margins: &[f64]) -> Vec<f64> {
    margins.iter().map(|&m| smoothed_hinge_deriv(m)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hinge_values() {
        assert_eq!(smoothed_hinge(1.5), 0.0);
        assert_eq!(smoothed_hinge(-0.5), 1.0);
        assert_eq!(smoothed_hinge(0.5), 0.125);
        assert_eq!(smoothed_hinge(1.0), 0.0);
        assert_eq!(smoothed_hinge(0.0), 0.5);
    }

    #[test]
    fn derivative_values() {
        assert_eq!(smoothed_hinge_deriv(2.0), 0.0);
        assert_eq!(smoothed_hinge_deriv(0.0), -1.0);
        assert_eq!(smoothed_hinge_deriv(-3.0), -1.0);
        assert_eq!(smoothed_hinge_deriv(0.25), -0.75);
        assert_eq!(smoothed_hinge_deriv(1.0), 0.0);
    }

    #[test]
    fn derivative_matches_central_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..1000 {
            let s: f64 = rng.random_range(-2.0..3.0);
            let fd = (smoothed_hinge(s + h) - smoothed_hinge(s - h)) / (2.0 * h);
            assert!((fd - smoothed_hinge_deriv(s)).abs() < 1e-6, "s = {s}");
        }
    }

    #[test]
    fn objective_regimes() {
        assert_eq!(objective(&[1.0, 2.0, 5.0]), 0.0);
        assert_eq!(objective(&[0.0, 0.0]), 0.5);
        assert_eq!(gradient_coefficients(&[2.0, -1.0, 0.5]), vec![0.0, -1.0, -0.5]);
    }
}
