//! Activation and loss primitives.

/// Numerically stable softplus: ln(1 + e^x).
#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic sigmoid.
#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mish activation: x * tanh(softplus(x)).
///
/// Stable over |x| up to at least 1e3; mish(0) = 0 exactly.
#[inline]
pub fn mish(x: f64) -> f64 {
    x * softplus(x).tanh()
}

/// Derivative of [`mish`]: tanh(sp(x)) + x * sigmoid(x) * (1 - tanh^2(sp(x))).
#[inline]
pub fn mish_prime(x: f64) -> f64 {
    let t = softplus(x).tanh();
    t + x * sigmoid(x) * (1.0 - t * t)
}

/// Huber loss: a^2 / 2 for |a| <= delta, else delta * (|a| - delta / 2).
#[inline]
pub fn huber(residual: f64, delta: f64) -> f64 {
    debug_assert!(delta > 0.0);
    let a = residual.abs();
    if a <= delta {
        0.5 * residual * residual
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Derivative of [`huber`] with respect to the residual.
#[inline]
pub fn huber_prime(residual: f64, delta: f64) -> f64 {
    if residual.abs() <= delta {
        residual
    } else {
        delta * residual.signum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mish_at_zero_is_exactly_zero() {
        assert_eq!(mish(0.0), 0.0);
    }

    #[test]
    fn mish_asymptotes() {
        assert!((mish(20.0) - 20.0).abs() < 1e-6);
        assert!(mish(-20.0).abs() < 1e-7);
    }

    #[test]
    fn mish_finite_over_wide_range() {
        let mut x = -1e3;
        while x <= 1e3 {
            assert!(mish(x).is_finite(), "mish({x}) not finite");
            assert!(mish_prime(x).is_finite(), "mish'({x}) not finite");
            x += 7.3;
        }
        assert!(mish(1e3).is_finite());
        assert!(mish(-1e3).is_finite());
    }

    #[test]
    fn mish_spot_values() {
        // Frozen from an independent evaluation of x * tanh(ln(1 + e^x)).
        assert!((mish(1.0) - 0.8650983882673103).abs() < 1e-12);
        assert!((mish(-1.0) - -0.30340146137410895).abs() < 1e-12);
    }

    #[test]
    fn mish_prime_matches_finite_differences() {
        let h = 1e-6;
        for &x in &[-3.0, -0.5, 0.0, 0.4, 2.0, 10.0] {
            let fd = (mish(x + h) - mish(x - h)) / (2.0 * h);
            assert!((mish_prime(x) - fd).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn huber_branch_values() {
        assert!((huber(0.5, 1.0) - 0.125).abs() < 1e-15);
        assert!((huber(2.0, 1.0) - 1.5).abs() < 1e-15);
        assert!((huber(-1.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn huber_is_c1_at_the_branch_point() {
        let delta = 1.0;
        let eps = 1e-7;
        // Value continuity.
        assert!((huber(delta + eps, delta) - huber(delta - eps, delta)).abs() < 1e-5);
        // One-sided difference quotients agree.
        let h = 1e-7;
        let left = (huber(delta - eps, delta) - huber(delta - eps - h, delta)) / h;
        let right = (huber(delta + eps + h, delta) - huber(delta + eps, delta)) / h;
        assert!((left - right).abs() < 1e-5, "left {left}, right {right}");
    }

    #[test]
    fn huber_prime_saturates() {
        assert_eq!(huber_prime(0.3, 1.0), 0.3);
        assert_eq!(huber_prime(5.0, 1.0), 1.0);
        assert_eq!(huber_prime(-5.0, 1.0), -1.0);
    }
}
