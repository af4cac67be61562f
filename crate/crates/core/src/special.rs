//! Gaussian tail function and its inverse.

use std::f64::consts::{PI, SQRT_2};

use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

/// `Q(x) = P(Z > x)` for standard normal `Z`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    q_function(-x)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse of [`q_function`] on `(0, 1)`, polished with two Newton steps.
pub fn q_inverse(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("q_inverse needs p in (0, 1), got {p}")));
    }
    let mut x = SQRT_2 * erfc_inv(2.0 * p);
    for _ in 0..2 {
        let d = normal_pdf(x);
        if d < 1e-300 {
            break;
        }
        x += (q_function(x) - p) / d;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn q_symmetry() {
        assert_eq!(q_function(0.0), 0.5);
        for x in [0.3, 1.7, 4.0] {
            assert_abs_diff_eq!(q_function(x) + q_function(-x), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn q_reference_values() {
        // quadrature of the Gaussian density over [1.6448536, ∞)
        assert_abs_diff_eq!(q_function(1.6448536), 0.050_000_002_779_657_46, epsilon = 1e-10);
        assert_abs_diff_eq!(normal_cdf(1.0), 0.841_344_746_068_542_9, epsilon = 1e-10);
    }

    #[test]
    fn q_round_trip() {
        for i in 0..=1200 {
            let x = -6.0 + 0.01 * i as f64;
            let back = q_inverse(q_function(x)).unwrap();
            assert!((back - x).abs() < 1e-8, "x={x} back={back}");
        }
    }

    #[test]
    fn q_inverse_domain() {
        for p in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(q_inverse(p).is_err());
        }
    }
}
