//! Scalar special functions used throughout the fixed-point equations.

use std::f64::consts::{FRAC_2_SQRT_PI, PI};

pub const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// `erf(x) / x`, finite at zero (limit `2/sqrt(pi)`).
#[inline]
pub fn erf_over_x(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        // erf(x)/x = 2/sqrt(pi) (1 - x^2/3 + x^4/10 - ...)
        let x2 = x * x;
        FRAC_2_SQRT_PI * (1.0 - x2 / 3.0 + x2 * x2 / 10.0)
    } else {
        erf(x) / x
    }
}

/// Density of `N(mean, var)` at `x`.
#[inline]
pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / var).exp() / (2.0 * PI * var).sqrt()
}

#[inline]
pub fn normal_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - LN_SQRT_2PI
}

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erf_reference_values() {
        // values from Abramowitz & Stegun table 7.1
        assert!((erf(0.5) - 0.520_499_877_813_046_5).abs() < 1e-15);
        assert!((erf(1.0) - 0.842_700_792_949_714_9).abs() < 1e-15);
        assert!((erfc(5.0) - 1.537_459_794_428_034_8e-12).abs() < 1e-25);
        assert_eq!(erf(0.0), 0.0);
    }

    #[test]
    fn erf_over_x_is_continuous_at_branch() {
        let x = 0.999_9e-4;
        assert!((erf_over_x(x) - erf(x) / x).abs() < 1e-15);
        assert!((erf_over_x(0.0) - FRAC_2_SQRT_PI).abs() < 1e-15);
    }

    #[test]
    fn log_pdf_matches_pdf() {
        for &(x, m, v) in &[(0.3, -0.1, 2.0), (5.0, 0.0, 0.5), (-1.0, 2.0, 7.0)] {
            assert!((normal_log_pdf(x, m, v).exp() - normal_pdf(x, m, v)).abs() < 1e-15);
        }
    }
}
