//! Closed-form fixed point for the quadratic loss.

use crate::error::{invalid, Result};
use crate::model::{OutlierModel, OverlapState};

/// Smallest admissible ridge penalty at sample complexity `alpha`: the
/// sample covariance `X^T X / d` has its lowest nonzero eigenvalue near
/// `(1 - sqrt(alpha))^2`. Below `alpha = 1` only positive penalties are allowed.
pub fn lambda_floor(alpha: f64) -> f64 {
    if alpha > 1.0 {
        -(1.0 - alpha.sqrt()).powi(2)
    } else {
        0.0
    }
}

pub(crate) fn check_ridge_lambda(alpha: f64, lambda: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid("alpha", format!("{alpha} must be positive and finite")));
    }
    if lambda.is_nan() || lambda == f64::INFINITY {
        return Err(invalid("lambda", format!("{lambda} is not a finite penalty")));
    }
    let floor = lambda_floor(alpha);
    let ok = if alpha > 1.0 { lambda > floor } else { lambda > 0.0 };
    if !ok {
        return Err(invalid(
            "lambda",
            format!("{lambda} must exceed {floor} at alpha = {alpha}"),
        ));
    }
    Ok(())
}

/// The explicit solution of the quadratic-loss equations.
///
/// `m` and `q` use the closed forms in `p = alpha + lambda`, `c = alpha - lambda`
/// and `t = sqrt((p - 1)^2 + 4 lambda)`. `Sigma = (1 - alpha - lambda + t) / (2 lambda)`
/// is rationalised to `2 / (t + p - 1)` when `p >= 1`, which is exact, stays
/// finite at `lambda = 0` (where it equals `1 / (alpha - 1)`), and avoids the
/// cancellation of the printed form for small penalties.
pub fn ridge_explicit(model: &OutlierModel, alpha: f64, lambda: f64) -> Result<OverlapState> {
    model.validate()?;
    check_ridge_lambda(alpha, lambda)?;
    let g = model.gamma();
    let big_l = model.lambda_cap();
    let p = alpha + lambda;
    let c = alpha - lambda;
    let t = ((p - 1.0).powi(2) + 4.0 * lambda).sqrt();

    let m = 2.0 * alpha * g / (p + t + 1.0);
    let q = 4.0 * alpha * (alpha * g * g * (p + t - 3.0) + big_l * (p + t + 1.0))
        / ((p + t + 1.0) * (p * p - 2.0 * c + t * t + 2.0 * t * (p + 1.0) + 1.0));
    let sigma = if p >= 1.0 {
        2.0 / (t + p - 1.0)
    } else {
        (t - (p - 1.0)) / (2.0 * lambda)
    };
    let sigma_hat = alpha / (1.0 + sigma);
    let m_hat = m * (lambda + sigma_hat);
    let q_hat = q * (lambda + sigma_hat).powi(2) - m_hat * m_hat;
    Ok(OverlapState {
        m,
        q,
        sigma,
        m_hat,
        q_hat,
        sigma_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state_evolution::hats::update_hats_l2;

    #[test]
    fn documented_substitution() {
        let model = OutlierModel::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let s = ridge_explicit(&model, 2.0, 1.0).unwrap();
        let t = 8f64.sqrt();
        assert!((s.m - 4.0 / (4.0 + t)).abs() < 1e-15);
        assert!((s.m - (2.0 - 2f64.sqrt())).abs() < 1e-15);
        assert!((s.sigma - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        assert!((s.sigma_hat - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn sigma_matches_printed_form_away_from_zero() {
        let model = OutlierModel::new(0.2, 0.0, 1.0, 3.0).unwrap();
        for &(alpha, lambda) in &[(0.5, 0.3), (2.0, 1.0), (10.0, 0.01), (0.9, 5.0)] {
            let s = ridge_explicit(&model, alpha, lambda).unwrap();
            let t = ((alpha + lambda - 1.0f64).powi(2) + 4.0 * lambda).sqrt();
            let printed = (1.0 - alpha - lambda + t) / (2.0 * lambda);
            let printed_hat = (-1.0 + alpha - lambda + t) / 2.0;
            assert!((s.sigma - printed).abs() < 1e-12 * printed);
            assert!((s.sigma_hat - printed_hat).abs() < 1e-12 * (1.0 + printed_hat));
        }
    }

    #[test]
    fn zero_penalty_limit() {
        let model = OutlierModel::new(0.0, 0.0, 0.5, 1.0).unwrap();
        let s = ridge_explicit(&model, 3.0, 0.0).unwrap();
        assert!((s.sigma - 0.5).abs() < 1e-15);
        // least squares: q = 1 + delta / (alpha - 1)
        assert!((s.q - 1.25).abs() < 1e-14);
        assert!((s.m - 1.0).abs() < 1e-15);
        let tiny = ridge_explicit(&model, 3.0, 1e-12).unwrap();
        assert!((tiny.sigma - 0.5).abs() < 1e-11);
        assert!(ridge_explicit(&model, 0.5, 0.0).is_err());
    }

    #[test]
    fn heavy_penalty_shrinks() {
        let model = OutlierModel::new(0.3, 0.0, 1.0, 5.0).unwrap();
        let s = ridge_explicit(&model, 3.0, 1e9).unwrap();
        assert!(s.m.abs() < 1e-8 && s.q < 1e-15);
    }

    #[test]
    fn is_a_fixed_point() {
        let model = OutlierModel::new(0.4, 1.7, 0.6, 2.0).unwrap();
        for &(alpha, lambda) in &[(0.5, 0.1), (4.0, -0.5), (30.0, 2.0)] {
            let s = ridge_explicit(&model, alpha, lambda).unwrap();
            let (mh, qh, sh) = update_hats_l2(&s, &model, alpha).unwrap();
            assert!((mh - s.m_hat).abs() < 1e-12 * (1.0 + mh.abs()));
            assert!((qh - s.q_hat).abs() < 1e-10 * (1.0 + qh.abs()), "{qh} {}", s.q_hat);
            assert!((sh - s.sigma_hat).abs() < 1e-12 * (1.0 + sh));
        }
    }

    #[test]
    fn negative_penalty_bound() {
        let model = OutlierModel::new(0.3, 0.0, 1.0, 5.0).unwrap();
        assert!(ridge_explicit(&model, 4.0, -0.99).is_ok());
        assert!(ridge_explicit(&model, 4.0, -1.0).is_err());
        assert!(ridge_explicit(&model, 1.0, -1e-3).is_err());
    }
}
