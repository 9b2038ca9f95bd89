//! Bayes-optimal asymptotics: the two-parameter fixed point `(q_b, q_hat_b)`,
//! the resulting errors and the `1/alpha` rate of the estimation error.

use serde::{Deserialize, Serialize};

use crate::channel::MixtureChannel;
use crate::error::{invalid, Error, Result};
use crate::model::{teacher_student_angle, ErrorReport, OutlierModel};
use crate::quadrature::{breakpoints, integrate_2d, QuadConfig};
use crate::special::std_normal_pdf;
use crate::state_evolution::FixedPointConfig;

const XI_CUT: f64 = 8.0;
const Y_CUT: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BOState {
    pub q_b: f64,
    pub q_hat_b: f64,
}

fn bo_quad_config() -> QuadConfig {
    QuadConfig {
        abs_tol: 1e-13,
        rel_tol: 1e-11,
        max_panels: 400,
    }
}

/// `E_xi ∫ dy Z_out f_out^2` at `omega = sqrt(q) xi`, `V = 1 - q`: the
/// channel Fisher information seen through a Gaussian belief of variance
/// `1 - q`. Equals `q_hat_b / alpha`.
pub fn bo_channel_information(model: &OutlierModel, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("q_b = {q} outside [0, 1]")));
    }
    let ch = MixtureChannel::new(model);
    let sq = q.sqrt();
    let v = 1.0 - q;
    let inner = |xi: f64| {
        let omega = sq * xi;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut centres = Vec::with_capacity(2);
        for (c, sd) in ch.label_spread(omega, v) {
            lo = lo.min(c - Y_CUT * sd);
            hi = hi.max(c + Y_CUT * sd);
            centres.push(c);
        }
        breakpoints(lo, hi, centres)
    };
    let r = integrate_2d(
        |xi, y| {
            let (lz, f, _) = ch.bayes_f_out(y, sq * xi, v);
            // log-space: the density can underflow where the score is large
            std_normal_pdf(xi) * (lz + 2.0 * f.abs().ln()).exp()
        },
        &[-XI_CUT, 0.0, XI_CUT],
        inner,
        &bo_quad_config(),
    )?;
    Ok(r.value)
}

/// Solve `q_b = q_hat_b / (1 + q_hat_b)`, `q_hat_b = alpha I(q_b)` by damped
/// iteration from `config.init.q`.
pub fn bo_fixed_point(model: &OutlierModel, alpha: f64, config: &FixedPointConfig) -> Result<BOState> {
    model.validate()?;
    config.validate()?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid("alpha", format!("{alpha} must be positive and finite")));
    }
    let mu = config.damping;
    let mut q = config.init.q.clamp(0.0, 1.0 - 1e-12);
    let mut q_hat = alpha * bo_channel_information(model, q)?;
    let mut residual = f64::INFINITY;
    for _ in 0..config.max_iters {
        let q_new = q_hat / (1.0 + q_hat);
        let q_next = mu * q_new + (1.0 - mu) * q;
        let q_hat_new = alpha * bo_channel_information(model, q_next)?;
        let q_hat_next = mu * q_hat_new + (1.0 - mu) * q_hat;
        residual = ((q_next - q).abs()).max((q_hat_next - q_hat).abs() / q_hat.abs().max(1.0));
        q = q_next;
        q_hat = q_hat_next;
        if residual < config.tolerance {
            // report the pair on the exact relation
            return Ok(BOState {
                q_b: q_hat / (1.0 + q_hat),
                q_hat_b: q_hat,
            });
        }
    }
    Err(Error::BayesNotConverged {
        iterations: config.max_iters,
        residual,
        q_b: q,
    })
}

pub fn bo_errors(bo: &BOState, model: &OutlierModel) -> ErrorReport {
    let g = model.gamma();
    let gen = 1.0 + model.eps * (model.beta * model.beta - 1.0) - bo.q_b * g * g + model.delta_eff();
    ErrorReport {
        gen_error: gen,
        excess_gen_error: gen - model.gen_error_floor(),
        estim_error: 1.0 - bo.q_b,
        angle: teacher_student_angle(bo.q_b, bo.q_b).ok(),
    }
}

/// `c_hat` in `1 - q_b ≈ 1 / (c_hat alpha)`: the channel information at a
/// perfectly known pre-activation, averaged over its standard normal law.
pub fn bo_rate_coefficient(model: &OutlierModel) -> Result<f64> {
    model.validate()?;
    bo_channel_information(model, 1.0)
}

/// Power-law fit of the Bayes-optimal estimation error over a range of `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Free least-squares slope of `log E_estim` against `log alpha`.
    pub slope: f64,
    /// `exp` of the intercept of the same fit.
    pub prefactor_free: f64,
    /// Prefactor `C` of the best `C / alpha` fit in log space.
    pub prefactor: f64,
    /// `c_hat`; the predicted prefactor is `1 / c_hat`.
    pub c_hat: f64,
}

/// Fit `E_estim^BO(alpha)` at the given sample complexities.
pub fn bo_rate_fit(model: &OutlierModel, alphas: &[f64], config: &FixedPointConfig) -> Result<(RateFit, Vec<f64>)> {
    if alphas.len() < 2 {
        return Err(invalid("alpha", "need at least two values for a fit"));
    }
    let mut estim = Vec::with_capacity(alphas.len());
    for &a in alphas {
        estim.push(bo_errors(&bo_fixed_point(model, a, config)?, model).estim_error);
    }
    let xs: Vec<f64> = alphas.iter().map(|a| a.ln()).collect();
    let ys: Vec<f64> = estim.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let fit = RateFit {
        slope,
        prefactor_free: (my - slope * mx).exp(),
        prefactor: (my + mx).exp(),
        c_hat: bo_rate_coefficient(model)?,
    };
    Ok((fit, estim))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> FixedPointConfig {
        FixedPointConfig::with_tolerance(1e-12)
    }

    fn gaussian_q(alpha: f64, delta: f64) -> f64 {
        let b = 1.0 + delta + alpha;
        (b - (b * b - 4.0 * alpha).sqrt()) / 2.0
    }

    #[test]
    fn gaussian_channel_closed_form() {
        let model = OutlierModel::new(0.0, 0.0, 0.7, 5.0).unwrap();
        for alpha in [0.3, 2.0, 25.0] {
            let bo = bo_fixed_point(&model, alpha, &cfg()).unwrap();
            assert!((bo.q_b - gaussian_q(alpha, 0.7)).abs() < 1e-8, "{alpha}");
        }
        // information at fixed q
        let i = bo_channel_information(&model, 0.4).unwrap();
        assert!((i - 1.0 / (1.0 - 0.4 + 0.7)).abs() < 1e-10);
    }

    #[test]
    fn no_data_no_overlap() {
        let model = OutlierModel::new(0.3, 0.0, 1.0, 5.0).unwrap();
        let bo = bo_fixed_point(&model, 1e-6, &cfg()).unwrap();
        assert!(bo.q_b < 1e-5);
    }

    #[test]
    fn rate_coefficient_limits() {
        let g = OutlierModel::new(0.0, 0.0, 0.8, 5.0).unwrap();
        assert!((bo_rate_coefficient(&g).unwrap() - 1.0 / 0.8).abs() < 1e-6);
        let collapsed = OutlierModel::new(1.0, 1.0, 3.0, 0.4).unwrap();
        assert!((bo_rate_coefficient(&collapsed).unwrap() - 1.0 / 0.4).abs() < 1e-6);
    }

    #[test]
    fn error_identities() {
        let model = OutlierModel::new(0.3, 0.4, 1.0, 5.0).unwrap();
        let full = bo_errors(&BOState { q_b: 1.0, q_hat_b: f64::INFINITY }, &model);
        assert_eq!(full.estim_error, 0.0);
        assert!((full.gen_error - model.gen_error_floor()).abs() < 1e-15);
        assert!(full.excess_gen_error.abs() < 1e-15);
        let none = bo_errors(&BOState { q_b: 0.0, q_hat_b: 0.0 }, &model);
        assert_eq!(none.estim_error, 1.0);
        let clean = OutlierModel::new(0.0, 0.0, 0.6, 2.0).unwrap();
        let r = bo_errors(&BOState { q_b: 0.35, q_hat_b: 0.35 / 0.65 }, &clean);
        assert!((r.gen_error - (1.0 - 0.35 + 0.6)).abs() < 1e-15);
    }

    #[test]
    fn overlap_grows_with_samples() {
        let model = OutlierModel::new(0.3, 0.0, 1.0, 5.0).unwrap();
        let mut prev = 0.0;
        for alpha in [0.5, 1.0, 3.0, 10.0, 30.0] {
            let q = bo_fixed_point(&model, alpha, &cfg()).unwrap().q_b;
            assert!(q >= prev - 1e-10);
            prev = q;
        }
    }
}

#[cfg(test)]
mod rate_tests {
    use super::*;

    #[test]
    fn gaussian_rate_is_noise_variance() {
        // eps = 0: 1 - q_b -> delta / alpha
        let model = OutlierModel::new(0.0, 0.0, 0.5, 1.0).unwrap();
        let (fit, _) = bo_rate_fit(&model, &[1e3, 1e4], &FixedPointConfig::with_tolerance(1e-13)).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-3);
        assert!((fit.prefactor * fit.c_hat - 1.0).abs() < 1e-2);
    }
}
