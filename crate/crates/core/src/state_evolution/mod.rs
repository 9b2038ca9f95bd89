//! Replica fixed point of penalised empirical risk minimisation with the
//! quadratic, absolute and Huber losses under the outlier channel.
//!
//! The three loss-independent equations come from the ridge penalty; the
//! three conjugate ones depend on the loss through `f_out`. Both sets are
//! iterated with damping until the overlaps stop moving.

mod hats;
mod oracle;
mod ridge;

use serde::{Deserialize, Serialize};

pub use crate::loss::LossSpec;
use crate::error::{invalid, Error, Result};
use crate::model::{OutlierModel, OverlapState};
pub use hats::{
    channel_constants, update_hats, update_hats_huber, update_hats_l1, update_hats_l2, zetas,
    ChannelConstants,
};
pub use oracle::{
    hats_from_residual_integrals, oracle_config, quadrature_hat_updates, quadrature_hat_updates_with,
    residual_integral_1, residual_integral_2, residual_integral_3, ResidualArgs,
};
pub use ridge::ridge_explicit;
pub(crate) use ridge::check_ridge_lambda;
pub use ridge::lambda_floor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    /// Weight `mu` of the new iterate in `x <- mu x_new + (1 - mu) x_old`.
    pub damping: f64,
    /// Bound on `|x_new - x_old| / max(1, |x_old|)` over all six parameters.
    pub tolerance: f64,
    pub max_iters: usize,
    /// Starting `(m, q, sigma)`; the hats are recomputed from these.
    pub init: OverlapState,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            damping: 0.8,
            tolerance: 1e-9,
            max_iters: 100_000,
            init: OverlapState {
                m: 0.1,
                q: 0.5,
                sigma: 1.0,
                m_hat: 0.0,
                q_hat: 0.0,
                sigma_hat: 0.0,
            },
        }
    }
}

impl FixedPointConfig {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(invalid("damping", format!("{} not in (0, 1]", self.damping)));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters", "must be at least 1"));
        }
        if !(self.init.sigma > 0.0) || !(self.init.q >= 0.0) {
            return Err(invalid("init", "needs sigma > 0 and q >= 0"));
        }
        Ok(())
    }
}

pub fn update_nonhats(m_hat: f64, q_hat: f64, sigma_hat: f64, lambda: f64) -> Result<(f64, f64, f64)> {
    let d = lambda + sigma_hat;
    if !(d > 0.0) {
        return Err(Error::Divergence(d));
    }
    Ok((m_hat / d, (m_hat * m_hat + q_hat) / (d * d), 1.0 / d))
}

fn check_problem(loss: &LossSpec, model: &OutlierModel, alpha: f64, lambda: f64) -> Result<()> {
    model.validate()?;
    loss.validate()?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid("alpha", format!("{alpha} must be positive and finite")));
    }
    match loss {
        LossSpec::L2 if lambda < 0.0 => check_ridge_lambda(alpha, lambda),
        _ if !(lambda >= 0.0 && lambda.is_finite()) => Err(invalid(
            "lambda",
            format!("{lambda}: only the quadratic loss admits negative penalties"),
        )),
        _ => Ok(()),
    }
}

fn feasible(loss: &LossSpec, s: &OverlapState, model: &OutlierModel) -> bool {
    if !(s.sigma > 0.0 && s.q >= 0.0) || s.as_array().iter().any(|x| !x.is_finite()) {
        return false;
    }
    match loss {
        LossSpec::L2 => true,
        _ => {
            let (zi, zo) = zetas(s.m, s.q, model);
            zi > 0.0 && zo > 0.0
        }
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

fn damped_step(
    loss: &LossSpec,
    model: &OutlierModel,
    alpha: f64,
    lambda: f64,
    old: &OverlapState,
    damping: f64,
) -> Result<OverlapState> {
    let (mh, qh, sh) = update_hats(loss, old, model, alpha)?;
    let mut t = damping;
    let mut last_err = None;
    // Halve the step towards the previous iterate while it leaves the
    // feasible region (non-positive zeta or lambda + sigma_hat).
    for _ in 0..=30 {
        let hats = (
            lerp(old.m_hat, mh, t),
            lerp(old.q_hat, qh, t),
            lerp(old.sigma_hat, sh, t),
        );
        match update_nonhats(hats.0, hats.1, hats.2, lambda) {
            Ok((m, q, sigma)) => {
                let next = OverlapState {
                    m: lerp(old.m, m, t),
                    q: lerp(old.q, q, t),
                    sigma: lerp(old.sigma, sigma, t),
                    m_hat: hats.0,
                    q_hat: hats.1,
                    sigma_hat: hats.2,
                };
                if feasible(loss, &next, model) {
                    return Ok(next);
                }
                let (zeta_in, zeta_out) = zetas(next.m, next.q, model);
                last_err = Some(Error::InvalidState { zeta_in, zeta_out });
            }
            Err(e) => last_err = Some(e),
        }
        t *= 0.5;
    }
    Err(last_err.expect("at least one attempt"))
}

/// Largest scaled change between two iterates.
pub fn scaled_change(a: &OverlapState, b: &OverlapState) -> f64 {
    a.as_array()
        .iter()
        .zip(b.as_array())
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Initial iterate: `(m, q, sigma)` from the config and hats from one
/// undamped update.
fn initial_state(loss: &LossSpec, model: &OutlierModel, alpha: f64, cfg: &FixedPointConfig) -> Result<OverlapState> {
    let mut s = cfg.init;
    let (mh, qh, sh) = update_hats(loss, &s, model, alpha)?;
    s.m_hat = mh;
    s.q_hat = qh;
    s.sigma_hat = sh;
    Ok(s)
}

/// Solve the six self-consistent equations by damped iteration.
///
/// `lambda < 0` is accepted for the quadratic loss only, above the ridge
/// convexity floor.
pub fn solve_fixed_point(
    loss: LossSpec,
    model: &OutlierModel,
    alpha: f64,
    lambda: f64,
    config: &FixedPointConfig,
) -> Result<OverlapState> {
    check_problem(&loss, model, alpha, lambda)?;
    config.validate()?;
    let mut state = initial_state(&loss, model, alpha, config)?;
    let mut residual = f64::INFINITY;
    for _ in 0..config.max_iters {
        let next = damped_step(&loss, model, alpha, lambda, &state, config.damping)?;
        residual = scaled_change(&next, &state);
        state = next;
        if residual < config.tolerance {
            return Ok(state);
        }
    }
    Err(Error::NotConverged {
        iterations: config.max_iters,
        residual,
        last: Box::new(state),
    })
}

/// Residual of one undamped sweep at `state`, in the scaled metric of
/// [`FixedPointConfig::tolerance`].
pub fn fixed_point_residual(
    loss: LossSpec,
    model: &OutlierModel,
    alpha: f64,
    lambda: f64,
    state: &OverlapState,
) -> Result<f64> {
    let next = damped_step(&loss, model, alpha, lambda, state, 1.0)?;
    Ok(scaled_change(&next, state))
}
