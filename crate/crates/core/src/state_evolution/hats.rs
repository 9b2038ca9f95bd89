//! Closed-form conjugate (hat) updates for the three losses at general `beta`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::model::{OutlierModel, OverlapState};
use crate::special::{erf, erfc, SQRT_2_OVER_PI};

/// Per-iterate constants of the residual distribution. Inside component `c`
/// the training residual `y - sqrt(q) xi` is centred Gaussian with variance
/// `zeta_c`; `mu_c` is the kink of `f_out` and `nu_c` its inverse slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConstants {
    pub zeta_in: f64,
    pub zeta_out: f64,
    pub chi_in: f64,
    pub chi_out: f64,
    pub mu_c: f64,
    pub nu_c: f64,
}

pub fn zetas(m: f64, q: f64, model: &OutlierModel) -> (f64, f64) {
    let b = model.beta;
    (
        model.delta_in - 2.0 * m + q + 1.0,
        model.delta_out + b * b + q - 2.0 * b * m,
    )
}

pub(crate) fn check_zetas(zeta_in: f64, zeta_out: f64) -> Result<()> {
    if zeta_in > 0.0 && zeta_out > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidState { zeta_in, zeta_out })
    }
}

/// Constants for `loss` at `state`. For the quadratic loss there is no kink,
/// so `mu_c` and both `chi` are infinite.
pub fn channel_constants(
    loss: &LossSpec,
    state: &OverlapState,
    model: &OutlierModel,
) -> Result<ChannelConstants> {
    let (zeta_in, zeta_out) = zetas(state.m, state.q, model);
    check_zetas(zeta_in, zeta_out)?;
    let (mu, nu) = match *loss {
        LossSpec::L2 => (f64::INFINITY, 1.0 + state.sigma),
        LossSpec::L1 => (state.sigma, state.sigma),
        LossSpec::Huber { a } => (a * (1.0 + state.sigma), 1.0 + state.sigma),
    };
    Ok(ChannelConstants {
        zeta_in,
        zeta_out,
        chi_in: mu / (2.0 * zeta_in).sqrt(),
        chi_out: mu / (2.0 * zeta_out).sqrt(),
        mu_c: mu,
        nu_c: nu,
    })
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("sigma must be positive, got {sigma}")))
    }
}

pub fn update_hats_l2(state: &OverlapState, model: &OutlierModel, alpha: f64) -> Result<(f64, f64, f64)> {
    check_sigma(state.sigma)?;
    let s = 1.0 + state.sigma;
    let g = model.gamma();
    let m_hat = alpha * g / s;
    let sigma_hat = alpha / s;
    let q_hat = alpha / (s * s) * (model.lambda_cap() + state.q - 2.0 * state.m * g);
    Ok((m_hat, q_hat, sigma_hat))
}

pub fn update_hats_l1(state: &OverlapState, model: &OutlierModel, alpha: f64) -> Result<(f64, f64, f64)> {
    check_sigma(state.sigma)?;
    let c = channel_constants(&LossSpec::L1, state, model)?;
    Ok(clamped_hats(&c, model, alpha))
}

pub fn update_hats_huber(
    state: &OverlapState,
    model: &OutlierModel,
    alpha: f64,
    a: f64,
) -> Result<(f64, f64, f64)> {
    check_sigma(state.sigma)?;
    LossSpec::huber(a)?;
    let c = channel_constants(&LossSpec::Huber { a }, state, model)?;
    Ok(clamped_hats(&c, model, alpha))
}

pub fn update_hats(
    loss: &LossSpec,
    state: &OverlapState,
    model: &OutlierModel,
    alpha: f64,
) -> Result<(f64, f64, f64)> {
    match *loss {
        LossSpec::L2 => update_hats_l2(state, model, alpha),
        LossSpec::L1 => update_hats_l1(state, model, alpha),
        LossSpec::Huber { a } => update_hats_huber(state, model, alpha, a),
    }
}

/// Shared form for `f_out = clamp(r / nu, -mu / nu, mu / nu)`.
///
/// `sum_c w_c [(zeta_c - mu^2) erf(chi_c) + mu^2]` is evaluated as
/// `sum_c w_c [zeta_c erf(chi_c) + mu^2 erfc(chi_c)]` so that a huge Huber
/// scale does not cancel catastrophically.
fn clamped_hats(c: &ChannelConstants, model: &OutlierModel, alpha: f64) -> (f64, f64, f64) {
    let (w_in, w_out) = (1.0 - model.eps, model.eps);
    let (e_in, e_out) = (erf(c.chi_in), erf(c.chi_out));
    let m_hat = alpha / c.nu_c * (w_in * e_in + model.beta * w_out * e_out);
    let sigma_hat = alpha / c.nu_c * (w_in * e_in + w_out * e_out);
    let mu = c.mu_c;
    let part = |w: f64, zeta: f64, chi: f64, e: f64| {
        if w == 0.0 {
            return 0.0;
        }
        let tail = if chi.is_finite() {
            mu * mu * erfc(chi) - mu * SQRT_2_OVER_PI * zeta.sqrt() * (-chi * chi).exp()
        } else {
            0.0
        };
        w * (zeta * e + tail)
    };
    let q_hat = alpha / (c.nu_c * c.nu_c)
        * (part(w_in, c.zeta_in, c.chi_in, e_in) + part(w_out, c.zeta_out, c.chi_out, e_out));
    (m_hat, q_hat, sigma_hat)
}
