//! Independent route to the hat updates: direct 2-D quadrature of the
//! general replica equations over `(xi, y)`, plus closed forms of the three
//! Gaussian residual integrals the closed-form updates are assembled from.
//!
//! With `omega = m xi / sqrt(q)` and `V = 1 - m^2 / q`,
//!
//! ```text
//! m_hat     =  alpha E_xi ∫ dy  d_omega Z_out(y, omega, V) f_out(y, sqrt(q) xi, Sigma)
//! q_hat     =  alpha E_xi ∫ dy  Z_out(y, omega, V) f_out(y, sqrt(q) xi, Sigma)^2
//! sigma_hat = -alpha E_xi ∫ dy  Z_out(y, omega, V) d_omega f_out(y, sqrt(q) xi, Sigma)
//! ```

use std::f64::consts::PI;

use crate::channel::MixtureChannel;
use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::model::{OutlierModel, OverlapState};
use crate::quadrature::{breakpoints, integrate_2d, QuadConfig};
use crate::special::{erf, normal_pdf, std_normal_pdf};

const XI_CUT: f64 = 10.0;
const Y_CUT: f64 = 10.0;

/// Default tolerances for the oracle; tighter than the 1e-6 agreement it is
/// used to certify.
pub fn oracle_config() -> QuadConfig {
    QuadConfig {
        abs_tol: 1e-11,
        rel_tol: 1e-10,
        max_panels: 400,
    }
}

pub fn quadrature_hat_updates(
    loss: &LossSpec,
    state: &OverlapState,
    model: &OutlierModel,
    alpha: f64,
) -> Result<(f64, f64, f64)> {
    quadrature_hat_updates_with(loss, state, model, alpha, &oracle_config())
}

pub fn quadrature_hat_updates_with(
    loss: &LossSpec,
    state: &OverlapState,
    model: &OutlierModel,
    alpha: f64,
    cfg: &QuadConfig,
) -> Result<(f64, f64, f64)> {
    loss.validate()?;
    let (m, q, sigma) = (state.m, state.q, state.sigma);
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    if !(q >= 0.0) || m * m > q * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "quadrature needs q >= m^2 (got m = {m}, q = {q})"
        )));
    }
    let ch = MixtureChannel::new(model);
    let sq = q.sqrt();
    let slope = if q > 0.0 { m / sq } else { 0.0 };
    let v = (1.0 - slope * slope).max(0.0);
    let kink = loss.kink(sigma);

    let inner_breaks = |xi: f64| {
        let omega = slope * xi;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut pts = Vec::with_capacity(6);
        for (centre, sd) in ch.label_spread(omega, v) {
            lo = lo.min(centre - Y_CUT * sd);
            hi = hi.max(centre + Y_CUT * sd);
            pts.push(centre);
        }
        if let Some(k) = kink {
            pts.push(sq * xi - k);
            pts.push(sq * xi + k);
        }
        breakpoints(lo, hi, pts)
    };
    let outer = [-XI_CUT, 0.0, XI_CUT];

    let z_and_dz = |y: f64, omega: f64| {
        let mut z = 0.0;
        let mut dz = 0.0;
        for c in ch.components() {
            let var = c.gain * c.gain * v + c.noise;
            let n = c.weight * normal_pdf(y, c.gain * omega, var);
            z += n;
            dz += n * c.gain * (y - c.gain * omega) / var;
        }
        (z, dz)
    };

    let m_hat = integrate_2d(
        |xi, y| {
            let (_, dz) = z_and_dz(y, slope * xi);
            std_normal_pdf(xi) * dz * loss.f_out(y, sq * xi, sigma).0
        },
        &outer,
        inner_breaks,
        cfg,
    )?;
    let q_hat = integrate_2d(
        |xi, y| {
            let (z, _) = z_and_dz(y, slope * xi);
            let f = loss.f_out(y, sq * xi, sigma).0;
            std_normal_pdf(xi) * z * f * f
        },
        &outer,
        inner_breaks,
        cfg,
    )?;
    let sigma_hat = integrate_2d(
        |xi, y| {
            let (z, _) = z_and_dz(y, slope * xi);
            -std_normal_pdf(xi) * z * loss.f_out(y, sq * xi, sigma).1
        },
        &outer,
        inner_breaks,
        cfg,
    )?;
    Ok((alpha * m_hat.value, alpha * q_hat.value, alpha * sigma_hat.value))
}

/// Arguments shared by the three residual integrals: a single label
/// component with gain `beta` and noise `delta`, a clamp `a`, a kink `kappa`
/// and an inverse slope `lam` (the printed symbols), at overlaps `(m, q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualArgs {
    pub delta: f64,
    pub beta: f64,
    pub kappa: f64,
    pub lam: f64,
    pub a: f64,
    pub m: f64,
    pub q: f64,
}

impl ResidualArgs {
    /// `(s, zeta)`: standard deviation of the label around `beta omega`, and
    /// variance of the residual `y - sqrt(q) xi`.
    fn spreads(&self) -> (f64, f64) {
        let eta = self.m * self.m / self.q;
        let s = (self.delta + self.beta * self.beta * (1.0 - eta)).sqrt();
        let zeta = self.beta * self.beta + self.delta - 2.0 * self.beta * self.m + self.q;
        (s, zeta)
    }
}

/// `∫∫ dxi dy exp(-xi^2/2 - (beta omega - y)^2 / (2 s^2)) (beta omega - y) g(y - sqrt(q) xi)`
/// with `g` the clamp `r / lam` inside `|r| < kappa` and `±a` outside.
pub fn residual_integral_1(p: &ResidualArgs) -> f64 {
    let (s, zeta) = p.spreads();
    let e = (-p.kappa * p.kappa / (2.0 * zeta)).exp();
    2.0 * PI / p.lam
        * s.powi(3)
        * (2f64.sqrt() * (p.kappa - p.a * p.lam) * e / (PI * zeta).sqrt()
            - erf(p.kappa / (2.0 * zeta).sqrt()))
}

/// Same measure against `g^2`, where `g` is `r / lam` inside the band and
/// `a` in magnitude outside it.
pub fn residual_integral_2(p: &ResidualArgs) -> f64 {
    let (s, zeta) = p.spreads();
    let e = (-p.kappa * p.kappa / (2.0 * zeta)).exp();
    let al2 = (p.a * p.lam).powi(2);
    2.0 * PI / (p.lam * p.lam)
        * s
        * (al2 - p.kappa * (2.0 * zeta / PI).sqrt() * e + (zeta - al2) * erf(p.kappa / (2.0 * zeta).sqrt()))
}

/// Mass of the band `|y - sqrt(q) xi| < kappa` under the same measure.
pub fn residual_integral_3(p: &ResidualArgs) -> f64 {
    let (s, zeta) = p.spreads();
    2.0 * PI * s * erf(p.kappa / (2.0 * zeta).sqrt())
}

/// Hat updates for a clamped-linear `f_out` assembled component by component
/// from the residual integrals.
pub fn hats_from_residual_integrals(
    loss: &LossSpec,
    state: &OverlapState,
    model: &OutlierModel,
    alpha: f64,
) -> Result<(f64, f64, f64)> {
    let (kappa, lam, a) = match *loss {
        LossSpec::L1 => (state.sigma, state.sigma, 1.0),
        LossSpec::Huber { a } => (a * (1.0 + state.sigma), 1.0 + state.sigma, a),
        LossSpec::L2 => {
            return Err(Error::Domain("quadratic loss has no clamp".into()));
        }
    };
    let ch = MixtureChannel::new(model);
    let (mut m_hat, mut q_hat, mut sigma_hat) = (0.0, 0.0, 0.0);
    for c in ch.components() {
        let p = ResidualArgs {
            delta: c.noise,
            beta: c.gain,
            kappa,
            lam,
            a,
            m: state.m,
            q: state.q,
        };
        let (s, _) = p.spreads();
        let norm = c.weight / (2.0 * PI * s);
        m_hat -= norm * c.gain / (s * s) * residual_integral_1(&p);
        q_hat += norm * residual_integral_2(&p);
        sigma_hat += norm * residual_integral_3(&p) / lam;
    }
    Ok((alpha * m_hat, alpha * q_hat, alpha * sigma_hat))
}
