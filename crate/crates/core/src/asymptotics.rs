//! Closed-form limits: the large-`alpha` plateaus and consistency conditions
//! of the three losses, the optimal linear growth of the penalty, and the
//! small-`eps` expansion of optimally-regularised ridge.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::loss::LossSpec;
use crate::model::{excess_gen_error_from_overlaps, ErrorReport, OutlierModel};
use crate::special::{erf, erfc, SQRT_2_OVER_PI};

/// Coefficients of a series in a small parameter `s` (`1/alpha` or `eps`):
/// `order0 + order1 s + order2 s^2`. `order2` is absent when the source
/// only provides the first two terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCoefficients {
    pub order0: f64,
    pub order1: f64,
    pub order2: Option<f64>,
}

impl ExpansionCoefficients {
    pub fn eval(&self, s: f64) -> f64 {
        self.order0 + self.order1 * s + self.order2.unwrap_or(0.0) * s * s
    }
}

/// Leading-order solution of the fixed point when `lambda = lambda1 alpha + O(1)`
/// and `alpha -> inf`: `Sigma ~ sigma0 / alpha`, hats `~ alpha x (m_hat0, q_hat0, sigma_hat0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadingOrderState {
    pub m0: f64,
    pub q0: f64,
    pub sigma0: f64,
    pub m_hat0: f64,
    pub q_hat0: f64,
    pub sigma_hat0: f64,
    pub lambda1: f64,
}

impl LeadingOrderState {
    /// Plateau errors; the angle vanishes since `q0 = m0^2`.
    pub fn errors(&self, model: &OutlierModel) -> ErrorReport {
        ErrorReport::from_overlaps(self.m0, self.q0, model)
    }
}

/// Large-`alpha` series of ridge at fixed `lambda`. The first element is the
/// excess generalisation error (no constant term; it vanishes as `alpha -> inf`),
/// the second the estimation error. Coefficients multiply powers of `1/alpha`.
pub fn large_alpha_l2(model: &OutlierModel, lambda: f64) -> (ExpansionCoefficients, ExpansionCoefficients) {
    let (e, b, l, de) = (model.eps, model.beta, lambda, model.delta_eff());
    let bm1 = b - 1.0;
    let mix = bm1 * bm1 * (e - 1.0) * e;
    let gen = ExpansionCoefficients {
        order0: 0.0,
        order1: de - mix,
        order2: Some(2.0 * bm1 * bm1 * l * (e - 1.0) * e + (bm1 * l * e + l).powi(2) - mix - 2.0 * de * l + de),
    };
    let estim = ExpansionCoefficients {
        order0: bm1 * bm1 * e * e,
        order1: bm1 * e * ((2.0 * l + 1.0) * (e - 1.0) - b * (2.0 * l * e + e - 1.0)) + de,
        order2: Some(
            l * (bm1 * e * (l * (3.0 * bm1 * e + 4.0) - 2.0 * b) + l) - mix - 2.0 * de * l + de,
        ),
    };
    (gen, estim)
}

/// Leading-order hats `(m_hat0, q_hat0, sigma_hat0)` at overlap `m0`.
fn leading_hats(loss: &LossSpec, model: &OutlierModel, m0: f64) -> (f64, f64, f64) {
    let (e, b) = (model.eps, model.beta);
    let zi = model.delta_in + (m0 - 1.0).powi(2);
    let zo = model.delta_out + (m0 - b).powi(2);
    match *loss {
        LossSpec::L2 => (model.gamma(), zi * (1.0 - e) + zo * e, 1.0),
        LossSpec::L1 => {
            let (ri, ro) = (1.0 / zi.sqrt(), 1.0 / zo.sqrt());
            (
                SQRT_2_OVER_PI * ((1.0 - e) * ri + b * e * ro),
                1.0,
                SQRT_2_OVER_PI * ((1.0 - e) * ri + e * ro),
            )
        }
        LossSpec::Huber { a } => {
            let (ci, co) = (a / (2.0 * zi).sqrt(), a / (2.0 * zo).sqrt());
            let (ei, eo) = (erf(ci), erf(co));
            // full clamped second moment with nu = 1, mu = a
            let part = |z: f64, chi: f64, er: f64| {
                z * er + a * a * erfc(chi) - a * SQRT_2_OVER_PI * z.sqrt() * (-chi * chi).exp()
            };
            (
                (1.0 - e) * ei + b * e * eo,
                (1.0 - e) * part(zi, ci, ei) + e * part(zo, co, eo),
                (1.0 - e) * ei + e * eo,
            )
        }
    }
}

const ROOT_TOL: f64 = 1e-12;
const ROOT_SCAN: usize = 400;

/// Solve the reduced leading-order system for `m0` on `(0, max(1, beta) + 5)`.
pub fn large_alpha_leading(loss: LossSpec, model: &OutlierModel, lambda1: f64) -> Result<LeadingOrderState> {
    model.validate()?;
    loss.validate()?;
    if !lambda1.is_finite() {
        return Err(invalid("lambda1", "must be finite"));
    }
    let g = |m0: f64| {
        let (mh, _, sh) = leading_hats(&loss, model, m0);
        m0 * (lambda1 + sh) - mh
    };
    let hi = model.beta.max(1.0) + 5.0;
    let lo = 1e-12 * hi;
    // scan for sign changes to detect a missing or non-unique root
    let mut brackets = Vec::new();
    let mut x0 = lo;
    let mut g0 = g(x0);
    for k in 1..=ROOT_SCAN {
        let x1 = lo + (hi - lo) * k as f64 / ROOT_SCAN as f64;
        let g1 = g(x1);
        if g0 == 0.0 {
            brackets.push((x0, x0));
        } else if g0.signum() != g1.signum() {
            brackets.push((x0, x1));
        }
        x0 = x1;
        g0 = g1;
    }
    let (a, b) = match brackets.as_slice() {
        [] => return Err(Error::Root(format!("no root for m0 in (0, {hi}) at lambda1 = {lambda1}"))),
        [one] => *one,
        many => {
            return Err(Error::Root(format!(
                "{} roots for m0 in (0, {hi}) at lambda1 = {lambda1}",
                many.len()
            )))
        }
    };
    let m0 = bisect_secant(g, a, b)?;
    let (m_hat0, q_hat0, sigma_hat0) = leading_hats(&loss, model, m0);
    Ok(LeadingOrderState {
        m0,
        q0: m0 * m0,
        sigma0: 1.0 / (lambda1 + sigma_hat0),
        m_hat0,
        q_hat0,
        sigma_hat0,
        lambda1,
    })
}

/// Bisection down to a narrow bracket, then secant steps kept inside it.
fn bisect_secant<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> Result<f64> {
    if a == b {
        return Ok(a);
    }
    let mut fa = f(a);
    for _ in 0..60 {
        if (b - a).abs() < 1e-6 * (1.0 + a.abs()) {
            break;
        }
        let c = 0.5 * (a + b);
        let fc = f(c);
        if fc == 0.0 {
            return Ok(c);
        }
        if fc.signum() == fa.signum() {
            a = c;
            fa = fc;
        } else {
            b = c;
        }
    }
    let (mut x0, mut x1) = (a, b);
    let (mut f0, mut f1) = (fa, f(b));
    for _ in 0..100 {
        if (x1 - x0).abs() < ROOT_TOL * (1.0 + x1.abs()) || f1 == 0.0 {
            return Ok(x1);
        }
        let mut x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        if !(x2 > a.min(b) && x2 < a.max(b)) {
            x2 = 0.5 * (x0 + x1);
        }
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = f(x1);
    }
    Err(Error::Root("secant polish did not settle".into()))
}

/// `Delta_out - Delta_in >= (1 - beta)^2 (2 eps - 1)` for `beta < 1`, the
/// reversed inequality for `beta > 1`, always true at `beta = 1`.
pub fn gen_consistency_condition(model: &OutlierModel) -> bool {
    let lhs = model.delta_out - model.delta_in;
    let rhs = (1.0 - model.beta).powi(2) * (2.0 * model.eps - 1.0);
    if model.beta < 1.0 {
        lhs >= rhs
    } else if model.beta > 1.0 {
        lhs <= rhs
    } else {
        true
    }
}

/// `lambda1 = m_hat0 / Gamma - sigma_hat0` at `m0 = Gamma`: the growth rate
/// of the penalty that makes the generalisation error consistent. Negative
/// when no admissible (`lambda >= 0`) choice exists.
pub fn optimal_lambda1_gen(loss: LossSpec, model: &OutlierModel) -> Result<f64> {
    model.validate()?;
    loss.validate()?;
    if let LossSpec::L2 = loss {
        return Ok(0.0);
    }
    let g = model.gamma();
    if g == 0.0 {
        return Err(Error::Domain("Gamma = 0: the target overlap is zero".into()));
    }
    let (mh, _, sh) = leading_hats(&loss, model, g);
    Ok(mh / g - sh)
}

/// `lambda1` that drives `m0` to one, i.e. a consistent estimation error.
/// Its sign is that of `beta - 1`.
pub fn optimal_lambda1_estim(loss: LossSpec, model: &OutlierModel) -> Result<f64> {
    model.validate()?;
    loss.validate()?;
    let zo = model.delta_out + (1.0 - model.beta).powi(2);
    let k = (model.beta - 1.0) * model.eps;
    Ok(match loss {
        LossSpec::L2 => k,
        LossSpec::L1 => k * SQRT_2_OVER_PI / zo.sqrt(),
        LossSpec::Huber { a } => k * erf(a / (2.0 * zo).sqrt()),
    })
}

/// Convexity threshold `-(1 - sqrt(alpha))^2` for the ridge penalty, with the
/// Hessian normalised as `X^T X / d + lambda`.
pub fn ridge_negative_lambda_bound(alpha: f64) -> Result<f64> {
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return Err(invalid("alpha", format!("{alpha}: the bound needs alpha >= 1")));
    }
    Ok(-(1.0 - alpha.sqrt()).powi(2))
}

/// Whether the ridge penalty needed for a consistent estimation error,
/// `(beta - 1) eps alpha` at leading order, stays above the convexity
/// threshold `~ -alpha`.
pub fn estim_consistency_negative_reg(model: &OutlierModel) -> bool {
    (model.beta - 1.0) * model.eps > -1.0
}

/// Small-`eps` expansion of optimally-regularised ridge: the optimal penalty
/// `Delta_in + lambda1 eps` and the generalisation error.
///
/// The error series starts at the `eps = 0` Bayes-optimal value; its
/// first-order coefficient is the `eps`-slope of `E_gen - Delta_eff`, the
/// noise-subtracted error, at fixed `(alpha, Delta_in, Delta_out, beta)`.
pub fn small_eps_expansion(model: &OutlierModel, alpha: f64) -> Result<(ExpansionCoefficients, ExpansionCoefficients)> {
    model.validate()?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid("alpha", format!("{alpha} must be positive and finite")));
    }
    let (b, din, dout) = (model.beta, model.delta_in, model.delta_out);
    let l0 = din;
    let lambda1 = (alpha * alpha + 2.0 * alpha * (l0 - 1.0) + (l0 + 1.0).powi(2))
        * (b * b - 2.0 * b * (l0 + 1.0) - din + dout + 2.0 * l0 + 1.0)
        / (alpha * alpha + alpha * (3.0 * din - l0 - 2.0) + (l0 + 1.0) * (3.0 * din - 2.0 * l0 + 1.0));
    let e0 = 0.5 * (((alpha + din + 1.0).powi(2) - 4.0 * alpha).sqrt() - alpha + din + 1.0);
    let kappa = (alpha * alpha + 2.0 * alpha * (din - 1.0) + (din + 1.0).powi(2)).sqrt();
    let e1 = (2.0 * alpha * alpha * (b - 1.0)
        + alpha * (b * (b + 2.0 * din - 6.0) - 3.0 * din + dout + 5.0)
        + (din + 1.0) * (b * b - din + dout - 1.0))
        / (2.0 * kappa)
        + 0.5 * (-2.0 * alpha * (b - 1.0) + b * b + din - dout - 1.0);
    Ok((
        ExpansionCoefficients {
            order0: l0,
            order1: lambda1,
            order2: None,
        },
        ExpansionCoefficients {
            order0: e0,
            order1: e1,
            order2: None,
        },
    ))
}

/// Excess plateau `(m0 - Gamma)^2` of a leading-order state.
pub fn plateau_excess(state: &LeadingOrderState, model: &OutlierModel) -> f64 {
    excess_gen_error_from_overlaps(state.m0, state.q0, model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state_evolution::ridge_explicit;

    fn fig1_left() -> OutlierModel {
        OutlierModel::new(0.6, 0.0, 1.0, 0.5).unwrap()
    }

    fn fig1_right() -> OutlierModel {
        OutlierModel::new(0.3, 0.0, 1.0, 5.0).unwrap()
    }

    #[test]
    fn l2_plateaus() {
        let (_, estim) = large_alpha_l2(&fig1_right(), 1.0);
        assert!((estim.order0 - 0.09).abs() < 1e-15);
        let clean = OutlierModel::new(0.0, 0.0, 0.8, 5.0).unwrap();
        let (gen, estim) = large_alpha_l2(&clean, 1.0);
        assert_eq!(estim.order0, 0.0);
        assert!((gen.order1 - 0.8).abs() < 1e-15);
    }

    #[test]
    fn l2_series_matches_closed_form() {
        let model = fig1_right();
        let alpha = 1e4;
        let s = ridge_explicit(&model, alpha, 1.0).unwrap();
        let r = s.errors(&model);
        let (gen, estim) = large_alpha_l2(&model, 1.0);
        assert!((gen.eval(1.0 / alpha) - r.excess_gen_error).abs() < 1e-6);
        assert!((estim.eval(1.0 / alpha) - r.estim_error).abs() < 1e-6);
        // the series is accurate well beyond the stated tolerance
        assert!((gen.eval(1.0 / alpha) - r.excess_gen_error).abs() < 1e-10);
    }

    #[test]
    fn huber_infinite_scale_recovers_gamma() {
        let model = OutlierModel::new(0.3, 0.4, 1.0, 5.0).unwrap();
        let s = large_alpha_leading(LossSpec::Huber { a: 1e8 }, &model, 0.0).unwrap();
        assert!((s.m0 - model.gamma()).abs() < 1e-10);
    }

    #[test]
    fn optimal_lambda1_gives_consistency() {
        let model = fig1_right();
        for loss in [LossSpec::L1, LossSpec::Huber { a: 1.0 }] {
            let l1 = optimal_lambda1_gen(loss, &model).unwrap();
            assert!(l1 > 0.0);
            let s = large_alpha_leading(loss, &model, l1).unwrap();
            assert!((s.m0 - model.gamma()).abs() < 1e-10);
            assert!(plateau_excess(&s, &model).abs() < 1e-18);
        }
    }

    #[test]
    fn inconsistent_regime_has_positive_plateau() {
        let model = fig1_left();
        assert!(!gen_consistency_condition(&model));
        for loss in [LossSpec::L1, LossSpec::Huber { a: 1.0 }] {
            let l1 = optimal_lambda1_gen(loss, &model).unwrap();
            assert!(l1 < 0.0, "{loss:?} {l1}");
            let s = large_alpha_leading(loss, &model, l1.max(0.0)).unwrap();
            assert!(plateau_excess(&s, &model) > 0.0);
        }
    }

    #[test]
    fn consistency_condition_examples() {
        assert!(!gen_consistency_condition(&fig1_left()));
        assert!(gen_consistency_condition(&fig1_right()));
        let b1 = OutlierModel::new(0.4, 1.0, 7.0, 0.1).unwrap();
        assert!(gen_consistency_condition(&b1));
        assert!(optimal_lambda1_gen(LossSpec::L2, &fig1_left()).unwrap() == 0.0);
        assert!(optimal_lambda1_gen(LossSpec::Huber { a: 1e9 }, &fig1_left()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn lambda1_sign_matches_condition() {
        // the sign of lambda1_gen is that of (1 - beta)(erf_in - erf_out)
        for &(eps, beta, din, dout) in &[
            (0.3, 0.0, 1.0, 0.2),
            (0.6, 0.0, 1.0, 0.5),
            (0.2, 2.0, 1.0, 0.3),
            (0.7, 3.0, 0.5, 4.0),
            (0.4, 0.5, 2.0, 6.0),
        ] {
            let m = OutlierModel::new(eps, beta, din, dout).unwrap();
            let l = optimal_lambda1_gen(LossSpec::Huber { a: 0.7 }, &m).unwrap();
            assert_eq!(l >= 0.0, gen_consistency_condition(&m), "{m:?} {l}");
        }
    }

    #[test]
    fn estimation_lambda1() {
        let m = OutlierModel::new(0.3, 0.0, 1.0, 5.0).unwrap();
        let l = optimal_lambda1_estim(LossSpec::Huber { a: 1.0 }, &m).unwrap();
        assert!((l + 0.3 * erf(1.0 / 12f64.sqrt())).abs() < 1e-15);
        let up = OutlierModel::new(0.3, 2.0, 1.0, 5.0).unwrap();
        let unit = OutlierModel::new(0.3, 1.0, 1.0, 5.0).unwrap();
        for loss in [LossSpec::L2, LossSpec::L1, LossSpec::Huber { a: 0.5 }] {
            assert!(optimal_lambda1_estim(loss, &up).unwrap() > 0.0);
            assert_eq!(optimal_lambda1_estim(loss, &unit).unwrap(), 0.0);
            let s = large_alpha_leading(loss, &up, optimal_lambda1_estim(loss, &up).unwrap()).unwrap();
            assert!((s.m0 - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn negative_regularisation() {
        assert_eq!(ridge_negative_lambda_bound(4.0).unwrap(), -1.0);
        assert_eq!(ridge_negative_lambda_bound(1.0).unwrap(), 0.0);
        assert!(ridge_negative_lambda_bound(0.5).is_err());
        let m = |eps, beta| OutlierModel::new(eps, beta, 1.0, 1.0).unwrap();
        assert!(estim_consistency_negative_reg(&m(0.5, 0.0)));
        assert!(!estim_consistency_negative_reg(&m(1.0, 0.0)));
        assert!(estim_consistency_negative_reg(&m(0.9, 2.0)));
    }

    #[test]
    fn small_eps_printed_values() {
        let m = OutlierModel::new(1e-3, 0.0, 1.0, 5.0).unwrap();
        let (lam, gen) = small_eps_expansion(&m, 10.0).unwrap();
        assert_eq!(lam.order0, 1.0);
        assert!((lam.order1 - 7.0).abs() < 1e-12);
        assert!((gen.order0 - 0.5 * (104f64.sqrt() - 8.0)).abs() < 1e-14);
    }

    fn ridge_opt(model: &OutlierModel, alpha: f64) -> (f64, f64) {
        // golden section on the closed-form ridge error
        let f = |l: f64| ridge_explicit(model, alpha, l).unwrap().errors(model).gen_error;
        let (mut lo, mut hi) = (0.05, 5.0);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..120 {
            let x1 = hi - g * (hi - lo);
            let x2 = lo + g * (hi - lo);
            if f(x1) < f(x2) {
                hi = x2;
            } else {
                lo = x1;
            }
        }
        let l = 0.5 * (lo + hi);
        (l, f(l))
    }

    #[test]
    fn small_eps_against_optimised_ridge() {
        let alpha = 10.0;
        let (din, dout, beta) = (1.0, 5.0, 0.0);
        let base = OutlierModel::new(0.0, beta, din, dout).unwrap();
        let (lam, gen) = small_eps_expansion(&base, alpha).unwrap();
        let (l0, e0) = ridge_opt(&base, alpha);
        assert!((l0 - lam.order0).abs() < 1e-6);
        assert!((e0 - gen.order0).abs() < 1e-12);
        let eps = 1e-5;
        let m = OutlierModel::new(eps, beta, din, dout).unwrap();
        let (l, e) = ridge_opt(&m, alpha);
        assert!(((l - l0) / eps - lam.order1).abs() < 0.05, "{}", (l - l0) / eps);
        let slope = ((e - m.delta_eff()) - (e0 - din)) / eps;
        assert!((slope - gen.order1).abs() < 1e-3 * gen.order1.abs(), "{slope} {}", gen.order1);
    }

    #[test]
    fn leading_order_matches_state_evolution() {
        use crate::state_evolution::{solve_fixed_point, FixedPointConfig};
        let model = fig1_right();
        let cfg = FixedPointConfig::with_tolerance(1e-11);
        for loss in [LossSpec::Huber { a: 1.0 }, LossSpec::L1] {
            let l1 = 0.5;
            let lead = large_alpha_leading(loss, &model, l1).unwrap();
            let mut prev = f64::INFINITY;
            for alpha in [1e2, 1e3, 1e4] {
                let s = solve_fixed_point(loss, &model, alpha, l1 * alpha, &cfg).unwrap();
                let gap = (s.m - lead.m0).abs() + (s.q - lead.q0).abs() + (alpha * s.sigma - lead.sigma0).abs();
                assert!(gap < prev, "{loss:?} {alpha} {gap}");
                prev = gap;
            }
            assert!(prev < 5e-3, "{loss:?} {prev}");
        }
    }
}
