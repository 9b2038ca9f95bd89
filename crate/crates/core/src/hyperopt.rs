//! Derivative-free tuning of the penalty and Huber scale on theory curves.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::loss::LossSpec;
use crate::model::{ErrorReport, OutlierModel};
use crate::rng::{self, StreamTag};
use crate::state_evolution::{ridge_explicit, solve_fixed_point, FixedPointConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadConfig {
    /// Stop when every vertex is within this distance of the best one.
    pub x_tol: f64,
    /// Stop when the objective values across the simplex differ by less than this.
    pub f_tol: f64,
    pub max_evals: usize,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            x_tol: 1e-6,
            f_tol: 1e-10,
            max_evals: 4000,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub n_evals: usize,
}

/// Simplex minimisation with the standard coefficients (1, 2, 1/2, 1/2).
///
/// A failed evaluation counts as `+inf`, which makes the simplex contract or
/// shrink towards its best vertex; an error is returned only if no vertex
/// ever evaluates successfully.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], config: &NelderMeadConfig) -> Result<NelderMeadResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let k = x0.len();
    if k == 0 {
        return Err(invalid("x0", "empty starting point"));
    }
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        match f(x) {
            Ok(v) if !v.is_nan() => v,
            _ => f64::INFINITY,
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(k + 1);
    simplex.push((x0.to_vec(), eval(x0, &mut evals)));
    for i in 0..k {
        let mut x = x0.to_vec();
        x[i] += config.initial_step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    let sort = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    sort(&mut simplex);

    while evals < config.max_evals {
        let best = &simplex[0];
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&best.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let spread = simplex[k].1 - simplex[0].1;
        if best.1.is_finite() && (diameter < config.x_tol || spread < config.f_tol) {
            break;
        }
        let centroid: Vec<f64> = (0..k)
            .map(|j| simplex[..k].iter().map(|(x, _)| x[j]).sum::<f64>() / k as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[k].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            simplex[k] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[k - 1].1 {
            simplex[k] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[k].1 {
                let xc = along(0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < simplex[k].1.min(fr) {
                simplex[k] = (xc, fc);
            } else {
                let b = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = v.0.iter().zip(&b).map(|(x, b)| b + 0.5 * (x - b)).collect();
                    let fx = eval(&x, &mut evals);
                    *v = (x, fx);
                }
            }
        }
        sort(&mut simplex);
    }
    let (x, fv) = simplex.swap_remove(0);
    if !fv.is_finite() {
        return Err(Error::Optimizer(format!(
            "no successful evaluation in {evals} attempts"
        )));
    }
    Ok(NelderMeadResult { x, f: fv, n_evals: evals })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Gen,
    Estim,
}

impl Target {
    pub fn pick(&self, r: &ErrorReport) -> f64 {
        match self {
            Target::Gen => r.gen_error,
            Target::Estim => r.estim_error,
        }
    }
}

/// Largest Huber scale the search visits; beyond it the loss is treated as ℓ2.
pub const HUBER_SCALE_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperBounds {
    pub lambda: (f64, f64),
    pub a: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        Self {
            lambda: (1e-8, 1e4),
            a: (1e-6, HUBER_SCALE_CAP),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum HuberScale {
    Finite(f64),
    /// The optimal scale runs off to infinity: Huber has collapsed onto ℓ2.
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperOptResult {
    pub lambda_opt: f64,
    /// Only set for Huber searches over the scale.
    pub a_opt: Option<HuberScale>,
    pub objective_value: f64,
    pub n_evals: usize,
    pub errors: ErrorReport,
}

/// Fixed-point tolerance used inside the searches.
pub fn search_config() -> FixedPointConfig {
    FixedPointConfig::with_tolerance(1e-11)
}

/// Theory errors at `(loss, lambda)`, through the closed form for ℓ2.
pub fn theory_errors(loss: LossSpec, model: &OutlierModel, alpha: f64, lambda: f64) -> Result<ErrorReport> {
    let s = match loss {
        LossSpec::L2 => ridge_explicit(model, alpha, lambda)?,
        _ => solve_fixed_point(loss, model, alpha, lambda, &search_config())?,
    };
    Ok(s.errors(model))
}

const N_STARTS: usize = 3;
const JITTER: f64 = 0.3;

fn check_bounds(b: &HyperBounds) -> Result<()> {
    let ok = |(lo, hi): (f64, f64)| lo > 0.0 && hi > lo && hi.is_finite();
    if !ok(b.lambda) {
        return Err(invalid("bounds", format!("lambda range {:?}", b.lambda)));
    }
    if !ok(b.a) {
        return Err(invalid("bounds", format!("a range {:?}", b.a)));
    }
    Ok(())
}

fn inside(x: f64, (lo, hi): (f64, f64)) -> bool {
    x >= lo && x <= hi
}

/// Best of several jittered Nelder-Mead runs from `x0`.
fn multistart<F>(f: F, x0: &[f64], extra: &[Vec<f64>]) -> Result<NelderMeadResult>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut jitter = rng::stream(0, StreamTag::Perturbation);
    let mut starts = vec![x0.to_vec()];
    while starts.len() < N_STARTS {
        starts.push(x0.iter().map(|v| v + JITTER * (2.0 * jitter.gen::<f64>() - 1.0)).collect());
    }
    starts.extend(extra.iter().cloned());
    let cfg = NelderMeadConfig::default();
    let mut best: Option<NelderMeadResult> = None;
    let mut evals = 0;
    let mut last_err = None;
    for s in &starts {
        match nelder_mead(&f, s, &cfg) {
            Ok(r) => {
                evals += r.n_evals;
                if best.as_ref().map_or(true, |b| r.f < b.f) {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let mut best = best.ok_or_else(|| {
        last_err.unwrap_or_else(|| Error::Optimizer("no start succeeded".into()))
    })?;
    best.n_evals = evals;
    Ok(best)
}

/// Optimise `lambda` at fixed loss (including a fixed Huber scale).
pub fn optimize_lambda(
    loss: LossSpec,
    model: &OutlierModel,
    alpha: f64,
    target: Target,
    bounds: &HyperBounds,
) -> Result<HyperOptResult> {
    model.validate()?;
    loss.validate()?;
    check_bounds(bounds)?;
    let obj = |x: &[f64]| {
        let lambda = x[0].exp();
        if !inside(lambda, bounds.lambda) {
            return Ok(f64::INFINITY);
        }
        theory_errors(loss, model, alpha, lambda).map(|r| target.pick(&r))
    };
    let r = multistart(obj, &[0.0], &[])?;
    let lambda = r.x[0].exp();
    let errors = theory_errors(loss, model, alpha, lambda)?;
    Ok(HyperOptResult {
        lambda_opt: lambda,
        a_opt: None,
        objective_value: r.f,
        n_evals: r.n_evals,
        errors,
    })
}

/// Optimal-ℓ2 tolerance within which an optimised Huber loss counts as collapsed.
pub const COLLAPSE_TOL: f64 = 1e-9;

/// Optimise `lambda` (and `a` for Huber) on the theory curve of `target`.
///
/// The search runs in `(log lambda, log a)`. For Huber, when the best scale
/// found does no better than optimal ℓ2 (within [`COLLAPSE_TOL`]) or sits at
/// [`HUBER_SCALE_CAP`], the scale is reported as diverged together with the
/// ℓ2 optimum, which is the `a -> inf` limit of the Huber family.
pub fn optimize_hyperparams(
    loss: LossSpec,
    model: &OutlierModel,
    alpha: f64,
    target: Target,
    bounds: &HyperBounds,
) -> Result<HyperOptResult> {
    if !matches!(loss, LossSpec::Huber { .. }) {
        return optimize_lambda(loss, model, alpha, target, bounds);
    }
    model.validate()?;
    check_bounds(bounds)?;
    let l2 = optimize_lambda(LossSpec::L2, model, alpha, target, bounds)?;
    let obj = |x: &[f64]| {
        let (lambda, a) = (x[0].exp(), x[1].exp());
        if !inside(lambda, bounds.lambda) || !inside(a, bounds.a) {
            return Ok(f64::INFINITY);
        }
        theory_errors(LossSpec::Huber { a }, model, alpha, lambda).map(|r| target.pick(&r))
    };
    // one extra start near the ℓ2 optimum with a moderate scale
    let near_l2 = vec![l2.lambda_opt.ln(), 1.0];
    let r = multistart(obj, &[0.0, 0.0], &[near_l2])?;
    let (lambda, a) = (r.x[0].exp(), r.x[1].exp());
    let n_evals = r.n_evals + l2.n_evals;
    if r.f >= l2.objective_value - COLLAPSE_TOL || a >= 0.999 * bounds.a.1 {
        return Ok(HyperOptResult {
            a_opt: Some(HuberScale::Diverged),
            n_evals,
            ..l2
        });
    }
    let errors = theory_errors(LossSpec::Huber { a }, model, alpha, lambda)?;
    Ok(HyperOptResult {
        lambda_opt: lambda,
        a_opt: Some(HuberScale::Finite(a)),
        objective_value: r.f,
        n_evals,
        errors,
    })
}

/// Tune only the Huber scale at a fixed penalty, with the same collapse rule
/// as [`optimize_hyperparams`] against ℓ2 at that penalty.
pub fn optimize_scale(
    model: &OutlierModel,
    alpha: f64,
    target: Target,
    lambda: f64,
    bounds: &HyperBounds,
) -> Result<HyperOptResult> {
    model.validate()?;
    check_bounds(bounds)?;
    let l2 = theory_errors(LossSpec::L2, model, alpha, lambda)?;
    let l2_value = target.pick(&l2);
    let obj = |x: &[f64]| {
        let a = x[0].exp();
        if !inside(a, bounds.a) {
            return Ok(f64::INFINITY);
        }
        theory_errors(LossSpec::Huber { a }, model, alpha, lambda).map(|r| target.pick(&r))
    };
    let r = multistart(obj, &[0.0], &[])?;
    let a = r.x[0].exp();
    if r.f >= l2_value - COLLAPSE_TOL || a >= 0.999 * bounds.a.1 {
        return Ok(HyperOptResult {
            lambda_opt: lambda,
            a_opt: Some(HuberScale::Diverged),
            objective_value: l2_value,
            n_evals: r.n_evals,
            errors: l2,
        });
    }
    Ok(HyperOptResult {
        lambda_opt: lambda,
        a_opt: Some(HuberScale::Finite(a)),
        objective_value: r.f,
        n_evals: r.n_evals,
        errors: theory_errors(LossSpec::Huber { a }, model, alpha, lambda)?,
    })
}
