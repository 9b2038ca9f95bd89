//! Methods, sweep axes and the parameter sets of the reference figures.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bayes::{bo_errors, bo_fixed_point};
use crate::error::{invalid, Error, Result};
use crate::hyperopt::{optimize_hyperparams, optimize_lambda, optimize_scale, theory_errors, HuberScale, HyperBounds, Target};
use crate::loss::LossSpec;
use crate::model::{ErrorReport, OutlierModel};
use crate::simulation::Estimator;
use crate::state_evolution::FixedPointConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    L2,
    L1,
    /// Huber with the scale tuned jointly with the penalty.
    Huber,
    HuberFixedA(f64),
    Bayes,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::L2 => write!(f, "l2"),
            Method::L1 => write!(f, "l1"),
            Method::Huber => write!(f, "huber"),
            Method::HuberFixedA(a) => write!(f, "huber_fixed_a:{a}"),
            Method::Bayes => write!(f, "bayes"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "l2" => Ok(Method::L2),
            "l1" => Ok(Method::L1),
            "huber" => Ok(Method::Huber),
            "bayes" => Ok(Method::Bayes),
            _ => {
                let a = s
                    .strip_prefix("huber_fixed_a")
                    .map(|r| r.strip_prefix(':').unwrap_or("1"))
                    .ok_or_else(|| invalid("methods", format!("unknown method `{s}`")))?;
                let a: f64 = a
                    .parse()
                    .map_err(|_| invalid("methods", format!("bad Huber scale in `{s}`")))?;
                LossSpec::huber(a)?;
                Ok(Method::HuberFixedA(a))
            }
        }
    }
}

impl Method {
    /// Column-safe label, e.g. `huber_fixed_a1`.
    pub fn label(&self) -> String {
        self.to_string().replace(':', "")
    }

    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
    }
}

/// Theory errors of a method at its tuned (or fixed) hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub errors: ErrorReport,
    pub lambda: Option<f64>,
    pub a: Option<HuberScale>,
}

impl MethodOutcome {
    /// The estimator that realises this outcome in simulation.
    pub fn estimator(&self, method: Method) -> Estimator {
        let lambda = self.lambda.unwrap_or(0.0);
        match (method, self.a) {
            (Method::Bayes, _) => Estimator::Bayes,
            (Method::L2, _) | (_, Some(HuberScale::Diverged)) => Estimator::Erm {
                loss: LossSpec::L2,
                lambda,
            },
            (Method::L1, _) => Estimator::Erm {
                loss: LossSpec::L1,
                lambda,
            },
            (_, Some(HuberScale::Finite(a))) | (Method::HuberFixedA(a), None) => Estimator::Erm {
                loss: LossSpec::Huber { a },
                lambda,
            },
            (Method::Huber, None) => unreachable!("tuned Huber always reports a scale"),
        }
    }
}

/// Fixed-point tolerance for Bayes-optimal curves.
pub fn bayes_config() -> FixedPointConfig {
    FixedPointConfig::with_tolerance(1e-10)
}

/// Evaluate a method at `(model, alpha)`. With `lambda = Some(_)` the penalty
/// is fixed instead of tuned (the scale of `huber` is still tuned).
pub fn evaluate_method(
    method: Method,
    model: &OutlierModel,
    alpha: f64,
    target: Target,
    lambda: Option<f64>,
) -> Result<MethodOutcome> {
    let bounds = HyperBounds::default();
    let loss = match method {
        Method::Bayes => {
            let bo = bo_fixed_point(model, alpha, &bayes_config())?;
            return Ok(MethodOutcome {
                errors: bo_errors(&bo, model),
                lambda: None,
                a: None,
            });
        }
        Method::L2 => LossSpec::L2,
        Method::L1 => LossSpec::L1,
        Method::HuberFixedA(a) => LossSpec::huber(a)?,
        Method::Huber => LossSpec::Huber { a: 1.0 },
    };
    match (method, lambda) {
        (Method::Huber, Some(l)) => {
            let r = optimize_scale(model, alpha, target, l, &bounds)?;
            Ok(MethodOutcome {
                errors: r.errors,
                lambda: Some(r.lambda_opt),
                a: r.a_opt,
            })
        }
        (Method::Huber, None) => {
            let r = optimize_hyperparams(loss, model, alpha, target, &bounds)?;
            Ok(MethodOutcome {
                errors: r.errors,
                lambda: Some(r.lambda_opt),
                a: r.a_opt,
            })
        }
        (_, Some(l)) => Ok(MethodOutcome {
            errors: theory_errors(loss, model, alpha, l)?,
            lambda: Some(l),
            a: fixed_scale(method),
        }),
        (_, None) => {
            let r = optimize_lambda(loss, model, alpha, target, &bounds)?;
            Ok(MethodOutcome {
                errors: r.errors,
                lambda: Some(r.lambda_opt),
                a: fixed_scale(method),
            })
        }
    }
}

fn fixed_scale(method: Method) -> Option<HuberScale> {
    match method {
        Method::HuberFixedA(a) => Some(HuberScale::Finite(a)),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Alpha,
    Eps,
    DeltaOut,
    Beta,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(Axis::Alpha),
            "eps" => Ok(Axis::Eps),
            "delta_out" | "dout" => Ok(Axis::DeltaOut),
            "beta" => Ok(Axis::Beta),
            _ => Err(invalid("axis", format!("unknown axis `{s}`"))),
        }
    }
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::Alpha => "alpha",
            Axis::Eps => "eps",
            Axis::DeltaOut => "delta_out",
            Axis::Beta => "beta",
        }
    }

    /// Grids along `alpha` and `delta_out` default to log spacing.
    pub fn log_by_default(&self) -> bool {
        matches!(self, Axis::Alpha | Axis::DeltaOut)
    }

    /// `(model, alpha)` at grid value `v`.
    pub fn apply(&self, base: &OutlierModel, alpha: f64, v: f64) -> Result<(OutlierModel, f64)> {
        let mut m = *base;
        let mut a = alpha;
        match self {
            Axis::Alpha => a = v,
            Axis::Eps => m.eps = v,
            Axis::DeltaOut => m.delta_out = v,
            Axis::Beta => m.beta = v,
        }
        m.validate()?;
        Ok((m, a))
    }
}

/// `n` points from `lo` to `hi` inclusive, geometric when `log`.
pub fn grid(lo: f64, hi: f64, n: usize, log: bool) -> Result<Vec<f64>> {
    if n == 0 || !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(invalid("range", format!("{lo}:{hi}:{n}")));
    }
    if log && lo <= 0.0 {
        return Err(invalid("range", "log grid needs positive bounds"));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            if i == n - 1 {
                hi
            } else if log {
                (lo.ln() + t * (hi.ln() - lo.ln())).exp()
            } else {
                lo + t * (hi - lo)
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Figure {
    Fig1Left,
    Fig1Right,
    Fig2Left,
    Fig2Right,
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1-left" => Ok(Figure::Fig1Left),
            "fig1-right" => Ok(Figure::Fig1Right),
            "fig2-left" => Ok(Figure::Fig2Left),
            "fig2-right" => Ok(Figure::Fig2Right),
            _ => Err(invalid("figure", format!("unknown figure `{s}`"))),
        }
    }
}

/// Which error a figure plots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ExcessGen,
    Estim,
}

impl Metric {
    pub fn pick(&self, r: &ErrorReport) -> f64 {
        match self {
            Metric::ExcessGen => r.excess_gen_error,
            Metric::Estim => r.estim_error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureSpec {
    pub figure: Figure,
    pub axis: Axis,
    pub base: OutlierModel,
    pub alpha: f64,
    pub metric: Metric,
    pub methods: Vec<Method>,
    /// Grid points used for desk-scale simulation.
    pub points: Vec<f64>,
}

impl Figure {
    pub const ALL: [Figure; 4] = [Figure::Fig1Left, Figure::Fig1Right, Figure::Fig2Left, Figure::Fig2Right];

    pub fn spec(&self) -> FigureSpec {
        let m = |eps, dout| OutlierModel {
            eps,
            beta: 0.0,
            delta_in: 1.0,
            delta_out: dout,
        };
        let erm = vec![Method::L2, Method::L1, Method::Huber];
        match self {
            Figure::Fig1Left => FigureSpec {
                figure: *self,
                axis: Axis::Alpha,
                base: m(0.6, 0.5),
                alpha: 10.0,
                metric: Metric::ExcessGen,
                methods: vec![Method::L2, Method::L1, Method::Huber, Method::HuberFixedA(1.0)],
                points: vec![1.0, 3.0, 10.0],
            },
            Figure::Fig1Right => FigureSpec {
                figure: *self,
                axis: Axis::Alpha,
                base: m(0.3, 5.0),
                alpha: 10.0,
                metric: Metric::Estim,
                methods: erm,
                points: vec![1.0, 3.0, 10.0],
            },
            Figure::Fig2Left => FigureSpec {
                figure: *self,
                axis: Axis::Eps,
                base: m(0.3, 5.0),
                alpha: 10.0,
                metric: Metric::ExcessGen,
                methods: erm,
                points: vec![0.1, 0.3, 0.5],
            },
            Figure::Fig2Right => FigureSpec {
                figure: *self,
                axis: Axis::DeltaOut,
                base: m(0.3, 5.0),
                alpha: 10.0,
                metric: Metric::ExcessGen,
                methods: erm,
                points: vec![0.5, 5.0, 50.0],
            },
        }
    }
}
