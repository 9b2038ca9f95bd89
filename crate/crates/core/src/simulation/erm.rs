//! Direct empirical risk minimisation on a sampled dataset.

use argmin::core::{CostFunction, Executor, Gradient, State, TerminationReason};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::loss::LossSpec;
use crate::model::Dataset;
use crate::rng::{self, StreamTag};
use crate::state_evolution::lambda_floor;

/// Huber scale standing in for the absolute loss in direct minimisation.
pub const L1_HUBER_SCALE: f64 = 1e-3;

/// `(Phi^T Phi / d + lambda I)^{-1} Phi^T y / sqrt(d)` by a Cholesky solve.
pub fn erm_ridge(data: &Dataset, lambda: f64) -> Result<DVector<f64>> {
    let (n, d) = (data.n(), data.d());
    let alpha = n as f64 / d as f64;
    if lambda.is_nan() || lambda == f64::INFINITY {
        return Err(invalid("lambda", format!("{lambda} is not a finite penalty")));
    }
    let floor = lambda_floor(alpha);
    if lambda <= floor && !(alpha <= 1.0 && lambda > 0.0) {
        return Err(invalid(
            "lambda",
            format!("{lambda} must exceed {floor} at alpha = {alpha}"),
        ));
    }
    let df = d as f64;
    let mut a = data.samples.tr_mul(&data.samples) / df;
    for i in 0..d {
        a[(i, i)] += lambda;
    }
    let b = data.samples.tr_mul(&data.labels) / df.sqrt();
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("ridge system at lambda = {lambda} is not positive definite")))?;
    Ok(chol.solve(&b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexSolverConfig {
    /// Stop when the Euclidean norm of the per-sample gradient falls below this.
    pub grad_tol: f64,
    /// Stop when one step changes the objective by less than this fraction of
    /// its value at `w = 0`.
    pub rel_cost_tol: f64,
    pub max_iters: u64,
    pub memory: usize,
    /// Seed of the standard-normal starting point.
    pub init_seed: u64,
}

impl Default for ConvexSolverConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            rel_cost_tol: 1e-12,
            max_iters: 10_000,
            memory: 10,
            init_seed: 0,
        }
    }
}

/// `(1 / (n s)) [sum_mu loss(y_mu - x_mu . w / sqrt(d)) + lambda' |w|^2 / 2]`,
/// where `s = 1` except for the absolute loss, which is solved as Huber with
/// scale `a = L1_HUBER_SCALE`, penalty `lambda' = a lambda` and `s = a`.
struct Risk<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    loss: LossSpec,
    lambda: f64,
    scale: f64,
}

impl<'a> Risk<'a> {
    fn new(data: &'a Dataset, loss: LossSpec, lambda: f64) -> Self {
        let (loss, lambda, scale) = match loss {
            LossSpec::L1 => (
                LossSpec::Huber { a: L1_HUBER_SCALE },
                L1_HUBER_SCALE * lambda,
                L1_HUBER_SCALE,
            ),
            other => (other, lambda, 1.0),
        };
        Self {
            x: &data.samples,
            y: &data.labels,
            loss,
            lambda,
            scale,
        }
    }

    fn norm(&self) -> f64 {
        1.0 / (self.x.nrows() as f64 * self.scale)
    }

    fn residuals(&self, w: &DVector<f64>) -> DVector<f64> {
        let sd = (self.x.ncols() as f64).sqrt();
        self.y - self.x * w / sd
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        let r = self.residuals(w);
        let s: f64 = r.iter().map(|&ri| self.loss.value(ri)).sum();
        (s + 0.5 * self.lambda * w.norm_squared()) * self.norm()
    }

    fn grad(&self, w: &DVector<f64>) -> DVector<f64> {
        let sd = (self.x.ncols() as f64).sqrt();
        let psi = self.residuals(w).map(|ri| self.loss.derivative(ri));
        (w * self.lambda - self.x.tr_mul(&psi) / sd) * self.norm()
    }
}

impl CostFunction for Risk<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.value(&DVector::from_column_slice(p)))
    }
}

impl Gradient for Risk<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, p: &Vec<f64>) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        Ok(self.grad(&DVector::from_column_slice(p)).data.into())
    }
}

/// Value of the regularised risk `sum loss + lambda |w|^2 / 2` at `w`.
pub fn erm_objective(data: &Dataset, loss: LossSpec, lambda: f64, w: &DVector<f64>) -> f64 {
    let sd = (data.d() as f64).sqrt();
    let r = &data.labels - &data.samples * w / sd;
    r.iter().map(|&ri| loss.value(ri)).sum::<f64>() + 0.5 * lambda * w.norm_squared()
}

/// Minimise the regularised risk by L-BFGS from a standard-normal start.
/// Absolute-loss requests are solved as Huber with scale [`L1_HUBER_SCALE`].
pub fn erm_convex(data: &Dataset, loss: LossSpec, lambda: f64, config: &ConvexSolverConfig) -> Result<DVector<f64>> {
    loss.validate()?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", format!("{lambda} must be finite and >= 0")));
    }
    let d = data.d();
    let risk = Risk::new(data, loss, lambda);
    let mut init_rng = rng::stream(config.init_seed, StreamTag::SolverInit);
    let w0: Vec<f64> = (0..d).map(|_| init_rng.sample(StandardNormal)).collect();
    let cost_ref = risk.value(&DVector::zeros(d)).max(f64::MIN_POSITIVE);

    let solver = LBFGS::new(MoreThuenteLineSearch::new(), config.memory)
        .with_tolerance_grad(config.grad_tol)
        .and_then(|s| s.with_tolerance_cost(config.rel_cost_tol * cost_ref))
        .map_err(|e| Error::Optimizer(e.to_string()))?;
    let res = Executor::new(risk, solver)
        .configure(|s| s.param(w0).max_iters(config.max_iters))
        .run()
        .map_err(|e| Error::Optimizer(e.to_string()))?;
    let state = res.state();
    let w = state
        .get_best_param()
        .ok_or_else(|| Error::Optimizer("no iterate recorded".into()))?;
    let w = DVector::from_column_slice(w);
    let check = Risk::new(data, loss, lambda);
    let grad_norm = check.grad(&w).amax();
    match state.get_termination_reason() {
        Some(TerminationReason::MaxItersReached) => Err(Error::SolverCap {
            iterations: config.max_iters as usize,
            grad_norm,
        }),
        Some(TerminationReason::SolverConverged) => Ok(w),
        // The line search gives up once the objective is flat to rounding.
        Some(TerminationReason::SolverExit(_)) if grad_norm < 1e3 * config.grad_tol.max(1e-10) => Ok(w),
        other => Err(Error::Optimizer(format!(
            "L-BFGS stopped with {other:?} at gradient norm {grad_norm:e}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_dataset, OutlierModel};

    #[test]
    fn ridge_interpolates_noiseless_data() {
        let model = OutlierModel::new(0.0, 0.0, 1e-300, 1.0).unwrap();
        let data = sample_dataset(&model, 120, 40, 3).unwrap();
        let w = erm_ridge(&data, 1e-12).unwrap();
        assert!((w - &data.teacher).amax() < 1e-8);
    }

    #[test]
    fn ridge_heavy_penalty_vanishes() {
        let model = OutlierModel::new(0.3, 0.0, 1.0, 5.0).unwrap();
        let data = sample_dataset(&model, 100, 30, 1).unwrap();
        assert!(erm_ridge(&data, 1e12).unwrap().norm() < 1e-8);
    }

    #[test]
    fn ridge_rejects_penalty_below_bound() {
        let model = OutlierModel::new(0.3, 0.0, 1.0, 5.0).unwrap();
        let data = sample_dataset(&model, 160, 40, 1).unwrap();
        assert!(erm_ridge(&data, -1.01).is_err());
        assert!(erm_ridge(&data, -0.5).is_ok());
    }

    #[test]
    fn huber_quadratic_branch_is_ridge() {
        let model = OutlierModel::new(0.3, 0.0, 1.0, 5.0).unwrap();
        let data = sample_dataset(&model, 200, 40, 5).unwrap();
        let ridge = erm_ridge(&data, 0.7).unwrap();
        let loss = LossSpec::Huber { a: 1e3 };
        let w = erm_convex(&data, loss, 0.7, &ConvexSolverConfig::default()).unwrap();
        assert!((w - ridge).amax() < 1e-6);
    }

    #[test]
    fn convex_solution_is_local_minimum() {
        let model = OutlierModel::new(0.3, 0.0, 1.0, 5.0).unwrap();
        let data = sample_dataset(&model, 300, 50, 9).unwrap();
        let mut r = rng::stream(11, StreamTag::Perturbation);
        for loss in [LossSpec::Huber { a: 0.8 }, LossSpec::L2] {
            let w = erm_convex(&data, loss, 0.4, &ConvexSolverConfig::default()).unwrap();
            let f = erm_objective(&data, loss, 0.4, &w);
            for _ in 0..100 {
                let mut dlt = DVector::<f64>::from_fn(50, |_, _| r.sample(StandardNormal));
                dlt *= 1e-3 / dlt.norm();
                assert!(erm_objective(&data, loss, 0.4, &(&w + dlt)) >= f - 1e-12 * f);
            }
        }
    }
}
