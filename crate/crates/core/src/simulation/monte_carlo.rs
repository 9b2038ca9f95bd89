//! Seed-averaged finite-size errors.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::erm::{erm_convex, erm_ridge, ConvexSolverConfig};
use super::gamp::{gamp, BayesChannel, GampConfig, GaussianPrior};
use crate::error::{invalid, Error, Result};
use crate::loss::LossSpec;
use crate::model::{projected_test_errors, sample_dataset, OutlierModel};
use crate::rng::{self, StreamTag};

/// Environment variable capping the worker threads of parallel sweeps.
pub const THREADS_ENV: &str = "ROBUST_ASYMP_THREADS";

/// A pool honouring [`THREADS_ENV`]; rayon's default size otherwise.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let k: usize = v
            .parse()
            .map_err(|_| invalid("ROBUST_ASYMP_THREADS", format!("`{v}` is not a thread count")))?;
        if k == 0 {
            return Err(invalid("ROBUST_ASYMP_THREADS", "must be at least 1"));
        }
        b = b.num_threads(k);
    }
    b.build().map_err(|e| invalid("ROBUST_ASYMP_THREADS", e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Estimator {
    Erm { loss: LossSpec, lambda: f64 },
    /// GAMP with the Bayes-optimal denoisers.
    Bayes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub mean: f64,
    pub std_error: f64,
    pub n_seeds: usize,
}

impl McSummary {
    /// Mean and `sample_std / sqrt(n)`; needs at least two samples.
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n < 2 {
            return Err(invalid("n_seeds", format!("{n} samples, need at least 2")));
        }
        let nf = n as f64;
        let mean = xs.iter().sum::<f64>() / nf;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        Ok(Self {
            mean,
            std_error: (var / nf).sqrt(),
            n_seeds: n,
        })
    }

    /// `(mean - reference) / std_error`.
    pub fn z_score(&self, reference: f64) -> f64 {
        (self.mean - reference) / self.std_error
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_test: usize,
    pub solver: ConvexSolverConfig,
    pub gamp: GampConfig,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_test: 100_000,
            solver: ConvexSolverConfig::default(),
            gamp: GampConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub estim: McSummary,
    pub excess_gen: McSummary,
    pub gen: McSummary,
    /// `w_hat . w* / (d sqrt(rho))` with `rho = |w*|^2 / d`.
    pub overlap_m: McSummary,
    /// `|w_hat|^2 / d`.
    pub overlap_q: McSummary,
    pub failed: usize,
}

#[derive(Debug, Clone, Copy)]
struct SeedResult {
    estim: f64,
    excess: f64,
    gen: f64,
    m: f64,
    q: f64,
}

/// Fit one estimator on a fresh dataset of `n = round(alpha d)` samples.
pub fn fit_once(
    model: &OutlierModel,
    alpha: f64,
    d: usize,
    estimator: &Estimator,
    seed: u64,
    config: &McConfig,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = (alpha * d as f64).round() as usize;
    let data = sample_dataset(model, n, d, seed)?;
    let w = match *estimator {
        Estimator::Erm { loss: LossSpec::L2, lambda } => erm_ridge(&data, lambda)?,
        Estimator::Erm { loss, lambda } => {
            let cfg = ConvexSolverConfig {
                init_seed: seed,
                ..config.solver
            };
            erm_convex(&data, loss, lambda, &cfg)?
        }
        Estimator::Bayes => gamp(&data, &BayesChannel::new(model), &GaussianPrior::bayes(), &config.gamp)?,
    };
    Ok((data.teacher, w))
}

fn one_seed(
    model: &OutlierModel,
    alpha: f64,
    d: usize,
    estimator: &Estimator,
    seed: u64,
    config: &McConfig,
) -> Result<SeedResult> {
    let (teacher, w) = fit_once(model, alpha, d, estimator, seed, config)?;
    let rep = projected_test_errors(
        &teacher,
        &w,
        model,
        config.n_test,
        &mut rng::stream(seed, StreamTag::Test),
    )?;
    let df = d as f64;
    let rho = teacher.norm_squared() / df;
    Ok(SeedResult {
        estim: rep.estim_error,
        excess: rep.excess_gen_error,
        gen: rep.gen_error,
        m: teacher.dot(&w) / df / rho.sqrt(),
        q: w.norm_squared() / df,
    })
}

/// Average errors over seeds `seed0, seed0 + 1, ...`. Individual failures are
/// dropped; more than 10% failing seeds is an error.
pub fn run_monte_carlo(
    model: &OutlierModel,
    alpha: f64,
    d: usize,
    estimator: &Estimator,
    n_seeds: usize,
    seed0: u64,
    config: &McConfig,
) -> Result<McReport> {
    model.validate()?;
    if n_seeds < 2 {
        return Err(invalid("n_seeds", format!("{n_seeds}, need at least 2")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) || (alpha * d as f64).round() < 1.0 {
        return Err(invalid("alpha", format!("{alpha} gives no samples at d = {d}")));
    }
    let pool = thread_pool()?;
    let results: Vec<Result<SeedResult>> = pool.install(|| {
        (0..n_seeds as u64)
            .into_par_iter()
            .map(|i| one_seed(model, alpha, d, estimator, seed0.wrapping_add(i), config))
            .collect()
    });
    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed * 10 > n_seeds {
        let first = results.iter().find_map(|r| r.as_ref().err()).unwrap();
        return Err(Error::MonteCarlo {
            failed,
            total: n_seeds,
            first: first.to_string(),
        });
    }
    let ok: Vec<SeedResult> = results.into_iter().filter_map(|r| r.ok()).collect();
    let col = |f: fn(&SeedResult) -> f64| McSummary::from_samples(&ok.iter().map(f).collect::<Vec<_>>());
    Ok(McReport {
        estim: col(|s| s.estim)?,
        excess_gen: col(|s| s.excess)?,
        gen: col(|s| s.gen)?,
        overlap_m: col(|s| s.m)?,
        overlap_q: col(|s| s.q)?,
        failed,
    })
}
