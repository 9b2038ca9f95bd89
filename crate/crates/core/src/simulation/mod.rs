//! Finite-size Monte-Carlo: direct ERM solvers, GAMP, and seed-averaged errors.

pub mod erm;
pub mod gamp;
pub mod monte_carlo;

pub use erm::{erm_convex, erm_objective, erm_ridge, ConvexSolverConfig, L1_HUBER_SCALE};
pub use gamp::{gamp, gamp_state, BayesChannel, GampConfig, GampState, GaussianPrior, InputPrior, LossChannel, OutputChannel};
pub use monte_carlo::{fit_once, run_monte_carlo, thread_pool, Estimator, McConfig, McReport, McSummary, THREADS_ENV};
