pub mod asymptotics;
pub mod bayes;
pub mod channel;
pub mod error;
pub mod figures;
pub mod hyperopt;
pub mod loss;
pub mod model;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod simulation;
pub mod special;
pub mod state_evolution;

pub use error::{Error, Result};
pub use loss::LossSpec;
pub use model::{Dataset, ErrorReport, OutlierModel, OverlapState};
pub use state_evolution::{ridge_explicit, solve_fixed_point, FixedPointConfig};
pub use bayes::{bo_errors, bo_fixed_point, bo_rate_coefficient, bo_rate_fit, BOState, RateFit};
pub use asymptotics::{
    estim_consistency_negative_reg, gen_consistency_condition, large_alpha_l2, large_alpha_leading,
    optimal_lambda1_estim, optimal_lambda1_gen, ridge_negative_lambda_bound, small_eps_expansion,
    ExpansionCoefficients, LeadingOrderState,
};
pub use hyperopt::{optimize_hyperparams, HuberScale, HyperOptResult, Target};
pub use report::{SweepResult, Table};
pub use simulation::{run_monte_carlo, Estimator, McSummary};
