use robust_asymp::model::sample_dataset;
use robust_asymp::simulation::{
    erm_convex, gamp_state, BayesChannel, ConvexSolverConfig, GampConfig, GaussianPrior, McConfig,
};
use robust_asymp::*;

fn cfg() -> McConfig {
    McConfig {
        n_test: 20_000,
        ..McConfig::default()
    }
}

#[test]
fn clean_ridge_matches_closed_form() {
    let model = OutlierModel::new(0.0, 0.0, 0.5, 1.0).unwrap();
    let (alpha, lambda) = (2.0, 0.5);
    let theory = ridge_explicit(&model, alpha, lambda).unwrap().errors(&model);
    let est = Estimator::Erm { loss: LossSpec::L2, lambda };
    let rep = run_monte_carlo(&model, alpha, 100, &est, 60, 7, &cfg()).unwrap();
    assert!(rep.estim.z_score(theory.estim_error).abs() < 3.0, "{:?} {}", rep.estim, theory.estim_error);
    assert!(rep.gen.z_score(theory.gen_error).abs() < 3.0);
    assert_eq!(rep.failed, 0);
}

#[test]
fn standard_error_shrinks_with_seeds() {
    let model = OutlierModel::new(0.3, 0.0, 1.0, 5.0).unwrap();
    let est = Estimator::Erm { loss: LossSpec::L2, lambda: 1.0 };
    let a = run_monte_carlo(&model, 3.0, 50, &est, 25, 0, &cfg()).unwrap();
    let b = run_monte_carlo(&model, 3.0, 50, &est, 100, 1000, &cfg()).unwrap();
    let ratio = a.estim.std_error / b.estim.std_error;
    assert!((1.4..2.8).contains(&ratio), "{ratio}");
}

#[test]
fn monte_carlo_is_reproducible() {
    let model = OutlierModel::new(0.3, 0.0, 1.0, 5.0).unwrap();
    let est = Estimator::Erm { loss: LossSpec::Huber { a: 1.0 }, lambda: 0.5 };
    let a = run_monte_carlo(&model, 2.0, 30, &est, 4, 9, &cfg()).unwrap();
    let b = run_monte_carlo(&model, 2.0, 30, &est, 4, 9, &cfg()).unwrap();
    assert_eq!(a, b);
    assert!(run_monte_carlo(&model, 2.0, 30, &est, 1, 9, &cfg()).is_err());
}

#[test]
fn convex_minimisers_scale_with_labels() {
    let model = OutlierModel::new(0.3, 0.0, 1.0, 5.0).unwrap();
    let data = sample_dataset(&model, 200, 100, 21).unwrap();
    let c = 3.0;
    let mut scaled = data.clone();
    scaled.labels *= c;
    let solver = ConvexSolverConfig {
        grad_tol: 1e-10,
        rel_cost_tol: 0.0,
        ..ConvexSolverConfig::default()
    };
    let close = |u: &nalgebra::DVector<f64>, v: &nalgebra::DVector<f64>| (u - v).norm() / v.norm();

    // Huber: w(c y; c a, lambda) = c w(y; a, lambda)
    let (a, lambda) = (0.7, 0.3);
    let w = erm_convex(&data, LossSpec::Huber { a }, lambda, &solver).unwrap();
    let ws = erm_convex(&scaled, LossSpec::Huber { a: c * a }, lambda, &solver).unwrap();
    assert!(close(&ws, &(&w * c)) < 1e-6, "{}", close(&ws, &(&w * c)));

    // l1: sum c|r| + (lambda / c) c^2 |w|^2 / 2 is c times the original; the
    // fixed smoothing scale of the solver breaks exactness slightly
    let w = erm_convex(&data, LossSpec::L1, lambda, &solver).unwrap();
    let ws = erm_convex(&scaled, LossSpec::L1, lambda / c, &solver).unwrap();
    assert!(close(&ws, &(&w * c)) < 1e-2, "{}", close(&ws, &(&w * c)));

    // ridge is linear in the labels
    let w = robust_asymp::simulation::erm_ridge(&data, lambda).unwrap();
    let ws = robust_asymp::simulation::erm_ridge(&scaled, lambda).unwrap();
    assert!(close(&ws, &(&w * c)) < 1e-12);
}

#[test]
fn gamp_overlaps_satisfy_nishimori() {
    let model = OutlierModel::new(0.3, 0.0, 1.0, 5.0).unwrap();
    let (d, alpha) = (400, 5.0);
    let data = sample_dataset(&model, (alpha * d as f64) as usize, d, 4).unwrap();
    let st = gamp_state(&data, &BayesChannel::new(&model), &GaussianPrior::bayes(), &GampConfig::default()).unwrap();
    let df = d as f64;
    let m = st.w_hat.dot(&data.teacher) / df;
    let q = st.w_hat.norm_squared() / df;
    let qb = bo_fixed_point(&model, alpha, &FixedPointConfig::with_tolerance(1e-10)).unwrap().q_b;
    assert!((m - q).abs() < 4.0 / df.sqrt(), "{m} {q}");
    assert!((q - qb).abs() < 5.0 / df.sqrt(), "{q} {qb}");
}
