//! Generalised approximate message passing for the teacher-student GLM.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::MixtureChannel;
use crate::error::{invalid, Error, Result};
use crate::loss::LossSpec;
use crate::model::{Dataset, OutlierModel};

/// Output denoiser: `(f_out, d f_out / d omega)` at `(y, omega, V)`.
pub trait OutputChannel: Sync {
    fn f_out(&self, y: f64, omega: f64, v: f64) -> (f64, f64);
}

/// Input denoiser: `(f_w, d f_w / d gamma)` at `(gamma, Lambda)`.
pub trait InputPrior: Sync {
    fn f_w(&self, gamma: f64, lambda: f64) -> (f64, f64);
}

/// Posterior-mean denoiser of the outlier mixture.
#[derive(Debug, Clone)]
pub struct BayesChannel(MixtureChannel);

impl BayesChannel {
    pub fn new(model: &OutlierModel) -> Self {
        Self(MixtureChannel::new(model))
    }
}

impl OutputChannel for BayesChannel {
    fn f_out(&self, y: f64, omega: f64, v: f64) -> (f64, f64) {
        let (_, f, df) = self.0.bayes_f_out(y, omega, v);
        (f, df)
    }
}

/// Proximal denoiser of a convex loss.
#[derive(Debug, Clone, Copy)]
pub struct LossChannel(pub LossSpec);

impl OutputChannel for LossChannel {
    fn f_out(&self, y: f64, omega: f64, v: f64) -> (f64, f64) {
        self.0.f_out(y, omega, v)
    }
}

/// Gaussian prior `N(0, 1)` (Bayes) or the ridge penalty `lambda |w|^2 / 2`
/// (ERM): both give `f_w = gamma / (p + Lambda)` with precision `p`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianPrior {
    pub precision: f64,
}

impl GaussianPrior {
    pub fn bayes() -> Self {
        Self { precision: 1.0 }
    }

    pub fn ridge(lambda: f64) -> Self {
        Self { precision: lambda }
    }
}

impl InputPrior for GaussianPrior {
    fn f_w(&self, gamma: f64, lambda: f64) -> (f64, f64) {
        let c = 1.0 / (self.precision + lambda);
        (gamma * c, c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GampConfig {
    /// Weight of the new iterate in the damped update of `w_hat` and `V`.
    pub damping: f64,
    /// Stop when `|w_{t+1} - w_t|^2 / d` falls below this.
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for GampConfig {
    fn default() -> Self {
        Self {
            damping: 0.7,
            tolerance: 1e-8,
            max_iters: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GampState {
    pub w_hat: DVector<f64>,
    pub c_vec: DVector<f64>,
    pub omega: DVector<f64>,
    pub v: DVector<f64>,
    pub fout_prev: DVector<f64>,
    pub iteration: usize,
}

impl GampState {
    fn init(n: usize, d: usize) -> Self {
        Self {
            w_hat: DVector::zeros(d),
            c_vec: DVector::from_element(d, 1.0),
            omega: DVector::zeros(n),
            v: DVector::zeros(n),
            fout_prev: DVector::zeros(n),
            iteration: 0,
        }
    }
}

/// Run GAMP and return the final state. With `max_iters = 0` the
/// initialisation is returned unchanged.
pub fn gamp_state<C: OutputChannel, P: InputPrior>(
    data: &Dataset,
    channel: &C,
    prior: &P,
    config: &GampConfig,
) -> Result<GampState> {
    if !(config.damping > 0.0 && config.damping <= 1.0) {
        return Err(invalid("damping", format!("{} not in (0, 1]", config.damping)));
    }
    let (n, d) = (data.n(), data.d());
    let mut st = GampState::init(n, d);
    if config.max_iters == 0 {
        return Ok(st);
    }
    let df = d as f64;
    let sd = df.sqrt();
    let x = &data.samples;
    let x2: DMatrix<f64> = x.map(|v| v * v) / df;
    let mu = config.damping;
    let mut fout = DVector::zeros(n);
    let mut dfout = DVector::zeros(n);
    for t in 0..config.max_iters {
        let v_new = &x2 * &st.c_vec;
        st.v = if t == 0 { v_new } else { v_new * mu + &st.v * (1.0 - mu) };
        st.omega = x * &st.w_hat / sd - st.v.component_mul(&st.fout_prev);
        for i in 0..n {
            let (f, g) = channel.f_out(data.labels[i], st.omega[i], st.v[i]);
            fout[i] = f;
            dfout[i] = g;
        }
        let lam = -x2.tr_mul(&dfout);
        let gamma = x.tr_mul(&fout) / sd + lam.component_mul(&st.w_hat);
        let mut w_new = DVector::zeros(d);
        for i in 0..d {
            let (w, c) = prior.f_w(gamma[i], lam[i]);
            w_new[i] = w;
            st.c_vec[i] = c;
        }
        let w_next = w_new * mu + &st.w_hat * (1.0 - mu);
        let change = (&w_next - &st.w_hat).norm_squared() / df;
        st.w_hat = w_next;
        st.fout_prev.copy_from(&fout);
        st.iteration = t + 1;
        if !change.is_finite() || st.w_hat.iter().any(|w| !w.is_finite()) {
            return Err(Error::Gamp {
                iterations: t + 1,
                reason: "non-finite iterate".into(),
            });
        }
        if st.v.iter().chain(st.c_vec.iter()).any(|&v| !(v > 0.0)) {
            return Err(Error::Gamp {
                iterations: t + 1,
                reason: "variance left the positive half-line".into(),
            });
        }
        if change < config.tolerance {
            return Ok(st);
        }
    }
    Err(Error::Gamp {
        iterations: config.max_iters,
        reason: "iteration cap reached".into(),
    })
}

pub fn gamp<C: OutputChannel, P: InputPrior>(
    data: &Dataset,
    channel: &C,
    prior: &P,
    config: &GampConfig,
) -> Result<DVector<f64>> {
    gamp_state(data, channel, prior, config).map(|s| s.w_hat)
}
