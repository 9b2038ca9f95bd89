//! The outlier mixture as an output channel: the partition function
//! `Z_out(y, omega, V)`, its score, and the Bayes-optimal `f_out`.
//!
//! Given a Gaussian belief `z ~ N(omega, V)` on the pre-activation, a label
//! from component `c` (gain `beta_c`, noise `delta_c`) is distributed as
//! `N(beta_c omega, beta_c^2 V + delta_c)`.

use crate::model::OutlierModel;
use crate::special::normal_log_pdf;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub gain: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureChannel {
    components: Vec<Component>,
}

impl MixtureChannel {
    pub fn new(model: &OutlierModel) -> Self {
        let all = [
            Component {
                weight: 1.0 - model.eps,
                gain: 1.0,
                noise: model.delta_in,
            },
            Component {
                weight: model.eps,
                gain: model.beta,
                noise: model.delta_out,
            },
        ];
        Self {
            components: all.into_iter().filter(|c| c.weight > 0.0).collect(),
        }
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Centres and standard deviations of the label components at `(omega, V)`.
    pub fn label_spread(&self, omega: f64, v: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.components
            .iter()
            .map(move |c| (c.gain * omega, (c.gain * c.gain * v + c.noise).sqrt()))
    }

    pub fn z_out(&self, y: f64, omega: f64, v: f64) -> f64 {
        self.log_z_out(y, omega, v).exp()
    }

    pub fn log_z_out(&self, y: f64, omega: f64, v: f64) -> f64 {
        let mut buf = [0.0; 2];
        self.log_terms(y, omega, v, &mut buf);
        log_sum_exp(&buf[..self.components.len()])
    }

    fn log_terms(&self, y: f64, omega: f64, v: f64, out: &mut [f64; 2]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            let var = c.gain * c.gain * v + c.noise;
            *o = c.weight.ln() + normal_log_pdf(y, c.gain * omega, var);
        }
    }

    /// Returns `(log Z, f_out, df_out)` where `f_out = d log Z / d omega` and
    /// `df_out` its derivative. Computed through component responsibilities,
    /// so it stays finite deep in the tails.
    pub fn bayes_f_out(&self, y: f64, omega: f64, v: f64) -> (f64, f64, f64) {
        let mut logs = [0.0; 2];
        self.log_terms(y, omega, v, &mut logs);
        let k = self.components.len();
        let lz = log_sum_exp(&logs[..k]);
        let mut f = 0.0;
        let mut second = 0.0;
        for (c, &l) in self.components.iter().zip(&logs) {
            let r = (l - lz).exp();
            let var = c.gain * c.gain * v + c.noise;
            let s = c.gain * (y - c.gain * omega) / var;
            let ds = -c.gain * c.gain / var;
            f += r * s;
            second += r * (s * s + ds);
        }
        (lz, f, second - f * f)
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, QuadConfig};
    use crate::rng::{stream, StreamTag};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn model() -> OutlierModel {
        OutlierModel::new(0.3, 0.4, 1.0, 5.0).unwrap()
    }

    #[test]
    fn normalised_over_labels() {
        let ch = MixtureChannel::new(&model());
        for &(omega, v) in &[(0.0, 0.5), (1.3, 0.1), (-2.0, 0.9)] {
            let r = integrate(|y| ch.z_out(y, omega, v), &[-40.0, 0.0, 40.0], &QuadConfig::default()).unwrap();
            assert!((r.value - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn matches_sampled_channel() {
        // histogram of labels generated by z ~ N(omega, V) pushed through the
        // outlier model, against the closed-form density
        let m = model();
        let ch = MixtureChannel::new(&m);
        let (omega, v) = (0.7, 0.4f64);
        let mut rng = stream(5, StreamTag::Perturbation);
        let n = 200_000;
        let (lo, hi) = (-1.0, 2.0);
        let mut hits = 0usize;
        for _ in 0..n {
            let z = omega + v.sqrt() * rng.sample::<f64, _>(StandardNormal);
            let (y, _) = crate::model::draw_label(&m, z, &mut rng);
            if (lo..hi).contains(&y) {
                hits += 1;
            }
        }
        let p = integrate(|y| ch.z_out(y, omega, v), &[lo, hi], &QuadConfig::default())
            .unwrap()
            .value;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - p).abs() < 4.0 * se);
    }

    #[test]
    fn score_matches_finite_difference() {
        let ch = MixtureChannel::new(&model());
        for &(y, omega, v) in &[(0.3, 0.1, 0.5), (4.0, -1.0, 0.2), (-30.0, 0.5, 0.7)] {
            let h = 1e-5;
            let (_, f, df) = ch.bayes_f_out(y, omega, v);
            let fd = (ch.log_z_out(y, omega + h, v) - ch.log_z_out(y, omega - h, v)) / (2.0 * h);
            let fd2 = (ch.bayes_f_out(y, omega + h, v).1 - ch.bayes_f_out(y, omega - h, v).1) / (2.0 * h);
            assert!((f - fd).abs() < 1e-6 * (1.0 + f.abs()), "{f} {fd}");
            assert!((df - fd2).abs() < 1e-5 * (1.0 + df.abs()), "{df} {fd2}");
        }
    }

    #[test]
    fn pure_gaussian_channel() {
        let m = OutlierModel::new(0.0, 0.0, 0.5, 1.0).unwrap();
        let ch = MixtureChannel::new(&m);
        assert_eq!(ch.components().len(), 1);
        let (_, f, df) = ch.bayes_f_out(1.0, 0.2, 0.3);
        assert!((f - 0.8 / 0.8).abs() < 1e-15);
        assert!((df + 1.0 / 0.8).abs() < 1e-15);
    }
}
