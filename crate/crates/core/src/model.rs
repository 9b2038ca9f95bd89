//! The outlier noise channel, error metrics as functions of the overlaps, and
//! synthetic dataset sampling.
//!
//! Labels follow a two-component mixture: with probability `1 - eps` an inlier
//! `y = y* + sqrt(delta_in) z`, otherwise an outlier `y = beta y* + sqrt(delta_out) z`,
//! where `y* = x . w* / sqrt(d)` and the teacher `w*` has i.i.d. standard normal
//! entries (so its squared norm per dimension concentrates on one).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{self, StreamTag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierModel {
    pub eps: f64,
    pub beta: f64,
    pub delta_in: f64,
    pub delta_out: f64,
}

impl OutlierModel {
    pub fn new(eps: f64, beta: f64, delta_in: f64, delta_out: f64) -> Result<Self> {
        let model = Self {
            eps,
            beta,
            delta_in,
            delta_out,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eps) {
            return Err(invalid("eps", format!("{} not in [0, 1]", self.eps)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta", format!("{} must be finite and >= 0", self.beta)));
        }
        if !(self.delta_in > 0.0 && self.delta_in.is_finite()) {
            return Err(invalid("delta_in", format!("{} must be > 0", self.delta_in)));
        }
        if !(self.delta_out > 0.0 && self.delta_out.is_finite()) {
            return Err(invalid("delta_out", format!("{} must be > 0", self.delta_out)));
        }
        Ok(())
    }

    /// Effective noise variance `(1 - eps) delta_in + eps delta_out`.
    pub fn delta_eff(&self) -> f64 {
        (1.0 - self.eps) * self.delta_in + self.eps * self.delta_out
    }

    /// Mean label gain `1 + eps (beta - 1)`; the norm a generalisation-optimal
    /// student should carry.
    pub fn gamma(&self) -> f64 {
        1.0 + self.eps * (self.beta - 1.0)
    }

    /// Second moment of the labels, `1 + delta_eff + eps (beta^2 - 1)`.
    pub fn lambda_cap(&self) -> f64 {
        1.0 + self.delta_eff() + self.eps * (self.beta * self.beta - 1.0)
    }

    /// Irreducible generalisation error `eps (1 - eps) (1 - beta)^2 + delta_eff`,
    /// reached by the Bayes-optimal estimator as the sample complexity diverges.
    pub fn gen_error_floor(&self) -> f64 {
        let b = 1.0 - self.beta;
        self.eps * (1.0 - self.eps) * b * b + self.delta_eff()
    }
}

/// The six order parameters of the ERM fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapState {
    pub m: f64,
    pub q: f64,
    pub sigma: f64,
    pub m_hat: f64,
    pub q_hat: f64,
    pub sigma_hat: f64,
}

impl OverlapState {
    pub fn as_array(&self) -> [f64; 6] {
        [self.m, self.q, self.sigma, self.m_hat, self.q_hat, self.sigma_hat]
    }

    pub fn errors(&self, model: &OutlierModel) -> ErrorReport {
        ErrorReport::from_overlaps(self.m, self.q, model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub gen_error: f64,
    pub excess_gen_error: f64,
    pub estim_error: f64,
    /// Normalised teacher-student angle in `[0, 1]`; `None` when the student
    /// norm vanishes.
    pub angle: Option<f64>,
}

impl ErrorReport {
    pub fn from_overlaps(m: f64, q: f64, model: &OutlierModel) -> Self {
        Self {
            gen_error: gen_error_from_overlaps(m, q, model),
            excess_gen_error: excess_gen_error_from_overlaps(m, q, model),
            estim_error: estim_error_from_overlaps(m, q),
            angle: teacher_student_angle(m, q).ok(),
        }
    }
}

/// Population generalisation error of a student with overlaps `(m, q)`.
pub fn gen_error_from_overlaps(m: f64, q: f64, model: &OutlierModel) -> f64 {
    1.0 + model.eps * (model.beta * model.beta - 1.0) + q - 2.0 * m * model.gamma()
        + model.delta_eff()
}

/// Generalisation error above the infinite-data Bayes-optimal floor.
pub fn excess_gen_error_from_overlaps(m: f64, q: f64, model: &OutlierModel) -> f64 {
    gen_error_from_overlaps(m, q, model) - model.gen_error_floor()
}

pub fn estim_error_from_overlaps(m: f64, q: f64) -> f64 {
    1.0 + q - 2.0 * m
}

const ANGLE_SLACK: f64 = 1e-12;

/// `arccos(m / sqrt(q)) / pi`.
pub fn teacher_student_angle(m: f64, q: f64) -> Result<f64> {
    if !(q > 0.0) {
        return Err(Error::Domain(format!("angle needs q > 0, got {q}")));
    }
    let cos = m / q.sqrt();
    if cos.abs() > 1.0 + ANGLE_SLACK {
        return Err(Error::Domain(format!("|m| / sqrt(q) = {} exceeds 1", cos.abs())));
    }
    Ok(cos.clamp(-1.0, 1.0).acos() / std::f64::consts::PI)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub teacher: DVector<f64>,
    /// `n x d`, one sample per row.
    pub samples: DMatrix<f64>,
    pub labels: DVector<f64>,
    pub outlier_mask: Vec<bool>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.samples.nrows()
    }

    pub fn d(&self) -> usize {
        self.samples.ncols()
    }

    /// Noiseless teacher labels `x . w* / sqrt(d)`.
    pub fn clean_labels(&self) -> DVector<f64> {
        &self.samples * &self.teacher / (self.d() as f64).sqrt()
    }

    /// A fresh set drawn with the same teacher.
    pub fn resample(&self, model: &OutlierModel, n: usize, seed: u64, tag: StreamTag) -> Result<Dataset> {
        sample_with_teacher(model, self.teacher.clone(), n, &mut rng::stream(seed, tag))
    }
}

fn check_dims(n: usize, d: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if d == 0 {
        return Err(invalid("d", "must be at least 1"));
    }
    Ok(())
}

/// Draw one label from the outlier channel given the clean label.
#[inline]
pub fn draw_label<R: Rng + ?Sized>(model: &OutlierModel, clean: f64, rng: &mut R) -> (f64, bool) {
    let outlier = rng.gen::<f64>() < model.eps;
    let z: f64 = rng.sample(StandardNormal);
    if outlier {
        (model.beta * clean + z * model.delta_out.sqrt(), true)
    } else {
        (clean + z * model.delta_in.sqrt(), false)
    }
}

pub fn sample_teacher<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

pub fn sample_with_teacher<R: Rng + ?Sized>(
    model: &OutlierModel,
    teacher: DVector<f64>,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    let d = teacher.len();
    check_dims(n, d)?;
    model.validate()?;
    // Row-major draw order keeps a row's entries contiguous in the stream.
    let mut samples = DMatrix::<f64>::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            samples[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let clean = &samples * &teacher / (d as f64).sqrt();
    let mut labels = DVector::zeros(n);
    let mut outlier_mask = vec![false; n];
    for i in 0..n {
        let (y, out) = draw_label(model, clean[i], rng);
        labels[i] = y;
        outlier_mask[i] = out;
    }
    Ok(Dataset {
        teacher,
        samples,
        labels,
        outlier_mask,
    })
}

/// Teacher, samples and labels, reproducible from `seed`.
pub fn sample_dataset(model: &OutlierModel, n: usize, d: usize, seed: u64) -> Result<Dataset> {
    check_dims(n, d)?;
    let teacher = sample_teacher(d, &mut rng::stream(seed, StreamTag::Teacher));
    sample_with_teacher(model, teacher, n, &mut rng::stream(seed, StreamTag::Train))
}

/// Errors of `w_hat` measured on a held-out test set drawn with the same teacher.
///
/// The excess generalisation error is the difference between the test mean
/// squared residual of `w_hat` and that of the rescaled teacher
/// `(1 - eps + beta eps) w*`.
pub fn empirical_errors(test: &Dataset, w_hat: &DVector<f64>, model: &OutlierModel) -> Result<ErrorReport> {
    if test.n() == 0 {
        return Err(invalid("test", "empty test set"));
    }
    if w_hat.len() != test.d() {
        return Err(invalid(
            "w_hat",
            format!("dimension {} does not match d = {}", w_hat.len(), test.d()),
        ));
    }
    let sqrt_d = (test.d() as f64).sqrt();
    let pred = &test.samples * w_hat / sqrt_d;
    let clean = test.clean_labels();
    let gamma = model.gamma();
    let nt = test.n() as f64;
    let mut student = 0.0;
    let mut baseline = 0.0;
    for i in 0..test.n() {
        let y = test.labels[i];
        student += (y - pred[i]).powi(2);
        baseline += (y - gamma * clean[i]).powi(2);
    }
    Ok(report_from_sums(
        student / nt,
        baseline / nt,
        &test.teacher,
        w_hat,
        model,
    ))
}

fn report_from_sums(
    student: f64,
    baseline: f64,
    teacher: &DVector<f64>,
    w_hat: &DVector<f64>,
    model: &OutlierModel,
) -> ErrorReport {
    let d = teacher.len() as f64;
    let estim_error = (teacher - w_hat).norm_squared() / d;
    let tn = teacher.norm();
    let wn = w_hat.norm();
    let angle = if tn > 0.0 && wn > 0.0 {
        Some((teacher.dot(w_hat) / (tn * wn)).clamp(-1.0, 1.0).acos() / std::f64::consts::PI)
    } else {
        None
    };
    let _ = model;
    ErrorReport {
        gen_error: student,
        excess_gen_error: student - baseline,
        estim_error,
        angle,
    }
}

/// Same estimator as [`empirical_errors`] on a fresh test set of `n_test`
/// pairs, sampled directly in the two-dimensional span of `(w*, w_hat)`.
///
/// For Gaussian inputs the pair `(x . w* / sqrt(d), x . w_hat / sqrt(d))` is
/// exactly bivariate normal with the empirical Gram matrix of the two vectors,
/// so this has the same distribution as drawing `n_test` full `d`-dimensional
/// samples, at `O(n_test)` instead of `O(n_test d)` cost.
pub fn projected_test_errors<R: Rng + ?Sized>(
    teacher: &DVector<f64>,
    w_hat: &DVector<f64>,
    model: &OutlierModel,
    n_test: usize,
    rng: &mut R,
) -> Result<ErrorReport> {
    if n_test == 0 {
        return Err(invalid("n_test", "empty test set"));
    }
    if w_hat.len() != teacher.len() {
        return Err(invalid("w_hat", "dimension mismatch"));
    }
    let d = teacher.len() as f64;
    let rho = teacher.norm_squared() / d;
    let m = teacher.dot(w_hat) / d;
    let q = w_hat.norm_squared() / d;
    // Cholesky of [[rho, m], [m, q]]
    let l11 = rho.sqrt();
    let l21 = if l11 > 0.0 { m / l11 } else { 0.0 };
    let l22 = (q - l21 * l21).max(0.0).sqrt();
    let gamma = model.gamma();
    let mut student = 0.0;
    let mut baseline = 0.0;
    for _ in 0..n_test {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let clean = l11 * z1;
        let pred = l21 * z1 + l22 * z2;
        let (y, _) = draw_label(model, clean, rng);
        student += (y - pred).powi(2);
        baseline += (y - gamma * clean).powi(2);
    }
    let nt = n_test as f64;
    Ok(report_from_sums(student / nt, baseline / nt, teacher, w_hat, model))
}
