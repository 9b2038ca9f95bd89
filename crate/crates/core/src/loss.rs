//! The three convex losses, their proximal maps and the resulting `f_out`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LossSpec {
    L2,
    L1,
    Huber { a: f64 },
}

impl LossSpec {
    pub fn huber(a: f64) -> Result<Self> {
        let l = LossSpec::Huber { a };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LossSpec::Huber { a } if !(a > 0.0) || a.is_nan() => {
                Err(invalid("huber_a", format!("scale {a} must be > 0")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossSpec::L2 => "l2",
            LossSpec::L1 => "l1",
            LossSpec::Huber { .. } => "huber",
        }
    }

    /// Loss as a function of the residual `r = y - y_hat`.
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            LossSpec::L2 => 0.5 * r * r,
            LossSpec::L1 => r.abs(),
            LossSpec::Huber { a } => {
                if r.abs() < a {
                    0.5 * r * r
                } else {
                    a * r.abs() - 0.5 * a * a
                }
            }
        }
    }

    /// Derivative of the loss with respect to the residual.
    pub fn derivative(&self, r: f64) -> f64 {
        match *self {
            LossSpec::L2 => r,
            LossSpec::L1 => r.signum() * (r != 0.0) as u8 as f64,
            LossSpec::Huber { a } => r.clamp(-a, a),
        }
    }

    /// Half-width of the residual band `|y - omega| < kink` inside which the
    /// proximal map is linear; `None` for the quadratic loss.
    pub fn kink(&self, v: f64) -> Option<f64> {
        match *self {
            LossSpec::L2 => None,
            LossSpec::L1 => Some(v),
            LossSpec::Huber { a } => Some(a * (1.0 + v)),
        }
    }

    /// `f_out(y, omega, V) = (prox_{V loss}(omega) - omega) / V` and its
    /// derivative with respect to `omega`.
    ///
    /// The proximal point moves towards `y`, so `f_out` has the sign of
    /// `y - omega`.
    pub fn f_out(&self, y: f64, omega: f64, v: f64) -> (f64, f64) {
        let r = y - omega;
        match *self {
            LossSpec::L2 => (r / (1.0 + v), -1.0 / (1.0 + v)),
            LossSpec::L1 => {
                if r.abs() < v {
                    (r / v, -1.0 / v)
                } else {
                    (r.signum(), 0.0)
                }
            }
            LossSpec::Huber { a } => {
                let k = a * (1.0 + v);
                if r.abs() < k {
                    (r / (1.0 + v), -1.0 / (1.0 + v))
                } else {
                    (a * r.signum(), 0.0)
                }
            }
        }
    }

    /// `prox_{V loss}(omega)`: the minimiser of `loss(y - z) + (z - omega)^2 / (2V)`.
    pub fn prox(&self, y: f64, omega: f64, v: f64) -> f64 {
        omega + v * self.f_out(y, omega, v).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_prox(loss: &LossSpec, y: f64, omega: f64, v: f64) -> f64 {
        // golden-section search on a bracket that certainly holds the minimiser
        let obj = |z: f64| loss.value(y - z) + (z - omega).powi(2) / (2.0 * v);
        let (mut lo, mut hi) = (omega.min(y) - 1.0, omega.max(y) + 1.0);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let x1 = hi - g * (hi - lo);
            let x2 = lo + g * (hi - lo);
            if obj(x1) < obj(x2) {
                hi = x2;
            } else {
                lo = x1;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn prox_matches_direct_minimisation() {
        let losses = [LossSpec::L2, LossSpec::L1, LossSpec::Huber { a: 0.7 }];
        for loss in &losses {
            for &(y, omega, v) in &[(1.3, 0.2, 0.5), (-2.0, 0.4, 1.5), (0.1, 0.0, 0.3), (4.0, -1.0, 0.05)] {
                let p = loss.prox(y, omega, v);
                let b = brute_prox(loss, y, omega, v);
                assert!((p - b).abs() < 1e-6, "{loss:?} {y} {omega} {v}: {p} {b}");
            }
        }
    }

    #[test]
    fn f_out_derivative_matches_finite_difference() {
        let losses = [LossSpec::L2, LossSpec::L1, LossSpec::Huber { a: 0.7 }];
        for loss in &losses {
            for &(y, omega, v) in &[(1.3, 0.2, 0.5), (-2.0, 0.4, 1.5), (0.1, 0.0, 0.3)] {
                let h = 1e-6;
                let fd = (loss.f_out(y, omega + h, v).0 - loss.f_out(y, omega - h, v).0) / (2.0 * h);
                assert!((fd - loss.f_out(y, omega, v).1).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn huber_limits() {
        let big = LossSpec::Huber { a: 1e8 };
        assert_eq!(big.f_out(3.0, 1.0, 0.5), LossSpec::L2.f_out(3.0, 1.0, 0.5));
        let r = 0.3;
        assert!((LossSpec::Huber { a: 1.0 }.value(r) - 0.045).abs() < 1e-15);
        assert!((LossSpec::Huber { a: 1.0 }.value(3.0) - 2.5).abs() < 1e-15);
        assert!(LossSpec::huber(0.0).is_err());
        assert!(LossSpec::huber(f64::NAN).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let l = LossSpec::Huber { a: 2.5 };
        let s = serde_json::to_string(&l).unwrap();
        assert_eq!(s, r#"{"kind":"huber","a":2.5}"#);
        assert_eq!(serde_json::from_str::<LossSpec>(&s).unwrap(), l);
    }
}
