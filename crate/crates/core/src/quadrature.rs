//! Adaptive Gauss-Kronrod (7/15) quadrature in one dimension, and an iterated
//! two-dimensional integrator built on top of it.
//!
//! Integrands with kinks (Huber and l1 residual clamps) are handled by passing
//! the kink locations as breakpoints, so every panel sees a smooth function.

use std::cell::RefCell;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the odd Kronrod nodes 1, 3, 5 and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-11,
            max_panels: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = h * x;
        let s = f(c - dx) + f(c + dx);
        kronrod += w * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Panel {
        a,
        b,
        value: kronrod * h,
        error: ((kronrod - gauss) * h).abs(),
    }
}

/// Integrate `f` over `[breaks[0], breaks[last]]`, with an initial panel split
/// at every interior breakpoint. Breakpoints must be sorted; duplicates and
/// zero-width panels are dropped.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    breaks: &[f64],
    cfg: &QuadConfig,
) -> Result<QuadResult> {
    let (value, error, evaluations, ok) = integrate_raw(&mut f, breaks, cfg);
    if ok {
        Ok(QuadResult {
            value,
            error,
            evaluations,
        })
    } else {
        Err(Error::Quadrature {
            estimate: value,
            error,
        })
    }
}

fn integrate_raw<F: FnMut(f64) -> f64>(
    f: &mut F,
    breaks: &[f64],
    cfg: &QuadConfig,
) -> (f64, f64, usize, bool) {
    let mut panels: Vec<Panel> = Vec::with_capacity(64);
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            panels.push(gk15(f, w[0], w[1]));
        }
    }
    let mut evaluations = 15 * panels.len();
    loop {
        let value: f64 = panels.iter().map(|p| p.value).sum();
        let error: f64 = panels.iter().map(|p| p.error).sum();
        if !value.is_finite() {
            return (value, f64::INFINITY, evaluations, false);
        }
        let target = cfg.abs_tol.max(cfg.rel_tol * value.abs());
        if error <= target {
            return (value, error, evaluations, true);
        }
        if panels.len() >= cfg.max_panels {
            return (value, error, evaluations, false);
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("at least one panel");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            // interval exhausted at machine precision
            return (value, error, evaluations, error <= 1e3 * target);
        }
        panels.push(gk15(f, p.a, mid));
        panels.push(gk15(f, mid, p.b));
        evaluations += 30;
    }
}

/// Sort and deduplicate a breakpoint list, clipping it to `[lo, hi]` and
/// making sure both ends are present.
pub fn breakpoints(lo: f64, hi: f64, interior: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = std::iter::once(lo)
        .chain(interior.into_iter().filter(|x| x.is_finite() && *x > lo && *x < hi))
        .chain(std::iter::once(hi))
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + b.abs()));
    v
}

/// Iterated 2-D integral `∫ dx ∫ dy f(x, y)`. The inner breakpoints may depend
/// on `x`; the inner error budget is a fraction of the outer tolerance.
pub fn integrate_2d<F, B>(
    f: F,
    outer_breaks: &[f64],
    inner_breaks: B,
    cfg: &QuadConfig,
) -> Result<QuadResult>
where
    F: Fn(f64, f64) -> f64,
    B: Fn(f64) -> Vec<f64>,
{
    let inner_cfg = QuadConfig {
        abs_tol: cfg.abs_tol * 0.1,
        rel_tol: cfg.rel_tol * 0.1,
        max_panels: cfg.max_panels,
    };
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let inner_evals = RefCell::new(0usize);
    let outer = |x: f64| {
        let br = inner_breaks(x);
        let (v, e, n, ok) = integrate_raw(&mut |y| f(x, y), &br, &inner_cfg);
        *inner_evals.borrow_mut() += n;
        if !ok && failure.borrow().is_none() {
            *failure.borrow_mut() = Some(Error::Quadrature {
                estimate: v,
                error: e,
            });
        }
        v
    };
    let res = integrate(outer, outer_breaks, cfg)?;
    if let Some(err) = failure.into_inner() {
        return Err(err);
    }
    Ok(QuadResult {
        evaluations: inner_evals.into_inner(),
        ..res
    })
}
