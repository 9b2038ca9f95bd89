use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use robust_asymp::figures::{evaluate_method, grid, Axis, Figure, FigureSpec, Method, MethodOutcome, Metric};
use robust_asymp::hyperopt::Target;
use robust_asymp::report::{Cell, SweepResult, SweepRow, Table};
use robust_asymp::simulation::{run_monte_carlo, thread_pool, McConfig};
use robust_asymp::{bo_rate_fit, HuberScale, OutlierModel};
use serde_json::{json, Value};

use crate::Shared;

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad number `{p}`")))
        .collect()
}

/// `lo:hi:n`.
fn parse_range(s: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else {
        bail!("range `{s}` is not lo:hi:n");
    };
    Ok((lo.parse()?, hi.parse()?, n.parse()?))
}

fn header(command: &str, body: Value) -> Value {
    let mut h = json!({ "command": command, "version": env!("CARGO_PKG_VERSION") });
    if let (Some(h), Value::Object(b)) = (h.as_object_mut(), body) {
        h.extend(b);
    }
    h
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn scale_cell(a: Option<HuberScale>) -> Cell {
    match a {
        Some(HuberScale::Finite(a)) => Cell::Num(a),
        // a diverged scale is written as inf
        Some(HuberScale::Diverged) => Cell::Num(f64::INFINITY),
        None => Cell::Missing,
    }
}

fn has_scale(m: Method) -> bool {
    matches!(m, Method::Huber | Method::HuberFixedA(_))
}

/// Sweep column names for `methods`, in output order.
pub fn sweep_columns(methods: &[Method]) -> Vec<String> {
    let mut cols = Vec::new();
    for m in methods {
        let l = m.label();
        for c in ["gen", "excess", "estim"] {
            cols.push(format!("{l}_{c}"));
        }
        if *m != Method::Bayes {
            cols.push(format!("{l}_lambda"));
        }
        if has_scale(*m) {
            cols.push(format!("{l}_a"));
        }
    }
    cols
}

/// One sweep row; failures become empty cells tagged `method:code`.
pub fn sweep_row(
    axis: Axis,
    base: &OutlierModel,
    alpha: f64,
    v: f64,
    methods: &[Method],
    target: Target,
    lambda: Option<f64>,
) -> SweepRow {
    let mut values = Vec::new();
    let mut failures = Vec::new();
    let point = axis.apply(base, alpha, v);
    for &m in methods {
        let r: Result<MethodOutcome, robust_asymp::Error> =
            point.clone().and_then(|(model, a)| evaluate_method(m, &model, a, target, lambda));
        let width = 3 + usize::from(m != Method::Bayes) + usize::from(has_scale(m));
        match r {
            Ok(o) => {
                values.extend([
                    Some(o.errors.gen_error),
                    Some(o.errors.excess_gen_error),
                    Some(o.errors.estim_error),
                ]);
                if m != Method::Bayes {
                    values.push(o.lambda);
                }
                if has_scale(m) {
                    values.push(scale_cell(o.a).num());
                }
            }
            Err(e) => {
                values.extend(std::iter::repeat(None).take(width));
                failures.push(format!("{}:{}", m.label(), e.code()));
            }
        }
    }
    SweepRow { value: v, values, failures }
}

#[derive(Args)]
pub struct SweepArgs {
    /// alpha, eps, delta_out or beta.
    axis: String,
    /// Grid as lo:hi:n.
    #[arg(long)]
    range: Option<String>,
    /// Geometric spacing (default for alpha and delta_out).
    #[arg(long, conflicts_with = "lin")]
    log: bool,
    /// Linear spacing (default for eps and beta).
    #[arg(long)]
    lin: bool,
}

pub fn sweep(args: &SweepArgs, shared: &Shared) -> Result<()> {
    let axis: Axis = args.axis.parse()?;
    let (lo, hi, n) = match args.range.as_deref() {
        Some(r) => parse_range(r)?,
        None => match axis {
            Axis::Alpha => (0.5, 1000.0, 30),
            Axis::Eps => (0.01, 0.9, 20),
            Axis::DeltaOut => (0.1, 100.0, 25),
            Axis::Beta => (0.0, 3.0, 16),
        },
    };
    let log = if args.log || args.lin { args.log } else { axis.log_by_default() };
    let values = grid(lo, hi, n, log)?;
    let base = shared.model(0.3, 5.0)?;
    let alpha = shared.alphas()?.and_then(|v| v.first().copied()).unwrap_or(10.0);
    let methods = shared.methods(&[Method::L2, Method::L1, Method::Huber, Method::Bayes])?;
    let target = shared.target()?;
    let h = header(
        "sweep",
        json!({
            "axis": axis.name(),
            "grid": {"lo": lo, "hi": hi, "n": n, "log": log},
            "model": base,
            "alpha": alpha,
            "methods": methods.iter().map(ToString::to_string).collect::<Vec<_>>(),
            "lambda": shared.lambda,
            "target": target,
        }),
    );
    let pool = thread_pool()?;
    let rows: Vec<SweepRow> = pool.install(|| {
        values
            .par_iter()
            .map(|&v| sweep_row(axis, &base, alpha, v, &methods, target, shared.lambda))
            .collect()
    });
    let mut result = SweepResult::new(axis.name(), h, sweep_columns(&methods));
    for r in rows {
        result.push(r);
    }
    if result.successful_rows() == 0 {
        let first = result.rows.first().map(|r| r.failures.join(";")).unwrap_or_default();
        bail!("every grid point failed ({first})");
    }
    emit(&result.to_csv(), shared.out.as_deref())
}

#[derive(Args)]
pub struct PhaseArgs {
    /// eps grid as lo:hi:n (linear).
    #[arg(long = "eps-range", default_value = "0.05:0.5:10")]
    eps_range: String,
    /// delta_out grid as lo:hi:n (geometric).
    #[arg(long = "dout-range", default_value = "0.1:100:13")]
    dout_range: String,
    /// Where to write the boundary points; defaults next to --out.
    #[arg(long = "boundary-out")]
    boundary_out: Option<PathBuf>,
}

/// Generalisation-error gap of optimal ℓ2 over optimal Huber and whether the
/// Huber scale diverged.
pub fn phase_cell(model: &OutlierModel, alpha: f64) -> Result<(f64, f64, HuberScale), robust_asymp::Error> {
    let l2 = evaluate_method(Method::L2, model, alpha, Target::Gen, None)?;
    let h = evaluate_method(Method::Huber, model, alpha, Target::Gen, None)?;
    Ok((l2.errors.gen_error, h.errors.gen_error, h.a.unwrap_or(HuberScale::Diverged)))
}

pub fn phase_diagram(args: &PhaseArgs, shared: &Shared) -> Result<()> {
    let (elo, ehi, en) = parse_range(&args.eps_range)?;
    let (dlo, dhi, dn) = parse_range(&args.dout_range)?;
    let eps = grid(elo, ehi, en, false)?;
    let douts = grid(dlo, dhi, dn, true)?;
    let alphas = shared.alphas()?.unwrap_or_else(|| vec![1.0, 10.0, 100.0]);
    let base = shared.model(0.3, 5.0)?;
    let h = header(
        "phase-diagram",
        json!({
            "eps": {"lo": elo, "hi": ehi, "n": en, "log": false},
            "delta_out": {"lo": dlo, "hi": dhi, "n": dn, "log": true},
            "alpha": alphas,
            "delta_in": base.delta_in,
            "beta": base.beta,
        }),
    );
    let mut cells = Vec::new();
    for &a in &alphas {
        for &e in &eps {
            for &d in &douts {
                cells.push((a, e, d));
            }
        }
    }
    let pool = thread_pool()?;
    let results: Vec<_> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(a, e, d)| {
                let m = OutlierModel::new(e, base.beta, base.delta_in, d)?;
                phase_cell(&m, a)
            })
            .collect()
    });
    let cols = ["alpha", "eps", "delta_out", "l2_gen", "huber_gen", "difference", "huber_a", "failure"];
    let mut table = Table::new(h.clone(), cols.iter().map(|s| s.to_string()).collect());
    let mut ok = 0;
    for (&(a, e, d), r) in cells.iter().zip(&results) {
        let row = match r {
            Ok((l2, hub, scale)) => {
                ok += 1;
                vec![
                    a.into(),
                    e.into(),
                    d.into(),
                    (*l2).into(),
                    (*hub).into(),
                    (l2 - hub).into(),
                    scale_cell(Some(*scale)),
                    Cell::Missing,
                ]
            }
            Err(err) => vec![
                a.into(),
                e.into(),
                d.into(),
                Cell::Missing,
                Cell::Missing,
                Cell::Missing,
                Cell::Missing,
                err.code().into(),
            ],
        };
        table.push(row);
    }
    if ok == 0 {
        bail!("every cell failed");
    }

    // Boundary: for each (alpha, eps), the geometric midpoint between the
    // last collapsed and the first non-collapsed delta_out.
    let bcols = ["alpha", "eps", "delta_out_boundary", "status"];
    let mut boundary = Table::new(h, bcols.iter().map(|s| s.to_string()).collect());
    let mut k = 0;
    for &a in &alphas {
        for &e in &eps {
            let column = &results[k..k + douts.len()];
            k += douts.len();
            let separated: Vec<Option<bool>> = column
                .iter()
                .map(|r| r.as_ref().ok().map(|(_, _, s)| matches!(s, HuberScale::Finite(_))))
                .collect();
            let (value, status) = match separated.iter().position(|s| *s == Some(true)) {
                None => (Cell::Missing, "above_range"),
                Some(0) => (Cell::Missing, "below_range"),
                Some(i) => (Cell::Num((douts[i - 1] * douts[i]).sqrt()), "inside"),
            };
            boundary.push(vec![a.into(), e.into(), value, status.into()]);
        }
    }
    let bpath = args.boundary_out.clone().or_else(|| {
        shared
            .out
            .as_ref()
            .map(|p| p.with_extension("boundary.csv"))
    });
    emit(&table.to_csv(), shared.out.as_deref())?;
    match bpath {
        Some(p) => emit(&boundary.to_csv(), Some(&p)),
        None => {
            println!();
            emit(&boundary.to_csv(), None)
        }
    }
}

#[derive(Args)]
pub struct SimulateArgs {
    /// fig1-left, fig1-right, fig2-left, fig2-right or custom.
    #[arg(long, default_value = "fig1-right")]
    figure: String,
    /// Grid values overriding the figure's desk-scale points.
    #[arg(long)]
    points: Option<String>,
    /// Axis of a custom run.
    #[arg(long, default_value = "alpha")]
    axis: String,
    /// Plotted error of a custom run: excess or estim.
    #[arg(long, default_value = "excess")]
    metric: String,
    /// Test pairs per seed.
    #[arg(long = "n-test", default_value_t = 100_000)]
    n_test: usize,
}

fn custom_spec(args: &SimulateArgs, shared: &Shared) -> Result<FigureSpec> {
    let axis: Axis = args.axis.parse()?;
    let metric = match args.metric.as_str() {
        "excess" => Metric::ExcessGen,
        "estim" => Metric::Estim,
        m => bail!("unknown metric `{m}`"),
    };
    let alphas = shared.alphas()?;
    let points = match (&args.points, axis, &alphas) {
        (Some(p), _, _) => parse_list(p)?,
        (None, Axis::Alpha, Some(a)) => a.clone(),
        _ => bail!("custom simulation needs --points (or --alpha for the alpha axis)"),
    };
    let alpha = match (axis, &alphas) {
        (Axis::Alpha, _) => 10.0,
        (_, Some(a)) => a[0],
        _ => 10.0,
    };
    Ok(FigureSpec {
        figure: Figure::Fig1Right,
        axis,
        base: shared.model(0.3, 5.0)?,
        alpha,
        metric,
        methods: vec![Method::L2, Method::L1, Method::Huber],
        points,
    })
}

pub fn simulate(args: &SimulateArgs, shared: &Shared) -> Result<()> {
    let custom = args.figure == "custom";
    let mut spec = if custom {
        custom_spec(args, shared)?
    } else {
        let mut s = args.figure.parse::<Figure>()?.spec();
        if let Some(p) = &args.points {
            s.points = parse_list(p)?;
        }
        s
    };
    spec.methods = shared.methods(&spec.methods)?;
    let d = shared.dim.unwrap_or(200);
    let n_seeds = shared.seeds.unwrap_or(100);
    let seed = shared.seed.unwrap_or(0);
    let target = shared.target()?;
    let cfg = McConfig {
        n_test: args.n_test,
        ..McConfig::default()
    };
    let h = header(
        "simulate",
        json!({
            "figure": if custom { Value::from("custom") } else { serde_json::to_value(spec.figure)? },
            "axis": spec.axis.name(),
            "model": spec.base,
            "alpha": spec.alpha,
            "metric": spec.metric,
            "methods": spec.methods.iter().map(ToString::to_string).collect::<Vec<_>>(),
            "points": spec.points,
            "dim": d,
            "seeds": n_seeds,
            "seed": seed,
            "n_test": args.n_test,
            "target": target,
            "lambda": shared.lambda,
        }),
    );
    let cols = [
        spec.axis.name(),
        "method",
        "theory",
        "mc_mean",
        "mc_se",
        "z",
        "lambda",
        "a",
        "failed_seeds",
    ];
    let mut table = Table::new(h, cols.iter().map(|s| s.to_string()).collect());
    let mut any_ok = false;
    let mut last_err = None;
    for (pi, &v) in spec.points.iter().enumerate() {
        let (model, alpha) = spec.axis.apply(&spec.base, spec.alpha, v)?;
        for (mi, &m) in spec.methods.iter().enumerate() {
            let outcome = evaluate_method(m, &model, alpha, target, shared.lambda)?;
            let theory = spec.metric.pick(&outcome.errors);
            let seed0 = seed.wrapping_add(((pi * 64 + mi) as u64) << 20);
            match run_monte_carlo(&model, alpha, d, &outcome.estimator(m), n_seeds, seed0, &cfg) {
                Ok(rep) => {
                    any_ok = true;
                    let s = match spec.metric {
                        Metric::ExcessGen => rep.excess_gen,
                        Metric::Estim => rep.estim,
                    };
                    table.push(vec![
                        v.into(),
                        m.label().as_str().into(),
                        theory.into(),
                        s.mean.into(),
                        s.std_error.into(),
                        s.z_score(theory).into(),
                        outcome.lambda.into(),
                        scale_cell(outcome.a),
                        (rep.failed as f64).into(),
                    ]);
                }
                Err(e) => {
                    table.push(vec![
                        v.into(),
                        m.label().as_str().into(),
                        theory.into(),
                        Cell::Missing,
                        Cell::Missing,
                        Cell::Missing,
                        outcome.lambda.into(),
                        scale_cell(outcome.a),
                        Cell::Text(e.code().into()),
                    ]);
                    last_err = Some(e);
                }
            }
        }
    }
    if !any_ok {
        return Err(last_err.map(anyhow::Error::from).unwrap_or_else(|| anyhow!("nothing to simulate")));
    }
    emit(&table.to_csv(), shared.out.as_deref())
}

#[derive(Args)]
pub struct BoRateArgs {}

pub fn bo_rate(_args: &BoRateArgs, shared: &Shared) -> Result<()> {
    let model = shared.model(0.3, 5.0)?;
    let alphas = shared
        .alphas()?
        .unwrap_or_else(|| vec![1e2, 3e2, 1e3, 3e3, 1e4]);
    let (fit, estim) = bo_rate_fit(&model, &alphas, &robust_asymp::figures::bayes_config())?;
    let h = header("bo-rate", json!({ "model": model, "alpha": alphas, "fit": fit }));
    let cols = ["alpha", "estim_bo", "alpha_times_estim", "prediction"];
    let mut table = Table::new(h, cols.iter().map(|s| s.to_string()).collect());
    for (&a, &e) in alphas.iter().zip(&estim) {
        table.push(vec![a.into(), e.into(), (a * e).into(), (1.0 / (fit.c_hat * a)).into()]);
    }
    emit(&table.to_csv(), shared.out.as_deref())
}
