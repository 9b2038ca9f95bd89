use std::process::{Command, Output};

use robust_asymp::figures::{evaluate_method, Axis, Method};
use robust_asymp::hyperopt::Target;
use robust_asymp::report::{SweepResult, Table};
use robust_asymp::OutlierModel;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_robust-asymp"));
    c.env("ROBUST_ASYMP_THREADS", "1");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn single_point_sweep_is_one_row() {
    let o = run(&["sweep", "eps", "--range", "0.2:0.2:1", "--methods", "l2,huber"]);
    let s = SweepResult::from_csv(&stdout(&o)).unwrap();
    assert_eq!(s.rows.len(), 1);
    assert_eq!(s.rows[0].value, 0.2);
}

#[test]
fn sweep_reproduces_from_its_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = run(&[
        "sweep",
        "alpha",
        "--range",
        "0.7:40:3",
        "--eps",
        "0.6",
        "--dout",
        "0.5",
        "--methods",
        "l2,l1,huber_fixed_a:1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let s = SweepResult::from_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let h = &s.header;
    let model: OutlierModel = serde_json::from_value(h["model"].clone()).unwrap();
    let axis: Axis = h["axis"].as_str().unwrap().parse().unwrap();
    let alpha = h["alpha"].as_f64().unwrap();
    let methods: Vec<Method> = h["methods"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m.as_str().unwrap().parse().unwrap())
        .collect();
    let target: Target = serde_json::from_value(h["target"].clone()).unwrap();
    for row in &s.rows {
        let (m, a) = axis.apply(&model, alpha, row.value).unwrap();
        let mut k = 0;
        for &meth in &methods {
            let r = evaluate_method(meth, &m, a, target, None).unwrap();
            let expect = [r.errors.gen_error, r.errors.excess_gen_error, r.errors.estim_error, r.lambda.unwrap()];
            for e in expect {
                assert_eq!(row.values[k].unwrap().to_bits(), e.to_bits());
                k += 1;
            }
            if matches!(meth, Method::HuberFixedA(_)) {
                k += 1;
            }
        }
    }
}

#[test]
fn errors_are_json_on_stderr() {
    for args in [
        vec!["sweep", "nonsense"],
        vec!["sweep", "alpha", "--eps", "1.5"],
        vec!["frobnicate"],
    ] {
        let o = run(&args);
        assert!(!o.status.success());
        let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
        assert!(err["error"].is_string() && err["message"].is_string(), "{err}");
    }
    let o = run(&["sweep", "alpha", "--eps", "1.5"]);
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "invalid_parameter");
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "eps=0.6\ndout=0.5\nmethods=l2\n").unwrap();
    let o = run(&["sweep", "alpha", "--range", "2:2:1", "--config", cfg.to_str().unwrap(), "--dout", "3"]);
    let s = SweepResult::from_csv(&stdout(&o)).unwrap();
    assert_eq!(s.header["model"]["eps"], 0.6);
    assert_eq!(s.header["model"]["delta_out"], 3.0);
    assert_eq!(s.columns, vec!["l2_gen", "l2_excess", "l2_estim", "l2_lambda"]);
}

#[test]
fn phase_diagram_collapse_and_separation() {
    let o = run(&["phase-diagram", "--alpha", "10", "--eps-range", "0.3:0.3:1", "--dout-range", "0.3:100:2"]);
    let text = stdout(&o);
    let (main, boundary) = text.split_once("\n\n").unwrap();
    let t = Table::from_csv(main).unwrap();
    let diff = t.column("difference").unwrap();
    assert_eq!(diff[0].num(), Some(0.0));
    assert!(diff[1].num().unwrap() > 0.0);
    assert_eq!(t.column("huber_a").unwrap()[0].num(), Some(f64::INFINITY));
    let b = Table::from_csv(boundary).unwrap();
    assert_eq!(b.rows.len(), 1);
}

#[test]
fn phase_diagram_difference_is_nonnegative() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("phase.csv");
    let o = run(&[
        "phase-diagram",
        "--alpha",
        "3,30",
        "--eps-range",
        "0.05:0.45:3",
        "--dout-range",
        "0.2:50:4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let t = Table::from_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(t.rows.len(), 24);
    for c in t.column("difference").unwrap() {
        assert!(c.num().unwrap() >= -1e-9);
    }
    assert!(dir.path().join("phase.boundary.csv").exists());
}

#[test]
fn minimal_simulation_completes() {
    let o = run(&[
        "simulate",
        "--figure",
        "fig1-right",
        "--points",
        "2",
        "--dim",
        "40",
        "--seeds",
        "2",
        "--n-test",
        "2000",
        "--methods",
        "l2,huber",
    ]);
    let t = Table::from_csv(&stdout(&o)).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert!(t.column("mc_se").unwrap().iter().all(|c| c.num().is_some()));
}

#[test]
fn bo_rate_reports_fit() {
    let o = run(&["bo-rate", "--alpha", "100,1000"]);
    let t = Table::from_csv(&stdout(&o)).unwrap();
    let slope = t.header["fit"]["slope"].as_f64().unwrap();
    assert!((slope + 1.0).abs() < 0.05);
}
