use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};
use robust_asymp::figures::Method;
use robust_asymp::hyperopt::Target;
use robust_asymp::OutlierModel;

mod commands;
mod config;

/// Asymptotics of robust linear regression with outliers: theory curves,
/// phase diagrams and finite-size simulations.
#[derive(Parser)]
#[command(name = "robust-asymp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    shared: Shared,
}

#[derive(Args, Debug, Default, Clone)]
pub struct Shared {
    /// Outlier fraction.
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    /// Outlier norm rescaling.
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    /// Inlier noise variance.
    #[arg(long, global = true)]
    pub din: Option<f64>,
    /// Outlier noise variance.
    #[arg(long, global = true)]
    pub dout: Option<f64>,
    /// Sample complexity; a comma list where several values make sense.
    #[arg(long, global = true)]
    pub alpha: Option<String>,
    /// Fix the penalty instead of tuning it.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Scale used by `huber_fixed_a` when none is given inline.
    #[arg(long = "huber-a", global = true)]
    pub huber_a: Option<f64>,
    /// Comma list of l2, l1, huber, huber_fixed_a[:a], bayes.
    #[arg(long, global = true)]
    pub methods: Option<String>,
    /// Output CSV path (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte-Carlo repetitions.
    #[arg(long, global = true)]
    pub seeds: Option<usize>,
    /// Dimension of simulated problems.
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    /// Error tuned for: gen or estim.
    #[arg(long, global = true)]
    pub target: Option<String>,
    /// File of key=value defaults for the flags above.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

impl Shared {
    pub fn model(&self, eps: f64, dout: f64) -> Result<OutlierModel> {
        Ok(OutlierModel::new(
            self.eps.unwrap_or(eps),
            self.beta.unwrap_or(0.0),
            self.din.unwrap_or(1.0),
            self.dout.unwrap_or(dout),
        )?)
    }

    pub fn alphas(&self) -> Result<Option<Vec<f64>>> {
        self.alpha.as_deref().map(commands::parse_list).transpose()
    }

    pub fn target(&self) -> Result<Target> {
        match self.target.as_deref().unwrap_or("gen") {
            "gen" => Ok(Target::Gen),
            "estim" => Ok(Target::Estim),
            t => Err(anyhow!("unknown target `{t}`")),
        }
    }

    /// Parsed methods; a bare `huber_fixed_a` takes `--huber-a`.
    pub fn methods(&self, default: &[Method]) -> Result<Vec<Method>> {
        let Some(s) = self.methods.as_deref() else {
            return Ok(default.to_vec());
        };
        let a = self.huber_a.unwrap_or(1.0);
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| {
                if p == "huber_fixed_a" {
                    Ok(Method::HuberFixedA(a))
                } else {
                    Ok(p.parse()?)
                }
            })
            .collect()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Tuned theory errors along one parameter axis.
    Sweep(commands::SweepArgs),
    /// ℓ2 minus Huber optimal generalisation error over (eps, delta_out).
    PhaseDiagram(commands::PhaseArgs),
    /// Monte-Carlo simulation against theory at tuned hyperparameters.
    Simulate(commands::SimulateArgs),
    /// Bayes-optimal 1/alpha rate of the estimation error.
    BoRate(commands::BoRateArgs),
}

fn run(cli: Cli) -> Result<()> {
    let mut shared = cli.shared;
    if let Some(path) = shared.config.clone() {
        config::merge(&mut shared, config::read(&path)?)?;
    }
    match cli.command {
        Command::Sweep(a) => commands::sweep(&a, &shared),
        Command::PhaseDiagram(a) => commands::phase_diagram(&a, &shared),
        Command::Simulate(a) => commands::simulate(&a, &shared),
        Command::BoRate(a) => commands::bo_rate(&a, &shared),
    }
}

fn fail(code: &str, message: String) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": code, "message": message }));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string()),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e
                .downcast_ref::<robust_asymp::Error>()
                .map_or("error", robust_asymp::Error::code);
            fail(code, format!("{e:#}"))
        }
    }
}
