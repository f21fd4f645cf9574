mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use config::{RunConfig, SamplingConfig, SimeOverrides, TdsOverrides};
use error::CliResult;
#[cfg(test)]
use error::CliError;

#[derive(Parser)]
#[command(name = "cscopf", version, about = "Cut-set and stability constrained redispatch for wildfire contingencies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check a case, its dynamics and a contingency.
    Validate(Inputs),
    /// Write PTDF and LODF matrices and base-case flows.
    Ptdf(Inputs),
    /// Post-contingency saturated cut-sets.
    Ft(FtArgs),
    /// Simulate the contingency and report TSI and the SIME correction.
    Tds(TdsArgs),
    /// Sample loads, simulate, and fit the correction predictor.
    TrainTscp(TrainArgs),
    /// Score a trained predictor on a cached dataset.
    EvalTscp(EvalArgs),
    /// Preventive redispatch in one or more modes.
    Cscopf(RunArgs),
}

#[derive(Args, Default)]
struct Inputs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Case file: MATPOWER `.m` or JSON.
    #[arg(long)]
    case: Option<PathBuf>,
    /// Generator dynamics sidecar (JSON).
    #[arg(long)]
    dynamics: Option<PathBuf>,
    /// Contingency: fault sequence and outage list (JSON).
    #[arg(long)]
    contingency: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Default)]
struct SimeArgs {
    #[arg(long)]
    tau: Option<f64>,
    /// Re-estimate tau from a shift of this many MW.
    #[arg(long, value_name = "MW")]
    estimate_tau: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
}

#[derive(Args)]
struct FtArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct TdsArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    sime: SimeArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    sime: SimeArgs,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Per-load relative standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    /// Train on unstable samples only.
    #[arg(long)]
    exclude_stable: bool,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    noise_level: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tscp_model: Option<PathBuf>,
    /// Dataset CSV written by train-tscp.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    noise_level: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    exclude_stable: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    sime: SimeArgs,
    #[arg(long)]
    tscp_model: Option<PathBuf>,
    /// cscopf, rtsced or tscopf; repeat or separate with commas.
    #[arg(long, value_delimiter = ',')]
    mode: Vec<String>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    allow_load_increase: bool,
}

impl Inputs {
    fn flags(&self) -> RunConfig {
        RunConfig {
            case: self.case.clone(),
            dynamics: self.dynamics.clone(),
            contingency: self.contingency.clone(),
            output_dir: self.out_dir.clone(),
            ..RunConfig::default()
        }
    }
}

impl SimeArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        cfg.sime = SimeOverrides {
            epsilon: self.epsilon,
            tau: self.tau,
            estimate_tau_mw: self.estimate_tau,
            ..SimeOverrides::default()
        };
        cfg.tds = TdsOverrides { dt: self.dt, t_end: self.t_end, ..TdsOverrides::default() };
    }
}

fn flag(b: bool) -> Option<bool> {
    b.then_some(true)
}

/// File config merged under the flags, then range-checked.
fn resolve(config: Option<&PathBuf>, flags: RunConfig) -> CliResult<RunConfig> {
    let (base, origin) = match config {
        Some(p) => (RunConfig::load(p)?, p.clone()),
        None => (RunConfig::default(), PathBuf::from("<flags>")),
    };
    let cfg = base.merge(flags);
    cfg.check(&origin)?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<u8> {
    match cli.command {
        Command::Validate(i) => commands::validate(&resolve(i.config.as_ref(), i.flags())?),
        Command::Ptdf(i) => commands::ptdf(&resolve(i.config.as_ref(), i.flags())?),
        Command::Ft(a) => {
            let mut f = a.inputs.flags();
            f.utilization_threshold = a.threshold;
            commands::ft(&resolve(a.inputs.config.as_ref(), f)?)
        }
        Command::Tds(a) => {
            let mut f = a.inputs.flags();
            a.sime.apply(&mut f);
            commands::tds(&resolve(a.inputs.config.as_ref(), f)?)
        }
        Command::TrainTscp(a) => {
            let mut f = a.inputs.flags();
            a.sime.apply(&mut f);
            f.sampling = SamplingConfig { n: a.n, seed: a.seed, sigma: a.sigma, ..SamplingConfig::default() };
            f.include_stable = a.exclude_stable.then_some(false);
            f.test_fraction = a.test_fraction;
            f.noise_level = a.noise_level;
            commands::train_tscp(&resolve(a.inputs.config.as_ref(), f)?)
        }
        Command::EvalTscp(a) => {
            let f = RunConfig {
                tscp_model: a.tscp_model.clone(),
                dataset: a.dataset.clone(),
                noise_level: a.noise_level,
                eval_seed: a.seed,
                include_stable: a.exclude_stable.then_some(false),
                ..RunConfig::default()
            };
            commands::eval_tscp(&resolve(a.config.as_ref(), f)?)
        }
        Command::Cscopf(a) => {
            let mut f = a.inputs.flags();
            a.sime.apply(&mut f);
            f.tscp_model = a.tscp_model.clone();
            f.modes = a.mode.clone();
            f.max_iter = a.max_iter;
            f.tol = a.tol;
            f.utilization_threshold = a.threshold;
            f.allow_load_increase = flag(a.allow_load_increase);
            commands::cscopf(&resolve(a.inputs.config.as_ref(), f)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{}", output::pretty(&e.to_json()).trim_end());
            ExitCode::from(e.exit_code())
        }
    }
}
