use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod error;
mod output;

use config::{parse_cost_prior, parse_prior, ExperimentConfig, Format};
use error::CliError;

#[derive(Parser)]
#[command(name = "elicit", version, about = "Truthful elicitation of a costly valuation from a single agent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON experiment config; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output format (default json)
    #[arg(long, value_enum)]
    format: Option<Format>,

    /// Seed for every random draw (default 0, echoed in the output)
    #[arg(long)]
    seed: Option<u64>,

    /// Common-value prior, e.g. `uniform:0:80000` or `two-point:0.3:10`
    #[arg(long)]
    prior: Option<String>,

    /// Agent's cost of computing the value
    #[arg(long)]
    c: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Truthfulness threshold E[(v - E v)+] and the verdict for a cost
    Threshold(Common),
    /// Build a reserve cdf and predict its incentive and loss
    Design(DesignArgs),
    /// Simulate a mechanism and compare with the analytics
    Simulate(SimulateArgs),
    /// Search step functions, lattice cdfs, or minimum-loss designs
    Optimize(OptimizeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    /// Sale probability one at the mean
    Gstar,
    /// Incentive exactly c (plus margin)
    Gc,
    /// Atom of mass delta at the bottom of the support
    G0,
    /// Offer for an agent of unknown cost
    Gzu,
}

#[derive(Args)]
struct DesignArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    target: Target,
    /// Added to c so the agent strictly prefers computing
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Value of the information to the principal
    #[arg(long)]
    u: Option<f64>,
    /// Cost distribution, e.g. `uniform:0:10`
    #[arg(long)]
    cost_prior: Option<String>,
    /// Put the never-sell mass exactly at the top of the support
    #[arg(long)]
    at_support_max: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MechanismChoice {
    SecretReserve,
    BidDerived,
    PostedPrice,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Mechanism to build from flags instead of the config's record
    #[arg(long, value_enum)]
    mechanism: Option<MechanismChoice>,
    /// Reserve cdf JSON, or `design` output containing one
    #[arg(long)]
    cdf: Option<PathBuf>,
    /// Secret-reserve uniform mixing weight
    #[arg(long)]
    epsilon: Option<f64>,
    /// Posted price
    #[arg(long)]
    t: Option<f64>,
    /// Posted-price sale probability
    #[arg(long)]
    p: Option<f64>,
    /// Posted-price fallback mass
    #[arg(long)]
    delta: Option<f64>,
    /// Agent's belief about the secret-reserve epsilon
    #[arg(long)]
    agent_epsilon: Option<f64>,
    #[arg(long)]
    delivery_cost: Option<f64>,
    #[arg(long)]
    n_trials: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Write one JSON line per run to this file
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Steps,
    Lattice,
    Minloss,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long)]
    grid_step: Option<f64>,
    #[arg(long)]
    n_grid: Option<usize>,
    #[arg(long)]
    n_levels: Option<usize>,
    /// Enumerate every lattice cdf instead of the dynamic program
    #[arg(long)]
    exhaustive: bool,
    /// Largest search space accepted
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    n_mc: Option<usize>,
}

fn apply_common(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(common.config.as_deref())?;
    if let Some(text) = &common.prior {
        cfg.prior = Some(parse_prior(text)?);
        cfg.model = None;
    }
    if let Some(c) = common.c {
        let mut agent = cfg.agent.unwrap_or(elicit_core::AgentConfig::new(c));
        agent.cost = c;
        cfg.agent = Some(agent);
    }
    if let Some(seed) = common.seed {
        cfg.run.seed = Some(seed);
    }
    if let Some(format) = common.format {
        cfg.output = Some(format);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(serde_json::Value, Format), CliError> {
    match cli.command {
        Command::Threshold(common) => {
            let cfg = apply_common(&common)?;
            Ok((commands::threshold(&cfg, common.c.is_some() || cfg.agent.is_some())?, cfg.format()))
        }
        Command::Design(args) => {
            let mut cfg = apply_common(&args.common)?;
            if let Some(text) = &args.cost_prior {
                cfg.cost_prior = Some(parse_cost_prior(text)?);
            }
            let req = commands::DesignRequest {
                target: args.target,
                margin: args.margin,
                delta: args.delta,
                u: args.u,
                at_support_max: args.at_support_max,
            };
            Ok((commands::design(&cfg, &req)?, cfg.format()))
        }
        Command::Simulate(args) => {
            let mut cfg = apply_common(&args.common)?;
            if let Some(n) = args.n_trials {
                cfg.run.n_trials = Some(n);
            }
            if let Some(w) = args.workers {
                cfg.run.workers = Some(w);
            }
            if let Some(agent) = cfg.agent.as_mut() {
                if let Some(e) = args.agent_epsilon {
                    agent.epsilon = e;
                }
                if let Some(d) = args.delivery_cost {
                    agent.delivery_cost = d;
                }
            }
            let req = commands::MechanismFlags {
                mechanism: args.mechanism,
                cdf: args.cdf,
                epsilon: args.epsilon,
                t: args.t,
                p: args.p,
                delta: args.delta,
            };
            commands::apply_mechanism_flags(&mut cfg, &req)?;
            let format = cfg.format();
            let (value, passed) = commands::simulate(&cfg, args.dump.as_deref())?;
            if !passed {
                emit(&value, format)?;
                let failed: Vec<String> = value["comparison"]["fields"]
                    .as_array()
                    .into_iter()
                    .flatten()
                    .filter(|f| f["passed"] == false)
                    .filter_map(|f| f["field"].as_str().map(String::from))
                    .collect();
                return Err(CliError::Comparison(failed.join(", ")));
            }
            Ok((value, format))
        }
        Command::Optimize(args) => {
            let mut cfg = apply_common(&args.common)?;
            let run = &mut cfg.run;
            run.grid_step = args.grid_step.or(run.grid_step);
            run.n_grid = args.n_grid.or(run.n_grid);
            run.n_levels = args.n_levels.or(run.n_levels);
            run.budget = args.budget.or(run.budget);
            run.n_mc = args.n_mc.or(run.n_mc);
            Ok((commands::optimize(&cfg, args.method, args.exhaustive)?, cfg.format()))
        }
    }
}

fn emit(value: &serde_json::Value, format: Format) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    output::write(&mut lock, value, format)?;
    lock.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli).and_then(|(value, format)| emit(&value, format)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
