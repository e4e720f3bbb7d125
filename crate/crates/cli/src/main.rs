use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hetnet_core::campaign::monte_carlo;
use hetnet_core::error::Error;
use hetnet_core::iulp::{run_algorithm, Algorithm, IulpOptions};
use hetnet_core::model::Scenario;
use hetnet_core::report::{emit, to_json, write_campaign, write_run};
use hetnet_core::scenario::{generate_scenario, load_scenario, ScenarioConfig};
use hetnet_core::verify::run_suites;

const EXIT_CONFIG: u8 = 2;
const EXIT_NONCONVERGENCE: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

#[derive(Parser)]
#[command(name = "hetnet", version, about = "Joint user association, load and power control for load-coupled HetNets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm on one scenario.
    Run {
        #[command(flatten)]
        source: Source,
        /// Algorithm name (msinr-mp, dgp-mp, iulp, msinr-mp+icupa, iulp+icupa).
        #[arg(long, default_value = "iulp")]
        algo: String,
        /// Scenario seed; overrides the seed in --config.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for run.json and CSV files; prints JSON to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Monte-Carlo campaign over seeds `seed .. seed + n`.
    Campaign {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated algorithm list.
        #[arg(long, default_value = "msinr-mp,dgp-mp,iulp,msinr-mp+icupa,iulp+icupa")]
        algo: String,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Run every oracle suite.
    Verify {
        /// Reduced instance counts.
        #[arg(long)]
        quick: bool,
    },
    /// Regenerate CSV plot data from the JSON report stored in --out.
    Emit {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Source {
    /// Generative scenario config (JSON).
    #[arg(long, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Explicit scenario file (JSON).
    #[arg(long)]
    scenario: Option<PathBuf>,
}

#[derive(Args)]
struct SolverFlags {
    /// Relative utility change that stops the outer loop.
    #[arg(long)]
    xi: Option<f64>,
    /// Maximum outer iterations.
    #[arg(long)]
    tmax: Option<usize>,
    /// KKT tolerance of the load/power solver.
    #[arg(long)]
    kkt_tol: Option<f64>,
}

impl SolverFlags {
    fn options(&self) -> Result<IulpOptions, Error> {
        let mut o = IulpOptions::default();
        if let Some(xi) = self.xi {
            o.xi = xi;
        }
        if let Some(t) = self.tmax {
            o.t_max = t;
        }
        if let Some(k) = self.kkt_tol {
            o.ldpc.kkt_tol = k;
        }
        o.validate()?;
        Ok(o)
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::Parse { .. }
            | Error::InvalidScenario(_)
            | Error::UnknownAlgorithm(_)
            | Error::Io(_)
            | Error::Json(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig, Error> {
    match path {
        Some(p) => ScenarioConfig::load(p),
        None => Ok(ScenarioConfig::default()),
    }
}

fn scenario_from(source: &Source, seed: Option<u64>) -> Result<Scenario, Error> {
    if let Some(p) = &source.scenario {
        if seed.is_some() {
            return Err(Error::Config("--seed applies to --config, not --scenario".into()));
        }
        return Ok(load_scenario(p)?.0);
    }
    let mut cfg = load_config(source.config.as_deref())?;
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    Ok(generate_scenario(&cfg)?.0)
}

fn status(nonconvergence: bool, violation: bool) -> u8 {
    if violation {
        EXIT_INVARIANT
    } else if nonconvergence {
        EXIT_NONCONVERGENCE
    } else {
        0
    }
}

fn execute(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Run { source, algo, seed, out, solver } => {
            let algo: Algorithm = algo.parse()?;
            let options = solver.options()?;
            let scenario = scenario_from(&source, seed)?;
            let report = run_algorithm(&scenario, algo, &options)?;
            match out {
                Some(dir) => {
                    write_run(&dir, &report)?;
                    eprintln!("{}: utility {:.4}, {} outer iterations", algo, report.utility, report.counters.outer_iterations);
                }
                None => print!("{}", to_json(&report)?),
            }
            for v in &report.invariant_violations {
                eprintln!("invariant violation: {v}");
            }
            if report.nonconvergence {
                eprintln!("warning: a sub-solver did not converge");
            }
            Ok(status(report.nonconvergence, !report.invariant_violations.is_empty()))
        }
        Command::Campaign { config, algo, n, seed, out, solver } => {
            let algos = Algorithm::parse_list(&algo)?;
            let options = solver.options()?;
            let cfg = load_config(config.as_deref())?;
            let summary = monte_carlo(&cfg, &algos, n, seed, &options)?;
            write_campaign(&out, &summary)?;
            for a in &summary.algorithms {
                println!(
                    "{:<16} mean {:>9.4}  std {:>8.4}  nonconverged {}",
                    a.algorithm.name(),
                    a.mean_utility,
                    a.std_utility,
                    a.nonconverged
                );
                for v in &a.invariant_violations {
                    eprintln!("invariant violation ({}): {v}", a.algorithm);
                }
            }
            Ok(status(summary.any_nonconvergence(), summary.any_violation()))
        }
        Command::Verify { quick } => {
            let checks = run_suites(quick)?;
            for c in &checks {
                println!("{} {} ({:.1}s): {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.seconds, c.detail);
            }
            Ok(if checks.iter().all(|c| c.passed) { 0 } else { EXIT_INVARIANT })
        }
        Command::Emit { out } => {
            for name in emit(&out)? {
                println!("{}", out.join(name).display());
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
