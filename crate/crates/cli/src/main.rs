//! `lambertpo`: Lambert W, advantages, targets, training runs and checks
//! from the command line.
//!
//! Exit status: 0 success, 1 invalid input, 2 runtime failure, 3 a
//! verification check failed.

/// `println!` that exits quietly when stdout is closed early, as when
/// piped into `head`.
macro_rules! outln {
    ($($arg:tt)*) => {
        $crate::emit(format_args!($($arg)*))
    };
}

mod commands;
mod config;
mod error;
mod instance;
mod output;

use std::fmt;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

const METRICS_HELP: &str = "Metrics CSV columns, in order: step,expected_reward,entropy,kl,max_ratio,regime. \
Numbers use 17 significant digits; regime is the most severe population-target regime across \
contexts at the current snapshot (pessimistic, boundary, unstable, no_solution, or na when \
exact enumeration is out of budget).";

const CONFIG_HELP: &str = "Config files hold one `key = value` per line; `#` starts a comment. \
Required: objective, advantage, beta. Optional (default): beta2 (only with oapl_decoupled), \
lag (16), group_size (4), steps (400), learning_rate (1e-2), optimizer (adam), seed (0), \
groups_per_step (8), clip_epsilon (0.2), sigma_floor (1e-6). Unknown keys are errors.";

#[derive(Debug, Parser)]
#[command(name = "lambertpo", version, about = "Lambert-tempered targets for ratio-free off-policy objectives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the principal branch W0(z), or W0(exp(u)) for large arguments.
    #[command(allow_negative_numbers = true)]
    W {
        #[arg(long, required_unless_present = "exp_arg", conflicts_with = "exp_arg")]
        z: Option<f64>,
        /// Evaluate W0(exp(u)) without forming exp(u).
        #[arg(long)]
        exp_arg: Option<f64>,
    },
    /// Group advantages for a list of rewards.
    #[command(after_help = "Output: CSV with columns, in order: index,reward,advantage; then \
`mean` and, for the log-sum-exp estimators, `mean_exp` = mean of exp(advantage / temperature).")]
    Advantage(AdvantageArgs),
    /// Solve for the Lambert target of an advantage vector.
    Target(TargetArgs),
    /// Instance files.
    Instance {
        #[command(subcommand)]
        action: InstanceAction,
    },
    /// One lagged training run.
    #[command(after_help = format!("{CONFIG_HELP}\n\n{METRICS_HELP}"))]
    Train(TrainArgs),
    /// Run the Oapl and shifted-mean advantages across one axis and several seeds.
    #[command(after_help = format!("{CONFIG_HELP}\n\n{METRICS_HELP}\n\nThe summary file \
holds one JSON record per run with terminal reward and entropy."))]
    Sweep(SweepArgs),
    /// Run the numerical verification suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct AdvantageArgs {
    /// grpo_norm, oapl, oapl_decoupled, shifted_mean or centered.
    #[arg(long)]
    method: String,
    /// Comma-separated rewards in [0, 1].
    #[arg(long, allow_hyphen_values = true)]
    rewards: String,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long, default_value_t = lambertpo_core::advantage::DEFAULT_SIGMA_FLOOR)]
    sigma_floor: f64,
}

#[derive(Debug, Args)]
#[command(after_help = "A target file holds `behavior`, `advantages` and optionally `beta`, each \
followed by whitespace-separated numbers on the same line. A bandit instance file may be given \
instead; the advantages are then the exact population advantages of --method at --context.\n\n\
Output: `regime`, `tau` and `z_exp` lines, then CSV with columns, in order: \
outcome,advantage,rho,target,sensitivity,near_singular. No CSV follows when the regime is no_solution.")]
struct TargetArgs {
    /// Comma-separated advantages, one per outcome.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "instance")]
    advantages: Option<String>,
    /// Target file or bandit instance file.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    context: usize,
    /// Advantage estimator used with a bandit instance.
    #[arg(long, default_value = "shifted_mean")]
    method: String,
    #[arg(long, default_value_t = 4)]
    group_size: usize,
    /// Comma-separated behavior probabilities; uniform when omitted.
    #[arg(long)]
    behavior: Option<String>,
    /// Overrides the file's beta.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum InstanceAction {
    /// Draw a reward table with uniform [0, 1) rewards.
    Gen {
        #[arg(long, default_value_t = 4)]
        contexts: usize,
        #[arg(long, default_value_t = 32)]
        outcomes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Instance file; the 4-context, 32-outcome seed-0 instance when omitted.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long, default_value = "lambertpo-out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// beta or lag.
    #[arg(long)]
    axis: String,
    /// Comma-separated axis values.
    #[arg(long)]
    values: String,
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long, default_value = "lambertpo-sweep")]
    out: PathBuf,
    /// Worker threads; all available cores when omitted.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Run a single check by name.
    #[arg(long)]
    check: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Grade every check against this tolerance instead of its default.
    #[arg(long)]
    tolerance: Option<f64>,
}

fn emit(args: fmt::Arguments<'_>) {
    if let Err(e) = writeln!(io::stdout().lock(), "{args}") {
        if e.kind() == io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: cannot write to stdout: {e}");
        std::process::exit(2);
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::W { z, exp_arg } => commands::w(z, exp_arg),
        Command::Advantage(a) => commands::advantage(&a.method, &a.rewards, a.beta, a.beta2, a.sigma_floor),
        Command::Target(a) => commands::target(commands::TargetRequest {
            advantages: a.advantages.as_deref(),
            instance: a.instance.as_deref(),
            context: a.context,
            method: &a.method,
            group_size: a.group_size,
            behavior: a.behavior.as_deref(),
            beta: a.beta,
            beta2: a.beta2,
        }),
        Command::Instance { action: InstanceAction::Gen { contexts, outcomes, seed, out } } => {
            commands::instance_gen(contexts, outcomes, seed, &out)
        }
        Command::Train(a) => commands::train(&a.config, a.instance.as_deref(), &a.out),
        Command::Sweep(a) => commands::sweep(commands::SweepRequest {
            config: &a.config,
            axis: &a.axis,
            values: &a.values,
            seeds: a.seeds,
            instance: a.instance.as_deref(),
            out: &a.out,
            jobs: a.jobs,
        }),
        Command::Verify(a) => commands::verify(a.check.as_deref(), a.seed, a.tolerance),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            e.exit_code()
        }
    }
}
