use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use screenlab::analysis::DEFAULT_FOSD_TOL;
use screenlab::cli::commands;
use screenlab::cli::{CliError, CliResult};
use screenlab::montecarlo::MCConfig;
use screenlab::StrategyKind;

#[derive(Parser)]
#[command(name = "screenlab", version, about = "Multi-stage noisy screening experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a strategy and write the post-screening distribution.
    Posterior { config: PathBuf },
    /// First-order dominance between the posteriors of two configs.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Output directory (defaults to the first config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_FOSD_TOL)]
        tol: f64,
    },
    /// Distance to perfect screening as the number of stages grows.
    Converge {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        ks: Vec<usize>,
        /// Strategy kinds; defaults to the config's strategy kind.
        #[arg(long, value_delimiter = ',')]
        kinds: Vec<StrategyKind>,
    },
    /// Reproduce the uniform one-stage versus two-stage example.
    ReproduceIntro {
        #[arg(long, default_value_t = 1_000_000)]
        mc_samples: u64,
        #[arg(long, default_value_t = 20240601)]
        seed: u64,
        #[arg(long, default_value = "intro_out")]
        out: PathBuf,
    },
    /// Evaluate an illustrative cost function.
    Cost {
        #[command(subcommand)]
        which: CostCommand,
    },
}

#[derive(Subcommand)]
enum CostCommand {
    /// Accuracy-weighted cost of a capacity profile.
    Accuracy { spec: PathBuf },
    /// Capacity-only cost, -sum ln p_i.
    Capacity { spec: PathBuf },
}

fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Posterior { config } => commands::cmd_posterior(&config),
        Command::Compare { a, b, out, tol } => commands::cmd_compare(&a, &b, out.as_deref(), tol),
        Command::Converge { config, ks, kinds } => commands::cmd_converge(&config, &ks, &kinds),
        Command::ReproduceIntro { mc_samples, seed, out } => {
            let mc = MCConfig::new(mc_samples, seed).map_err(|e| CliError::Config(e.to_string()))?;
            commands::cmd_reproduce_intro(&mc, &out)
        }
        Command::Cost { which } => match which {
            CostCommand::Accuracy { spec } => commands::cmd_cost_accuracy(&spec),
            CostCommand::Capacity { spec } => commands::cmd_cost_capacity(&spec),
        },
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("screenlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
