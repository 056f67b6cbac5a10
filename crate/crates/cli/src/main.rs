mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::FileConfig;

#[derive(Parser, Debug)]
#[command(name = "obab", version, about = "Oblivious single-source buy-at-bulk network design")]
struct Cli {
    /// TOML file with default settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
pub struct SolverFlags {
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub beta_init: Option<f64>,
    #[arg(long)]
    pub beta_steps: Option<u32>,
    #[arg(long)]
    pub bit_budget: Option<u32>,
    #[arg(long)]
    pub c_target: Option<f64>,
    #[arg(long)]
    pub rob_trials: Option<u32>,
    #[arg(long)]
    pub node_cap: Option<usize>,
}

impl SolverFlags {
    fn file_config(&self, out: Option<PathBuf>, report: Option<PathBuf>) -> FileConfig {
        FileConfig {
            gamma: self.gamma,
            seed: self.seed,
            beta_init: self.beta_init,
            beta_steps: self.beta_steps,
            bit_budget: self.bit_budget,
            c_target: self.c_target,
            rob_trials: self.rob_trials,
            node_cap: self.node_cap,
            out,
            report,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Tsv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a random instance.
    Gen {
        #[arg(long)]
        model: String,
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        demands: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute a tree distribution for an instance.
    Solve {
        instance: PathBuf,
        #[command(flatten)]
        flags: SolverFlags,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Path for the solver report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate a distribution against rent-or-buy bounds and exact optima.
    Eval {
        instance: PathBuf,
        distribution: PathBuf,
        #[command(flatten)]
        flags: SolverFlags,
        /// Require exact optima; fails when the instance exceeds the node cap.
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Make an alpha vector gamma-regular.
    Regularize {
        alpha: PathBuf,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build one tree with the staged construction.
    Gmm {
        instance: PathBuf,
        alpha: PathBuf,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Regularize the input first instead of rejecting irregular vectors.
        #[arg(long)]
        regularize: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact per-level optima and the optimal oblivious ratio by enumeration.
    Brute {
        instance: PathBuf,
        #[arg(long)]
        node_cap: Option<usize>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve generated instances and tabulate the results as TSV.
    Bench {
        #[arg(long)]
        family: String,
        /// Comma-separated node counts.
        #[arg(long)]
        sizes: String,
        /// Comma-separated seeds; may be empty.
        #[arg(long, default_value = "")]
        seeds: String,
        /// Demand nodes per instance; defaults to all non-root nodes.
        #[arg(long)]
        demands: Option<usize>,
        /// Append a wall-time column (makes the table nondeterministic).
        #[arg(long)]
        timing: bool,
        #[command(flatten)]
        flags: SolverFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the pipe schedule of an alpha vector with its thresholds as TSV.
    Pipes {
        alpha: PathBuf,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// 2 for bad input, 3 for numeric or solver failures.
fn exit_code(e: &oblivious_bab::Error) -> u8 {
    if e.is_input_error() {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            commands::report_error("usage", &e.to_string().trim().replace('\n', " "), 2);
            return ExitCode::from(2);
        }
    };
    match commands::dispatch(cli.config.as_deref(), cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            commands::report_error(e.kind(), &e.to_string(), code);
            ExitCode::from(code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use oblivious_bab::Error;

    #[test]
    fn exit_codes_split_input_from_numeric_failures() {
        assert_eq!(exit_code(&Error::Validation("x".into())), 2);
        assert_eq!(exit_code(&Error::CapExceeded { nodes: 9, cap: 8 }), 2);
        assert_eq!(exit_code(&Error::Numeric("x".into())), 3);
        assert_eq!(exit_code(&Error::Lp("x".into())), 3);
        assert_eq!(exit_code(&Error::OracleCapExceeded { invocations: 64 }), 3);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
