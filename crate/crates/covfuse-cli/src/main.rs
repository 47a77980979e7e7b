use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use covfuse::scenario::Method;
use covfuse_cli::{
    cmd_fusion_demo, cmd_montecarlo, cmd_simulate, CommandReport, FusionDemoOpts, MontecarloOpts,
    SimulateOpts,
};

#[derive(Parser)]
#[command(
    name = "covfuse",
    about = "Conservative covariance fusion demos and distributed-estimation experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep CI/SCI/ESCI bounds over ω on a two-estimate instance with a
    /// shared noise component and emit the bound matrices as CSV.
    FusionDemo {
        /// ω rows per method in the sweep, including the trace-optimal row.
        #[arg(long, default_value_t = 7, value_parser = clap::value_parser!(u16).range(3..=1001))]
        omega_grid: u16,
        /// JSON file overriding the built-in demo matrices.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (default: $COVFUSE_OUT_DIR).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overwrite an output directory produced from a different config.
        #[arg(long)]
        force: bool,
    },
    /// Run the scenario once per replicate and emit every state, bound
    /// diagonal and truth value as CSV.
    Simulate {
        /// Scenario JSON config (defaults to the built-in 9-satellite setup).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Monte-Carlo experiment: bound/MSE/stderr curves per agent,
    /// iteration and component, with an optional method comparison.
    Montecarlo {
        /// Scenario JSON config (defaults to the built-in 9-satellite setup).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the config's replicate count.
        #[arg(long)]
        runs: Option<usize>,
        /// Also emit reduction.csv against this reference method
        /// (CI, SCI, ESCI or CENTRALIZED).
        #[arg(long, value_parser = parse_method)]
        compare: Option<Method>,
        /// Worker threads (0 = rayon default).
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s.to_ascii_uppercase().as_str() {
        "CI" => Ok(Method::Ci),
        "SCI" => Ok(Method::Sci),
        "ESCI" => Ok(Method::Esci),
        "CENTRALIZED" => Ok(Method::Centralized),
        other => Err(format!(
            "unknown method {other}; expected CI, SCI, ESCI or CENTRALIZED"
        )),
    }
}

fn finish(report: CommandReport) -> ExitCode {
    for artifact in &report.artifacts {
        println!("wrote {}", artifact.display());
    }
    if report.ok() {
        ExitCode::SUCCESS
    } else {
        eprintln!(
            "{} assertion(s) failed; see {}",
            report.failures.len(),
            report.out_dir.join("failures.json").display()
        );
        for f in &report.failures {
            eprintln!("  {f}");
        }
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::FusionDemo {
            omega_grid,
            config,
            out,
            force,
        } => cmd_fusion_demo(&FusionDemoOpts {
            omega_grid: omega_grid as usize,
            config,
            out,
            force,
        }),
        Command::Simulate { config, out, force } => {
            cmd_simulate(&SimulateOpts { config, out, force })
        }
        Command::Montecarlo {
            config,
            runs,
            compare,
            threads,
            out,
            force,
        } => cmd_montecarlo(&MontecarloOpts {
            config,
            runs,
            compare,
            threads,
            out,
            force,
        }),
    };
    match result {
        Ok(report) => finish(report),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
