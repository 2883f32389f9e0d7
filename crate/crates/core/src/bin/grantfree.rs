use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use grantfree::cli::{self, CommonOpts, EXIT_CONFIG, EXIT_OK, EXIT_VALIDATION};
use grantfree::pilot::SweepMode;

#[derive(Parser)]
#[command(name = "grantfree", version, about = "Grant-free massive access: BLER analysis and pilot-length design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// BLER versus number of active users for a few pilot lengths.
    Fig2(Common),
    /// BLER versus pilot length and the optimal pilot length per K.
    Fig3(Common),
    /// Sweep every feasible pilot length and report the best one.
    Optimize(Common),
    /// Cross-check the analysis against simulation; exit 3 on failure.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Perturb the SNR-law shape so the check must fail.
        #[arg(long, hide = true)]
        corrupt_shape: bool,
    },
}

#[derive(Args)]
struct Common {
    /// `key = value` config file; defaults to the reference network.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<SweepMode>,
    /// Skip the Monte-Carlo columns.
    #[arg(long)]
    analytic_only: bool,
}

fn parse_mode(s: &str) -> Result<SweepMode, String> {
    s.parse().map_err(|e: grantfree::Error| e.to_string())
}

impl From<Common> for CommonOpts {
    fn from(c: Common) -> Self {
        CommonOpts {
            config: c.config,
            out: c.out,
            trials: c.trials,
            seed: c.seed,
            workers: c.workers,
            mode: c.mode,
            analytic_only: c.analytic_only,
        }
    }
}

fn main() -> ExitCode {
    // bad flags are configuration errors, not clap's usage code
    let args = match Cli::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let outcome = match args.command {
        Command::Fig2(c) => cli::cmd_fig2(&c.into()).map(|m| (EXIT_OK, m)),
        Command::Fig3(c) => cli::cmd_fig3(&c.into()).map(|m| (EXIT_OK, m)),
        Command::Optimize(c) => cli::cmd_optimize(&c.into()).map(|m| (EXIT_OK, m)),
        Command::Validate { common, corrupt_shape } => cli::cmd_validate(&common.into(), corrupt_shape)
            .map(|(ok, report)| (if ok { EXIT_OK } else { EXIT_VALIDATION }, report)),
    };
    match outcome {
        Ok((code, msg)) => {
            print!("{msg}");
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
