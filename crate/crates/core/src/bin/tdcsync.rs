// SPDX-License-Identifier: Apache-2.0

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tdcsync::cli::{self, CliError, RunOptions};
use tdcsync::config::Overrides;

#[derive(Parser)]
#[command(
    name = "tdcsync",
    version,
    about = "TDC calibration and clock skew alignment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Overrides master_seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Overrides num_trials.
    #[arg(long, value_name = "N")]
    trials: Option<usize>,
}

impl Common {
    fn options(self) -> RunOptions {
        RunOptions {
            config: self.config,
            out_dir: self.out,
            overrides: Overrides {
                master_seed: self.seed,
                num_trials: self.trials,
            },
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Code-density calibration of the configured delay line.
    Calibrate(Common),
    /// Power-up alignment campaign.
    Sync {
        #[command(flatten)]
        common: Common,
        /// Also sample the self-alignment baseline.
        #[arg(long)]
        baseline: bool,
        /// Calibrate first instead of loading table_path.
        #[arg(long)]
        auto_calibrate: bool,
    },
    /// Print statistics of a stored table and check its invariants.
    Inspect {
        #[arg(value_name = "TABLE")]
        table: PathBuf,
    },
}

fn run(cmd: Command, out: &mut impl Write) -> Result<(), CliError> {
    match cmd {
        Command::Calibrate(c) => cli::cmd_calibrate(&c.options(), out).map(drop),
        Command::Sync {
            common,
            baseline,
            auto_calibrate,
        } => cli::cmd_sync(&common.options(), baseline, auto_calibrate, out).map(drop),
        Command::Inspect { table } => cli::cmd_inspect(&table, out).map(drop),
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let mut out = std::io::stdout().lock();
    match run(args.command, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
