use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isac_cli::{exit, run_scenario, verify, Scenario};
use ma_isac::oracles::VerifyOptions;

#[derive(Parser)]
#[command(name = "isac", version, about = "CRB-minimizing movable-antenna ISAC design")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve every sweep point of a scenario file and write trace_*.csv and summary.csv.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the brute-force oracle suites and write verify.csv.
    Verify {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, hide = true)]
        corrupt_linalg: bool,
    },
    /// Print the default scenario as JSON.
    PrintDefaults,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run { scenario, out, jobs } => Scenario::load(&scenario).and_then(|s| run_scenario(&s, &out, jobs)),
        Cmd::Verify { out, corrupt_linalg } => verify(&out, &VerifyOptions { corrupt_linalg }),
        Cmd::PrintDefaults => serde_json::to_string_pretty(&Scenario::default())
            .map(|s| {
                println!("{s}");
                exit::OK
            })
            .map_err(Into::into),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::INTERNAL as u8)
        }
    }
}
