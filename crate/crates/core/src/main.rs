use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use microkin::scenario::{run_scenario, RunFlags, SUITES};

#[derive(Parser)]
#[command(name = "microkin", version, about = "Kinematics of micro-structured continua")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suites of a scenario file.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Suite to run; repeatable. Overrides the scenario's list.
        #[arg(long = "suite", value_name = "NAME")]
        suites: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Multiplies every acceptance tolerance.
        #[arg(long, default_value_t = 1.0)]
        tol_scale: f64,
        /// Proceed when the placement fails the acceptability checks.
        #[arg(long)]
        allow_invalid: bool,
    },
    /// List the available suites.
    Suites,
}

fn configure_threads() {
    let Ok(v) = std::env::var("MICROKIN_THREADS") else { return };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("microkin: MICROKIN_THREADS ignored: {e}");
            }
        }
        _ => eprintln!("microkin: MICROKIN_THREADS ignored: '{v}' is not a positive integer"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    match cli.command {
        Command::Suites => {
            for s in SUITES {
                println!("{s}");
            }
            println!("all");
            ExitCode::SUCCESS
        }
        Command::Run { scenario, seed, suites, out, tol_scale, allow_invalid } => {
            let flags = RunFlags { seed, suites, out, tol_scale, allow_invalid };
            let outcome = run_scenario(&scenario, &flags);
            for s in &outcome.report.suites {
                println!("{:<12} {}", s.name, if s.pass { "pass" } else { "FAIL" });
            }
            if let Some(e) = &outcome.report.error {
                eprintln!("{}", serde_json::to_string(e).expect("error serializes"));
            }
            println!("report: {}", outcome.out_dir.join("report.json").display());
            ExitCode::from(outcome.exit_code as u8)
        }
    }
}
