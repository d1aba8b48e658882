use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hwfair::harness::acceptance::{run_suite, Suite};
use hwfair::harness::{mitigation_study, report, run_experiment, RunOptions};

#[derive(Parser)]
#[command(name = "hwfair", version, about = "Hardware nondeterminism and group fairness experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for independent training runs.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Retrain runs that already completed.
    #[arg(long, global = true)]
    force: bool,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train every (profile, seed, λ) combination and write reports.
    Run { config: PathBuf },
    /// Run the sweep and select a penalty weight.
    Mitigate { config: PathBuf },
    /// Run acceptance checks: fast, theorems, mitigation or all.
    Verify { suite: String },
    /// Summarize a finished run directory.
    Report { run_dir: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let opts = RunOptions {
        workers: cli.workers,
        force: cli.force,
        output: cli.output,
    };
    let result = match cli.command {
        Command::Run { config } => run_experiment(config, &opts).map(|s| {
            println!(
                "{}: {} trained, {} reused, {} failed",
                s.dir.display(),
                s.completed,
                s.skipped,
                s.failed
            );
            s.success()
        }),
        Command::Mitigate { config } => mitigation_study(config, &opts).map(|r| {
            print!("{}", r.table());
            true
        }),
        Command::Verify { suite } => suite.parse::<Suite>().map(|s| {
            let results = run_suite(s);
            for r in &results {
                println!("{r}");
            }
            results.iter().all(|r| r.passed)
        }),
        Command::Report { run_dir } => report(run_dir).map(|text| {
            print!("{text}");
            true
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
