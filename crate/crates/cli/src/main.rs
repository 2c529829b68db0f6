use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use timeless_runner::config::Stage;
use timeless_runner::{plan, report, run_all, validate, RunError, RunOptions};

#[derive(Parser)]
#[command(name = "timeless", version, about = "Run timeless system-plus-clock scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenario files.
    Run {
        /// Scenario files; repeat the flag or list several.
        #[arg(long, required = true, num_args = 1..)]
        config: Vec<PathBuf>,
        /// Output root; each scenario writes into `<out>/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Concurrent scenarios and sweep points (0 = all cores).
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated subset of stages to run.
        #[arg(long, value_delimiter = ',', value_parser = parse_stage)]
        stages: Option<Vec<Stage>>,
    },
    /// Check scenario files without running them.
    Validate {
        #[arg(long, required = true, num_args = 1..)]
        config: Vec<PathBuf>,
    },
    /// Verify a finished run and regenerate its plot tables.
    Report {
        /// Scenario output directory holding `manifest.json`.
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    Stage::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Stage::ALL.iter().map(|s| s.name()).collect();
        format!("unknown stage `{s}` (expected one of {})", names.join(", "))
    })
}

fn fail(e: &RunError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, workers, seed, stages } => {
            let opts = RunOptions { out, workers, seed, stages };
            // Every file is validated before anything is written.
            let mut plans = Vec::new();
            for c in &config {
                match plan(c, &opts) {
                    Ok(p) => plans.push(p),
                    Err(e) => return fail(&e),
                }
            }
            let results = match run_all(&plans, &opts) {
                Ok(r) => r,
                Err(e) => return fail(&e),
            };
            let mut code = ExitCode::SUCCESS;
            for (p, r) in plans.iter().zip(results) {
                match r {
                    Ok(m) => println!("{}: ok, {} files in {}", m.scenario, m.files.len(), p.output_dir(&opts).display()),
                    Err(e) => code = fail(&e),
                }
            }
            code
        }
        Command::Validate { config } => {
            let mut code = ExitCode::SUCCESS;
            for c in &config {
                match validate(c) {
                    Ok(issues) if issues.is_empty() => println!("{}: ok", c.display()),
                    Ok(issues) => {
                        for i in issues {
                            println!("{}: {i}", c.display());
                        }
                        code = ExitCode::from(2);
                    }
                    Err(e) => code = fail(&e),
                }
            }
            code
        }
        Command::Report { out } => match report(&out) {
            Ok(r) => {
                for line in &r.summary {
                    println!("{line}");
                }
                for f in &r.plots {
                    println!("wrote {}", out.join(f).display());
                }
                if r.mismatched.is_empty() {
                    ExitCode::SUCCESS
                } else {
                    for f in &r.mismatched {
                        eprintln!("checksum mismatch: {f}");
                    }
                    ExitCode::FAILURE
                }
            }
            Err(e) => fail(&e),
        },
    }
}
