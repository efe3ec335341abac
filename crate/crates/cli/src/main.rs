//! `polymerlab run | list | replay`.
//!
//! Exit status: 0 pass, 1 fail, 2 inconclusive, 3 config or runtime error.
//! Stdout carries a single verdict line; logs go to stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use polymerlab_experiments::{self as exps, ExperimentReport, RunOptions};

const EXIT_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "polymerlab", version, about = "Seeded experiments on truncated polymer dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Overrides the config's output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// List experiments with their parameters and defaults.
    List {
        #[arg(long)]
        json: bool,
    },
    /// Re-run the config embedded in a report and compare metrics bitwise.
    Replay {
        report: PathBuf,
        /// Append this many fresh seeds and write a merged report instead.
        #[arg(long, default_value_t = 0)]
        seeds_extend: u64,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn verdict_line(r: &ExperimentReport, path: Option<&PathBuf>) -> String {
    let at = path.map(|p| format!(" {}", p.display())).unwrap_or_default();
    format!("{} {}{at}", r.verdict.label(), r.name)
}

fn list(json: bool) -> Result<(), exps::ExpError> {
    let infos = exps::list();
    if json {
        println!("{}", serde_json::to_string_pretty(&infos)?);
        return Ok(());
    }
    for i in infos {
        let keys: Vec<&String> = i.params.as_object().map(|m| m.keys().collect()).unwrap_or_default();
        println!("{:<28} {}", i.name, i.summary);
        println!(
            "{:<28} default seeds {}; params: {}",
            "",
            i.default_seeds,
            keys.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", ")
        );
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<u8, exps::ExpError> {
    match cli.command {
        Command::Run { config, output_dir } => {
            let (report, path) = exps::run_config_file(&config, &RunOptions { output_dir, dry_run: false })?;
            println!("{}", verdict_line(&report, path.as_ref()));
            Ok(report.verdict.exit_code() as u8)
        }
        Command::List { json } => {
            list(json)?;
            Ok(0)
        }
        Command::Replay { report, seeds_extend, output_dir } => {
            let out = exps::replay_file(&report, seeds_extend, &RunOptions { output_dir, dry_run: false })?;
            if out.extended {
                println!("{}", verdict_line(&out.report, out.path.as_ref()));
                return Ok(out.report.verdict.exit_code() as u8);
            }
            if out.reproduced() {
                println!("REPRODUCED {}", out.report.name);
                Ok(0)
            } else {
                for d in &out.differences {
                    eprintln!("differs: {d}");
                }
                println!("MISMATCH {} ({} difference(s))", out.report.name, out.differences.len());
                Ok(1)
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
