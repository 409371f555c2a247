use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use ctxrank::pipeline::{Pipeline, RunConfig, Stage};
use ctxrank::Error;

/// Contextual learning-to-rank pipeline over synthetic search sessions.
#[derive(Debug, Parser)]
#[command(name = "ctxrank", version)]
struct Cli {
    /// TOML run config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed, overriding the config's.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory every configured path is resolved under.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Print stage logs and timings to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the synthetic session log.
    GenData,
    /// Train both sequence encoders on pre-boundary sessions.
    TrainSeq,
    /// Compute ranker features for post-boundary sessions.
    Featurize,
    /// Train one ranker per ladder variant.
    TrainRanker,
    /// Score the held-out sessions and write the lift report.
    Evaluate,
    /// Render the lift report as a table.
    Report,
    /// Every stage in order.
    RunAll,
    /// Print the resolved config as TOML.
    PrintConfig,
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn exit_code(err: &Error) -> u8 {
    if err.is_numeric() {
        EXIT_NUMERIC
    } else if matches!(err, Error::Config(_)) {
        EXIT_USAGE
    } else {
        EXIT_DATA
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let pipeline = Pipeline::new(cfg, cli.seed, cli.out.as_deref())?;
    let stages: Vec<Stage> = match cli.command {
        Command::PrintConfig => {
            print!("{}", pipeline.config().to_toml()?);
            return Ok(());
        }
        Command::GenData => vec![Stage::GenData],
        Command::TrainSeq => vec![Stage::TrainSeq],
        Command::Featurize => vec![Stage::Featurize],
        Command::TrainRanker => vec![Stage::TrainRanker],
        Command::Evaluate => vec![Stage::Evaluate],
        Command::Report => vec![Stage::Report],
        Command::RunAll => Stage::ALL
            .into_iter()
            .filter(|&s| s != Stage::TrainSeq || pipeline.config().ladder.sequence)
            .collect(),
    };
    for stage in stages {
        let started = Instant::now();
        let out = pipeline.run(stage)?;
        if cli.verbose {
            for line in &out.log {
                eprintln!("[{}] {line}", stage.name());
            }
            for path in &out.written {
                eprintln!("[{}] wrote {}", stage.name(), path.display());
            }
            eprintln!("[{}] done in {:.1?}", stage.name(), started.elapsed());
        }
        if let Some(table) = out.rendered {
            print!("{table}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
