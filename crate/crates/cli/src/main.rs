//! `smite` — run fairness-aware in-context example selection experiments,
//! aggregate their reports, and verify prediction dumps.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use smite_core::dataset::synthetic::write_synthetic_csv;
use smite_core::error::{Error, Result};
use smite_core::harness::{
    aggregate, dump_check, read_reports, run_experiment, BackendChoice, ExperimentConfig, Method,
};

#[derive(Parser)]
#[command(name = "smite", version, about = "Fairness-aware in-context example selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured methods over every seed and repeat.
    Run(RunArgs),
    /// Aggregate a run directory into a per-method summary table.
    Report(DirArgs),
    /// Recompute metrics from the CSV dumps and diff them against the reports.
    DumpCheck(DirArgs),
    /// Generate a synthetic dataset plus a ready-to-run config.
    Gen(GenArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated method override (zero_shot, random_ice, rag, smite).
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<String>>,
    /// Backend override: mock or http.
    #[arg(long)]
    backend: Option<String>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DirArgs {
    /// Run directory written by `run`.
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    /// Directory to create the dataset and config in.
    #[arg(long)]
    out: PathBuf,
    /// Number of rows to generate.
    #[arg(long, default_value_t = 700)]
    rows: usize,
    /// Generator seed.
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let benign = matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = err.print();
            return if benign { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::Report(args) => report(args),
        Command::DumpCheck(args) => check(args),
        Command::Gen(args) => generate(args),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let mut config = ExperimentConfig::from_path(&args.config)?;
    if let Some(methods) = args.method {
        config.methods = methods
            .iter()
            .map(|name| name.parse::<Method>())
            .collect::<Result<_>>()?;
    }
    if let Some(backend) = args.backend {
        config.backend = match backend.as_str() {
            "mock" => BackendChoice::Mock,
            "http" => match config.backend {
                http @ BackendChoice::Http { .. } => http,
                BackendChoice::Mock => {
                    return Err(Error::Config(
                        "--backend http requires endpoint and model in the config's [backend] table"
                            .into(),
                    ))
                }
            },
            other => return Err(Error::Config(format!("unknown backend {other:?}"))),
        };
    }
    if let Some(out) = args.out {
        config.out = out;
    }
    config.validate()?;

    let output = run_experiment(&config)?;
    println!(
        "wrote {} report(s) under {}",
        output.reports.len(),
        output.out_dir.display()
    );
    if !output.reports.is_empty() {
        let summary = aggregate(&output.reports)?;
        print!("{}", summary.to_table());
    }
    if !output.failures.is_empty() {
        for failure in &output.failures {
            eprintln!("cell {} failed: {}", failure.cell, failure.message);
        }
        return Err(Error::Backend {
            backend: "run".into(),
            reason: format!(
                "{} of {} cell(s) aborted by backend failures (see failures.txt)",
                output.failures.len(),
                output.failures.len() + output.reports.len()
            ),
            attempts: 1,
        });
    }
    Ok(())
}

fn report(args: DirArgs) -> Result<()> {
    let reports = read_reports(&args.input)?;
    let summary = aggregate(&reports)?;
    let json =
        serde_json::to_string_pretty(&summary).map_err(|e| Error::Invariant(e.to_string()))?;
    std::fs::write(args.input.join("summary.json"), json + "\n")?;
    print!("{}", summary.to_table());
    println!("summary written to {}", args.input.join("summary.json").display());
    Ok(())
}

fn check(args: DirArgs) -> Result<()> {
    let outcome = dump_check(&args.input)?;
    println!("checked {} cell(s)", outcome.cells_checked);
    if outcome.is_clean() {
        println!("all dumps match their reports");
        Ok(())
    } else {
        for mismatch in &outcome.mismatches {
            eprintln!("mismatch: {mismatch}");
        }
        Err(Error::Invariant(format!(
            "{} dump(s) disagree with their reports",
            outcome.mismatches.len()
        )))
    }
}

fn generate(args: GenArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out)?;
    let csv_path = args.out.join("synthetic.csv");
    let schema_path = args.out.join("synthetic.schema.toml");
    write_synthetic_csv(&csv_path, Some(&schema_path), args.rows, args.seed)?;

    let config_path = args.out.join("config.toml");
    // one seventh of the rows (rounded to a batch multiple) go to the test set
    let n_test = ((args.rows / 7) / 10).max(1) * 10;
    let config = format!(
        "# Generated offline experiment config.\n\
         seeds = [20, 25, 42]\n\
         repeats = 1\n\
         n_test = {n_test}\n\
         m = 10\n\
         k = 6\n\
         l = 8\n\
         alpha = 0.5\n\
         out = {:?}\n\n\
         [dataset]\n\
         preset = \"custom\"\n\
         data = {:?}\n\
         schema = {:?}\n",
        args.out.join("runs"),
        csv_path,
        schema_path,
    );
    std::fs::write(&config_path, config)?;
    println!("wrote {}", csv_path.display());
    println!("wrote {}", schema_path.display());
    println!("wrote {}", config_path.display());
    println!("run with: smite run --config {}", config_path.display());
    Ok(())
}
