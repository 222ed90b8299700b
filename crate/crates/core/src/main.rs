use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mutclock::cli::{self, CommandOutput, Overrides, RunConfig, Status};

#[derive(Parser)]
#[command(name = "mutclock", version, about = "Waiting times for k spatially spreading mutations on a torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate sigma_k and write the sorted draws as CSV.
    Simulate(Common),
    /// Print the regime report for the configured model.
    Classify(Common),
    /// Evaluate a case's limit CDF on the configured grid.
    Law(Common),
    /// Compare simulated draws with the case's limit law.
    Verify(Common),
    /// Draw Z_{d,k}(c) and check the sandwich and small-t bounds.
    Zdist(Common),
    /// Estimate stage volumes by hit testing.
    Volume(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Write the artifact (or the report) here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Case id such as `6` or `case6`.
    #[arg(long = "case")]
    case_id: Option<String>,
    /// Use `--case` even when the tuple cannot be classified.
    #[arg(long)]
    force_case: bool,
    #[arg(long)]
    threshold: Option<f64>,
    /// DKW failure probability.
    #[arg(long)]
    confidence: Option<f64>,
}

fn run(cli: Cli) -> Result<(CommandOutput, Option<PathBuf>), mutclock::Error> {
    let (verb, common) = match &cli.command {
        Command::Simulate(c) => ("simulate", c),
        Command::Classify(c) => ("classify", c),
        Command::Law(c) => ("law", c),
        Command::Verify(c) => ("verify", c),
        Command::Zdist(c) => ("zdist", c),
        Command::Volume(c) => ("volume", c),
    };
    let mut config = RunConfig::load(&common.config)?;
    config.apply(&Overrides {
        seed: common.seed,
        replicates: common.replicates,
        threshold: common.threshold,
        confidence: common.confidence,
    });
    let workers = cli::workers_from_env();
    let case = common.case_id.as_deref();
    let output = match verb {
        "simulate" => cli::cmd_simulate(&config, workers),
        "classify" => cli::cmd_classify(&config),
        "law" => cli::cmd_law(&config, case, common.force_case),
        "verify" => cli::cmd_verify(&config, case, common.force_case, workers),
        "zdist" => cli::cmd_zdist(&config, workers),
        _ => cli::cmd_volume(&config, workers),
    }?;
    Ok((output, common.out.clone()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok((output, out)) => {
            let emitted = match (&output.artifact, &out) {
                (Some(artifact), Some(path)) => std::fs::write(path, artifact).map(|_| print!("{}", output.report)),
                (Some(artifact), None) => {
                    eprint!("{}", output.report);
                    print!("{artifact}");
                    Ok(())
                }
                (None, Some(path)) => std::fs::write(path, &output.report),
                (None, None) => {
                    print!("{}", output.report);
                    Ok(())
                }
            };
            if let Err(e) = emitted {
                eprintln!("error: {e}");
                return ExitCode::from(Status::Usage.code() as u8);
            }
            ExitCode::from(output.status.code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(Status::Usage.code() as u8)
        }
    }
}
