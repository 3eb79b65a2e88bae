use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hgn::config::{parse_overrides, RunConfig};
use hgn::run;

/// Hybrid graph network: training, evaluation, and inspection.
#[derive(Debug, Parser)]
#[command(name = "hgn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// JSON run configuration.
    config: PathBuf,
    /// Overrides as `--dotted.key value` or `--dotted.key=value`, e.g. `--train.lr 0.003`.
    #[arg(
        trailing_var_arg = true,
        allow_hyphen_values = true,
        value_name = "OVERRIDES"
    )]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model; writes the epoch log, checkpoint, and test metrics under `output`.
    Train(RunArgs),
    /// Score the test split with a checkpoint and print the metrics record.
    Eval(RunArgs),
    /// Generate the synthetic benchmark described by `synth` into `output`.
    SynthGen(RunArgs),
    /// Compare analytic and finite-difference gradients at 64-bit.
    GradCheck(RunArgs),
    /// Export weighted candidate graphs as DOT and JSON under `<output>/graphs`.
    ExportGraph(RunArgs),
}

fn load(args: &RunArgs) -> hgn::Result<RunConfig> {
    RunConfig::load(&args.config, &parse_overrides(&args.overrides)?)
}

fn execute(cli: Cli) -> hgn::Result<bool> {
    match cli.command {
        Command::Train(a) => {
            let cfg = load(&a)?;
            let summary = run::dispatch_train(&cfg)?;
            for e in &summary.report.epochs {
                println!("{}", serde_json::to_string(e)?);
            }
            if let Some(m) = summary.test {
                println!("{}", serde_json::to_string(&m)?);
            }
        }
        Command::Eval(a) => {
            let cfg = load(&a)?;
            println!("{}", serde_json::to_string(&run::dispatch_eval(&cfg)?)?);
        }
        Command::SynthGen(a) => {
            let cfg = load(&a)?;
            run::run_synth_gen(&cfg)?;
            println!("{}", cfg.output.join("config.json").display());
        }
        Command::GradCheck(a) => {
            let cfg = load(&a)?;
            let mut ok = true;
            for (id, report) in run::run_grad_check(&cfg)? {
                for p in &report.params {
                    let status = if p.rel_error < cfg.grad_check.tolerance {
                        "ok"
                    } else {
                        "FAIL"
                    };
                    ok &= p.rel_error < cfg.grad_check.tolerance;
                    println!(
                        "{id}\t{}\t{}\t{:.3e}\t{:.3e}\t{status}",
                        p.name, p.numel, p.analytic_norm, p.rel_error
                    );
                }
                println!("{id}\tworst\t{:.3e}", report.worst());
            }
            return Ok(ok);
        }
        Command::ExportGraph(a) => {
            let cfg = load(&a)?;
            for p in run::dispatch_export(&cfg)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
