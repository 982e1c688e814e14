use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vsi::config::{ExperimentConfig, Overrides};
use vsi::experiment;
use vsi::inference::ModelKind;
use vsi::Error;

#[derive(Parser)]
#[command(name = "vsi", version, about = "Individual survival distributions from covariates under right censoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Cox-Gompertz cohort and its manifest.
    Simulate(Common),
    /// Fit one model kind and save the artifact and epoch log.
    Train(Common),
    /// Score a saved model on the held-out split.
    Evaluate(Common),
    /// Run every model on all three event rates and compare with published numbers.
    ReproduceTables(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    #[arg(long, value_parser = ["100", "50", "30"])]
    event_rate: Option<String>,
    /// Synthetic cohort size.
    #[arg(long = "N", value_name = "INT")]
    n: Option<usize>,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Common {
    fn resolve(&self) -> vsi::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let event_rate = self
            .event_rate
            .as_deref()
            .map(|r| r.parse::<u32>().map_err(|e| Error::Config(format!("--event-rate: {e}"))))
            .transpose()?;
        cfg.apply(&Overrides { seed: self.seed, out_dir: self.out.clone(), model: self.model, event_rate, n: self.n })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> vsi::Result<()> {
    match cli.command {
        Command::Simulate(c) => {
            let path = experiment::cmd_simulate(&c.resolve()?)?;
            println!("{}", path.display());
        }
        Command::Train(c) => {
            let (path, log) = experiment::cmd_train(&c.resolve()?)?;
            println!("{} (best epoch {})", path.display(), log.best_epoch);
        }
        Command::Evaluate(c) => {
            let report = experiment::cmd_evaluate(&c.resolve()?)?;
            println!("{}", vsi::metrics::EvalReport::table_header());
            println!("{}", report.table_row());
        }
        Command::ReproduceTables(c) => {
            let cfg = c.resolve()?;
            let reports = experiment::cmd_reproduce_tables(&cfg)?;
            let (ks, perf) = experiment::comparison_tables(&reports);
            print!("{ks}\n{perf}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
