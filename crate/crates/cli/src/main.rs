mod commands;
mod error;

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use condkit_core::Config;

use crate::error::CliError;

/// Camera conditioning, scale normalization, shard streaming, distillation
/// planning and evaluation for single-image novel view synthesis.
///
/// Settings are layered: config file < command-line flags < `CONDKIT_*`
/// environment variables.
#[derive(Debug, Parser)]
#[command(name = "condkit", version, propagate_version = true)]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set dataset.rate=4`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build or inspect scene shards.
    #[command(subcommand)]
    Shard(ShardCommand),
    /// Stream view pairs from shards.
    #[command(subcommand)]
    Stream(StreamCommand),
    /// Compute conditioning vectors for a view pair.
    Conditioning(commands::conditioning::ConditioningArgs),
    /// Crop and resize a scene's images, depths and intrinsics.
    Preprocess(commands::preprocess::PreprocessArgs),
    /// Plan a score-distillation run.
    #[command(subcommand)]
    Plan(PlanCommand),
    /// Score predicted images against ground truth.
    Eval(commands::eval::EvalArgs),
    /// Show the effective configuration.
    #[command(subcommand)]
    Config(ConfigCommand),
}

#[derive(Debug, Subcommand)]
enum ShardCommand {
    /// Pack scene directories into shards.
    Build(commands::shard::BuildArgs),
    /// Print a shard's manifest, optionally verifying every scene.
    Inspect(commands::shard::InspectArgs),
}

#[derive(Debug, Subcommand)]
enum StreamCommand {
    /// Measure streaming throughput and memory.
    Bench(commands::stream::BenchArgs),
}

#[derive(Debug, Subcommand)]
enum PlanCommand {
    /// Write the per-step distillation schedule as NDJSON.
    Distill(commands::plan::DistillArgs),
}

#[derive(Debug, Subcommand)]
enum ConfigCommand {
    /// Print the effective config as TOML.
    Dump(DumpArgs),
}

#[derive(Debug, Args)]
struct DumpArgs {}

fn parse_set(raw: &str) -> Result<(String, String), CliError> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.to_string()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {raw:?}")))
}

/// Quotes a flag value as a TOML string so it is never reinterpreted.
pub(crate) fn toml_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

impl Cli {
    fn config(&self, flags: Vec<(String, String)>) -> Result<Config, CliError> {
        let mut config = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        let mut overrides = self.set.iter().map(|s| parse_set(s)).collect::<Result<Vec<_>, _>>()?;
        overrides.extend(flags);
        if let Some(seed) = self.seed {
            overrides.push(("seed".into(), seed.to_string()));
        }
        config.set_all(&overrides)?;
        config.apply_env(std::env::vars())?;
        Ok(config)
    }
}

fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Shard(ShardCommand::Build(args)) => commands::shard::build(&cli.config(args.overrides())?, args, out),
        Command::Shard(ShardCommand::Inspect(args)) => commands::shard::inspect(args, out),
        Command::Stream(StreamCommand::Bench(args)) => commands::stream::bench(&cli.config(args.overrides())?, args, out),
        Command::Conditioning(args) => commands::conditioning::run(&cli.config(args.overrides())?, args, out),
        Command::Preprocess(args) => commands::preprocess::run(&cli.config(args.overrides())?, args, out),
        Command::Plan(PlanCommand::Distill(args)) => {
            let mut flags = args.overrides();
            if let Some(seed) = cli.seed {
                flags.push(("anchoring.seed".into(), seed.to_string()));
            }
            commands::plan::distill(&cli.config(flags)?, args, out)
        }
        Command::Eval(args) => commands::eval::run(&cli.config(args.overrides())?, args, out),
        Command::Config(ConfigCommand::Dump(_)) => {
            let config = cli.config(Vec::new())?;
            write!(out, "# condkit-config v1\n{}", config.to_toml()).map_err(|e| CliError::io("stdout", e))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = io::BufWriter::new(stdout.lock());
    let result = run(&cli, &mut out).and_then(|()| out.flush().map_err(|e| CliError::io("stdout", e)));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            drop(out);
            eprintln!("condkit: error: {e}");
            e.exit_code()
        }
    }
}
