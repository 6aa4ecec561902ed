//! Command-line driver for the dataset build, annotation and evaluation
//! pipeline. [`run`] is what the `emotrans` binary calls.

pub mod clients;
pub mod common;
pub mod config;
pub mod error;
pub mod remote;
pub mod stages;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::clients::Clients;
use crate::common::{ensure_dir, write_json, write_text};
use crate::config::{apply_env, Overrides, PipelineConfig};
use crate::error::{CliError, CliResult, EXIT_OK, EXIT_USAGE};

pub const METADATA_FILE: &str = "run-metadata.json";

#[derive(Debug, Parser)]
#[command(name = "emotrans", version, about = "Emotion-transition speech dataset pipeline")]
pub struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Worker threads for per-utterance stages.
    #[arg(long, global = true, value_name = "N")]
    pub parallelism: Option<usize>,
    /// Ignore every configured endpoint and use the offline fallbacks.
    #[arg(long, global = true)]
    pub offline: bool,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR")]
    pub run_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Write the transition-plan inventory.
    Plan,
    /// Generate texts, synthesize audio and write manifests.
    BuildDataset,
    /// Trim silence and record alignment maps and transcripts.
    Preprocess,
    /// Train the transition recognizer on the training split.
    TrainMtetr,
    /// Predict segments, measure attributes and write captions.
    Annotate,
    /// Score captions, resynthesis and frame predictions on the test split.
    Evaluate {
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
    },
    /// Tabulate dataset statistics.
    Stats {
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
    },
    /// Print the effective configuration.
    DumpConfig {
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Plan => "plan",
            Command::BuildDataset => "build-dataset",
            Command::Preprocess => "preprocess",
            Command::TrainMtetr => "train-mtetr",
            Command::Annotate => "annotate",
            Command::Evaluate { .. } => "evaluate",
            Command::Stats { .. } => "stats",
            Command::DumpConfig { .. } => "dump-config",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub config_hash: String,
    pub seed: u64,
    pub parallelism: usize,
    pub offline: bool,
    pub versions: BTreeMap<String, String>,
}

/// Last invocation of every command run in this directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub commands: BTreeMap<String, CommandRecord>,
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("emotrans-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("emotrans-core".to_string(), emotrans_core::VERSION.to_string()),
        ("emotrans-mtetr".to_string(), emotrans_mtetr::VERSION.to_string()),
    ])
}

fn record_metadata(cfg: &PipelineConfig, command: &str, offline: bool) -> CliResult<()> {
    let path = cfg.paths.run_dir.join(METADATA_FILE);
    let mut meta: RunMetadata = if path.is_file() {
        common::read_json(&path).unwrap_or_default()
    } else {
        RunMetadata::default()
    };
    meta.commands.insert(
        command.to_string(),
        CommandRecord {
            config_hash: cfg.hash()?,
            seed: cfg.seed,
            parallelism: cfg.parallelism,
            offline,
            versions: versions(),
        },
    );
    write_json(&path, &meta)
}

/// File, then environment, then flags.
pub fn effective_config<I>(cli: &Cli, env: I) -> CliResult<PipelineConfig>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut table = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
            text.parse::<toml::Table>()
                .map_err(|e| CliError::Validation(format!("config: {}", e.message())))?
        }
        None => toml::Table::new(),
    };
    apply_env(&mut table, env)?;
    if let Some(seed) = cli.seed {
        let seed = i64::try_from(seed).map_err(|_| CliError::Usage("--seed must fit in 63 bits".into()))?;
        table.insert("seed".into(), toml::Value::Integer(seed));
    }
    let mut cfg = PipelineConfig::from_table(table)?;
    if let Some(base) = cli.config.as_deref().map(|p| p.parent().unwrap_or(Path::new(""))) {
        cfg.resolve_relative_to(if base.as_os_str().is_empty() { Path::new(".") } else { base });
    }
    cfg.apply(&Overrides {
        seed: cli.seed,
        parallelism: cli.parallelism,
        run_dir: cli.run_dir.clone(),
        offline: cli.offline,
    });
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute<I>(cli: &Cli, env: I) -> CliResult<()>
where
    I: IntoIterator<Item = (String, String)>,
{
    let cfg = effective_config(cli, env)?;
    if let Command::DumpConfig { output } = &cli.command {
        let text = cfg.to_toml()?;
        match output {
            Some(p) => write_text(p, &text)?,
            None => print!("{text}"),
        }
        return Ok(());
    }
    ensure_dir(&cfg.paths.run_dir)?;
    let clients = Clients::from_config(&cfg);
    match &cli.command {
        Command::Plan => stages::plan::run(&cfg).map(drop)?,
        Command::BuildDataset => stages::build::run(&cfg, &clients).map(drop)?,
        Command::Preprocess => stages::preprocess::run(&cfg, &clients).map(drop)?,
        Command::TrainMtetr => stages::train::run(&cfg, &clients).map(drop)?,
        Command::Annotate => stages::annotate::run(&cfg, &clients).map(drop)?,
        Command::Evaluate { manifest } => stages::evaluate::run(&cfg, &clients, manifest.as_deref()).map(drop)?,
        Command::Stats { manifest } => stages::stats::run(&cfg, manifest.as_deref()).map(drop)?,
        Command::DumpConfig { .. } => unreachable!("handled above"),
    }
    record_metadata(&cfg, cli.command.name(), cli.offline)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<A, T, I>(args: A, env: I) -> i32
where
    A: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    I: IntoIterator<Item = (String, String)>,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli, env) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("emotrans {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
