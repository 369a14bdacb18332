use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use xplat::KeystrokeEvent;

mod analysis;
mod config;
mod ingest;
mod output;
mod pipeline;

use config::{Overrides, RedactionSettings, RunConfig};
use output::OutputDir;
use pipeline::ModelingParts;

/// Keystroke redaction and within-user Facebook/SMS language analysis.
#[derive(Parser)]
#[command(name = "xplat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Redact a keystroke log (JSON lines) into sanitized entries.
    Redact {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        /// Also emit redacted intermediate snapshots.
        #[arg(long)]
        keep_snapshots: bool,
        #[arg(long, default_value_t = 60_000)]
        timeout_ms: i64,
        /// Comma-separated app ids to keep; all apps when absent.
        #[arg(long, value_delimiter = ',')]
        apps: Vec<String>,
    },
    /// Words and posts per user on each platform.
    Summary(RunArgs),
    /// N-gram and dictionary features per user and platform.
    Features(RunArgs),
    /// Differential language analysis between platforms.
    Diff(RunArgs),
    /// Fit ridge models on Facebook features.
    Train(RunArgs),
    /// Within- and across-platform evaluation.
    Evaluate(RunArgs),
    /// Importance of model features given platform frequency shifts.
    Importance(RunArgs),
    /// Every stage end to end, with a manifest.
    Pipeline(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// FDR level.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    min_words: Option<usize>,
    /// Output directory (defaults to the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(
            &self.config,
            &Overrides {
                seed: self.seed,
                alpha: self.alpha,
                min_words: self.min_words,
                output_dir: self.out.clone(),
            },
        )
    }
}

fn redact(
    input: PathBuf,
    output: PathBuf,
    keep_snapshots: bool,
    timeout_ms: i64,
    apps: Vec<String>,
) -> Result<()> {
    let events: Vec<KeystrokeEvent> = ingest::read_jsonl(&input)?;
    let (entries, log) = ingest::redact_events(events, &RedactionSettings { timeout_ms, apps }, keep_snapshots)?;
    let mut text = String::new();
    for e in &entries {
        text.push_str(&serde_json::to_string(e)?);
        text.push('\n');
    }
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&output, text).with_context(|| format!("cannot write {}", output.display()))?;
    eprintln!(
        "{} events, {} outside allow-list, {} entries -> {}",
        log.events,
        log.events_outside_allowlist,
        log.entries,
        output.display()
    );
    Ok(())
}

fn run_stages(args: &RunArgs, upto: &str) -> Result<()> {
    let cfg = args.load()?;
    let mut out = OutputDir::create(&cfg.output_dir())?;
    let study = pipeline::ingest(&cfg, &mut out)?;
    if upto == "summary" {
        pipeline::summary(&study, &mut out)?;
    } else {
        let tables = pipeline::features(&cfg, &study, &mut out)?;
        let parts = |train, evaluate, importance| ModelingParts {
            train,
            evaluate,
            importance,
        };
        match upto {
            "features" => {}
            "diff" => pipeline::diff(&cfg, &study, &tables, &mut out)?,
            "train" => pipeline::modeling(&cfg, &study, &tables, parts(true, false, false), &mut out)?,
            "evaluate" => pipeline::modeling(&cfg, &study, &tables, parts(false, true, false), &mut out)?,
            "importance" => pipeline::modeling(&cfg, &study, &tables, parts(false, false, true), &mut out)?,
            other => unreachable!("unknown stage {other}"),
        }
    }
    for name in out.written().keys() {
        println!("{}", out.root().join(name).display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Redact {
            input,
            output,
            keep_snapshots,
            timeout_ms,
            apps,
        } => redact(input, output, keep_snapshots, timeout_ms, apps),
        Command::Summary(a) => run_stages(&a, "summary"),
        Command::Features(a) => run_stages(&a, "features"),
        Command::Diff(a) => run_stages(&a, "diff"),
        Command::Train(a) => run_stages(&a, "train"),
        Command::Evaluate(a) => run_stages(&a, "evaluate"),
        Command::Importance(a) => run_stages(&a, "importance"),
        Command::Pipeline(a) => {
            let cfg = a.load()?;
            let dir = pipeline::run_pipeline(&cfg)?;
            println!("{}", dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
