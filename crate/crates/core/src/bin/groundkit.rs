use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use groundkit::config::PipelineConfig;
use groundkit::eval::MetricReport;
use groundkit::pipeline::{PipelineError, Runner, Stage, StageOutcome};

/// Build GUI-grounding corpora and score agent predictions.
#[derive(Debug, Parser)]
#[command(name = "groundkit", version)]
struct Cli {
    /// Pipeline config; relative paths inside it resolve against its directory.
    #[arg(short, long, global = true, default_value = "groundkit.toml")]
    config: PathBuf,
    /// Override a config value, e.g. `--set filter.max_elements_per_page=8`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads (0 = one per core). Shorthand for `--set workers=N`.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Rerun stages even when their outputs are current.
    #[arg(long, global = true)]
    force: bool,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and validate snapshot files.
    Ingest,
    /// Drop unusable pages and cap elements per page.
    Filter,
    /// Cut pages into screenshot windows and emit REG records.
    Segment,
    /// Explore environment graphs into trajectories.
    Explore,
    /// Request sub-instructions for trajectory steps and emit IG records.
    Annotate,
    /// Map dataset steps into the unified action space and pack records.
    Unify,
    /// Score predictions and print the metric table.
    Evaluate,
    /// Run every configured stage in order.
    Pipeline,
    /// Write a synthetic snapshot and environment corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        pages: usize,
        #[arg(long, default_value_t = 8)]
        envs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn print_outcome(o: &StageOutcome) {
    let counts: Vec<String> = o
        .manifest
        .counts
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    let state = if o.skipped { "up to date" } else { "done" };
    println!("{:<9} {state:<10} {}", o.manifest.stage.name(), counts.join(" "));
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let stage = match &cli.command {
        Command::Synth {
            out,
            pages,
            envs,
            seed,
        } => {
            let s = groundkit::synth::write_corpus(out, *pages, *envs, *seed)?;
            println!(
                "wrote {} pages and {} environments to {}",
                s.pages,
                s.environments,
                out.display()
            );
            return Ok(());
        }
        Command::Ingest => Some(Stage::Ingest),
        Command::Filter => Some(Stage::Filter),
        Command::Segment => Some(Stage::Segment),
        Command::Explore => Some(Stage::Explore),
        Command::Annotate => Some(Stage::Annotate),
        Command::Unify => Some(Stage::Unify),
        Command::Evaluate => Some(Stage::Evaluate),
        Command::Pipeline => None,
    };
    let mut overrides = cli.overrides.clone();
    if let Some(w) = cli.workers {
        overrides.push(format!("workers={w}"));
    }
    let (cfg, base) = PipelineConfig::load(&cli.config, &overrides)?;
    let runner = Runner::new(cfg, base).force(cli.force);
    match stage {
        Some(stage) => {
            let o = runner.run_stage(stage)?;
            print_outcome(&o);
            if stage == Stage::Evaluate {
                let path = runner.output_dir().join("report.json");
                let bytes = std::fs::read(&path)
                    .map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
                let report: MetricReport =
                    serde_json::from_slice(&bytes).map_err(|e| PipelineError::Data(e.to_string()))?;
                print!("{}", report.table());
            }
        }
        None => {
            let run = runner.run_pipeline()?;
            for m in &run.stages {
                let counts: Vec<String> = m.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
                println!("{:<9} {}", m.stage.name(), counts.join(" "));
            }
            println!(
                "manifest: {}",
                runner.output_dir().join("manifest.json").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
