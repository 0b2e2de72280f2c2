use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use placelab::window::WindowKind;
use placelab_cli::config::LabelTarget;
use placelab_cli::fixture::{write_fixture, FixtureParams};
use placelab_cli::{validate, Pipeline, PipelineConfig, Stage};

#[derive(Parser)]
#[command(name = "placelab", version, about = "Community success analytics for the 2017 r/place canvas")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, default_value = "placelab.toml")]
    config: PathBuf,
    /// Output directory; overrides `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for fold assignment and every seeded model.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Restrict per-window stages to one window.
    #[arg(long, global = true)]
    window: Option<WindowKind>,
    /// Comma-separated feature blocks, e.g. `meta,network,bow`.
    #[arg(long, global = true, value_delimiter = ',')]
    blocks: Option<Vec<String>>,
    /// Restrict per-label stages to one target.
    #[arg(long, global = true)]
    label: Option<LabelTarget>,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw inputs into validated records.
    Ingest,
    /// Replay placements into the final canvas and per-cell activity.
    Replay,
    /// Render the final canvas as PNG.
    Snapshot,
    /// Measure every community's artwork.
    Measure,
    /// Compute survival flags and success scores.
    Label,
    /// Build per-window feature matrices.
    Featurize,
    /// Fit every configured model on all rows.
    Train,
    /// Cross-validate every configured model.
    Evaluate,
    /// Shapley attributions for the explained model.
    Explain,
    /// Summary tables and the final snapshot.
    Report,
    /// Check the configuration and list problems.
    Validate {
        /// Print problems as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run every stage in order.
    RunAll,
    /// Write a synthetic input set and matching config.
    Synth {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 80)]
        communities: usize,
        #[arg(long, default_value_t = 120)]
        canvas: u32,
        #[arg(long, default_value_t = 7)]
        fixture_seed: u64,
    },
}

fn load_config(g: &Global) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&g.config)?;
    if let Some(out) = &g.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = g.seed {
        cfg.set_seed(seed);
    }
    if let Some(w) = g.window {
        cfg.windows.run = vec![w];
    }
    if let Some(blocks) = &g.blocks {
        cfg.features.blocks = blocks.iter().map(|b| b.trim().to_string()).filter(|b| !b.is_empty()).collect();
    }
    if let Some(l) = g.label {
        cfg.labels.targets = vec![l];
    }
    Ok(cfg)
}

fn stage_of(c: &Command) -> Option<Stage> {
    Some(match c {
        Command::Ingest => Stage::Ingest,
        Command::Replay => Stage::Canvas,
        Command::Snapshot => Stage::Snapshot,
        Command::Measure => Stage::Artwork,
        Command::Label => Stage::Labels,
        Command::Featurize => Stage::Features,
        Command::Train => Stage::Train,
        Command::Evaluate => Stage::Evaluate,
        Command::Explain => Stage::Explain,
        Command::Report => Stage::Report,
        _ => return None,
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Synth { dir, communities, canvas, fixture_seed } => {
            let params = FixtureParams { communities: *communities, canvas: *canvas, seed: *fixture_seed, ..Default::default() };
            let path = write_fixture(dir, &params)?;
            println!("{}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { json } => {
            let problems = validate(&load_config(&cli.global)?);
            if *json {
                println!("{}", serde_json::to_string_pretty(&problems)?);
            } else {
                for p in &problems {
                    println!("{p}");
                }
            }
            Ok(if problems.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::RunAll => {
            let outcomes = Pipeline::new(load_config(&cli.global)?).run_all()?;
            let hits = outcomes.iter().filter(|o| o.cached).count();
            tracing::info!(units = outcomes.len(), cache_hits = hits, "pipeline done");
            Ok(ExitCode::SUCCESS)
        }
        other => {
            let stage = stage_of(other).expect("stage subcommand");
            Pipeline::new(load_config(&cli.global)?).run(stage)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.quiet { tracing::Level::WARN } else { tracing::Level::INFO };
    tracing_subscriber::fmt().with_max_level(level).with_target(false).with_writer(std::io::stderr).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
