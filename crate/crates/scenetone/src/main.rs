use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::warn;
use scenetone::error::{Error, Result};
use scenetone::fixture::{synth_fixture, FixtureSpec};
use scenetone::{bundle, mos_stats, pipeline, FeatureStore, Manifest, PipelineConfig};

#[derive(Parser)]
#[command(name = "scenetone", version, about = "Turn video frame sequences into emotionally matched music")]
struct Cli {
    /// JSON file overriding pipeline settings.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every random choice in the pipeline.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract visual and audio descriptors for every manifest clip.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        /// Feature store directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the ANFIS regressors, per-quadrant LSTMs and dictionaries.
    Train {
        #[arg(long)]
        store: PathBuf,
        /// Bundle directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Produce a WAV (and a JSON report beside it) for a frame directory.
    Generate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        fps: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate every manifest clip and compare with its own audio.
    Evaluate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean and standard deviation of listener scores per sample and axis.
    MosStats {
        /// CSV with header sample_id,axis,score.
        #[arg(long)]
        scores: PathBuf,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a small planted dataset with its manifest.
    SynthFixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        clips_per_quadrant: usize,
    },
    /// Summarize a trained bundle.
    InspectBundle {
        #[arg(long)]
        bundle: PathBuf,
    },
}

fn resolve_config(cli: &Cli, base: Option<serde_json::Value>) -> Result<PipelineConfig> {
    let file = cli.config.as_deref().map(PipelineConfig::read_overrides).transpose()?;
    let layers: Vec<&serde_json::Value> = base.iter().chain(file.iter()).collect();
    let mut cfg = PipelineConfig::layered(&layers)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io("writing", path, e))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest { manifest, out } => {
            let m = Manifest::load(manifest)?;
            let cfg = resolve_config(cli, m.config.clone())?;
            let store = pipeline::ingest(&m, &cfg)?;
            store.save(out)?;
            let segments: usize = store.clips.iter().map(|c| c.segments.len()).sum();
            println!("ingested {} clips, {segments} segments into {}", store.clips.len(), out.display());
        }
        Command::Train { store, out } => {
            let s = FeatureStore::load(store)?;
            let base = serde_json::to_value(&s.config).expect("config serializes");
            let cfg = resolve_config(cli, Some(base))?;
            let (bundle, summary) = pipeline::train(&s, &cfg)?;
            bundle::save_bundle(&bundle, out)?;
            print_json(&summary);
        }
        Command::Generate { bundle, frames, fps, out } => {
            warn_ignored(cli);
            let b = bundle::load_bundle(bundle)?;
            let (audio, report) = pipeline::generate_from_dir(&b, frames, *fps)?;
            pipeline::write_generation(out, &audio, &report)?;
            println!(
                "{}: {} steps, {:.2} s, quadrant {} (valence {:.2}, arousal {:.2})",
                out.display(),
                report.steps.len(),
                report.total_duration,
                report.quadrant,
                report.score.valence,
                report.score.arousal
            );
        }
        Command::Evaluate { bundle, manifest, out } => {
            warn_ignored(cli);
            let b = bundle::load_bundle(bundle)?;
            let m = Manifest::load(manifest)?;
            let summary = pipeline::evaluate(&b, &m, out)?;
            print!("{}", summary.render());
        }
        Command::MosStats { scores, out } => {
            let rows = mos_stats::read_scores(scores)?;
            let table = mos_stats::render_csv(&rows);
            match out {
                Some(p) => write_text(p, &table)?,
                None => print!("{table}"),
            }
        }
        Command::SynthFixture { out, clips_per_quadrant } => {
            let spec = FixtureSpec { clips_per_quadrant: *clips_per_quadrant, ..FixtureSpec::default() };
            let path = synth_fixture(out, cli.seed.unwrap_or(0), &spec)?;
            println!("wrote {}", path.display());
        }
        Command::InspectBundle { bundle } => {
            print_json(&bundle::describe(&bundle::load_bundle(bundle)?));
        }
    }
    Ok(())
}

fn warn_ignored(cli: &Cli) {
    if cli.config.is_some() || cli.seed.is_some() {
        warn!("--config and --seed are ignored here; the bundle's own settings apply");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
