use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use covman::metrics::render_table;
use covman::pipeline::{self, PipelineConfig, Predictor, RenderSource, SplitFilter};
use covman::store::write_atomic;

/// Build coverage-manifold data sets from base-station locations and score
/// predictors against them.
#[derive(Debug, Parser)]
#[command(name = "covman", version)]
struct Cli {
    /// TOML file with pipeline parameters
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for every random stage
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// SINR thresholds in dB, comma separated
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    gamma_db: Option<Vec<f64>>,
    /// Output path (file or directory, depending on the command)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a BS CSV into a deduplicated point file
    Ingest {
        csv: PathBuf,
        /// Keep only rows whose radio column matches (e.g. LTE)
        #[arg(long)]
        radio: Option<String>,
    },
    /// Partition points into RoIs and write a tile data set
    Tile { points: PathBuf },
    /// Compute ground-truth coverage manifolds for a data set
    Simulate { manifest: PathBuf },
    /// Write baseline predictions (ppp or bfsg)
    Baseline {
        manifest: PathBuf,
        predictor: Predictor,
    },
    /// Score prediction directories against the ground truth
    Evaluate {
        manifest: PathBuf,
        #[arg(required = true)]
        predictions: Vec<PathBuf>,
        /// Tiles to score: train, test or all
        #[arg(long, default_value = "test")]
        split: SplitFilter,
    },
    /// Render a manifold as a grayscale PNG
    Render {
        tile: PathBuf,
        /// Prediction tile file to render instead of the truth
        #[arg(long)]
        prediction: Option<PathBuf>,
        /// Render truth, prediction and absolute error side by side
        #[arg(long, requires = "prediction")]
        triptych: bool,
    },
    /// Generate a data set of synthetic PPP tiles
    Synth {
        #[arg(long)]
        count: usize,
        /// Base stations per square metre
        #[arg(long)]
        density: f64,
    },
}

fn load_config(cli: &Cli) -> covman::Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if cli.jobs.is_some() {
        config.jobs = cli.jobs;
    }
    if let Some(g) = &cli.gamma_db {
        config.gamma_db = g.clone();
    }
    config.validate()?;
    Ok(config)
}

fn out_or(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn run(cli: &Cli, config: &PipelineConfig) -> covman::Result<()> {
    match &cli.command {
        Command::Ingest { csv, radio } => {
            let out = out_or(cli, "points.csv");
            let r = pipeline::ingest(csv, radio.as_deref(), &out)?;
            println!(
                "{} points -> {} ({} rows, {} malformed, {} filtered, {} duplicates)",
                r.points,
                out.display(),
                r.rows,
                r.bad_rows.len(),
                r.radio_filtered,
                r.duplicates
            );
        }
        Command::Tile { points } => {
            let r = pipeline::tile(points, config, &out_or(cli, "dataset"))?;
            print_dataset(&r);
        }
        Command::Synth { count, density } => {
            let r = pipeline::synth(*count, *density, config, &out_or(cli, "dataset"))?;
            print_dataset(&r);
        }
        Command::Simulate { manifest } => {
            let r = pipeline::simulate(manifest, config.jobs)?;
            println!("{} manifolds over {} tiles", r.manifolds, r.tiles);
        }
        Command::Baseline {
            manifest,
            predictor,
        } => {
            let out = cli
                .out
                .clone()
                .unwrap_or_else(|| pipeline::default_prediction_dir(manifest, *predictor));
            let n = pipeline::baseline(manifest, *predictor, &out, config.jobs)?;
            println!(
                "{n} {} prediction files -> {}",
                predictor.name(),
                out.display()
            );
        }
        Command::Evaluate {
            manifest,
            predictions,
            split,
        } => {
            let reports = pipeline::evaluate(manifest, predictions, *split)?;
            print!("{}", render_table(&reports));
            if let Some(out) = &cli.out {
                let json = serde_json::to_vec_pretty(&reports)?;
                write_atomic(out, &json)?;
            }
        }
        Command::Render {
            tile,
            prediction,
            triptych,
        } => {
            let gamma = config.gamma_db.first().copied().unwrap_or(0.0) as f32;
            let source = match (prediction, triptych) {
                (Some(p), true) => RenderSource::Triptych(p.clone()),
                (Some(p), false) => RenderSource::Prediction(p.clone()),
                (None, _) => RenderSource::Truth,
            };
            let out = cli.out.clone().unwrap_or_else(|| default_png(tile));
            pipeline::render(tile, gamma, &source, &out)?;
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn default_png(tile: &Path) -> PathBuf {
    tile.with_extension("png")
        .file_name()
        .map_or_else(|| PathBuf::from("render.png"), PathBuf::from)
}

fn print_dataset(r: &pipeline::DatasetReport) {
    println!(
        "{} tiles kept of {} ({} discarded), {} train / {} test -> {}",
        r.kept,
        r.considered,
        r.discarded,
        r.train,
        r.test,
        r.manifest_path.display()
    );
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();

    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match run(&cli, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
