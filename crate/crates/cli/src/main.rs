mod commands;
mod error;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::CliError;

/// Detect pepper peduncles in coloured point clouds.
#[derive(Debug, Parser)]
#[command(name = "peduncle", version, about)]
struct Cli {
    /// Pipeline config file (TOML). Built-in defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads for prediction. Defaults to the available CPUs.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
    /// Overrides the training seed, the first synthetic scene seed and the
    /// sweep split seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Log per-stage point counts and timings.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate labelled synthetic scenes and a manifest.
    Synth {
        /// Scene batch file (TOML: count, trip, colour, optional [scene] table).
        #[arg(long, value_name = "PATH")]
        spec: PathBuf,
        /// Output directory. Defaults to the config's data root.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Run the pipeline over a manifest and train a classifier.
    Train {
        /// Dataset manifest (path,scene_id,trip,colour per line).
        #[arg(long, value_name = "PATH")]
        manifest: PathBuf,
        /// Model output path. Defaults to paths.model from the config.
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
    },
    /// Label every point of one cloud.
    Predict {
        /// Trained model JSON. Defaults to paths.model from the config.
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        /// Input cloud.
        #[arg(long, value_name = "PATH")]
        cloud: PathBuf,
        /// Output cloud with predicted labels.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Per-point scores CSV. Defaults to the output path with `.scores.csv`.
        #[arg(long, value_name = "PATH")]
        scores: Option<PathBuf>,
    },
    /// Score a model on a test manifest and write PR reports.
    Evaluate {
        /// Trained model JSON. Defaults to paths.model from the config.
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        /// Test manifest.
        #[arg(long, value_name = "PATH")]
        manifest: PathBuf,
        /// Report directory. Defaults to paths.reports from the config.
        #[arg(long, value_name = "DIR")]
        report_dir: Option<PathBuf>,
    },
    /// Train one model per grid row and rank them by validation AUC.
    Sweep {
        /// Training manifest; split in half when --validation is omitted.
        #[arg(long, value_name = "PATH")]
        manifest: PathBuf,
        /// Validation manifest.
        #[arg(long, value_name = "PATH")]
        validation: Option<PathBuf>,
        /// Grid CSV with rows `kernel,gamma,c[,features]`.
        #[arg(long, value_name = "PATH")]
        grid: PathBuf,
        /// Ranked CSV output.
        #[arg(long, value_name = "PATH")]
        report: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = files::load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.train.seed = seed;
    }
    let workers = cli
        .workers
        .map(|w| w as usize)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));

    match cli.command {
        Command::Synth { spec, out } => {
            let out = out.unwrap_or_else(|| config.paths.data_root.clone());
            let manifest = commands::synth(&spec, &out, cli.seed)?;
            println!("manifest: {}", manifest.display());
        }
        Command::Train { manifest, model } => {
            let model_out = model.unwrap_or_else(|| config.paths.model.clone());
            let model = commands::train(&config, &manifest, &model_out)?;
            println!(
                "model: {} ({} support vectors, {} training rows)",
                model_out.display(),
                model.support_vectors.len(),
                model.meta.training_rows
            );
        }
        Command::Predict {
            model,
            cloud,
            out,
            scores,
        } => {
            let model = model.unwrap_or_else(|| config.paths.model.clone());
            let scores = scores.unwrap_or_else(|| {
                let mut s = out.clone().into_os_string();
                s.push(".scores.csv");
                PathBuf::from(s)
            });
            let summary = commands::predict(&config, &model, &cloud, &out, &scores, workers)?;
            let rate = summary.points as f64 / summary.seconds.max(1e-9);
            println!(
                "predicted {} points ({} peduncle) in {:.3} s with {workers} worker(s): {rate:.0} points/s",
                summary.points, summary.positives, summary.seconds
            );
        }
        Command::Evaluate {
            model,
            manifest,
            report_dir,
        } => {
            let model = model.unwrap_or_else(|| config.paths.model.clone());
            let report_dir = report_dir.unwrap_or_else(|| config.paths.reports.clone());
            let evaluation = commands::evaluate(&config, &model, &manifest, &report_dir, workers)?;
            for r in &evaluation.reports {
                println!(
                    "{:<24} auc {:.4}  ({} positive, {} negative)",
                    r.slice.to_string(),
                    r.auc,
                    r.positives,
                    r.negatives
                );
            }
            for s in &evaluation.skipped {
                println!("{:<24} skipped: single class", s.slice.to_string());
            }
            println!("reports: {}", report_dir.display());
        }
        Command::Sweep {
            manifest,
            validation,
            grid,
            report,
        } => {
            let entries = commands::sweep(
                &config,
                &manifest,
                validation.as_deref(),
                &grid,
                &report,
                cli.seed.unwrap_or(0),
                workers,
            )?;
            if let Some(best) = entries.first() {
                println!(
                    "best: {} gamma={} C={} features={} auc={:.4}",
                    best.config.kernel.name(),
                    best.config.kernel.gamma().map_or("-".into(), |g| g.to_string()),
                    best.config.c,
                    best.config.feature_set.as_str(),
                    best.auc.unwrap_or(f64::NAN)
                );
            }
            println!("ranking: {}", report.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
