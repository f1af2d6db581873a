use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use peduncle::cloud_io::{read_cloud, read_manifest, write_cloud, write_manifest, DatasetManifest, ManifestEntry};
use peduncle::eval::{self, split_dataset, write_sweep_csv, SplitSpec, Stratify};
use peduncle::learn::{predict_parallel, train_svm, SvmModel};
use peduncle::pipeline::{pooled_features, process_cloud, PipelineConfig};
use peduncle::synth::{generate_scene, SceneSpec};

use crate::error::CliError;
use crate::files::{load_scene_batch, parse_grid};

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn create_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| io_err(path, e))
}

fn load_manifest(path: &Path) -> Result<DatasetManifest, CliError> {
    let manifest = read_manifest(path)?;
    if manifest.is_empty() {
        return Err(CliError::Usage(format!("{}: manifest has no entries", path.display())));
    }
    Ok(manifest)
}

/// Write `count` scenes and a manifest listing them into `out_dir`.
pub fn synth(spec_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<PathBuf, CliError> {
    let batch = load_scene_batch(spec_path)?;
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let first_seed = seed.unwrap_or(batch.scene.seed);
    let mut entries = Vec::with_capacity(batch.count);
    for i in 0..batch.count {
        let spec = SceneSpec {
            seed: first_seed + i as u64,
            ..batch.scene.clone()
        };
        let cloud = generate_scene(&spec)?;
        let scene_id = format!("{}_{:04}", batch.colour, spec.seed);
        let name = format!("{scene_id}.cloud");
        write_cloud(&cloud, out_dir.join(&name))?;
        entries.push(ManifestEntry {
            path: name.into(),
            scene_id,
            trip: batch.trip,
            colour: batch.colour,
        });
    }
    let manifest_path = out_dir.join("manifest.csv");
    let manifest = DatasetManifest {
        entries,
        base_dir: out_dir.to_path_buf(),
    };
    write_manifest(&manifest, &manifest_path)?;
    log::info!("wrote {} scenes to {}", batch.count, out_dir.display());
    Ok(manifest_path)
}

pub fn train(config: &PipelineConfig, manifest_path: &Path, model_out: &Path) -> Result<SvmModel, CliError> {
    let manifest = load_manifest(manifest_path)?;
    let start = Instant::now();
    let rows = pooled_features(&manifest, config)?;
    log::info!("pooled {} feature rows from {} scenes in {:.2?}", rows.len(), manifest.len(), start.elapsed());
    let t = Instant::now();
    let model = train_svm(&rows, &config.train)?;
    log::info!(
        "trained on {} rows: {} support vectors, {} iterations in {:.2?}",
        model.meta.training_rows,
        model.support_vectors.len(),
        model.meta.iterations,
        t.elapsed()
    );
    if !model.meta.converged {
        log::warn!("solver stopped before reaching tolerance {}", config.train.tolerance);
    }
    if let Some(parent) = model_out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    model.save(model_out)?;
    Ok(model)
}

pub struct PredictSummary {
    pub points: usize,
    pub positives: usize,
    pub seconds: f64,
}

/// Classify one cloud. Writes the processed cloud with predicted labels to
/// `out_path` and `index,x,y,z,score,label` rows to `scores_path`.
pub fn predict(
    config: &PipelineConfig,
    model_path: &Path,
    cloud_path: &Path,
    out_path: &Path,
    scores_path: &Path,
    workers: usize,
) -> Result<PredictSummary, CliError> {
    let model = SvmModel::load(model_path)?;
    let cloud = read_cloud(cloud_path)?;
    let scene = process_cloud(&cloud, config)?;
    let prediction = predict_parallel(&model, &scene.features, workers)?;

    let mut labelled = scene.cloud.clone();
    for (p, &label) in labelled.points.iter_mut().zip(&prediction.labels) {
        p.label = label;
    }
    if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    write_cloud(&labelled, out_path)?;

    let mut w = create_file(scores_path)?;
    let write = |w: &mut std::io::BufWriter<std::fs::File>| -> std::io::Result<()> {
        writeln!(w, "index,x,y,z,score,label")?;
        for (i, p) in labelled.points.iter().enumerate() {
            let q = p.position;
            writeln!(w, "{i},{},{},{},{},{}", q.x, q.y, q.z, prediction.scores[i], p.label.code())?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| io_err(scores_path, e))?;

    Ok(PredictSummary {
        points: labelled.len(),
        positives: prediction.labels.iter().filter(|l| l.is_positive()).count(),
        seconds: prediction.elapsed.as_secs_f64(),
    })
}

pub fn evaluate(
    config: &PipelineConfig,
    model_path: &Path,
    manifest_path: &Path,
    report_dir: &Path,
    workers: usize,
) -> Result<eval::Evaluation, CliError> {
    let model = SvmModel::load(model_path)?;
    let manifest = load_manifest(manifest_path)?;
    let evaluation = eval::evaluate(&model, &manifest, config, workers)?;
    let description = format!(
        "model {} on {} ({} scenes), point-pooled scores",
        model_path.display(),
        manifest_path.display(),
        manifest.len()
    );
    evaluation.write_to_dir(report_dir, &description)?;
    Ok(evaluation)
}

/// Rank grid configs by validation AUC. Without a validation manifest the
/// input manifest is split in half with `split_seed`.
pub fn sweep(
    config: &PipelineConfig,
    manifest_path: &Path,
    validation_path: Option<&Path>,
    grid_path: &Path,
    report_path: &Path,
    split_seed: u64,
    workers: usize,
) -> Result<Vec<eval::SweepEntry>, CliError> {
    let grid_text = std::fs::read_to_string(grid_path).map_err(|e| io_err(grid_path, e))?;
    let (grid, bad) = parse_grid(&grid_text, &config.train);
    for (line, msg) in &bad {
        log::warn!("{}:{line}: skipping grid row: {msg}", grid_path.display());
    }
    if grid.is_empty() {
        return Err(CliError::Usage(format!("{}: no usable grid rows", grid_path.display())));
    }

    let manifest = load_manifest(manifest_path)?;
    let (train, validation) = match validation_path {
        Some(p) => (manifest, load_manifest(p)?),
        None => split_dataset(
            &manifest,
            &SplitSpec {
                train_fraction: 0.5,
                seed: split_seed,
                stratify_by: Stratify::None,
            },
        )?,
    };
    let entries = eval::sweep(&train, &grid, &validation, config, workers)?;

    let mut w = create_file(report_path)?;
    write_sweep_csv(&entries, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| io_err(report_path, e))?;
    if entries.iter().all(|e| e.auc.is_none()) {
        return Err(CliError::Failed("every grid config failed to train or evaluate".into()));
    }
    Ok(entries)
}
