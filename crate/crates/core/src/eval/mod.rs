//! Splits, precision-recall curves, sliced evaluation and parameter sweeps.

mod pr;
mod split;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

pub use pr::{auc, auc_with, pr_curve, AucMethod, PrCurve};
pub use split::{split_dataset, SplitSpec, Stratify};

use crate::cloud_io::{DatasetManifest, ManifestEntry, PepperColour, PointLabel};
use crate::features::FeatureMatrix;
use crate::learn::{predict_parallel, train_svm, LearnError, SvmModel, TrainConfig};
use crate::pipeline::{pooled_features, process_entry, PipelineConfig, PipelineError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("scores ({scores}) and labels ({labels}) differ in length")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("single class: {positives} positives, {negatives} negatives")]
    SingleClass { positives: usize, negatives: usize },
    #[error("score is NaN")]
    NanScore,
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("empty stratum: {0}")]
    EmptyStratum(String),
    #[error("empty manifest")]
    EmptyManifest,
    #[error("empty parameter grid")]
    EmptyGrid,
    #[error("no slice had both classes")]
    NoReports,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("report json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum SliceTag {
    Overall,
    Trip(u32),
    Colour(PepperColour),
    Scene(String),
}

impl SliceTag {
    /// Name safe to use as a file stem.
    pub fn file_stem(&self) -> String {
        match self {
            SliceTag::Overall => "overall".into(),
            SliceTag::Trip(t) => format!("trip_{t}"),
            SliceTag::Colour(c) => format!("colour_{c}"),
            SliceTag::Scene(id) => {
                let clean: String = id
                    .chars()
                    .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
                    .collect();
                format!("scene_{clean}")
            }
        }
    }
}

impl fmt::Display for SliceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SliceTag::Overall => f.write_str("overall"),
            SliceTag::Trip(t) => write!(f, "trip:{t}"),
            SliceTag::Colour(c) => write!(f, "colour:{c}"),
            SliceTag::Scene(id) => write!(f, "scene:{id}"),
        }
    }
}

impl Serialize for SliceTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub slice: SliceTag,
    pub auc: f64,
    pub curve: PrCurve,
    pub positives: usize,
    pub negatives: usize,
}

impl EvalReport {
    pub fn from_scores(slice: SliceTag, scores: &[f64], labels: &[PointLabel]) -> Result<Self, EvalError> {
        let curve = pr_curve(scores, labels)?;
        let positives = labels.iter().filter(|l| l.is_positive()).count();
        let negatives = labels.iter().filter(|l| l.is_labelled()).count() - positives;
        Ok(Self {
            slice,
            auc: auc(&curve),
            curve,
            positives,
            negatives,
        })
    }

    /// `threshold,recall,precision`; the anchor row has threshold `inf`.
    pub fn write_curve_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "threshold,recall,precision")?;
        for (t, (r, p)) in self.curve.thresholds.iter().zip(&self.curve.points) {
            writeln!(out, "{t},{r},{p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedSlice {
    pub slice: SliceTag,
    pub positives: usize,
    pub negatives: usize,
}

/// Per-point scores of one scene, kept with its manifest tags.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredScene {
    pub entry: ManifestEntry,
    pub scores: Vec<f64>,
    pub labels: Vec<PointLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub reports: Vec<EvalReport>,
    pub skipped: Vec<SkippedSlice>,
}

impl Evaluation {
    pub fn overall(&self) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.slice == SliceTag::Overall)
    }

    pub fn slice(&self, tag: &SliceTag) -> Option<&EvalReport> {
        self.reports.iter().find(|r| &r.slice == tag)
    }

    /// `summary.json` plus one `pr_<slice>.csv` per report.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>, description: &str) -> Result<(), EvalError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| EvalError::Io(dir.to_path_buf(), e))?;

        #[derive(Serialize)]
        struct SliceSummary<'a> {
            slice: &'a SliceTag,
            auc: f64,
            positives: usize,
            negatives: usize,
            curve_csv: String,
        }
        #[derive(Serialize)]
        struct Summary<'a> {
            description: &'a str,
            auc_method: AucMethod,
            reports: Vec<SliceSummary<'a>>,
            skipped: &'a [SkippedSlice],
        }

        let mut slices = Vec::with_capacity(self.reports.len());
        for report in &self.reports {
            let name = format!("pr_{}.csv", report.slice.file_stem());
            let path = dir.join(&name);
            let write = || -> std::io::Result<()> {
                let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
                report.write_curve_csv(&mut w)?;
                w.flush()
            };
            write().map_err(|e| EvalError::Io(path.clone(), e))?;
            slices.push(SliceSummary {
                slice: &report.slice,
                auc: report.auc,
                positives: report.positives,
                negatives: report.negatives,
                curve_csv: name,
            });
        }
        let summary = Summary {
            description,
            auc_method: AucMethod::Trapezoid,
            reports: slices,
            skipped: &self.skipped,
        };
        let path = dir.join("summary.json");
        let text = serde_json::to_string_pretty(&summary)?;
        std::fs::write(&path, text + "\n").map_err(|e| EvalError::Io(path, e))?;
        Ok(())
    }
}

/// Pool scores over scenes and report the overall, per-trip, per-colour and
/// per-scene slices. Slices lacking either class are listed as skipped.
pub fn evaluate_scored(scenes: &[ScoredScene]) -> Result<Evaluation, EvalError> {
    let mut groups: Vec<(SliceTag, Vec<usize>)> = vec![(SliceTag::Overall, (0..scenes.len()).collect())];
    let mut trips: Vec<u32> = scenes.iter().map(|s| s.entry.trip).collect();
    trips.sort_unstable();
    trips.dedup();
    for t in trips {
        let members = (0..scenes.len()).filter(|&i| scenes[i].entry.trip == t).collect();
        groups.push((SliceTag::Trip(t), members));
    }
    let mut colours: Vec<PepperColour> = scenes.iter().map(|s| s.entry.colour).collect();
    colours.sort_unstable();
    colours.dedup();
    for c in colours {
        let members = (0..scenes.len()).filter(|&i| scenes[i].entry.colour == c).collect();
        groups.push((SliceTag::Colour(c), members));
    }
    for (i, s) in scenes.iter().enumerate() {
        groups.push((SliceTag::Scene(s.entry.scene_id.clone()), vec![i]));
    }

    let mut out = Evaluation {
        reports: Vec::new(),
        skipped: Vec::new(),
    };
    for (tag, members) in groups {
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for &i in &members {
            scores.extend_from_slice(&scenes[i].scores);
            labels.extend_from_slice(&scenes[i].labels);
        }
        match EvalReport::from_scores(tag.clone(), &scores, &labels) {
            Ok(r) => out.reports.push(r),
            Err(EvalError::SingleClass { positives, negatives }) => {
                log::warn!("skipping slice {tag}: {positives} positives, {negatives} negatives");
                out.skipped.push(SkippedSlice {
                    slice: tag,
                    positives,
                    negatives,
                });
            }
            Err(e) => return Err(e),
        }
    }
    if out.reports.is_empty() {
        return Err(EvalError::NoReports);
    }
    Ok(out)
}

/// Run the pipeline on every test scene, score with `model`, and report.
pub fn evaluate(
    model: &SvmModel,
    test: &DatasetManifest,
    pipeline: &PipelineConfig,
    workers: usize,
) -> Result<Evaluation, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyManifest);
    }
    model.validate()?;
    let mut scenes = Vec::with_capacity(test.len());
    for entry in &test.entries {
        let processed = process_entry(test, entry, pipeline)?;
        let prediction = predict_parallel(model, &processed.features, workers)?;
        scenes.push(ScoredScene {
            entry: entry.clone(),
            scores: prediction.scores,
            labels: processed.features.labels,
        });
    }
    evaluate_scored(&scenes)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub grid_index: usize,
    pub config: TrainConfig,
    pub auc: Option<f64>,
    pub error: Option<String>,
}

/// Train once per grid config and score validation AUC. Successful configs
/// come first by AUC descending, ties in grid order; failures follow.
pub fn sweep_features(
    train: &FeatureMatrix,
    grid: &[TrainConfig],
    validation: &FeatureMatrix,
    workers: usize,
) -> Result<Vec<SweepEntry>, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let mut entries: Vec<SweepEntry> = grid
        .iter()
        .enumerate()
        .map(|(grid_index, config)| {
            let outcome = train_svm(train, config)
                .map_err(EvalError::from)
                .and_then(|model| Ok(predict_parallel(&model, validation, workers)?))
                .and_then(|p| pr_curve(&p.scores, &validation.labels))
                .map(|c| auc(&c));
            match &outcome {
                Ok(a) => log::info!(
                    "sweep {grid_index}: {} gamma={:?} C={} features={} auc={a:.4}",
                    config.kernel.name(),
                    config.kernel.gamma(),
                    config.c,
                    config.feature_set.as_str()
                ),
                Err(e) => log::warn!("sweep {grid_index}: failed: {e}"),
            }
            SweepEntry {
                grid_index,
                config: config.clone(),
                auc: outcome.as_ref().ok().copied(),
                error: outcome.err().map(|e| e.to_string()),
            }
        })
        .collect();
    entries.sort_by(|a, b| match (a.auc, b.auc) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(a.grid_index.cmp(&b.grid_index)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.grid_index.cmp(&b.grid_index),
    });
    Ok(entries)
}

pub fn sweep(
    train: &DatasetManifest,
    grid: &[TrainConfig],
    validation: &DatasetManifest,
    pipeline: &PipelineConfig,
    workers: usize,
) -> Result<Vec<SweepEntry>, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    if train.is_empty() || validation.is_empty() {
        return Err(EvalError::EmptyManifest);
    }
    let train_rows = pooled_features(train, pipeline)?;
    let validation_rows = pooled_features(validation, pipeline)?;
    sweep_features(&train_rows, grid, &validation_rows, workers)
}

/// Ranked `kernel,gamma,c,features,auc,error` rows.
pub fn write_sweep_csv(entries: &[SweepEntry], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "kernel,gamma,c,features,auc,error")?;
    for e in entries {
        let gamma = e.config.kernel.gamma().map(|g| g.to_string()).unwrap_or_default();
        let auc = e.auc.map(|a| a.to_string()).unwrap_or_default();
        let err = e.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(
            out,
            "{},{gamma},{},{},{auc},{err}",
            e.config.kernel.name(),
            e.config.c,
            e.config.feature_set.as_str()
        )?;
    }
    Ok(())
}
