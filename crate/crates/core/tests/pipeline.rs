use std::path::Path;

use peduncle::cloud_io::{write_cloud, DatasetManifest, ManifestEntry, PepperColour};
use peduncle::eval::{evaluate, sweep_features, SliceTag};
use peduncle::features::{FeatureMatrix, FeatureSet};
use peduncle::learn::{train_svm, KernelSpec, TrainConfig};
use peduncle::pipeline::{pooled_features, PipelineConfig};
use peduncle::synth::{generate_scene, SceneSpec};

fn scenes(dir: &Path, colour: PepperColour, seeds: &[u64], points: usize) -> DatasetManifest {
    let entries = seeds
        .iter()
        .map(|&seed| {
            let spec = SceneSpec {
                seed,
                points_body: points,
                points_peduncle: points / 5,
                ..SceneSpec::for_colour(colour)
            };
            let name = format!("{colour}_{seed}.cloud");
            write_cloud(&generate_scene(&spec).unwrap(), dir.join(&name)).unwrap();
            ManifestEntry {
                path: name.into(),
                scene_id: format!("{colour}_{seed}"),
                trip: 1,
                colour,
            }
        })
        .collect();
    DatasetManifest {
        entries,
        base_dir: dir.to_path_buf(),
    }
}

fn config() -> PipelineConfig {
    PipelineConfig {
        train: TrainConfig {
            max_rows: Some(800),
            ..TrainConfig::default()
        },
        ..PipelineConfig::default()
    }
}

fn features(manifest: &DatasetManifest) -> FeatureMatrix {
    pooled_features(manifest, &config()).unwrap()
}

#[test]
fn grid_head_has_the_best_auc() {
    let dir = tempfile::tempdir().unwrap();
    let train = features(&scenes(dir.path(), PepperColour::Mixed, &[1, 2], 2000));
    let valid = features(&scenes(dir.path(), PepperColour::Mixed, &[3], 2000));
    let mut grid = Vec::new();
    for gamma in [1e-3, 1e-2, 1e-1, 1.0] {
        for c in [1.0, 10.0, 100.0, 1000.0] {
            grid.push(TrainConfig {
                kernel: KernelSpec::Rbf { gamma },
                c,
                ..config().train
            });
        }
    }
    let ranked = sweep_features(&train, &grid, &valid, 2).unwrap();
    assert_eq!(ranked.len(), 16);
    let best = ranked.iter().filter_map(|e| e.auc).fold(f64::MIN, f64::max);
    assert_eq!(ranked[0].auc, Some(best));
    let mut indices: Vec<usize> = ranked.iter().map(|e| e.grid_index).collect();
    indices.sort_unstable();
    assert_eq!(indices, (0..16).collect::<Vec<_>>());

    let one = sweep_features(&train, &grid[5..6], &valid, 1).unwrap();
    assert_eq!(one[0].config, grid[5]);
}

#[test]
fn pfh_lifts_green_detection() {
    let dir = tempfile::tempdir().unwrap();
    let train = features(&scenes(dir.path(), PepperColour::Green, &[7, 8], 2500));
    let valid = features(&scenes(dir.path(), PepperColour::Green, &[9], 2500));
    let base = config().train;
    let grid = [
        TrainConfig {
            feature_set: FeatureSet::Hsv,
            ..base.clone()
        },
        TrainConfig {
            feature_set: FeatureSet::Full,
            ..base
        },
    ];
    let ranked = sweep_features(&train, &grid, &valid, 1).unwrap();
    assert_eq!(ranked[0].config.feature_set, FeatureSet::Full);
    assert!(ranked[0].auc.unwrap() > ranked[1].auc.unwrap());
}

#[test]
fn identical_scenes_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let train = scenes(dir.path(), PepperColour::Red, &[11], 1500);
    let model = train_svm(&features(&train), &config().train).unwrap();

    let mut test = scenes(dir.path(), PepperColour::Red, &[12], 1500);
    let mut twin = test.entries[0].clone();
    std::fs::copy(dir.path().join(&twin.path), dir.path().join("twin.cloud")).unwrap();
    twin.path = "twin.cloud".into();
    twin.scene_id = "twin".into();
    test.entries.push(twin);

    let ev = evaluate(&model, &test, &config(), 2).unwrap();
    let a = ev.slice(&SliceTag::Scene("red_12".into())).unwrap();
    let b = ev.slice(&SliceTag::Scene("twin".into())).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.auc, b.auc);
    assert!(ev.overall().unwrap().auc >= 0.95);
    assert!(ev.slice(&SliceTag::Colour(PepperColour::Red)).is_some());
    assert!(ev.slice(&SliceTag::Trip(1)).is_some());
}
