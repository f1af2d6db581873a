//! Parsing for the CLI's own input files: pipeline config, scene batch file
//! and sweep grid.

use std::path::Path;

use serde::Deserialize;

use peduncle::cloud_io::PepperColour;
use peduncle::features::FeatureSet;
use peduncle::learn::{KernelSpec, TrainConfig};
use peduncle::pipeline::PipelineConfig;
use peduncle::synth::SceneSpec;

use crate::error::CliError;

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    let config = match path {
        None => PipelineConfig::default(),
        Some(p) => parse_config(&read_text(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
    };
    config.validate()?;
    Ok(config)
}

pub fn parse_config(text: &str) -> Result<PipelineConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

/// A batch of synthetic scenes: `count` scenes sharing trip and colour tags,
/// with scene parameters layered over the colour's defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBatch {
    pub count: usize,
    pub trip: u32,
    pub colour: PepperColour,
    pub scene: SceneSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneBatchFile {
    count: usize,
    #[serde(default = "one")]
    trip: u32,
    colour: PepperColour,
    #[serde(default)]
    scene: toml::Table,
}

fn one() -> u32 {
    1
}

pub fn parse_scene_batch(text: &str) -> Result<SceneBatch, String> {
    let file: SceneBatchFile = toml::from_str(text).map_err(|e| e.to_string())?;
    if file.count == 0 {
        return Err("count must be > 0".into());
    }
    if file.trip == 0 {
        return Err("trip must be > 0".into());
    }
    let mut merged = toml::Value::try_from(SceneSpec::for_colour(file.colour)).map_err(|e| e.to_string())?;
    if let Some(table) = merged.as_table_mut() {
        table.extend(file.scene);
    }
    let scene: SceneSpec = merged.try_into().map_err(|e: toml::de::Error| format!("[scene]: {e}"))?;
    scene.validate().map_err(|e| e.to_string())?;
    Ok(SceneBatch {
        count: file.count,
        trip: file.trip,
        colour: file.colour,
        scene,
    })
}

pub fn load_scene_batch(path: &Path) -> Result<SceneBatch, CliError> {
    parse_scene_batch(&read_text(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Grid rows `kernel,gamma,c[,features]` layered over `base`. A header row
/// starting with `kernel` and `#` comments are ignored; malformed rows are
/// returned as `(line, message)` instead of failing the whole grid.
pub fn parse_grid(text: &str, base: &TrainConfig) -> (Vec<TrainConfig>, Vec<(usize, String)>) {
    let mut configs = Vec::new();
    let mut bad = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("kernel") {
            continue;
        }
        match parse_grid_row(line, base) {
            Ok(c) => configs.push(c),
            Err(e) => bad.push((i + 1, e)),
        }
    }
    (configs, bad)
}

fn parse_grid_row(line: &str, base: &TrainConfig) -> Result<TrainConfig, String> {
    let cols: Vec<&str> = line.split(',').map(str::trim).collect();
    if !(3..=4).contains(&cols.len()) {
        return Err(format!("expected 3 or 4 columns, found {}", cols.len()));
    }
    let kernel = match cols[0] {
        "linear" => KernelSpec::Linear,
        "rbf" => {
            let gamma: f64 = cols[1].parse().map_err(|_| format!("bad gamma `{}`", cols[1]))?;
            KernelSpec::Rbf { gamma }
        }
        other => return Err(format!("unknown kernel `{other}`")),
    };
    let c: f64 = cols[2].parse().map_err(|_| format!("bad C `{}`", cols[2]))?;
    let feature_set = match cols.get(3) {
        Some(s) if !s.is_empty() => s.parse::<FeatureSet>()?,
        _ => base.feature_set,
    };
    let config = TrainConfig {
        kernel,
        c,
        feature_set,
        ..base.clone()
    };
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}
