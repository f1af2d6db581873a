//! Labelled point clouds and dataset manifests in a small ASCII format.
//!
//! Cloud files look like this:
//!
//! ```text
//! # optional comment lines
//! FRAME_ID scan_07
//! FIELDS x y z r g b label
//! POINTS 2
//! 0.01 0.02 0.5 255 0 0 0
//! 0.02 0.02 0.5 30 200 10 1
//! ```
//!
//! `FRAME_ID` is optional. The colour may also be given as a single packed
//! `rgb` field (a float whose 32-bit pattern is `0x00RRGGBB`). A label of
//! `-1` marks an unlabelled point inside a labelled file.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cloud has no points")]
    Empty,
    #[error("line {line}: duplicate manifest path {path}")]
    DuplicatePath { line: usize, path: String },
}

impl CloudError {
    fn parse(line: usize, msg: impl Into<String>) -> Self {
        CloudError::Parse {
            line,
            msg: msg.into(),
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CloudError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// 8-bit RGB colour as delivered by the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ColourRgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl ColourRgb {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }

    /// Decode a PCL-style packed colour (`0x00RRGGBB` stored in a float).
    pub fn from_packed(bits: u32) -> Self {
        Self {
            r: ((bits >> 16) & 0xff) as u8,
            g: ((bits >> 8) & 0xff) as u8,
            b: (bits & 0xff) as u8,
        }
    }

    pub fn packed(self) -> u32 {
        (u32::from(self.r) << 16) | (u32::from(self.g) << 8) | u32::from(self.b)
    }
}

/// Ground-truth or predicted class of a point. Peduncle is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum PointLabel {
    Pepper,
    Peduncle,
    #[default]
    Unlabelled,
}

impl PointLabel {
    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(PointLabel::Pepper),
            1 => Some(PointLabel::Peduncle),
            -1 => Some(PointLabel::Unlabelled),
            _ => None,
        }
    }

    pub fn code(self) -> i8 {
        match self {
            PointLabel::Pepper => 0,
            PointLabel::Peduncle => 1,
            PointLabel::Unlabelled => -1,
        }
    }

    pub fn is_labelled(self) -> bool {
        self != PointLabel::Unlabelled
    }

    pub fn is_positive(self) -> bool {
        self == PointLabel::Peduncle
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloudPoint {
    pub position: Point3<f64>,
    pub colour: ColourRgb,
    pub label: PointLabel,
}

impl CloudPoint {
    pub fn new(position: Point3<f64>, colour: ColourRgb, label: PointLabel) -> Self {
        Self {
            position,
            colour,
            label,
        }
    }
}

/// Index-addressable coloured cloud. Point order is significant and preserved
/// by every reader and writer in this crate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
    pub frame_id: String,
}

impl PointCloud {
    pub fn new(points: Vec<CloudPoint>) -> Self {
        Self {
            points,
            frame_id: String::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Point3<f64>> {
        self.points.iter().map(|p| p.position).collect()
    }

    pub fn labels(&self) -> Vec<PointLabel> {
        self.points.iter().map(|p| p.label).collect()
    }

    pub fn count_label(&self, label: PointLabel) -> usize {
        self.points.iter().filter(|p| p.label == label).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    X,
    Y,
    Z,
    R,
    G,
    B,
    PackedRgb,
    Label,
}

struct Header {
    fields: Vec<Field>,
    points: usize,
    frame_id: String,
}

fn parse_fields(line: usize, names: &[&str]) -> Result<Vec<Field>, CloudError> {
    let fields = names
        .iter()
        .map(|name| match *name {
            "x" => Ok(Field::X),
            "y" => Ok(Field::Y),
            "z" => Ok(Field::Z),
            "r" => Ok(Field::R),
            "g" => Ok(Field::G),
            "b" => Ok(Field::B),
            "rgb" => Ok(Field::PackedRgb),
            "label" => Ok(Field::Label),
            other => Err(CloudError::parse(line, format!("unknown field `{other}`"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let planar = [Field::X, Field::Y, Field::Z, Field::R, Field::G, Field::B];
    let packed = [Field::X, Field::Y, Field::Z, Field::PackedRgb];
    let base = if fields.last() == Some(&Field::Label) {
        &fields[..fields.len() - 1]
    } else {
        &fields[..]
    };
    if base != planar && base != packed {
        return Err(CloudError::parse(
            line,
            "FIELDS must be `x y z r g b [label]` or `x y z rgb [label]`",
        ));
    }
    Ok(fields)
}

fn parse_value<T: FromStr>(line: usize, token: &str, what: &str) -> Result<T, CloudError> {
    token
        .parse::<T>()
        .map_err(|_| CloudError::parse(line, format!("non-numeric {what} `{token}`")))
}

fn parse_channel(line: usize, token: &str, name: &str) -> Result<u8, CloudError> {
    let value: i64 = parse_value(line, token, name)?;
    u8::try_from(value).map_err(|_| {
        CloudError::parse(
            line,
            format!("channel {name}={value} out of range [0, 255]"),
        )
    })
}

fn parse_coord(line: usize, token: &str, name: &str) -> Result<f64, CloudError> {
    let value: f64 = parse_value(line, token, name)?;
    if !value.is_finite() {
        return Err(CloudError::parse(line, format!("non-finite {name} `{token}`")));
    }
    Ok(value)
}

fn parse_row(line: usize, fields: &[Field], tokens: &[&str]) -> Result<CloudPoint, CloudError> {
    if tokens.len() != fields.len() {
        return Err(CloudError::parse(
            line,
            format!("expected {} values, found {}", fields.len(), tokens.len()),
        ));
    }
    let mut xyz = [0.0; 3];
    let mut rgb = [0u8; 3];
    let mut label = PointLabel::Unlabelled;
    for (field, token) in fields.iter().zip(tokens) {
        match field {
            Field::X => xyz[0] = parse_coord(line, token, "x")?,
            Field::Y => xyz[1] = parse_coord(line, token, "y")?,
            Field::Z => xyz[2] = parse_coord(line, token, "z")?,
            Field::R => rgb[0] = parse_channel(line, token, "r")?,
            Field::G => rgb[1] = parse_channel(line, token, "g")?,
            Field::B => rgb[2] = parse_channel(line, token, "b")?,
            Field::PackedRgb => {
                let packed: f32 = parse_value(line, token, "rgb")?;
                let c = ColourRgb::from_packed(packed.to_bits());
                rgb = [c.r, c.g, c.b];
            }
            Field::Label => {
                let code: i64 = parse_value(line, token, "label")?;
                label = PointLabel::from_code(code).ok_or_else(|| {
                    CloudError::parse(line, format!("label {code} is not 0, 1 or -1"))
                })?;
            }
        }
    }
    Ok(CloudPoint::new(
        Point3::new(xyz[0], xyz[1], xyz[2]),
        ColourRgb::new(rgb[0], rgb[1], rgb[2]),
        label,
    ))
}

/// Parse the text of a cloud file. Line numbers in errors are 1-based.
pub fn parse_cloud(text: &str) -> Result<PointCloud, CloudError> {
    let mut fields: Option<Vec<Field>> = None;
    let mut frame_id = String::new();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut last_line = 0;

    let header = loop {
        let Some((no, raw)) = lines.next() else {
            return Err(CloudError::parse(last_line + 1, "missing FIELDS/POINTS header"));
        };
        last_line = no;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("FRAME_ID") => frame_id = tokens.collect::<Vec<_>>().join(" "),
            Some("FIELDS") => {
                let names: Vec<&str> = tokens.collect();
                fields = Some(parse_fields(no, &names)?);
            }
            Some("POINTS") => {
                let n = tokens
                    .next()
                    .ok_or_else(|| CloudError::parse(no, "POINTS needs a count"))?;
                let count: usize = parse_value(no, n, "point count")?;
                if tokens.next().is_some() {
                    return Err(CloudError::parse(no, "trailing tokens after POINTS"));
                }
                let fields = fields
                    .take()
                    .ok_or_else(|| CloudError::parse(no, "POINTS before FIELDS"))?;
                break Header {
                    fields,
                    points: count,
                    frame_id: std::mem::take(&mut frame_id),
                };
            }
            Some(other) => {
                return Err(CloudError::parse(no, format!("unexpected header line `{other}`")))
            }
            None => unreachable!("blank lines are skipped"),
        }
    };

    if header.points == 0 {
        return Err(CloudError::parse(last_line, "zero points declared"));
    }

    let mut points = Vec::with_capacity(header.points);
    for (no, raw) in lines {
        last_line = no;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if points.len() == header.points {
            return Err(CloudError::parse(
                no,
                format!("more data rows than the declared {}", header.points),
            ));
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        points.push(parse_row(no, &header.fields, &tokens)?);
    }
    if points.len() != header.points {
        return Err(CloudError::parse(
            last_line,
            format!(
                "declared {} points but found {} rows",
                header.points,
                points.len()
            ),
        ));
    }
    Ok(PointCloud {
        points,
        frame_id: header.frame_id,
    })
}

pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud, CloudError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CloudError::io(path, e))?;
    parse_cloud(&text)
}

/// Serialize a cloud. Coordinates use the shortest representation that parses
/// back to the same `f64`, so a write/read cycle is lossless.
pub fn format_cloud(cloud: &PointCloud) -> Result<String, CloudError> {
    if cloud.is_empty() {
        return Err(CloudError::Empty);
    }
    use std::fmt::Write as _;
    let labelled = cloud.points.iter().any(|p| p.label.is_labelled());
    let mut out = String::with_capacity(cloud.len() * 48 + 64);
    if !cloud.frame_id.is_empty() {
        writeln!(out, "FRAME_ID {}", cloud.frame_id).unwrap();
    }
    out.push_str(if labelled {
        "FIELDS x y z r g b label\n"
    } else {
        "FIELDS x y z r g b\n"
    });
    writeln!(out, "POINTS {}", cloud.len()).unwrap();
    for p in &cloud.points {
        let c = p.colour;
        write!(
            out,
            "{} {} {} {} {} {}",
            p.position.x, p.position.y, p.position.z, c.r, c.g, c.b
        )
        .unwrap();
        if labelled {
            write!(out, " {}", p.label.code()).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<(), CloudError> {
    let path = path.as_ref();
    let text = format_cloud(cloud)?;
    let file = fs::File::create(path).map_err(|e| CloudError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| CloudError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PepperColour {
    Red,
    Green,
    Mixed,
}

impl PepperColour {
    pub fn as_str(self) -> &'static str {
        match self {
            PepperColour::Red => "red",
            PepperColour::Green => "green",
            PepperColour::Mixed => "mixed",
        }
    }
}

impl fmt::Display for PepperColour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PepperColour {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "red" => Ok(PepperColour::Red),
            "green" => Ok(PepperColour::Green),
            "mixed" => Ok(PepperColour::Mixed),
            other => Err(format!("unknown colour tag `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub scene_id: String,
    pub trip: u32,
    pub colour: PepperColour,
}

/// Scene list with field-trip and pepper-colour tags.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory that relative entry paths are resolved against.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    pub fn with_entries(&self, entries: Vec<ManifestEntry>) -> Self {
        Self {
            entries,
            base_dir: self.base_dir.clone(),
        }
    }
}

pub fn parse_manifest(text: &str) -> Result<DatasetManifest, CloudError> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(CloudError::parse(
                no,
                format!("expected `path,scene_id,trip,colour`, found {} columns", cols.len()),
            ));
        }
        if cols[0].is_empty() {
            return Err(CloudError::parse(no, "empty path"));
        }
        let trip: u32 = parse_value(no, cols[2], "trip")?;
        if trip == 0 {
            return Err(CloudError::parse(no, "trip must be a positive integer"));
        }
        let colour = cols[3].parse().map_err(|e: String| CloudError::parse(no, e))?;
        if !seen.insert(cols[0].to_string()) {
            return Err(CloudError::DuplicatePath {
                line: no,
                path: cols[0].to_string(),
            });
        }
        entries.push(ManifestEntry {
            path: PathBuf::from(cols[0]),
            scene_id: cols[1].to_string(),
            trip,
            colour,
        });
    }
    Ok(DatasetManifest {
        entries,
        base_dir: PathBuf::new(),
    })
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, CloudError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CloudError::io(path, e))?;
    let mut manifest = parse_manifest(&text)?;
    manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(manifest)
}

pub fn format_manifest(manifest: &DatasetManifest) -> String {
    manifest
        .entries
        .iter()
        .map(|e| {
            format!(
                "{},{},{},{}\n",
                e.path.display(),
                e.scene_id,
                e.trip,
                e.colour
            )
        })
        .collect()
}

pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<(), CloudError> {
    let path = path.as_ref();
    fs::write(path, format_manifest(manifest)).map_err(|e| CloudError::io(path, e))
}
