//! Seeded scene sampling, bulk dataset generation and the PVF1 field format.
//!
//! PVF1 layout (little-endian):
//!
//! ```text
//! 0..4    magic "PVF1"
//! 4..16   u32 height, u32 width, u32 channels (= 4)
//! 16..    height·width mask bytes (0 or 1), row-major
//! ..      height·width·4 f32, row-major, [Re c0, Im c0, Re c2, Im c2]
//! ```

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point, Primitive, Scene};
use crate::groundtruth::{self, FieldParams, GroundTruthError};
use crate::polyvector::PolyVectorField;
use crate::raster::PixelMask;

pub const PVF_MAGIC: &[u8; 4] = b"PVF1";
pub const PVF_CHANNELS: u32 = 4;
const PVF_HEADER_LEN: usize = 16;
/// Scene redraws allowed before an index is declared unsatisfiable.
pub const MAX_SCENE_ATTEMPTS: usize = 20;
const MAX_BEZIER_DRAWS: usize = 1000;
/// Smallest allowed `|B'(t)|` on sampled Béziers; rejects cusps and tiny loops.
const MIN_BEZIER_SPEED: f64 = 1.0;

#[derive(Debug, Error)]
pub enum PvfError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },
}

fn format_error(offset: usize, reason: impl Into<String>) -> PvfError {
    PvfError::Format {
        offset,
        reason: reason.into(),
    }
}

/// Serializes a field to PVF1 bytes. Channels are narrowed to `f32`.
pub fn encode_field(field: &PolyVectorField) -> Vec<u8> {
    let n = field.width() as usize * field.height() as usize;
    let mut out = Vec::with_capacity(PVF_HEADER_LEN + n * 17);
    out.extend_from_slice(PVF_MAGIC);
    out.extend_from_slice(&field.height().to_le_bytes());
    out.extend_from_slice(&field.width().to_le_bytes());
    out.extend_from_slice(&PVF_CHANNELS.to_le_bytes());
    out.extend(field.mask().data().iter().map(|&m| u8::from(m)));
    for (px, &m) in field.data().iter().zip(field.mask().data()) {
        for &v in px {
            let v = if m { v as f32 } else { 0.0 };
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<PolyVectorField, PvfError> {
    if bytes.len() < 4 {
        return Err(format_error(bytes.len(), "truncated magic"));
    }
    if &bytes[..4] != PVF_MAGIC {
        return Err(format_error(0, "bad magic"));
    }
    if bytes.len() < PVF_HEADER_LEN {
        return Err(format_error(bytes.len(), "truncated header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let (height, width, channels) = (word(4), word(8), word(12));
    if channels != PVF_CHANNELS {
        return Err(format_error(12, format!("expected 4 channels, found {channels}")));
    }
    let sizes = (height as usize)
        .checked_mul(width as usize)
        .and_then(|n| n.checked_mul(4 * 4 + 1).map(|payload| (n, payload)))
        .and_then(|(n, payload)| payload.checked_add(PVF_HEADER_LEN).map(|total| (n, total)));
    let (n, total) = sizes.ok_or_else(|| format_error(4, "dimensions overflow"))?;

    let mask_end = PVF_HEADER_LEN + n;
    if bytes.len() < mask_end {
        return Err(format_error(bytes.len(), "truncated mask"));
    }
    let mut mask = Vec::with_capacity(n);
    for (i, &b) in bytes[PVF_HEADER_LEN..mask_end].iter().enumerate() {
        match b {
            0 => mask.push(false),
            1 => mask.push(true),
            _ => return Err(format_error(PVF_HEADER_LEN + i, format!("mask byte {b}"))),
        }
    }
    if bytes.len() < total {
        return Err(format_error(bytes.len(), "truncated channel data"));
    }
    if bytes.len() > total {
        return Err(format_error(total, "trailing bytes"));
    }
    let mut data = Vec::with_capacity(n);
    for (k, chunk) in bytes[mask_end..total].chunks_exact(16).enumerate() {
        let mut px = [0.0; 4];
        for (c, v) in px.iter_mut().enumerate() {
            let raw = f32::from_le_bytes(chunk[4 * c..4 * c + 4].try_into().expect("4 bytes"));
            if mask[k] && !raw.is_finite() {
                return Err(format_error(mask_end + 16 * k + 4 * c, "non-finite channel"));
            }
            *v = f64::from(raw);
        }
        data.push(px);
    }
    let mask = PixelMask::from_data(width, height, mask).expect("length checked");
    Ok(PolyVectorField::from_parts(mask, data).expect("length checked"))
}

pub fn write_field(field: &PolyVectorField, path: &Path) -> Result<(), PvfError> {
    fs::write(path, encode_field(field))?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<PolyVectorField, PvfError> {
    decode_field(&fs::read(path)?)
}

/// The field as it reads back from PVF1: every channel rounded to `f32`.
pub fn quantize_field(field: &PolyVectorField) -> PolyVectorField {
    let data = field
        .data()
        .iter()
        .map(|px| px.map(|v| f64::from(v as f32)))
        .collect();
    PolyVectorField::from_parts(field.mask().clone(), data).expect("same dimensions")
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid sample spec: {0}")]
    InvalidSpec(String),
    #[error("record {index}: no valid scene after {attempts} attempts")]
    Generation { index: u64, attempts: usize },
    #[error("record {index}: {source}")]
    GroundTruth {
        index: u64,
        #[source]
        source: GroundTruthError,
    },
    #[error("record {index}: field has no defined pixels")]
    EmptyField { index: u64 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Pvf {
        path: PathBuf,
        #[source]
        source: PvfError,
    },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Relative frequencies of the three primitive families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeWeights {
    pub line: f64,
    pub arc: f64,
    pub bezier: f64,
}

impl Default for TypeWeights {
    fn default() -> Self {
        TypeWeights {
            line: 1.0,
            arc: 1.0,
            bezier: 1.0,
        }
    }
}

/// Scene distribution; the stroke width lives in `field`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleSpec {
    pub canvas: u32,
    pub primitives_min: usize,
    pub primitives_max: usize,
    pub type_weights: TypeWeights,
    /// Keeps every sampled point at least this far inside the canvas.
    pub margin: f64,
    pub field: FieldParams,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            canvas: 64,
            primitives_min: 2,
            primitives_max: 4,
            type_weights: TypeWeights::default(),
            margin: 4.0,
            field: FieldParams::default(),
        }
    }
}

impl SampleSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::InvalidSpec(m));
        if self.primitives_min < 1 || self.primitives_min > self.primitives_max {
            return bad("require 1 <= primitives_min <= primitives_max".into());
        }
        let w = self.type_weights;
        if [w.line, w.arc, w.bezier].iter().any(|&x| !(x >= 0.0 && x.is_finite()))
            || w.line + w.arc + w.bezier <= 0.0
        {
            return bad("type weights must be non-negative and not all zero".into());
        }
        let canvas = f64::from(self.canvas);
        if !(self.margin >= 0.0) || canvas - 2.0 * self.margin <= 0.0 {
            return bad(format!("margin {} leaves no room on a {} canvas", self.margin, self.canvas));
        }
        if w.arc > 0.0 && canvas / 2.0 - self.margin < MIN_ARC_RADIUS {
            return bad(format!("canvas {} too small for arcs", self.canvas));
        }
        self.field
            .validate()
            .or_else(|e| bad(e.to_string()))
    }
}

pub const MIN_ARC_RADIUS: f64 = 4.0;

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for record `index`, independent of every other record.
pub fn record_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ index))
}

/// Draws the scene for record `index`. Scenes where three or more curves
/// meet within the intersection tolerance are redrawn.
pub fn sample_scene(seed: u64, index: u64, spec: &SampleSpec) -> Result<Scene, DatasetError> {
    spec.validate()?;
    let mut rng = record_rng(seed, index);
    let tol = spec.field.intersection_tol;
    for _ in 0..MAX_SCENE_ATTEMPTS {
        let scene = draw_scene(&mut rng, spec).ok_or(DatasetError::Generation {
            index,
            attempts: MAX_SCENE_ATTEMPTS,
        })?;
        let junctions = scene.junctions(tol);
        if !groundtruth::has_multiway_junction(&junctions, tol) {
            return Ok(scene);
        }
    }
    Err(DatasetError::Generation {
        index,
        attempts: MAX_SCENE_ATTEMPTS,
    })
}

fn draw_scene(rng: &mut ChaCha8Rng, spec: &SampleSpec) -> Option<Scene> {
    let w = spec.type_weights;
    let kinds = WeightedIndex::new([w.line, w.arc, w.bezier]).expect("validated weights");
    let count = rng.gen_range(spec.primitives_min..=spec.primitives_max);
    let mut primitives = Vec::with_capacity(count);
    for _ in 0..count {
        let prim = match kinds.sample(rng) {
            0 => draw_line(rng, spec),
            1 => draw_arc(rng, spec),
            _ => draw_bezier(rng, spec)?,
        };
        primitives.push(prim);
    }
    Scene::new(spec.canvas, spec.canvas, primitives).ok()
}

fn draw_point(rng: &mut ChaCha8Rng, spec: &SampleSpec) -> Point {
    let lo = spec.margin;
    let hi = f64::from(spec.canvas) - spec.margin;
    Point::new(rng.gen_range(lo..=hi), rng.gen_range(lo..=hi))
}

fn draw_line(rng: &mut ChaCha8Rng, spec: &SampleSpec) -> Primitive {
    loop {
        let p0 = draw_point(rng, spec);
        let p1 = draw_point(rng, spec);
        if p0 != p1 {
            return Primitive::Line { p0, p1 };
        }
    }
}

fn draw_arc(rng: &mut ChaCha8Rng, spec: &SampleSpec) -> Primitive {
    let canvas = f64::from(spec.canvas);
    let radius = rng.gen_range(MIN_ARC_RADIUS..=canvas / 2.0 - spec.margin);
    // the whole circle stays inside the margin
    let lo = spec.margin + radius;
    let hi = canvas - spec.margin - radius;
    let center = Point::new(rng.gen_range(lo..=hi), rng.gen_range(lo..=hi));
    let angle_start = rng.gen_range(0.0..TAU);
    let sweep = rng.gen_range(PI / 3.0..=TAU);
    let mut angle_end = angle_start + sweep;
    while angle_end - angle_start > TAU {
        angle_end = angle_end.next_down();
    }
    Primitive::Arc {
        center,
        radius,
        angle_start,
        angle_end,
    }
}

fn draw_bezier(rng: &mut ChaCha8Rng, spec: &SampleSpec) -> Option<Primitive> {
    for _ in 0..MAX_BEZIER_DRAWS {
        let prim = Primitive::CubicBezier {
            p0: draw_point(rng, spec),
            p1: draw_point(rng, spec),
            p2: draw_point(rng, spec),
            p3: draw_point(rng, spec),
        };
        let min_speed = (0..=256)
            .map(|i| prim.derivative(i as f64 / 256.0).norm())
            .fold(f64::INFINITY, f64::min);
        if min_speed >= MIN_BEZIER_SPEED && !prim.has_self_intersection() {
            return Some(prim);
        }
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub index: u64,
    pub scene_file: String,
    pub image_file: String,
    pub field_file: String,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub count: u64,
    pub train_count: u64,
    pub val_count: u64,
    pub spec: SampleSpec,
    pub records: Vec<RecordEntry>,
}

impl DatasetManifest {
    pub const FILE_NAME: &'static str = "manifest.json";

    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let path = dir.join(Self::FILE_NAME);
        let text = fs::read_to_string(&path).map_err(io_error(&path))?;
        serde_json::from_str(&text).map_err(|e| DatasetError::Io {
            path,
            source: e.into(),
        })
    }
}

fn record_paths(index: u64) -> (String, String, String) {
    (
        format!("scenes/{index:06}.json"),
        format!("images/{index:06}.png"),
        format!("fields/{index:06}.pvf"),
    )
}

/// Samples, renders and writes one record.
pub fn generate_record(
    seed: u64,
    index: u64,
    split: Split,
    spec: &SampleSpec,
    out_dir: &Path,
) -> Result<RecordEntry, DatasetError> {
    let scene = sample_scene(seed, index, spec)?;
    let gt = groundtruth::build_field(&scene, &spec.field)
        .map_err(|source| DatasetError::GroundTruth { index, source })?;
    if gt.field.defined_count() == 0 {
        return Err(DatasetError::EmptyField { index });
    }
    let (scene_file, image_file, field_file) = record_paths(index);

    let path = out_dir.join(&scene_file);
    fs::write(&path, scene.to_json()).map_err(io_error(&path))?;
    let path = out_dir.join(&image_file);
    gt.image.write_png(&path).map_err(|e| DatasetError::Image {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let path = out_dir.join(&field_file);
    write_field(&gt.field, &path).map_err(|source| DatasetError::Pvf { path, source })?;

    Ok(RecordEntry {
        index,
        scene_file,
        image_file,
        field_file,
        split,
        warnings: gt.warnings,
    })
}

/// Generates `count` records into `out_dir`; the first `train_count` indices
/// form the training split. `threads` caps parallelism (default: all cores).
pub fn generate(
    seed: u64,
    count: u64,
    train_count: u64,
    spec: &SampleSpec,
    out_dir: &Path,
    threads: Option<usize>,
) -> Result<DatasetManifest, DatasetError> {
    spec.validate()?;
    if train_count > count {
        return Err(DatasetError::InvalidSpec(format!(
            "train count {train_count} exceeds count {count}"
        )));
    }
    for sub in ["scenes", "images", "fields"] {
        let dir = out_dir.join(sub);
        fs::create_dir_all(&dir).map_err(io_error(&dir))?;
    }

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| DatasetError::ThreadPool(e.to_string()))?;
    let records = pool.install(|| {
        (0..count)
            .into_par_iter()
            .map(|index| {
                let split = if index < train_count {
                    Split::Train
                } else {
                    Split::Val
                };
                generate_record(seed, index, split, spec, out_dir)
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let manifest = DatasetManifest {
        seed,
        count,
        train_count,
        val_count: count - train_count,
        spec: *spec,
        records,
    };
    let path = out_dir.join(DatasetManifest::FILE_NAME);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
    fs::write(&path, text + "\n").map_err(io_error(&path))?;
    Ok(manifest)
}
