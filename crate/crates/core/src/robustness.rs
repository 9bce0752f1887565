//! Distortion suite for robustness evaluation: JPEG recompression and
//! downscaling, applied to single images or to a whole corpus.

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{read_manifest, write_manifest, DatasetError, Manifest, TamperRecord, IMAGES_DIR, MASKS_DIR, MANIFEST_FILE};
use crate::imaging::{BBox, BinaryMask, ImageBuf, ImagingError};

/// Encoder/decoder identity recorded alongside JPEG-distorted records.
pub const JPEG_CODEC_ID: &str = "jpeg-encoder 0.6 baseline q-table:annex-k subsampling:4:2:0; decode:image 0.25";

#[derive(Debug, Error)]
pub enum RobustnessError {
    #[error("codec error: {0}")]
    Codec(String),
    #[error("invalid distortion: {0}")]
    InvalidDistortion(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distortion {
    Identity,
    Jpeg { quality: u8 },
    Resize { factor: f64 },
}

impl Distortion {
    /// The evaluation grid: JPEG 75 and 50, resize 0.75 and 0.5.
    pub const GRID: [Distortion; 4] = [
        Distortion::Jpeg { quality: 75 },
        Distortion::Jpeg { quality: 50 },
        Distortion::Resize { factor: 0.75 },
        Distortion::Resize { factor: 0.5 },
    ];

    pub fn validate(&self) -> Result<(), RobustnessError> {
        match *self {
            Distortion::Jpeg { quality } if !(1..=100).contains(&quality) => Err(
                RobustnessError::InvalidDistortion(format!("JPEG quality {quality} outside 1..=100")),
            ),
            Distortion::Resize { factor } if !(factor > 0.0 && factor <= 1.0) => Err(
                RobustnessError::InvalidDistortion(format!("resize factor {factor} outside (0, 1]")),
            ),
            _ => Ok(()),
        }
    }

    /// Parses `identity`, `jpeg:Q` or `resize:F`.
    pub fn parse(s: &str) -> Result<Self, RobustnessError> {
        let bad = || RobustnessError::InvalidDistortion(format!("cannot parse {s:?}; use identity, jpeg:Q or resize:F"));
        let d = match s.split_once(':') {
            None if s == "identity" => Distortion::Identity,
            Some(("jpeg", q)) => Distortion::Jpeg {
                quality: q.parse().map_err(|_| bad())?,
            },
            Some(("resize", f)) => Distortion::Resize {
                factor: f.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn label(&self) -> String {
        match self {
            Distortion::Identity => "identity".into(),
            Distortion::Jpeg { quality } => format!("jpeg:{quality}"),
            Distortion::Resize { factor } => format!("resize:{factor}"),
        }
    }
}

/// Output size for a resize: `round(f * W) x round(f * H)`, at least 1x1.
pub fn resized_dims(width: u32, height: u32, factor: f64) -> (u32, u32) {
    let scale = |v: u32| ((v as f64 * factor).round() as u32).max(1);
    (scale(width), scale(height))
}

pub fn jpeg_roundtrip(image: &ImageBuf, quality: u8) -> Result<ImageBuf, RobustnessError> {
    let (w, h) = image.dims();
    let (w16, h16) = match (u16::try_from(w), u16::try_from(h)) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return Err(RobustnessError::Codec(format!("{w}x{h} exceeds JPEG limits"))),
    };
    let mut bytes = Vec::new();
    let mut enc = jpeg_encoder::Encoder::new(&mut bytes, quality);
    enc.set_sampling_factor(jpeg_encoder::SamplingFactor::R_4_2_0);
    enc.set_progressive(false);
    enc.encode(image.data(), w16, h16, jpeg_encoder::ColorType::Rgb)
        .map_err(|e| RobustnessError::Codec(e.to_string()))?;
    ImageBuf::decode(&bytes).map_err(|e| RobustnessError::Codec(e.to_string()))
}

pub fn apply(image: &ImageBuf, d: Distortion) -> Result<ImageBuf, RobustnessError> {
    d.validate()?;
    match d {
        Distortion::Identity => Ok(image.clone()),
        Distortion::Jpeg { quality } => jpeg_roundtrip(image, quality),
        Distortion::Resize { factor } => {
            let (w, h) = resized_dims(image.width(), image.height(), factor);
            if (w, h) == image.dims() {
                return Ok(image.clone());
            }
            let out = image::imageops::resize(&image.to_rgb_image(), w, h, FilterType::Triangle);
            Ok(ImageBuf::from_rgb_image(out))
        }
    }
}

/// Masks only ever see nearest-neighbour resizing; codecs never touch them.
pub fn apply_to_mask(mask: &BinaryMask, d: Distortion) -> Result<BinaryMask, RobustnessError> {
    match d {
        Distortion::Resize { factor } => {
            let (w, h) = resized_dims(mask.width(), mask.height(), factor);
            if (w, h) == mask.dims() {
                return Ok(mask.clone());
            }
            let out = image::imageops::resize(&mask.to_gray_image(), w, h, FilterType::Nearest);
            Ok(BinaryMask::new(w, h, out.into_raw())?)
        }
        _ => Ok(mask.clone()),
    }
}

/// Rescales a box from a `from` frame to a `to` frame, rounding each edge.
pub fn rescale_box(b: &BBox, from: (u32, u32), to: (u32, u32)) -> BBox {
    let sx = to.0 as f64 / from.0 as f64;
    let sy = to.1 as f64 / from.1 as f64;
    let lo = |v: u32, s: f64, max: u32| ((v as f64 * s).round() as u32).min(max - 1);
    let hi = |v: u32, s: f64, max: u32, min: u32| ((v as f64 * s).round() as u32).clamp(min + 1, max);
    let x_min = lo(b.x_min, sx, to.0);
    let y_min = lo(b.y_min, sy, to.1);
    BBox::new(x_min, y_min, hi(b.x_max, sx, to.0, x_min), hi(b.y_max, sy, to.1, y_min))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFailure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbSummary {
    pub distortion: Distortion,
    pub codec: Option<String>,
    pub input_records: usize,
    pub written_records: usize,
    pub manifest: PathBuf,
    pub failures: Vec<RecordFailure>,
}

fn perturb_record(
    manifest: &Manifest,
    rec: &TamperRecord,
    out_dir: &Path,
    d: Distortion,
) -> Result<TamperRecord, RobustnessError> {
    let image = manifest.load_image(rec)?;
    let distorted = apply(&image, d)?;
    let mut out = rec.clone();
    out.image = format!("{IMAGES_DIR}/{}.png", rec.id);
    distorted.save_png(out_dir.join(&out.image))?;

    if let Some(mask) = manifest.load_mask(rec)? {
        let m = apply_to_mask(&mask, d)?;
        let rel = format!("{MASKS_DIR}/{}.png", rec.id);
        m.save_png(out_dir.join(&rel))?;
        out.mask = Some(rel);
    }
    out.boxes = rec
        .boxes
        .iter()
        .map(|b| rescale_box(b, image.dims(), distorted.dims()))
        .collect();
    out.distortion = Some(d);
    if let Distortion::Jpeg { .. } = d {
        out.extra.insert("codec".into(), JPEG_CODEC_ID.into());
    }
    Ok(out)
}

/// Distorts every record of `manifest_in` into a fresh corpus under `out_dir`.
/// Per-record failures are collected in the summary; failed records are left out.
pub fn perturb_corpus(
    manifest_in: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    d: Distortion,
) -> Result<PerturbSummary, RobustnessError> {
    d.validate()?;
    let manifest = read_manifest(manifest_in)?;
    let out_dir = out_dir.as_ref();
    for sub in [IMAGES_DIR, MASKS_DIR] {
        let p = out_dir.join(sub);
        fs::create_dir_all(&p).map_err(|source| RobustnessError::Io { path: p, source })?;
    }
    let results: Vec<Result<TamperRecord, RecordFailure>> = manifest
        .records
        .par_iter()
        .map(|rec| {
            perturb_record(&manifest, rec, out_dir, d).map_err(|e| RecordFailure {
                id: rec.id.clone(),
                error: e.to_string(),
            })
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(f) => failures.push(f),
        }
    }
    let path = out_dir.join(MANIFEST_FILE);
    write_manifest(&records, &path)?;
    Ok(PerturbSummary {
        distortion: d,
        codec: matches!(d, Distortion::Jpeg { .. }).then(|| JPEG_CODEC_ID.to_owned()),
        input_records: manifest.records.len(),
        written_records: records.len(),
        manifest: path,
        failures,
    })
}
