//! Corpus data model: JSONL manifests with manifest-relative image and mask
//! paths, split assignment, and corpus statistics.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::imaging::{mask_to_boxes, BBox, BinaryMask, ImageBuf, ImagingError, DEFAULT_MIN_AREA};
use crate::robustness::Distortion;
use crate::AUTHENTIC_DESCRIPTION;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const IMAGES_DIR: &str = "images";
pub const MASKS_DIR: &str = "masks";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Schema {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("record {id}: {source}")]
    Imaging {
        id: String,
        #[source]
        source: ImagingError,
    },
    #[error("split ratios {0:?} must be non-negative and sum to 1")]
    InvalidRatios([f64; 3]),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    Cd,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Test, Split::Cd];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Cd => "cd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    CopyMove,
    Splicing,
    /// Imported from an external diffusion-based editor; never produced here.
    #[serde(rename = "diffute")]
    DiffUte,
    Authentic,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::CopyMove, Method::Splicing, Method::DiffUte, Method::Authentic];

    pub fn is_tampered(&self) -> bool {
        !matches!(self, Method::Authentic)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::CopyMove => "copy_move",
            Method::Splicing => "splicing",
            Method::DiffUte => "diffute",
            Method::Authentic => "authentic",
        }
    }
}

impl From<crate::tamper::TamperMethod> for Method {
    fn from(m: crate::tamper::TamperMethod) -> Self {
        match m {
            crate::tamper::TamperMethod::CopyMove => Method::CopyMove,
            crate::tamper::TamperMethod::Splicing => Method::Splicing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "EN")]
    En,
    #[serde(rename = "CH")]
    Ch,
}

/// One corpus sample. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TamperRecord {
    pub id: String,
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    pub split: Split,
    pub method: Method,
    #[serde(default)]
    pub blend: bool,
    #[serde(default)]
    pub languages: Vec<Language>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_ocr: Option<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub boxes: Vec<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distortion: Option<Distortion>,
    /// Fields this version does not know about; written back unchanged.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl TamperRecord {
    pub fn authentic(id: impl Into<String>, image: impl Into<String>, split: Split) -> Self {
        Self {
            id: id.into(),
            image: image.into(),
            mask: None,
            split,
            method: Method::Authentic,
            blend: false,
            languages: vec![Language::En],
            gt_ocr: None,
            description: AUTHENTIC_DESCRIPTION.to_owned(),
            boxes: Vec::new(),
            distortion: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn is_tampered(&self) -> bool {
        self.method.is_tampered()
    }

    /// Checks the label invariants that do not need file access.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.is_tampered() {
            if self.mask.is_none() {
                return Err("tampered record without mask".into());
            }
            if self.gt_ocr.as_deref().is_none_or(str::is_empty) {
                return Err("tampered record without gt_ocr".into());
            }
            if self.boxes.is_empty() {
                return Err("tampered record without boxes".into());
            }
            if self.description == AUTHENTIC_DESCRIPTION {
                return Err("tampered record carries the authentic description".into());
            }
        } else {
            if self.mask.is_some() {
                return Err("authentic record with a mask".into());
            }
            if self.gt_ocr.is_some() {
                return Err("authentic record with gt_ocr".into());
            }
            if self.description != AUTHENTIC_DESCRIPTION {
                return Err("authentic record must use the fixed authentic description".into());
            }
            if !self.boxes.is_empty() {
                return Err("authentic record with boxes".into());
            }
        }
        Ok(())
    }

    fn to_line(&self) -> String {
        crate::json::to_canonical_line(self).expect("records always serialize")
    }
}

/// Records plus the directory their relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub root: PathBuf,
    pub records: Vec<TamperRecord>,
}

impl Manifest {
    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn load_image(&self, rec: &TamperRecord) -> Result<ImageBuf, DatasetError> {
        ImageBuf::load(self.resolve(&rec.image)).map_err(|source| DatasetError::Imaging {
            id: rec.id.clone(),
            source,
        })
    }

    pub fn load_mask(&self, rec: &TamperRecord) -> Result<Option<BinaryMask>, DatasetError> {
        rec.mask
            .as_ref()
            .map(|m| {
                BinaryMask::load(self.resolve(m)).map_err(|source| DatasetError::Imaging {
                    id: rec.id.clone(),
                    source,
                })
            })
            .transpose()
    }

    pub fn get(&self, id: &str) -> Option<&TamperRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}

fn manifest_root(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn check_files(root: &Path, rec: &TamperRecord) -> Result<(), String> {
    for (what, rel) in [("image", Some(&rec.image)), ("mask", rec.mask.as_ref())] {
        if let Some(rel) = rel {
            if !root.join(rel).is_file() {
                return Err(format!("{what} file {rel} not found"));
            }
        }
    }
    Ok(())
}

/// Writes one sorted-key JSON object per line. Every referenced file must exist.
pub fn write_manifest(records: &[TamperRecord], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let root = manifest_root(path);
    let mut seen = HashSet::new();
    for (i, rec) in records.iter().enumerate() {
        let schema = |msg: String| DatasetError::Schema {
            path: path.to_owned(),
            line: i + 1,
            msg: format!("{}: {msg}", rec.id),
        };
        rec.validate().map_err(schema)?;
        check_files(&root, rec).map_err(schema)?;
        if !seen.insert(rec.id.as_str()) {
            return Err(schema("duplicate id".into()));
        }
    }
    let mut out = Vec::new();
    for rec in records {
        out.extend_from_slice(rec.to_line().as_bytes());
        out.push(b'\n');
    }
    let tmp = path.with_extension("jsonl.tmp");
    fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(&out))
        .map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest, DatasetError> {
    let path = path.as_ref();
    let root = manifest_root(path);
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |msg: String| DatasetError::Schema {
            path: path.to_owned(),
            line: i + 1,
            msg,
        };
        let rec: TamperRecord = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        rec.validate().map_err(|m| schema(format!("{}: {m}", rec.id)))?;
        check_files(&root, &rec).map_err(|m| schema(format!("{}: {m}", rec.id)))?;
        if !seen.insert(rec.id.clone()) {
            return Err(schema(format!("duplicate id {}", rec.id)));
        }
        records.push(rec);
    }
    Ok(Manifest { root, records })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub total: usize,
    pub authentic: usize,
    pub tampered: usize,
    pub per_method: BTreeMap<Method, usize>,
    /// Mean tampered-pixel fraction over this split's tampered images.
    pub forged_area: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub authentic: usize,
    pub tampered: usize,
    pub per_method: BTreeMap<Method, usize>,
    pub per_split: BTreeMap<Split, SplitStats>,
    /// `null` when the corpus has no tampered record.
    pub forged_area: Option<f64>,
    /// Per-method totals agree with the per-split breakdown.
    pub totals_consistent: bool,
    /// Ids whose stored boxes disagree with the boxes derived from their mask.
    pub box_mismatches: Vec<String>,
    /// Ids in the cross-domain split whose method is not allowed there.
    pub cd_violations: Vec<String>,
}

fn boxes_agree(stored: &[BBox], derived: &[BBox], tol: u32) -> bool {
    stored.len() == derived.len()
        && stored.iter().zip(derived).all(|(a, b)| {
            a.x_min.abs_diff(b.x_min) <= tol
                && a.y_min.abs_diff(b.y_min) <= tol
                && a.x_max.abs_diff(b.x_max) <= tol
                && a.y_max.abs_diff(b.y_max) <= tol
        })
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn compute_stats(manifest: &Manifest) -> Result<CorpusStats, DatasetError> {
    // (id, split, area ratio, boxes consistent)
    let per_record: Vec<Option<(Split, f64, bool, &str)>> = manifest
        .records
        .par_iter()
        .map(|rec| -> Result<_, DatasetError> {
            let Some(mask) = manifest.load_mask(rec)? else {
                return Ok(None);
            };
            let ratio = mask.foreground_count() as f64 / (mask.width() as f64 * mask.height() as f64);
            let derived = mask_to_boxes(&mask, DEFAULT_MIN_AREA);
            let mut stored = rec.boxes.clone();
            stored.sort_by_key(|b| (b.y_min, b.x_min));
            let tol = if matches!(rec.distortion, Some(Distortion::Resize { .. })) { 1 } else { 0 };
            Ok(Some((rec.split, ratio, boxes_agree(&stored, &derived, tol), rec.id.as_str())))
        })
        .collect::<Result<_, _>>()?;

    let mut per_method = BTreeMap::new();
    let mut per_split: BTreeMap<Split, SplitStats> = BTreeMap::new();
    let mut ratios = Vec::new();
    let mut split_ratios: BTreeMap<Split, Vec<f64>> = BTreeMap::new();
    let mut box_mismatches = Vec::new();
    let mut cd_violations = Vec::new();

    for (rec, info) in manifest.records.iter().zip(&per_record) {
        *per_method.entry(rec.method).or_insert(0) += 1;
        let s = per_split.entry(rec.split).or_default();
        s.total += 1;
        *s.per_method.entry(rec.method).or_insert(0) += 1;
        if rec.is_tampered() {
            s.tampered += 1;
        } else {
            s.authentic += 1;
        }
        if rec.split == Split::Cd && rec.method == Method::DiffUte {
            cd_violations.push(rec.id.clone());
        }
        if let Some((split, ratio, ok, id)) = info {
            ratios.push(*ratio);
            split_ratios.entry(*split).or_default().push(*ratio);
            if !ok {
                box_mismatches.push(id.to_string());
            }
        }
    }
    for (split, s) in per_split.iter_mut() {
        s.forged_area = split_ratios.get(split).and_then(|r| mean(r));
    }
    let authentic = per_method.get(&Method::Authentic).copied().unwrap_or(0);
    let total = manifest.records.len();
    let totals_consistent = Method::ALL.iter().all(|m| {
        per_method.get(m).copied().unwrap_or(0)
            == per_split.values().map(|s| s.per_method.get(m).copied().unwrap_or(0)).sum::<usize>()
    });
    Ok(CorpusStats {
        total,
        authentic,
        tampered: total - authentic,
        per_method,
        per_split,
        forged_area: mean(&ratios),
        totals_consistent,
        box_mismatches,
        cd_violations,
    })
}

/// Seeded, method-stratified split assignment with ratios `(train, test, cd)`.
/// Records are grouped by method and ordered by id before shuffling, so the
/// result does not depend on input order. DiffUTE records never enter the
/// cross-domain split; their share goes to train.
pub fn split_assign(
    records: &[TamperRecord],
    ratios: [f64; 3],
    seed: u64,
) -> Result<Vec<TamperRecord>, DatasetError> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DatasetError::InvalidRatios(ratios));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = records.to_vec();
    for method in Method::ALL {
        let mut idx: Vec<usize> = (0..out.len()).filter(|&i| out[i].method == method).collect();
        if idx.is_empty() {
            continue;
        }
        idx.sort_by(|&a, &b| out[a].id.cmp(&out[b].id));
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_train = ((ratios[0] * n as f64).round() as usize).min(n);
        let n_test = ((ratios[1] * n as f64).round() as usize).min(n - n_train);
        for (pos, &i) in idx.iter().enumerate() {
            out[i].split = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_test {
                Split::Test
            } else if method == Method::DiffUte {
                Split::Train
            } else {
                Split::Cd
            };
        }
    }
    Ok(out)
}

/// PNG and JPEG files directly inside `dir`, sorted by file name.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, DatasetError> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .collect();
    files.sort();
    Ok(files)
}
