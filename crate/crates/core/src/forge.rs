//! Seeded corpus forging: copy-move and splicing forgeries of synthetic text
//! pages plus untouched authentic pages, written as a manifest directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{split_assign, write_manifest, DatasetError, Language, Split, TamperRecord, IMAGES_DIR, MANIFEST_FILE, MASKS_DIR};
use crate::imaging::{mask_to_boxes, BBox, ImagingError, DEFAULT_MIN_AREA};
use crate::synth::{render_page, word_box, SynthPage};
use crate::tamper::{BlendReport, SolverParams, TamperError, TamperMethod, TamperOp};

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("record {id}: {source}")]
    Tamper {
        id: String,
        #[source]
        source: TamperError,
    },
    #[error("record {id}: {source}")]
    Imaging {
        id: String,
        #[source]
        source: ImagingError,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("invalid forge request: {0}")]
    InvalidConfig(String),
}

/// Which forgery to apply to tampered pages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForgeMethod {
    CopyMove,
    Splicing,
    /// Alternates copy-move and splicing.
    Mixed,
}

impl ForgeMethod {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "copy-move" | "copymove" | "copy_move" => Some(Self::CopyMove),
            "splicing" | "splice" => Some(Self::Splicing),
            "mixed" => Some(Self::Mixed),
            _ => None,
        }
    }

    fn for_index(self, i: usize) -> TamperMethod {
        match self {
            Self::CopyMove => TamperMethod::CopyMove,
            Self::Splicing => TamperMethod::Splicing,
            Self::Mixed if i.is_multiple_of(2) => TamperMethod::CopyMove,
            Self::Mixed => TamperMethod::Splicing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgeConfig {
    pub tampered: usize,
    pub authentic: usize,
    pub method: ForgeMethod,
    pub blend: bool,
    pub seed: u64,
    pub solver: SolverParams,
    /// `(train, test, cd)` ratios; everything goes to train when absent.
    pub split_ratios: Option<[f64; 3]>,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        Self {
            tampered: 10,
            authentic: 10,
            method: ForgeMethod::Mixed,
            blend: false,
            seed: 0,
            solver: SolverParams::default(),
            split_ratios: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgeSummary {
    pub manifest: PathBuf,
    pub tampered: usize,
    pub authentic: usize,
    pub copy_move: usize,
    pub splicing: usize,
    /// Records where blending was requested but a hard paste was used.
    pub blend_fallbacks: Vec<String>,
}

/// A forged page before it is written to disk.
#[derive(Debug, Clone)]
pub struct ForgedSample {
    pub record: TamperRecord,
    pub image: crate::imaging::ImageBuf,
    pub mask: Option<crate::imaging::BinaryMask>,
    pub blend: BlendReport,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Forges tampered sample `index` by pasting one word into an empty slot.
/// The pasted word becomes the record's ground-truth OCR.
pub fn forge_tampered(cfg: &ForgeConfig, index: usize) -> Result<ForgedSample, ForgeError> {
    let id = format!("tampered-{index:05}");
    let mut rng = stream_rng(cfg.seed, 2 * index as u64);
    let method = cfg.method.for_index(index);
    let page = render_page(&mut rng);
    let (donor, donor_id) = match method {
        TamperMethod::CopyMove => (None, None),
        TamperMethod::Splicing => {
            let mut donor_rng = stream_rng(cfg.seed, 2 * index as u64 + 1);
            (Some(render_page(&mut donor_rng)), Some(format!("synth:{}:{}", cfg.seed, 2 * index + 1)))
        }
    };
    let source_page: &SynthPage = donor.as_ref().unwrap_or(&page);
    let word = &source_page.words[rng.gen_range(0..source_page.words.len())];
    let slot = rng.gen_range(0..page.slots.len());
    let op = TamperOp {
        method,
        source_box: word.bbox,
        dest_origin: page.slot_origin(slot),
        donor_id,
        blend: cfg.blend,
    };
    debug_assert_eq!(
        op.dest_box(),
        word_box(op.dest_origin.0 + 2, op.dest_origin.1 + 2, word.text.len())
    );
    let outcome = op
        .apply(&page.image, donor.as_ref().map(|d| &d.image), &cfg.solver)
        .map_err(|source| ForgeError::Tamper { id: id.clone(), source })?;
    let boxes: Vec<BBox> = mask_to_boxes(&outcome.mask, DEFAULT_MIN_AREA);
    let mut extra = BTreeMap::new();
    extra.insert("op".to_owned(), serde_json::to_value(&op).expect("ops serialize"));
    extra.insert(
        "blend_report".to_owned(),
        serde_json::to_value(outcome.blend).expect("reports serialize"),
    );
    let record = TamperRecord {
        id: id.clone(),
        image: format!("{IMAGES_DIR}/{id}.png"),
        mask: Some(format!("{MASKS_DIR}/{id}.png")),
        split: Split::Train,
        method: method.into(),
        blend: cfg.blend,
        languages: vec![Language::En],
        gt_ocr: Some(word.text.clone()),
        description: String::new(),
        boxes,
        distortion: None,
        extra,
    };
    Ok(ForgedSample {
        record,
        image: outcome.image,
        mask: Some(outcome.mask),
        blend: outcome.blend,
    })
}

/// Renders authentic sample `index` from its own random stream.
pub fn forge_authentic(cfg: &ForgeConfig, index: usize) -> ForgedSample {
    let id = format!("authentic-{index:05}");
    let mut rng = stream_rng(cfg.seed ^ 0xA5A5_A5A5_A5A5_A5A5, index as u64);
    let page = render_page(&mut rng);
    ForgedSample {
        record: TamperRecord::authentic(id.clone(), format!("{IMAGES_DIR}/{id}.png"), Split::Train),
        image: page.image,
        mask: None,
        blend: BlendReport::Hard,
    }
}

/// Forges the whole corpus into `out_dir` (`manifest.jsonl`, `images/`, `masks/`).
pub fn forge_corpus(cfg: &ForgeConfig, out_dir: impl AsRef<Path>) -> Result<ForgeSummary, ForgeError> {
    let out_dir = out_dir.as_ref();
    if cfg.tampered + cfg.authentic == 0 {
        return Err(ForgeError::InvalidConfig("nothing to forge".into()));
    }
    for sub in [IMAGES_DIR, MASKS_DIR] {
        let p = out_dir.join(sub);
        fs::create_dir_all(&p).map_err(|source| ForgeError::Io { path: p.clone(), source })?;
    }
    let write = |s: &ForgedSample| -> Result<(), ForgeError> {
        let img_err = |source| ForgeError::Imaging {
            id: s.record.id.clone(),
            source,
        };
        s.image.save_png(out_dir.join(&s.record.image)).map_err(img_err)?;
        if let (Some(mask), Some(path)) = (&s.mask, &s.record.mask) {
            mask.save_png(out_dir.join(path)).map_err(img_err)?;
        }
        Ok(())
    };
    let tampered: Vec<ForgedSample> = (0..cfg.tampered)
        .into_par_iter()
        .map(|i| {
            let s = forge_tampered(cfg, i)?;
            write(&s)?;
            Ok(s)
        })
        .collect::<Result<_, ForgeError>>()?;
    let authentic: Vec<ForgedSample> = (0..cfg.authentic)
        .into_par_iter()
        .map(|i| {
            let s = forge_authentic(cfg, i);
            write(&s)?;
            Ok(s)
        })
        .collect::<Result<_, ForgeError>>()?;

    let mut records: Vec<TamperRecord> = tampered.iter().chain(&authentic).map(|s| s.record.clone()).collect();
    if let Some(ratios) = cfg.split_ratios {
        records = split_assign(&records, ratios, cfg.seed)?;
    }
    let manifest = out_dir.join(MANIFEST_FILE);
    write_manifest(&records, &manifest)?;

    let count = |m: TamperMethod| tampered.iter().filter(|s| s.record.method == m.into()).count();
    Ok(ForgeSummary {
        manifest,
        tampered: tampered.len(),
        authentic: authentic.len(),
        copy_move: count(TamperMethod::CopyMove),
        splicing: count(TamperMethod::Splicing),
        blend_fallbacks: tampered
            .iter()
            .filter(|s| matches!(s.blend, BlendReport::FellBack { .. }))
            .map(|s| s.record.id.clone())
            .collect(),
    })
}
