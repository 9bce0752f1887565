//! Building blocks for explainable tampered-text detection corpora: forging
//! text images, prompting an annotator, filtering its replies, perturbing
//! corpora and scoring detector explanations.

pub mod annotator;
pub mod dataset;
pub mod forge;
pub mod imaging;
pub mod json;
pub mod metrics;
pub mod prompts;
pub mod robustness;
pub mod synth;
pub mod tamper;
pub mod text;

use serde::{Deserialize, Serialize};

pub use dataset::{Manifest, Method, Split, TamperRecord};
pub use imaging::{BBox, BinaryMask, ImageBuf};
pub use robustness::Distortion;
pub use tamper::{TamperMethod, TamperOp};

/// Description given to every authentic image.
pub const AUTHENTIC_DESCRIPTION: &str = "There is no tampered text in this image.";

/// Decision thresholds shared by the pipeline stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Minimum OCR accuracy for an annotation to be kept.
    pub filter: f64,
    /// Answers further than this from the authentic sentence count as tampered.
    pub classify_max_edits: usize,
    pub iou: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            filter: annotator::DEFAULT_FILTER_THRESHOLD,
            classify_max_edits: metrics::DEFAULT_CLASSIFY_MAX_EDITS,
            iou: 0.5,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.filter) {
            return Err(format!("filter threshold {} outside [0, 1]", self.filter));
        }
        if !(self.iou > 0.0 && self.iou <= 1.0) {
            return Err(format!("IoU threshold {} outside (0, 1]", self.iou));
        }
        if self.classify_max_edits >= AUTHENTIC_DESCRIPTION.chars().count() {
            return Err(format!(
                "classify edit budget {} would accept any answer",
                self.classify_max_edits
            ));
        }
        Ok(())
    }
}
