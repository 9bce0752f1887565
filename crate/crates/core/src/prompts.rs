//! Prompt texts: the annotation query sent with image pairs, the inference
//! questions, and the box-grounding fragment.

use serde::{Deserialize, Serialize};

use crate::imaging::{BBox, ImagingError};

/// Version tag of the embedded annotation query.
pub const ANNOTATION_QUERY_VERSION: &str = "v1";

const ANNOTATION_QUERY: &str = include_str!("../resources/annotation_query_v1.txt");

/// Anomaly perspectives, in the order the query enumerates them.
pub const PERSPECTIVES: [&str; 6] = [
    "Edge artifacts",
    "Unnatural texture appearance",
    "Inconsistent font",
    "Inconsistent alignment",
    "Text incoherence",
    "Lack of integration",
];

pub const FINE_TUNED_QUERY: &str = "What is the tampered text in this image, why?";

pub const ZERO_SHOT_QUERY: &str = "Does this image have tampered text on it? Please start your answer with \"Yes\" or \"No\". If \"Yes\", then recognize the tampered text and describe the anomaly of the tampered region.";

/// Upper end of the normalized grounding coordinate range.
pub const GROUNDING_SCALE: u32 = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationQuery {
    pub text: String,
    pub perspectives: Vec<String>,
    pub version: String,
}

pub fn build_annotation_query() -> AnnotationQuery {
    AnnotationQuery {
        text: ANNOTATION_QUERY.trim_end().to_owned(),
        perspectives: PERSPECTIVES.iter().map(|s| s.to_string()).collect(),
        version: ANNOTATION_QUERY_VERSION.to_owned(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    FineTuned,
    ZeroShot,
}

pub fn build_inference_query(mode: QueryMode) -> &'static str {
    match mode {
        QueryMode::FineTuned => FINE_TUNED_QUERY,
        QueryMode::ZeroShot => ZERO_SHOT_QUERY,
    }
}

/// Box coordinates on the 0..=1000 grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingPrompt {
    pub text: String,
    pub nbox: NormalizedBox,
}

fn normalize_coord(v: u32, extent: u32) -> u32 {
    // round(v * 1000 / extent), half away from zero, in exact integer arithmetic
    let num = v as u64 * GROUNDING_SCALE as u64;
    let q = (2 * num + extent as u64) / (2 * extent as u64);
    q.min(GROUNDING_SCALE as u64) as u32
}

pub fn normalize_box(b: &BBox, image_w: u32, image_h: u32) -> Result<NormalizedBox, ImagingError> {
    if image_w == 0 || image_h == 0 {
        return Err(ImagingError::Bounds(format!("empty frame {image_w}x{image_h}")));
    }
    b.check_in(image_w, image_h)?;
    Ok(NormalizedBox {
        x_min: normalize_coord(b.x_min, image_w),
        y_min: normalize_coord(b.y_min, image_h),
        x_max: normalize_coord(b.x_max, image_w),
        y_max: normalize_coord(b.y_max, image_h),
    })
}

pub fn build_grounding_prompt(
    b: &BBox,
    image_w: u32,
    image_h: u32,
) -> Result<GroundingPrompt, ImagingError> {
    let nbox = normalize_box(b, image_w, image_h)?;
    let text = format!(
        "The suspected tampered text <box>[[{}, {}, {}, {}]]</box>",
        nbox.x_min, nbox.y_min, nbox.x_max, nbox.y_max
    );
    Ok(GroundingPrompt { text, nbox })
}

/// Grounding fragment followed by the question on its own line.
pub fn build_grounded_query(
    b: &BBox,
    image_w: u32,
    image_h: u32,
    mode: QueryMode,
) -> Result<String, ImagingError> {
    let g = build_grounding_prompt(b, image_w, image_h)?;
    Ok(format!("{}\n{}", g.text, build_inference_query(mode)))
}
