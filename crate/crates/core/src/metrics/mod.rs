//! Scoring stack for explainable tampered-text detection: OCR accuracy,
//! paragraph similarity over word vectors, the weighted final score,
//! forgery classification and box-level detection quality.

mod detection;
mod score;
mod vectors;

pub use detection::{detection_prf, evaluate_detections, DetectionPrediction, DetectionScores};
pub use score::{
    aggregate, read_predictions, score_predictions, score_sample, score_sample_with, AggregateScores,
    Prediction, SampleFailure, SampleRow, SampleScore, ScoreExtractor, ScoreReport, Similarity,
    WordVectorScorer, OCR_WEIGHT, PARAGRAPH_WEIGHT,
};
pub use vectors::{cosine, paragraph_vector, ParagraphVector, WordVectorTable, DEFAULT_STOPWORDS};

use thiserror::Error;

use crate::AUTHENTIC_DESCRIPTION;

/// Largest edit distance from the authentic sentence still read as "authentic".
pub const DEFAULT_CLASSIFY_MAX_EDITS: usize = 3;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("vector dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("record {0} lacks ground truth: {1}")]
    MissingGroundTruth(String, &'static str),
    #[error("cannot aggregate an empty score list")]
    EmptyInput,
    #[error("{path}:{line}: {msg}")]
    Format {
        path: String,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Levenshtein distance over Unicode scalar values with unit costs.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (short, long) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
    if short.is_empty() {
        return long.len();
    }
    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut cur = vec![0; short.len() + 1];
    for (i, lc) in long.iter().enumerate() {
        cur[0] = i + 1;
        for (j, sc) in short.iter().enumerate() {
            let sub = prev[j] + (lc != sc) as usize;
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// `1 - ED / max(len)`, in `[0, 1]`; two empty strings score 1.
pub fn acc_ocr(pred: &str, gt: &str) -> f64 {
    let longest = pred.chars().count().max(gt.chars().count());
    if longest == 0 {
        return 1.0;
    }
    (1.0 - edit_distance(pred, gt) as f64 / longest as f64).clamp(0.0, 1.0)
}

/// `true` when the output is read as flagging tampered text.
pub fn classify(output: &str) -> bool {
    classify_with(output, DEFAULT_CLASSIFY_MAX_EDITS)
}

pub fn classify_with(output: &str, max_edits: usize) -> bool {
    edit_distance(output, AUTHENTIC_DESCRIPTION) > max_edits
}
