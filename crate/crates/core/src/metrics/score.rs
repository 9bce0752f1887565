use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::vectors::{cosine, paragraph_vector, WordVectorTable};
use super::{acc_ocr, classify_with, MetricsError};
use crate::dataset::TamperRecord;
use crate::text::{first_sentence_quote, normalize_quotes};

pub const OCR_WEIGHT: f64 = 0.3;
pub const PARAGRAPH_WEIGHT: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub value: f64,
    /// One side had no usable words; `value` is 0.
    pub degenerate: bool,
}

/// The two text-comparison measures behind a sample score.
pub trait ScoreExtractor {
    fn ocr_accuracy(&self, pred: &str, gt_ocr: &str) -> f64;
    fn paragraph_similarity(&self, pred: &str, gt_description: &str) -> Similarity;
}

/// Quoted-OCR accuracy plus word-vector paragraph cosine.
#[derive(Debug, Clone, Copy)]
pub struct WordVectorScorer<'a> {
    pub table: &'a WordVectorTable,
}

impl ScoreExtractor for WordVectorScorer<'_> {
    fn ocr_accuracy(&self, pred: &str, gt_ocr: &str) -> f64 {
        let pred = normalize_quotes(pred);
        let quoted = first_sentence_quote(&pred).map_or("", |q| q.content(&pred));
        acc_ocr(quoted, gt_ocr)
    }

    fn paragraph_similarity(&self, pred: &str, gt_description: &str) -> Similarity {
        let a = paragraph_vector(pred, self.table, true);
        let b = paragraph_vector(gt_description, self.table, true);
        let (value, degenerate) = cosine(&a, &b).expect("both vectors come from one table");
        Similarity { value, degenerate }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub acc_ocr: f64,
    pub sim_para: f64,
    #[serde(rename = "final")]
    pub final_score: f64,
    pub classified_tampered: bool,
    pub gt_tampered: bool,
    /// Paragraph similarity fell back to 0 because a side had no usable words.
    pub degenerate: bool,
}

impl SampleScore {
    pub fn correct(&self) -> bool {
        self.classified_tampered == self.gt_tampered
    }

    /// Applies the weighting and the misclassification rule to raw measures.
    pub fn combine(acc: f64, sim: f64, classified_tampered: bool, gt_tampered: bool, degenerate: bool) -> Self {
        let (acc_ocr, sim_para) = if classified_tampered == gt_tampered { (acc, sim) } else { (0.0, 0.0) };
        Self {
            acc_ocr,
            sim_para,
            final_score: OCR_WEIGHT * acc_ocr + PARAGRAPH_WEIGHT * sim_para,
            classified_tampered,
            gt_tampered,
            degenerate: degenerate && classified_tampered == gt_tampered,
        }
    }
}

pub fn score_sample(
    pred_text: &str,
    gt: &TamperRecord,
    table: &WordVectorTable,
) -> Result<SampleScore, MetricsError> {
    score_sample_with(pred_text, gt, &WordVectorScorer { table }, super::DEFAULT_CLASSIFY_MAX_EDITS)
}

pub fn score_sample_with<E: ScoreExtractor + ?Sized>(
    pred_text: &str,
    gt: &TamperRecord,
    extractor: &E,
    classify_max_edits: usize,
) -> Result<SampleScore, MetricsError> {
    let gt_tampered = gt.is_tampered();
    let classified = classify_with(pred_text, classify_max_edits);
    if !gt_tampered {
        return Ok(SampleScore::combine(1.0, 1.0, classified, false, false));
    }
    let gt_ocr = gt
        .gt_ocr
        .as_deref()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| MetricsError::MissingGroundTruth(gt.id.clone(), "gt_ocr"))?;
    if gt.description.trim().is_empty() {
        return Err(MetricsError::MissingGroundTruth(gt.id.clone(), "description"));
    }
    if !classified {
        return Ok(SampleScore::combine(0.0, 0.0, false, true, false));
    }
    let acc = extractor.ocr_accuracy(pred_text, gt_ocr);
    let sim = extractor.paragraph_similarity(pred_text, &gt.description);
    Ok(SampleScore::combine(acc, sim.value, true, true, sim.degenerate))
}

/// Means on the 0-100 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateScores {
    pub count: usize,
    pub acc_ocr: f64,
    pub sim_para: f64,
    #[serde(rename = "final")]
    pub final_score: f64,
    pub classification_accuracy: f64,
}

pub fn aggregate(scores: &[SampleScore]) -> Result<AggregateScores, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = scores.len() as f64;
    let mean = |f: fn(&SampleScore) -> f64| 100.0 * scores.iter().map(f).sum::<f64>() / n;
    Ok(AggregateScores {
        count: scores.len(),
        acc_ocr: mean(|s| s.acc_ocr),
        sim_para: mean(|s| s.sim_para),
        final_score: mean(|s| s.final_score),
        classification_accuracy: mean(|s| s.correct() as u8 as f64),
    })
}

/// One line of the predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub output_text: String,
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>, MetricsError> {
    let path = path.as_ref();
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(&line).map_err(|e| MetricsError::Format {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(p);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub id: String,
    #[serde(flatten)]
    pub score: SampleScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub samples: Vec<SampleRow>,
    /// Over every scored sample; absent when nothing could be scored.
    pub aggregate: Option<AggregateScores>,
    /// Over tampered ground-truth samples only.
    pub tampered_only: Option<AggregateScores>,
    pub degenerate_samples: usize,
    pub failures: Vec<SampleFailure>,
}

impl ScoreReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
        w.write_record(["id", "acc_ocr", "sim_para", "final", "classified_tampered", "gt_tampered", "degenerate"])
            .map_err(csv_io)?;
        for row in &self.samples {
            let s = &row.score;
            w.write_record([
                row.id.clone(),
                s.acc_ocr.to_string(),
                s.sim_para.to_string(),
                s.final_score.to_string(),
                s.classified_tampered.to_string(),
                s.gt_tampered.to_string(),
                s.degenerate.to_string(),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> MetricsError {
    MetricsError::Io(std::io::Error::other(e))
}

/// Scores every record that has exactly one prediction. Missing, duplicate and
/// unmatched predictions are reported as failures, not errors.
pub fn score_predictions<E: ScoreExtractor + Sync + ?Sized>(
    records: &[TamperRecord],
    predictions: &[Prediction],
    extractor: &E,
    classify_max_edits: usize,
) -> ScoreReport {
    let mut by_id: HashMap<&str, &Prediction> = HashMap::new();
    let mut failures = Vec::new();
    let mut dup = HashSet::new();
    for p in predictions {
        if by_id.insert(p.id.as_str(), p).is_some() && dup.insert(p.id.as_str()) {
            failures.push(SampleFailure {
                id: p.id.clone(),
                error: "duplicate prediction".into(),
            });
        }
    }
    let known: HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    for p in predictions {
        if !known.contains(p.id.as_str()) {
            failures.push(SampleFailure {
                id: p.id.clone(),
                error: "prediction for unknown record".into(),
            });
        }
    }

    let results: Vec<Result<SampleRow, SampleFailure>> = records
        .par_iter()
        .map(|rec| {
            let fail = |error: String| SampleFailure {
                id: rec.id.clone(),
                error,
            };
            if dup.contains(rec.id.as_str()) {
                return Err(fail("ambiguous: several predictions".into()));
            }
            let pred = by_id.get(rec.id.as_str()).ok_or_else(|| fail("missing prediction".into()))?;
            score_sample_with(&pred.output_text, rec, extractor, classify_max_edits)
                .map(|score| SampleRow {
                    id: rec.id.clone(),
                    score,
                })
                .map_err(|e| fail(e.to_string()))
        })
        .collect();

    let mut samples = Vec::new();
    for r in results {
        match r {
            Ok(row) => samples.push(row),
            Err(f) => failures.push(f),
        }
    }
    let all: Vec<SampleScore> = samples.iter().map(|r| r.score).collect();
    let tampered: Vec<SampleScore> = all.iter().copied().filter(|s| s.gt_tampered).collect();
    ScoreReport {
        aggregate: aggregate(&all).ok(),
        tampered_only: aggregate(&tampered).ok(),
        degenerate_samples: all.iter().filter(|s| s.degenerate).count(),
        samples,
        failures,
    }
}
