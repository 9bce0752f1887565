use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::TamperRecord;
use crate::imaging::{iou, BBox};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub predictions: usize,
    pub ground_truths: usize,
}

impl DetectionScores {
    fn from_counts(tp: usize, n_pred: usize, n_gt: usize) -> Self {
        let ratio = |num: usize, den: usize, other: usize| {
            if den == 0 {
                if other == 0 { 1.0 } else { 0.0 }
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, n_pred, n_gt);
        let recall = ratio(tp, n_gt, n_pred);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            true_positives: tp,
            predictions: n_pred,
            ground_truths: n_gt,
        }
    }
}

/// Greedy one-to-one matching by descending IoU; pairs at or above `iou_thresh` count.
fn match_count(preds: &[BBox], gts: &[BBox], iou_thresh: f64) -> usize {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in preds.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            let v = iou(p, g);
            if v >= iou_thresh {
                pairs.push((v, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = vec![false; preds.len()];
    let mut used_g = vec![false; gts.len()];
    let mut tp = 0;
    for (_, i, j) in pairs {
        if !used_p[i] && !used_g[j] {
            used_p[i] = true;
            used_g[j] = true;
            tp += 1;
        }
    }
    tp
}

/// Precision, recall and F1 for one image. Empty denominators give 1 when both
/// sides are empty and 0 otherwise.
pub fn detection_prf(preds: &[BBox], gts: &[BBox], iou_thresh: f64) -> DetectionScores {
    assert!(iou_thresh > 0.0 && iou_thresh <= 1.0, "IoU threshold must lie in (0, 1]");
    DetectionScores::from_counts(match_count(preds, gts, iou_thresh), preds.len(), gts.len())
}

/// One line of a detection predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionPrediction {
    pub id: String,
    #[serde(default)]
    pub boxes: Vec<BBox>,
}

/// Corpus-level scores from summed per-image counts. Records without a
/// prediction line count as predicting no boxes.
pub fn evaluate_detections(
    records: &[TamperRecord],
    preds: &[DetectionPrediction],
    iou_thresh: f64,
) -> DetectionScores {
    assert!(iou_thresh > 0.0 && iou_thresh <= 1.0, "IoU threshold must lie in (0, 1]");
    let by_id: HashMap<&str, &[BBox]> = preds.iter().map(|p| (p.id.as_str(), p.boxes.as_slice())).collect();
    let (mut tp, mut np, mut ng) = (0, 0, 0);
    for rec in records {
        let p = by_id.get(rec.id.as_str()).copied().unwrap_or(&[]);
        tp += match_count(p, &rec.boxes, iou_thresh);
        np += p.len();
        ng += rec.boxes.len();
    }
    DetectionScores::from_counts(tp, np, ng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_is_perfect() {
        let g = vec![BBox::new(0, 0, 10, 10), BBox::new(20, 20, 40, 30)];
        let s = detection_prf(&g, &g, 0.5);
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn no_predictions() {
        let s = detection_prf(&[], &[BBox::new(0, 0, 4, 4)], 0.5);
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        let s = detection_prf(&[], &[], 0.5);
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn one_third_overlap_below_threshold() {
        let preds = [BBox::new(0, 0, 10, 10), BBox::new(100, 100, 110, 110)];
        let gts = [BBox::new(5, 0, 15, 10), BBox::new(200, 200, 210, 210)];
        let s = detection_prf(&preds, &gts, 0.5);
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        let s = detection_prf(&preds, &gts, 0.3);
        assert_eq!((s.precision, s.recall), (0.5, 0.5));
    }

    #[test]
    fn greedy_prefers_best_pair() {
        let gts = [BBox::new(0, 0, 10, 10)];
        let preds = [BBox::new(1, 0, 11, 10), BBox::new(0, 0, 10, 10)];
        let s = detection_prf(&preds, &gts, 0.5);
        assert_eq!(s.true_positives, 1);
        assert_eq!(s.precision, 0.5);
    }

    proptest! {
        #[test]
        fn recall_non_increasing_in_threshold(
            raw in proptest::collection::vec((0u32..40, 0u32..40, 1u32..15, 1u32..15), 1..6),
            shift in proptest::collection::vec((0u32..6, 0u32..6), 6),
        ) {
            let gts: Vec<BBox> = raw.iter().map(|&(x, y, w, h)| BBox::from_origin(x, y, w, h)).collect();
            let preds: Vec<BBox> = raw.iter().zip(&shift)
                .map(|(&(x, y, w, h), &(dx, dy))| BBox::from_origin(x + dx, y + dy, w, h))
                .collect();
            let mut prev = f64::INFINITY;
            for t in [0.1, 0.3, 0.5, 0.7, 0.9, 1.0] {
                let r = detection_prf(&preds, &gts, t).recall;
                prop_assert!(r <= prev);
                prev = r;
            }
        }
    }
}
