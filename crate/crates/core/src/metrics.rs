//! Dice overlap, per class and aggregated over a split.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::LabelMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Pool intersection and size counts over the whole split first.
    #[default]
    Micro,
    /// Average per-image Dice over the images where the class is present.
    Macro,
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Micro => "micro",
            Aggregation::Macro => "macro",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiceReport {
    /// `None` where the class appears in neither prediction nor ground truth.
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
    pub aggregation: Aggregation,
    /// Ground-truth pixel total per class.
    pub pixel_counts: Vec<u64>,
}

impl DiceReport {
    /// `{per_class: {"0": x, ...}, mean, aggregation, pixel_counts: {...}}`.
    pub fn to_json(&self) -> serde_json::Value {
        let per_class: serde_json::Map<_, _> = self
            .per_class
            .iter()
            .enumerate()
            .map(|(k, v)| (k.to_string(), serde_json::json!(v)))
            .collect();
        let counts: serde_json::Map<_, _> = self
            .pixel_counts
            .iter()
            .enumerate()
            .map(|(k, v)| (k.to_string(), serde_json::json!(v)))
            .collect();
        serde_json::json!({
            "per_class": per_class,
            "mean": self.mean,
            "aggregation": self.aggregation,
            "pixel_counts": counts,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    pred: u64,
    gt: u64,
    both: u64,
}

impl Counts {
    fn dice(&self) -> Option<f64> {
        let denom = self.pred + self.gt;
        (denom > 0).then(|| 2.0 * self.both as f64 / denom as f64)
    }
}

fn check_pair(pred: &LabelMap, gt: &LabelMap) -> Result<()> {
    if pred.dim() != gt.dim() {
        return Err(Error::shape(
            "prediction vs ground truth",
            gt.dim(),
            pred.dim(),
        ));
    }
    Ok(())
}

fn class_counts(pred: &LabelMap, gt: &LabelMap, k: usize) -> Vec<Counts> {
    let mut counts = vec![Counts::default(); k];
    for (&p, &g) in pred.data().iter().zip(gt.data().iter()) {
        let (p, g) = (usize::from(p), usize::from(g));
        if p < k {
            counts[p].pred += 1;
        }
        if g < k {
            counts[g].gt += 1;
        }
        if p == g && p < k {
            counts[p].both += 1;
        }
    }
    counts
}

/// `2|A ∩ B| / (|A| + |B|)` for class `k`; `None` when both masks are empty.
pub fn dice_per_class(pred: &LabelMap, gt: &LabelMap, k: u8) -> Result<Option<f64>> {
    check_pair(pred, gt)?;
    let k = usize::from(k);
    Ok(class_counts(pred, gt, k + 1)[k].dice())
}

pub fn dice_report(
    preds: &[LabelMap],
    gts: &[LabelMap],
    num_classes: usize,
    aggregation: Aggregation,
) -> Result<DiceReport> {
    if preds.is_empty() {
        return Err(Error::Dataset("dice report over an empty list".into()));
    }
    if preds.len() != gts.len() {
        return Err(Error::shape(
            "prediction/ground-truth list",
            gts.len(),
            preds.len(),
        ));
    }
    let mut pooled = vec![Counts::default(); num_classes];
    let mut macro_sum = vec![0.0; num_classes];
    let mut macro_n = vec![0usize; num_classes];
    for (p, g) in preds.iter().zip(gts) {
        check_pair(p, g)?;
        for (k, c) in class_counts(p, g, num_classes).into_iter().enumerate() {
            pooled[k].pred += c.pred;
            pooled[k].gt += c.gt;
            pooled[k].both += c.both;
            if let Some(d) = c.dice() {
                macro_sum[k] += d;
                macro_n[k] += 1;
            }
        }
    }
    let per_class: Vec<Option<f64>> = match aggregation {
        Aggregation::Micro => pooled.iter().map(Counts::dice).collect(),
        Aggregation::Macro => macro_sum
            .iter()
            .zip(&macro_n)
            .map(|(&s, &n)| (n > 0).then(|| s / n as f64))
            .collect(),
    };
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    Ok(DiceReport {
        per_class,
        mean,
        aggregation,
        pixel_counts: pooled.iter().map(|c| c.gt).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn map(rows: &[&[u8]], k: usize) -> LabelMap {
        let h = rows.len();
        let w = rows[0].len();
        LabelMap::new(Array2::from_shape_fn((h, w), |(y, x)| rows[y][x]), k).unwrap()
    }

    #[test]
    fn identical_masks_score_one() {
        let a = map(&[&[0, 1], &[1, 2]], 3);
        assert_eq!(dice_per_class(&a, &a, 1).unwrap(), Some(1.0));
    }

    #[test]
    fn disjoint_masks_score_zero() {
        let a = map(&[&[1, 0], &[0, 0]], 2);
        let b = map(&[&[0, 1], &[0, 0]], 2);
        assert_eq!(dice_per_class(&a, &b, 1).unwrap(), Some(0.0));
    }

    #[test]
    fn half_overlap() {
        // |A| = |B| = 4, |A ∩ B| = 2.
        let a = map(&[&[1, 1, 1, 1, 0, 0]], 2);
        let b = map(&[&[0, 0, 1, 1, 1, 1]], 2);
        assert_eq!(dice_per_class(&a, &b, 1).unwrap(), Some(0.5));
    }

    #[test]
    fn absent_class_is_none() {
        let a = map(&[&[0, 0]], 3);
        assert_eq!(dice_per_class(&a, &a, 2).unwrap(), None);
    }

    #[test]
    fn shape_mismatch_errors() {
        let a = map(&[&[0, 0]], 2);
        let b = map(&[&[0], &[0]], 2);
        assert!(dice_per_class(&a, &b, 0).is_err());
    }

    #[test]
    fn report_of_perfect_prediction() {
        let a = map(&[&[0, 1], &[3, 3]], 4);
        let r = dice_report(
            std::slice::from_ref(&a),
            std::slice::from_ref(&a),
            4,
            Aggregation::Micro,
        )
        .unwrap();
        assert_eq!(r.per_class, vec![Some(1.0), Some(1.0), None, Some(1.0)]);
        assert_eq!(r.mean, 1.0);
        assert_eq!(r.pixel_counts, vec![1, 1, 0, 2]);
    }

    #[test]
    fn never_predicted_class_scores_zero() {
        let gt = map(&[&[0, 3], &[0, 0]], 4);
        let pred = map(&[&[0, 2], &[0, 0]], 4);
        let r = dice_report(&[pred], &[gt], 4, Aggregation::Micro).unwrap();
        assert_eq!(r.per_class[3], Some(0.0));
    }

    #[test]
    fn micro_and_macro_differ_as_expected() {
        let gt1 = map(&[&[1, 1, 1, 1]], 2);
        let pr1 = map(&[&[1, 1, 1, 1]], 2);
        let gt2 = map(&[&[1, 0, 0, 0]], 2);
        let pr2 = map(&[&[0, 0, 0, 0]], 2);
        let preds = [pr1, pr2];
        let gts = [gt1, gt2];
        let micro = dice_report(&preds, &gts, 2, Aggregation::Micro).unwrap();
        let mac = dice_report(&preds, &gts, 2, Aggregation::Macro).unwrap();
        assert!((micro.per_class[1].unwrap() - 8.0 / 9.0).abs() < 1e-12);
        assert!((mac.per_class[1].unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(mac.aggregation.to_string(), "macro");
    }

    #[test]
    fn empty_list_errors() {
        assert!(dice_report(&[], &[], 2, Aggregation::Micro).is_err());
    }

    #[test]
    fn json_shape() {
        let a = map(&[&[0, 1]], 2);
        let j = dice_report(
            std::slice::from_ref(&a),
            std::slice::from_ref(&a),
            2,
            Aggregation::Micro,
        )
        .unwrap()
        .to_json();
        assert_eq!(j["aggregation"], "micro");
        assert_eq!(j["per_class"]["1"], 1.0);
        assert_eq!(j["pixel_counts"]["0"], 1);
    }
}
