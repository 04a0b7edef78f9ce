//! Scoring trained networks against a dataset split.

use std::path::Path;

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use crate::data::{Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::metrics::{dice_report, Aggregation, DiceReport};
use crate::nets::SegNet;
use crate::types::LabelMap;

/// Per-pixel argmax of the network's class distribution for each sample.
pub fn predict_labels(seg: &SegNet, samples: &[Sample]) -> Result<Vec<LabelMap>> {
    samples
        .iter()
        .map(|s| Ok(seg.predict(&s.image)?.argmax()))
        .collect()
}

pub fn evaluate_net(
    seg: &SegNet,
    samples: &[Sample],
    num_classes: usize,
    aggregation: Aggregation,
) -> Result<DiceReport> {
    if samples.is_empty() {
        return Err(Error::EmptySplit("evaluation split".into()));
    }
    let preds = predict_labels(seg, samples)?;
    let refs: Vec<LabelMap> = samples.iter().map(|s| s.reference.clone()).collect();
    dice_report(&preds, &refs, num_classes, aggregation)
}

/// Dice of the checkpoint's segmentation network on one split.
pub fn evaluate(ckpt: &Checkpoint, data: &Dataset, split: Split) -> Result<DiceReport> {
    let cfg = &ckpt.header.config;
    cfg.check_dataset(data)?;
    evaluate_net(
        &ckpt.seg_net()?,
        data.split(split),
        data.num_classes,
        cfg.dice_aggregation,
    )
}

/// Loads a checkpoint and scores it. The dataset defaults to the one the run
/// trained on; `expected` is checked against the checkpoint's fingerprint
/// before anything is evaluated.
pub fn evaluate_file(
    checkpoint: &Path,
    split: Split,
    dataset_dir: Option<&Path>,
    expected: Option<&RunConfig>,
) -> Result<DiceReport> {
    let ckpt = Checkpoint::load(checkpoint)?;
    if let Some(cfg) = expected {
        ckpt.check_fingerprint(cfg)?;
    }
    let cfg = &ckpt.header.config;
    let dir = dataset_dir.unwrap_or(&cfg.dataset_dir);
    let data = Dataset::load(dir, cfg.tie_rule)?;
    evaluate(&ckpt, &data, split)
}
