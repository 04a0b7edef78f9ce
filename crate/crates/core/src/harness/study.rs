//! Ablation studies over the {GAFL, re-weighting} switches on synthetic data.

use serde::{Deserialize, Serialize};

use super::config::{Ablation, RunConfig};
use super::train::{RunRecord, Trainer};
use crate::data::{generate_synthetic, SynthDatasetConfig};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub data: SynthDatasetConfig,
    /// Template for every arm; seeds and ablation switches are overwritten.
    pub run: RunConfig,
    pub seeds: Vec<u64>,
    pub arms: Vec<Ablation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub seed: u64,
    pub ablation: Ablation,
    pub record: RunRecord,
}

impl ArmResult {
    pub fn test_mean(&self) -> f64 {
        self.record.final_test.mean
    }
}

/// Dataset and run configuration for one arm. The dataset depends only on
/// the seed, so every arm of a seed sees the same data.
pub fn arm_setup(
    study: &StudyConfig,
    seed: u64,
    ablation: Ablation,
) -> (SynthDatasetConfig, RunConfig) {
    let data = SynthDatasetConfig {
        seed: crate::mix_seed(study.data.seed, seed),
        ..study.data.clone()
    };
    let mut run = study.run.clone();
    run.seed = seed;
    run.seg_net.seed = crate::mix_seed(seed, 11);
    run.weight_net.seed = crate::mix_seed(seed, 12);
    run.ablation = ablation;
    (data, run)
}

/// Runs every arm for every seed, in seed-major order.
pub fn run_study(study: &StudyConfig) -> Result<Vec<ArmResult>> {
    let mut out = Vec::with_capacity(study.seeds.len() * study.arms.len());
    for &seed in &study.seeds {
        let (data_cfg, _) = arm_setup(study, seed, Ablation::BASELINE);
        let data = generate_synthetic(&data_cfg)?;
        for &ablation in &study.arms {
            let (_, run) = arm_setup(study, seed, ablation);
            let record = Trainer::new(run, &data)?.run()?;
            log::info!(
                "seed {seed} {}: test mean dice {:.4}",
                ablation.label(),
                record.final_test.mean
            );
            out.push(ArmResult {
                seed,
                ablation,
                record,
            });
        }
    }
    Ok(out)
}
