//! Segmentation from multiple noisy annotators with learned per-pixel label
//! re-weighting and a roughness-attention focal loss.
//!
//! The crate covers label fusion ([`fusion`]), the attention-weighted focal
//! loss ([`gafl`]), the composite loss and its schedule ([`reweighting`]),
//! small trainable networks ([`nets`]), data handling ([`data`]), Dice
//! metrics ([`metrics`]) and the training/evaluation harness ([`harness`]).

pub mod data;
pub mod error;
pub mod fusion;
pub mod gafl;
pub mod harness;
pub mod metrics;
pub mod nets;
pub mod reweighting;
pub mod types;

pub use error::{Error, Result};
pub use fusion::{major_vote, major_vote_maps, TieRule};
pub use gafl::{focal_loss_map, gaf_loss_map, roughness_heatmap, FocalVariant, GaflConfig};
pub use harness::{Ablation, RunConfig, RunRecord};
pub use metrics::{dice_per_class, dice_report, Aggregation, DiceReport};
pub use nets::{SegNet, SegNetConfig, TrainableFunction, WeightNet, WeightNetConfig};
pub use reweighting::{composite_loss, lambdas, total_loss, LossBreakdown, ScheduleState};
pub use types::{
    AttentionMap, ExpertSet, ImageTensor, LabelMap, LossMap, ProbMap, Validate, Violation,
    WeightHeatmap,
};

/// Derive an independent stream seed from `(seed, stream)` (splitmix64).
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        ^ stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
