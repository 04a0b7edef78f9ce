//! Run configuration, stored as JSON with one field per setting.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fusion::TieRule;
use crate::gafl::GaflConfig;
use crate::metrics::Aggregation;
use crate::nets::{SegNetConfig, WeightNetConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    pub use_gafl: bool,
    pub use_reweighting: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            use_gafl: true,
            use_reweighting: true,
        }
    }
}

impl Ablation {
    pub const BASELINE: Ablation = Ablation {
        use_gafl: false,
        use_reweighting: false,
    };
    pub const GAFL_ONLY: Ablation = Ablation {
        use_gafl: true,
        use_reweighting: false,
    };
    pub const REWEIGHTING_ONLY: Ablation = Ablation {
        use_gafl: false,
        use_reweighting: true,
    };
    pub const FULL: Ablation = Ablation {
        use_gafl: true,
        use_reweighting: true,
    };

    pub fn label(&self) -> &'static str {
        match (self.use_gafl, self.use_reweighting) {
            (false, false) => "baseline",
            (true, false) => "gafl",
            (false, true) => "reweighting",
            (true, true) => "full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset_dir: PathBuf,
    pub gafl: GaflConfig,
    pub tie_rule: TieRule,
    pub seg_net: SegNetConfig,
    pub weight_net: WeightNetConfig,
    pub optimizer: OptimizerConfig,
    pub total_iters: u64,
    pub checkpoint_every: u64,
    pub step_iters: u64,
    pub ablation: Ablation,
    pub seed: u64,
    /// Random flip/rotation/rescale of each training sample.
    pub augment: bool,
    pub dice_aggregation: Aggregation,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_dir: PathBuf::from("data"),
            gafl: GaflConfig::default(),
            tie_rule: TieRule::default(),
            seg_net: SegNetConfig::default(),
            weight_net: WeightNetConfig::default(),
            optimizer: OptimizerConfig::default(),
            total_iters: 2000,
            checkpoint_every: 100,
            step_iters: 100,
            ablation: Ablation::default(),
            seed: 0,
            augment: true,
            dice_aggregation: Aggregation::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.checkpoint_every < 1 || self.total_iters < self.checkpoint_every {
            return Err(Error::Config(format!(
                "need total_iters >= checkpoint_every >= 1, got {} and {}",
                self.total_iters, self.checkpoint_every
            )));
        }
        if self.step_iters < 1 {
            return Err(Error::Config("step_iters must be >= 1".into()));
        }
        let opt = &self.optimizer;
        if !(opt.learning_rate > 0.0) || !opt.learning_rate.is_finite() {
            return Err(Error::Config("optimizer.learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&opt.momentum) {
            return Err(Error::Config("optimizer.momentum must be in [0, 1)".into()));
        }
        self.gafl.validate()?;
        self.seg_net.validate()?;
        self.weight_net.validate()?;
        if self.seg_net.in_channels != self.weight_net.in_channels {
            return Err(Error::Config(format!(
                "seg_net.in_channels = {} but weight_net.in_channels = {}",
                self.seg_net.in_channels, self.weight_net.in_channels
            )));
        }
        self.gafl.alpha_for(self.seg_net.num_classes)?;
        Ok(())
    }

    /// Checks the configuration against the data it will train on.
    pub fn check_dataset(&self, ds: &Dataset) -> Result<()> {
        if ds.num_classes != self.seg_net.num_classes {
            return Err(Error::Config(format!(
                "dataset has {} classes, seg_net.num_classes = {}",
                ds.num_classes, self.seg_net.num_classes
            )));
        }
        if ds.channels() != self.seg_net.in_channels {
            return Err(Error::Config(format!(
                "dataset images have {} channels, seg_net.in_channels = {}",
                ds.channels(),
                self.seg_net.in_channels
            )));
        }
        if self.ablation.use_reweighting && ds.num_experts() != self.weight_net.num_experts {
            return Err(Error::Config(format!(
                "training split has {} experts, weight_net.num_experts = {}",
                ds.num_experts(),
                self.weight_net.num_experts
            )));
        }
        if ds.num_experts() == 0 {
            return Err(Error::NoAnnotators);
        }
        Ok(())
    }

    /// Hex SHA-256 over everything that shapes the trained model: network
    /// architectures, loss settings, ablation switches.
    pub fn fingerprint(&self) -> String {
        let relevant = serde_json::json!({
            "gafl": self.gafl,
            "tie_rule": self.tie_rule,
            "seg_net": self.seg_net,
            "weight_net": self.weight_net,
            "ablation": self.ablation,
        });
        let digest = Sha256::digest(relevant.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_roundtrip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
        assert_eq!(cfg.optimizer.learning_rate, 0.01);
        assert_eq!(
            (cfg.total_iters, cfg.checkpoint_every, cfg.step_iters),
            (2000, 100, 100)
        );
    }

    #[test]
    fn cadence_must_fit_inside_the_run() {
        let cfg = RunConfig {
            total_iters: 50,
            checkpoint_every: 100,
            ..RunConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = RunConfig {
            checkpoint_every: 0,
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"total_itres": 5}"#).is_err());
        let partial: RunConfig = serde_json::from_str(r#"{"seed": 9}"#).unwrap();
        assert_eq!(partial.seed, 9);
    }

    #[test]
    fn fingerprint_tracks_model_settings_only() {
        let a = RunConfig::default();
        let b = RunConfig {
            seed: 7,
            total_iters: 10,
            checkpoint_every: 5,
            ..a.clone()
        };
        assert_eq!(a.fingerprint(), b.fingerprint());
        let mut c = a.clone();
        c.seg_net.channels = vec![4];
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }
}
