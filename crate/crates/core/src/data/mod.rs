//! Datasets: synthetic generation, Gleason ingestion, augmentation, splits.

pub mod augment;
pub mod gleason;
pub mod io;
pub mod manifest;
pub mod synth;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use augment::{augment, Rotation, Transform};
pub use gleason::remap_gleason;
pub use manifest::{
    build_splits, gleason_candidates, Candidate, DatasetManifest, DatasetMode, ExpertLabel,
    ManifestEntry, Split, SplitPolicy,
};
pub use synth::{
    default_profiles, generate_scene, simulate_expert, AnnotatorProfile, SyntheticSceneConfig,
};

use crate::error::{Error, Result};
use crate::fusion::{major_vote, TieRule};
use crate::types::{ExpertSet, ImageTensor, LabelMap};

/// One image with its annotations and the map it is scored against.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: ImageTensor,
    pub experts: ExpertSet,
    /// Exact ground truth for synthetic data, the expert vote otherwise.
    pub reference: LabelMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub mode: DatasetMode,
    pub num_classes: usize,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[Sample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// Checks that every split is non-empty and that training samples share
    /// one annotator set and one channel count.
    pub fn validate(&self) -> Result<()> {
        for split in Split::ALL {
            if self.split(split).is_empty() {
                return Err(Error::EmptySplit(split.to_string()));
            }
        }
        let first = &self.train[0];
        for s in self.train.iter().chain(&self.val).chain(&self.test) {
            if s.image.channels() != first.image.channels() {
                return Err(Error::Dataset(format!(
                    "sample `{}` has a different channel count",
                    s.id
                )));
            }
            if s.experts.num_classes() != self.num_classes
                || s.reference.num_classes() != self.num_classes
            {
                return Err(Error::Dataset(format!(
                    "sample `{}` has a different class count",
                    s.id
                )));
            }
            if s.experts.dim() != (s.image.height(), s.image.width())
                || s.reference.dim() != s.experts.dim()
            {
                return Err(Error::Dataset(format!(
                    "sample `{}` has labels that do not match its image",
                    s.id
                )));
            }
        }
        for s in &self.train {
            if s.experts.expert_ids() != first.experts.expert_ids() {
                return Err(Error::Dataset(format!(
                    "training sample `{}` has experts {:?}, expected {:?}",
                    s.id,
                    s.experts.expert_ids(),
                    first.experts.expert_ids()
                )));
            }
        }
        Ok(())
    }

    pub fn num_experts(&self) -> usize {
        self.train.first().map_or(0, |s| s.experts.len())
    }

    pub fn channels(&self) -> usize {
        self.train.first().map_or(0, |s| s.image.channels())
    }

    /// Load from a directory holding `manifest.json`. Gleason codes are
    /// remapped; their reference maps are the vote under `rule`.
    pub fn load(dir: &Path, rule: TieRule) -> Result<Self> {
        let manifest = DatasetManifest::load(dir)?;
        let mut ds = Dataset {
            mode: manifest.mode,
            num_classes: manifest.num_classes,
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for entry in &manifest.entries {
            let sample = load_entry(dir, &manifest, entry, rule)?;
            match entry.split {
                Split::Train => ds.train.push(sample),
                Split::Val => ds.val.push(sample),
                Split::Test => ds.test.push(sample),
            }
        }
        ds.validate()?;
        Ok(ds)
    }
}

fn load_entry(
    dir: &Path,
    manifest: &DatasetManifest,
    entry: &ManifestEntry,
    rule: TieRule,
) -> Result<Sample> {
    let image = io::read_image(&dir.join(&entry.image))?;
    let k = manifest.num_classes;
    let read = |p: &PathBuf| -> Result<LabelMap> {
        let path = dir.join(p);
        match manifest.mode {
            DatasetMode::Synthetic => io::read_labels(&path, k),
            DatasetMode::Gleason => remap_gleason(io::read_raw_labels(&path)?.view()),
        }
        .map_err(|e| Error::Dataset(format!("entry `{}`: {e}", entry.id)))
    };
    let labels = entry
        .experts
        .iter()
        .map(|e| read(&e.path))
        .collect::<Result<Vec<_>>>()?;
    let ids = entry.experts.iter().map(|e| e.id.clone()).collect();
    let experts = ExpertSet::new(labels, ids)?;
    let reference = match &entry.gt {
        Some(p) => read(p)?,
        None => major_vote(&experts, rule)?,
    };
    Ok(Sample {
        id: entry.id.clone(),
        image,
        experts,
        reference,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthDatasetConfig {
    pub scenes: usize,
    pub scene: SyntheticSceneConfig,
    pub num_experts: usize,
    /// Defaults to [`default_profiles`].
    pub profiles: Option<Vec<AnnotatorProfile>>,
    pub seed: u64,
}

impl Default for SynthDatasetConfig {
    fn default() -> Self {
        Self {
            scenes: 40,
            scene: SyntheticSceneConfig::default(),
            num_experts: 3,
            profiles: None,
            seed: 0,
        }
    }
}

impl SynthDatasetConfig {
    pub fn profiles(&self) -> Result<Vec<AnnotatorProfile>> {
        let k = self.scene.num_classes;
        let profiles = match &self.profiles {
            Some(p) => p.clone(),
            None => default_profiles(k, self.num_experts, self.seed),
        };
        if profiles.len() != self.num_experts {
            return Err(Error::Config(format!(
                "{} annotator profiles given for {} experts",
                profiles.len(),
                self.num_experts
            )));
        }
        for p in &profiles {
            p.validate(k)?;
        }
        Ok(profiles)
    }
}

/// Scenes with ground truth and simulated annotators, in generation order.
pub fn generate_samples(cfg: &SynthDatasetConfig) -> Result<Vec<Sample>> {
    if cfg.num_experts == 0 {
        return Err(Error::NoAnnotators);
    }
    let profiles = cfg.profiles()?;
    (0..cfg.scenes)
        .map(|i| {
            let scene_cfg = SyntheticSceneConfig {
                seed: crate::mix_seed(cfg.seed, i as u64),
                ..cfg.scene.clone()
            };
            let (image, gt) = generate_scene(&scene_cfg)?;
            let labels = profiles
                .iter()
                .map(|p| {
                    let p = p
                        .clone()
                        .with_seed(crate::mix_seed(p.seed, 1_000_003 + i as u64));
                    simulate_expert(&gt, &p)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Sample {
                id: format!("scene_{i:04}"),
                image,
                experts: ExpertSet::with_default_ids(labels)?,
                reference: gt,
            })
        })
        .collect()
}

/// Generate a synthetic dataset in memory with the 80/10/10 split.
pub fn generate_synthetic(cfg: &SynthDatasetConfig) -> Result<Dataset> {
    let samples = generate_samples(cfg)?;
    let n = samples.len();
    let n_val = (n as f64 * 0.1).round() as usize;
    let n_test = (n as f64 * 0.1).round() as usize;
    let n_train = n.saturating_sub(n_val + n_test);
    let mut it = samples.into_iter();
    let ds = Dataset {
        mode: DatasetMode::Synthetic,
        num_classes: cfg.scene.num_classes,
        train: it.by_ref().take(n_train).collect(),
        val: it.by_ref().take(n_val).collect(),
        test: it.collect(),
    };
    ds.validate()?;
    Ok(ds)
}

/// Write a synthetic dataset as `images/`, `gt/`, `experts/<id>/` PNGs plus
/// `manifest.json`.
pub fn write_synthetic(cfg: &SynthDatasetConfig, dir: &Path) -> Result<DatasetManifest> {
    let samples = generate_samples(cfg)?;
    let mut candidates = Vec::with_capacity(samples.len());
    for s in &samples {
        let image = PathBuf::from("images").join(format!("{}.png", s.id));
        let gt = PathBuf::from("gt").join(format!("{}.png", s.id));
        io::write_image(&s.image, &dir.join(&image))?;
        io::write_labels(&s.reference, &dir.join(&gt))?;
        let mut experts = Vec::new();
        for (id, labels) in s.experts.expert_ids().iter().zip(s.experts.labels()) {
            let path = PathBuf::from("experts")
                .join(id)
                .join(format!("{}.png", s.id));
            io::write_labels(labels, &dir.join(&path))?;
            experts.push(ExpertLabel {
                id: id.clone(),
                path,
            });
        }
        candidates.push(Candidate {
            id: s.id.clone(),
            image,
            gt: Some(gt),
            experts,
        });
    }
    let manifest = build_splits(
        candidates,
        SplitPolicy::Synthetic {
            num_classes: cfg.scene.num_classes,
        },
        dir,
    )?;
    manifest.save(dir)?;
    Ok(manifest)
}
