//! Dataset manifests and train/val/test split construction.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::gleason::{ALL_EXPERTS, GLEASON_CLASSES, TRAIN_EXPERTS};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetMode {
    /// Generated scenes with exact ground truth; labels are class ids.
    Synthetic,
    /// Raw Gleason codes, remapped on load; references are expert votes.
    Gleason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertLabel {
    pub id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<PathBuf>,
    pub experts: Vec<ExpertLabel>,
    pub split: Split,
}

/// Paths are relative to the directory holding `manifest.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub mode: DatasetMode,
    pub num_classes: usize,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(Error::Dataset(format!(
                "no {MANIFEST_FILE} in {}",
                dir.display()
            )));
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Self = serde_json::from_str(&text)?;
        manifest.validate(dir)?;
        Ok(manifest)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Every referenced file exists, and expert ids agree within each split.
    pub fn validate(&self, root: &Path) -> Result<()> {
        for entry in &self.entries {
            check_files(entry, root)?;
            if entry.experts.is_empty() {
                return Err(Error::Dataset(format!(
                    "entry `{}` has no expert labels",
                    entry.id
                )));
            }
            if self.mode == DatasetMode::Synthetic && entry.gt.is_none() {
                return Err(Error::Dataset(format!(
                    "synthetic entry `{}` has no ground truth",
                    entry.id
                )));
            }
        }
        for split in Split::ALL {
            let mut ids: Option<(&str, Vec<&str>)> = None;
            for entry in self.split(split) {
                let these: Vec<&str> = entry.experts.iter().map(|e| e.id.as_str()).collect();
                match &ids {
                    None => ids = Some((&entry.id, these)),
                    Some((first, want)) if *want != these => {
                        return Err(Error::Dataset(format!(
                            "entry `{}` has experts {these:?} but `{first}` in the same {split} split has {want:?}",
                            entry.id
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

fn check_files(entry: &ManifestEntry, root: &Path) -> Result<()> {
    let missing = |what: &str, p: &Path| {
        Error::Dataset(format!(
            "entry `{}`: missing {what} file {}",
            entry.id,
            root.join(p).display()
        ))
    };
    if !root.join(&entry.image).is_file() {
        return Err(missing("image", &entry.image));
    }
    if let Some(gt) = &entry.gt {
        if !root.join(gt).is_file() {
            return Err(missing("ground-truth", gt));
        }
    }
    for e in &entry.experts {
        if !root.join(&e.path).is_file() {
            return Err(missing(&format!("expert `{}`", e.id), &e.path));
        }
    }
    Ok(())
}

/// An image with whatever annotations exist for it, before split assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub id: String,
    pub image: PathBuf,
    pub gt: Option<PathBuf>,
    pub experts: Vec<ExpertLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitPolicy {
    /// 80/10/10 in candidate order.
    Synthetic { num_classes: usize },
    /// Fully annotated images form the test split; images covered by the
    /// shared annotator subset are divided into train and validation.
    Gleason { val_fraction: f64 },
}

fn counts_by_fraction(n: usize, frac: f64) -> usize {
    (n as f64 * frac).round() as usize
}

pub fn build_splits(
    candidates: Vec<Candidate>,
    policy: SplitPolicy,
    root: &Path,
) -> Result<DatasetManifest> {
    let manifest = match policy {
        SplitPolicy::Synthetic { num_classes } => {
            let n = candidates.len();
            let n_val = counts_by_fraction(n, 0.1);
            let n_test = counts_by_fraction(n, 0.1);
            let n_train = n.saturating_sub(n_val + n_test);
            let entries = candidates
                .into_iter()
                .enumerate()
                .map(|(i, c)| {
                    let split = if i < n_train {
                        Split::Train
                    } else if i < n_train + n_val {
                        Split::Val
                    } else {
                        Split::Test
                    };
                    ManifestEntry {
                        id: c.id,
                        image: c.image,
                        gt: c.gt,
                        experts: c.experts,
                        split,
                    }
                })
                .collect();
            DatasetManifest {
                mode: DatasetMode::Synthetic,
                num_classes,
                entries,
            }
        }
        SplitPolicy::Gleason { val_fraction } => {
            if !(0.0..1.0).contains(&val_fraction) {
                return Err(Error::Config("val_fraction must be in [0, 1)".into()));
            }
            let mut test = Vec::new();
            let mut train_val = Vec::new();
            for c in candidates {
                let have: BTreeSet<&str> = c.experts.iter().map(|e| e.id.as_str()).collect();
                if ALL_EXPERTS.iter().all(|id| have.contains(id)) {
                    let experts = ordered_subset(&c, &ALL_EXPERTS);
                    test.push(ManifestEntry {
                        id: c.id,
                        image: c.image,
                        gt: c.gt,
                        experts,
                        split: Split::Test,
                    });
                } else if TRAIN_EXPERTS.iter().all(|id| have.contains(id)) {
                    let experts = ordered_subset(&c, &TRAIN_EXPERTS);
                    train_val.push(ManifestEntry {
                        id: c.id,
                        image: c.image,
                        gt: c.gt,
                        experts,
                        split: Split::Train,
                    });
                }
            }
            let n_val = counts_by_fraction(train_val.len(), val_fraction);
            let n_train = train_val.len() - n_val;
            for e in &mut train_val[n_train..] {
                e.split = Split::Val;
            }
            let mut entries = train_val;
            entries.extend(test);
            DatasetManifest {
                mode: DatasetMode::Gleason,
                num_classes: GLEASON_CLASSES,
                entries,
            }
        }
    };
    for split in Split::ALL {
        if manifest.split(split).next().is_none() {
            return Err(Error::EmptySplit(split.to_string()));
        }
    }
    manifest.validate(root)?;
    Ok(manifest)
}

fn ordered_subset(c: &Candidate, ids: &[&str]) -> Vec<ExpertLabel> {
    ids.iter()
        .map(|id| {
            c.experts
                .iter()
                .find(|e| e.id == *id)
                .cloned()
                .expect("coverage checked")
        })
        .collect()
}

/// Scan a Gleason-style layout: `images/<stem>.jpg|png` and
/// `Maps<k>_T/<stem>_classimg_nonconvex.png` for annotators `k = 1..=6`.
pub fn gleason_candidates(root: &Path, images_dir: &str) -> Result<Vec<Candidate>> {
    let dir = root.join(images_dir);
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    let mut out = Vec::new();
    for path in files {
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let experts: Vec<ExpertLabel> = ALL_EXPERTS
            .iter()
            .filter_map(|id| {
                let rel = PathBuf::from(format!("Maps{id}_T"))
                    .join(format!("{stem}_classimg_nonconvex.png"));
                root.join(&rel).is_file().then(|| ExpertLabel {
                    id: (*id).to_string(),
                    path: rel,
                })
            })
            .collect();
        if experts.is_empty() {
            continue;
        }
        out.push(Candidate {
            id: stem.to_string(),
            image: PathBuf::from(images_dir).join(path.file_name().unwrap()),
            gt: None,
            experts,
        });
    }
    Ok(out)
}
