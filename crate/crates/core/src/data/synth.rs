//! Synthetic scenes with class-dependent texture, and simulated annotators.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ImageTensor, LabelMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSceneConfig {
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    /// Blob count per class; the entry for class 0 (background) is ignored.
    pub blobs: Vec<usize>,
    /// Amplitude of per-pixel texture noise inside each class.
    pub roughness: Vec<f64>,
    /// Blob radius range as a fraction of `min(height, width)`.
    pub radius_range: (f64, f64),
    /// Base RGB colour per class; a benign-to-dark ramp when absent.
    pub base_colors: Option<Vec<[f64; 3]>>,
    pub seed: u64,
}

impl Default for SyntheticSceneConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            num_classes: 4,
            blobs: vec![0, 2, 2, 1],
            roughness: vec![0.02, 0.05, 0.08, 0.16],
            radius_range: (0.1, 0.22),
            base_colors: None,
            seed: 0,
        }
    }
}

impl SyntheticSceneConfig {
    pub fn validate(&self) -> Result<()> {
        let k = self.num_classes;
        if k < 2 {
            return Err(Error::Config("scene num_classes must be >= 2".into()));
        }
        if self.height < 16 || self.width < 16 {
            return Err(Error::Config("scene size must be at least 16x16".into()));
        }
        if self.blobs.len() != k || self.roughness.len() != k {
            return Err(Error::Config(format!(
                "scene blobs/roughness need {k} entries, got {}/{}",
                self.blobs.len(),
                self.roughness.len()
            )));
        }
        if self.roughness.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::Config("scene roughness must be >= 0".into()));
        }
        let (lo, hi) = self.radius_range;
        if !(lo > 0.0 && lo <= hi && hi < 0.5) {
            return Err(Error::Config(
                "scene radius_range must satisfy 0 < lo <= hi < 0.5".into(),
            ));
        }
        if let Some(c) = &self.base_colors {
            if c.len() != k {
                return Err(Error::Config(format!(
                    "scene base_colors needs {k} entries"
                )));
            }
        }
        Ok(())
    }

    /// Default layout generalised to `num_classes`: two blobs per foreground
    /// class and one of the top class, texture rising from 0.02 to 0.16.
    /// Four classes give exactly [`Default::default`].
    pub fn with_classes(num_classes: usize) -> Self {
        let k = num_classes.max(2);
        if k == 4 {
            return Self::default();
        }
        let blobs = (0..k)
            .map(|c| {
                if c == 0 {
                    0
                } else if c == k - 1 {
                    1
                } else {
                    2
                }
            })
            .collect();
        let roughness = (0..k)
            .map(|c| 0.02 + 0.14 * c as f64 / (k - 1) as f64)
            .collect();
        Self {
            num_classes,
            blobs,
            roughness,
            ..Self::default()
        }
    }

    /// Same layout parameters with every class's texture removed.
    pub fn smooth(&self) -> Self {
        Self {
            roughness: vec![0.0; self.num_classes],
            ..self.clone()
        }
    }

    fn color(&self, class: usize) -> [f64; 3] {
        if let Some(c) = &self.base_colors {
            return c[class];
        }
        const BENIGN: [f64; 3] = [0.88, 0.72, 0.82];
        const DARK: [f64; 3] = [0.55, 0.34, 0.60];
        let t = (class as f64 / (self.num_classes - 1) as f64).sqrt();
        std::array::from_fn(|i| BENIGN[i] + t * (DARK[i] - BENIGN[i]))
    }
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Background of class 0 with irregular blobs of classes `1..K` painted in
/// increasing class order, textured by class. Intensities are quantized to
/// 8-bit levels so the image survives a PNG round trip unchanged.
pub fn generate_scene(cfg: &SyntheticSceneConfig) -> Result<(ImageTensor, LabelMap)> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut labels = Array2::<u8>::zeros((h, w));
    let side = h.min(w) as f64;
    for class in 1..cfg.num_classes {
        for _ in 0..cfg.blobs[class] {
            let cy = rng.random_range(0.0..h as f64);
            let cx = rng.random_range(0.0..w as f64);
            let ry = side * rng.random_range(cfg.radius_range.0..=cfg.radius_range.1);
            let rx = side * rng.random_range(cfg.radius_range.0..=cfg.radius_range.1);
            let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let lobes = rng.random_range(2..6) as f64;
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let wobble = rng.random_range(0.05..0.25);
            let (s, c) = theta.sin_cos();
            for y in 0..h {
                for x in 0..w {
                    let (dy, dx) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
                    let u = (dx * c + dy * s) / rx;
                    let v = (-dx * s + dy * c) / ry;
                    let angle = v.atan2(u);
                    let limit = 1.0 + wobble * (lobes * angle + phase).sin();
                    if u * u + v * v <= limit * limit {
                        labels[[y, x]] = class as u8;
                    }
                }
            }
            // The centre pixel always belongs to the blob.
            labels[[(cy as usize).min(h - 1), (cx as usize).min(w - 1)]] = class as u8;
        }
    }
    let colors: Vec<[f64; 3]> = (0..cfg.num_classes).map(|k| cfg.color(k)).collect();
    let mut img = Array3::<f64>::zeros((3, h, w));
    for y in 0..h {
        for x in 0..w {
            let k = usize::from(labels[[y, x]]);
            let amp = cfg.roughness[k];
            let noise = if amp > 0.0 {
                amp * rng.random_range(-1.0..=1.0)
            } else {
                0.0
            };
            for ch in 0..3 {
                img[[ch, y, x]] = quantize(colors[k][ch] + noise);
            }
        }
    }
    Ok((
        ImageTensor::new(img)?,
        LabelMap::new(labels, cfg.num_classes)?,
    ))
}

/// A simulated annotator: boundary morphology then per-pixel class confusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorProfile {
    /// Row `i` is the distribution of the reported class given true class `i`.
    pub confusion: Vec<Vec<f64>>,
    /// Positive grows non-background regions by this many pixels, negative
    /// shrinks them.
    #[serde(default)]
    pub boundary_radius: i32,
    #[serde(default)]
    pub seed: u64,
}

impl AnnotatorProfile {
    pub fn identity(num_classes: usize) -> Self {
        let confusion = (0..num_classes)
            .map(|i| {
                (0..num_classes)
                    .map(|j| if i == j { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        Self {
            confusion,
            boundary_radius: 0,
            seed: 0,
        }
    }

    /// Symmetric noise: keep the class with probability `1 - flip`, otherwise
    /// report one of the other classes uniformly.
    pub fn symmetric(num_classes: usize, flip: f64) -> Self {
        let off = flip / (num_classes - 1) as f64;
        let confusion = (0..num_classes)
            .map(|i| {
                (0..num_classes)
                    .map(|j| if i == j { 1.0 - flip } else { off })
                    .collect()
            })
            .collect();
        Self {
            confusion,
            boundary_radius: 0,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.confusion.len() != num_classes {
            return Err(Error::Config(format!(
                "confusion matrix has {} rows, expected {num_classes}",
                self.confusion.len()
            )));
        }
        for (i, row) in self.confusion.iter().enumerate() {
            if row.len() != num_classes || row.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::Config(format!("confusion row {i} is malformed")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("confusion row {i} sums to {s}")));
            }
        }
        Ok(())
    }
}

/// Grey-level dilation (`radius > 0`) or erosion (`radius < 0`) of the class
/// map with a disk. Because background is class 0, dilation grows the
/// non-background regions and erosion shrinks them.
fn morph(labels: &Array2<u8>, radius: i32) -> Array2<u8> {
    if radius == 0 {
        return labels.clone();
    }
    let (h, w) = labels.dim();
    let r = radius.unsigned_abs() as isize;
    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dy, dx)))
        .filter(|(dy, dx)| dy * dy + dx * dx <= r * r)
        .collect();
    Array2::from_shape_fn((h, w), |(y, x)| {
        let vals = offsets.iter().filter_map(|&(dy, dx)| {
            let (yy, xx) = (y as isize + dy, x as isize + dx);
            ((0..h as isize).contains(&yy) && (0..w as isize).contains(&xx))
                .then(|| labels[[yy as usize, xx as usize]])
        });
        if radius > 0 {
            vals.max().unwrap()
        } else {
            vals.min().unwrap()
        }
    })
}

pub fn simulate_expert(gt: &LabelMap, profile: &AnnotatorProfile) -> Result<LabelMap> {
    let k = gt.num_classes();
    profile.validate(k)?;
    let shaped = morph(gt.data(), profile.boundary_radius);
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let out = shaped.mapv(|truth| {
        let row = &profile.confusion[usize::from(truth)];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j as u8;
            }
        }
        // Rounding left `u` past the last bucket; take the last nonzero one.
        row.iter().rposition(|&p| p > 0.0).unwrap() as u8
    });
    LabelMap::new(out, k)
}

/// One reliable annotator followed by `num_experts - 1` biased ones. The
/// biased annotators under-call the highest class as the one below it, add
/// symmetric noise, and alternately grow or shrink region boundaries.
pub fn default_profiles(
    num_classes: usize,
    num_experts: usize,
    seed: u64,
) -> Vec<AnnotatorProfile> {
    const RELIABLE_FLIP: f64 = 0.03;
    const BIASED_FLIP: f64 = 0.15;
    const UNDERCALL: f64 = 0.7;
    let k = num_classes;
    (0..num_experts)
        .map(|e| {
            let s = crate::mix_seed(seed, e as u64 + 1);
            if e == 0 {
                return AnnotatorProfile::symmetric(k, RELIABLE_FLIP).with_seed(s);
            }
            let mut p = AnnotatorProfile::symmetric(k, BIASED_FLIP).with_seed(s);
            if k >= 3 {
                let top = k - 1;
                let off = (1.0 - UNDERCALL) * BIASED_FLIP / (k - 1) as f64;
                let row = &mut p.confusion[top];
                row.iter_mut().for_each(|v| *v = off);
                row[top - 1] = UNDERCALL;
                row[top] = 1.0 - UNDERCALL - off * (k - 2) as f64;
            }
            p.boundary_radius = if e % 2 == 1 { 1 } else { -1 };
            p
        })
        .collect()
}
