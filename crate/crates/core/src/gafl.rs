//! Roughness attention and the attention-weighted focal loss.
//!
//! The attention map is `lambda_a * |I - G(I)| + lambda_b`, where `G` is a
//! truncated Gaussian blur and the absolute difference is averaged over
//! channels. The loss map is that attention multiplied pixel-wise with the
//! focal loss of the prediction against a target label map.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{AttentionMap, ImageTensor, LabelMap, LossMap, ProbMap};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before the focal term.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocalVariant {
    /// `-alpha * (1 - p)^gamma * ln(p)`.
    #[default]
    LogForm,
    /// `alpha * (1 - p)^gamma * p`, the polynomial form without a logarithm.
    Polynomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaflConfig {
    pub radius: usize,
    pub sigma: f64,
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub gamma: f64,
    /// Per-class weights; `None` means 1 for every class.
    pub alpha: Option<Vec<f64>>,
    pub focal_variant: FocalVariant,
}

impl Default for GaflConfig {
    fn default() -> Self {
        Self {
            radius: 5,
            sigma: 3.0,
            lambda_a: 50.0,
            lambda_b: 1.0,
            gamma: 2.0,
            alpha: None,
            focal_variant: FocalVariant::LogForm,
        }
    }
}

impl GaflConfig {
    pub fn validate(&self) -> Result<()> {
        if self.radius < 1 {
            return Err(Error::Config("gafl.radius must be >= 1".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config("gafl.sigma must be > 0".into()));
        }
        if !(self.lambda_a >= 0.0) || !self.lambda_a.is_finite() {
            return Err(Error::Config("gafl.lambda_a must be >= 0".into()));
        }
        if !(self.lambda_b > 0.0) || !self.lambda_b.is_finite() {
            return Err(Error::Config("gafl.lambda_b must be > 0".into()));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config("gafl.gamma must be >= 0".into()));
        }
        if let Some(alpha) = &self.alpha {
            if alpha.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
                return Err(Error::Config("gafl.alpha entries must be > 0".into()));
            }
        }
        Ok(())
    }

    /// Same focal settings with attention disabled (`lambda_a = 0`, `lambda_b = 1`).
    pub fn focal_only(&self) -> Self {
        Self {
            lambda_a: 0.0,
            lambda_b: 1.0,
            ..self.clone()
        }
    }

    pub fn alpha_for(&self, num_classes: usize) -> Result<Vec<f64>> {
        match &self.alpha {
            None => Ok(vec![1.0; num_classes]),
            Some(a) if a.len() == num_classes => Ok(a.clone()),
            Some(a) => Err(Error::shape("gafl.alpha length", num_classes, a.len())),
        }
    }
}

/// Normalized 1-D Gaussian taps for offsets `-radius..=radius`.
pub fn gaussian_kernel_1d(radius: usize, sigma: f64) -> Vec<f64> {
    let r = radius as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// The `(2r+1)^2` 2-D kernel; the outer product of the 1-D taps.
pub fn gaussian_kernel_2d(radius: usize, sigma: f64) -> Array2<f64> {
    let k = gaussian_kernel_1d(radius, sigma);
    let n = k.len();
    Array2::from_shape_fn((n, n), |(i, j)| k[i] * k[j])
}

/// Mirror an out-of-range index back into `0..n` without repeating the edge
/// sample (`d c b | a b c d | c b a`). Works for offsets larger than `n`.
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

fn blur_axis(src: &[f64], dst: &mut [f64], h: usize, w: usize, taps: &[f64], along_rows: bool) {
    let r = (taps.len() / 2) as isize;
    for y in 0..h {
        for x in 0..w {
            let centre = src[y * w + x];
            // Accumulated relative to the centre sample so that flat regions
            // come out bit-identical.
            let mut acc = 0.0;
            for (t, &k) in taps.iter().enumerate() {
                let d = t as isize - r;
                let v = if along_rows {
                    src[y * w + reflect_index(x as isize + d, w)]
                } else {
                    src[reflect_index(y as isize + d, h) * w + x]
                };
                acc += k * (v - centre);
            }
            dst[y * w + x] = centre + acc;
        }
    }
}

/// Per-channel truncated Gaussian blur with reflected borders.
pub fn gaussian_filter(img: &ImageTensor, radius: usize, sigma: f64) -> Result<ImageTensor> {
    if radius < 1 {
        return Err(Error::Config("gaussian radius must be >= 1".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::Config("gaussian sigma must be > 0".into()));
    }
    let (c, h, w) = img.dim();
    if h == 0 || w == 0 {
        return Err(Error::shape("gaussian_filter", "at least 1x1", (h, w)));
    }
    let taps = gaussian_kernel_1d(radius, sigma);
    let mut out = Array3::<f64>::zeros((c, h, w));
    let mut tmp = vec![0.0; h * w];
    let mut res = vec![0.0; h * w];
    for ch in 0..c {
        let plane: Vec<f64> = img
            .data()
            .index_axis(ndarray::Axis(0), ch)
            .iter()
            .copied()
            .collect();
        blur_axis(&plane, &mut tmp, h, w, &taps, true);
        blur_axis(&tmp, &mut res, h, w, &taps, false);
        for (dst, &v) in out
            .index_axis_mut(ndarray::Axis(0), ch)
            .iter_mut()
            .zip(&res)
        {
            *dst = v.clamp(0.0, 1.0);
        }
    }
    ImageTensor::new(out)
}

/// Roughness attention map `lambda_a * mean_c |I - G(I)| + lambda_b`.
pub fn roughness_heatmap(img: &ImageTensor, cfg: &GaflConfig) -> Result<AttentionMap> {
    cfg.validate()?;
    let blurred = gaussian_filter(img, cfg.radius, cfg.sigma)?;
    let (c, h, w) = img.dim();
    let mut heat = Array2::<f64>::zeros((h, w));
    for ((ch, y, x), &v) in img.data().indexed_iter() {
        heat[[y, x]] += (v - blurred.data()[[ch, y, x]]).abs();
    }
    heat.mapv_inplace(|d| cfg.lambda_a * (d / c as f64) + cfg.lambda_b);
    AttentionMap::new(heat)
}

/// Focal penalty for a single true-class probability (clamped first).
pub fn focal_value(p: f64, alpha: f64, gamma: f64, variant: FocalVariant) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let modulating = (1.0 - p).powf(gamma);
    match variant {
        FocalVariant::LogForm => -alpha * modulating * p.ln(),
        FocalVariant::Polynomial => alpha * modulating * p,
    }
}

/// `d focal_value / dp`, zero where the clamp is active.
pub fn focal_derivative(p: f64, alpha: f64, gamma: f64, variant: FocalVariant) -> f64 {
    if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
        return 0.0;
    }
    let q = 1.0 - p;
    let modulating = q.powf(gamma);
    let dmod = if gamma == 0.0 {
        0.0
    } else {
        -gamma * q.powf(gamma - 1.0)
    };
    match variant {
        FocalVariant::LogForm => -alpha * (dmod * p.ln() + modulating / p),
        FocalVariant::Polynomial => alpha * (dmod * p + modulating),
    }
}

fn check_pred_target(pred: &ProbMap, target: &LabelMap) -> Result<()> {
    if pred.spatial_dim() != target.dim() {
        return Err(Error::shape(
            "prediction vs target",
            pred.spatial_dim(),
            target.dim(),
        ));
    }
    if pred.num_classes() != target.num_classes() {
        return Err(Error::shape(
            "class count of prediction vs target",
            pred.num_classes(),
            target.num_classes(),
        ));
    }
    Ok(())
}

/// Per-pixel focal loss of `pred` against `target`.
pub fn focal_loss_map(pred: &ProbMap, target: &LabelMap, cfg: &GaflConfig) -> Result<LossMap> {
    check_pred_target(pred, target)?;
    let alpha = cfg.alpha_for(pred.num_classes())?;
    let p = pred.data();
    let map = Array2::from_shape_fn(target.dim(), |(y, x)| {
        let t = usize::from(target.get(y, x));
        focal_value(p[[t, y, x]], alpha[t], cfg.gamma, cfg.focal_variant)
    });
    LossMap::new(map)
}

/// Attention-weighted focal loss map.
pub fn gaf_loss_map(
    pred: &ProbMap,
    target: &LabelMap,
    heat: &AttentionMap,
    cfg: &GaflConfig,
) -> Result<LossMap> {
    if heat.dim() != target.dim() {
        return Err(Error::shape(
            "attention vs target",
            target.dim(),
            heat.dim(),
        ));
    }
    let focal = focal_loss_map(pred, target, cfg)?;
    LossMap::new(focal.data() * heat.data())
}
