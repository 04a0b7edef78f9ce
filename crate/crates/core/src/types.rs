//! Tensor-shaped domain types shared by every other module.
//!
//! Each type validates its data on construction, so a value that exists is a
//! value that satisfies its invariants. The `check` associated functions run
//! the same validation on raw arrays and report the first violation with its
//! index instead of failing.

use std::fmt;

use ndarray::{Array2, Array3, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Tolerance for "sums to one" checks on probability-like maps.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// The first invariant a tensor fails, with the offending index.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub invariant: &'static str,
    pub index: Vec<usize>,
    pub detail: String,
}

impl Violation {
    fn new(invariant: &'static str, index: Vec<usize>, detail: impl Into<String>) -> Self {
        Self {
            invariant,
            index,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {:?}", self.invariant, self.index)?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

impl std::error::Error for Violation {}

/// Re-validates an already constructed value.
pub trait Validate {
    fn validate(&self) -> Result<(), Violation>;
}

fn check_nonempty(h: usize, w: usize) -> Result<(), Violation> {
    if h == 0 || w == 0 {
        return Err(Violation::new(
            "spatial size must be at least 1x1",
            vec![h, w],
            "",
        ));
    }
    Ok(())
}

fn check_simplex(data: &Array3<f64>, what: &'static str) -> Result<(), Violation> {
    let (_, h, w) = data.dim();
    check_nonempty(h, w)?;
    if data.dim().0 == 0 {
        return Err(Violation::new(
            "channel count must be at least 1",
            vec![0],
            what,
        ));
    }
    for ((c, y, x), &v) in data.indexed_iter() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Violation::new(
                "entry outside [0, 1]",
                vec![c, y, x],
                format!("{what} value {v}"),
            ));
        }
    }
    for y in 0..h {
        for x in 0..w {
            let s: f64 = data.slice(ndarray::s![.., y, x]).sum();
            if (s - 1.0).abs() > SUM_TOLERANCE {
                return Err(Violation::new(
                    "per-pixel sum differs from 1",
                    vec![y, x],
                    format!("{what} sums to {s}"),
                ));
            }
        }
    }
    Ok(())
}

/// C x H x W image with intensities in [0, 1] and C in {1, 3}.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    data: Array3<f64>,
}

impl ImageTensor {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        Self::check(&data)?;
        Ok(Self { data })
    }

    pub fn check(data: &Array3<f64>) -> Result<(), Violation> {
        let (c, h, w) = data.dim();
        if c != 1 && c != 3 {
            return Err(Violation::new("channel count must be 1 or 3", vec![c], ""));
        }
        check_nonempty(h, w)?;
        for (idx, &v) in data.indexed_iter() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Violation::new(
                    "intensity outside [0, 1]",
                    vec![idx.0, idx.1, idx.2],
                    format!("value {v}"),
                ));
            }
        }
        Ok(())
    }

    /// 8-bit RGB, each value divided by 255.
    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let data = Array3::from_shape_fn((3, h as usize, w as usize), |(c, y, x)| {
            f64::from(img.get_pixel(x as u32, y as u32)[c]) / 255.0
        });
        Self { data }
    }

    pub fn from_gray8(img: &image::GrayImage) -> Self {
        let (w, h) = img.dimensions();
        let data = Array3::from_shape_fn((1, h as usize, w as usize), |(_, y, x)| {
            f64::from(img.get_pixel(x as u32, y as u32)[0]) / 255.0
        });
        Self { data }
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let (c, h, w) = self.data.dim();
        image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let px = |ch: usize| {
                (self.data[[ch.min(c - 1), y as usize, x as usize]] * 255.0).round() as u8
            };
            image::Rgb([px(0), px(1), px(2)])
        })
    }

    pub fn channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_inner(self) -> Array3<f64> {
        self.data
    }
}

impl Validate for ImageTensor {
    fn validate(&self) -> Result<(), Violation> {
        Self::check(&self.data)
    }
}

/// H x W map of class ids in `[0, num_classes)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    data: Array2<u8>,
    num_classes: usize,
}

impl LabelMap {
    pub fn new(data: Array2<u8>, num_classes: usize) -> Result<Self> {
        Self::check(data.view(), num_classes)?;
        Ok(Self { data, num_classes })
    }

    pub fn check(data: ArrayView2<'_, u8>, num_classes: usize) -> Result<(), Violation> {
        if !(2..=256).contains(&num_classes) {
            return Err(Violation::new(
                "class count must be in [2, 256]",
                vec![num_classes],
                "",
            ));
        }
        let (h, w) = data.dim();
        check_nonempty(h, w)?;
        for ((y, x), &v) in data.indexed_iter() {
            if usize::from(v) >= num_classes {
                return Err(Violation::new(
                    "class id out of range",
                    vec![y, x],
                    format!("id {v} with K = {num_classes}"),
                ));
            }
        }
        Ok(())
    }

    pub fn filled(h: usize, w: usize, class: u8, num_classes: usize) -> Result<Self> {
        Self::new(Array2::from_elem((h, w), class), num_classes)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn data(&self) -> &Array2<u8> {
        &self.data
    }

    pub fn into_inner(self) -> Array2<u8> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[[y, x]]
    }

    pub fn to_gray8(&self) -> image::GrayImage {
        let (h, w) = self.dim();
        image::GrayImage::from_fn(w as u32, h as u32, |x, y| {
            image::Luma([self.data[[y as usize, x as usize]]])
        })
    }

    pub fn from_gray8(img: &image::GrayImage, num_classes: usize) -> Result<Self> {
        let (w, h) = img.dimensions();
        let data = Array2::from_shape_fn((h as usize, w as usize), |(y, x)| {
            img.get_pixel(x as u32, y as u32)[0]
        });
        Self::new(data, num_classes)
    }
}

impl Validate for LabelMap {
    fn validate(&self) -> Result<(), Violation> {
        Self::check(self.data.view(), self.num_classes)
    }
}

/// K x H x W per-pixel class distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    data: Array3<f64>,
}

impl ProbMap {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        Self::check(&data)?;
        Ok(Self { data })
    }

    pub fn check(data: &Array3<f64>) -> Result<(), Violation> {
        check_simplex(data, "probability")
    }

    /// Softmax over the class axis of a K x H x W logit array.
    pub fn from_logits(logits: &Array3<f64>) -> Result<Self> {
        Self::new(softmax_axis0(logits))
    }

    pub fn num_classes(&self) -> usize {
        self.data.dim().0
    }

    pub fn spatial_dim(&self) -> (usize, usize) {
        let (_, h, w) = self.data.dim();
        (h, w)
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    /// Per-pixel argmax; ties go to the lowest class id.
    pub fn argmax(&self) -> LabelMap {
        let (k, h, w) = self.data.dim();
        let labels = Array2::from_shape_fn((h, w), |(y, x)| {
            let mut best = 0;
            for c in 1..k {
                if self.data[[c, y, x]] > self.data[[best, y, x]] {
                    best = c;
                }
            }
            best as u8
        });
        LabelMap {
            data: labels,
            num_classes: k,
        }
    }
}

impl Validate for ProbMap {
    fn validate(&self) -> Result<(), Violation> {
        Self::check(&self.data)
    }
}

/// N x H x W per-expert weights; each pixel is a distribution over experts.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightHeatmap {
    data: Array3<f64>,
}

impl WeightHeatmap {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        Self::check(&data)?;
        Ok(Self { data })
    }

    pub fn check(data: &Array3<f64>) -> Result<(), Violation> {
        check_simplex(data, "expert weight")
    }

    pub fn uniform(num_experts: usize, h: usize, w: usize) -> Result<Self> {
        if num_experts == 0 {
            return Err(Error::NoAnnotators);
        }
        Self::new(Array3::from_elem(
            (num_experts, h, w),
            1.0 / num_experts as f64,
        ))
    }

    pub fn from_logits(logits: &Array3<f64>) -> Result<Self> {
        Self::new(softmax_axis0(logits))
    }

    pub fn num_experts(&self) -> usize {
        self.data.dim().0
    }

    pub fn spatial_dim(&self) -> (usize, usize) {
        let (_, h, w) = self.data.dim();
        (h, w)
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }
}

impl Validate for WeightHeatmap {
    fn validate(&self) -> Result<(), Violation> {
        Self::check(&self.data)
    }
}

fn check_nonnegative_finite(data: &Array2<f64>, what: &'static str) -> Result<(), Violation> {
    let (h, w) = data.dim();
    check_nonempty(h, w)?;
    for ((y, x), &v) in data.indexed_iter() {
        if !v.is_finite() || v < 0.0 {
            return Err(Violation::new(
                "entry must be finite and nonnegative",
                vec![y, x],
                format!("{what} value {v}"),
            ));
        }
    }
    Ok(())
}

/// H x W per-pixel attention weights (the roughness prior).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    data: Array2<f64>,
}

impl AttentionMap {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        Self::check(&data)?;
        Ok(Self { data })
    }

    pub fn check(data: &Array2<f64>) -> Result<(), Violation> {
        check_nonnegative_finite(data, "attention")
    }

    pub fn constant(h: usize, w: usize, value: f64) -> Result<Self> {
        Self::new(Array2::from_elem((h, w), value))
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }
}

impl Validate for AttentionMap {
    fn validate(&self) -> Result<(), Violation> {
        Self::check(&self.data)
    }
}

/// H x W per-pixel loss values before spatial reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMap {
    data: Array2<f64>,
}

impl LossMap {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        Self::check(&data)?;
        Ok(Self { data })
    }

    pub fn check(data: &Array2<f64>) -> Result<(), Violation> {
        check_nonnegative_finite(data, "loss")
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn mean(&self) -> f64 {
        self.data.mean().unwrap_or(0.0)
    }
}

impl Validate for LossMap {
    fn validate(&self) -> Result<(), Violation> {
        Self::check(&self.data)
    }
}

/// Label maps from N annotators of the same image.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertSet {
    labels: Vec<LabelMap>,
    expert_ids: Vec<String>,
}

impl ExpertSet {
    pub fn new(labels: Vec<LabelMap>, expert_ids: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::NoAnnotators);
        }
        if labels.len() != expert_ids.len() {
            return Err(Error::shape("expert ids", labels.len(), expert_ids.len()));
        }
        Self::check(&labels)?;
        Ok(Self { labels, expert_ids })
    }

    /// Ids `e1..eN`.
    pub fn with_default_ids(labels: Vec<LabelMap>) -> Result<Self> {
        let ids = (1..=labels.len()).map(|i| format!("e{i}")).collect();
        Self::new(labels, ids)
    }

    pub fn check(labels: &[LabelMap]) -> Result<(), Violation> {
        let Some(first) = labels.first() else {
            return Err(Violation::new(
                "at least one annotator required",
                vec![],
                "",
            ));
        };
        for (n, l) in labels.iter().enumerate() {
            if l.dim() != first.dim() || l.num_classes() != first.num_classes() {
                return Err(Violation::new(
                    "expert maps must share shape and class count",
                    vec![n],
                    format!(
                        "{:?}/K={} vs {:?}/K={}",
                        l.dim(),
                        l.num_classes(),
                        first.dim(),
                        first.num_classes()
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[LabelMap] {
        &self.labels
    }

    pub fn expert_ids(&self) -> &[String] {
        &self.expert_ids
    }

    pub fn dim(&self) -> (usize, usize) {
        self.labels[0].dim()
    }

    pub fn num_classes(&self) -> usize {
        self.labels[0].num_classes()
    }
}

impl Validate for ExpertSet {
    fn validate(&self) -> Result<(), Violation> {
        Self::check(&self.labels)?;
        self.labels.iter().try_for_each(Validate::validate)
    }
}

/// Numerically stable softmax along axis 0.
pub(crate) fn softmax_axis0(logits: &Array3<f64>) -> Array3<f64> {
    let mut out = logits.clone();
    for mut lane in out.lanes_mut(Axis(0)) {
        let max = lane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        lane.mapv_inplace(|v| (v - max).exp());
        let sum = lane.sum();
        lane.mapv_inplace(|v| v / sum);
    }
    out
}
