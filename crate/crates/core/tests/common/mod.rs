//! Independent reference implementations and fixtures for integration tests.
//!
//! The oracles here deliberately avoid the library's code paths: dense 2-D
//! convolution instead of separable passes, per-pixel histograms instead of
//! the vote kernel, plain loops instead of array operations.

#![allow(dead_code)]

use ndarray::{Array2, Array3};
use noisyseg::{ExpertSet, ImageTensor, LabelMap, ProbMap, TieRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(r: &mut impl Rng, c: usize, h: usize, w: usize) -> ImageTensor {
    ImageTensor::new(Array3::from_shape_fn((c, h, w), |_| r.random::<f64>())).unwrap()
}

pub fn random_labels(r: &mut impl Rng, h: usize, w: usize, k: usize) -> LabelMap {
    LabelMap::new(
        Array2::from_shape_fn((h, w), |_| r.random_range(0..k as u8)),
        k,
    )
    .unwrap()
}

pub fn random_experts(r: &mut impl Rng, n: usize, h: usize, w: usize, k: usize) -> ExpertSet {
    ExpertSet::with_default_ids((0..n).map(|_| random_labels(r, h, w, k)).collect()).unwrap()
}

pub fn random_logits(r: &mut impl Rng, c: usize, h: usize, w: usize, scale: f64) -> Array3<f64> {
    Array3::from_shape_fn((c, h, w), |_| r.random_range(-scale..scale))
}

/// Mirror by repeated reflection about the first and last sample.
fn mirror(mut i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Roughness map by direct 2-D convolution with a normalized
/// `(2r+1) x (2r+1)` Gaussian window.
pub fn dense_heatmap(
    img: &ImageTensor,
    radius: usize,
    sigma: f64,
    lambda_a: f64,
    lambda_b: f64,
) -> Array2<f64> {
    let (c, h, w) = img.dim();
    let r = radius as i64;
    let mut kernel = Vec::new();
    let mut total = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            let v = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            kernel.push((dy, dx, v));
            total += v;
        }
    }
    let data = img.data();
    let mut out = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut diff = 0.0;
            for ch in 0..c {
                let mut blurred = 0.0;
                for &(dy, dx, v) in &kernel {
                    let yy = mirror(y as i64 + dy, h);
                    let xx = mirror(x as i64 + dx, w);
                    blurred += v / total * data[[ch, yy, xx]];
                }
                diff += (data[[ch, y, x]] - blurred.clamp(0.0, 1.0)).abs();
            }
            out[[y, x]] = lambda_a * diff / c as f64 + lambda_b;
        }
    }
    out
}

/// Majority label of one pixel from a class histogram.
pub fn histogram_vote(labels: &[u8], k: usize, rule: TieRule) -> u8 {
    let mut hist = vec![0usize; k];
    for &l in labels {
        hist[l as usize] += 1;
    }
    let best = *hist.iter().max().unwrap();
    let tied: Vec<u8> = (0..k as u8).filter(|&c| hist[c as usize] == best).collect();
    match rule {
        TieRule::LowestClass => tied[0],
        TieRule::HighestClass => *tied.last().unwrap(),
        TieRule::FirstExpert => *labels.iter().find(|l| tied.contains(l)).unwrap(),
    }
}

pub fn vote_oracle(experts: &ExpertSet, rule: TieRule) -> Array2<u8> {
    let (h, w) = experts.dim();
    let k = experts.num_classes();
    Array2::from_shape_fn((h, w), |(y, x)| {
        let px: Vec<u8> = experts.labels().iter().map(|m| m.get(y, x)).collect();
        histogram_vote(&px, k, rule)
    })
}

/// `-(1 - p)^gamma ln p` with the library's probability clamp.
pub fn scalar_focal(p: f64, gamma: f64) -> f64 {
    let p = p.clamp(1e-7, 1.0 - 1e-7);
    -(1.0 - p).powf(gamma) * p.ln()
}

/// Plain focal voting loss: vote each pixel from its histogram, then average
/// the focal penalty of the voted class over the image in row-major order.
pub fn scalar_vote_loss(pred: &ProbMap, experts: &ExpertSet, rule: TieRule, gamma: f64) -> f64 {
    let (h, w) = pred.spatial_dim();
    let k = pred.num_classes();
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let px: Vec<u8> = experts.labels().iter().map(|m| m.get(y, x)).collect();
            let t = histogram_vote(&px, k, rule) as usize;
            sum += 1.0 * scalar_focal(pred.data()[[t, y, x]], gamma);
        }
    }
    sum / (h * w) as f64
}

/// Composite loss by explicit loops over pixels and experts.
pub fn scalar_composite(
    pred: &ProbMap,
    experts: &ExpertSet,
    heat: &Array2<f64>,
    weights: &Array3<f64>,
    rule: TieRule,
    gamma: f64,
    lambda1: f64,
    lambda2: f64,
) -> (f64, f64, f64) {
    let (h, w) = pred.spatial_dim();
    let k = pred.num_classes();
    let n = experts.len();
    let (mut vote, mut weighted) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let px: Vec<u8> = experts.labels().iter().map(|m| m.get(y, x)).collect();
            let t = histogram_vote(&px, k, rule) as usize;
            vote += heat[[y, x]] * scalar_focal(pred.data()[[t, y, x]], gamma);
            for (e, &l) in px.iter().enumerate() {
                weighted += weights[[e, y, x]]
                    * heat[[y, x]]
                    * scalar_focal(pred.data()[[l as usize, y, x]], gamma);
            }
        }
    }
    let hw = (h * w) as f64;
    let vote = vote / hw;
    let weighted = weighted / (hw * n as f64);
    (vote, weighted, lambda1 * vote + lambda2 * weighted)
}

/// Per-class Dice from pooled pixel counts, by a single counting loop.
pub fn dice_oracle(preds: &[LabelMap], gts: &[LabelMap], k: usize) -> Vec<Option<f64>> {
    let mut a = vec![0u64; k];
    let mut b = vec![0u64; k];
    let mut both = vec![0u64; k];
    for (p, g) in preds.iter().zip(gts) {
        let (h, w) = p.dim();
        for y in 0..h {
            for x in 0..w {
                let (pc, gc) = (p.get(y, x) as usize, g.get(y, x) as usize);
                a[pc] += 1;
                b[gc] += 1;
                if pc == gc {
                    both[pc] += 1;
                }
            }
        }
    }
    (0..k)
        .map(|c| (a[c] + b[c] > 0).then(|| 2.0 * both[c] as f64 / (a[c] + b[c]) as f64))
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
