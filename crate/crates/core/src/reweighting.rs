//! The composite training loss.
//!
//! `total = lambda1 * vote_loss + lambda2 * weighted_loss` where
//!
//! * `vote_loss` is the spatial mean of the attention-weighted focal loss
//!   against the majority-voted labels,
//! * `weighted_loss` is the spatial mean of `(1/N) * sum_n l_n * w_n`, with
//!   `l_n` the attention-weighted focal loss against expert `n` and `w_n` the
//!   learned per-pixel weight of that expert,
//! * `lambda1 = 1 / (1 + tanh n)`, `lambda2 = tanh n / (1 + tanh n)` and `n`
//!   grows by one every `step_iters` iterations.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{major_vote, TieRule};
use crate::gafl::{focal_derivative, focal_value, gaf_loss_map, roughness_heatmap, GaflConfig};
use crate::types::{
    AttentionMap, ExpertSet, ImageTensor, LabelMap, LossMap, ProbMap, WeightHeatmap,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub n: u64,
    pub step_iters: u64,
}

impl ScheduleState {
    pub fn new(step_iters: u64) -> Result<Self> {
        if step_iters == 0 {
            return Err(Error::Config("schedule step_iters must be >= 1".into()));
        }
        Ok(Self { n: 0, step_iters })
    }

    /// State in effect during zero-based iteration `iter`.
    pub fn at_iteration(iter: u64, step_iters: u64) -> Self {
        let step_iters = step_iters.max(1);
        Self {
            n: iter / step_iters,
            step_iters,
        }
    }

    pub fn lambdas(&self) -> (f64, f64) {
        lambdas(self)
    }
}

pub fn lambdas(state: &ScheduleState) -> (f64, f64) {
    let t = (state.n as f64).tanh();
    (1.0 / (1.0 + t), t / (1.0 + t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub vote_loss: f64,
    pub weighted_loss: f64,
    pub per_expert_losses: Vec<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub total: f64,
}

/// `l_n = gaf_loss_map(pred, P_n, heat)` for every expert.
pub fn per_expert_loss_maps(
    pred: &ProbMap,
    experts: &ExpertSet,
    heat: &AttentionMap,
    cfg: &GaflConfig,
) -> Result<Vec<LossMap>> {
    experts
        .labels()
        .iter()
        .map(|target| gaf_loss_map(pred, target, heat, cfg))
        .collect()
}

/// Spatial mean of `(1/N) * sum_n l_n * w_n`.
pub fn weighted_loss(loss_maps: &[LossMap], weights: &WeightHeatmap) -> Result<f64> {
    let n = loss_maps.len();
    if n != weights.num_experts() {
        return Err(Error::shape(
            "expert count of loss maps vs weights",
            weights.num_experts(),
            n,
        ));
    }
    let (h, w) = weights.spatial_dim();
    let mut acc = Array2::<f64>::zeros((h, w));
    for (e, l) in loss_maps.iter().enumerate() {
        if l.dim() != (h, w) {
            return Err(Error::shape("loss map vs weights", (h, w), l.dim()));
        }
        acc += &(l.data() * &weights.data().index_axis(ndarray::Axis(0), e));
    }
    Ok(acc.mean().unwrap() / n as f64)
}

/// Everything the composite loss needs once attention and vote are known.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    pub pred: &'a ProbMap,
    pub experts: &'a ExpertSet,
    pub vote: &'a LabelMap,
    pub heat: &'a AttentionMap,
    /// `None` drops the weighted branch entirely.
    pub weights: Option<&'a WeightHeatmap>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub cfg: &'a GaflConfig,
}

/// Gradients of `total` with respect to the probability map and, when the
/// weighted branch is active, the weight heatmap.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    pub pred: Array3<f64>,
    pub weights: Option<Array3<f64>>,
}

/// Evaluates the composite loss and its gradients in one pass.
pub fn composite_loss(inputs: &LossInputs<'_>) -> Result<(LossBreakdown, LossGradients)> {
    let LossInputs {
        pred,
        experts,
        vote,
        heat,
        weights,
        lambda1,
        lambda2,
        cfg,
    } = *inputs;
    let k = pred.num_classes();
    let (h, w) = pred.spatial_dim();
    if experts.dim() != (h, w) || vote.dim() != (h, w) || heat.dim() != (h, w) {
        return Err(Error::shape(
            "composite loss inputs",
            (h, w),
            (experts.dim(), vote.dim(), heat.dim()),
        ));
    }
    if experts.num_classes() != k || vote.num_classes() != k {
        return Err(Error::shape(
            "class count",
            k,
            (experts.num_classes(), vote.num_classes()),
        ));
    }
    let n_exp = experts.len();
    if let Some(wm) = weights {
        if wm.num_experts() != n_exp || wm.spatial_dim() != (h, w) {
            return Err(Error::shape(
                "weight heatmap",
                (n_exp, h, w),
                (wm.num_experts(), wm.spatial_dim()),
            ));
        }
    }
    let alpha = cfg.alpha_for(k)?;
    let (gamma, variant) = (cfg.gamma, cfg.focal_variant);
    let p = pred.data();
    let hw = (h * w) as f64;
    let vote_scale = lambda1 / hw;
    let weighted_scale = lambda2 / (hw * n_exp as f64);

    let mut grad_pred = Array3::<f64>::zeros((k, h, w));
    let mut grad_w = weights.map(|_| Array3::<f64>::zeros((n_exp, h, w)));
    let mut vote_sum = 0.0;
    let mut weighted_sum = 0.0;
    let mut expert_sums = vec![0.0; n_exp];

    for y in 0..h {
        for x in 0..w {
            let a = heat.data()[[y, x]];
            let t = usize::from(vote.get(y, x));
            let pt = p[[t, y, x]];
            vote_sum += a * focal_value(pt, alpha[t], gamma, variant);
            grad_pred[[t, y, x]] += vote_scale * a * focal_derivative(pt, alpha[t], gamma, variant);

            for (e, labels) in experts.labels().iter().enumerate() {
                let t = usize::from(labels.get(y, x));
                let pt = p[[t, y, x]];
                let l = a * focal_value(pt, alpha[t], gamma, variant);
                expert_sums[e] += l;
                if let (Some(wm), Some(gw)) = (weights, grad_w.as_mut()) {
                    let we = wm.data()[[e, y, x]];
                    weighted_sum += we * l;
                    grad_pred[[t, y, x]] +=
                        weighted_scale * we * a * focal_derivative(pt, alpha[t], gamma, variant);
                    gw[[e, y, x]] = weighted_scale * l;
                }
            }
        }
    }

    let vote_loss = vote_sum / hw;
    let weighted_loss = if weights.is_some() {
        weighted_sum / (hw * n_exp as f64)
    } else {
        0.0
    };
    let breakdown = LossBreakdown {
        vote_loss,
        weighted_loss,
        per_expert_losses: expert_sums.iter().map(|s| s / hw).collect(),
        lambda1,
        lambda2,
        total: lambda1 * vote_loss + lambda2 * weighted_loss,
    };
    Ok((
        breakdown,
        LossGradients {
            pred: grad_pred,
            weights: grad_w,
        },
    ))
}

/// Full composite loss from raw inputs: attention from `img`, vote from
/// `experts`, lambdas from `state`.
pub fn total_loss(
    pred: &ProbMap,
    experts: &ExpertSet,
    weights: &WeightHeatmap,
    img: &ImageTensor,
    cfg: &GaflConfig,
    rule: TieRule,
    state: &ScheduleState,
) -> Result<LossBreakdown> {
    let heat = roughness_heatmap(img, cfg)?;
    let vote = major_vote(experts, rule)?;
    let (lambda1, lambda2) = lambdas(state);
    let (breakdown, _) = composite_loss(&LossInputs {
        pred,
        experts,
        vote: &vote,
        heat: &heat,
        weights: Some(weights),
        lambda1,
        lambda2,
        cfg,
    })?;
    Ok(breakdown)
}
