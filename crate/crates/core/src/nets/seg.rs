use serde::{Deserialize, Serialize};

use super::layers::{self, ConvSpec, Feat};
use super::{LayoutBuilder, ParamSegment, TrainableFunction};
use crate::error::{Error, Result};
use crate::types::{ImageTensor, ProbMap};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegNetConfig {
    pub in_channels: usize,
    /// Widths of the hidden convolution layers; a 1x1 classifier follows.
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    pub num_classes: usize,
    pub seed: u64,
}

impl Default for SegNetConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            channels: vec![16, 16],
            kernel_size: 3,
            num_classes: 4,
            seed: 0,
        }
    }
}

impl SegNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::Config(
                "seg_net.channels needs at least one nonzero hidden width".into(),
            ));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config("seg_net.kernel_size must be odd".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("seg_net.num_classes must be >= 2".into()));
        }
        if self.in_channels != 1 && self.in_channels != 3 {
            return Err(Error::Config("seg_net.in_channels must be 1 or 3".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Tape {
    input: Feat,
    /// tanh outputs of each hidden layer.
    acts: Vec<Feat>,
    probs: Feat,
}

/// Conv/tanh stack followed by a 1x1 classifier and a per-pixel softmax.
#[derive(Debug, Clone)]
pub struct SegNet {
    cfg: SegNetConfig,
    params: Vec<f64>,
    segments: Vec<ParamSegment>,
    convs: Vec<ConvSpec>,
    tape: Option<Tape>,
}

impl SegNet {
    pub fn new(cfg: SegNetConfig) -> Result<Self> {
        cfg.validate()?;
        let mut layout = LayoutBuilder::default();
        let mut prev = cfg.in_channels;
        for (i, &width) in cfg.channels.iter().enumerate() {
            layout.conv(&format!("conv{i}"), prev, width, cfg.kernel_size);
            prev = width;
        }
        layout.conv("head", prev, cfg.num_classes, 1);
        let params = layout.init(cfg.seed);
        Ok(Self {
            cfg,
            params,
            segments: layout.segments,
            convs: layout.convs,
            tape: None,
        })
    }

    pub fn config(&self) -> &SegNetConfig {
        &self.cfg
    }

    /// Zero the classifier so every pixel predicts the uniform distribution.
    pub fn zero_head(&mut self) {
        let head = *self.convs.last().unwrap();
        self.params[head.w_off..head.w_off + head.weight_len()].fill(0.0);
        self.params[head.b_off..head.b_off + head.out_c].fill(0.0);
        self.tape = None;
    }

    fn check_input(&self, img: &ImageTensor) -> Result<()> {
        if img.channels() != self.cfg.in_channels {
            return Err(Error::shape(
                "segmentation input channels",
                self.cfg.in_channels,
                img.channels(),
            ));
        }
        Ok(())
    }

    fn run(&self, img: &ImageTensor) -> Tape {
        let input = Feat::from_array(img.data());
        let (head, hidden) = self.convs.split_last().unwrap();
        let mut acts = Vec::with_capacity(hidden.len());
        for spec in hidden {
            let x = acts.last().unwrap_or(&input);
            acts.push(layers::tanh_forward(&spec.forward(&self.params, x)));
        }
        let logits = head.forward(&self.params, acts.last().unwrap());
        let probs = layers::softmax_channels(&logits);
        Tape { input, acts, probs }
    }

    /// Class logits for `img`; does not touch the cached forward pass.
    pub fn logits(&self, img: &ImageTensor) -> Result<ndarray::Array3<f64>> {
        self.check_input(img)?;
        let input = Feat::from_array(img.data());
        let (head, hidden) = self.convs.split_last().unwrap();
        let mut x = input;
        for spec in hidden {
            x = layers::tanh_forward(&spec.forward(&self.params, &x));
        }
        Ok(head.forward(&self.params, &x).to_array())
    }

    /// Inference without caching activations.
    pub fn predict(&self, img: &ImageTensor) -> Result<ProbMap> {
        self.check_input(img)?;
        ProbMap::new(self.run(img).probs.to_array())
    }

    /// Forward pass that keeps activations for [`SegNet::backward`].
    pub fn forward(&mut self, img: &ImageTensor) -> Result<ProbMap> {
        self.check_input(img)?;
        let tape = self.run(img);
        let probs = ProbMap::new(tape.probs.to_array())?;
        self.tape = Some(tape);
        Ok(probs)
    }

    /// Parameter gradient given the gradient with respect to the output
    /// probabilities of the last [`SegNet::forward`].
    pub fn backward(&self, grad_probs: &ndarray::Array3<f64>) -> Result<Vec<f64>> {
        let tape = self.tape.as_ref().ok_or(Error::BackwardBeforeForward)?;
        let g = Feat::from_array(grad_probs);
        check_grad_shape(&tape.probs, &g)?;
        self.backprop(tape, layers::softmax_backward(&tape.probs, &g))
    }

    /// Parameter gradient given the gradient with respect to the logits.
    pub fn backward_logits(&self, grad_logits: &ndarray::Array3<f64>) -> Result<Vec<f64>> {
        let tape = self.tape.as_ref().ok_or(Error::BackwardBeforeForward)?;
        let g = Feat::from_array(grad_logits);
        check_grad_shape(&tape.probs, &g)?;
        self.backprop(tape, g)
    }

    fn backprop(&self, tape: &Tape, grad_logits: Feat) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.params.len()];
        let (head, hidden) = self.convs.split_last().unwrap();
        let mut g = head.backward(
            &self.params,
            tape.acts.last().unwrap(),
            &grad_logits,
            &mut grad,
        );
        for (i, spec) in hidden.iter().enumerate().rev() {
            g = layers::tanh_backward(&tape.acts[i], &g);
            let x = if i == 0 {
                &tape.input
            } else {
                &tape.acts[i - 1]
            };
            g = spec.backward(&self.params, x, &g, &mut grad);
        }
        Ok(grad)
    }
}

pub(super) fn check_grad_shape(out: &Feat, g: &Feat) -> Result<()> {
    if (out.c, out.h, out.w) != (g.c, g.h, g.w) {
        return Err(Error::shape(
            "upstream gradient",
            (out.c, out.h, out.w),
            (g.c, g.h, g.w),
        ));
    }
    Ok(())
}

impl TrainableFunction for SegNet {
    fn parameters(&self) -> &[f64] {
        &self.params
    }

    fn parameters_mut(&mut self) -> &mut [f64] {
        self.tape = None;
        &mut self.params
    }

    fn segments(&self) -> &[ParamSegment] {
        &self.segments
    }
}
