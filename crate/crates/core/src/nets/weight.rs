use serde::{Deserialize, Serialize};

use super::layers::{self, ConvSpec, Feat};
use super::seg::check_grad_shape;
use super::{LayoutBuilder, ParamSegment, TrainableFunction};
use crate::error::{Error, Result};
use crate::types::{ImageTensor, WeightHeatmap};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightNetConfig {
    pub in_channels: usize,
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    pub num_experts: usize,
    /// Input is average-pooled by this factor before the convolutions.
    pub downsample_factor: usize,
    pub seed: u64,
}

impl Default for WeightNetConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            channels: vec![8, 8],
            kernel_size: 3,
            num_experts: 3,
            downsample_factor: 4,
            seed: 1,
        }
    }
}

impl WeightNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_experts < 1 {
            return Err(Error::Config("weight_net.num_experts must be >= 1".into()));
        }
        if !self.downsample_factor.is_power_of_two() {
            return Err(Error::Config(
                "weight_net.downsample_factor must be a power of two".into(),
            ));
        }
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::Config(
                "weight_net.channels needs at least one nonzero hidden width".into(),
            ));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config("weight_net.kernel_size must be odd".into()));
        }
        if self.in_channels != 1 && self.in_channels != 3 {
            return Err(Error::Config(
                "weight_net.in_channels must be 1 or 3".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Tape {
    pooled: Feat,
    acts: Vec<Feat>,
    low_h: usize,
    low_w: usize,
    weights: Feat,
}

/// Pool, conv/tanh stack, zero-initialised 1x1 head, bilinear upsampling to
/// the input size, then a softmax across experts at every pixel.
#[derive(Debug, Clone)]
pub struct WeightNet {
    cfg: WeightNetConfig,
    params: Vec<f64>,
    segments: Vec<ParamSegment>,
    convs: Vec<ConvSpec>,
    tape: Option<Tape>,
}

impl WeightNet {
    pub fn new(cfg: WeightNetConfig) -> Result<Self> {
        cfg.validate()?;
        let mut layout = LayoutBuilder::default();
        let mut prev = cfg.in_channels;
        for (i, &width) in cfg.channels.iter().enumerate() {
            layout.conv(&format!("conv{i}"), prev, width, cfg.kernel_size);
            prev = width;
        }
        layout.conv("head", prev, cfg.num_experts, 1);
        let mut params = layout.init(cfg.seed);
        let head = *layout.convs.last().unwrap();
        params[head.w_off..head.w_off + head.weight_len()].fill(0.0);
        Ok(Self {
            cfg,
            params,
            segments: layout.segments,
            convs: layout.convs,
            tape: None,
        })
    }

    pub fn config(&self) -> &WeightNetConfig {
        &self.cfg
    }

    fn check_input(&self, img: &ImageTensor) -> Result<()> {
        if img.channels() != self.cfg.in_channels {
            return Err(Error::shape(
                "weighting input channels",
                self.cfg.in_channels,
                img.channels(),
            ));
        }
        Ok(())
    }

    fn run(&self, img: &ImageTensor) -> Tape {
        let input = Feat::from_array(img.data());
        let pooled = layers::avg_pool(&input, self.cfg.downsample_factor);
        let (head, hidden) = self.convs.split_last().unwrap();
        let mut acts = Vec::with_capacity(hidden.len());
        for spec in hidden {
            let x = acts.last().unwrap_or(&pooled);
            acts.push(layers::tanh_forward(&spec.forward(&self.params, x)));
        }
        let low = head.forward(&self.params, acts.last().unwrap());
        let up = layers::bilinear_resize(&low, input.h, input.w);
        Tape {
            low_h: low.h,
            low_w: low.w,
            weights: layers::softmax_channels(&up),
            pooled,
            acts,
        }
    }

    pub fn predict(&self, img: &ImageTensor) -> Result<WeightHeatmap> {
        self.check_input(img)?;
        WeightHeatmap::new(self.run(img).weights.to_array())
    }

    pub fn forward(&mut self, img: &ImageTensor) -> Result<WeightHeatmap> {
        self.check_input(img)?;
        let tape = self.run(img);
        let weights = WeightHeatmap::new(tape.weights.to_array())?;
        self.tape = Some(tape);
        Ok(weights)
    }

    /// Parameter gradient given the gradient with respect to the output
    /// weights of the last [`WeightNet::forward`].
    pub fn backward(&self, grad_weights: &ndarray::Array3<f64>) -> Result<Vec<f64>> {
        let tape = self.tape.as_ref().ok_or(Error::BackwardBeforeForward)?;
        let g = Feat::from_array(grad_weights);
        check_grad_shape(&tape.weights, &g)?;
        let g_up = layers::softmax_backward(&tape.weights, &g);
        let g_low = layers::bilinear_resize_backward(&g_up, tape.low_h, tape.low_w);
        let mut grad = vec![0.0; self.params.len()];
        let (head, hidden) = self.convs.split_last().unwrap();
        let mut g = head.backward(&self.params, tape.acts.last().unwrap(), &g_low, &mut grad);
        for (i, spec) in hidden.iter().enumerate().rev() {
            g = layers::tanh_backward(&tape.acts[i], &g);
            let x = if i == 0 {
                &tape.pooled
            } else {
                &tape.acts[i - 1]
            };
            g = spec.backward(&self.params, x, &g, &mut grad);
        }
        Ok(grad)
    }
}

impl TrainableFunction for WeightNet {
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
