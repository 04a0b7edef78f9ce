//! Small convolutional networks with hand-written backward passes.
//!
//! [`SegNet`] maps an image to a per-pixel class distribution; [`WeightNet`]
//! maps the same image to a per-pixel distribution over experts. Both keep
//! their parameters in one flat vector described by named segments, so the
//! optimizer and checkpoint code treat them uniformly.

pub mod layers;
mod seg;
mod weight;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use layers::softmax_backward_array;
pub use seg::{SegNet, SegNetConfig};
pub use weight::{WeightNet, WeightNetConfig};

use layers::ConvSpec;

/// A named, contiguous slice of a parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSegment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl ParamSegment {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// A differentiable function with a fixed-size flat parameter vector.
pub trait TrainableFunction {
    fn parameters(&self) -> &[f64];

    /// Mutable access to the parameters. Drops any cached forward pass.
    fn parameters_mut(&mut self) -> &mut [f64];

    fn segments(&self) -> &[ParamSegment];

    fn num_parameters(&self) -> usize {
        self.parameters().len()
    }

    fn segment(&self, name: &str) -> Option<&ParamSegment> {
        self.segments().iter().find(|s| s.name == name)
    }

    fn set_parameters(&mut self, values: &[f64]) -> crate::Result<()> {
        let n = self.num_parameters();
        if values.len() != n {
            return Err(crate::Error::shape("parameter vector", n, values.len()));
        }
        self.parameters_mut().copy_from_slice(values);
        Ok(())
    }
}

/// Lays out a stack of convolutions in a flat parameter vector.
#[derive(Default)]
struct LayoutBuilder {
    segments: Vec<ParamSegment>,
    convs: Vec<ConvSpec>,
    len: usize,
}

impl LayoutBuilder {
    fn push(&mut self, name: &str, len: usize) -> usize {
        let offset = self.len;
        self.segments.push(ParamSegment {
            name: name.to_string(),
            offset,
            len,
        });
        self.len += len;
        offset
    }

    fn conv(&mut self, name: &str, in_c: usize, out_c: usize, k: usize) {
        let w_off = self.push(&format!("{name}.weight"), out_c * in_c * k * k);
        let b_off = self.push(&format!("{name}.bias"), out_c);
        self.convs.push(ConvSpec {
            in_c,
            out_c,
            k,
            w_off,
            b_off,
        });
    }

    /// LeCun-normal weights, zero biases.
    fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; self.len];
        for spec in &self.convs {
            let fan_in = (spec.in_c * spec.k * spec.k) as f64;
            let normal = Normal::new(0.0, fan_in.sqrt().recip()).expect("positive std");
            for v in &mut params[spec.w_off..spec.w_off + spec.weight_len()] {
                *v = normal.sample(&mut rng);
            }
        }
        params
    }
}
