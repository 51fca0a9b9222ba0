use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::Rng;
use crate::tensor::Tensor;

/// Weight initialization schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// N(0, 2/fan_in); used for weights feeding a ReLU.
    HeNormal,
    /// U(-l, l) with l = sqrt(6/(fan_in+fan_out)).
    GlorotUniform,
}

impl Init {
    pub fn for_relu(relu: bool) -> Self {
        if relu {
            Init::HeNormal
        } else {
            Init::GlorotUniform
        }
    }

    pub fn sample(self, shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = match self {
            Init::HeNormal => {
                let std = (2.0 / fan_in as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                (0..n).map(|_| normal.sample(rng)).collect()
            }
            Init::GlorotUniform => {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..n).map(|_| rng.gen_range(-limit..=limit)).collect()
            }
        };
        Tensor::from_parts_unchecked(shape.to_vec(), data)
    }
}
