use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Cellwise nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Identity => x,
        }
    }

    /// Derivative evaluated at the pre-activation `x`. ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn apply(self, z: &Tensor) -> Tensor {
        z.map(|v| self.eval(v))
    }

    pub fn apply_derivative(self, z: &Tensor) -> Tensor {
        z.map(|v| self.derivative(v))
    }

    pub(crate) fn apply_in_place(self, data: &mut [f64]) {
        if self == Activation::Identity {
            return;
        }
        for v in data {
            *v = self.eval(*v);
        }
    }

    /// `grad[i] *= f'(z[i])`
    pub(crate) fn backprop_in_place(self, z: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Relu => {
                for (g, &zv) in grad.iter_mut().zip(z) {
                    if zv <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            _ => {
                for (g, &zv) in grad.iter_mut().zip(z) {
                    *g *= self.derivative(zv);
                }
            }
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Looks up an activation by name and applies it cellwise.
pub fn activation_apply(name: &str, z: &Tensor) -> Result<Tensor> {
    Ok(name.parse::<Activation>()?.apply(z))
}

pub fn activation_derivative(name: &str, z: &Tensor) -> Result<Tensor> {
    Ok(name.parse::<Activation>()?.apply_derivative(z))
}

/// Max-shifted softmax of one row, written into `out`.
pub(crate) fn softmax_row(z: &[f64], out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Softmax of a vector, or row-wise softmax of a `[B, K]` matrix.
pub fn softmax(z: &Tensor) -> Tensor {
    let k = *z.shape().last().expect("rank >= 1");
    let mut out = vec![0.0; z.len()];
    for (zr, or) in z.data().chunks(k).zip(out.chunks_mut(k)) {
        softmax_row(zr, or);
    }
    Tensor::from_parts_unchecked(z.shape().to_vec(), out)
}
