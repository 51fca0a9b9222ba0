//! Gradient-descent update rules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Rmsprop,
    Adam,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 3] = [OptimizerKind::Sgd, OptimizerKind::Rmsprop, OptimizerKind::Adam];

    pub fn as_str(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Rmsprop => "rmsprop",
            OptimizerKind::Adam => "adam",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "rmsprop" => Ok(OptimizerKind::Rmsprop),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub rho: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind) -> Self {
        OptimizerConfig {
            kind,
            learning_rate: 0.001,
            rho: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!(
                "learning rate must be in (0, 1], got {}",
                self.learning_rate
            )));
        }
        for (name, v) in [("rho", self.rho), ("beta1", self.beta1), ("beta2", self.beta2)] {
            if !open_unit(v) {
                return Err(Error::Config(format!("{name} must be in (0, 1), got {v}")));
            }
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::new(OptimizerKind::Adam)
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{what}: parameter shape {:?} != gradient shape {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// `w -= lr * g`
pub fn sgd_step(param: &mut Tensor, grad: &Tensor, learning_rate: f64) -> Result<()> {
    same_shape(param, grad, "sgd")?;
    if !(learning_rate > 0.0 && learning_rate <= 1.0) {
        return Err(Error::Config(format!("learning rate must be in (0, 1], got {learning_rate}")));
    }
    for (w, g) in param.data_mut().iter_mut().zip(grad.data()) {
        *w -= learning_rate * g;
    }
    Ok(())
}

/// `s = rho*s + (1-rho)*g^2; w -= lr * g / (sqrt(s) + eps)`
pub fn rmsprop_step(param: &mut Tensor, grad: &Tensor, square_avg: &mut Tensor, cfg: &OptimizerConfig) -> Result<()> {
    same_shape(param, grad, "rmsprop")?;
    same_shape(square_avg, grad, "rmsprop state")?;
    let (lr, rho, eps) = (cfg.learning_rate, cfg.rho, cfg.epsilon);
    for ((w, g), s) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(square_avg.data_mut())
    {
        *s = rho * *s + (1.0 - rho) * g * g;
        *w -= lr * g / (s.sqrt() + eps);
    }
    Ok(())
}

/// Bias-corrected Adam update for step number `t` (1-based).
pub fn adam_step(
    param: &mut Tensor,
    grad: &Tensor,
    first: &mut Tensor,
    second: &mut Tensor,
    t: u64,
    cfg: &OptimizerConfig,
) -> Result<()> {
    same_shape(param, grad, "adam")?;
    same_shape(first, grad, "adam state")?;
    same_shape(second, grad, "adam state")?;
    if t == 0 {
        return Err(Error::Argument("adam step counter starts at 1".into()));
    }
    let (lr, b1, b2, eps) = (cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let exp = i32::try_from(t).unwrap_or(i32::MAX);
    let c1 = 1.0 - b1.powi(exp);
    let c2 = 1.0 - b2.powi(exp);
    for (((w, g), m), v) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(first.data_mut())
        .zip(second.data_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *w -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Optimizer bound to one parameter list; moment slots are created on the
/// first step and must keep matching shapes afterwards.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    steps: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Optimizer {
            config,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Running square averages (rmsprop) or first moments (adam).
    pub fn first_moments(&self) -> &[Tensor] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.second
    }

    pub fn reset(&mut self) {
        self.first.clear();
        self.second.clear();
        self.steps = 0;
    }

    pub fn step(&mut self, mut params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            same_shape(p, g, self.config.kind.as_str())?;
        }
        if self.config.kind != OptimizerKind::Sgd {
            if self.first.is_empty() {
                self.first = grads.iter().map(Tensor::zeros_like).collect();
                if self.config.kind == OptimizerKind::Adam {
                    self.second = grads.iter().map(Tensor::zeros_like).collect();
                }
            } else if self.first.len() != grads.len()
                || self.first.iter().zip(grads).any(|(s, g)| s.shape() != g.shape())
            {
                return Err(Error::State("optimizer state does not match parameters".into()));
            }
        }
        self.steps += 1;
        let cfg = self.config;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            match cfg.kind {
                OptimizerKind::Sgd => sgd_step(p, g, cfg.learning_rate)?,
                OptimizerKind::Rmsprop => rmsprop_step(p, g, &mut self.first[i], &cfg)?,
                OptimizerKind::Adam => {
                    adam_step(p, g, &mut self.first[i], &mut self.second[i], self.steps, &cfg)?
                }
            }
        }
        Ok(())
    }
}
