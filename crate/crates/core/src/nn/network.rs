use rand::SeedableRng;

use super::activation::Activation;
use super::blocks::{chw_of, DenseBlock, DenseBlockCache, Inception, InceptionCache, Residual, ResidualCache};
use super::init::Init;
use super::layers::{
    ActivationLayer, Conv2d, ConvCache, Dense, DenseCache, Dropout, DropoutCache, Flatten,
    GlobalAvgPool, Pool2d, PoolCache, SoftmaxCache, SoftmaxOutput,
};
use super::Rng;
use crate::error::{Error, Result};
use crate::model::{Input, LayerSpec, ModelConfig};
use crate::tensor::{PoolMode, Tensor};

#[derive(Debug, Clone)]
pub enum Layer {
    Dense(Dense),
    Conv(Conv2d),
    Pool(Pool2d),
    GlobalAvgPool(GlobalAvgPool),
    Flatten(Flatten),
    Dropout(Dropout),
    Activation(ActivationLayer),
    Softmax(SoftmaxOutput),
    Inception(Inception),
    Residual(Residual),
    DenseBlock(DenseBlock),
}

#[derive(Debug, Clone)]
pub enum LayerCache {
    Dense(DenseCache),
    Conv(ConvCache),
    Pool(PoolCache),
    Batch(usize),
    Dropout(DropoutCache),
    Activation(Tensor),
    Softmax(SoftmaxCache),
    Inception(Box<InceptionCache>),
    Residual(ResidualCache),
    DenseBlock(DenseBlockCache),
}

fn cache_mismatch(kind: &str) -> Error {
    Error::State(format!("cache does not belong to a {kind} layer"))
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv(_) => "conv",
            Layer::Pool(p) => match p.mode {
                PoolMode::Max => "maxpool",
                PoolMode::Avg => "avgpool",
            },
            Layer::GlobalAvgPool(_) => "globalavgpool",
            Layer::Flatten(_) => "flatten",
            Layer::Dropout(_) => "dropout",
            Layer::Activation(_) => "activation",
            Layer::Softmax(_) => "softmax",
            Layer::Inception(_) => "inception-block",
            Layer::Residual(_) => "residual-block",
            Layer::DenseBlock(_) => "dense-block",
        }
    }

    pub fn forward(&self, x: &Tensor, rng: Option<&mut Rng>) -> Result<(Tensor, LayerCache)> {
        Ok(match self {
            Layer::Dense(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::Dense(c))
            }
            Layer::Conv(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::Conv(c))
            }
            Layer::Pool(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::Pool(c))
            }
            Layer::GlobalAvgPool(l) => (l.forward(x)?, LayerCache::Batch(x.shape()[0])),
            Layer::Flatten(l) => (l.forward(x)?, LayerCache::Batch(x.shape()[0])),
            Layer::Dropout(l) => {
                let (y, c) = l.forward(x, rng)?;
                (y, LayerCache::Dropout(c))
            }
            Layer::Activation(l) => {
                let (y, z) = l.forward(x)?;
                (y, LayerCache::Activation(z))
            }
            Layer::Softmax(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::Softmax(c))
            }
            Layer::Inception(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::Inception(Box::new(c)))
            }
            Layer::Residual(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::Residual(c))
            }
            Layer::DenseBlock(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::DenseBlock(c))
            }
        })
    }

    pub fn backward(&mut self, cache: &LayerCache, grad: &Tensor) -> Result<Tensor> {
        let kind = self.kind();
        match (self, cache) {
            (Layer::Dense(l), LayerCache::Dense(c)) => l.backward(c, grad),
            (Layer::Conv(l), LayerCache::Conv(c)) => l.backward(c, grad),
            (Layer::Pool(l), LayerCache::Pool(c)) => l.backward(c, grad),
            (Layer::GlobalAvgPool(l), LayerCache::Batch(b)) => l.backward(*b, grad),
            (Layer::Flatten(l), LayerCache::Batch(b)) => l.backward(*b, grad),
            (Layer::Dropout(l), LayerCache::Dropout(c)) => l.backward(c, grad),
            (Layer::Activation(l), LayerCache::Activation(z)) => l.backward(z, grad),
            (Layer::Softmax(l), LayerCache::Softmax(c)) => l.backward(c, grad),
            (Layer::Inception(l), LayerCache::Inception(c)) => l.backward(c, grad),
            (Layer::Residual(l), LayerCache::Residual(c)) => l.backward(c, grad),
            (Layer::DenseBlock(l), LayerCache::DenseBlock(c)) => l.backward(c, grad),
            _ => Err(cache_mismatch(kind)),
        }
    }

    /// Trainable tensors in a fixed order (weight before bias, sub-layers in
    /// forward order).
    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            Layer::Softmax(l) => vec![&l.dense.weight, &l.dense.bias],
            Layer::Conv(l) => vec![&l.weight, &l.bias],
            Layer::Inception(l) => l.convs().into_iter().flat_map(|c| [&c.weight, &c.bias]).collect(),
            Layer::Residual(l) => vec![&l.conv1.weight, &l.conv1.bias, &l.conv2.weight, &l.conv2.bias],
            Layer::DenseBlock(l) => l
                .units
                .iter()
                .flat_map(|(a, b)| [&a.weight, &a.bias, &b.weight, &b.bias])
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Softmax(l) => vec![&mut l.dense.weight, &mut l.dense.bias],
            Layer::Conv(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Inception(l) => l
                .convs_mut()
                .into_iter()
                .flat_map(|c| [&mut c.weight, &mut c.bias])
                .collect(),
            Layer::Residual(l) => vec![
                &mut l.conv1.weight,
                &mut l.conv1.bias,
                &mut l.conv2.weight,
                &mut l.conv2.bias,
            ],
            Layer::DenseBlock(l) => l
                .units
                .iter_mut()
                .flat_map(|(a, b)| [&mut a.weight, &mut a.bias, &mut b.weight, &mut b.bias])
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Gradient slots, aligned with [`Layer::params`].
    pub fn grads(&self) -> Vec<&Tensor> {
        match self {
            Layer::Dense(l) => vec![&l.grad_weight, &l.grad_bias],
            Layer::Softmax(l) => vec![&l.dense.grad_weight, &l.dense.grad_bias],
            Layer::Conv(l) => vec![&l.grad_weight, &l.grad_bias],
            Layer::Inception(l) => l
                .convs()
                .into_iter()
                .flat_map(|c| [&c.grad_weight, &c.grad_bias])
                .collect(),
            Layer::Residual(l) => vec![
                &l.conv1.grad_weight,
                &l.conv1.grad_bias,
                &l.conv2.grad_weight,
                &l.conv2.grad_bias,
            ],
            Layer::DenseBlock(l) => l
                .units
                .iter()
                .flat_map(|(a, b)| [&a.grad_weight, &a.grad_bias, &b.grad_weight, &b.grad_bias])
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn output_shape(&self) -> Vec<usize> {
        match self {
            Layer::Dense(l) => l.output_shape(),
            Layer::Conv(l) => l.output_shape(),
            Layer::Pool(l) => l.output_shape(),
            Layer::GlobalAvgPool(l) => l.output_shape(),
            Layer::Flatten(l) => l.output_shape(),
            Layer::Dropout(l) => l.output_shape(),
            Layer::Activation(l) => l.output_shape(),
            Layer::Softmax(l) => vec![l.classes()],
            Layer::Inception(l) => l.output_shape(),
            Layer::Residual(l) => l.output_shape(),
            Layer::DenseBlock(l) => l.output_shape(),
        }
    }
}

/// A layer together with the forward cache its backward pass consumes.
#[derive(Debug, Clone)]
pub struct LayerState {
    pub layer: Layer,
    cache: Option<LayerCache>,
}

impl LayerState {
    pub fn new(layer: Layer) -> Self {
        LayerState { layer, cache: None }
    }

    pub fn forward(&mut self, x: &Tensor, rng: Option<&mut Rng>) -> Result<Tensor> {
        let (y, cache) = self.layer.forward(x, rng)?;
        self.cache = Some(cache);
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or_else(|| {
            Error::State(format!("backward on {} layer before forward", self.layer.kind()))
        })?;
        self.layer.backward(cache, grad)
    }

    pub fn cache(&self) -> Option<&LayerCache> {
        self.cache.as_ref()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

/// Forward-pass mode. Training draws dropout masks from the supplied generator.
pub enum Mode<'a> {
    Train(&'a mut Rng),
    Eval,
}

/// Which quantity the gradient handed to [`Network::backward`] is taken with
/// respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputGrad {
    /// dL/dy for the softmax probabilities.
    Probabilities,
    /// dL/dz for the pre-softmax logits.
    Logits,
}

/// Parameter gradients of one backward pass plus the error signal at the
/// input of every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    /// Aligned with [`Network::params`].
    pub params: Vec<Tensor>,
    /// `deltas[i]` is dL/d(input of layer i).
    pub deltas: Vec<Tensor>,
}

impl GradientSet {
    pub fn is_zero(&self) -> bool {
        self.params
            .iter()
            .chain(&self.deltas)
            .all(|t| t.data().iter().all(|&v| v == 0.0))
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    config: ModelConfig,
    layers: Vec<LayerState>,
    input_shape: Vec<usize>,
    class_count: usize,
    rng_seed: u64,
}

impl Network {
    /// Builds and initializes a network. Shapes are chained and checked layer
    /// by layer; the last layer must be the softmax head.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = Rng::seed_from_u64(seed);
        let input_shape = config.input.shape();
        let mut shape = input_shape.clone();
        let mut layers = Vec::with_capacity(config.layers.len());
        for (i, spec) in config.layers.iter().enumerate() {
            let layer = build_layer(spec, &shape, &mut rng)
                .map_err(|e| Error::Config(format!("layer {} ({}): {e}", i + 1, spec.keyword())))?;
            shape = layer.output_shape();
            layers.push(LayerState::new(layer));
        }
        let class_count = match layers.last().map(|l| &l.layer) {
            Some(Layer::Softmax(s)) => s.classes(),
            _ => return Err(Error::Config("the final layer must be softmax".into())),
        };
        if layers[..layers.len() - 1]
            .iter()
            .any(|l| matches!(l.layer, Layer::Softmax(_)))
        {
            return Err(Error::Config("softmax may only appear as the final layer".into()));
        }
        Ok(Network {
            config: config.clone(),
            layers,
            input_shape,
            class_count,
            rng_seed: seed,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LayerState] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerState] {
        &mut self.layers
    }

    /// Per-sample input shape, e.g. `[C, H, W]`.
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.layer.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.layer.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Copies of every trainable tensor.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.params().into_iter().cloned().collect()
    }

    /// Overwrites every trainable tensor; shapes must match exactly.
    pub fn restore(&mut self, values: &[Tensor]) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != values.len() {
            return Err(Error::Shape(format!(
                "network has {} parameter tensors, got {}",
                params.len(),
                values.len()
            )));
        }
        for (i, (p, v)) in params.iter().zip(values).enumerate() {
            if p.shape() != v.shape() {
                return Err(Error::Shape(format!(
                    "parameter {i}: expected {:?}, got {:?}",
                    p.shape(),
                    v.shape()
                )));
            }
        }
        for (p, v) in params.iter_mut().zip(values) {
            p.data_mut().copy_from_slice(v.data());
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        let s = batch.shape();
        if s.len() != self.input_shape.len() + 1 || s[1..] != self.input_shape[..] {
            return Err(Error::Shape(format!(
                "network expects batches [B, {:?}], got {s:?}",
                self.input_shape
            )));
        }
        Ok(())
    }

    /// Runs every layer in order, caching what backward needs. Returns the
    /// `[B, classes]` softmax probabilities.
    pub fn forward(&mut self, batch: &Tensor, mode: Mode<'_>) -> Result<Tensor> {
        self.check_batch(batch)?;
        let mut rng = match mode {
            Mode::Train(r) => Some(r),
            Mode::Eval => None,
        };
        let mut x = batch.clone();
        for layer in &mut self.layers {
            x = layer.forward(&x, rng.as_deref_mut())?;
        }
        Ok(x)
    }

    /// Inference without touching any cache; safe to share across threads.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_batch(batch)?;
        let mut x = batch.clone();
        for layer in &self.layers {
            x = layer.layer.forward(&x, None)?.0;
        }
        Ok(x)
    }

    /// Backpropagates `grad` from the output through every layer. Parameter
    /// gradients land in the layers' gradient slots and are also returned;
    /// no parameter is modified.
    pub fn backward(&mut self, grad: &Tensor, wrt: OutputGrad) -> Result<GradientSet> {
        let n = self.layers.len();
        let mut deltas = vec![None; n];
        let mut g = grad.clone();
        for i in (0..n).rev() {
            let state = &mut self.layers[i];
            g = match (&mut state.layer, wrt, i == n - 1) {
                (Layer::Softmax(head), OutputGrad::Logits, true) => {
                    let cache = match state.cache.as_ref() {
                        Some(LayerCache::Softmax(c)) => c,
                        Some(_) => return Err(cache_mismatch("softmax")),
                        None => return Err(Error::State("backward before forward".into())),
                    };
                    head.backward_logits(cache, &g)?
                }
                _ => state.backward(&g)?,
            };
            deltas[i] = Some(g.clone());
        }
        Ok(GradientSet {
            params: self
                .layers
                .iter()
                .flat_map(|l| l.layer.grads())
                .cloned()
                .collect(),
            deltas: deltas.into_iter().map(|d| d.expect("filled")).collect(),
        })
    }

    pub fn clear_caches(&mut self) {
        for l in &mut self.layers {
            l.clear_cache();
        }
    }
}

fn build_layer(spec: &LayerSpec, shape: &[usize], rng: &mut Rng) -> Result<Layer> {
    Ok(match *spec {
        LayerSpec::Conv {
            filters,
            kernel,
            stride,
            pad,
            activation,
        } => Layer::Conv(Conv2d::new(
            chw_of(shape, "conv")?,
            filters,
            kernel,
            stride,
            pad,
            activation,
            Init::for_relu(activation == Activation::Relu),
            rng,
        )?),
        LayerSpec::MaxPool { size, stride } => {
            Layer::Pool(Pool2d::new(chw_of(shape, "maxpool")?, PoolMode::Max, size, stride, 0)?)
        }
        LayerSpec::AvgPool { size, stride } => {
            Layer::Pool(Pool2d::new(chw_of(shape, "avgpool")?, PoolMode::Avg, size, stride, 0)?)
        }
        LayerSpec::GlobalAvgPool => {
            Layer::GlobalAvgPool(GlobalAvgPool::new(chw_of(shape, "globalavgpool")?))
        }
        LayerSpec::Flatten => Layer::Flatten(Flatten::new(shape)),
        LayerSpec::Dense { units, activation } => {
            Layer::Dense(Dense::new(shape, units, activation, rng))
        }
        LayerSpec::Dropout { rate } => Layer::Dropout(Dropout::new(shape, rate)?),
        LayerSpec::Activation(a) => Layer::Activation(ActivationLayer::new(shape, a)),
        LayerSpec::Inception(widths) => {
            Layer::Inception(Inception::new(chw_of(shape, "inception")?, widths, rng)?)
        }
        LayerSpec::Residual { channels } => {
            let chw = chw_of(shape, "residual")?;
            if chw[0] != channels {
                return Err(Error::Shape(format!(
                    "residual block declares {channels} channels but receives {}",
                    chw[0]
                )));
            }
            Layer::Residual(Residual::new(chw, rng)?)
        }
        LayerSpec::DenseBlock { repeats, growth } => {
            Layer::DenseBlock(DenseBlock::new(chw_of(shape, "denseblock")?, repeats, growth, rng)?)
        }
        LayerSpec::Softmax { classes } => Layer::Softmax(SoftmaxOutput::new(shape, classes, rng)),
    })
}

impl Input {
    pub fn shape(&self) -> Vec<usize> {
        match *self {
            Input::Image {
                channels,
                resolution,
            } => vec![channels, resolution, resolution],
            Input::Vector(n) => vec![n],
        }
    }
}
