//! Primitive layers. Each layer exposes a pure `forward` returning its output
//! together with the cache that `backward` needs; `backward` consumes that
//! cache, writes the parameter gradients into the layer's gradient slots and
//! returns the gradient with respect to the layer input.
//!
//! All tensors carry a leading batch axis. Parameter gradients are summed over
//! the batch, so a loss that averages over samples yields averaged gradients.

use rand::Rng as _;

use super::activation::{softmax_row, Activation};
use super::init::Init;
use super::Rng;
use crate::error::{Error, Result};
use crate::tensor::{crop_spatial, gemm, pad_spatial, window_out, ConvGeometry, PoolMode, Tensor};

/// Checks `x` is `[B, ..sample]` and returns `B`.
pub(crate) fn batch_size(x: &Tensor, sample: &[usize], what: &str) -> Result<usize> {
    let shape = x.shape();
    if shape.len() != sample.len() + 1 || shape[1..] != *sample {
        return Err(Error::Shape(format!(
            "{what} expects input [B, {sample:?}], got {shape:?}"
        )));
    }
    Ok(shape[0])
}

fn with_batch(batch: usize, sample: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(sample.len() + 1);
    s.push(batch);
    s.extend_from_slice(sample);
    s
}

fn check_grad(grad: &Tensor, expected: &[usize], what: &str) -> Result<()> {
    if grad.shape() != expected {
        return Err(Error::Shape(format!(
            "{what} backward expects gradient {expected:?}, got {:?}",
            grad.shape()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Dense

#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
    pub grad_weight: Tensor,
    pub grad_bias: Tensor,
    pub activation: Activation,
    input_shape: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Vec<f64>,
    z: Vec<f64>,
    batch: usize,
}

impl DenseCache {
    /// Pre-activations `z = W a + b`, one row per sample.
    pub fn z(&self) -> &[f64] {
        &self.z
    }
}

impl Dense {
    /// A dense layer over inputs of any per-sample shape (flattened).
    pub fn new(input_shape: &[usize], units: usize, activation: Activation, rng: &mut Rng) -> Self {
        let fan_in: usize = input_shape.iter().product();
        let init = Init::for_relu(activation == Activation::Relu);
        let weight = init.sample(&[units, fan_in], fan_in, units, rng);
        Self::from_parts(input_shape, weight, Tensor::zeros(&[units]).unwrap(), activation)
            .expect("consistent shapes")
    }

    pub fn from_parts(
        input_shape: &[usize],
        weight: Tensor,
        bias: Tensor,
        activation: Activation,
    ) -> Result<Self> {
        let fan_in: usize = input_shape.iter().product();
        if weight.rank() != 2 || weight.shape()[1] != fan_in {
            return Err(Error::Shape(format!(
                "dense weight {:?} incompatible with input {input_shape:?}",
                weight.shape()
            )));
        }
        if bias.shape() != [weight.shape()[0]] {
            return Err(Error::Shape(format!(
                "dense bias {:?} does not match {} units",
                bias.shape(),
                weight.shape()[0]
            )));
        }
        Ok(Dense {
            grad_weight: weight.zeros_like(),
            grad_bias: bias.zeros_like(),
            weight,
            bias,
            activation,
            input_shape: input_shape.to_vec(),
        })
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn units(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.units()]
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, DenseCache)> {
        let b = batch_size(x, &self.input_shape, "dense")?;
        let (n_in, n_out) = (self.in_features(), self.units());
        let mut z = vec![0.0; b * n_out];
        for row in z.chunks_mut(n_out) {
            row.copy_from_slice(self.bias.data());
        }
        gemm::nt(b, n_in, n_out, x.data(), self.weight.data(), &mut z);
        let mut a = z.clone();
        self.activation.apply_in_place(&mut a);
        let cache = DenseCache {
            input: x.data().to_vec(),
            z,
            batch: b,
        };
        Ok((Tensor::from_parts_unchecked(vec![b, n_out], a), cache))
    }

    pub fn backward(&mut self, cache: &DenseCache, grad: &Tensor) -> Result<Tensor> {
        let (b, n_in, n_out) = (cache.batch, self.in_features(), self.units());
        check_grad(grad, &[b, n_out], "dense")?;
        let mut dz = grad.data().to_vec();
        self.activation.backprop_in_place(&cache.z, &mut dz);

        let gw = self.grad_weight.data_mut();
        gw.fill(0.0);
        gemm::tn(n_out, b, n_in, &dz, &cache.input, gw);
        let gb = self.grad_bias.data_mut();
        gb.fill(0.0);
        for row in dz.chunks(n_out) {
            for (g, d) in gb.iter_mut().zip(row) {
                *g += d;
            }
        }

        let mut dx = vec![0.0; b * n_in];
        gemm::nn(b, n_out, n_in, &dz, self.weight.data(), &mut dx);
        Ok(Tensor::from_parts_unchecked(with_batch(b, &self.input_shape), dx))
    }
}

// ---------------------------------------------------------------------------
// Conv2d

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub grad_weight: Tensor,
    pub grad_bias: Tensor,
    pub activation: Activation,
    pub stride: usize,
    pub pad: usize,
    input_shape: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    cols: Vec<Vec<f64>>,
    z: Vec<f64>,
    batch: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        input_shape: [usize; 3],
        filters: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        activation: Activation,
        init: Init,
        rng: &mut Rng,
    ) -> Result<Self> {
        let c = input_shape[0];
        let fan_in = c * kernel * kernel;
        let fan_out = filters * kernel * kernel;
        let weight = init.sample(&[filters, c, kernel, kernel], fan_in, fan_out, rng);
        Self::from_parts(input_shape, weight, Tensor::zeros(&[filters])?, stride, pad, activation)
    }

    pub fn from_parts(
        input_shape: [usize; 3],
        weight: Tensor,
        bias: Tensor,
        stride: usize,
        pad: usize,
        activation: Activation,
    ) -> Result<Self> {
        let ws = weight.shape();
        if weight.rank() != 4 || ws[1] != input_shape[0] {
            return Err(Error::Shape(format!(
                "conv kernels {ws:?} incompatible with input {input_shape:?}"
            )));
        }
        if bias.shape() != [ws[0]] {
            return Err(Error::Shape(format!(
                "conv bias {:?} does not match {} filters",
                bias.shape(),
                ws[0]
            )));
        }
        if stride == 0 {
            return Err(Error::Config("conv stride must be positive".into()));
        }
        let (hp, wp) = (input_shape[1] + 2 * pad, input_shape[2] + 2 * pad);
        if ws[2] > hp || ws[3] > wp {
            return Err(Error::Shape(format!(
                "conv kernel {}x{} larger than padded input {hp}x{wp}",
                ws[2], ws[3]
            )));
        }
        Ok(Conv2d {
            grad_weight: weight.zeros_like(),
            grad_bias: bias.zeros_like(),
            weight,
            bias,
            activation,
            stride,
            pad,
            input_shape,
        })
    }

    pub fn filters(&self) -> usize {
        self.weight.shape()[0]
    }

    fn geometry(&self) -> ConvGeometry {
        let ws = self.weight.shape();
        ConvGeometry {
            channels: self.input_shape[0],
            height: self.input_shape[1] + 2 * self.pad,
            width: self.input_shape[2] + 2 * self.pad,
            kh: ws[2],
            kw: ws[3],
            stride: self.stride,
        }
    }

    pub fn output_shape(&self) -> Vec<usize> {
        let (ho, wo) = self.geometry().out_hw();
        vec![self.filters(), ho, wo]
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ConvCache)> {
        let b = batch_size(x, &self.input_shape, "conv")?;
        let [c, h, w] = self.input_shape;
        let geom = self.geometry();
        let (ho, wo) = geom.out_hw();
        let (o, p, k) = (self.filters(), ho * wo, geom.patch_len());
        let per_in = c * h * w;
        let mut z = vec![0.0; b * o * p];
        let mut cols_all = Vec::with_capacity(b);
        for (s, zs) in z.chunks_mut(o * p).enumerate() {
            let sample = &x.data()[s * per_in..(s + 1) * per_in];
            let padded = pad_spatial(sample, c, h, w, self.pad, 0.0);
            let cols = geom.im2col(&padded);
            for (row, &bias) in zs.chunks_mut(p).zip(self.bias.data()) {
                row.fill(bias);
            }
            gemm::nn(o, k, p, self.weight.data(), &cols, zs);
            cols_all.push(cols);
        }
        let mut a = z.clone();
        self.activation.apply_in_place(&mut a);
        let cache = ConvCache {
            cols: cols_all,
            z,
            batch: b,
        };
        Ok((Tensor::from_parts_unchecked(vec![b, o, ho, wo], a), cache))
    }

    pub fn backward(&mut self, cache: &ConvCache, grad: &Tensor) -> Result<Tensor> {
        let b = cache.batch;
        let [c, h, w] = self.input_shape;
        let geom = self.geometry();
        let (ho, wo) = geom.out_hw();
        let (o, p, k) = (self.filters(), ho * wo, geom.patch_len());
        check_grad(grad, &[b, o, ho, wo], "conv")?;

        let mut dz = grad.data().to_vec();
        self.activation.backprop_in_place(&cache.z, &mut dz);

        self.grad_weight.data_mut().fill(0.0);
        self.grad_bias.data_mut().fill(0.0);
        let per_in = c * h * w;
        let mut dx = vec![0.0; b * per_in];
        let mut dcols = vec![0.0; k * p];
        let mut dpadded = vec![0.0; c * geom.height * geom.width];
        for s in 0..b {
            let dzs = &dz[s * o * p..(s + 1) * o * p];
            gemm::nt(o, p, k, dzs, &cache.cols[s], self.grad_weight.data_mut());
            for (gb, row) in self.grad_bias.data_mut().iter_mut().zip(dzs.chunks(p)) {
                *gb += row.iter().sum::<f64>();
            }
            dcols.fill(0.0);
            gemm::tn(k, o, p, self.weight.data(), dzs, &mut dcols);
            dpadded.fill(0.0);
            geom.col2im(&dcols, &mut dpadded);
            let cropped = crop_spatial(&dpadded, c, h, w, self.pad);
            dx[s * per_in..(s + 1) * per_in].copy_from_slice(&cropped);
        }
        Ok(Tensor::from_parts_unchecked(vec![b, c, h, w], dx))
    }
}

// ---------------------------------------------------------------------------
// Pooling

#[derive(Debug, Clone)]
pub struct Pool2d {
    pub mode: PoolMode,
    pub window: usize,
    pub stride: usize,
    /// Max pooling only; padded cells never win the max.
    pub pad: usize,
    input_shape: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct PoolCache {
    /// Flat input index of the winning cell, per output cell (max mode).
    argmax: Vec<usize>,
    batch: usize,
}

impl Pool2d {
    pub fn new(input_shape: [usize; 3], mode: PoolMode, window: usize, stride: usize, pad: usize) -> Result<Self> {
        if window == 0 || stride == 0 {
            return Err(Error::Config("pool window and stride must be positive".into()));
        }
        if pad > 0 && mode == PoolMode::Avg {
            return Err(Error::Config("padding is only supported for max pooling".into()));
        }
        if pad >= window {
            return Err(Error::Config("pool padding must be smaller than the window".into()));
        }
        let (hp, wp) = (input_shape[1] + 2 * pad, input_shape[2] + 2 * pad);
        if window > hp || window > wp {
            return Err(Error::Shape(format!(
                "pool window {window} larger than input {}x{}",
                input_shape[1], input_shape[2]
            )));
        }
        Ok(Pool2d {
            mode,
            window,
            stride,
            pad,
            input_shape,
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        let [c, h, w] = self.input_shape;
        vec![
            c,
            window_out(h + 2 * self.pad, self.window, self.stride),
            window_out(w + 2 * self.pad, self.window, self.stride),
        ]
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, PoolCache)> {
        let b = batch_size(x, &self.input_shape, "pool")?;
        let [c, h, w] = self.input_shape;
        let out_shape = self.output_shape();
        let (ho, wo) = (out_shape[1], out_shape[2]);
        let (k, s, pad) = (self.window, self.stride, self.pad as isize);
        let area = (k * k) as f64;
        let mut out = Vec::with_capacity(b * c * ho * wo);
        let mut argmax = Vec::new();
        if self.mode == PoolMode::Max {
            argmax.reserve(b * c * ho * wo);
        }
        for plane_idx in 0..b * c {
            let base = plane_idx * h * w;
            let plane = &x.data()[base..base + h * w];
            for oy in 0..ho {
                for ox in 0..wo {
                    let y0 = (oy * s) as isize - pad;
                    let x0 = (ox * s) as isize - pad;
                    match self.mode {
                        PoolMode::Max => {
                            let mut best = f64::NEG_INFINITY;
                            let mut best_idx = usize::MAX;
                            for i in 0..k as isize {
                                let yy = y0 + i;
                                if yy < 0 || yy >= h as isize {
                                    continue;
                                }
                                for j in 0..k as isize {
                                    let xx = x0 + j;
                                    if xx < 0 || xx >= w as isize {
                                        continue;
                                    }
                                    let idx = yy as usize * w + xx as usize;
                                    let v = plane[idx];
                                    if best_idx == usize::MAX || v > best {
                                        best = v;
                                        best_idx = idx;
                                    }
                                }
                            }
                            out.push(best);
                            argmax.push(base + best_idx);
                        }
                        PoolMode::Avg => {
                            let mut acc = 0.0;
                            for i in 0..k {
                                let row = (y0 as usize + i) * w + x0 as usize;
                                acc += plane[row..row + k].iter().sum::<f64>();
                            }
                            out.push(acc / area);
                        }
                    }
                }
            }
        }
        Ok((
            Tensor::from_parts_unchecked(vec![b, c, ho, wo], out),
            PoolCache { argmax, batch: b },
        ))
    }

    pub fn backward(&self, cache: &PoolCache, grad: &Tensor) -> Result<Tensor> {
        let b = cache.batch;
        let [c, h, w] = self.input_shape;
        let out_shape = self.output_shape();
        let (ho, wo) = (out_shape[1], out_shape[2]);
        check_grad(grad, &[b, c, ho, wo], "pool")?;
        let mut dx = vec![0.0; b * c * h * w];
        match self.mode {
            PoolMode::Max => {
                for (&idx, &g) in cache.argmax.iter().zip(grad.data()) {
                    dx[idx] += g;
                }
            }
            PoolMode::Avg => {
                let (k, s) = (self.window, self.stride);
                let area = (k * k) as f64;
                for plane_idx in 0..b * c {
                    let gplane = &grad.data()[plane_idx * ho * wo..][..ho * wo];
                    let dplane = &mut dx[plane_idx * h * w..][..h * w];
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let g = gplane[oy * wo + ox] / area;
                            for i in 0..k {
                                let row = (oy * s + i) * w + ox * s;
                                for d in &mut dplane[row..row + k] {
                                    *d += g;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(Tensor::from_parts_unchecked(vec![b, c, h, w], dx))
    }
}

// ---------------------------------------------------------------------------
// Global average pooling

#[derive(Debug, Clone)]
pub struct GlobalAvgPool {
    input_shape: [usize; 3],
}

impl GlobalAvgPool {
    pub fn new(input_shape: [usize; 3]) -> Self {
        GlobalAvgPool { input_shape }
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.input_shape[0]]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let b = batch_size(x, &self.input_shape, "globalavgpool")?;
        let [c, h, w] = self.input_shape;
        let hw = h * w;
        let out = x
            .data()
            .chunks(hw)
            .map(|plane| plane.iter().sum::<f64>() / hw as f64)
            .collect();
        Ok(Tensor::from_parts_unchecked(vec![b, c], out))
    }

    pub fn backward(&self, batch: usize, grad: &Tensor) -> Result<Tensor> {
        let [c, h, w] = self.input_shape;
        check_grad(grad, &[batch, c], "globalavgpool")?;
        let hw = h * w;
        let mut dx = Vec::with_capacity(batch * c * hw);
        for &g in grad.data() {
            dx.extend(std::iter::repeat_n(g / hw as f64, hw));
        }
        Ok(Tensor::from_parts_unchecked(vec![batch, c, h, w], dx))
    }
}

/// Global average pooling of a single `[C, H, W]` tensor.
pub fn global_average_pool(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 3 {
        return Err(Error::Shape(format!("expected [C,H,W], got {:?}", x.shape())));
    }
    let s = x.shape();
    let gap = GlobalAvgPool::new([s[0], s[1], s[2]]);
    let batched = x.clone().reshape(&with_batch(1, s))?;
    gap.forward(&batched)?.reshape(&[s[0]])
}

// ---------------------------------------------------------------------------
// Dropout

#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f64,
    input_shape: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DropoutCache {
    /// Per-cell multiplier (0 or 1/(1-p)); `None` when run in inference mode.
    mask: Option<Vec<f64>>,
}

impl DropoutCache {
    pub fn mask(&self) -> Option<&[f64]> {
        self.mask.as_deref()
    }

    pub fn from_mask(mask: Vec<f64>) -> Self {
        DropoutCache { mask: Some(mask) }
    }
}

impl Dropout {
    pub fn new(input_shape: &[usize], rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Dropout {
            rate,
            input_shape: input_shape.to_vec(),
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.input_shape.clone()
    }

    /// Inverted dropout. With `rng` present each cell is dropped with
    /// probability `rate` and survivors are scaled by `1/(1-rate)`; without it
    /// the layer is the identity.
    pub fn forward(&self, x: &Tensor, rng: Option<&mut Rng>) -> Result<(Tensor, DropoutCache)> {
        batch_size(x, &self.input_shape, "dropout")?;
        match rng {
            None => Ok((x.clone(), DropoutCache { mask: None })),
            Some(rng) => {
                let keep = 1.0 - self.rate;
                let scale = 1.0 / keep;
                let mask: Vec<f64> = (0..x.len())
                    .map(|_| {
                        if self.rate > 0.0 && rng.gen::<f64>() < self.rate {
                            0.0
                        } else {
                            scale
                        }
                    })
                    .collect();
                let y = x
                    .data()
                    .iter()
                    .zip(&mask)
                    .map(|(v, m)| v * m)
                    .collect();
                Ok((
                    Tensor::from_parts_unchecked(x.shape().to_vec(), y),
                    DropoutCache { mask: Some(mask) },
                ))
            }
        }
    }

    pub fn backward(&self, cache: &DropoutCache, grad: &Tensor) -> Result<Tensor> {
        match &cache.mask {
            None => Ok(grad.clone()),
            Some(mask) => {
                if mask.len() != grad.len() {
                    return Err(Error::Shape("dropout gradient does not match mask".into()));
                }
                Ok(grad.map_with(mask, |g, m| g * m))
            }
        }
    }
}

/// Standalone dropout on an arbitrary tensor (treated as one sample).
pub fn dropout_forward(rate: f64, x: &Tensor, training: bool, rng: &mut Rng) -> Result<Tensor> {
    let layer = Dropout::new(x.shape(), rate)?;
    let batched = x.clone().reshape(&with_batch(1, x.shape()))?;
    let (y, _) = layer.forward(&batched, training.then_some(rng))?;
    y.reshape(x.shape())
}

impl Tensor {
    pub(crate) fn map_with(&self, other: &[f64], f: impl Fn(f64, f64) -> f64) -> Tensor {
        let data = self.data().iter().zip(other).map(|(&a, &b)| f(a, b)).collect();
        Tensor::from_parts_unchecked(self.shape().to_vec(), data)
    }
}

// ---------------------------------------------------------------------------
// Flatten / standalone activation

#[derive(Debug, Clone)]
pub struct Flatten {
    input_shape: Vec<usize>,
}

impl Flatten {
    pub fn new(input_shape: &[usize]) -> Self {
        Flatten {
            input_shape: input_shape.to_vec(),
        }
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.input_shape.iter().product()]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let b = batch_size(x, &self.input_shape, "flatten")?;
        x.clone().reshape(&[b, self.output_shape()[0]])
    }

    pub fn backward(&self, batch: usize, grad: &Tensor) -> Result<Tensor> {
        grad.clone().reshape(&with_batch(batch, &self.input_shape))
    }
}

#[derive(Debug, Clone)]
pub struct ActivationLayer {
    pub activation: Activation,
    input_shape: Vec<usize>,
}

impl ActivationLayer {
    pub fn new(input_shape: &[usize], activation: Activation) -> Self {
        ActivationLayer {
            activation,
            input_shape: input_shape.to_vec(),
        }
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.input_shape.clone()
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        batch_size(x, &self.input_shape, "activation")?;
        Ok((self.activation.apply(x), x.clone()))
    }

    pub fn backward(&self, z: &Tensor, grad: &Tensor) -> Result<Tensor> {
        check_grad(grad, z.shape(), "activation")?;
        let mut g = grad.data().to_vec();
        self.activation.backprop_in_place(z.data(), &mut g);
        Ok(Tensor::from_parts_unchecked(grad.shape().to_vec(), g))
    }
}

// ---------------------------------------------------------------------------
// Softmax classifier head

/// Linear projection to `classes` logits followed by a row-wise softmax.
#[derive(Debug, Clone)]
pub struct SoftmaxOutput {
    pub dense: Dense,
}

#[derive(Debug, Clone)]
pub struct SoftmaxCache {
    dense: DenseCache,
    probs: Vec<f64>,
}

impl SoftmaxOutput {
    pub fn new(input_shape: &[usize], classes: usize, rng: &mut Rng) -> Self {
        SoftmaxOutput {
            dense: Dense::new(input_shape, classes, Activation::Identity, rng),
        }
    }

    pub fn classes(&self) -> usize {
        self.dense.units()
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, SoftmaxCache)> {
        let (logits, dense) = self.dense.forward(x)?;
        let k = self.classes();
        let mut probs = vec![0.0; logits.len()];
        for (zr, pr) in logits.data().chunks(k).zip(probs.chunks_mut(k)) {
            softmax_row(zr, pr);
        }
        let out = Tensor::from_parts_unchecked(logits.shape().to_vec(), probs.clone());
        Ok((out, SoftmaxCache { dense, probs }))
    }

    /// Backward from a gradient with respect to the output probabilities.
    pub fn backward(&mut self, cache: &SoftmaxCache, grad: &Tensor) -> Result<Tensor> {
        let k = self.classes();
        check_grad(grad, &[cache.dense.batch, k], "softmax")?;
        let mut dz = vec![0.0; grad.len()];
        for ((g, y), d) in grad
            .data()
            .chunks(k)
            .zip(cache.probs.chunks(k))
            .zip(dz.chunks_mut(k))
        {
            let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
            for i in 0..k {
                d[i] = y[i] * (g[i] - dot);
            }
        }
        let dz = Tensor::from_parts_unchecked(grad.shape().to_vec(), dz);
        self.dense.backward(&cache.dense, &dz)
    }

    /// Backward from a gradient with respect to the logits (fused
    /// softmax + cross-entropy path).
    pub fn backward_logits(&mut self, cache: &SoftmaxCache, grad: &Tensor) -> Result<Tensor> {
        self.dense.backward(&cache.dense, grad)
    }
}
