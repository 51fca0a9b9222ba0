//! Composite blocks: the inception module, the residual block and the
//! densely connected block. All of them keep the spatial size of their input
//! by zero-padding every convolution symmetrically.

use super::activation::Activation;
use super::init::Init;
use super::layers::{batch_size, Conv2d, ConvCache, Pool2d, PoolCache};
use super::Rng;
use crate::error::{Error, Result};
use crate::tensor::{PoolMode, Tensor};

/// Concatenates `[B, C_i, H, W]` tensors along the channel axis.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Shape("nothing to concatenate".into()))?;
    let s = first.shape();
    if s.len() != 4 {
        return Err(Error::Shape(format!("expected [B,C,H,W], got {s:?}")));
    }
    let (b, h, w) = (s[0], s[2], s[3]);
    let mut total_c = 0;
    for p in parts {
        let ps = p.shape();
        if ps.len() != 4 || ps[0] != b || ps[2] != h || ps[3] != w {
            return Err(Error::Shape(format!(
                "cannot concatenate {ps:?} with {s:?} along channels"
            )));
        }
        total_c += ps[1];
    }
    let hw = h * w;
    let mut out = Vec::with_capacity(b * total_c * hw);
    for n in 0..b {
        for p in parts {
            let c = p.shape()[1];
            out.extend_from_slice(&p.data()[n * c * hw..(n + 1) * c * hw]);
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![b, total_c, h, w], out))
}

/// Copies channels `[start, start+len)` out of a `[B, C, H, W]` tensor.
pub(crate) fn slice_channels(t: &Tensor, start: usize, len: usize) -> Tensor {
    let s = t.shape();
    let (b, c, hw) = (s[0], s[1], s[2] * s[3]);
    let mut out = Vec::with_capacity(b * len * hw);
    for n in 0..b {
        let base = (n * c + start) * hw;
        out.extend_from_slice(&t.data()[base..base + len * hw]);
    }
    Tensor::from_parts_unchecked(vec![b, len, s[2], s[3]], out)
}

/// `acc[:, start..start+C_src] += src`
fn add_channels(acc: &mut Tensor, start: usize, src: &Tensor) {
    let (b, c) = (acc.shape()[0], acc.shape()[1]);
    let hw = acc.shape()[2] * acc.shape()[3];
    let sc = src.shape()[1];
    for n in 0..b {
        let dst = &mut acc.data_mut()[(n * c + start) * hw..][..sc * hw];
        for (d, v) in dst.iter_mut().zip(&src.data()[n * sc * hw..(n + 1) * sc * hw]) {
            *d += v;
        }
    }
}

fn same_conv(
    input: [usize; 3],
    filters: usize,
    kernel: usize,
    activation: Activation,
    init: Init,
    rng: &mut Rng,
) -> Result<Conv2d> {
    Conv2d::new(input, filters, kernel, 1, kernel / 2, activation, init, rng)
}

fn chw(shape: &[usize]) -> [usize; 3] {
    [shape[0], shape[1], shape[2]]
}

// ---------------------------------------------------------------------------
// Inception

/// Branch widths of an inception module.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InceptionWidths {
    pub b1: usize,
    pub b3_reduce: usize,
    pub b3: usize,
    pub b5_reduce: usize,
    pub b5: usize,
    pub pool_proj: usize,
}

impl InceptionWidths {
    pub fn output_channels(&self) -> usize {
        self.b1 + self.b3 + self.b5 + self.pool_proj
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.b1,
            self.b3_reduce,
            self.b3,
            self.b5_reduce,
            self.b5,
            self.pool_proj,
        ];
        if all.contains(&0) {
            return Err(Error::Config(format!(
                "inception branch widths must be positive, got {all:?}"
            )));
        }
        Ok(())
    }
}

/// Four parallel branches (1x1), (1x1 -> 3x3), (1x1 -> 5x5) and
/// (3x3 max-pool stride 1 -> 1x1), concatenated along channels.
#[derive(Debug, Clone)]
pub struct Inception {
    pub widths: InceptionWidths,
    pub branch1: Conv2d,
    pub reduce3: Conv2d,
    pub conv3: Conv2d,
    pub reduce5: Conv2d,
    pub conv5: Conv2d,
    pub pool: Pool2d,
    pub pool_proj: Conv2d,
    input_shape: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct InceptionCache {
    branch1: ConvCache,
    reduce3: ConvCache,
    conv3: ConvCache,
    reduce5: ConvCache,
    conv5: ConvCache,
    pool: PoolCache,
    pool_proj: ConvCache,
}

impl Inception {
    pub fn new(input_shape: [usize; 3], widths: InceptionWidths, rng: &mut Rng) -> Result<Self> {
        widths.validate()?;
        let [c, h, w] = input_shape;
        let relu = Activation::Relu;
        let he = Init::HeNormal;
        let branch1 = same_conv(input_shape, widths.b1, 1, relu, he, rng)?;
        let reduce3 = same_conv(input_shape, widths.b3_reduce, 1, relu, he, rng)?;
        let conv3 = same_conv([widths.b3_reduce, h, w], widths.b3, 3, relu, he, rng)?;
        let reduce5 = same_conv(input_shape, widths.b5_reduce, 1, relu, he, rng)?;
        let conv5 = same_conv([widths.b5_reduce, h, w], widths.b5, 5, relu, he, rng)?;
        let pool = Pool2d::new(input_shape, PoolMode::Max, 3, 1, 1)?;
        let pool_proj = same_conv([c, h, w], widths.pool_proj, 1, relu, he, rng)?;
        Ok(Inception {
            widths,
            branch1,
            reduce3,
            conv3,
            reduce5,
            conv5,
            pool,
            pool_proj,
            input_shape,
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![
            self.widths.output_channels(),
            self.input_shape[1],
            self.input_shape[2],
        ]
    }

    pub fn convs(&self) -> [&Conv2d; 6] {
        [
            &self.branch1,
            &self.reduce3,
            &self.conv3,
            &self.reduce5,
            &self.conv5,
            &self.pool_proj,
        ]
    }

    pub fn convs_mut(&mut self) -> [&mut Conv2d; 6] {
        [
            &mut self.branch1,
            &mut self.reduce3,
            &mut self.conv3,
            &mut self.reduce5,
            &mut self.conv5,
            &mut self.pool_proj,
        ]
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, InceptionCache)> {
        batch_size(x, &self.input_shape, "inception")?;
        let (y1, branch1) = self.branch1.forward(x)?;
        let (r3, reduce3) = self.reduce3.forward(x)?;
        let (y3, conv3) = self.conv3.forward(&r3)?;
        let (r5, reduce5) = self.reduce5.forward(x)?;
        let (y5, conv5) = self.conv5.forward(&r5)?;
        let (pooled, pool) = self.pool.forward(x)?;
        let (yp, pool_proj) = self.pool_proj.forward(&pooled)?;
        let out = concat_channels(&[&y1, &y3, &y5, &yp])?;
        Ok((
            out,
            InceptionCache {
                branch1,
                reduce3,
                conv3,
                reduce5,
                conv5,
                pool,
                pool_proj,
            },
        ))
    }

    pub fn backward(&mut self, cache: &InceptionCache, grad: &Tensor) -> Result<Tensor> {
        let w = self.widths;
        let mut offset = 0;
        let mut take = |n: usize| {
            let t = slice_channels(grad, offset, n);
            offset += n;
            t
        };
        let (g1, g3, g5, gp) = (take(w.b1), take(w.b3), take(w.b5), take(w.pool_proj));

        let mut dx = self.branch1.backward(&cache.branch1, &g1)?;
        let d = self.conv3.backward(&cache.conv3, &g3)?;
        dx.add_assign(&self.reduce3.backward(&cache.reduce3, &d)?);
        let d = self.conv5.backward(&cache.conv5, &g5)?;
        dx.add_assign(&self.reduce5.backward(&cache.reduce5, &d)?);
        let d = self.pool_proj.backward(&cache.pool_proj, &gp)?;
        dx.add_assign(&self.pool.backward(&cache.pool, &d)?);
        Ok(dx)
    }
}

// ---------------------------------------------------------------------------
// Residual

/// `ReLU(conv3x3(ReLU(conv3x3(x))) + x)`
#[derive(Debug, Clone)]
pub struct Residual {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    input_shape: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct ResidualCache {
    conv1: ConvCache,
    conv2: ConvCache,
    sum: Vec<f64>,
}

impl Residual {
    pub fn new(input_shape: [usize; 3], rng: &mut Rng) -> Result<Self> {
        let c = input_shape[0];
        let conv1 = same_conv(input_shape, c, 3, Activation::Relu, Init::HeNormal, rng)?;
        // conv2 feeds the post-addition ReLU.
        let conv2 = same_conv(input_shape, c, 3, Activation::Identity, Init::HeNormal, rng)?;
        Ok(Residual {
            conv1,
            conv2,
            input_shape,
        })
    }

    pub fn from_convs(input_shape: [usize; 3], conv1: Conv2d, conv2: Conv2d) -> Result<Self> {
        let block = Residual {
            conv1,
            conv2,
            input_shape,
        };
        let expect = input_shape.to_vec();
        if block.conv1.output_shape() != expect || block.conv2.output_shape() != expect {
            return Err(Error::Shape(
                "residual convolutions must preserve the input shape".into(),
            ));
        }
        Ok(block)
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.input_shape.to_vec()
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ResidualCache)> {
        batch_size(x, &self.input_shape, "residual")?;
        let (h, conv1) = self.conv1.forward(x)?;
        let (f, conv2) = self.conv2.forward(&h)?;
        let sum: Vec<f64> = f.data().iter().zip(x.data()).map(|(a, b)| a + b).collect();
        let out = sum.iter().map(|&v| Activation::Relu.eval(v)).collect();
        Ok((
            Tensor::from_parts_unchecked(x.shape().to_vec(), out),
            ResidualCache { conv1, conv2, sum },
        ))
    }

    pub fn backward(&mut self, cache: &ResidualCache, grad: &Tensor) -> Result<Tensor> {
        let mut gs = grad.data().to_vec();
        Activation::Relu.backprop_in_place(&cache.sum, &mut gs);
        let gs = Tensor::from_parts_unchecked(grad.shape().to_vec(), gs);
        let d = self.conv2.backward(&cache.conv2, &gs)?;
        let mut dx = self.conv1.backward(&cache.conv1, &d)?;
        dx.add_assign(&gs);
        Ok(dx)
    }
}

// ---------------------------------------------------------------------------
// Dense block

/// `n` repetitions of (1x1 conv -> ReLU -> 3x3 conv -> ReLU) producing
/// `growth` channels each; every repetition sees the channel concatenation of
/// the block input and all earlier outputs.
#[derive(Debug, Clone)]
pub struct DenseBlock {
    pub growth: usize,
    pub units: Vec<(Conv2d, Conv2d)>,
    input_shape: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct DenseBlockCache {
    units: Vec<(ConvCache, ConvCache)>,
}

/// Width of the 1x1 bottleneck in each dense-block repetition.
pub fn bottleneck_width(growth: usize) -> usize {
    4 * growth
}

impl DenseBlock {
    pub fn new(input_shape: [usize; 3], repeats: usize, growth: usize, rng: &mut Rng) -> Result<Self> {
        if growth == 0 {
            return Err(Error::Config("dense block growth must be positive".into()));
        }
        let [c, h, w] = input_shape;
        let mut units = Vec::with_capacity(repeats);
        for i in 0..repeats {
            let cin = c + i * growth;
            let width = bottleneck_width(growth);
            let c1 = same_conv([cin, h, w], width, 1, Activation::Relu, Init::HeNormal, rng)?;
            let c3 = same_conv([width, h, w], growth, 3, Activation::Relu, Init::HeNormal, rng)?;
            units.push((c1, c3));
        }
        Ok(DenseBlock {
            growth,
            units,
            input_shape,
        })
    }

    pub fn repeats(&self) -> usize {
        self.units.len()
    }

    pub fn output_shape(&self) -> Vec<usize> {
        let [c, h, w] = self.input_shape;
        vec![c + self.repeats() * self.growth, h, w]
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, DenseBlockCache)> {
        batch_size(x, &self.input_shape, "dense block")?;
        let mut features = x.clone();
        let mut caches = Vec::with_capacity(self.units.len());
        for (c1, c3) in &self.units {
            let (h, k1) = c1.forward(&features)?;
            let (y, k3) = c3.forward(&h)?;
            features = concat_channels(&[&features, &y])?;
            caches.push((k1, k3));
        }
        Ok((features, DenseBlockCache { units: caches }))
    }

    pub fn backward(&mut self, cache: &DenseBlockCache, grad: &Tensor) -> Result<Tensor> {
        let c_in = self.input_shape[0];
        let mut acc = grad.clone();
        for (i, ((c1, c3), (k1, k3))) in self.units.iter_mut().zip(&cache.units).enumerate().rev() {
            let start = c_in + i * self.growth;
            let gy = slice_channels(&acc, start, self.growth);
            let d = c3.backward(k3, &gy)?;
            let din = c1.backward(k1, &d)?;
            add_channels(&mut acc, 0, &din);
        }
        Ok(slice_channels(&acc, 0, c_in))
    }
}

pub(crate) fn chw_of(shape: &[usize], what: &str) -> Result<[usize; 3]> {
    if shape.len() != 3 {
        return Err(Error::Shape(format!(
            "{what} needs a [C,H,W] input, got {shape:?}"
        )));
    }
    Ok(chw(shape))
}
