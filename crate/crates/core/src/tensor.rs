//! Dense row-major `f64` tensors and the primitives the layers are built on.
//!
//! Every operation here is a pure function of its inputs: arguments are taken
//! by reference and a fresh tensor is returned.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.data.len() <= 32 {
            write!(f, "Tensor{:?} {:?}", self.shape, self.data)
        } else {
            write!(f, "Tensor{:?} [{} values]", self.shape, self.data.len())
        }
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::Shape("tensor rank must be at least 1".into()));
    }
    if let Some(pos) = shape.iter().position(|&e| e == 0) {
        return Err(Error::Shape(format!(
            "extent {pos} of shape {shape:?} is zero"
        )));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    /// Builds a tensor from a shape and a row-major buffer.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(&[n], data)
    }

    /// 2-D convenience constructor; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(&[rows.len(), cols], rows.concat())
    }

    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub(crate) fn zeros_like(&self) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    pub fn get(&self, index: &[usize]) -> Option<f64> {
        if index.len() != self.shape.len() {
            return None;
        }
        let mut flat = 0;
        for (&i, &e) in index.iter().zip(&self.shape) {
            if i >= e {
                return None;
            }
            flat = flat * e + i;
        }
        Some(self.data[flat])
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "elementwise operands differ: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor::from_parts_unchecked(self.shape.clone(), data))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_parts_unchecked(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Right-hand operand of [`elementwise`].
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Tensor(&'a Tensor),
    Scalar(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Scale,
}

/// Cellwise arithmetic. Tensor operands must have identical shapes; a scalar
/// operand is broadcast to every cell.
pub fn elementwise(op: ElementwiseOp, a: &Tensor, b: Operand<'_>) -> Result<Tensor> {
    match (op, b) {
        (ElementwiseOp::Add, Operand::Tensor(b)) => a.add(b),
        (ElementwiseOp::Sub, Operand::Tensor(b)) => a.sub(b),
        (ElementwiseOp::Mul, Operand::Tensor(b)) => a.mul(b),
        (ElementwiseOp::Add, Operand::Scalar(s)) => Ok(a.map(|v| v + s)),
        (ElementwiseOp::Sub, Operand::Scalar(s)) => Ok(a.map(|v| v - s)),
        (ElementwiseOp::Mul | ElementwiseOp::Scale, Operand::Scalar(s)) => Ok(a.scale(s)),
        (ElementwiseOp::Scale, Operand::Tensor(_)) => Err(Error::Argument(
            "scale takes a scalar operand".into(),
        )),
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::Shape(format!(
            "matmul needs rank-2 operands, got {:?} and {:?}",
            a.shape, b.shape
        )));
    }
    let (m, k) = (a.shape[0], a.shape[1]);
    let (k2, n) = (b.shape[0], b.shape[1]);
    if k != k2 {
        return Err(Error::Shape(format!(
            "matmul inner extents differ: {:?} x {:?}",
            a.shape, b.shape
        )));
    }
    let mut out = vec![0.0; m * n];
    gemm::nn(m, k, n, &a.data, &b.data, &mut out);
    Ok(Tensor::from_parts_unchecked(vec![m, n], out))
}

/// Output extent of a sliding window along one axis.
pub fn window_out(len: usize, window: usize, stride: usize) -> usize {
    (len - window) / stride + 1
}

/// Valid (unpadded) cross-correlation of a `[C, H, W]` input with
/// `[O, C, Kh, Kw]` kernels.
pub fn conv2d_valid(input: &Tensor, kernels: &Tensor, stride: usize) -> Result<Tensor> {
    if input.rank() != 3 || kernels.rank() != 4 {
        return Err(Error::Shape(format!(
            "conv2d expects [C,H,W] input and [O,C,Kh,Kw] kernels, got {:?} and {:?}",
            input.shape, kernels.shape
        )));
    }
    if stride == 0 {
        return Err(Error::Argument("stride must be positive".into()));
    }
    let (c, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
    let (o, kc, kh, kw) = (
        kernels.shape[0],
        kernels.shape[1],
        kernels.shape[2],
        kernels.shape[3],
    );
    if kc != c {
        return Err(Error::Shape(format!(
            "kernel expects {kc} input channels, input has {c}"
        )));
    }
    if kh > h || kw > w {
        return Err(Error::Shape(format!(
            "kernel {kh}x{kw} larger than input {h}x{w}"
        )));
    }
    let geom = ConvGeometry {
        channels: c,
        height: h,
        width: w,
        kh,
        kw,
        stride,
    };
    let cols = geom.im2col(&input.data);
    let (ho, wo) = geom.out_hw();
    let mut out = vec![0.0; o * ho * wo];
    gemm::nn(o, geom.patch_len(), ho * wo, &kernels.data, &cols, &mut out);
    Ok(Tensor::from_parts_unchecked(vec![o, ho, wo], out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Max,
    Avg,
}

/// Max or mean pooling over `[C, H, W]` windows. Windows are "valid" only.
pub fn pool2d(input: &Tensor, window: [usize; 2], stride: usize, mode: PoolMode) -> Result<Tensor> {
    if input.rank() != 3 {
        return Err(Error::Shape(format!(
            "pool2d expects [C,H,W], got {:?}",
            input.shape
        )));
    }
    if stride == 0 || window[0] == 0 || window[1] == 0 {
        return Err(Error::Argument("pool window and stride must be positive".into()));
    }
    let (c, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
    let [ph, pw] = window;
    if ph > h || pw > w {
        return Err(Error::Shape(format!(
            "pool window {ph}x{pw} larger than input {h}x{w}"
        )));
    }
    let (ho, wo) = (window_out(h, ph, stride), window_out(w, pw, stride));
    let mut out = Vec::with_capacity(c * ho * wo);
    let area = (ph * pw) as f64;
    for ch in 0..c {
        let plane = &input.data[ch * h * w..(ch + 1) * h * w];
        for y in 0..ho {
            for x in 0..wo {
                let mut acc = match mode {
                    PoolMode::Max => f64::NEG_INFINITY,
                    PoolMode::Avg => 0.0,
                };
                for i in 0..ph {
                    let row = &plane[(y * stride + i) * w + x * stride..][..pw];
                    for &v in row {
                        match mode {
                            PoolMode::Max => {
                                if v > acc {
                                    acc = v
                                }
                            }
                            PoolMode::Avg => acc += v,
                        }
                    }
                }
                out.push(match mode {
                    PoolMode::Max => acc,
                    PoolMode::Avg => acc / area,
                });
            }
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![c, ho, wo], out))
}

/// Symmetric spatial padding of a `[C, H, W]` buffer.
pub(crate) fn pad_spatial(data: &[f64], c: usize, h: usize, w: usize, pad: usize, fill: f64) -> Vec<f64> {
    if pad == 0 {
        return data.to_vec();
    }
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![fill; c * hp * wp];
    for ch in 0..c {
        for y in 0..h {
            let src = &data[(ch * h + y) * w..][..w];
            let dst = (ch * hp + y + pad) * wp + pad;
            out[dst..dst + w].copy_from_slice(src);
        }
    }
    out
}

/// Inverse of [`pad_spatial`]: keeps the interior of a padded buffer.
pub(crate) fn crop_spatial(data: &[f64], c: usize, h: usize, w: usize, pad: usize) -> Vec<f64> {
    if pad == 0 {
        return data.to_vec();
    }
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut out = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for y in 0..h {
            let src = (ch * hp + y + pad) * wp + pad;
            out.extend_from_slice(&data[src..src + w]);
        }
    }
    out
}

/// Geometry of a valid sliding window over a single `[C, H, W]` sample.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn out_hw(&self) -> (usize, usize) {
        (
            window_out(self.height, self.kh, self.stride),
            window_out(self.width, self.kw, self.stride),
        )
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    /// Unfolds windows into a `[C*Kh*Kw, Ho*Wo]` matrix.
    pub fn im2col(&self, input: &[f64]) -> Vec<f64> {
        let (ho, wo) = self.out_hw();
        let p = ho * wo;
        let (h, w, s) = (self.height, self.width, self.stride);
        let mut cols = vec![0.0; self.patch_len() * p];
        let mut row = 0;
        for c in 0..self.channels {
            let plane = &input[c * h * w..(c + 1) * h * w];
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for y in 0..ho {
                        let src_row = &plane[(y * s + i) * w + j..];
                        let d = &mut dst[y * wo..(y + 1) * wo];
                        if s == 1 {
                            d.copy_from_slice(&src_row[..wo]);
                        } else {
                            for (x, v) in d.iter_mut().enumerate() {
                                *v = src_row[x * s];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
        cols
    }

    /// Scatter-adds a `[C*Kh*Kw, Ho*Wo]` matrix back onto a `[C, H, W]` buffer.
    pub fn col2im(&self, cols: &[f64], out: &mut [f64]) {
        let (ho, wo) = self.out_hw();
        let p = ho * wo;
        let (h, w, s) = (self.height, self.width, self.stride);
        let mut row = 0;
        for c in 0..self.channels {
            let plane = &mut out[c * h * w..(c + 1) * h * w];
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let src = &cols[row * p..(row + 1) * p];
                    for y in 0..ho {
                        let base = (y * s + i) * w + j;
                        let srow = &src[y * wo..(y + 1) * wo];
                        if s == 1 {
                            for (d, v) in plane[base..base + wo].iter_mut().zip(srow) {
                                *d += v;
                            }
                        } else {
                            for (x, v) in srow.iter().enumerate() {
                                plane[base + x * s] += v;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Row-major GEMM kernels that accumulate into `c`.
pub(crate) mod gemm {
    /// `c[m,n] += a[m,k] * b[k,n]`
    pub fn nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
        debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
        for i in 0..m {
            let c_row = &mut c[i * n..(i + 1) * n];
            let a_row = &a[i * k..(i + 1) * k];
            for (t, &av) in a_row.iter().enumerate() {
                let b_row = &b[t * n..(t + 1) * n];
                for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                    *cv += av * bv;
                }
            }
        }
    }

    /// `c[m,n] += a[m,k] * b[n,k]^T`
    pub fn nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
        debug_assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
        for i in 0..m {
            let a_row = &a[i * k..(i + 1) * k];
            for j in 0..n {
                let b_row = &b[j * k..(j + 1) * k];
                c[i * n + j] += dot(a_row, b_row);
            }
        }
    }

    /// `c[m,n] += a[k,m]^T * b[k,n]`
    pub fn tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
        debug_assert!(a.len() >= k * m && b.len() >= k * n && c.len() >= m * n);
        for t in 0..k {
            let a_row = &a[t * m..(t + 1) * m];
            let b_row = &b[t * n..(t + 1) * n];
            for (i, &av) in a_row.iter().enumerate() {
                let c_row = &mut c[i * n..(i + 1) * n];
                for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                    *cv += av * bv;
                }
            }
        }
    }

    /// Four-lane dot product; the lane split keeps the loop vectorizable.
    fn dot(a: &[f64], b: &[f64]) -> f64 {
        let mut acc = [0.0f64; 4];
        let chunks = a.len() / 4;
        for q in 0..chunks {
            for l in 0..4 {
                acc[l] += a[q * 4 + l] * b[q * 4 + l];
            }
        }
        let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
        for t in chunks * 4..a.len() {
            s += a[t] * b[t];
        }
        s
    }
}
