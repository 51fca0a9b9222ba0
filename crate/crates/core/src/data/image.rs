use std::path::Path;

use image::{DynamicImage, GrayImage, ImageReader, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Smallest standard deviation used by samplewise normalization.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PreprocessMode {
    /// Divide by 255.
    Rescale,
    /// Per-image zero mean, unit standard deviation.
    Samplewise,
}

impl PreprocessMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PreprocessMode::Rescale => "rescale",
            PreprocessMode::Samplewise => "samplewise",
        }
    }
}

impl std::fmt::Display for PreprocessMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PreprocessMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rescale" => Ok(PreprocessMode::Rescale),
            "samplewise" | "samplewise_center_std" => Ok(PreprocessMode::Samplewise),
            other => Err(Error::Config(format!("unknown preprocessing mode `{other}`"))),
        }
    }
}

fn decode_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads an 8-bit grayscale or RGB image as a `[C,H,W]` tensor of values in
/// 0..=255. Alpha channels are dropped.
pub fn decode_image(path: &Path) -> Result<Tensor> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader.decode().map_err(|e| decode_err(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => {
            Tensor::new(&[1, h, w], buf.into_raw().into_iter().map(f64::from).collect())
        }
        DynamicImage::ImageLumaA8(_) => {
            let buf = img.to_luma8();
            Tensor::new(&[1, h, w], buf.into_raw().into_iter().map(f64::from).collect())
        }
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
            let raw = img.to_rgb8().into_raw();
            let plane = h * w;
            let mut data = vec![0.0; 3 * plane];
            for (i, px) in raw.chunks_exact(3).enumerate() {
                for c in 0..3 {
                    data[c * plane + i] = f64::from(px[c]);
                }
            }
            Tensor::new(&[3, h, w], data)
        }
        other => Err(decode_err(
            path,
            format!("unsupported pixel format {:?} (8-bit gray or RGB only)", other.color()),
        )),
    }
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Writes a `[1,H,W]` or `[3,H,W]` tensor with values in 0..=255; the format
/// follows the file extension.
pub fn encode_image(img: &Tensor, path: &Path) -> Result<()> {
    let (c, h, w) = match img.shape() {
        [c @ (1 | 3), h, w] => (*c, *h, *w),
        s => return Err(Error::Shape(format!("encode_image expects [1|3,H,W], got {s:?}"))),
    };
    let plane = h * w;
    let data = img.data();
    let result = if c == 1 {
        let raw = data.iter().map(|&v| to_u8(v)).collect();
        GrayImage::from_raw(w as u32, h as u32, raw)
            .expect("buffer size matches")
            .save(path)
    } else {
        let mut raw = Vec::with_capacity(3 * plane);
        for i in 0..plane {
            for ch in 0..3 {
                raw.push(to_u8(data[ch * plane + i]));
            }
        }
        RgbImage::from_raw(w as u32, h as u32, raw)
            .expect("buffer size matches")
            .save(path)
    };
    result.map_err(|e| decode_err(path, e.to_string()))
}

/// Corner-aligned bilinear resize of a `[C,H,W]` tensor to `[C,target,target]`.
pub fn resize_bilinear(img: &Tensor, target: usize) -> Result<Tensor> {
    let (c, h, w) = match img.shape() {
        [c, h, w] => (*c, *h, *w),
        s => return Err(Error::Shape(format!("resize expects [C,H,W], got {s:?}"))),
    };
    if target == 0 {
        return Err(Error::Argument("resize target must be positive".into()));
    }
    if h == target && w == target {
        return Ok(img.clone());
    }
    let coords = |src: usize| -> Vec<(usize, usize, f64)> {
        (0..target)
            .map(|i| {
                let pos = if target == 1 {
                    0.0
                } else {
                    i as f64 * (src - 1) as f64 / (target - 1) as f64
                };
                let lo = (pos.floor() as usize).min(src - 1);
                let hi = (lo + 1).min(src - 1);
                (lo, hi, pos - lo as f64)
            })
            .collect()
    };
    let ys = coords(h);
    let xs = coords(w);
    let src = img.data();
    let mut out = Vec::with_capacity(c * target * target);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor::new(&[c, target, target], out)
}

/// Converts between 1 and 3 channels: luma weights for RGB to gray,
/// replication for gray to RGB.
pub fn convert_channels(img: &Tensor, channels: usize) -> Result<Tensor> {
    let (c, h, w) = match img.shape() {
        [c, h, w] => (*c, *h, *w),
        s => return Err(Error::Shape(format!("expected [C,H,W], got {s:?}"))),
    };
    let plane = h * w;
    let d = img.data();
    match (c, channels) {
        (a, b) if a == b => Ok(img.clone()),
        (3, 1) => {
            let gray = (0..plane)
                .map(|i| 0.299 * d[i] + 0.587 * d[plane + i] + 0.114 * d[2 * plane + i])
                .collect();
            Tensor::new(&[1, h, w], gray)
        }
        (1, 3) => Tensor::new(&[3, h, w], d.repeat(3)),
        (a, b) => Err(Error::Shape(format!("cannot convert {a} channels to {b}"))),
    }
}

pub fn preprocess_in_place(values: &mut [f64], mode: PreprocessMode) {
    match mode {
        PreprocessMode::Rescale => values.iter_mut().for_each(|v| *v /= 255.0),
        PreprocessMode::Samplewise => {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std = var.sqrt().max(STD_FLOOR);
            values.iter_mut().for_each(|v| *v = (*v - mean) / std);
        }
    }
}

pub fn preprocess(img: &Tensor, mode: PreprocessMode) -> Tensor {
    let mut out = img.clone();
    preprocess_in_place(out.data_mut(), mode);
    out
}

/// Decode, convert channels, resize and preprocess one file.
pub fn load_image(path: &Path, channels: usize, resolution: usize, mode: PreprocessMode) -> Result<Tensor> {
    let raw = decode_image(path)?;
    let converted = convert_channels(&raw, channels).map_err(|e| decode_err(path, e.to_string()))?;
    let resized = resize_bilinear(&converted, resolution)?;
    Ok(preprocess(&resized, mode))
}
