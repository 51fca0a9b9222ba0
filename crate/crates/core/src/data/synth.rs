//! Procedural grayscale corpus with visually separable classes.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng as _, SeedableRng};
use rand_distr::{Distribution, Normal};

use super::dataset::Split;
use super::image::encode_image;
use crate::error::{Error, Result};
use crate::nn::Rng;
use crate::tensor::Tensor;

pub const SYNTH_CLASSES: [&str; 5] = [
    "class0_disk",
    "class1_bands",
    "class2_gradient",
    "class3_vbands",
    "class4_ring",
];

/// Pixel noise standard deviation on the 0..255 scale.
pub const NOISE_SIGMA: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub train_per_class: usize,
    /// 0 writes only the `train/` tree.
    pub val_per_class: usize,
    pub classes: usize,
    pub resolution: usize,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.classes > SYNTH_CLASSES.len() {
            return Err(Error::Argument(format!(
                "synthetic corpus supports 2..={} classes, got {}",
                SYNTH_CLASSES.len(),
                self.classes
            )));
        }
        if self.resolution < 8 {
            return Err(Error::Argument("synthetic resolution must be at least 8".into()));
        }
        if self.train_per_class == 0 {
            return Err(Error::Argument("need at least one training image per class".into()));
        }
        Ok(())
    }
}

/// Noise-free image of the given class with randomized placement, `[1,R,R]`
/// with values in 0..=255.
pub fn clean_image(class: usize, resolution: usize, rng: &mut Rng) -> Tensor {
    let r = resolution as f64;
    let dark = rng.gen_range(20.0..60.0);
    let bright = rng.gen_range(190.0..235.0);
    let mut px = vec![0.0; resolution * resolution];
    match class {
        0 | 4 => {
            let cx = r / 2.0 + rng.gen_range(-0.08..0.08) * r;
            let cy = r / 2.0 + rng.gen_range(-0.08..0.08) * r;
            let radius = rng.gen_range(0.2..0.32) * r;
            let inner = if class == 4 { radius * 0.6 } else { -1.0 };
            for y in 0..resolution {
                for x in 0..resolution {
                    let d = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
                    px[y * resolution + x] = if d <= radius && d > inner { bright } else { dark };
                }
            }
        }
        1 | 3 => {
            let period = rng.gen_range(0.2..0.3) * r;
            let phase = rng.gen_range(0.0..period);
            for y in 0..resolution {
                for x in 0..resolution {
                    let t = if class == 1 { y } else { x } as f64 + phase;
                    let on = (t / period).floor() as i64 % 2 == 0;
                    px[y * resolution + x] = if on { bright } else { dark };
                }
            }
        }
        _ => {
            // diagonal ramp from the top-left corner to the bottom-right
            let angle = PI / 4.0 + rng.gen_range(-0.2..0.2);
            let (c, s) = (angle.cos(), angle.sin());
            let span = (r - 1.0) * (c + s);
            for y in 0..resolution {
                for x in 0..resolution {
                    let t = (x as f64 * c + y as f64 * s) / span;
                    px[y * resolution + x] = dark + (bright - dark) * t.clamp(0.0, 1.0);
                }
            }
        }
    }
    Tensor::new(&[1, resolution, resolution], px).expect("square image")
}

/// Clean image plus Gaussian pixel noise, rounded and clamped to 0..=255.
pub fn noisy_image(class: usize, resolution: usize, rng: &mut Rng) -> Tensor {
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
    let clean = clean_image(class, resolution, rng);
    let data = clean
        .data()
        .iter()
        .map(|&v| (v + noise.sample(rng)).round().clamp(0.0, 255.0))
        .collect();
    Tensor::new(clean.shape(), data).expect("same shape")
}

/// Writes `root/train/<class>/NNNN.png` (and `root/val/...`) and returns the
/// written paths in generation order.
pub fn synth_dataset(root: &Path, spec: &SynthSpec) -> Result<Vec<PathBuf>> {
    spec.validate()?;
    let mut rng = Rng::seed_from_u64(spec.seed);
    let mut written = Vec::new();
    for (split, count) in [(Split::Train, spec.train_per_class), (Split::Validation, spec.val_per_class)] {
        if count == 0 {
            continue;
        }
        for (class, name) in SYNTH_CLASSES.iter().enumerate().take(spec.classes) {
            let dir = root.join(split.dir_name()).join(name);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for i in 0..count {
                let img = noisy_image(class, spec.resolution, &mut rng);
                let path = dir.join(format!("{i:04}.png"));
                encode_image(&img, &path)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
