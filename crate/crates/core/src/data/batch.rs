use rand::seq::SliceRandom;
use rand::SeedableRng;

use super::dataset::DatasetIndex;
use super::image::{load_image, PreprocessMode};
use crate::error::{Error, Result};
use crate::nn::Rng;
use crate::tensor::Tensor;

/// Decoded, resized and preprocessed samples held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub classes: Vec<String>,
    sample_shape: Vec<usize>,
    pixels: Vec<f64>,
    labels: Vec<usize>,
}

impl LoadedDataset {
    pub fn load(index: &DatasetIndex, channels: usize, resolution: usize, mode: PreprocessMode) -> Result<Self> {
        let sample_shape = vec![channels, resolution, resolution];
        let mut pixels = Vec::with_capacity(index.len() * channels * resolution * resolution);
        let mut labels = Vec::with_capacity(index.len());
        for s in &index.samples {
            let img = load_image(&s.path, channels, resolution, mode)?;
            pixels.extend_from_slice(img.data());
            labels.push(s.label);
        }
        Ok(LoadedDataset {
            classes: index.classes.clone(),
            sample_shape,
            pixels,
            labels,
        })
    }

    pub fn from_parts(classes: Vec<String>, sample_shape: Vec<usize>, pixels: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        let per: usize = sample_shape.iter().product();
        if per == 0 || pixels.len() != per * labels.len() {
            return Err(Error::Shape(format!(
                "{} values for {} samples of shape {sample_shape:?}",
                pixels.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= classes.len()) {
            return Err(Error::Argument(format!("label {bad} out of range")));
        }
        Ok(LoadedDataset {
            classes,
            sample_shape,
            pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let per: usize = self.sample_shape.iter().product();
        &self.pixels[i * per..(i + 1) * per]
    }

    /// Stacks the given samples into `[B, ...sample_shape]`.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let mut data = Vec::with_capacity(indices.len() * self.sample(0).len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(&self.sample_shape);
        Ok((Tensor::new(&shape, data)?, labels))
    }

    pub fn batches(&self, batch_size: usize, shuffle_seed: Option<u64>) -> Result<Batches<'_>> {
        Ok(Batches {
            data: self,
            order: BatchIterator::new(self.len(), batch_size, shuffle_seed)?,
        })
    }
}

/// Index chunks over `0..n`, optionally shuffled once from a seed. The last
/// batch may be short.
#[derive(Debug, Clone)]
pub struct BatchIterator {
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl BatchIterator {
    pub fn new(n: usize, batch_size: usize, shuffle_seed: Option<u64>) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Argument("batch size must be positive".into()));
        }
        let mut order: Vec<usize> = (0..n).collect();
        if let Some(seed) = shuffle_seed {
            order.shuffle(&mut Rng::seed_from_u64(seed));
        }
        Ok(BatchIterator {
            order,
            batch_size,
            pos: 0,
        })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl Iterator for BatchIterator {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let chunk = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(chunk)
    }
}

pub struct Batches<'a> {
    data: &'a LoadedDataset,
    order: BatchIterator,
}

impl Iterator for Batches<'_> {
    type Item = (Tensor, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        let idx = self.order.next()?;
        Some(self.data.gather(&idx).expect("indices come from the dataset"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_determinism() {
        let sizes: Vec<usize> = BatchIterator::new(10, 4, Some(1)).unwrap().map(|b| b.len()).collect();
        assert_eq!(sizes, [4, 4, 2]);
        let a: Vec<_> = BatchIterator::new(10, 4, Some(7)).unwrap().collect();
        let b: Vec<_> = BatchIterator::new(10, 4, Some(7)).unwrap().collect();
        assert_eq!(a, b);
        let c = BatchIterator::new(10, 4, Some(8)).unwrap();
        assert_ne!(a.concat(), c.order());
        assert!(BatchIterator::new(3, 0, None).is_err());
    }

    #[test]
    fn gather_stacks() {
        let ds = LoadedDataset::from_parts(
            vec!["a".into(), "b".into()],
            vec![1, 1, 2],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            vec![0, 1, 0],
        )
        .unwrap();
        let (x, y) = ds.gather(&[2, 0]).unwrap();
        assert_eq!(x.shape(), &[2, 1, 1, 2]);
        assert_eq!(x.data(), &[5.0, 6.0, 1.0, 2.0]);
        assert_eq!(y, [0, 0]);
        assert_eq!(ds.batches(2, None).unwrap().count(), 2);
    }
}
