//! Loss functions and their gradients with respect to the predictions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probabilities are clipped to `[PROB_FLOOR, 1]` before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossName {
    Mse,
    Mae,
    UpperBound,
    CategoricalCrossEntropy,
}

impl LossName {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossName::Mse => "mse",
            LossName::Mae => "mae",
            LossName::UpperBound => "upper_bound",
            LossName::CategoricalCrossEntropy => "categorical_cross_entropy",
        }
    }
}

impl fmt::Display for LossName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossName::Mse),
            "mae" => Ok(LossName::Mae),
            "upper_bound" | "upper-bound" => Ok(LossName::UpperBound),
            "cce" | "categorical_cross_entropy" | "categorical-cross-entropy" => {
                Ok(LossName::CategoricalCrossEntropy)
            }
            other => Err(Error::Config(format!("unknown loss `{other}`"))),
        }
    }
}

fn check(pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "loss: prediction shape {:?} != target shape {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    Ok(())
}

/// Number of rows when the tensor is read as a batch of vectors.
fn rows(t: &Tensor) -> usize {
    if t.rank() == 1 {
        1
    } else {
        t.shape()[0]
    }
}

pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check(pred, target)?;
    let n = pred.len() as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(x, y)| (y - x) * (y - x))
        .sum::<f64>()
        / n)
}

pub fn mae(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check(pred, target)?;
    let n = pred.len() as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(x, y)| (y - x).abs())
        .sum::<f64>()
        / n)
}

pub fn upper_bound(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check(pred, target)?;
    let n = pred.len() as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(x, y)| (1.0 - x).max(*y).max(0.0))
        .sum::<f64>()
        / n)
}

/// Cross-entropy of probability rows against target rows, averaged over rows.
pub fn categorical_cross_entropy(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check(pred, target)?;
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .filter(|(_, t)| **t != 0.0)
        .map(|(p, t)| -t * p.clamp(PROB_FLOOR, 1.0).ln())
        .sum();
    Ok(total / rows(pred) as f64)
}

pub fn loss(name: LossName, pred: &Tensor, target: &Tensor) -> Result<f64> {
    match name {
        LossName::Mse => mse(pred, target),
        LossName::Mae => mae(pred, target),
        LossName::UpperBound => upper_bound(pred, target),
        LossName::CategoricalCrossEntropy => categorical_cross_entropy(pred, target),
    }
}

/// Gradient of `loss(name, pred, target)` with respect to `pred`.
pub fn loss_gradient(name: LossName, pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    check(pred, target)?;
    let n = pred.len() as f64;
    let grad: Vec<f64> = match name {
        LossName::Mse => pred
            .data()
            .iter()
            .zip(target.data())
            .map(|(x, y)| 2.0 * (x - y) / n)
            .collect(),
        LossName::Mae => pred
            .data()
            .iter()
            .zip(target.data())
            .map(|(x, y)| {
                let d = x - y;
                if d > 0.0 {
                    1.0 / n
                } else if d < 0.0 {
                    -1.0 / n
                } else {
                    0.0
                }
            })
            .collect(),
        LossName::UpperBound => pred
            .data()
            .iter()
            .zip(target.data())
            .map(|(x, y)| {
                let a = 1.0 - x;
                if a > *y && a > 0.0 {
                    -1.0 / n
                } else {
                    0.0
                }
            })
            .collect(),
        LossName::CategoricalCrossEntropy => {
            let b = rows(pred) as f64;
            pred.data()
                .iter()
                .zip(target.data())
                .map(|(p, t)| {
                    if *t == 0.0 || *p < PROB_FLOOR || *p > 1.0 {
                        0.0
                    } else {
                        -t / (p * b)
                    }
                })
                .collect()
        }
    };
    Tensor::new(pred.shape(), grad)
}

/// Gradient of softmax followed by cross-entropy with respect to the logits,
/// given the softmax output: `(probs - target) / rows`.
pub fn softmax_cce_logit_gradient(probs: &Tensor, target: &Tensor) -> Result<Tensor> {
    check(probs, target)?;
    let b = rows(probs) as f64;
    let grad = probs
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) / b)
        .collect();
    Tensor::new(probs.shape(), grad)
}

/// One-hot rows for integer labels.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    if labels.is_empty() {
        return Err(Error::Argument("one_hot: no labels".into()));
    }
    let mut data = vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::Argument(format!("label {l} out of range for {classes} classes")));
        }
        data[i * classes + l] = 1.0;
    }
    Tensor::new(&[labels.len(), classes], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_hand_value() {
        let a = Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap();
        let b = Tensor::vector(vec![1.0, 1.0, 1.0]).unwrap();
        assert!((mse(&a, &b).unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mae(&a, &a).unwrap(), 0.0);
        assert!(loss_gradient(LossName::Mse, &a, &a)
            .unwrap()
            .data()
            .iter()
            .all(|g| *g == 0.0));
    }

    #[test]
    fn cce_identities() {
        let t = one_hot(&[2, 0], 4).unwrap();
        assert_eq!(categorical_cross_entropy(&t, &t).unwrap(), 0.0);
        let u = Tensor::full(&[2, 4], 0.25).unwrap();
        assert!((categorical_cross_entropy(&u, &t).unwrap() - 4f64.ln()).abs() < 1e-12);
        let zero = Tensor::zeros(&[2, 4]).unwrap();
        assert!(categorical_cross_entropy(&zero, &t).unwrap().is_finite());
    }

    #[test]
    fn upper_bound_value() {
        let p = Tensor::vector(vec![0.2, 0.9]).unwrap();
        let t = Tensor::vector(vec![0.5, 0.0]).unwrap();
        // max(0.8, 0.5, 0) + max(0.1, 0, 0)
        assert!((upper_bound(&p, &t).unwrap() - 0.45).abs() < 1e-15);
    }

    #[test]
    fn names() {
        assert_eq!("cce".parse::<LossName>().unwrap(), LossName::CategoricalCrossEntropy);
        assert!("hinge".parse::<LossName>().is_err());
        for n in [LossName::Mse, LossName::Mae, LossName::UpperBound, LossName::CategoricalCrossEntropy] {
            assert_eq!(n.as_str().parse::<LossName>().unwrap(), n);
        }
    }
}
