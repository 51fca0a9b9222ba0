//! Mini-batch training loop with early stopping, split evaluation and the
//! per-epoch History.

use std::io::{Read, Write};

use rand::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::data::{LoadedDataset, PreprocessMode};
use crate::error::{Error, Result};
use crate::loss::{loss, loss_gradient, one_hot, softmax_cce_logit_gradient, LossName};
use crate::metrics::{accuracy, macro_average, per_class_metrics, ConfusionMatrix, MetricsReport, DEFAULT_Z};
use crate::nn::{Mode, Network, OutputGrad, Rng};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::tensor::Tensor;

/// Rows per forward pass when scoring a whole split.
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub loss: LossName,
    pub preprocess: PreprocessMode,
    /// Epochs without a new best validation loss before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
    pub resolution: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 16,
            optimizer: OptimizerConfig::default(),
            loss: LossName::CategoricalCrossEntropy,
            preprocess: PreprocessMode::Rescale,
            patience: 5,
            seed: 42,
            resolution: 224,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.resolution == 0 {
            return Err(Error::Config("resolution must be positive".into()));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub train_prec: f64,
    pub train_rec: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub val_prec: f64,
    pub val_rec: f64,
}

pub const HISTORY_HEADER: [&str; 9] = [
    "epoch",
    "train_loss",
    "train_acc",
    "train_prec",
    "train_rec",
    "val_loss",
    "val_acc",
    "val_prec",
    "val_rec",
];

impl EpochRecord {
    fn fields(&self) -> [f64; 8] {
        [
            self.train_loss,
            self.train_acc,
            self.train_prec,
            self.train_rec,
            self.val_loss,
            self.val_acc,
            self.val_prec,
            self.val_rec,
        ]
    }

    /// Value for one of the History column names other than `epoch`.
    pub fn get(&self, column: &str) -> Option<f64> {
        HISTORY_HEADER[1..]
            .iter()
            .position(|c| *c == column)
            .map(|i| self.fields()[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
    pub stopped_early: bool,
    pub epochs_run: usize,
    /// Epoch whose weights the network holds after training.
    pub best_epoch: usize,
    pub config: Option<TrainConfig>,
}

impl History {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| Error::Argument(format!("history csv: {e}"));
        w.write_record(HISTORY_HEADER).map_err(to_err)?;
        for r in &self.records {
            let mut row = vec![r.epoch.to_string()];
            row.extend(r.fields().iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::Argument(format!("history csv: {e}")))?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Parses the CSV form. Only the records are stored in CSV, so the
    /// returned History has no config and `best_epoch` is the epoch with the
    /// lowest validation loss.
    pub fn read_csv<R: Read>(input: R) -> Result<History> {
        let mut rdr = csv::Reader::from_reader(input);
        let bad = |msg: String| Error::Argument(format!("history csv: {msg}"));
        let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.iter().ne(HISTORY_HEADER.iter().copied()) {
            return Err(bad(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
        }
        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| bad(e.to_string()))?;
            let num = |j: usize| -> Result<f64> {
                row[j]
                    .parse::<f64>()
                    .map_err(|_| bad(format!("row {}: `{}` is not a number", i + 1, &row[j])))
            };
            let epoch = row[0]
                .parse::<usize>()
                .map_err(|_| bad(format!("row {}: bad epoch `{}`", i + 1, &row[0])))?;
            records.push(EpochRecord {
                epoch,
                train_loss: num(1)?,
                train_acc: num(2)?,
                train_prec: num(3)?,
                train_rec: num(4)?,
                val_loss: num(5)?,
                val_acc: num(6)?,
                val_prec: num(7)?,
                val_rec: num(8)?,
            });
        }
        let best_epoch = records
            .iter()
            .fold(None::<&EpochRecord>, |best, r| match best {
                Some(b) if b.val_loss <= r.val_loss => Some(b),
                _ => Some(r),
            })
            .map_or(0, |r| r.epoch);
        Ok(History {
            epochs_run: records.len(),
            records,
            stopped_early: false,
            best_epoch,
            config: None,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("history serializes")
    }
}

/// Hook called after each epoch's record is computed and before the
/// early-stopping decision; it may rewrite the record.
pub trait TrainMonitor {
    fn on_epoch_end(&mut self, epoch: usize, network: &Network, record: &mut EpochRecord);
}

pub struct NoMonitor;

impl TrainMonitor for NoMonitor {
    fn on_epoch_end(&mut self, _: usize, _: &Network, _: &mut EpochRecord) {}
}

/// Generator seed for one epoch; drives both the shuffle and dropout.
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Predictions and loss of a network on one split.
#[derive(Debug, Clone)]
pub struct Scored {
    pub confusion: ConfusionMatrix,
    pub predictions: Vec<usize>,
    pub probabilities: Vec<Vec<f64>>,
    pub loss: f64,
}

pub fn score(network: &Network, data: &LoadedDataset, loss_name: LossName) -> Result<Scored> {
    if data.is_empty() {
        return Err(Error::Argument("cannot evaluate an empty split".into()));
    }
    check_classes(network, data)?;
    let k = network.class_count();
    let mut confusion = ConfusionMatrix::new(data.classes.clone());
    let mut predictions = Vec::with_capacity(data.len());
    let mut probabilities = Vec::with_capacity(data.len());
    let mut weighted_loss = 0.0;
    for (x, labels) in data.batches(EVAL_CHUNK, None)? {
        let probs = network.predict(&x)?;
        weighted_loss += loss(loss_name, &probs, &one_hot(&labels, k)?)? * labels.len() as f64;
        for (row, &label) in probs.data().chunks(k).zip(&labels) {
            let p = argmax(row);
            confusion.record(label, p)?;
            predictions.push(p);
            probabilities.push(row.to_vec());
        }
    }
    Ok(Scored {
        confusion,
        predictions,
        probabilities,
        loss: weighted_loss / data.len() as f64,
    })
}

/// Metrics report and mean loss on one split.
pub fn evaluate(network: &Network, data: &LoadedDataset, loss_name: LossName) -> Result<(MetricsReport, f64)> {
    let s = score(network, data, loss_name)?;
    Ok((MetricsReport::from_confusion(&s.confusion, DEFAULT_Z), s.loss))
}

fn check_classes(network: &Network, data: &LoadedDataset) -> Result<()> {
    if network.class_count() != data.classes.len() {
        return Err(Error::Config(format!(
            "model has {} output classes but the dataset has {}",
            network.class_count(),
            data.classes.len()
        )));
    }
    if data.sample_shape() != network.input_shape() {
        return Err(Error::Config(format!(
            "model expects inputs {:?}, dataset provides {:?}",
            network.input_shape(),
            data.sample_shape()
        )));
    }
    Ok(())
}

fn summarize(cm: &ConfusionMatrix) -> (f64, f64, f64) {
    let (p, r, _) = macro_average(&per_class_metrics(cm));
    (accuracy(cm), p, r)
}

/// One optimization pass over the shuffled training set. Returns the mean
/// loss and the confusion matrix of the batch predictions.
fn run_epoch(
    network: &mut Network,
    optimizer: &mut Optimizer,
    data: &LoadedDataset,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<(f64, ConfusionMatrix)> {
    let k = network.class_count();
    let mut rng = Rng::seed_from_u64(epoch_seed(cfg.seed, epoch));
    let shuffle = rng.next_u64();
    let mut confusion = ConfusionMatrix::new(data.classes.clone());
    let mut weighted_loss = 0.0;
    for (batch_no, (x, labels)) in data.batches(cfg.batch_size, Some(shuffle))?.enumerate() {
        let probs = network.forward(&x, Mode::Train(&mut rng))?;
        let target = one_hot(&labels, k)?;
        let value = loss(cfg.loss, &probs, &target)?;
        if !value.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: batch_no + 1,
            });
        }
        weighted_loss += value * labels.len() as f64;
        for (row, &label) in probs.data().chunks(k).zip(&labels) {
            confusion.record(label, argmax(row))?;
        }
        let grads = if cfg.loss == LossName::CategoricalCrossEntropy {
            let g = softmax_cce_logit_gradient(&probs, &target)?;
            network.backward(&g, OutputGrad::Logits)?
        } else {
            let g = loss_gradient(cfg.loss, &probs, &target)?;
            network.backward(&g, OutputGrad::Probabilities)?
        };
        optimizer.step(network.params_mut(), &grads.params)?;
    }
    network.clear_caches();
    Ok((weighted_loss / data.len() as f64, confusion))
}

pub fn train(network: &mut Network, train_data: &LoadedDataset, val_data: &LoadedDataset, cfg: &TrainConfig) -> Result<History> {
    train_with_monitor(network, train_data, val_data, cfg, &mut NoMonitor)
}

/// Trains for up to `cfg.epochs` epochs and leaves the network holding the
/// weights of the epoch with the lowest validation loss.
pub fn train_with_monitor(
    network: &mut Network,
    train_data: &LoadedDataset,
    val_data: &LoadedDataset,
    cfg: &TrainConfig,
    monitor: &mut dyn TrainMonitor,
) -> Result<History> {
    cfg.validate()?;
    if train_data.is_empty() {
        return Err(Error::Argument("training split is empty".into()));
    }
    check_classes(network, train_data)?;
    if val_data.classes != train_data.classes {
        return Err(Error::Config("training and validation classes differ".into()));
    }
    let mut optimizer = Optimizer::new(cfg.optimizer)?;
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<Tensor>)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        let (train_loss, train_cm) = run_epoch(network, &mut optimizer, train_data, cfg, epoch)?;
        let val = score(network, val_data, cfg.loss)?;
        let (train_acc, train_prec, train_rec) = summarize(&train_cm);
        let (val_acc, val_prec, val_rec) = summarize(&val.confusion);
        let mut record = EpochRecord {
            epoch,
            train_loss,
            train_acc,
            train_prec,
            train_rec,
            val_loss: val.loss,
            val_acc,
            val_prec,
            val_rec,
        };
        monitor.on_epoch_end(epoch, network, &mut record);
        records.push(record);

        let improved = best.as_ref().is_none_or(|(b, _, _)| record.val_loss < *b);
        if improved {
            best = Some((record.val_loss, epoch, network.snapshot()));
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let best_epoch = match best {
        Some((_, epoch, weights)) => {
            network.restore(&weights)?;
            epoch
        }
        None => records.len(),
    };
    Ok(History {
        epochs_run: records.len(),
        records,
        stopped_early,
        best_epoch,
        config: Some(*cfg),
    })
}
