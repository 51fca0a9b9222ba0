//! Tabular outputs: long-format training curves and sweep summaries.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::train::History;

pub const REPORT_HEADER: [&str; 5] = ["run", "epoch", "split", "metric", "value"];
pub const SPLITS: [&str; 2] = ["train", "val"];
pub const METRICS: [&str; 4] = ["loss", "acc", "prec", "rec"];

#[derive(Debug, Clone, PartialEq)]
pub struct LongRow {
    pub run: String,
    pub epoch: usize,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

/// One row per (epoch, split, metric) of a History.
pub fn history_rows(run: &str, history: &History) -> Vec<LongRow> {
    let mut rows = Vec::with_capacity(history.records.len() * 8);
    for r in &history.records {
        for split in SPLITS {
            for metric in METRICS {
                let column = format!("{split}_{metric}");
                rows.push(LongRow {
                    run: run.to_string(),
                    epoch: r.epoch,
                    split: split.to_string(),
                    metric: metric.to_string(),
                    value: r.get(&column).expect("known column"),
                });
            }
        }
    }
    rows
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Argument(format!("csv: {e}"))
}

pub fn write_report<W: Write>(rows: &[LongRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.run.clone(),
            r.epoch.to_string(),
            r.split.clone(),
            r.metric.clone(),
            r.value.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

pub fn read_report<R: Read>(input: R) -> Result<Vec<LongRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(REPORT_HEADER.iter().copied()) {
        return Err(csv_err("unexpected report header"));
    }
    rdr.records()
        .map(|row| {
            let row = row.map_err(csv_err)?;
            Ok(LongRow {
                run: row[0].to_string(),
                epoch: row[1].parse().map_err(csv_err)?,
                split: row[2].to_string(),
                metric: row[3].to_string(),
                value: row[4].parse().map_err(csv_err)?,
            })
        })
        .collect()
}

pub const SWEEP_HEADER: [&str; 9] = [
    "model",
    "optimizer",
    "class",
    "precision",
    "recall",
    "f1",
    "ci_lo",
    "ci_hi",
    "seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub model: String,
    pub optimizer: String,
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub seed: u64,
}

/// Per-class rows of one run; the interval is the F1 interval.
pub fn sweep_rows(model: &str, optimizer: &str, seed: u64, report: &MetricsReport) -> Vec<SweepRow> {
    report
        .classes
        .iter()
        .map(|c| SweepRow {
            model: model.to_string(),
            optimizer: optimizer.to_string(),
            class: c.name.clone(),
            precision: c.precision,
            recall: c.recall,
            f1: c.f1,
            ci_lo: c.ci[0],
            ci_hi: c.ci[1],
            seed,
        })
        .collect()
}

pub fn write_sweep<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.optimizer.clone(),
            r.class.clone(),
            r.precision.to_string(),
            r.recall.to_string(),
            r.f1.to_string(),
            r.ci_lo.to_string(),
            r.ci_hi.to_string(),
            r.seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

pub fn read_sweep<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(SWEEP_HEADER.iter().copied()) {
        return Err(csv_err("unexpected sweep header"));
    }
    rdr.records()
        .map(|row| {
            let row = row.map_err(csv_err)?;
            let num = |i: usize| row[i].parse::<f64>().map_err(csv_err);
            Ok(SweepRow {
                model: row[0].to_string(),
                optimizer: row[1].to_string(),
                class: row[2].to_string(),
                precision: num(3)?,
                recall: num(4)?,
                f1: num(5)?,
                ci_lo: num(6)?,
                ci_hi: num(7)?,
                seed: row[8].parse().map_err(csv_err)?,
            })
        })
        .collect()
}
