//! End-to-end acceptance checks. Runs without the libtest harness so that the
//! per-criterion verdicts are always printed.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng as _, SeedableRng};
use sha2::{Digest, Sha256};

use gradkit::checkpoint::{to_bytes, CheckpointMeta};
use gradkit::data::{load_splits, preprocess, synth_dataset, LoadedDataset, PreprocessMode, SynthSpec};
use gradkit::loss::{categorical_cross_entropy, one_hot};
use gradkit::metrics::{accuracy, confidence_interval, confusion_matrix, per_class_metrics};
use gradkit::model::{instantiate, parse_model_spec, preset, PRESET_NAMES};
use gradkit::nn::{softmax, Network, Rng};
use gradkit::optim::{adam_step, rmsprop_step, sgd_step, Optimizer, OptimizerConfig, OptimizerKind};
use gradkit::report::{history_rows, read_report, write_report};
use gradkit::tensor::{conv2d_valid, Tensor};
use gradkit::train::{evaluate, train, train_with_monitor, EpochRecord, History, TrainConfig, TrainMonitor};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- 1

fn worked_convolution() -> Verdict {
    let image = [
        [0, 1, 1, 1, 0, 0, 0],
        [0, 0, 1, 1, 1, 0, 0],
        [0, 0, 0, 1, 1, 1, 0],
        [0, 0, 0, 1, 1, 0, 0],
        [0, 0, 1, 1, 0, 0, 0],
        [0, 1, 1, 0, 0, 0, 0],
        [1, 1, 0, 0, 0, 0, 0],
    ];
    let kernel = [[1, 0, 1], [0, 1, 0], [1, 0, 1]];
    let expected = [
        [1, 4, 3, 4, 1],
        [1, 2, 4, 3, 3],
        [1, 2, 3, 4, 1],
        [1, 3, 3, 1, 1],
        [3, 3, 1, 1, 0],
    ];
    let input = Tensor::new(&[1, 7, 7], image.iter().flatten().map(|&v| v as f64).collect()).unwrap();
    let k = Tensor::new(&[1, 1, 3, 3], kernel.iter().flatten().map(|&v| v as f64).collect()).unwrap();
    let mut best = Duration::MAX;
    let mut out = None;
    for _ in 0..20 {
        let t = Instant::now();
        let o = conv2d_valid(&input, &k, 1).unwrap();
        best = best.min(t.elapsed());
        out = Some(o);
    }
    let out = out.unwrap();
    let want: Vec<f64> = expected.iter().flatten().map(|&v| v as f64).collect();
    let exact = out.shape() == [1, 5, 5] && out.data() == want.as_slice();
    verdict(
        exact && best < Duration::from_millis(1),
        format!("5x5 map exact: {exact}, {:.1} us", best.as_secs_f64() * 1e6),
    )
}

// ---------------------------------------------------------------- 2

fn gradient_soundness() -> Verdict {
    let t = Instant::now();
    let suite = common::gradient_suite();
    let elapsed = t.elapsed();
    let worst = suite.iter().map(|(_, c)| c.max_rel).fold(0.0, f64::max);
    let failing: Vec<&str> = suite.iter().filter(|(_, c)| !c.ok()).map(|(n, _)| *n).collect();
    verdict(
        failing.is_empty() && elapsed < Duration::from_secs(60),
        format!(
            "{} cases, worst rel err {worst:.2e}, failing {failing:?}, {:.2} s",
            suite.len(),
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 3

fn softmax_and_loss_identities() -> Verdict {
    let mut rng = Rng::seed_from_u64(3);
    let mut worst_sum: f64 = 0.0;
    let mut worst_shift: f64 = 0.0;
    for i in 0..1000 {
        let k = 2 + i % 9;
        let scale = [1.0, 10.0, 300.0][i % 3];
        let row: Vec<f64> = (0..k).map(|_| rng.gen_range(-scale..scale)).collect();
        let shift = rng.gen_range(-500.0..500.0);
        let shifted: Vec<f64> = row.iter().map(|v| v + shift).collect();
        let t = Tensor::from_rows(&[row, shifted]).unwrap();
        let s = softmax(&t);
        let (a, b) = s.data().split_at(k);
        worst_sum = worst_sum.max((a.iter().sum::<f64>() - 1.0).abs());
        worst_sum = worst_sum.max((b.iter().sum::<f64>() - 1.0).abs());
        worst_shift = worst_shift.max(a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
    }
    let mut cce_exact = true;
    let mut worst_uniform: f64 = 0.0;
    for k in 2..=10 {
        let labels: Vec<usize> = (0..k).collect();
        let target = one_hot(&labels, k).unwrap();
        cce_exact &= categorical_cross_entropy(&target, &target).unwrap() == 0.0;
        let uniform = Tensor::full(&[k, k], 1.0 / k as f64).unwrap();
        let v = categorical_cross_entropy(&uniform, &target).unwrap();
        worst_uniform = worst_uniform.max((v - (k as f64).ln()).abs());
    }
    verdict(
        worst_sum <= 1e-9 && worst_shift <= 1e-9 && cce_exact && worst_uniform <= 1e-12,
        format!(
            "max |sum-1| {worst_sum:.1e}, shift invariance {worst_shift:.1e}, one-hot cce 0: {cce_exact}, \
             max |cce-lnK| {worst_uniform:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- 4

fn reference_rmsprop(w0: f64, a: f64, c: f64, lr: f64, rho: f64, eps: f64, steps: usize) -> Vec<f64> {
    let (mut w, mut s) = (w0, 0.0);
    let mut out = Vec::new();
    for _ in 0..steps {
        let g = a * (w - c);
        s = rho * s + (1.0 - rho) * g * g;
        w -= lr * g / (s.sqrt() + eps);
        out.push(w);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn reference_adam(w0: f64, a: f64, c: f64, lr: f64, b1: f64, b2: f64, eps: f64, steps: usize) -> Vec<f64> {
    let (mut w, mut m, mut v) = (w0, 0.0, 0.0);
    let mut out = Vec::new();
    for t in 1..=steps {
        let g = a * (w - c);
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powi(t as i32));
        let v_hat = v / (1.0 - b2.powi(t as i32));
        w -= lr * m_hat / (v_hat.sqrt() + eps);
        out.push(w);
    }
    out
}

fn optimizer_oracles() -> Verdict {
    let mut rng = Rng::seed_from_u64(4);
    // SGD on random tensors against a scalar loop
    let mut sgd_exact = true;
    for _ in 0..20 {
        let n = rng.gen_range(1..50);
        let w0: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let lr = rng.gen_range(1e-4..1.0);
        let mut w = Tensor::vector(w0.clone()).unwrap();
        sgd_step(&mut w, &Tensor::vector(g.clone()).unwrap(), lr).unwrap();
        let mut expect = w0.clone();
        for i in 0..n {
            expect[i] -= lr * g[i];
        }
        sgd_exact &= w.data() == expect.as_slice();
    }

    // 20 steps on f(w) = a/2 (w - c)^2
    let (w0, a, c) = (2.5, 1.7, -0.4);
    let run = |kind: OptimizerKind, lr: f64| -> Vec<f64> {
        let cfg = OptimizerConfig::new(kind).with_learning_rate(lr);
        let mut opt = Optimizer::new(cfg).unwrap();
        let mut w = Tensor::vector(vec![w0]).unwrap();
        let mut out = Vec::new();
        for _ in 0..20 {
            let g = Tensor::vector(vec![a * (w.data()[0] - c)]).unwrap();
            opt.step(vec![&mut w], &[g]).unwrap();
            out.push(w.data()[0]);
        }
        out
    };
    let rms_ok = run(OptimizerKind::Rmsprop, 0.01) == reference_rmsprop(w0, a, c, 0.01, 0.9, 1e-7, 20);
    let adam_ok = run(OptimizerKind::Adam, 0.01) == reference_adam(w0, a, c, 0.01, 0.9, 0.999, 1e-7, 20);

    // also through the free functions
    let cfg = OptimizerConfig::new(OptimizerKind::Adam).with_learning_rate(0.01);
    let mut w = Tensor::vector(vec![w0]).unwrap();
    let mut m = Tensor::zeros(&[1]).unwrap();
    let mut v = Tensor::zeros(&[1]).unwrap();
    let mut free = Vec::new();
    for t in 1..=20 {
        let g = Tensor::vector(vec![a * (w.data()[0] - c)]).unwrap();
        adam_step(&mut w, &g, &mut m, &mut v, t, &cfg).unwrap();
        free.push(w.data()[0]);
    }
    let adam_free_ok = free == reference_adam(w0, a, c, 0.01, 0.9, 0.999, 1e-7, 20);
    let rcfg = OptimizerConfig::new(OptimizerKind::Rmsprop).with_learning_rate(0.01);
    let mut w = Tensor::vector(vec![w0]).unwrap();
    let mut s = Tensor::zeros(&[1]).unwrap();
    let mut free = Vec::new();
    for _ in 0..20 {
        let g = Tensor::vector(vec![a * (w.data()[0] - c)]).unwrap();
        rmsprop_step(&mut w, &g, &mut s, &rcfg).unwrap();
        free.push(w.data()[0]);
    }
    let rms_free_ok = free == reference_rmsprop(w0, a, c, 0.01, 0.9, 1e-7, 20);

    // first Adam step is about the learning rate at any gradient scale
    let lr = 0.001;
    let mut worst: f64 = 0.0;
    for exp in -3..=3 {
        for sign in [1.0, -1.0] {
            let g = sign * 10f64.powi(exp);
            let mut opt = Optimizer::new(OptimizerConfig::new(OptimizerKind::Adam).with_learning_rate(lr)).unwrap();
            let mut w = Tensor::vector(vec![0.0]).unwrap();
            opt.step(vec![&mut w], &[Tensor::vector(vec![g]).unwrap()]).unwrap();
            worst = worst.max((w.data()[0].abs() - lr).abs() / lr);
        }
    }
    verdict(
        sgd_exact && rms_ok && adam_ok && adam_free_ok && rms_free_ok && worst < 0.01,
        format!(
            "sgd exact {sgd_exact}, rmsprop bitwise {}, adam bitwise {}, adam first-step dev {:.2e}",
            rms_ok && rms_free_ok,
            adam_ok && adam_free_ok,
            worst
        ),
    )
}

// ---------------------------------------------------------------- 5

fn metrics_oracle() -> Verdict {
    let mut rng = Rng::seed_from_u64(5);
    let k = 3;
    let truth: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..k)).collect();
    let pred: Vec<usize> = truth
        .iter()
        .map(|&t| if rng.gen_bool(0.6) { t } else { rng.gen_range(0..k) })
        .collect();
    let cm = confusion_matrix(&truth, &pred, k).unwrap();
    let scores = per_class_metrics(&cm);
    let mut worst: f64 = 0.0;
    for c in 0..k {
        let (mut tp, mut fp, mut fneg) = (0.0f64, 0.0f64, 0.0f64);
        for (&t, &p) in truth.iter().zip(&pred) {
            match (t == c, p == c) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fneg += 1.0,
                _ => {}
            }
        }
        let p = tp / (tp + fp);
        let r = tp / (tp + fneg);
        let f1 = 2.0 * p * r / (p + r);
        let support = tp + fneg;
        let ci = 1.96 * (f1 * (1.0 - f1) / support).sqrt();
        worst = worst
            .max((scores[c].precision - p).abs())
            .max((scores[c].recall - r).abs())
            .max((scores[c].f1 - f1).abs())
            .max((confidence_interval(scores[c].f1, support as usize, 1.96).unwrap() - ci).abs());
    }
    let correct = truth.iter().zip(&pred).filter(|(t, p)| t == p).count() as f64;
    let acc = correct / 1000.0;
    worst = worst.max((accuracy(&cm) - acc).abs());
    let acc_ci = 1.96 * (acc * (1.0 - acc) / 1000.0).sqrt();
    worst = worst.max((confidence_interval(accuracy(&cm), 1000, 1.96).unwrap() - acc_ci).abs());
    let spot = (confidence_interval(0.5, 100, 1.96).unwrap() - 0.098).abs();
    verdict(
        worst <= 1e-12 && spot <= 1e-12,
        format!("max deviation {worst:.1e}, CI(0.5,100,1.96) off by {spot:.1e}"),
    )
}

// ---------------------------------------------------------------- 6 and 10

struct RunResult {
    name: String,
    val_acc: f64,
    history: History,
}

fn learning_rate(kind: OptimizerKind) -> f64 {
    match kind {
        OptimizerKind::Sgd => 0.02,
        OptimizerKind::Rmsprop => 3e-4,
        OptimizerKind::Adam => 3e-4,
    }
}

fn desk_scale_runs(root: &Path) -> (Vec<RunResult>, Duration) {
    let spec = SynthSpec {
        train_per_class: 200,
        val_per_class: 60,
        classes: 3,
        resolution: 64,
        seed: 42,
    };
    synth_dataset(root, &spec).unwrap();
    let (tr, va) = load_splits(root, 0.1, 42).unwrap();
    let train_data = LoadedDataset::load(&tr, 1, 64, PreprocessMode::Rescale).unwrap();
    let val_data = LoadedDataset::load(&va, 1, 64, PreprocessMode::Rescale).unwrap();
    let start = Instant::now();
    let mut results = Vec::new();
    for name in PRESET_NAMES {
        for kind in OptimizerKind::ALL {
            let cfg = preset(name, 1, 64, 3).unwrap();
            let mut net = instantiate(&cfg, 42).unwrap();
            let tc = TrainConfig {
                epochs: 20,
                batch_size: 16,
                optimizer: OptimizerConfig::new(kind).with_learning_rate(learning_rate(kind)),
                resolution: 64,
                seed: 42,
                ..TrainConfig::default()
            };
            let history = train(&mut net, &train_data, &val_data, &tc).unwrap();
            let (report, _) = evaluate(&net, &val_data, tc.loss).unwrap();
            println!(
                "    {name:<15} {:<8} epochs {:>2}  best {:>2}  val acc {:.4}",
                kind.as_str(), history.epochs_run, history.best_epoch, report.accuracy
            );
            results.push(RunResult {
                name: format!("{name}_{kind}"),
                val_acc: report.accuracy,
                history,
            });
        }
    }
    (results, start.elapsed())
}

fn desk_scale_verdict(runs: &[RunResult], elapsed: Duration) -> Verdict {
    let at90 = runs.iter().filter(|r| r.val_acc >= 0.90).count();
    let at95 = runs.iter().filter(|r| r.val_acc >= 0.95).count();
    verdict(
        runs.len() == 9 && at90 == 9 && at95 >= 7 && elapsed < Duration::from_secs(15 * 60),
        format!("{at90}/9 >= 90%, {at95}/9 >= 95%, {:.0} s", elapsed.as_secs_f64()),
    )
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

fn accuracy_trend(runs: &[RunResult]) -> Verdict {
    let mut rows = Vec::new();
    for r in runs {
        rows.extend(history_rows(&r.name, &r.history));
    }
    let mut csv = Vec::new();
    write_report(&rows, &mut csv).unwrap();
    let parsed = read_report(csv.as_slice()).unwrap();

    let mut rising = 0;
    let mut trending = 0;
    let mut lowest = f64::INFINITY;
    for r in runs {
        let mut points: Vec<(f64, f64)> = parsed
            .iter()
            .filter(|row| row.run == r.name && row.split == "train" && row.metric == "acc")
            .map(|row| (row.epoch as f64, row.value))
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (epochs, accs): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
        if accs.len() >= 2 && accs[accs.len() - 1] > accs[0] {
            rising += 1;
        }
        let rho = spearman(&epochs, &accs);
        lowest = lowest.min(rho);
        if rho > 0.5 {
            trending += 1;
        }
    }
    verdict(
        runs.len() == 9 && rising == 9 && trending == 9,
        format!("final > first in {rising}/9, spearman > 0.5 in {trending}/9 (lowest {lowest:.3})"),
    )
}

// ---------------------------------------------------------------- 7

struct Scripted {
    losses: Vec<f64>,
    hashes: Vec<Vec<u8>>,
    meta: CheckpointMeta,
}

fn checkpoint_hash(net: &Network, meta: &CheckpointMeta) -> Vec<u8> {
    Sha256::digest(to_bytes(net, meta).unwrap()).to_vec()
}

impl TrainMonitor for Scripted {
    fn on_epoch_end(&mut self, epoch: usize, network: &Network, record: &mut EpochRecord) {
        record.val_loss = self.losses[epoch - 1];
        self.hashes.push(checkpoint_hash(network, &self.meta));
    }
}

fn small_dataset(seed: u64, n: usize) -> LoadedDataset {
    let mut rng = Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let pixels: Vec<f64> = labels
        .iter()
        .flat_map(|&l| (0..16).map(|_| rng.gen_range(0.0..0.5) + 0.5 * l as f64).collect::<Vec<_>>())
        .collect();
    LoadedDataset::from_parts(vec!["a".into(), "b".into()], vec![1, 4, 4], pixels, labels).unwrap()
}

fn early_stopping() -> Verdict {
    let cfg = parse_model_spec("input 1 4\nconv 2 3 1 1 relu\nflatten\ndense 4 tanh\nsoftmax 2").unwrap();
    let mut net = instantiate(&cfg, 1).unwrap();
    let data = small_dataset(7, 12);
    let losses = vec![
        1.0, 0.9, 0.7, 0.8, 0.75, 0.71, 0.9, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.04, 0.03, 0.02, 0.01, 0.0,
    ];
    let best_epoch = 3;
    let patience = 5;
    let meta = CheckpointMeta {
        classes: vec!["a".into(), "b".into()],
        preprocess: PreprocessMode::Rescale,
    };
    let mut monitor = Scripted {
        losses,
        hashes: Vec::new(),
        meta: meta.clone(),
    };
    let tc = TrainConfig {
        epochs: 20,
        batch_size: 4,
        patience,
        resolution: 4,
        optimizer: OptimizerConfig::new(OptimizerKind::Sgd).with_learning_rate(0.1),
        ..TrainConfig::default()
    };
    let history = train_with_monitor(&mut net, &data, &data, &tc, &mut monitor).unwrap();
    let restored = checkpoint_hash(&net, &meta) == monitor.hashes[best_epoch - 1];
    let distinct = monitor.hashes[best_epoch - 1] != monitor.hashes[monitor.hashes.len() - 1];
    verdict(
        history.epochs_run == best_epoch + patience && history.stopped_early && history.best_epoch == best_epoch && restored && distinct,
        format!(
            "stopped after epoch {} (expected {}), best epoch {}, restored weights hash match {restored}",
            history.epochs_run,
            best_epoch + patience,
            history.best_epoch
        ),
    )
}

// ---------------------------------------------------------------- 8

fn determinism(root: &Path) -> Verdict {
    let data = root.join("data");
    synth_dataset(
        &data,
        &SynthSpec {
            train_per_class: 16,
            val_per_class: 6,
            classes: 3,
            resolution: 24,
            seed: 8,
        },
    )
    .unwrap();
    let bin = env!("CARGO_BIN_EXE_gradkit");
    let run = |tag: &str| -> (Vec<u8>, Vec<u8>) {
        let ckpt = root.join(format!("{tag}.gkpt"));
        let hist = root.join(format!("{tag}.csv"));
        let status = Command::new(bin)
            .args(["train", "--preset", "mini-inception", "--resolution", "24", "--epochs", "3"])
            .args(["--optimizer", "adam", "--batch-size", "8", "--seed", "11"])
            .arg("--data")
            .arg(&data)
            .arg("--out-checkpoint")
            .arg(&ckpt)
            .arg("--out-history")
            .arg(&hist)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        (std::fs::read(hist).unwrap(), std::fs::read(ckpt).unwrap())
    };
    let (h1, c1) = run("first");
    let (h2, c2) = run("second");
    verdict(
        h1 == h2 && c1 == c2 && !h1.is_empty(),
        format!("history identical {}, checkpoint identical {} ({} bytes)", h1 == h2, c1 == c2, c1.len()),
    )
}

// ---------------------------------------------------------------- 9

fn preprocessing_contract() -> Verdict {
    let mut rng = Rng::seed_from_u64(9);
    let mut full: Vec<f64> = (0..256).map(|v| v as f64).collect();
    full.extend((0..100).map(|_| rng.gen_range(0..=255) as f64));
    let img = Tensor::new(&[1, 1, full.len()], full).unwrap();
    let r = preprocess(&img, PreprocessMode::Rescale);
    let lo = r.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = r.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let rescale_ok = lo == 0.0 && hi == 1.0 && r.data().iter().all(|v| (0.0..=1.0).contains(v));

    let mut worst_mean: f64 = 0.0;
    let mut worst_std: f64 = 0.0;
    for i in 0..200 {
        let c = if i % 2 == 0 { 1 } else { 3 };
        let side = rng.gen_range(2..20);
        let n = c * side * side;
        let px: Vec<f64> = (0..n).map(|_| rng.gen_range(0..=255) as f64).collect();
        if px.iter().all(|&v| v == px[0]) {
            continue;
        }
        let out = preprocess(&Tensor::new(&[c, side, side], px).unwrap(), PreprocessMode::Samplewise);
        let m = out.data().iter().sum::<f64>() / n as f64;
        let sd = (out.data().iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        worst_mean = worst_mean.max(m.abs());
        worst_std = worst_std.max((sd - 1.0).abs());
    }
    verdict(
        rescale_ok && worst_mean < 1e-9 && worst_std < 1e-9,
        format!("rescale range [{lo}, {hi}], samplewise max |mean| {worst_mean:.1e}, max |std-1| {worst_std:.1e}"),
    )
}

// ----------------------------------------------------------------

fn guarded(f: impl FnOnce() -> Verdict) -> Verdict {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(v) => v,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            verdict(false, format!("panicked: {msg}"))
        }
    }
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let mut verdicts: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut report = |n: usize, title: &'static str, v: Verdict| {
        println!("criterion {n:>2} [{}] {title}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        verdicts.push((n, title, v));
    };

    report(1, "convolution oracle", guarded(worked_convolution));
    report(2, "gradient soundness", guarded(gradient_soundness));
    report(3, "softmax and loss identities", guarded(softmax_and_loss_identities));
    report(4, "optimizer oracles", guarded(optimizer_oracles));
    report(5, "metrics oracle", guarded(metrics_oracle));

    println!("    training 3 presets x 3 optimizers on the synthetic corpus...");
    let runs = catch_unwind(AssertUnwindSafe(|| desk_scale_runs(&tmp.path().join("corpus"))));
    match &runs {
        Ok((runs, elapsed)) => report(6, "desk-scale end-to-end", desk_scale_verdict(runs, *elapsed)),
        Err(_) => report(6, "desk-scale end-to-end", verdict(false, "training panicked")),
    }
    report(7, "early stopping", guarded(early_stopping));
    report(8, "determinism", guarded(|| determinism(&tmp.path().join("det"))));
    report(9, "preprocessing contract", guarded(preprocessing_contract));
    match &runs {
        Ok((runs, _)) => report(10, "accuracy trend", guarded(|| accuracy_trend(runs))),
        Err(_) => report(10, "accuracy trend", verdict(false, "no training runs")),
    }

    let failed: Vec<usize> = verdicts.iter().filter(|(_, _, v)| !v.pass).map(|(n, _, _)| *n).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        verdicts.len() - failed.len(),
        verdicts.len()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
