#![allow(dead_code)]

use gradkit::loss::{categorical_cross_entropy, one_hot, softmax_cce_logit_gradient};
use gradkit::nn::{Layer, Mode, Network, OutputGrad, Rng};
use gradkit::tensor::Tensor;
use rand::{Rng as _, SeedableRng};

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Gradients below this magnitude are compared absolutely; central
/// differences cannot resolve them better than roughly `eps * |L| / STEP`.
pub const FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], scale: f64, rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GradCheck {
    pub max_rel: f64,
    pub checked: usize,
}

impl GradCheck {
    fn add(&mut self, a: f64, n: f64) {
        self.max_rel = self.max_rel.max(rel_err(a, n));
        self.checked += 1;
    }

    pub fn merge(self, other: GradCheck) -> GradCheck {
        GradCheck {
            max_rel: self.max_rel.max(other.max_rel),
            checked: self.checked + other.checked,
        }
    }

    pub fn ok(&self) -> bool {
        self.checked > 0 && self.max_rel < REL_TOL
    }
}

/// Indices to probe: all of them when small, otherwise an evenly spread subset.
fn probe_indices(len: usize, limit: usize) -> Vec<usize> {
    if len <= limit {
        (0..len).collect()
    } else {
        (0..limit).map(|i| i * len / limit).collect()
    }
}

/// Replaces every parameter with uniform noise so biases are not all zero.
pub fn randomize_params(layer: &mut Layer, scale: f64, rng: &mut Rng) {
    for p in layer.params_mut() {
        for v in p.data_mut() {
            *v = rng.gen_range(-scale..scale);
        }
    }
}

/// Checks a single layer against central differences of `L = sum(w * y)`
/// for fixed random `w`. Training mode is used with a generator reseeded for
/// every evaluation, so dropout sees the same mask each time.
pub fn check_layer(layer: &mut Layer, x: &Tensor, mask_seed: u64, limit: usize) -> GradCheck {
    let (y, cache) = layer.forward(x, Some(&mut rng(mask_seed))).unwrap();
    let w = random_tensor(y.shape(), 1.0, &mut rng(mask_seed ^ 0xABCD));
    let dx = layer.backward(&cache, &w).unwrap();
    let grads: Vec<Tensor> = layer.grads().into_iter().cloned().collect();

    let objective = |layer: &Layer, x: &Tensor| -> f64 {
        let (y, _) = layer.forward(x, Some(&mut rng(mask_seed))).unwrap();
        y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
    };

    let mut report = GradCheck::default();
    let mut xp = x.clone();
    for i in probe_indices(x.len(), limit) {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + STEP;
        let up = objective(layer, &xp);
        xp.data_mut()[i] = orig - STEP;
        let down = objective(layer, &xp);
        xp.data_mut()[i] = orig;
        report.add(dx.data()[i], (up - down) / (2.0 * STEP));
    }
    for (pi, g) in grads.iter().enumerate() {
        for i in probe_indices(g.len(), limit) {
            let orig = layer.params()[pi].data()[i];
            layer.params_mut()[pi].data_mut()[i] = orig + STEP;
            let up = objective(layer, x);
            layer.params_mut()[pi].data_mut()[i] = orig - STEP;
            let down = objective(layer, x);
            layer.params_mut()[pi].data_mut()[i] = orig;
            report.add(g.data()[i], (up - down) / (2.0 * STEP));
        }
    }
    report
}

/// Checks a whole network under cross-entropy, once through the fused
/// logits path and once through the probability path.
pub fn check_network(net: &mut Network, x: &Tensor, labels: &[usize], limit: usize) -> GradCheck {
    let target = one_hot(labels, net.class_count()).unwrap();
    let mut report = GradCheck::default();
    for wrt in [OutputGrad::Logits, OutputGrad::Probabilities] {
        let probs = net.forward(x, Mode::Eval).unwrap();
        let grad = match wrt {
            OutputGrad::Logits => softmax_cce_logit_gradient(&probs, &target).unwrap(),
            OutputGrad::Probabilities => {
                gradkit::loss::loss_gradient(gradkit::loss::LossName::CategoricalCrossEntropy, &probs, &target)
                    .unwrap()
            }
        };
        let gs = net.backward(&grad, wrt).unwrap();
        let objective = |net: &Network| categorical_cross_entropy(&net.predict(x).unwrap(), &target).unwrap();
        for (pi, g) in gs.params.iter().enumerate() {
            for i in probe_indices(g.len(), limit) {
                let orig = net.params()[pi].data()[i];
                net.params_mut()[pi].data_mut()[i] = orig + STEP;
                let up = objective(net);
                net.params_mut()[pi].data_mut()[i] = orig - STEP;
                let down = objective(net);
                net.params_mut()[pi].data_mut()[i] = orig;
                report.add(g.data()[i], (up - down) / (2.0 * STEP));
            }
        }
        let mut xp = x.clone();
        let objective_x = |xp: &Tensor| categorical_cross_entropy(&net.predict(xp).unwrap(), &target).unwrap();
        for i in probe_indices(x.len(), limit) {
            let orig = xp.data()[i];
            xp.data_mut()[i] = orig + STEP;
            let up = objective_x(&xp);
            xp.data_mut()[i] = orig - STEP;
            let down = objective_x(&xp);
            xp.data_mut()[i] = orig;
            report.add(gs.deltas[0].data()[i], (up - down) / (2.0 * STEP));
        }
    }
    report
}

fn layer_case(mut layer: Layer, batch_shape: &[usize], seed: u64) -> GradCheck {
    let mut r = rng(seed);
    randomize_params(&mut layer, 0.5, &mut r);
    let x = random_tensor(batch_shape, 1.0, &mut r);
    check_layer(&mut layer, &x, seed, 60)
}

/// Every layer kind plus a small network mixing all composite blocks.
pub fn gradient_suite() -> Vec<(&'static str, GradCheck)> {
    use gradkit::nn::init::Init;
    use gradkit::nn::{
        Activation, Conv2d, Dense, DenseBlock, Dropout, GlobalAvgPool, Inception, InceptionWidths, Pool2d,
        Residual, SoftmaxOutput,
    };
    use gradkit::tensor::PoolMode;

    let mut r = rng(7);
    let mut cases = vec![
        (
            "dense tanh",
            layer_case(Layer::Dense(Dense::new(&[5], 4, Activation::Tanh, &mut r)), &[3, 5], 1),
        ),
        (
            "dense sigmoid on image input",
            layer_case(Layer::Dense(Dense::new(&[2, 3, 3], 4, Activation::Sigmoid, &mut r)), &[2, 2, 3, 3], 2),
        ),
        (
            "dense relu",
            layer_case(Layer::Dense(Dense::new(&[6], 5, Activation::Relu, &mut r)), &[4, 6], 3),
        ),
        (
            "conv valid",
            layer_case(
                Layer::Conv(Conv2d::new([2, 6, 6], 3, 3, 1, 0, Activation::Tanh, Init::GlorotUniform, &mut r).unwrap()),
                &[2, 2, 6, 6],
                4,
            ),
        ),
        (
            "conv padded stride 2",
            layer_case(
                Layer::Conv(Conv2d::new([2, 7, 7], 3, 3, 2, 1, Activation::Relu, Init::HeNormal, &mut r).unwrap()),
                &[2, 2, 7, 7],
                5,
            ),
        ),
        (
            "conv 5x5 padded",
            layer_case(
                Layer::Conv(Conv2d::new([1, 6, 6], 2, 5, 1, 2, Activation::Sigmoid, Init::GlorotUniform, &mut r).unwrap()),
                &[2, 1, 6, 6],
                6,
            ),
        ),
        (
            "maxpool",
            layer_case(Layer::Pool(Pool2d::new([2, 6, 6], PoolMode::Max, 2, 2, 0).unwrap()), &[2, 2, 6, 6], 7),
        ),
        (
            "maxpool overlapping padded",
            layer_case(Layer::Pool(Pool2d::new([2, 5, 5], PoolMode::Max, 3, 1, 1).unwrap()), &[2, 2, 5, 5], 8),
        ),
        (
            "avgpool",
            layer_case(Layer::Pool(Pool2d::new([2, 6, 6], PoolMode::Avg, 2, 2, 0).unwrap()), &[2, 2, 6, 6], 9),
        ),
        (
            "avgpool overlapping",
            layer_case(Layer::Pool(Pool2d::new([1, 5, 5], PoolMode::Avg, 3, 1, 0).unwrap()), &[3, 1, 5, 5], 10),
        ),
        (
            "dropout fixed mask",
            layer_case(Layer::Dropout(Dropout::new(&[10], 0.5).unwrap()), &[4, 10], 11),
        ),
        (
            "global average pool",
            layer_case(Layer::GlobalAvgPool(GlobalAvgPool::new([3, 4, 4])), &[2, 3, 4, 4], 12),
        ),
        (
            "softmax head",
            layer_case(Layer::Softmax(SoftmaxOutput::new(&[6], 3, &mut r)), &[3, 6], 13),
        ),
        (
            "residual block",
            layer_case(Layer::Residual(Residual::new([3, 5, 5], &mut r).unwrap()), &[2, 3, 5, 5], 14),
        ),
        (
            "inception module",
            layer_case(
                Layer::Inception(
                    Inception::new(
                        [4, 5, 5],
                        InceptionWidths {
                            b1: 2,
                            b3_reduce: 2,
                            b3: 3,
                            b5_reduce: 2,
                            b5: 2,
                            pool_proj: 2,
                        },
                        &mut r,
                    )
                    .unwrap(),
                ),
                &[2, 4, 5, 5],
                15,
            ),
        ),
        (
            "dense block",
            layer_case(Layer::DenseBlock(DenseBlock::new([3, 5, 5], 2, 2, &mut r).unwrap()), &[2, 3, 5, 5], 16),
        ),
    ];

    let spec = "\
input 1 8
conv 4 3 1 1 relu
maxpool 2 2
residual 4
inception 2 2 2 1 2 2
denseblock 1 2
conv 4 1 1 0 relu
avgpool 2 2
globalavgpool
dense 6 tanh
dropout 0.3
softmax 3
";
    let cfg = gradkit::parse_model_spec(spec).unwrap();
    let mut net = gradkit::instantiate(&cfg, 21).unwrap();
    let mut r = rng(22);
    for p in net.params_mut() {
        for v in p.data_mut() {
            *v += r.gen_range(-0.1..0.1);
        }
    }
    let x = random_tensor(&[3, 1, 8, 8], 1.0, &mut r);
    cases.push(("full mini network", check_network(&mut net, &x, &[0, 2, 1], 40)));
    cases
}
