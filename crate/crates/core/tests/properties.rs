use proptest::prelude::*;
use rand::SeedableRng;

use gradkit::data::{decode_image, encode_image, resize_bilinear, BatchIterator};
use gradkit::metrics::{accuracy, confidence_interval, confusion_matrix, per_class_metrics, ConfusionMatrix};
use gradkit::model::{instantiate, parse_model_spec};
use gradkit::nn::{softmax, Rng};
use gradkit::optim::{sgd_step, Optimizer, OptimizerConfig, OptimizerKind};
use gradkit::tensor::Tensor;

fn labels(k: usize, n: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (prop::collection::vec(0..k, n), prop::collection::vec(0..k, n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_are_distributions(rows in prop::collection::vec(prop::collection::vec(-700.0f64..700.0, 4), 1..6)) {
        let s = softmax(&Tensor::from_rows(&rows).unwrap());
        for row in s.data().chunks(4) {
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn confusion_matrix_matches_counting((truth, pred) in labels(4, 60)) {
        let cm = confusion_matrix(&truth, &pred, 4).unwrap();
        for t in 0..4 {
            for p in 0..4 {
                let n = truth.iter().zip(&pred).filter(|(a, b)| **a == t && **b == p).count() as u64;
                prop_assert_eq!(cm.get(t, p), n);
            }
        }
        prop_assert_eq!(cm.total(), 60);
    }

    #[test]
    fn accuracy_in_unit_interval_and_f1_between((truth, pred) in labels(3, 40)) {
        let cm = confusion_matrix(&truth, &pred, 3).unwrap();
        let a = accuracy(&cm);
        prop_assert!((0.0..=1.0).contains(&a));
        for s in per_class_metrics(&cm) {
            let lo = s.precision.min(s.recall);
            let hi = s.precision.max(s.recall);
            prop_assert!(s.f1 >= lo - 1e-12 && s.f1 <= hi + 1e-12);
        }
    }

    #[test]
    fn relabelling_classes_permutes_scores((truth, pred) in labels(3, 50), perm in Just([2usize, 0, 1])) {
        let cm = confusion_matrix(&truth, &pred, 3).unwrap();
        let relabel = |v: &[usize]| v.iter().map(|&c| perm[c]).collect::<Vec<_>>();
        let cm2 = confusion_matrix(&relabel(&truth), &relabel(&pred), 3).unwrap();
        prop_assert_eq!(accuracy(&cm), accuracy(&cm2));
        let (a, b) = (per_class_metrics(&cm), per_class_metrics(&cm2));
        for c in 0..3 {
            prop_assert_eq!(a[c].f1, b[perm[c]].f1);
            prop_assert_eq!(a[c].precision, b[perm[c]].precision);
        }
    }

    #[test]
    fn interval_peaks_at_half_and_shrinks_with_n(p in 0.0f64..=1.0, n in 1usize..5000) {
        let at = confidence_interval(p, n, 1.96).unwrap();
        prop_assert!(at <= confidence_interval(0.5, n, 1.96).unwrap() + 1e-15);
        prop_assert!(confidence_interval(p, n + 1, 1.96).unwrap() <= at);
    }

    #[test]
    fn sgd_is_linear_in_the_gradient(
        w in prop::collection::vec(-10.0f64..10.0, 1..20),
        lr in 1e-4f64..1.0,
        c in -4.0f64..4.0,
    ) {
        let g: Vec<f64> = w.iter().map(|v| v.sin()).collect();
        let mut a = Tensor::vector(w.clone()).unwrap();
        sgd_step(&mut a, &Tensor::vector(g.clone()).unwrap(), lr).unwrap();
        let mut b = Tensor::vector(w.clone()).unwrap();
        sgd_step(&mut b, &Tensor::vector(g.iter().map(|x| c * x).collect()).unwrap(), lr).unwrap();
        for i in 0..w.len() {
            prop_assert!(((w[i] - b.data()[i]) - c * (w[i] - a.data()[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_first_step_bounded_by_learning_rate(g in prop::collection::vec(-1e4f64..1e4, 1..10), lr in 1e-5f64..0.1) {
        let mut opt = Optimizer::new(OptimizerConfig::new(OptimizerKind::Adam).with_learning_rate(lr)).unwrap();
        let mut w = Tensor::zeros(&[g.len()]).unwrap();
        opt.step(vec![&mut w], &[Tensor::vector(g).unwrap()]).unwrap();
        prop_assert!(w.data().iter().all(|d| d.abs() <= lr * (1.0 + 1e-12)));
    }

    #[test]
    fn batches_cover_every_index_once(n in 1usize..200, bs in 1usize..40, seed in any::<Option<u64>>()) {
        let it = BatchIterator::new(n, bs, seed).unwrap();
        let mut seen = it.order().to_vec();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn resize_stays_in_source_range(
        pixels in prop::collection::vec(0.0f64..255.0, 25),
        target in 1usize..12,
    ) {
        let img = Tensor::new(&[1, 5, 5], pixels.clone()).unwrap();
        let out = resize_bilinear(&img, target).unwrap();
        let lo = pixels.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = pixels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(out.shape(), &[1, target, target]);
        prop_assert!(out.data().iter().all(|&v| v >= lo - 1e-9 && v <= hi + 1e-9));
    }

    #[test]
    fn model_spec_render_round_trips(
        filters in 1usize..8,
        k in prop::sample::select(vec![1usize, 3, 5]),
        pool in any::<bool>(),
        units in 1usize..10,
        classes in 2usize..6,
    ) {
        let mut text = format!("name probe\ninput 2 12\nconv {filters} {k} 1 {} relu\n", k / 2);
        if pool {
            text.push_str("maxpool 2 2\n");
        }
        text.push_str(&format!("flatten\ndense {units} tanh\ndropout 0.25\nsoftmax {classes}\n"));
        let cfg = parse_model_spec(&text).unwrap();
        let again = parse_model_spec(&cfg.render()).unwrap();
        prop_assert_eq!(&again, &cfg);
        let net = instantiate(&cfg, 3).unwrap();
        prop_assert_eq!(net.param_count(), cfg.param_count().unwrap());
        let out = net.predict(&Tensor::zeros(&[2, 2, 12, 12]).unwrap()).unwrap();
        prop_assert_eq!(out.shape(), &[2, classes]);
        prop_assert!(out.all_finite());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn png_encode_decode_is_identity(seed in any::<u64>(), c in prop::sample::select(vec![1usize, 3]), h in 1usize..9, w in 1usize..9) {
        use rand::Rng as _;
        let mut rng = Rng::seed_from_u64(seed);
        let px: Vec<f64> = (0..c * h * w).map(|_| rng.gen_range(0..=255u8) as f64).collect();
        let img = Tensor::new(&[c, h, w], px).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for ext in ["png", if c == 1 { "pgm" } else { "ppm" }] {
            let path = dir.path().join(format!("x.{ext}"));
            encode_image(&img, &path).unwrap();
            prop_assert_eq!(decode_image(&path).unwrap(), img.clone());
        }
    }
}

#[test]
fn empty_confusion_matrix_scores_zero() {
    let cm = ConfusionMatrix::unnamed(3);
    assert_eq!(accuracy(&cm), 0.0);
    assert!(per_class_metrics(&cm).iter().all(|s| s.f1 == 0.0));
}
