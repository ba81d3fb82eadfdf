use mosquitonet_core::data::{augment, split_kfold, AugmentPolicy};
use mosquitonet_core::imageops::resize_bilinear;
use mosquitonet_core::nn::{dropout, softmax, BatchNorm2d, Conv2d, MaxPool2d, Mode};
use mosquitonet_core::tensor::{Init, ReduceOp};
use mosquitonet_core::{ClassLabel, RngSeed, Tensor};
use proptest::prelude::*;

fn tensor(shape: Vec<usize>) -> impl Strategy<Value = Tensor> {
    let n: usize = shape.iter().product();
    prop::collection::vec(-10.0f32..10.0, n).prop_map(move |d| Tensor::new(&shape, d).unwrap())
}

fn square() -> impl Strategy<Value = Tensor> {
    (1usize..8).prop_flat_map(|n| tensor(vec![n, n]))
}

fn shaped() -> impl Strategy<Value = Tensor> {
    prop::collection::vec(1usize..5, 1..4).prop_flat_map(tensor)
}

proptest! {
    #[test]
    fn identity_is_neutral_for_matmul(a in square()) {
        let i = Tensor::identity(a.shape()[0]);
        prop_assert_eq!(&i.matmul(&a).unwrap(), &a);
        prop_assert_eq!(&a.matmul(&i).unwrap(), &a);
    }

    #[test]
    fn axis_then_rest_sum_equals_global(t in shaped(), axis in 0usize..3) {
        let axis = axis % t.rank();
        let partial = t.reduce(ReduceOp::Sum, Some(axis)).unwrap();
        let total = partial.reduce(ReduceOp::Sum, None).unwrap().data()[0] as f64;
        let global = t.reduce(ReduceOp::Sum, None).unwrap().data()[0] as f64;
        let scale = t.data().iter().map(|v| v.abs() as f64).sum::<f64>().max(1.0);
        prop_assert!((total - global).abs() <= 1e-4 * scale);
    }

    #[test]
    fn argmax_ignores_constant_shift(t in shaped(), c in -100.0f32..100.0) {
        let shifted = t.elementwise(
            mosquitonet_core::tensor::ElementwiseOp::Add,
            mosquitonet_core::tensor::Operand::Scalar(c),
        ).unwrap();
        // Shifting can merge near-equal values in f32, so compare against the
        // shifted tensor's own first maximum.
        let m = shifted.argmax().unwrap();
        let best = shifted.data().iter().copied().fold(f32::MIN, f32::max);
        prop_assert_eq!(shifted.data()[m], best);
        prop_assert!(shifted.data()[..m].iter().all(|&v| v < best));
        let exact = t.elementwise(
            mosquitonet_core::tensor::ElementwiseOp::Add,
            mosquitonet_core::tensor::Operand::Scalar(0.0),
        ).unwrap();
        prop_assert_eq!(exact.argmax().unwrap(), t.argmax().unwrap());
    }

    #[test]
    fn argmax_shift_by_representable_constant(t in shaped(), k in -8i32..8) {
        // Integer-valued data shifted by an integer stays exact.
        let ints = Tensor::new(t.shape(), t.data().iter().map(|v| v.round()).collect()).unwrap();
        let shifted = Tensor::new(ints.shape(), ints.data().iter().map(|v| v + k as f32).collect()).unwrap();
        prop_assert_eq!(shifted.argmax().unwrap(), ints.argmax().unwrap());
    }

    #[test]
    fn conv_preserves_size(h in 1usize..20, w in 1usize..20, seed in 0u64..1000) {
        let conv = Conv2d::new(2, 3, 5, 1, 2, RngSeed(seed)).unwrap();
        let (y, _) = conv.forward(&Tensor::zeros(&[1, 2, h, w])).unwrap();
        prop_assert_eq!(y.shape(), &[1, 3, h, w]);
    }

    #[test]
    fn block_halves_even_sizes(h in 1usize..10, w in 1usize..10, seed in 0u64..100) {
        let (h, w) = (2 * h, 2 * w);
        let x = Tensor::random_init(&[2, 2, h, w], Init::Uniform { low: -1.0, high: 1.0 }, RngSeed(seed)).unwrap();
        let conv = Conv2d::new(2, 3, 5, 1, 2, RngSeed(seed)).unwrap();
        let mut bn = BatchNorm2d::new(3);
        let (y, _) = conv.forward(&x).unwrap();
        let (y, _) = bn.forward(&y, Mode::Train).unwrap();
        let (y, _) = mosquitonet_core::nn::relu(&y);
        let (y, _) = MaxPool2d::default().forward(&y).unwrap();
        prop_assert_eq!(y.shape(), &[2, 3, h / 2, w / 2]);
    }

    #[test]
    fn softmax_rows_are_distributions(t in (1usize..6).prop_flat_map(|n| tensor(vec![n, 2]))) {
        let p = softmax(&t.scale(5.0)).unwrap();
        for row in p.data().chunks(2) {
            prop_assert!(row.iter().all(|&v| v > 0.0 || v == 0.0 && row.iter().any(|&o| o > 0.999)));
            prop_assert!(((row[0] + row[1]) as f64 - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn eval_layers_are_pure(t in tensor(vec![2, 3, 4, 4]), seed in 0u64..100) {
        let (a, _) = dropout(&t, 0.5, Mode::Eval, &mut RngSeed(seed).rng()).unwrap();
        let (b, _) = dropout(&t, 0.5, Mode::Eval, &mut RngSeed(seed + 1).rng()).unwrap();
        prop_assert_eq!(&a, &t);
        prop_assert_eq!(&a, &b);
        let mut bn = BatchNorm2d::new(3);
        bn.running.mean = vec![0.5, -0.5, 1.0];
        bn.running.var = vec![2.0, 0.5, 1.0];
        bn.init_running_stats();
        let before = bn.clone();
        let (x, _) = bn.forward(&t, Mode::Eval).unwrap();
        let (y, _) = bn.forward(&t, Mode::Eval).unwrap();
        prop_assert_eq!(x, y);
        prop_assert_eq!(bn, before);
    }

    #[test]
    fn resize_is_idempotent_at_target_size(t in tensor(vec![3, 6, 6])) {
        let img = Tensor::new(t.shape(), t.data().iter().map(|v| (v + 10.0) / 20.0).collect()).unwrap();
        let once = resize_bilinear(&img, 6, 6).unwrap();
        prop_assert_eq!(&once, &img);
        prop_assert_eq!(resize_bilinear(&once, 6, 6).unwrap(), once);
    }

    #[test]
    fn augmentation_preserves_shape_and_range(t in tensor(vec![3, 5, 7]), seed in any::<u64>()) {
        let img = Tensor::new(t.shape(), t.data().iter().map(|v| (v + 10.0) / 20.0).collect()).unwrap();
        let policy = AugmentPolicy { brightness: (0.5, 1.5), contrast: (0.5, 1.5), ..AugmentPolicy::default() };
        let out = augment(&img, &policy, RngSeed(seed)).unwrap();
        prop_assert_eq!(out.shape(), img.shape());
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn folds_are_stratified_partitions(labels in prop::collection::vec(any::<bool>(), 10..200), k in 2usize..7, seed in any::<u64>()) {
        let labels: Vec<ClassLabel> = labels
            .into_iter()
            .map(|b| if b { ClassLabel::Parasitized } else { ClassLabel::Uninfected })
            .collect();
        let pos = labels.iter().filter(|&&l| l == ClassLabel::Parasitized).count();
        let folds = match split_kfold(&labels, k, RngSeed(seed)) {
            Ok(f) => f,
            Err(_) => {
                prop_assert!(pos < k || labels.len() - pos < k);
                return Ok(());
            }
        };
        let global = pos as f64 / labels.len() as f64;
        let mut seen = vec![0usize; labels.len()];
        for f in &folds {
            prop_assert_eq!(f.train.len() + f.validation.len(), labels.len());
            for &i in &f.validation {
                seen[i] += 1;
                prop_assert!(!f.train.contains(&i));
            }
            let fpos = f.validation.iter().filter(|&&i| labels[i] == ClassLabel::Parasitized).count();
            let frac = fpos as f64 / f.validation.len() as f64;
            prop_assert!((frac - global).abs() <= 1.0 / f.validation.len() as f64 + 1e-12);
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }
}
