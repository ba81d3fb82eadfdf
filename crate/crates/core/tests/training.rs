use mosquitonet_core::data::{batches, BatchOptions, MemorySource};
use mosquitonet_core::tensor::Init;
use mosquitonet_core::train::{evaluate, train_epoch, Optimizer};
use mosquitonet_core::{ClassLabel, ModelConfig, MosquitoNet, RngSeed, Tensor};
use rand::Rng;

fn default_count(c: &[usize]) -> usize {
    let mut cin = 3;
    let mut total = 0;
    for &cout in c {
        total += 25 * cin * cout + 3 * cout;
        cin = cout;
    }
    total + (cin * 225 * 512 + 512) + (512 * 128 + 128) + (128 * 2 + 2)
}

#[test]
fn default_shape_chain_and_logits() {
    let m = MosquitoNet::build(ModelConfig::default(), RngSeed(0)).unwrap();
    let x = Tensor::random_init(
        &[2, 3, 120, 120],
        Init::Uniform {
            low: 0.0,
            high: 1.0,
        },
        RngSeed(1),
    )
    .unwrap();
    let (logits, trace) = m.forward_eval_traced(&x).unwrap();
    assert_eq!(logits.shape(), &[2, 2]);
    let sizes: Vec<&[usize]> = trace.block_output_shapes.iter().map(|s| &s[2..]).collect();
    assert_eq!(sizes, [&[60, 60][..], &[30, 30], &[15, 15]]);
    assert_eq!(
        trace.last_block_activation.unwrap().shape(),
        &[2, 64, 30, 30]
    );
}

#[test]
fn default_parameter_count() {
    let m = MosquitoNet::build(ModelConfig::default(), RngSeed(0)).unwrap();
    assert_eq!(m.count_parameters(), 7_504_770);
    assert_eq!(m.count_parameters(), default_count(&[16, 32, 64]));
    let rel = (7_504_770.0 - 7_472_002.0f64).abs() / 7_472_002.0;
    assert!(rel < 0.01);
    for c in [[8, 16, 32], [16, 16, 16], [4, 32, 64]] {
        let cfg = ModelConfig {
            conv_channels: c.to_vec(),
            ..ModelConfig::default()
        };
        assert_eq!(cfg.parameter_count().unwrap(), default_count(&c));
    }
}

fn small_config() -> ModelConfig {
    ModelConfig {
        height: 16,
        width: 16,
        conv_channels: vec![4, 8],
        fc_sizes: vec![16],
        ..ModelConfig::default()
    }
}

/// Class 1 images carry a bright square; class 0 images are dim noise.
fn two_class(n: usize, size: usize, seed: RngSeed) -> MemorySource {
    let mut rng = seed.rng();
    let mut src = MemorySource::default();
    for i in 0..n {
        let label = if i % 2 == 0 {
            ClassLabel::Parasitized
        } else {
            ClassLabel::Uninfected
        };
        let mut data: Vec<f32> = (0..3 * size * size)
            .map(|_| rng.random_range(0.0..0.3))
            .collect();
        if label == ClassLabel::Parasitized {
            let (y0, x0) = (rng.random_range(0..size / 2), rng.random_range(0..size / 2));
            for c in 0..3 {
                for y in y0..y0 + size / 4 {
                    for x in x0..x0 + size / 4 {
                        data[(c * size + y) * size + x] = 0.9;
                    }
                }
            }
        }
        src.images
            .push(Tensor::new(&[3, size, size], data).unwrap());
        src.labels.push(label);
    }
    src
}

#[test]
fn eval_forward_does_not_mutate() {
    let m = MosquitoNet::build(small_config(), RngSeed(4)).unwrap();
    let before = m.clone();
    let src = two_class(4, 16, RngSeed(1));
    let all: Vec<usize> = (0..4).collect();
    let opts = BatchOptions {
        batch_size: 4,
        shuffle: None,
        augment: None,
    };
    evaluate(&m, batches(&src, &all, 0, &opts).unwrap()).unwrap();
    assert_eq!(m, before);
}

#[test]
fn zero_learning_rate_is_a_fixed_point() {
    let src = two_class(8, 16, RngSeed(2));
    let all: Vec<usize> = (0..8).collect();
    let opts = BatchOptions {
        batch_size: 4,
        shuffle: Some(RngSeed(3)),
        augment: None,
    };

    let mut m = MosquitoNet::build(small_config(), RngSeed(5)).unwrap();
    let before = m.clone();
    let mut opt = Optimizer::adam(0.0);
    train_epoch(
        &mut m,
        batches(&src, &all, 0, &opts).unwrap(),
        &mut opt,
        &mut RngSeed(6).rng(),
        0,
    )
    .unwrap();
    for (a, b) in m.parameters().iter().zip(before.parameters()) {
        assert_eq!(a.value, b.value);
    }
    // Running statistics are buffers, not parameters, and do move.
    assert_ne!(m.blocks[0].bn.running, before.blocks[0].bn.running);

    // Without batchnorm the whole model, including eval loss, is unchanged.
    let fc_only = ModelConfig {
        height: 4,
        width: 4,
        conv_channels: vec![],
        fc_sizes: vec![8],
        ..ModelConfig::default()
    };
    let small: MemorySource = MemorySource {
        images: src
            .images
            .iter()
            .map(|t| mosquitonet_core::imageops::resize_bilinear(t, 4, 4).unwrap())
            .collect(),
        labels: src.labels.clone(),
    };
    let mut m = MosquitoNet::build(fc_only, RngSeed(7)).unwrap();
    let before = m.clone();
    let eval_before = evaluate(&m, batches(&small, &all, 0, &opts).unwrap()).unwrap();
    train_epoch(
        &mut m,
        batches(&small, &all, 0, &opts).unwrap(),
        &mut Optimizer::sgd(0.0, 0.9),
        &mut RngSeed(8).rng(),
        0,
    )
    .unwrap();
    assert_eq!(m.named_tensors(), before.named_tensors());
    assert_eq!(
        evaluate(&m, batches(&small, &all, 0, &opts).unwrap()).unwrap(),
        eval_before
    );
}

#[test]
fn linear_head_loss_decreases_monotonically() {
    let cfg = ModelConfig {
        in_channels: 2,
        height: 1,
        width: 1,
        conv_channels: vec![],
        fc_sizes: vec![],
        dropout_p: 0.0,
        ..ModelConfig::default()
    };
    let mut rng = RngSeed(9).rng();
    let mut src = MemorySource::default();
    for i in 0..64 {
        let label = if i % 2 == 0 {
            ClassLabel::Parasitized
        } else {
            ClassLabel::Uninfected
        };
        let shift = if label == ClassLabel::Parasitized {
            1.0
        } else {
            -1.0
        };
        let x = [
            shift + rng.random_range(-0.5..0.5),
            shift * 0.5 + rng.random_range(-0.5..0.5),
        ];
        src.images
            .push(Tensor::new(&[2, 1, 1], x.to_vec()).unwrap());
        src.labels.push(label);
    }
    let all: Vec<usize> = (0..64).collect();
    let opts = BatchOptions {
        batch_size: 64,
        shuffle: None,
        augment: None,
    };
    let mut m = MosquitoNet::build(cfg, RngSeed(10)).unwrap();
    let mut opt = Optimizer::sgd(0.05, 0.0);
    let mut losses = Vec::new();
    for epoch in 0..10 {
        let s = train_epoch(
            &mut m,
            batches(&src, &all, epoch, &opts).unwrap(),
            &mut opt,
            &mut RngSeed(0).rng(),
            epoch,
        )
        .unwrap();
        losses.push(s.loss);
    }
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn overfits_two_images() {
    let src = two_class(2, 16, RngSeed(11));
    let all = [0, 1];
    let opts = BatchOptions {
        batch_size: 2,
        shuffle: None,
        augment: None,
    };
    let mut m = MosquitoNet::build(small_config(), RngSeed(12)).unwrap();
    let mut opt = Optimizer::adam(1e-3);
    let mut drop = RngSeed(13).rng();
    for epoch in 0..200 {
        train_epoch(
            &mut m,
            batches(&src, &all, epoch, &opts).unwrap(),
            &mut opt,
            &mut drop,
            epoch,
        )
        .unwrap();
        // BN in eval mode uses running stats, so check convergence there.
        let ok = (0..2).all(|i| {
            let p = m.predict(&src.images[i]).unwrap();
            p.label == src.labels[i] && p.probabilities[src.labels[i].index()] > 0.99
        });
        if ok {
            return;
        }
    }
    panic!("did not memorize two images in 200 epochs");
}

#[test]
fn fixed_seed_training_is_bit_reproducible() {
    let run = || {
        let src = two_class(12, 16, RngSeed(14));
        let all: Vec<usize> = (0..12).collect();
        let opts = BatchOptions {
            batch_size: 4,
            shuffle: Some(RngSeed(15)),
            augment: Some((Default::default(), RngSeed(16))),
        };
        let mut m = MosquitoNet::build(small_config(), RngSeed(17)).unwrap();
        let mut opt = Optimizer::adam(1e-3);
        let mut drop = RngSeed(18).rng();
        let losses: Vec<f64> = (0..3)
            .map(|e| {
                train_epoch(
                    &mut m,
                    batches(&src, &all, e, &opts).unwrap(),
                    &mut opt,
                    &mut drop,
                    e,
                )
                .unwrap()
                .loss
            })
            .collect();
        (losses, m)
    };
    let (a, ma) = run();
    let (b, mb) = run();
    assert_eq!(a, b);
    assert_eq!(ma, mb);
}

#[test]
fn non_finite_loss_aborts() {
    let src = two_class(4, 16, RngSeed(19));
    let all: Vec<usize> = (0..4).collect();
    let opts = BatchOptions {
        batch_size: 4,
        shuffle: None,
        augment: None,
    };
    let mut m = MosquitoNet::build(small_config(), RngSeed(20)).unwrap();
    m.fcs.last_mut().unwrap().weight.value.data_mut()[0] = f32::NAN;
    let err = train_epoch(
        &mut m,
        batches(&src, &all, 0, &opts).unwrap(),
        &mut Optimizer::adam(1e-3),
        &mut RngSeed(0).rng(),
        3,
    )
    .unwrap_err();
    assert!(matches!(
        err,
        mosquitonet_core::Error::NonFiniteLoss { epoch: 3, batch: 0 }
    ));
}
