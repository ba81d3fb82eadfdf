use mosquitonet_core::nn::{conv2d_naive, Conv2d};
use mosquitonet_core::tensor::Init;
use mosquitonet_core::{RngSeed, Tensor};
use rand::Rng;

fn uniform(shape: &[usize], seed: RngSeed) -> Tensor {
    Tensor::random_init(
        shape,
        Init::Uniform {
            low: -1.0,
            high: 1.0,
        },
        seed,
    )
    .unwrap()
}

#[test]
fn im2col_matches_naive_on_100_random_configurations() {
    let mut rng = RngSeed(42).rng();
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 100 {
        let n = rng.random_range(1..=2);
        let cin = rng.random_range(1..=4);
        let cout = rng.random_range(1..=5);
        let k = [1, 3, 5][rng.random_range(0..3)];
        let stride = rng.random_range(1..=3);
        let pad = rng.random_range(0..=k / 2 + 1);
        let h = rng.random_range(1..=12);
        let w = rng.random_range(1..=12);
        if h + 2 * pad < k || w + 2 * pad < k {
            continue;
        }
        let seed = RngSeed(done);
        let x = uniform(&[n, cin, h, w], seed.fork(0));
        let weight = uniform(&[cout, cin, k, k], seed.fork(1));
        let bias = uniform(&[cout], seed.fork(2));
        let conv = Conv2d::from_parts(weight.clone(), bias.clone(), stride, pad).unwrap();
        let (fast, _) = conv.forward(&x).unwrap();
        let slow = conv2d_naive(&x, &weight, &bias, stride, pad).unwrap();
        assert_eq!(fast.shape(), slow.shape());
        for (a, b) in fast.data().iter().zip(slow.data()) {
            let rel = ((a - b).abs() / a.abs().max(b.abs()).max(1.0)) as f64;
            worst = worst.max(rel);
            assert!(
                rel < 1e-4,
                "n{n} cin{cin} cout{cout} k{k} s{stride} p{pad} {h}x{w}: {a} vs {b}"
            );
        }
        done += 1;
    }
    println!("worst relative difference {worst:.2e}");
}

#[test]
fn default_geometry_preserves_spatial_size() {
    for (h, w) in [(1, 1), (2, 7), (15, 15), (120, 120)] {
        let conv = Conv2d::new(3, 2, 5, 1, 2, RngSeed(0)).unwrap();
        let (y, _) = conv.forward(&Tensor::zeros(&[1, 3, h, w])).unwrap();
        assert_eq!(y.shape(), &[1, 2, h, w]);
    }
}
