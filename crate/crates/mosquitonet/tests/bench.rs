mod common;

use std::cell::Cell;

use mosquitonet::bench::{
    parse_baselines, render_table, run_bench, to_tsv, BenchOptions, BenchReport, InferenceTarget,
    ModelTarget, NoOp,
};
use mosquitonet_core::{ModelConfig, MosquitoNet, RngSeed, Tensor};

const BASELINES: &str = include_str!("../data/reference_baselines.tsv");

struct Counting {
    calls: Cell<usize>,
}

impl InferenceTarget for Counting {
    fn name(&self) -> &str {
        "counting"
    }
    fn input_shape(&self) -> [usize; 3] {
        [1, 2, 2]
    }
    fn parameter_count(&self) -> usize {
        1
    }
    fn forward(&self, x: &Tensor) -> mosquitonet_core::Result<Tensor> {
        self.calls.set(self.calls.get() + 1);
        Ok(x.clone())
    }
}

fn opts(warmup: usize, runs: usize) -> BenchOptions {
    BenchOptions {
        warmup,
        runs,
        seed: RngSeed(1),
    }
}

#[test]
fn cardinality_and_warmup_exclusion() {
    let t = Counting {
        calls: Cell::new(0),
    };
    let r = run_bench(&t, opts(7, 100)).unwrap();
    assert_eq!(r.latencies_ms.len(), 100);
    assert_eq!(t.calls.get(), 107);
    assert_eq!((r.warmup, r.runs), (7, 100));
    assert!(r.min <= r.mean && r.mean <= r.max);
    assert!(r.min <= r.median && r.median <= r.max);
}

#[test]
fn noop_measures_near_zero() {
    let r = run_bench(
        &NoOp {
            input_shape: [3, 120, 120],
        },
        opts(10, 100),
    )
    .unwrap();
    assert!(r.mean < 0.01, "harness overhead {} ms", r.mean);
}

fn model(side: usize) -> MosquitoNet {
    let cfg = ModelConfig {
        height: side,
        width: side,
        conv_channels: vec![8, 16],
        fc_sizes: vec![32],
        ..ModelConfig::default()
    };
    MosquitoNet::build(cfg, RngSeed(2)).unwrap()
}

#[test]
fn repeated_reports_are_stable() {
    let m = model(48);
    let t = ModelTarget {
        name: "small".into(),
        model: &m,
    };
    let a = run_bench(&t, opts(5, 30)).unwrap();
    let b = run_bench(&t, opts(5, 30)).unwrap();
    let ratio = a.mean / b.mean;
    assert!(
        (1.0 / 3.0..=3.0).contains(&ratio),
        "{} vs {}",
        a.mean,
        b.mean
    );

    let strip = |r: &BenchReport| BenchReport {
        latencies_ms: vec![],
        mean: 0.0,
        std: 0.0,
        min: 0.0,
        max: 0.0,
        median: 0.0,
        ..r.clone()
    };
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(a.parameter_count, m.count_parameters());
    assert_eq!(a.input_shape, [3, 48, 48]);
}

fn fake(name: &str, params: usize, mean: f64) -> BenchReport {
    BenchReport {
        name: name.into(),
        input_shape: [3, 120, 120],
        parameter_count: params,
        warmup: 0,
        runs: 1,
        latencies_ms: vec![mean],
        mean,
        std: 0.0,
        min: mean,
        max: mean,
        median: mean,
        machine: String::new(),
    }
}

#[test]
fn single_row_table() {
    let t = render_table(&[fake("only", 1234, 1.5)], &[]);
    let lines: Vec<&str> = t.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("Model Name"));
    assert!(
        lines[1].contains("1,234") && lines[1].contains("1.500") && lines[1].contains("3*120*120")
    );
}

#[test]
fn rows_sorted_by_params() {
    let t = render_table(
        &[
            fake("big", 900, 1.0),
            fake("small", 10, 1.0),
            fake("mid", 50, 1.0),
        ],
        &[],
    );
    let order: Vec<&str> = t
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().next().unwrap())
        .collect();
    assert_eq!(order, ["small", "mid", "big"]);
}

#[test]
fn reference_rows_are_verbatim() {
    let refs = parse_baselines(BASELINES).unwrap();
    assert_eq!(refs.len(), 9);
    assert_eq!(refs[0].name, "Mosquito-Net");
    assert_eq!(refs[0].input, "3*120*120");
    assert_eq!(refs[0].params, "7,472,002");
    assert_eq!(refs[0].cpu_ms, "0.016");
    let t = render_table(&[fake("Mosquito-Net", 7_504_770, 20.0)], &refs);
    let row = t.lines().find(|l| l.contains("reference")).unwrap();
    assert!(row.contains("7,472,002") && row.contains("0.016"), "{row}");
    for r in &refs {
        assert!(t.contains(&r.params) && t.contains(&r.cpu_ms), "{}", r.name);
    }
    assert!(t.contains("AlexNet") && t.contains("0.05 "));
}

#[test]
fn tsv_round_trip() {
    let refs = parse_baselines(BASELINES).unwrap();
    assert_eq!(parse_baselines(&to_tsv(&refs)).unwrap(), refs);
    let row = fake("m", 7_472_002, 0.0164).as_row();
    assert_eq!(
        (row.params.as_str(), row.cpu_ms.as_str()),
        ("7,472,002", "0.016")
    );
}
