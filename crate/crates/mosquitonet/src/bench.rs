//! Single-image inference latency harness and its table rendering.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use mosquitonet_core::tensor::Init;
use mosquitonet_core::{MosquitoNet, RngSeed, Tensor};

use crate::error::{Error, Result};

/// Something with a timed forward pass over `[1, C, H, W]`.
pub trait InferenceTarget {
    fn name(&self) -> &str;
    fn input_shape(&self) -> [usize; 3];
    fn parameter_count(&self) -> usize;
    fn forward(&self, x: &Tensor) -> mosquitonet_core::Result<Tensor>;
}

/// The network under a display name.
pub struct ModelTarget<'a> {
    pub name: String,
    pub model: &'a MosquitoNet,
}

impl InferenceTarget for ModelTarget<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn input_shape(&self) -> [usize; 3] {
        self.model.config().input_shape()
    }

    fn parameter_count(&self) -> usize {
        self.model.count_parameters()
    }

    fn forward(&self, x: &Tensor) -> mosquitonet_core::Result<Tensor> {
        self.model.forward_eval(x)
    }
}

/// Forward that does nothing; measures the harness itself.
pub struct NoOp {
    pub input_shape: [usize; 3],
}

impl InferenceTarget for NoOp {
    fn name(&self) -> &str {
        "no-op"
    }

    fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    fn parameter_count(&self) -> usize {
        0
    }

    fn forward(&self, _: &Tensor) -> mosquitonet_core::Result<Tensor> {
        Ok(Tensor::scalar(0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub name: String,
    pub input_shape: [usize; 3],
    pub parameter_count: usize,
    pub warmup: usize,
    pub runs: usize,
    pub latencies_ms: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub machine: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    pub warmup: usize,
    pub runs: usize,
    pub seed: RngSeed,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            warmup: 10,
            runs: 100,
            seed: RngSeed(0),
        }
    }
}

pub fn machine_descriptor() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{cpu}; {threads} threads; {}-{}",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

/// Times `runs` batch-1 forward passes on one seeded random input after
/// `warmup` untimed ones. Only the forward call is inside the timed region.
pub fn run_bench<T: InferenceTarget + ?Sized>(
    target: &T,
    opts: BenchOptions,
) -> Result<BenchReport> {
    if opts.runs == 0 {
        return Err(Error::Config("bench.runs must be at least 1".into()));
    }
    let [c, h, w] = target.input_shape();
    let x = Tensor::random_init(
        &[1, c, h, w],
        Init::Uniform {
            low: 0.0,
            high: 1.0,
        },
        opts.seed,
    )?;
    for _ in 0..opts.warmup {
        black_box(target.forward(black_box(&x))?);
    }
    let mut latencies_ms = Vec::with_capacity(opts.runs);
    for _ in 0..opts.runs {
        let start = Instant::now();
        let out = target.forward(black_box(&x));
        let elapsed = start.elapsed();
        black_box(out?);
        latencies_ms.push(elapsed.as_secs_f64() * 1e3);
    }
    let n = latencies_ms.len() as f64;
    let mean = latencies_ms.iter().sum::<f64>() / n;
    let std = if latencies_ms.len() > 1 {
        (latencies_ms
            .iter()
            .map(|l| (l - mean) * (l - mean))
            .sum::<f64>()
            / (n - 1.0))
            .sqrt()
    } else {
        0.0
    };
    let mut sorted = latencies_ms.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 0 {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    };
    Ok(BenchReport {
        name: target.name().to_string(),
        input_shape: [c, h, w],
        parameter_count: target.parameter_count(),
        warmup: opts.warmup,
        runs: opts.runs,
        mean,
        std,
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        median,
        latencies_ms,
        machine: machine_descriptor(),
    })
}

/// A row from a baselines file, kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceRow {
    pub name: String,
    pub input: String,
    pub params: String,
    pub cpu_ms: String,
}

/// Tab-separated `name, input, params, cpu_ms`; blank lines and `#` lines are skipped.
pub fn parse_baselines(text: &str) -> Result<Vec<ReferenceRow>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(n, l)| {
            let f: Vec<&str> = l.split('\t').map(str::trim).collect();
            match f.as_slice() {
                [name, input, params, cpu_ms] => Ok(ReferenceRow {
                    name: name.to_string(),
                    input: input.to_string(),
                    params: params.to_string(),
                    cpu_ms: cpu_ms.to_string(),
                }),
                _ => Err(Error::Config(format!(
                    "baselines line {}: expected 4 tab-separated fields, got {}",
                    n + 1,
                    f.len()
                ))),
            }
        })
        .collect()
}

pub fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

pub fn input_label([c, h, w]: [usize; 3]) -> String {
    format!("{c}*{h}*{w}")
}

impl BenchReport {
    /// The same four fields as a baselines row.
    pub fn as_row(&self) -> ReferenceRow {
        ReferenceRow {
            name: self.name.clone(),
            input: input_label(self.input_shape),
            params: thousands(self.parameter_count),
            cpu_ms: format!("{:.3}", self.mean),
        }
    }

    /// Statistics as `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name={}", self.name);
        let _ = writeln!(s, "input={}", input_label(self.input_shape));
        let _ = writeln!(s, "params={}", self.parameter_count);
        let _ = writeln!(s, "warmup={} runs={}", self.warmup, self.runs);
        let _ = writeln!(
            s,
            "mean_ms={:.4} std_ms={:.4} min_ms={:.4} max_ms={:.4} median_ms={:.4}",
            self.mean, self.std, self.min, self.max, self.median
        );
        let _ = writeln!(s, "machine={}", self.machine);
        s
    }
}

/// Rows in baselines-file format.
pub fn to_tsv(rows: &[ReferenceRow]) -> String {
    let mut s = String::from("# name\tinput\tparams\tcpu_ms\n");
    for r in rows {
        let _ = writeln!(s, "{}\t{}\t{}\t{}", r.name, r.input, r.params, r.cpu_ms);
    }
    s
}

/// Measured rows sorted by parameter count, then reference rows in file order.
pub fn render_table(reports: &[BenchReport], references: &[ReferenceRow]) -> String {
    let mut sorted: Vec<&BenchReport> = reports.iter().collect();
    sorted.sort_by_key(|r| r.parameter_count);
    let mut rows: Vec<[String; 5]> = sorted
        .iter()
        .map(|r| {
            let row = r.as_row();
            [
                row.name,
                row.input,
                row.params,
                row.cpu_ms,
                "measured".into(),
            ]
        })
        .chain(references.iter().map(|r| {
            [
                r.name.clone(),
                r.input.clone(),
                r.params.clone(),
                r.cpu_ms.clone(),
                "reference".into(),
            ]
        }))
        .collect();
    let header = [
        "Model Name".to_string(),
        "Input Size (Ch,H,W)".into(),
        "Params".into(),
        "CPU ms (mean)".into(),
        "Source".into(),
    ];
    rows.insert(0, header);
    let widths: Vec<usize> = (0..5)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut s = String::new();
    for r in &rows {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| {
                if c == 0 || c == 4 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        let _ = writeln!(s, "{}", line.join("  ").trim_end());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thousands_separators() {
        assert_eq!(thousands(0), "0");
        assert_eq!(thousands(999), "999");
        assert_eq!(thousands(1000), "1,000");
        assert_eq!(thousands(7_472_002), "7,472,002");
        assert_eq!(thousands(143_678_248), "143,678,248");
    }

    #[test]
    fn baselines_reject_short_rows() {
        assert!(parse_baselines("a\tb\tc\n").is_err());
        assert_eq!(parse_baselines("# x\n\nA\t1\t2\t3\n").unwrap().len(), 1);
    }

    #[test]
    fn zero_runs_rejected() {
        let t = NoOp {
            input_shape: [1, 1, 1],
        };
        let o = BenchOptions {
            runs: 0,
            ..Default::default()
        };
        assert!(run_bench(&t, o).is_err());
    }
}
