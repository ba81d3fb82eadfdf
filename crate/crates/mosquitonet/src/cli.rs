//! Command-line entry point.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use mosquitonet_core::data::{split_kfold, MemorySource};
use mosquitonet_core::xai::{gradcam, overlay};
use mosquitonet_core::MosquitoNet;

use crate::bench::{parse_baselines, render_table, run_bench, to_tsv, ModelTarget, NoOp};
use crate::config::RunConfig;
use crate::dataset::{load_and_preprocess, scan_dataset, ManifestSource};
use crate::export::{heatmap_png, load_checkpoint, model_id_hex, rgb_png, write_atomic};
use crate::fit::{evaluate_indices, fit, run_cross_validation, streams};
use crate::report::{cv_table, metrics_kv, metrics_table};
use crate::service::{predict_bytes, serve};
use crate::synthetic;

#[derive(Debug, Parser)]
#[command(
    name = "mosquitonet",
    version,
    about = "Malaria cell classifier: train, evaluate, explain, benchmark and serve"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Config file of `key = value` lines
    #[arg(long, global = true, env = "MOSQUITONET_CONFIG")]
    pub config: Option<PathBuf>,
    /// Override one config key (repeatable), e.g. --set train.epochs=5
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Root seed for every random stream
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Log progress to stderr (-vv for debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count images per class under a dataset root
    Inspect {
        data_root: PathBuf,
        /// Also write the manifest as label<TAB>path lines
        #[arg(long)]
        manifest_out: Option<PathBuf>,
    },
    /// Train one model, validating on the first stratified fold
    Train {
        data_root: PathBuf,
        /// Checkpoint path for the best model
        #[arg(long, default_value = "mosquitonet.mqt")]
        out: PathBuf,
        /// Training report path [default: <out>.report]
        #[arg(long)]
        report: Option<PathBuf>,
        /// Train on every image and validate on the training set
        #[arg(long)]
        no_holdout: bool,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Stratified k-fold cross-validation
    Crossval {
        data_root: PathBuf,
        /// Directory for per-fold checkpoints and the report
        #[arg(long, default_value = "crossval")]
        out_dir: PathBuf,
        /// Number of folds (cv.folds)
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Metrics of a checkpoint on a dataset
    Eval {
        checkpoint: PathBuf,
        data_root: PathBuf,
    },
    /// Classify one image
    Predict { checkpoint: PathBuf, image: PathBuf },
    /// Write a GradCAM overlay for one image
    Explain {
        checkpoint: PathBuf,
        image: PathBuf,
        /// Overlay PNG path
        #[arg(long, default_value = "overlay.png")]
        out: PathBuf,
        /// Also write the grayscale heatmap
        #[arg(long)]
        heatmap_out: Option<PathBuf>,
        /// Target class (0 uninfected, 1 parasitized) [default: predicted class]
        #[arg(long)]
        class: Option<usize>,
        /// Overlay opacity
        #[arg(long, default_value_t = mosquitonet_core::xai::DEFAULT_ALPHA)]
        alpha: f32,
    },
    /// Time single-image inference
    Bench {
        /// Checkpoint to time [default: a fresh default-config model]
        checkpoint: Option<PathBuf>,
        /// Timed runs (bench.runs)
        #[arg(long, default_value_t = 100)]
        runs: usize,
        /// Untimed warmup runs (bench.warmup)
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        /// Reference rows file (tab-separated name, input, params, cpu_ms)
        #[arg(long)]
        baselines: Option<PathBuf>,
        /// Also time a no-op forward to show harness overhead
        #[arg(long)]
        calibrate: bool,
        /// Write measured rows in baselines format
        #[arg(long)]
        tsv_out: Option<PathBuf>,
    },
    /// Serve the HTTP API
    Serve {
        checkpoint: PathBuf,
        /// Listen port (serve.port)
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Listen address (serve.host)
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Generate a synthetic two-class dataset
    Synth {
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = SynthKind::Cells)]
        kind: SynthKind,
        /// Number of images, alternating classes
        #[arg(long, default_value_t = 32)]
        count: usize,
        /// Image side in pixels
        #[arg(long, default_value_t = 120)]
        size: usize,
    },
    /// Print the resolved configuration
    ShowConfig,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    /// Epochs (train.epochs)
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    /// Minibatch size (train.batch_size)
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Initial learning rate (train.learning_rate)
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Cells,
    Blobs,
}

fn explicit(m: Option<&ArgMatches>, id: &str) -> bool {
    m.is_some_and(|m| m.value_source(id) == Some(ValueSource::CommandLine))
}

/// Flags mapped to config keys; applied only when given on the command line.
fn flag_overrides(cli: &Cli, sub: Option<&ArgMatches>) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut push = |id: &str, key: &str, v: String| {
        if explicit(sub, id) {
            out.push((key.to_string(), v));
        }
    };
    match &cli.command {
        Command::Train { train, .. } | Command::Crossval { train, .. } => {
            push("epochs", "train.epochs", train.epochs.to_string());
            push(
                "batch_size",
                "train.batch_size",
                train.batch_size.to_string(),
            );
            push("lr", "train.learning_rate", train.lr.to_string());
            if let Command::Crossval { folds, .. } = &cli.command {
                push("folds", "cv.folds", folds.to_string());
            }
        }
        Command::Bench { runs, warmup, .. } => {
            push("runs", "bench.runs", runs.to_string());
            push("warmup", "bench.warmup", warmup.to_string());
        }
        Command::Serve { port, host, .. } => {
            push("port", "serve.port", port.to_string());
            push("host", "serve.host", host.clone());
        }
        _ => {}
    }
    out
}

fn resolve(cli: &Cli, sub: Option<&ArgMatches>) -> anyhow::Result<RunConfig> {
    let mut overrides = flag_overrides(cli, sub);
    for kv in &cli.global.set {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set {kv:?}: expected KEY=VALUE"))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(seed) = cli.global.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    let cfg = RunConfig::resolve(cli.global.config.as_deref(), std::env::vars(), &overrides)?;
    for line in cfg.to_text().lines() {
        log::debug!("config {line}");
    }
    Ok(cfg)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn open_dataset(root: &Path, cfg: &RunConfig) -> anyhow::Result<ManifestSource> {
    let manifest = scan_dataset(root)?;
    Ok(ManifestSource {
        manifest,
        height: cfg.model.height,
        width: cfg.model.width,
    })
}

fn load(path: &Path) -> anyhow::Result<(MosquitoNet, u32)> {
    Ok(load_checkpoint(path)?)
}

/// Parses `args` (program name first) and runs the subcommand, writing primary output to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = Cli::command().get_matches_from(args);
    let cli = Cli::from_arg_matches(&matches)?;
    init_logging(cli.global.verbose);
    let sub = matches.subcommand().map(|(_, m)| m);
    let cfg = resolve(&cli, sub)?;
    execute(&cli.command, &cfg, out)
}

pub fn execute(command: &Command, cfg: &RunConfig, out: &mut dyn Write) -> anyhow::Result<()> {
    match command {
        Command::Inspect {
            data_root,
            manifest_out,
        } => {
            let m = scan_dataset(data_root)?;
            let [u, p] = m.counts();
            writeln!(out, "root={}", data_root.display())?;
            writeln!(out, "parasitized={p}")?;
            writeln!(out, "uninfected={u}")?;
            writeln!(out, "total={}", m.len())?;
            writeln!(out, "skipped={}", m.skipped.len())?;
            if let Some(path) = manifest_out {
                write_atomic(path, m.to_tsv().as_bytes())?;
            }
        }
        Command::Train {
            data_root,
            out: ckpt,
            report,
            no_holdout,
            ..
        } => {
            let src = open_dataset(data_root, cfg)?;
            let all: Vec<usize> = (0..src.manifest.len()).collect();
            let (train, val) = if *no_holdout {
                (all, Vec::new())
            } else {
                let folds = split_kfold(
                    &src.manifest.labels(),
                    cfg.cv_folds,
                    cfg.train.seed.fork(streams::FOLDS),
                )?;
                let f = folds.into_iter().next().expect("k >= 2");
                (f.train, f.validation)
            };
            let trained = fit(&cfg.model, &cfg.train, &src, &train, &val, Some(ckpt))?;
            let text = trained.report.to_text();
            let report_path = report.clone().unwrap_or_else(|| sibling(ckpt, "report"));
            write_atomic(&report_path, text.as_bytes())?;
            out.write_all(text.as_bytes())?;
        }
        Command::Crossval {
            data_root, out_dir, ..
        } => {
            let src = open_dataset(data_root, cfg)?;
            std::fs::create_dir_all(out_dir).with_context(|| out_dir.display().to_string())?;
            let r =
                run_cross_validation(&cfg.model, &cfg.train, &src, cfg.cv_folds, Some(out_dir))?;
            let mut text = r.to_text();
            for (i, t) in r.train_reports.iter().enumerate() {
                write_atomic(
                    &out_dir.join(format!("fold{}.report", i + 1)),
                    t.to_text().as_bytes(),
                )?;
            }
            write_atomic(&out_dir.join("crossval.report"), text.as_bytes())?;
            text.push('\n');
            text.push_str(&cv_table(&r));
            out.write_all(text.as_bytes())?;
        }
        Command::Eval {
            checkpoint,
            data_root,
        } => {
            let (model, id) = load(checkpoint)?;
            let manifest = scan_dataset(data_root)?;
            let [_, h, w] = model.config().input_shape();
            let src = ManifestSource {
                manifest,
                height: h,
                width: w,
            };
            let all: Vec<usize> = (0..src.manifest.len()).collect();
            let (ev, m) = evaluate_indices(&model, &src, &all, cfg.train.batch_size)?;
            write!(out, "{}", metrics_table(&m))?;
            writeln!(out)?;
            write!(out, "{}", metrics_kv(&m))?;
            writeln!(out, "loss={}", ev.loss)?;
            writeln!(out, "samples={}", ev.truths.len())?;
            writeln!(out, "model_id={}", model_id_hex(id))?;
        }
        Command::Predict { checkpoint, image } => {
            let (model, id) = load(checkpoint)?;
            let bytes = std::fs::read(image).with_context(|| image.display().to_string())?;
            let (p, _) =
                predict_bytes(&model, &bytes).with_context(|| image.display().to_string())?;
            writeln!(out, "label={}", p.label)?;
            writeln!(out, "p_uninfected={}", p.probabilities[0])?;
            writeln!(out, "p_parasitized={}", p.probabilities[1])?;
            writeln!(out, "model_id={}", model_id_hex(id))?;
        }
        Command::Explain {
            checkpoint,
            image,
            out: path,
            heatmap_out,
            class,
            alpha,
        } => {
            let (model, _) = load(checkpoint)?;
            let [_, h, w] = model.config().input_shape();
            let img = load_and_preprocess(image, h, w)?;
            let p = model.predict(&img)?;
            let target = class.unwrap_or(p.label.index());
            let heat = gradcam(&model, &img, target)?;
            write_atomic(path, &rgb_png(&overlay(&img, &heat, *alpha)?.image)?)?;
            if let Some(hp) = heatmap_out {
                write_atomic(hp, &heatmap_png(&heat)?)?;
            }
            writeln!(out, "label={}", p.label)?;
            writeln!(out, "target_class={}", heat.target_class)?;
            writeln!(out, "overlay={}", path.display())?;
        }
        Command::Bench {
            checkpoint,
            baselines,
            calibrate,
            tsv_out,
            ..
        } => {
            let model = match checkpoint {
                Some(p) => load(p)?.0,
                None => MosquitoNet::build(cfg.model.clone(), cfg.train.seed.fork(streams::INIT))?,
            };
            let target = ModelTarget {
                name: "Mosquito-Net".into(),
                model: &model,
            };
            let mut reports = vec![run_bench(&target, cfg.bench)?];
            if *calibrate {
                let noop = NoOp {
                    input_shape: model.config().input_shape(),
                };
                reports.push(run_bench(&noop, cfg.bench)?);
            }
            let refs = match baselines {
                Some(p) => {
                    let text =
                        std::fs::read_to_string(p).with_context(|| p.display().to_string())?;
                    parse_baselines(&text).with_context(|| p.display().to_string())?
                }
                None => Vec::new(),
            };
            for r in &reports {
                write!(out, "{}", r.to_text())?;
            }
            writeln!(out)?;
            write!(out, "{}", render_table(&reports, &refs))?;
            if let Some(p) = tsv_out {
                let rows: Vec<_> = reports.iter().map(|r| r.as_row()).collect();
                write_atomic(p, to_tsv(&rows).as_bytes())?;
            }
        }
        Command::Serve { checkpoint, .. } => {
            let path = checkpoint.clone();
            if !path.is_file() {
                bail!("{}: no such checkpoint", path.display());
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(cfg.serve.clone(), move || load_checkpoint(&path)))?;
        }
        Command::Synth {
            out_dir,
            kind,
            count,
            size,
        } => {
            let seed = cfg.train.seed.fork(0x5EED);
            let src: MemorySource = match kind {
                SynthKind::Cells => synthetic::cell_images(*count, *size, seed),
                SynthKind::Blobs => {
                    synthetic::bright_blobs(*count, *size, (*size / 4).max(1), seed).0
                }
            };
            synthetic::write_dataset(out_dir, &src)?;
            writeln!(out, "wrote {count} images to {}", out_dir.display())?;
        }
        Command::ShowConfig => out.write_all(cfg.to_text().as_bytes())?,
    }
    Ok(())
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}
