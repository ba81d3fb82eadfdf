//! Run configuration: flat `section.key = value` text, resolved as
//! defaults, then config file, then `MOSQUITONET_*` environment, then flags.

use std::fmt::Write as _;
use std::path::Path;

use mosquitonet_core::data::AugmentPolicy;
use mosquitonet_core::{ModelConfig, RngSeed};

use crate::bench::BenchOptions;
use crate::error::{Error, Result};
use crate::fit::{OptimizerChoice, TrainSettings};

pub const ENV_PREFIX: &str = "MOSQUITONET_";

#[derive(Debug, Clone, PartialEq)]
pub struct ServeSettings {
    pub host: String,
    pub port: u16,
    /// Largest accepted request body in bytes.
    pub body_limit: usize,
    /// Allowed CORS origin; `*` allows any.
    pub cors_origin: String,
    /// Requests processed at once; further requests wait.
    pub max_concurrency: usize,
}

impl Default for ServeSettings {
    fn default() -> Self {
        ServeSettings {
            host: "127.0.0.1".into(),
            port: 8080,
            body_limit: 10 * 1024 * 1024,
            cors_origin: "*".into(),
            max_concurrency: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// Includes the augmentation policy and the root seed.
    pub train: TrainSettings,
    pub cv_folds: usize,
    pub serve: ServeSettings,
    pub bench: BenchOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainSettings::default(),
            cv_folds: 5,
            serve: ServeSettings::default(),
            bench: BenchOptions::default(),
        }
    }
}

const OTHER_KEYS: [&str; 23] = [
    "seed",
    "augment.enabled",
    "augment.hflip_p",
    "augment.vflip_p",
    "augment.brightness",
    "augment.contrast",
    "train.epochs",
    "train.batch_size",
    "train.optimizer",
    "train.learning_rate",
    "train.momentum",
    "scheduler.factor",
    "scheduler.patience",
    "scheduler.min_delta",
    "scheduler.min_lr",
    "cv.folds",
    "serve.host",
    "serve.port",
    "serve.body_limit",
    "serve.cors_origin",
    "serve.max_concurrency",
    "bench.warmup",
    "bench.runs",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn range(key: &str, value: &str) -> Result<(f32, f32)> {
    let (lo, hi) = value
        .split_once(',')
        .ok_or_else(|| Error::Config(format!("{key}: expected lo,hi, got {value:?}")))?;
    Ok((num(key, lo)?, num(key, hi)?))
}

/// Environment variable name for a key: `train.batch_size` is `MOSQUITONET_TRAIN_BATCH_SIZE`.
pub fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.replace('.', "_").to_ascii_uppercase())
}

impl RunConfig {
    /// Every key, model keys first.
    pub fn keys() -> Vec<String> {
        ModelConfig::KEYS
            .iter()
            .map(|k| format!("model.{k}"))
            .chain(OTHER_KEYS.iter().map(|k| k.to_string()))
            .collect()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(k) = key.strip_prefix("model.") {
            return Ok(self.model.set(k, value)?);
        }
        let v = value.trim();
        let t = &mut self.train;
        match key {
            "seed" => t.seed = RngSeed(num(key, v)?),
            "augment.enabled" => t.augment.enabled = num(key, v)?,
            "augment.hflip_p" => t.augment.horizontal_flip_p = num(key, v)?,
            "augment.vflip_p" => t.augment.vertical_flip_p = num(key, v)?,
            "augment.brightness" => t.augment.brightness = range(key, v)?,
            "augment.contrast" => t.augment.contrast = range(key, v)?,
            "train.epochs" => t.epochs = num(key, v)?,
            "train.batch_size" => t.batch_size = num(key, v)?,
            "train.optimizer" => {
                t.optimizer = match v {
                    "adam" => OptimizerChoice::Adam,
                    "sgd" => OptimizerChoice::Sgd,
                    _ => {
                        return Err(Error::Config(format!(
                            "{key}: expected adam or sgd, got {v:?}"
                        )))
                    }
                }
            }
            "train.learning_rate" => t.learning_rate = num(key, v)?,
            "train.momentum" => t.momentum = num(key, v)?,
            "scheduler.factor" => t.scheduler.factor = num(key, v)?,
            "scheduler.patience" => t.scheduler.patience = num(key, v)?,
            "scheduler.min_delta" => t.scheduler.min_delta = num(key, v)?,
            "scheduler.min_lr" => t.scheduler.min_lr = num(key, v)?,
            "cv.folds" => self.cv_folds = num(key, v)?,
            "serve.host" => self.serve.host = v.to_string(),
            "serve.port" => self.serve.port = num(key, v)?,
            "serve.body_limit" => self.serve.body_limit = num(key, v)?,
            "serve.cors_origin" => self.serve.cors_origin = v.to_string(),
            "serve.max_concurrency" => self.serve.max_concurrency = num(key, v)?,
            "bench.warmup" => self.bench.warmup = num(key, v)?,
            "bench.runs" => self.bench.runs = num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        if let Some(k) = key.strip_prefix("model.") {
            return self.model.get(k);
        }
        let t = &self.train;
        let a: &AugmentPolicy = &t.augment;
        Some(match key {
            "seed" => t.seed.0.to_string(),
            "augment.enabled" => a.enabled.to_string(),
            "augment.hflip_p" => a.horizontal_flip_p.to_string(),
            "augment.vflip_p" => a.vertical_flip_p.to_string(),
            "augment.brightness" => format!("{},{}", a.brightness.0, a.brightness.1),
            "augment.contrast" => format!("{},{}", a.contrast.0, a.contrast.1),
            "train.epochs" => t.epochs.to_string(),
            "train.batch_size" => t.batch_size.to_string(),
            "train.optimizer" => match t.optimizer {
                OptimizerChoice::Adam => "adam".into(),
                OptimizerChoice::Sgd => "sgd".into(),
            },
            "train.learning_rate" => t.learning_rate.to_string(),
            "train.momentum" => t.momentum.to_string(),
            "scheduler.factor" => t.scheduler.factor.to_string(),
            "scheduler.patience" => t.scheduler.patience.to_string(),
            "scheduler.min_delta" => t.scheduler.min_delta.to_string(),
            "scheduler.min_lr" => t.scheduler.min_lr.to_string(),
            "cv.folds" => self.cv_folds.to_string(),
            "serve.host" => self.serve.host.clone(),
            "serve.port" => self.serve.port.to_string(),
            "serve.body_limit" => self.serve.body_limit.to_string(),
            "serve.cors_origin" => self.serve.cors_origin.clone(),
            "serve.max_concurrency" => self.serve.max_concurrency.to_string(),
            "bench.warmup" => self.bench.warmup.to_string(),
            "bench.runs" => self.bench.runs.to_string(),
            _ => return None,
        })
    }

    /// `key = value` for every key.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in Self::keys() {
            let _ = writeln!(s, "{k} = {}", self.get(&k).unwrap_or_default());
        }
        s
    }

    /// Applies `key = value` lines; `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Applies every variable named by [`env_name`]; other variables are ignored.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let vars: Vec<(String, String)> = vars
            .into_iter()
            .map(|(k, v)| (k.as_ref().to_string(), v.as_ref().to_string()))
            .collect();
        for key in Self::keys() {
            let name = env_name(&key);
            if let Some((_, v)) = vars.iter().find(|(k, _)| *k == name) {
                self.set(&key, v)
                    .map_err(|e| Error::Config(format!("{name}: {e}")))?;
            }
        }
        Ok(())
    }

    /// Defaults, then `file`, then environment, then `overrides` in order; validated.
    pub fn resolve<I, K, V>(
        file: Option<&Path>,
        env: I,
        overrides: &[(String, String)],
    ) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_text(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        }
        cfg.apply_env(env)?;
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.model.num_classes != 2 {
            return Err(Error::Config("model.num_classes must be 2".into()));
        }
        self.train.augment.validate()?;
        let t = &self.train;
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if t.epochs == 0 {
            return bad("train.epochs must be at least 1");
        }
        if t.batch_size == 0 {
            return bad("train.batch_size must be at least 1");
        }
        if !(t.learning_rate.is_finite() && t.learning_rate >= 0.0) {
            return bad("train.learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&t.momentum) {
            return bad("train.momentum must be in [0, 1)");
        }
        let s = &t.scheduler;
        if !(s.factor > 0.0 && s.factor < 1.0) {
            return bad("scheduler.factor must be in (0, 1)");
        }
        if !(s.min_lr >= 0.0 && s.min_delta >= 0.0) {
            return bad("scheduler.min_lr and scheduler.min_delta must be non-negative");
        }
        if self.cv_folds < 2 {
            return bad("cv.folds must be at least 2");
        }
        if self.serve.max_concurrency == 0 {
            return bad("serve.max_concurrency must be at least 1");
        }
        if self.bench.runs == 0 {
            return bad("bench.runs must be at least 1");
        }
        Ok(())
    }
}
