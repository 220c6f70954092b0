//! Flat `key = value` configuration files, flag overrides and the resolved
//! effective configuration.
//!
//! Keys match the long flag names; `-` and `_` are interchangeable. Blank
//! lines and lines starting with `#` are ignored. The resolved configuration
//! renders back to the same format, so `effective_config.txt` can be passed to
//! `--config` to repeat a run exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use softremish::activations::DEFAULT_ALPHA;
use softremish::trainer::{DataSource, TrainConfig};
use softremish::{ActivationKind, DerivativeOrder, OptimizerConfig, OptimizerKind, Precision};
use thiserror::Error;

pub const KEYS: [&str; 19] = [
    "activation",
    "alpha",
    "epochs",
    "batch",
    "seed",
    "repeats",
    "lr",
    "optimizer",
    "data_dir",
    "synthetic",
    "data_seed",
    "sweep_dense",
    "deterministic",
    "precision",
    "out",
    "order",
    "range",
    "samples",
    "threads",
];

pub const DEFAULT_SYNTHETIC: usize = 2000;
pub const DEFAULT_DATA_SEED: u64 = 42;
pub const DEFAULT_OUT: &str = "results";
pub const DEFAULT_RANGE: (f64, f64) = (-5.0, 5.0);
pub const DEFAULT_SAMPLES: usize = 1001;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}, line {line}: {message}")]
    Line { path: String, line: usize, message: String },
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Every setting, each optional so that a file and the flags can be layered.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub activation: Option<Vec<ActivationKind>>,
    pub alpha: Option<f64>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub seed: Option<u64>,
    pub repeats: Option<usize>,
    pub lr: Option<f64>,
    pub optimizer: Option<OptimizerKind>,
    pub data_dir: Option<PathBuf>,
    pub synthetic: Option<usize>,
    pub data_seed: Option<u64>,
    pub sweep_dense: Option<bool>,
    pub deterministic: Option<bool>,
    pub precision: Option<Precision>,
    pub out: Option<PathBuf>,
    pub order: Option<DerivativeOrder>,
    pub range: Option<(f64, f64)>,
    pub samples: Option<usize>,
    /// Worker threads for non-deterministic sweeps; 0 means one per CPU.
    pub threads: Option<usize>,
}

fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

fn parse_num<T: FromStr>(value: &str, what: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("`{value}` is not a valid {what}"))
}

fn parse_bool(value: &str) -> Result<bool, String> {
    match value.to_ascii_lowercase().as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("`{value}` is not a boolean (expected true or false)")),
    }
}

/// Comma-separated activation names.
pub fn parse_activations(value: &str) -> Result<Vec<ActivationKind>, String> {
    let kinds = value
        .split(',')
        .map(|n| n.trim().parse::<ActivationKind>().map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    if kinds.is_empty() {
        return Err("activation list is empty".into());
    }
    Ok(kinds)
}

pub fn parse_order(value: &str) -> Result<DerivativeOrder, String> {
    parse_num::<u8>(value, "derivative order")
        .ok()
        .and_then(DerivativeOrder::from_index)
        .ok_or_else(|| format!("`{value}` is not a derivative order (expected 0, 1 or 2)"))
}

impl Settings {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        match normalize_key(key).as_str() {
            "activation" => self.activation = Some(parse_activations(value)?),
            "alpha" => self.alpha = Some(parse_num(value, "alpha")?),
            "epochs" => self.epochs = Some(parse_num(value, "epoch count")?),
            "batch" => self.batch = Some(parse_num(value, "batch size")?),
            "seed" => self.seed = Some(parse_num(value, "seed")?),
            "repeats" => self.repeats = Some(parse_num(value, "repeat count")?),
            "lr" => self.lr = Some(parse_num(value, "learning rate")?),
            "optimizer" => self.optimizer = Some(value.parse()?),
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "synthetic" => self.synthetic = Some(parse_num(value, "sample count")?),
            "data_seed" => self.data_seed = Some(parse_num(value, "seed")?),
            "sweep_dense" => self.sweep_dense = Some(parse_bool(value)?),
            "deterministic" => self.deterministic = Some(parse_bool(value)?),
            "precision" => self.precision = Some(value.parse()?),
            "out" => self.out = Some(PathBuf::from(value)),
            "order" => self.order = Some(parse_order(value)?),
            "range" => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                let [lo, hi] = parts[..] else {
                    return Err(format!("range needs two numbers, got `{value}`"));
                };
                self.range = Some((parse_num(lo, "number")?, parse_num(hi, "number")?));
            }
            "samples" => self.samples = Some(parse_num(value, "sample count")?),
            "threads" => self.threads = Some(parse_num(value, "thread count")?),
            other => return Err(format!("unknown key `{other}` (valid keys: {})", KEYS.join(", "))),
        }
        Ok(())
    }

    /// Parses config text; `origin` names the source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let mut settings = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| ConfigError::Line { path: origin.to_string(), line: i + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
            settings.set(key, value).map_err(err)?;
        }
        Ok(settings)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// `self` with every value present in `flags` replaced. A data source given
    /// on the command line replaces the file's data source as a whole.
    pub fn overlay(mut self, flags: Settings) -> Settings {
        if flags.data_dir.is_some() || flags.synthetic.is_some() {
            self.data_dir = None;
            self.synthetic = None;
        }
        macro_rules! take {
            ($($field:ident),*) => { $( if flags.$field.is_some() { self.$field = flags.$field; } )* };
        }
        take!(
            activation,
            alpha,
            epochs,
            batch,
            seed,
            repeats,
            lr,
            optimizer,
            data_dir,
            synthetic,
            data_seed,
            sweep_dense,
            deterministic,
            precision,
            out,
            order,
            range,
            samples,
            threads
        );
        self
    }
}

/// Which subcommand a configuration is resolved for; decides defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Train,
    Bench,
    Curves,
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Effective {
    pub activations: Vec<ActivationKind>,
    pub alpha: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub repeats: usize,
    pub optimizer: OptimizerConfig,
    pub data: DataSource,
    pub sweep_dense: bool,
    pub deterministic: bool,
    pub precision: Precision,
    pub out: PathBuf,
    pub orders: Vec<DerivativeOrder>,
    pub range: (f64, f64),
    pub samples: usize,
    pub threads: usize,
}

impl Effective {
    pub fn resolve(s: &Settings, command: Command) -> Result<Self, ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let alpha = s.alpha.unwrap_or(DEFAULT_ALPHA);
        let default_kinds: Vec<ActivationKind> = match command {
            Command::Train => vec![ActivationKind::SoftReMish { alpha: DEFAULT_ALPHA }],
            Command::Bench => ActivationKind::BENCHMARK.to_vec(),
            Command::Curves => ActivationKind::ALL.to_vec(),
        };
        let activations = s
            .activation
            .clone()
            .unwrap_or(default_kinds)
            .into_iter()
            .map(|k| k.with_alpha(alpha))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if command == Command::Train && activations.len() != 1 {
            return invalid(format!("train takes exactly one activation, got {}", activations.len()));
        }
        let mut optimizer = match s.optimizer.unwrap_or(OptimizerKind::Adam) {
            OptimizerKind::Adam => OptimizerConfig::default(),
            OptimizerKind::Sgd => OptimizerConfig::sgd(OptimizerConfig::default().learning_rate),
        };
        if let Some(lr) = s.lr {
            optimizer.learning_rate = lr;
        }
        if s.data_dir.is_some() && s.synthetic.is_some() {
            return invalid("data_dir and synthetic are mutually exclusive".into());
        }
        let data = match &s.data_dir {
            Some(dir) => DataSource::Mnist { dir: dir.clone() },
            None => DataSource::Synthetic {
                samples: s.synthetic.unwrap_or(DEFAULT_SYNTHETIC),
                seed: s.data_seed.unwrap_or(DEFAULT_DATA_SEED),
            },
        };
        let defaults = TrainConfig::default();
        let eff = Effective {
            activations,
            alpha,
            epochs: s.epochs.unwrap_or(defaults.epochs),
            batch: s.batch.unwrap_or(defaults.batch_size),
            seed: s.seed.unwrap_or(defaults.seed),
            repeats: s.repeats.unwrap_or(1),
            optimizer,
            data,
            sweep_dense: s.sweep_dense.unwrap_or(defaults.sweep_dense),
            deterministic: s.deterministic.unwrap_or(true),
            precision: s.precision.unwrap_or(defaults.precision),
            out: s.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            orders: s.order.map_or_else(|| DerivativeOrder::ALL.to_vec(), |o| vec![o]),
            range: s.range.unwrap_or(DEFAULT_RANGE),
            samples: s.samples.unwrap_or(DEFAULT_SAMPLES),
            threads: s.threads.unwrap_or(0),
        };
        eff.validate(command)?;
        Ok(eff)
    }

    fn validate(&self, command: Command) -> Result<(), ConfigError> {
        let check = |ok: bool, m: &str| if ok { Ok(()) } else { Err(ConfigError::Invalid(m.to_string())) };
        match command {
            Command::Train | Command::Bench => {
                check(self.epochs >= 1, "epochs must be at least 1")?;
                check(self.batch >= 1, "batch must be at least 1")?;
                check(self.repeats >= 1, "repeats must be at least 1")?;
                check(!matches!(self.data, DataSource::Synthetic { samples: 0, .. }), "synthetic must be at least 1")?;
                self.optimizer.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            }
            Command::Curves => {
                let (lo, hi) = self.range;
                check(lo.is_finite() && hi.is_finite() && lo < hi, "range must be two finite numbers with lo < hi")?;
                check(self.samples >= 2, "samples must be at least 2")?;
            }
        }
        Ok(())
    }

    /// Training configuration for one run of `activation` with `seed`.
    pub fn train_config(&self, activation: ActivationKind, seed: u64) -> TrainConfig {
        TrainConfig {
            activation,
            sweep_dense: self.sweep_dense,
            epochs: self.epochs,
            batch_size: self.batch,
            seed,
            optimizer: self.optimizer,
            precision: self.precision,
            data: self.data.clone(),
            deterministic: self.deterministic,
        }
    }

    /// `key=value` text that parses back to these settings. The output
    /// directory is left out so that identical experiments written to
    /// different places echo identical configurations.
    pub fn render(&self) -> String {
        let names: Vec<&str> = self.activations.iter().map(ActivationKind::name).collect();
        let mut out = String::new();
        let mut line = |k: &str, v: String| writeln!(out, "{k}={v}").expect("writing to a String");
        line("activation", names.join(","));
        line("alpha", self.alpha.to_string());
        line("epochs", self.epochs.to_string());
        line("batch", self.batch.to_string());
        line("seed", self.seed.to_string());
        line("repeats", self.repeats.to_string());
        line("optimizer", self.optimizer.kind.to_string());
        line("lr", self.optimizer.learning_rate.to_string());
        match &self.data {
            DataSource::Mnist { dir } => line("data_dir", dir.display().to_string()),
            DataSource::Synthetic { samples, seed } => {
                line("synthetic", samples.to_string());
                line("data_seed", seed.to_string());
            }
        }
        line("sweep_dense", self.sweep_dense.to_string());
        line("deterministic", self.deterministic.to_string());
        line("precision", self.precision.to_string());
        if let [order] = self.orders[..] {
            line("order", order.index().to_string());
        }
        line("range", format!("{} {}", self.range.0, self.range.1));
        line("samples", self.samples.to_string());
        line("threads", self.threads.to_string());
        out
    }
}
