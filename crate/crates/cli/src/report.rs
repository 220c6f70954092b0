//! Run records, per-activation aggregates and the table files.
//!
//! Nothing written here depends on wall-clock time, so repeated deterministic
//! invocations produce byte-identical files.

use std::fmt::Write as _;

use serde::Serialize;
use softremish::trainer::{EpochMetrics, TrainConfig};
use softremish::ActivationKind;

/// One training run as it appears in the line-delimited metric files.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub activation: ActivationKind,
    pub repeat: usize,
    pub config: TrainConfig,
    pub param_count: usize,
    pub epochs: Vec<EpochMetrics>,
    /// `None` when every epoch completed.
    pub error: Option<String>,
}

#[derive(Serialize)]
struct EpochLine<'a> {
    record: &'static str,
    activation: &'a str,
    repeat: usize,
    seed: u64,
    #[serde(flatten)]
    metrics: &'a EpochMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub record: &'static str,
    pub activation: String,
    pub repeat: usize,
    pub seed: u64,
    pub status: &'static str,
    pub error: Option<String>,
    pub epochs_completed: usize,
    pub param_count: usize,
    pub max_val_accuracy: Option<f64>,
    pub min_train_loss: Option<f64>,
    pub min_val_loss: Option<f64>,
    pub config: TrainConfig,
}

fn extremum(epochs: &[EpochMetrics], f: impl Fn(&EpochMetrics) -> f64, max: bool) -> Option<f64> {
    epochs.iter().map(f).reduce(|a, b| if max { a.max(b) } else { a.min(b) })
}

impl RunRecord {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            record: "summary",
            activation: self.activation.slug(),
            repeat: self.repeat,
            seed: self.config.seed,
            status: if self.succeeded() { "ok" } else { "diverged" },
            error: self.error.clone(),
            epochs_completed: self.epochs.len(),
            param_count: self.param_count,
            max_val_accuracy: extremum(&self.epochs, |m| m.val_accuracy, true),
            min_train_loss: extremum(&self.epochs, |m| m.train_loss, false),
            min_val_loss: extremum(&self.epochs, |m| m.val_loss, false),
            config: self.config.clone(),
        }
    }

    /// One JSON object per epoch followed by the summary object.
    pub fn to_jsonl(&self) -> String {
        let slug = self.activation.slug();
        let mut out = String::new();
        for m in &self.epochs {
            let line = EpochLine {
                record: "epoch",
                activation: &slug,
                repeat: self.repeat,
                seed: self.config.seed,
                metrics: m,
            };
            out.push_str(&serde_json::to_string(&line).expect("plain data serializes"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&self.summary()).expect("plain data serializes"));
        out.push('\n');
        out
    }

    pub fn file_name(&self) -> String {
        format!("{}-seed{}.jsonl", self.activation.slug(), self.config.seed)
    }
}

/// Aggregates over the successful runs of one activation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivationSummary {
    pub activation: String,
    pub slug: String,
    pub runs: usize,
    pub failures: usize,
    pub best_val_accuracy: Option<f64>,
    pub mean_val_accuracy: Option<f64>,
    pub best_val_loss: Option<f64>,
    pub mean_val_loss: Option<f64>,
    pub best_train_loss: Option<f64>,
    pub mean_train_loss: Option<f64>,
    /// 1 = highest best validation accuracy; `None` if every run failed.
    pub rank: Option<usize>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// One row per activation in sweep order, ranked by best validation accuracy
/// (ties keep sweep order).
pub fn aggregate(activations: &[ActivationKind], runs: &[RunRecord]) -> Vec<ActivationSummary> {
    let mut rows: Vec<ActivationSummary> = activations
        .iter()
        .map(|&kind| {
            let mine: Vec<RunSummary> = runs.iter().filter(|r| r.activation == kind).map(RunRecord::summary).collect();
            let ok: Vec<&RunSummary> = mine.iter().filter(|s| s.status == "ok").collect();
            let acc: Vec<f64> = ok.iter().filter_map(|s| s.max_val_accuracy).collect();
            let val: Vec<f64> = ok.iter().filter_map(|s| s.min_val_loss).collect();
            let train: Vec<f64> = ok.iter().filter_map(|s| s.min_train_loss).collect();
            ActivationSummary {
                activation: kind.to_string(),
                slug: kind.slug(),
                runs: mine.len(),
                failures: mine.len() - ok.len(),
                best_val_accuracy: acc.iter().copied().reduce(f64::max),
                mean_val_accuracy: mean(&acc),
                best_val_loss: val.iter().copied().reduce(f64::min),
                mean_val_loss: mean(&val),
                best_train_loss: train.iter().copied().reduce(f64::min),
                mean_train_loss: mean(&train),
                rank: None,
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].best_val_accuracy.is_some()).collect();
    order.sort_by(|&a, &b| {
        rows[b].best_val_accuracy.partial_cmp(&rows[a].best_val_accuracy).expect("finite accuracies").then(a.cmp(&b))
    });
    for (rank, i) in order.into_iter().enumerate() {
        rows[i].rank = Some(rank + 1);
    }
    rows
}

/// Fixed-point with 9 significant digits, e.g. `0.991200000`.
pub fn sig9(v: f64) -> String {
    if !v.is_finite() {
        return "nan".into();
    }
    if v == 0.0 {
        return format!("{:.8}", 0.0);
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Scientific with 6 fractional digits, e.g. `3.137582e-8`.
pub fn sci6(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6e}")
    } else {
        "nan".into()
    }
}

fn opt(v: Option<f64>, f: fn(f64) -> String) -> String {
    v.map_or_else(|| "nan".to_string(), f)
}

pub const TABLE1_HEADER: &str = "activation,validation_accuracy,mean_validation_accuracy,runs,failures,rank";
pub const TABLE2_HEADER: &str =
    "activation,validation_loss,training_loss_min,mean_validation_loss,mean_training_loss_min";

/// Best and mean maximum validation accuracy per activation.
pub fn table1(rows: &[ActivationSummary]) -> String {
    let mut out = format!("{TABLE1_HEADER}\n");
    for r in rows {
        let rank = r.rank.map_or_else(String::new, |k| k.to_string());
        writeln!(
            out,
            "{},{},{},{},{},{rank}",
            r.activation,
            opt(r.best_val_accuracy, sig9),
            opt(r.mean_val_accuracy, sig9),
            r.runs,
            r.failures
        )
        .expect("writing to a String");
    }
    out
}

/// Best and mean minimum validation and training losses per activation.
pub fn table2(rows: &[ActivationSummary]) -> String {
    let mut out = format!("{TABLE2_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.activation,
            opt(r.best_val_loss, sci6),
            opt(r.best_train_loss, sci6),
            opt(r.mean_val_loss, sci6),
            opt(r.mean_train_loss, sci6)
        )
        .expect("writing to a String");
    }
    out
}

#[derive(Serialize)]
pub struct BenchReport<'a> {
    pub effective_config: &'a str,
    pub activations: &'a [ActivationSummary],
    /// Activation names from best to worst validation accuracy.
    pub ranking: Vec<String>,
    pub runs: Vec<RunSummary>,
}

impl<'a> BenchReport<'a> {
    pub fn new(effective_config: &'a str, activations: &'a [ActivationSummary], runs: &[RunRecord]) -> Self {
        let mut ranked: Vec<&ActivationSummary> = activations.iter().filter(|a| a.rank.is_some()).collect();
        ranked.sort_by_key(|a| a.rank);
        Self {
            effective_config,
            activations,
            ranking: ranked.into_iter().map(|a| a.activation.clone()).collect(),
            runs: runs.iter().map(RunRecord::summary).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data serializes");
        s.push('\n');
        s
    }
}

/// `x,y` rows with shortest round-trip decimal formatting.
pub fn curve_csv(xs: &[f64], ys: &[f64]) -> String {
    let mut out = String::from("x,y\n");
    for (x, y) in xs.iter().zip(ys) {
        writeln!(out, "{x},{y}").expect("writing to a String");
    }
    out
}
