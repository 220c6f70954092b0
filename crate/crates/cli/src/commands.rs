use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use softremish::data::DataError;
use softremish::trainer::{build_model, train_with, DataSource, TrainError};
use softremish::{ActivationKind, Dataset, Precision, Scalar};
use thiserror::Error;

use crate::config::Effective;
use crate::report::{aggregate, curve_csv, sci6, sig9, table1, table2, BenchReport, RunRecord};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{0}")]
    Diverged(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Diverged(_) => 4,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| CliError::Io { path: parent.to_path_buf(), source })?;
    }
    std::fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// A missing directory is a usage problem; problems with files inside it are
/// data errors.
fn load<F: Scalar>(data: &DataSource) -> Result<(Dataset<F>, Dataset<F>), CliError> {
    if let DataSource::Mnist { dir } = data {
        if !dir.is_dir() {
            return Err(CliError::Usage(format!("data directory {} does not exist", dir.display())));
        }
    }
    Ok(data.load()?)
}

/// One training run; failures are captured in the record.
fn run_one<F: Scalar>(
    e: &Effective,
    activation: ActivationKind,
    repeat: usize,
    train_set: &Dataset<F>,
    val_set: &Dataset<F>,
) -> RunRecord {
    let config = e.train_config(activation, e.seed + repeat as u64);
    let tag = format!("[{} seed {}]", activation.slug(), config.seed);
    let mut epochs = Vec::new();
    let start = Instant::now();
    let result = train_with(&config, train_set, val_set, |m| {
        println!(
            "{tag} epoch {}/{} train_loss={} val_loss={} val_accuracy={}",
            m.epoch,
            e.epochs,
            sci6(m.train_loss),
            sci6(m.val_loss),
            sig9(m.val_accuracy)
        );
        epochs.push(*m);
    });
    let elapsed = start.elapsed().as_secs_f64();
    match result {
        Ok(report) => {
            println!("{tag} done in {elapsed:.1}s, max val accuracy {}", sig9(report.max_val_accuracy));
            RunRecord {
                activation,
                repeat,
                config,
                param_count: report.param_count,
                epochs: report.epochs,
                error: None,
            }
        }
        Err(err) => {
            println!("{tag} failed after {elapsed:.1}s: {err}");
            let param_count = build_model::<F>(activation, e.sweep_dense, config.seed).param_count();
            let error = match err {
                TrainError::Diverged { .. } => err.to_string(),
                other => format!("run failed: {other}"),
            };
            RunRecord { activation, repeat, config, param_count, epochs, error: Some(error) }
        }
    }
}

pub fn train(e: &Effective) -> Result<(), CliError> {
    let record = match e.precision {
        Precision::Single => {
            let (tr, va) = load::<f32>(&e.data)?;
            run_one(e, e.activations[0], 0, &tr, &va)
        }
        Precision::Double => {
            let (tr, va) = load::<f64>(&e.data)?;
            run_one(e, e.activations[0], 0, &tr, &va)
        }
    };
    write_file(&e.out.join("effective_config.txt"), &e.render())?;
    let metrics = e.out.join("metrics.jsonl");
    write_file(&metrics, &record.to_jsonl())?;
    let s = record.summary();
    println!("activation:        {}", record.activation);
    println!("epochs completed:  {}/{}", s.epochs_completed, e.epochs);
    if let (Some(acc), Some(tl), Some(vl)) = (s.max_val_accuracy, s.min_train_loss, s.min_val_loss) {
        println!("max val accuracy:  {}", sig9(acc));
        println!("min train loss:    {}", sci6(tl));
        println!("min val loss:      {}", sci6(vl));
    }
    println!("metrics:           {}", metrics.display());
    match record.error {
        Some(err) => Err(CliError::Diverged(err)),
        None => Ok(()),
    }
}

fn sweep<F: Scalar>(e: &Effective, train_set: &Dataset<F>, val_set: &Dataset<F>) -> Vec<RunRecord> {
    let jobs: Vec<(ActivationKind, usize)> =
        e.activations.iter().flat_map(|&k| (0..e.repeats).map(move |r| (k, r))).collect();
    let workers = match (e.deterministic, e.threads) {
        (true, _) => 1,
        (false, 0) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        (false, n) => n,
    }
    .min(jobs.len());
    if workers <= 1 {
        return jobs.iter().map(|&(k, r)| run_one(e, k, r, train_set, val_set)).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<RunRecord>>> = Mutex::new(vec![None; jobs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(k, r)) = jobs.get(i) else { break };
                let record = run_one(e, k, r, train_set, val_set);
                results.lock().expect("no worker panics while holding the lock")[i] = Some(record);
            });
        }
    });
    results.into_inner().expect("workers joined").into_iter().map(|r| r.expect("every job ran")).collect()
}

pub fn bench(e: &Effective) -> Result<(), CliError> {
    let runs = match e.precision {
        Precision::Single => {
            let (tr, va) = load::<f32>(&e.data)?;
            sweep(e, &tr, &va)
        }
        Precision::Double => {
            let (tr, va) = load::<f64>(&e.data)?;
            sweep(e, &tr, &va)
        }
    };
    let config_text = e.render();
    write_file(&e.out.join("effective_config.txt"), &config_text)?;
    for run in &runs {
        write_file(&e.out.join("runs").join(run.file_name()), &run.to_jsonl())?;
    }
    let rows = aggregate(&e.activations, &runs);
    let (t1, t2) = (table1(&rows), table2(&rows));
    write_file(&e.out.join("table1_accuracy.csv"), &t1)?;
    write_file(&e.out.join("table2_loss.csv"), &t2)?;
    write_file(&e.out.join("bench_report.json"), &BenchReport::new(&config_text, &rows, &runs).to_json())?;
    println!("\n{t1}\n{t2}");
    println!("outputs written to {}", e.out.display());
    let failed: usize = rows.iter().map(|r| r.failures).sum();
    if failed > 0 {
        return Err(CliError::Diverged(format!("{failed} of {} runs failed; see the run records", runs.len())));
    }
    Ok(())
}

pub fn curves(e: &Effective) -> Result<(), CliError> {
    let (lo, hi) = e.range;
    write_file(&e.out.join("effective_config.txt"), &e.render())?;
    for &kind in &e.activations {
        for &order in &e.orders {
            let curve = kind.sample_curve(order, lo, hi, e.samples).map_err(|err| CliError::Usage(err.to_string()))?;
            let path = e.out.join(format!("fig{}_{}.csv", order.index() + 1, kind.slug()));
            write_file(&path, &curve_csv(&curve.xs, &curve.ys))?;
            println!("{}", path.display());
        }
    }
    Ok(())
}
