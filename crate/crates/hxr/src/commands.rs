//! The harness commands as library functions; `main` only parses flags and
//! writes files.

use std::fmt::Write as _;
use std::path::Path;

use hxr_core::data::{synth_set, Shot, ShotSet};
use hxr_core::metrics::{evaluate_set, spearman, sum_abs_loss, MetricReport};
use hxr_core::pipeline::{train_esn, train_llm, train_ngrc, EpochRecord, Model, TrainTrace};
use hxr_core::reservoir::ReservoirKind;
use hxr_core::service::ReservoirService;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::shots::{load_shots, save_shots};

pub type Service<'a> = Option<&'a dyn ReservoirService>;

/// Generates `config.generator.n_shots` shots and writes them to `out`.
pub fn gen_data(config: &RunConfig, out: &Path) -> Result<ShotSet> {
    let set = synth_set(&config.generator)?;
    save_shots(&set, out)?;
    Ok(set)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: ShotSet,
    pub val: ShotSet,
    pub test: ShotSet,
}

/// Loads `data.shots`, splits it, and truncates the training split to
/// `data.train_samples`.
pub fn load_splits(config: &RunConfig) -> Result<Splits> {
    let all = load_shots(&config.data.shots)?;
    let (mut train, val, test) = hxr_core::data::split_shots(&all, config.data.split, config.data.split_seed)?;
    if let Some(n) = config.data.train_samples {
        if n > train.len() {
            return Err(Error::Config(format!(
                "data.train_samples = {n} but the training split has {} shots",
                train.len()
            )));
        }
        train.shots.truncate(n);
    }
    Ok(Splits { train, val, test })
}

fn need_service<'a>(service: Service<'a>) -> Result<&'a dyn ReservoirService> {
    service.ok_or_else(|| Error::Config("the llm reservoir needs an endpoint".into()))
}

/// Trains the configured reservoir. Classical traces have one row whose
/// losses are mean per-shot `Σ|p − y|` in raw units (in-sample fit and
/// validation forecast); language-model traces hold one row per epoch on
/// normalized targets.
pub fn train(config: &RunConfig, splits: &Splits, service: Service<'_>) -> Result<Checkpoint> {
    let (model, trace) = match config.reservoir.kind {
        ReservoirKind::Llm => {
            let prompt = config.prompt_builder()?;
            let (m, trace) = train_llm(
                need_service(service)?,
                &splits.train,
                &splits.val,
                &config.pipeline(),
                &prompt,
            )?;
            (Model::Llm(m), trace)
        }
        kind => {
            let m = if kind == ReservoirKind::Esn {
                train_esn(&splits.train, &config.esn())?
            } else {
                train_ngrc(&splits.train, &config.reservoir.ngrc)?
            };
            let train_loss = m.train_loss(&splits.train)?;
            let val_loss = if splits.val.is_empty() {
                None
            } else {
                let mut total = 0.0;
                for s in splits.val.iter() {
                    total += sum_abs_loss(&m.forecast(&s.laser)?, &s.hxr)?;
                }
                Some(total / splits.val.len() as f64)
            };
            let trace = TrainTrace {
                epochs: vec![EpochRecord {
                    epoch: 1,
                    train_loss,
                    val_loss,
                }],
                best_epoch: 1,
            };
            (Model::Classical(m), trace)
        }
    };
    Ok(Checkpoint::new(config.clone(), model, Some(trace)))
}

/// Training loss of the kept epoch.
pub fn reported_train_loss(trace: &TrainTrace) -> f64 {
    trace
        .epochs
        .iter()
        .find(|r| r.epoch == trace.best_epoch)
        .map_or(f64::NAN, |r| r.train_loss)
}

pub fn trace_tsv(trace: &TrainTrace) -> String {
    let mut out = String::from("epoch\ttrain_loss\tval_loss\n");
    for r in &trace.epochs {
        let val = r.val_loss.map_or_else(|| "nan".to_owned(), |v| format!("{v:.16e}"));
        let _ = writeln!(out, "{}\t{:.16e}\t{val}", r.epoch, r.train_loss);
    }
    out
}

pub fn forecast_set(model: &Model, set: &ShotSet, service: Service<'_>) -> Result<Vec<Vec<f64>>> {
    set.iter().map(|s| Ok(model.forecast(s, service)?)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricReport,
    pub predictions: Vec<Vec<f64>>,
}

pub fn evaluate(model: &Model, set: &ShotSet, floor: f64, service: Service<'_>) -> Result<Evaluation> {
    let predictions = forecast_set(model, set, service)?;
    let truth: Vec<Vec<f64>> = set.iter().map(|s| s.hxr.clone()).collect();
    Ok(Evaluation {
        report: evaluate_set(&predictions, &truth, floor)?,
        predictions,
    })
}

/// Train on the training split, evaluate on the test split.
pub fn train_and_eval(config: &RunConfig, splits: &Splits, service: Service<'_>) -> Result<(Checkpoint, Evaluation)> {
    let ckpt = train(config, splits, service)?;
    let eval = evaluate(&ckpt.model, &splits.test, config.metrics.floor, service)?;
    Ok((ckpt, eval))
}

/// Columnar `shot_id time_step ground_truth prediction error` table.
pub fn predictions_tsv(set: &ShotSet, predictions: &[Vec<f64>]) -> String {
    let mut out = String::from("shot_id\ttime_step\tground_truth\tprediction\terror\n");
    for (shot, pred) in set.iter().zip(predictions) {
        for (t, (g, p)) in shot.hxr.iter().zip(pred).enumerate() {
            let _ = writeln!(out, "{}\t{t}\t{g:.16e}\t{p:.16e}\t{:.16e}", shot.shot_id, (p - g).abs());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub cae: f64,
    pub top1_mae: f64,
    pub top5_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub report: MetricReport,
}

/// Per-seed reports with their mean and sample standard deviation
/// (0 for a single seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSeedReport {
    pub runs: Vec<SeedRun>,
    pub mean: MetricStats,
    pub std: MetricStats,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(runs: Vec<SeedRun>) -> Result<MultiSeedReport> {
    if runs.is_empty() {
        return Err(Error::Config("no seeds given".into()));
    }
    let stat = |f: fn(&MetricReport) -> f64| mean_std(&runs.iter().map(|r| f(&r.report)).collect::<Vec<_>>());
    let (cae, top1, top5) = (stat(|r| r.cae), stat(|r| r.top1_mae), stat(|r| r.top5_mae));
    Ok(MultiSeedReport {
        mean: MetricStats {
            cae: cae.0,
            top1_mae: top1.0,
            top5_mae: top5.0,
        },
        std: MetricStats {
            cae: cae.1,
            top1_mae: top1.1,
            top5_mae: top5.1,
        },
        runs,
    })
}

/// Independent train-and-evaluate runs, one per seed.
pub fn eval_seeds(config: &RunConfig, splits: &Splits, seeds: &[u64], service: Service<'_>) -> Result<MultiSeedReport> {
    let runs = seeds
        .iter()
        .map(|&seed| {
            let (_, eval) = train_and_eval(&config.with_seed(seed), splits, service)?;
            Ok(SeedRun {
                seed,
                report: eval.report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    summarize(runs)
}

/// Prediction of one shot, with optional per-step confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub shot_id: String,
    pub ground_truth: Vec<f64>,
    pub prediction: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<Vec<f64>>,
    /// Spearman correlation of per-step absolute error with confidence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_confidence_spearman: Option<f64>,
}

pub fn predict(model: &Model, shot: &Shot, with_confidence: bool, service: Service<'_>) -> Result<PredictionRecord> {
    let (prediction, confidence) = if with_confidence {
        let (p, c) = model.forecast_with_confidence(shot, service)?;
        (p, Some(c))
    } else {
        (model.forecast(shot, service)?, None)
    };
    let error_confidence_spearman = match &confidence {
        Some(c) => {
            let errors: Vec<f64> = prediction.iter().zip(&shot.hxr).map(|(p, g)| (p - g).abs()).collect();
            spearman(&errors, c)?
        }
        None => None,
    };
    Ok(PredictionRecord {
        shot_id: shot.shot_id.clone(),
        ground_truth: shot.hxr.clone(),
        prediction,
        confidence,
        error_confidence_spearman,
    })
}

/// Columnar `time_step ground_truth prediction error [confidence]` table.
pub fn prediction_tsv(rec: &PredictionRecord) -> String {
    let mut out = String::from("time_step\tground_truth\tprediction\terror");
    out.push_str(if rec.confidence.is_some() {
        "\tconfidence\n"
    } else {
        "\n"
    });
    for (t, (g, p)) in rec.ground_truth.iter().zip(&rec.prediction).enumerate() {
        let _ = write!(out, "{t}\t{g:.16e}\t{p:.16e}\t{:.16e}", (p - g).abs());
        if let Some(c) = &rec.confidence {
            let _ = write!(out, "\t{:.16e}", c[t]);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Samples,
    Epochs,
}

impl SweepAxis {
    pub fn default_values(self) -> Vec<usize> {
        match self {
            SweepAxis::Samples => vec![80, 60, 40, 20],
            SweepAxis::Epochs => vec![100, 50, 20, 10],
        }
    }

    /// The configuration of one cell.
    pub fn apply(self, config: &RunConfig, value: usize) -> RunConfig {
        let mut c = config.clone();
        match self {
            SweepAxis::Samples => c.data.train_samples = Some(value),
            SweepAxis::Epochs => c.train.epochs = value,
        }
        c
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "samples" => Ok(SweepAxis::Samples),
            "epochs" => Ok(SweepAxis::Epochs),
            other => Err(Error::Config(format!(
                "unknown sweep axis `{other}` (expected samples or epochs)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: usize,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

/// One cell: exactly what `train` followed by `eval` computes for the
/// cell's configuration.
pub fn sweep_cell(config: &RunConfig, service: Service<'_>) -> Result<MetricReport> {
    config.validate()?;
    let splits = load_splits(config)?;
    Ok(train_and_eval(config, &splits, service)?.1.report)
}

/// Runs the cells concurrently, one thread each, rows in `values` order.
pub fn sweep(config: &RunConfig, axis: SweepAxis, values: &[usize], service: Service<'_>) -> Result<SweepTable> {
    let results: Vec<Result<MetricReport>> = std::thread::scope(|scope| {
        let handles: Vec<_> = values
            .iter()
            .map(|&v| {
                let cell = axis.apply(config, v);
                scope.spawn(move || sweep_cell(&cell, service))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::Config("sweep cell panicked".into())))
            })
            .collect()
    });
    let rows = values
        .iter()
        .zip(results)
        .map(|(&value, r)| Ok(SweepRow { value, report: r? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { axis, rows })
}

pub fn sweep_tsv(table: &SweepTable) -> String {
    let label = match table.axis {
        SweepAxis::Samples => "samples",
        SweepAxis::Epochs => "epochs",
    };
    let mut out = format!("{label}\tcae\ttop1_mae\ttop5_mae\n");
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{}\t{:.16e}\t{:.16e}\t{:.16e}",
            r.value, r.report.cae, r.report.top1_mae, r.report.top5_mae
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sweep_axes() {
        assert_eq!(SweepAxis::Samples.default_values(), vec![80, 60, 40, 20]);
        assert_eq!(SweepAxis::Epochs.default_values(), vec![100, 50, 20, 10]);
        let c = RunConfig::default();
        assert_eq!(SweepAxis::Samples.apply(&c, 40).data.train_samples, Some(40));
        assert_eq!(SweepAxis::Epochs.apply(&c, 10).train.epochs, 10);
        assert!("time".parse::<SweepAxis>().is_err());
    }
}
