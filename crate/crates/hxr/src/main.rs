//! `hxr` command-line harness.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use hxr::checkpoint::Checkpoint;
use hxr::client::{open_service, ENDPOINT_ENV};
use hxr::commands::{self, Splits, SweepAxis};
use hxr::config::RunConfig;
use hxr::conformance::{Http, InProcess, Mode, Transport};
use hxr::json;
use hxr::{Error, Result};
use hxr_core::mock::MockReservoir;
use hxr_core::reservoir::ReservoirKind;
use hxr_core::service::ReservoirService;

#[derive(Parser)]
#[command(
    name = "hxr",
    version,
    about = "Reservoir forecasting of hard-X-ray emission from laser pulse shapes"
)]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Reservoir backend: esn, ngrc or llm.
    #[arg(long, global = true)]
    reservoir: Option<ReservoirKind>,
    /// Hidden-state service: `inproc` or an http:// base URL.
    #[arg(long, global = true, env = ENDPOINT_ENV)]
    endpoint: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutDir {
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic shot file.
    GenData {
        /// Shot file to write; `data.shots` by default.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        n_shots: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train and write `checkpoint.json` and `trace.tsv`.
    Train {
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Evaluate a checkpoint on the test split, or train and evaluate once
    /// per seed.
    Eval {
        #[arg(long, conflicts_with = "seeds")]
        checkpoint: Option<PathBuf>,
        /// Comma-separated seeds; reports mean and standard deviation.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Also write the per-step predictions.
        #[arg(long)]
        predictions: bool,
        #[command(flatten)]
        out: OutDir,
    },
    /// Predict one shot.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Shot id; the first test-split shot by default.
        #[arg(long)]
        shot: Option<String>,
        /// Add the per-step confidence column.
        #[arg(long)]
        confidence: bool,
        #[command(flatten)]
        out: OutDir,
    },
    /// Train-and-evaluate grid over sample or epoch counts.
    Sweep {
        /// `samples` (training shots) or `epochs`.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated cell values; 80,60,40,20 or 100,50,20,10 by default.
        #[arg(long, value_delimiter = ',')]
        values: Vec<usize>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Replay the protocol fixture corpus against the endpoint.
    Conformance {
        /// Directory of recorded fixtures.
        #[arg(long)]
        fixtures: PathBuf,
        /// Check schema, shapes and bounds instead of exact payloads.
        #[arg(long)]
        structural: bool,
        /// Re-record the corpus from the endpoint instead of checking it.
        #[arg(long, conflicts_with = "structural")]
        record: bool,
    },
    /// Serve the mock reservoir over HTTP until interrupted.
    ServeMock {
        #[arg(long, default_value = "127.0.0.1:8765")]
        addr: String,
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::file(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, &json::to_vec(value).map_err(|e| Error::file(path, e))?)
}

struct Ctx {
    config: RunConfig,
    endpoint: String,
}

impl Ctx {
    fn service(&self, kind: ReservoirKind) -> Result<Option<Box<dyn ReservoirService>>> {
        if kind != ReservoirKind::Llm {
            return Ok(None);
        }
        let r = &self.config.reservoir;
        open_service(&self.endpoint, &r.mock, &r.client).map(Some)
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(kind) = cli.reservoir {
        config.reservoir.kind = kind;
    }
    let endpoint = config.endpoint(cli.endpoint.as_deref());
    let mut ctx = Ctx { config, endpoint };
    match cli.command {
        Command::GenData { out, n_shots, seed } => {
            let g = &mut ctx.config.generator;
            g.n_shots = n_shots.unwrap_or(g.n_shots);
            g.seed = seed.unwrap_or(g.seed);
            ctx.config.validate()?;
            let path = out.unwrap_or_else(|| ctx.config.data.shots.clone());
            let set = commands::gen_data(&ctx.config, &path)?;
            println!("wrote {} shots to {}", set.len(), path.display());
        }
        Command::Train { seed, out } => {
            if let Some(s) = seed {
                ctx.config.seed = s;
            }
            ctx.config.validate()?;
            let splits = commands::load_splits(&ctx.config)?;
            let service = ctx.service(ctx.config.reservoir.kind)?;
            let ckpt = commands::train(&ctx.config, &splits, service.as_deref())?;
            let ckpt_path = out.out.join("checkpoint.json");
            ckpt.save(&ckpt_path)?;
            let trace = ckpt.trace.as_ref().expect("train records a trace");
            write(&out.out.join("trace.tsv"), commands::trace_tsv(trace).as_bytes())?;
            println!(
                "{} trained on {} shots; train loss {:.6e} (epoch {}); checkpoint {}",
                ctx.config.reservoir.kind,
                splits.train.len(),
                commands::reported_train_loss(trace),
                trace.best_epoch,
                ckpt_path.display()
            );
        }
        Command::Eval {
            checkpoint,
            seeds,
            predictions,
            out,
        } => {
            ctx.config.validate()?;
            let splits = commands::load_splits(&ctx.config)?;
            if let Some(path) = checkpoint {
                let ckpt = Checkpoint::load(&path)?;
                let service = ctx.service(ckpt.model.kind())?;
                let eval = commands::evaluate(&ckpt.model, &splits.test, ctx.config.metrics.floor, service.as_deref())?;
                write_json(&out.out.join("report.json"), &eval.report)?;
                if predictions {
                    write(
                        &out.out.join("predictions.tsv"),
                        commands::predictions_tsv(&splits.test, &eval.predictions).as_bytes(),
                    )?;
                }
                let r = eval.report;
                println!(
                    "CAE {:.6} top-1 MAE {:.6} top-5 MAE {:.6} ({} shots)",
                    r.cae, r.top1_mae, r.top5_mae, r.n_shots
                );
            } else {
                let seeds = if seeds.is_empty() { vec![ctx.config.seed] } else { seeds };
                if predictions {
                    return Err(Error::Config("--predictions needs --checkpoint".into()));
                }
                let service = ctx.service(ctx.config.reservoir.kind)?;
                let report = commands::eval_seeds(&ctx.config, &splits, &seeds, service.as_deref())?;
                write_json(&out.out.join("report.json"), &report)?;
                let (m, s) = (report.mean, report.std);
                println!(
                    "CAE {:.6} ± {:.6}  top-1 MAE {:.6} ± {:.6}  top-5 MAE {:.6} ± {:.6}  over seeds {seeds:?}",
                    m.cae, s.cae, m.top1_mae, s.top1_mae, m.top5_mae, s.top5_mae
                );
            }
        }
        Command::Predict {
            checkpoint,
            shot,
            confidence,
            out,
        } => {
            ctx.config.validate()?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let target = pick_shot(&ctx.config, shot.as_deref())?;
            let service = ctx.service(ckpt.model.kind())?;
            let rec = commands::predict(&ckpt.model, &target, confidence, service.as_deref())?;
            let stem = out.out.join(format!("predict_{}", rec.shot_id));
            write_json(&stem.with_extension("json"), &rec)?;
            write(&stem.with_extension("tsv"), commands::prediction_tsv(&rec).as_bytes())?;
            if let Some(rho) = rec.error_confidence_spearman {
                println!("spearman(error, confidence) = {rho:.4}");
            }
            println!("wrote {}", stem.with_extension("tsv").display());
        }
        Command::Sweep { axis, values, out } => {
            ctx.config.validate()?;
            let values = if values.is_empty() {
                axis.default_values()
            } else {
                values
            };
            let service = ctx.service(ctx.config.reservoir.kind)?;
            let table = commands::sweep(&ctx.config, axis, &values, service.as_deref())?;
            let tsv = commands::sweep_tsv(&table);
            write(
                &out.out.join(format!("sweep_{}.tsv", values_label(axis))),
                tsv.as_bytes(),
            )?;
            print!("{tsv}");
        }
        Command::Conformance {
            fixtures,
            structural,
            record,
        } => {
            ctx.config.validate()?;
            if ctx.endpoint == hxr::client::INPROC {
                let mock = MockReservoir::new(ctx.config.reservoir.mock.clone())?;
                conformance(&InProcess(mock), &fixtures, structural, record)?;
            } else {
                conformance(&Http::new(&ctx.endpoint), &fixtures, structural, record)?;
            }
        }
        Command::ServeMock { addr, workers } => {
            ctx.config.validate()?;
            let mock = Arc::new(MockReservoir::new(ctx.config.reservoir.mock.clone())?);
            let handle = hxr::server::serve(mock, &addr, workers)?;
            let stop = handle.stopper();
            ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst))
                .map_err(|e| Error::Transport(format!("cannot install signal handler: {e}")))?;
            println!("serving {} on {}", ctx.config.reservoir.mock.model_id, handle.url());
            handle.wait();
        }
    }
    Ok(())
}

fn conformance<T: Transport>(transport: &T, dir: &Path, structural: bool, record: bool) -> Result<()> {
    if record {
        let corpus = hxr::conformance::record(transport, &hxr::conformance::server_info(transport)?)?;
        hxr::conformance::save_corpus(&corpus, dir)?;
        println!("recorded {} fixtures in {}", corpus.len(), dir.display());
        return Ok(());
    }
    let corpus = hxr::conformance::load_corpus(dir)?;
    let mode = if structural { Mode::Structural } else { Mode::Exact };
    let results = hxr::conformance::run_corpus(transport, &corpus, mode)?;
    let mut failed = 0;
    for r in &results {
        match &r.failure {
            None => println!("ok    {}", r.name),
            Some(why) => {
                failed += 1;
                println!("FAIL  {}: {why}", r.name);
            }
        }
    }
    println!(
        "{} of {} fixtures passed ({mode:?})",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        return Err(Error::Schema(format!("{failed} conformance fixtures failed")));
    }
    Ok(())
}

fn values_label(axis: SweepAxis) -> &'static str {
    match axis {
        SweepAxis::Samples => "samples",
        SweepAxis::Epochs => "epochs",
    }
}

fn pick_shot(config: &RunConfig, id: Option<&str>) -> Result<hxr_core::data::Shot> {
    match id {
        Some(id) => hxr::shots::load_shots(&config.data.shots)?
            .shots
            .into_iter()
            .find(|s| s.shot_id == id)
            .ok_or_else(|| Error::Config(format!("no shot `{id}` in {}", config.data.shots.display()))),
        None => {
            let Splits { test, .. } = commands::load_splits(config)?;
            test.shots
                .into_iter()
                .next()
                .ok_or_else(|| Error::Config("the test split is empty".into()))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
