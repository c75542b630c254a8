use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use hxr::checkpoint::Checkpoint;
use hxr::shots::load_shots;
use serde_json::Value;

fn hxr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hxr"))
        .args(args)
        .current_dir(dir)
        .env_remove("HXR_ENDPOINT")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = hxr(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn workspace(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    ok(dir.path(), &["--config", "run.toml", "gen-data"]);
    dir
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn gen_data_defaults_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["gen-data"]);
    let set = load_shots(&p.join("data/shots.jsonl")).unwrap();
    assert_eq!(set.len(), 100);
    assert!(set.iter().all(|s| s.laser.len() == 400 && s.hxr.len() == 400));
    ok(p, &["gen-data", "--out", "again.jsonl"]);
    ok(p, &["gen-data", "--out", "other.jsonl", "--seed", "8"]);
    let a = fs::read(p.join("data/shots.jsonl")).unwrap();
    assert_eq!(a, fs::read(p.join("again.jsonl")).unwrap());
    assert_ne!(a, fs::read(p.join("other.jsonl")).unwrap());
    assert_eq!(code(&hxr(p, &["gen-data", "--n-shots", "0"])), 2);
}

#[test]
fn configuration_and_data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let missing = hxr(p, &["--reservoir", "ngrc", "train"]);
    assert_eq!(code(&missing), 2);
    assert!(stderr(&missing).contains("shots.jsonl"), "{}", stderr(&missing));
    let no_config = hxr(p, &["--config", "nope.toml", "train"]);
    assert_eq!(code(&no_config), 2);
    assert!(stderr(&no_config).contains("nope.toml"));
    fs::write(p.join("bad.toml"), "[train]\nepochz = 3\n").unwrap();
    assert_eq!(code(&hxr(p, &["--config", "bad.toml", "train"])), 2);
    assert_eq!(code(&hxr(p, &["sweep", "--axis", "diagonal"])), 2);
}

#[test]
fn esn_without_penalty_interpolates_one_shot() {
    let dir = workspace(
        "[data]\ntrain_samples = 1\n[reservoir]\nkind = \"esn\"\n[reservoir.esn]\nn_units = 450\nridge = 0.0\nwarmup = 0\nfeedback_scale = 0.5\n",
    );
    ok(dir.path(), &["--config", "run.toml", "train", "--out", "esn"]);
    let ckpt = Checkpoint::load(&dir.path().join("esn/checkpoint.json")).unwrap();
    let loss = ckpt.trace.unwrap().epochs[0].train_loss;
    assert!(loss < 1e-6, "train loss {loss}");
}

#[test]
fn llm_pipeline_through_the_in_process_endpoint() {
    let dir = workspace("[data]\ntrain_samples = 8\n[train]\nepochs = 3\n");
    let p = dir.path();
    let train = ok(
        p,
        &["--config", "run.toml", "--endpoint", "inproc", "train", "--out", "llm"],
    );
    assert!(train.contains("train loss"), "{train}");
    let trace = fs::read_to_string(p.join("llm/trace.tsv")).unwrap();
    assert_eq!(trace.lines().count(), 4);

    let args = [
        "--config",
        "run.toml",
        "predict",
        "--checkpoint",
        "llm/checkpoint.json",
        "--out",
        "pred",
    ];
    ok(p, &args);
    let files: Vec<_> = fs::read_dir(p.join("pred"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    let rec_path = files
        .iter()
        .find(|f| f.extension().is_some_and(|e| e == "json"))
        .unwrap()
        .clone();
    let rec = json(&rec_path);
    assert_eq!(rec["prediction"].as_array().unwrap().len(), 400);
    assert_eq!(rec["ground_truth"].as_array().unwrap().len(), 400);
    assert!(rec.get("confidence").is_none());
    let first = fs::read(&rec_path).unwrap();
    ok(p, &args);
    assert_eq!(first, fs::read(&rec_path).unwrap());

    let with_conf = ok(
        p,
        &[
            "--config",
            "run.toml",
            "predict",
            "--checkpoint",
            "llm/checkpoint.json",
            "--confidence",
            "--out",
            "pred",
        ],
    );
    let rec = json(&rec_path);
    assert_eq!(rec["confidence"].as_array().unwrap().len(), 400);
    assert!(with_conf.contains("spearman"), "{with_conf}");
    let tsv = fs::read_to_string(rec_path.with_extension("tsv")).unwrap();
    assert!(tsv.starts_with("time_step\tground_truth\tprediction\terror\tconfidence\n"));

    ok(
        p,
        &[
            "--config",
            "run.toml",
            "eval",
            "--checkpoint",
            "llm/checkpoint.json",
            "--predictions",
            "--out",
            "eval",
        ],
    );
    let report = json(&p.join("eval/report.json"));
    assert!(report["cae"].as_f64().unwrap() > 0.0);
    assert_eq!(
        fs::read_to_string(p.join("eval/predictions.tsv"))
            .unwrap()
            .lines()
            .count(),
        1 + 10 * 400
    );
}

#[test]
fn unreachable_endpoint_exits_3() {
    let dir = workspace("[train]\nepochs = 1\n[reservoir.client]\nretries = 1\nbackoff_ms = 5\ndeadline_ms = 2000\n");
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let url = format!("http://127.0.0.1:{port}");
    let out = hxr(dir.path(), &["--config", "run.toml", "--endpoint", &url, "train"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert_eq!(
        code(&hxr(
            dir.path(),
            &["--config", "run.toml", "--endpoint", "ftp://x", "train"]
        )),
        2
    );
}

#[test]
fn divergent_training_exits_4() {
    let dir = workspace("[data]\ntrain_samples = 5\n[train]\nepochs = 5\nlr = 1e300\n");
    let out = hxr(dir.path(), &["--config", "run.toml", "train"]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn classical_models_reject_confidence() {
    let dir = workspace("[reservoir]\nkind = \"ngrc\"\n");
    ok(dir.path(), &["--config", "run.toml", "train", "--out", "ngrc"]);
    let out = hxr(
        dir.path(),
        &[
            "--config",
            "run.toml",
            "predict",
            "--checkpoint",
            "ngrc/checkpoint.json",
            "--confidence",
        ],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn sweep_cells_match_independent_runs() {
    let dir = workspace("[reservoir]\nkind = \"ngrc\"\n");
    let p = dir.path();
    ok(
        p,
        &[
            "--config", "run.toml", "sweep", "--axis", "samples", "--values", "20,10", "--out", "sweep",
        ],
    );
    let tsv = fs::read_to_string(p.join("sweep/sweep_samples.tsv")).unwrap();
    for line in tsv.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        let n = cols[0];
        let cfg = format!("[data]\ntrain_samples = {n}\n[reservoir]\nkind = \"ngrc\"\n");
        fs::write(p.join("cell.toml"), cfg).unwrap();
        let out = format!("cell{n}");
        ok(p, &["--config", "cell.toml", "train", "--out", &out]);
        ok(
            p,
            &[
                "--config",
                "cell.toml",
                "eval",
                "--checkpoint",
                &format!("{out}/checkpoint.json"),
                "--out",
                &out,
            ],
        );
        let report = json(&p.join(&out).join("report.json"));
        for (col, key) in cols[1..].iter().zip(["cae", "top1_mae", "top5_mae"]) {
            let swept: f64 = col.parse().unwrap();
            assert_eq!(swept.to_bits(), report[key].as_f64().unwrap().to_bits(), "{key} at {n}");
        }
    }
}

#[test]
fn multi_seed_eval_reports_mean_and_std() {
    let dir = workspace("[reservoir]\nkind = \"esn\"\n[reservoir.esn]\nn_units = 60\n");
    ok(
        dir.path(),
        &["--config", "run.toml", "eval", "--seeds", "0,1", "--out", "seeds"],
    );
    let report = json(&dir.path().join("seeds/report.json"));
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);
    assert!(report["std"]["cae"].as_f64().unwrap() >= 0.0);
}

#[test]
fn serve_mock_answers_and_stops_on_sigterm() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_hxr"))
        .args(["serve-mock", "--addr", "127.0.0.1:0", "--workers", "2"])
        .current_dir(dir.path())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let url = line.split_whitespace().last().unwrap().to_owned();
    assert!(url.starts_with("http://127.0.0.1:"), "{line}");
    let out = hxr(
        dir.path(),
        &[
            "--endpoint",
            &url,
            "conformance",
            "--fixtures",
            concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/conformance"),
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    Command::new("kill")
        .args(["-TERM", &child.id().to_string()])
        .status()
        .unwrap();
    assert_eq!(child.wait().unwrap().code(), Some(0));
}
