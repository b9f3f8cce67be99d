use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde_json::Value;
use tgl::cli::{run, EXIT_NO_INPUT, EXIT_SERVE_MALFORMED, EXIT_USAGE};

const HANDOFF_SCHEMA: &str = include_str!("../schema/handoff.schema.json");
const REPORT_SCHEMA: &str = include_str!("../schema/metrics_report.schema.json");

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn tgl(args: &[&str], stdin: &str) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("tgl").chain(args.iter().copied());
    let code = run(argv, &mut Cursor::new(stdin.as_bytes().to_vec()), &mut out, &mut err);
    Run { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn validator(schema: &str) -> jsonschema::JSONSchema {
    let schema: Value = serde_json::from_str(schema).unwrap();
    jsonschema::JSONSchema::compile(&schema).unwrap()
}

fn assert_valid(v: &jsonschema::JSONSchema, doc: &Value) {
    if let Err(errors) = v.validate(doc) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("schema violations: {msgs:?}");
    }
}

/// A small network on the default 768-dim embedder keeps the pipeline quick.
fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(
        &p,
        r#"{"architecture": {"text_dim": 768, "type_dim": 8, "dt_dim": 8, "hidden_dim": 16, "heads": 2,
            "layers": 2, "edge_dim": 8, "head_hidden": 16, "dropout": 0.2, "leaky_slope": 0.2, "ln_eps": 1e-5},
            "train": {"batch_sessions": 8, "seed": 3}}"#,
    )
    .unwrap();
    p
}

fn pipeline(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let train = dir.join("train.jsonl");
    let test = dir.join("test.jsonl");
    assert_eq!(tgl(&["gen", "--seed", "5", "--n", "24", "--out", s(&train)], "").code, 0);
    assert_eq!(tgl(&["gen", "--seed", "6", "--n", "6", "--out", s(&test)], "").code, 0);
    let ck = dir.join("ck");
    let cfg = small_config(dir);
    let log = dir.join("log.jsonl");
    let r = tgl(&["train", "--sessions", s(&train), "--config", s(&cfg), "--out-checkpoint", s(&ck), "--log", s(&log)], "");
    assert_eq!(r.code, 0, "{}", r.stderr);
    (train, test, ck)
}

#[test]
fn gen_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    assert_eq!(tgl(&["gen", "--seed", "7", "--n", "100", "--out", s(&a)], "").code, 0);
    assert_eq!(tgl(&["gen", "--seed", "7", "--n", "100", "--out", s(&b)], "").code, 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let manifest: Value = serde_json::from_slice(&std::fs::read(dir.path().join("a.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "gen");
    assert_eq!(manifest["options"]["seed"], 7);
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(tgl(&["gen", "--bogus"], "").code, EXIT_USAGE);
    assert_eq!(tgl(&["frobnicate"], "").code, EXIT_USAGE);
    assert_eq!(tgl(&["gen", "--n", "3", "--profile", "nope", "--out", "/tmp/x"], "").code, EXIT_USAGE);
    assert_eq!(tgl(&["--help"], "").code, 0);
}

#[test]
fn missing_input_exits_66() {
    let r = tgl(&["build-graph", "--sessions", "/nonexistent/s.jsonl", "--out", "/tmp/g.jsonl"], "");
    assert_eq!(r.code, EXIT_NO_INPUT);
    assert!(r.stderr.contains("/nonexistent/s.jsonl"));
}

#[test]
fn build_graph_writes_graphs_and_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let sessions = dir.path().join("s.jsonl");
    tgl(&["gen", "--seed", "1", "--n", "3", "--out", s(&sessions)], "");
    let out = dir.path().join("g.jsonl");
    let prov = dir.path().join("prov");
    let r = tgl(&["build-graph", "--sessions", s(&sessions), "--out", s(&out), "--provenance", s(&prov)], "");
    assert_eq!(r.code, 0, "{}", r.stderr);
    let lines: Vec<Value> =
        std::fs::read_to_string(&out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["format"], "tgl-graph");
    let edges = std::fs::read_to_string(prov.join("edges.csv")).unwrap();
    assert!(edges.starts_with("sample_id,src,dst,relation\n"));
    assert!(edges.contains(",primary_entity\n") && edges.contains(",next_event\n"));
    assert!(prov.join("nodes.csv").exists());
}

#[test]
fn train_eval_serve_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test, ck) = pipeline(dir.path());
    let log = std::fs::read_to_string(dir.path().join("log.jsonl")).unwrap();
    let first: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    for k in ["step", "epoch", "loss", "trig_loss", "rout_loss", "grad_norm"] {
        assert!(first.get(k).is_some(), "log lacks {k}");
    }
    assert_eq!(log.lines().count(), 6);

    let report = dir.path().join("report.json");
    let r = tgl(
        &["eval", "--checkpoint", s(&ck), "--sessions", s(&test), "--baselines", "rule,lr", "--train-sessions", s(&train), "--report", s(&report)],
        "",
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let doc: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_valid(&validator(REPORT_SCHEMA), &doc);
    let scorers: Vec<&str> = doc["reports"].as_array().unwrap().iter().map(|r| r["scorer"].as_str().unwrap()).collect();
    assert_eq!(scorers, ["graph", "rule", "lr"]);
    assert!(doc["reports"][0]["auc_m_fire"].is_number());
    assert!(doc["reports"][2]["lr_config"]["steps"].is_number());
    assert!(dir.path().join("report.json.manifest.json").exists());

    let sessions = tgl::io::load_sessions(&test).unwrap().sessions;
    let mut stdin = String::new();
    for sess in &sessions[..2] {
        for e in &sess.events {
            let mut v = serde_json::to_value(e).unwrap();
            v["sample_id"] = sess.sample_id.clone().into();
            stdin.push_str(&v.to_string());
            stdin.push('\n');
        }
    }
    let served = tgl(&["serve", "--checkpoint", s(&ck)], &stdin);
    assert_eq!(served.code, 0, "{}", served.stderr);
    let schema = validator(HANDOFF_SCHEMA);
    let handoffs: Vec<Value> = served.stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(handoffs.len(), sessions[0].events.len() + sessions[1].events.len());
    for h in &handoffs {
        assert_valid(&schema, h);
        let fire = h["fire"].as_bool().unwrap();
        assert_eq!(fire, h["p_trig"].as_f64().unwrap() >= 0.5);
        let scores: Vec<f64> = h["routing"].as_array().unwrap().iter().map(|r| r["score"].as_f64().unwrap()).collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    }

    let bench = dir.path().join("bench.json");
    let r = tgl(&["bench", "--checkpoint", s(&ck), "--sessions", s(&test), "--report", s(&bench), "--max-sessions", "1"], "");
    assert_eq!(r.code, 0, "{}", r.stderr);
    let b: Value = serde_json::from_slice(&std::fs::read(&bench).unwrap()).unwrap();
    assert_eq!(b["passes_per_event"], 4);
    assert_eq!(b["discarded_per_event"], 1);
}

#[test]
fn eval_baselines_need_training_sessions() {
    let r = tgl(&["eval", "--checkpoint", "x", "--sessions", "y", "--baselines", "rule", "--report", "z"], "");
    assert_eq!(r.code, EXIT_USAGE);
}

#[test]
fn serve_reports_bad_lines_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (_, _, ck) = pipeline(dir.path());
    let stdin = concat!(
        r#"{"event_id":"a","ts":10,"text":"The user opened 'a.py' in VS Code."}"#,
        "\nthis is not json\n",
        r#"{"event_id":"b","ts":3,"text":"The user edited 'a.py' in VS Code."}"#,
        "\n",
        r#"{"event_id":"c","ts":11,"text":"The user edited 'a.py' in VS Code."}"#,
        "\n"
    );
    let bin = env!("CARGO_BIN_EXE_tgl");
    let mut child = Command::new(bin)
        .args(["serve", "--checkpoint", s(&ck)])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    use std::io::Write;
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_SERVE_MALFORMED));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("line 2:") && stderr.contains("line 3:"), "{stderr}");
    let ids: Vec<String> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["event_id"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(ids, ["a", "c"]);
}

#[test]
fn serve_uses_a_warm_vocabulary() {
    let dir = tempfile::tempdir().unwrap();
    let (_, _, ck) = pipeline(dir.path());
    let vocab = dir.path().join("vocab.tsv");
    std::fs::write(&vocab, "# type\tlabel\napp\tVS Code\nfile_ext\tpy\nfile_topic\tcode\n").unwrap();
    let stdin = r#"{"event_id":"a","ts":1,"text":"The user opened 'a.py' in VS Code."}"#;
    let r = tgl(&["serve", "--checkpoint", s(&ck), "--cache-vocab", s(&vocab)], stdin);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stderr.contains("hit rate 1.000"), "{}", r.stderr);
    std::fs::write(&vocab, "file\ta.py\n").unwrap();
    assert_ne!(tgl(&["serve", "--checkpoint", s(&ck), "--cache-vocab", s(&vocab)], stdin).code, 0);
}
