use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn docrag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_docrag"))
        .args(args)
        .env_remove("DOCRAG_ENDPOINT")
        .output()
        .expect("run docrag")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// A small synthetic corpus and a config with a narrow multi-vector width.
fn fixture() -> TempDir {
    let dir = TempDir::new().unwrap();
    let out = docrag(&["bench", "--docs", "3", "--out", p(&dir.path().join("syn"))]);
    assert!(out.status.success(), "{}", stderr(&out));
    std::fs::write(
        dir.path().join("config.toml"),
        "k = 5\n[backends]\nmock_multi_width = 16\n",
    )
    .unwrap();
    dir
}

#[test]
fn bench_reports_perfect_planted_scores() {
    let out = docrag(&["bench", "--docs", "4"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["documents"], 4);
    assert_eq!(v["accuracy"], 1.0);
    assert_eq!(v["retrieval_precision_at_k"], 1.0);
}

#[test]
fn index_then_eval_writes_reports() {
    let dir = fixture();
    let root = dir.path();
    let cfg = root.join("config.toml");
    let corpus = root.join("syn/corpus");
    let qa = root.join("syn/qa.jsonl");
    let idx = root.join("idx");
    let out = docrag(&["--config", p(&cfg), "index", "--corpus", p(&corpus), "--out", p(&idx)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("indexed 3 documents"));
    for f in ["dense.drag", "multi.drag", "chunks.jsonl"] {
        assert!(idx.join(f).is_file(), "{f}");
    }

    let ev = root.join("eval");
    let out = docrag(&[
        "--config",
        p(&cfg),
        "eval",
        "--corpus",
        p(&corpus),
        "--qa",
        p(&qa),
        "--index",
        p(&idx),
        "--out",
        p(&ev),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ev.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["accuracy"], 1.0);
    assert_eq!(report["k"], 5);
    let traces = std::fs::read_to_string(ev.join("traces.jsonl")).unwrap();
    assert_eq!(traces.lines().count(), 3);
    assert!(std::fs::read_to_string(ev.join("summary.csv"))
        .unwrap()
        .starts_with("metric,value"));
}

#[test]
fn baseline_eval_builds_in_memory() {
    let dir = fixture();
    let root = dir.path();
    let out = docrag(&[
        "eval",
        "--corpus",
        p(&root.join("syn/corpus")),
        "--qa",
        p(&root.join("syn/qa.jsonl")),
        "--mode",
        "concat",
        "--out",
        p(&root.join("ev")),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("mode,concat"));
}

#[test]
fn query_prints_answer_and_trace() {
    let dir = fixture();
    let root = dir.path();
    let qa = std::fs::read_to_string(root.join("syn/qa.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(qa.lines().next().unwrap()).unwrap();
    let out = docrag(&[
        "query",
        "--corpus",
        p(&root.join("syn/corpus")),
        "--qa",
        p(&root.join("syn/qa.jsonl")),
        "--doc",
        first["doc_id"].as_str().unwrap(),
        "--question",
        first["question"].as_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["answer"], first["answers"][0]);
    assert_eq!(v["trace"]["mode"], "rag-text");
}

#[test]
fn mine_writes_pairs() {
    let dir = fixture();
    let root = dir.path();
    let pairs = root.join("pairs.jsonl");
    let out = docrag(&[
        "mine",
        "--corpus",
        p(&root.join("syn/corpus")),
        "--qa",
        p(&root.join("syn/qa.jsonl")),
        "--out",
        p(&pairs),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(std::fs::read_to_string(&pairs).unwrap().lines().count(), 3);
}

#[test]
fn validation_errors_exit_2() {
    let dir = fixture();
    let root = dir.path();
    let bad = root.join("bad.toml");
    std::fs::write(&bad, "k = 30\nk_prime = 20\n").unwrap();
    let corpus = root.join("syn/corpus");
    let out = docrag(&[
        "--config",
        p(&bad),
        "index",
        "--corpus",
        p(&corpus),
        "--out",
        p(&root.join("i")),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    std::fs::write(&bad, "unknown_field = 1\n").unwrap();
    let out = docrag(&[
        "--config",
        p(&bad),
        "index",
        "--corpus",
        p(&corpus),
        "--out",
        p(&root.join("i")),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = docrag(&[
        "index",
        "--corpus",
        p(&root.join("missing")),
        "--out",
        p(&root.join("i")),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = docrag(&[
        "eval",
        "--corpus",
        p(&corpus),
        "--qa",
        "x",
        "--mode",
        "nope",
        "--out",
        "y",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unreachable_endpoint_from_env_exits_3() {
    let dir = fixture();
    let root = dir.path();
    let cfg = root.join("remote.toml");
    std::fs::write(
        &cfg,
        "[backends]\nencoder = \"remote\"\nretries = 0\ntimeout_secs = 2\n",
    )
    .unwrap();
    // port 9 (discard) is closed in the test environment
    let out = Command::new(env!("CARGO_BIN_EXE_docrag"))
        .args([
            "--config",
            p(&cfg),
            "index",
            "--mode",
            "text",
            "--corpus",
            p(&root.join("syn/corpus")),
            "--out",
            p(&root.join("i")),
        ])
        .env("DOCRAG_ENDPOINT", "http://127.0.0.1:9")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("127.0.0.1:9"));
}

#[test]
fn remote_without_endpoint_exits_2() {
    let dir = fixture();
    let root = dir.path();
    let cfg = root.join("remote.toml");
    std::fs::write(&cfg, "[backends]\nencoder = \"remote\"\n").unwrap();
    let out = docrag(&[
        "--config",
        p(&cfg),
        "index",
        "--corpus",
        p(&root.join("syn/corpus")),
        "--out",
        p(&root.join("i")),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}
