use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn skumap(dir: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_skumap"));
    c.env_clear()
        .current_dir(dir)
        .env("SKUMAP_TRACES", "t/traces.jsonl")
        .env("SKUMAP_REVIEW", "t/review.jsonl");
    c
}

fn run(c: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = c.output().unwrap();
    (
        status.code().unwrap_or(-1),
        String::from_utf8_lossy(&stdout).into_owned(),
        String::from_utf8_lossy(&stderr).into_owned(),
    )
}

#[test]
fn rule_match_needs_no_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = run(skumap(dir.path()).args([
        "match",
        "--base",
        "Coke Zero 500ml",
        "--compared",
        "Coke Zero 0.5L",
        "--mode",
        "rule",
    ]));
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("Verdict: Equivalent"), "{out}");

    let (code, out, _) = run(skumap(dir.path()).args([
        "match", "--base", "Coke Zero 500ml", "--compared", "Coke Zero 1.5L", "--mode", "rule", "--format", "record",
    ]));
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["verdict"]["label"], "NonEquivalent");
    assert_eq!(v["verdict"]["provenance"], "rule");
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = run(skumap(dir.path()).args(["match", "--base", "a"]));
    assert_eq!(code, 1);
    let (code, _, err) = run(skumap(dir.path()).args(["match", "--base", "a", "--compared", "b", "--mode", "magic"]));
    assert_eq!(code, 1, "{err}");
    let (code, _, err) = run(skumap(dir.path()).args(["match", "--base", "a", "--compared", "b"]));
    assert_eq!(code, 1, "q2k without fixtures: {err}");
    assert!(err.contains("--fixtures"));
    let (code, _, _) = run(skumap(dir.path()).args(["--tau-sim", "3", "match", "--base", "a", "--compared", "b", "--mode", "rule"]));
    assert_eq!(code, 1);
    let (code, _, _) = run(skumap(dir.path()).arg("--help"));
    assert_eq!(code, 0);
}

#[test]
fn unscripted_model_calls_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.toml"), "").unwrap();
    let (code, _, err) = run(skumap(dir.path()).args([
        "--fixtures", "empty.toml", "match", "--base", "a", "--compared", "b",
    ]));
    assert_eq!(code, 2, "{err}");
}

#[test]
fn live_mode_without_credentials_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run(skumap(dir.path()).args(["--live", "match", "--base", "a", "--compared", "b"]));
    assert_eq!(code, 1, "{err}");
}

#[test]
fn eval_then_move_the_store() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run(skumap(dir.path()).args(["synth", "--n", "30", "--out", "data"]));
    assert_eq!(code, 0, "{err}");

    let (code, _, _) = run(skumap(dir.path()).args(["traces", "search", "-q", "anything"]));
    assert_eq!(code, 0);

    let (code, out, err) = run(skumap(dir.path()).args([
        "--fixtures",
        "data/fixtures.toml",
        "eval",
        "--dataset",
        "data/dataset.tsv",
        "--mode",
        "q2k",
        "--mode",
        "rule",
        "--out",
        "out",
    ]));
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().count(), 2, "{out}");
    for f in ["q2k.report.txt", "q2k.report.jsonl", "rule.report.txt", "q2k.runlog.jsonl", "summary.txt", "summary.jsonl"] {
        assert!(dir.path().join("out").join(f).exists(), "{f} missing");
    }

    let (code, out, _) = run(skumap(dir.path()).args(["--fixtures", "data/fixtures.toml", "traces", "search", "-q", "x", "--top", "3"]));
    assert_eq!(code, 0);
    assert!(out.starts_with("3 hits"), "{out}");

    let (code, _, err) = run(skumap(dir.path()).args(["traces", "export", "--to", "backup.jsonl"]));
    assert_eq!(code, 0, "{err}");
    let original = std::fs::read(dir.path().join("t/traces.jsonl")).unwrap();
    assert_eq!(std::fs::read(dir.path().join("backup.jsonl")).unwrap(), original);

    let (code, _, _) = run(skumap(dir.path()).args(["traces", "import", "--from", "backup.jsonl"]));
    assert_eq!(code, 1, "importing over a non-empty store is refused");
    let (code, _, err) = run(skumap(dir.path()).env("SKUMAP_TRACES", "u/traces.jsonl").args([
        "traces", "import", "--from", "backup.jsonl",
    ]));
    assert_eq!(code, 0, "{err}");
    assert_eq!(std::fs::read(dir.path().join("u/traces.jsonl")).unwrap(), original);
}

#[cfg(unix)]
#[test]
fn serve_answers_and_stops_on_sigterm() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = skumap(dir.path())
        .args(["serve", "--port", "0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let first = lines.next().unwrap().unwrap();
    let addr = first.strip_prefix("listening on http://").expect(&first).to_string();

    let mut s = TcpStream::connect(&addr).unwrap();
    write!(s, "GET /v1/stats HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut resp = String::new();
    s.read_to_string(&mut resp).unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"pairs_processed\":0"), "{resp}");

    let pid = child.id().to_string();
    assert!(Command::new("kill").args(["-TERM", &pid]).status().unwrap().success());
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(lines.next().map(|l| l.unwrap()).as_deref(), Some("shut down cleanly"));
}
