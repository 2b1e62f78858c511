//! The `marco` binary: subcommands, files and exit codes.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};

fn marco(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_marco"));
    cmd.args(args).env_remove("MARCO_PYTHON");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

const ENUMERATORS: &str = r#"{"num_agents": 3, "max_iterations": 2, "condense_period": 2,
  "agents": [{"model": "e", "provider": "enumerator"},
             {"model": "e", "provider": "enumerator"},
             {"model": "e", "provider": "enumerator", "max_stages": 1}]}"#;

/// Serves every request with the same status and body, forever.
fn fake_endpoint(status: &'static str, body: &'static str) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut sink = vec![0; len];
            let _ = reader.read_exact(&mut sink);
            let reply = format!(
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    format!("http://{addr}/v1")
}

fn http_config(url: &str) -> String {
    format!(
        r#"{{"num_agents": 1, "max_iterations": 1, "max_retries": 0,
            "agents": [{{"model": "m", "base_url": "{url}"}}]}}"#
    )
}

#[test]
fn full_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let gen = marco(
        &["gen-dsl", "--family", "list", "--count", "6", "--seed", "2"],
        &[],
    );
    assert!(gen.status.success());
    assert_eq!(stdout(&gen).lines().count(), 6);
    let data = write(dir.path(), "d.jsonl", &stdout(&gen));
    let cfg = write(dir.path(), "c.json", ENUMERATORS);
    let out = dir.path().join("out").display().to_string();
    let base = dir.path().join("base").display().to_string();

    let run = marco(
        &["run", "--config", &cfg, "--dataset", &data, "--out", &out],
        &[],
    );
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let metrics: serde_json::Value = serde_json::from_str(&stdout(&run)).unwrap();
    assert_eq!(metrics["problems"], 6);
    for f in [
        "results.jsonl",
        "knowledge.json",
        "run_meta.json",
        "metrics.json",
        "events.jsonl",
    ] {
        assert!(Path::new(&out).join(f).exists(), "{f}");
    }

    let score = marco(&["score", "--results", &out], &[]);
    assert_eq!(
        serde_json::from_str::<serde_json::Value>(&stdout(&score)).unwrap(),
        metrics
    );

    let again = marco(
        &["run", "--config", &cfg, "--dataset", &data, "--out", &out],
        &[],
    );
    assert_eq!(again.status.code(), Some(1));
    let resumed = marco(
        &[
            "run",
            "--config",
            &cfg,
            "--dataset",
            &data,
            "--out",
            &out,
            "--resume",
        ],
        &[],
    );
    assert!(resumed.status.success());
    assert_eq!(
        serde_json::from_str::<serde_json::Value>(&stdout(&resumed)).unwrap(),
        metrics
    );

    let stat = marco(
        &[
            "run",
            "--config",
            &cfg,
            "--dataset",
            &data,
            "--out",
            &base,
            "--static-mode",
        ],
        &[],
    );
    assert!(stat.status.success());
    let cmp = marco(&["compare", "--a", &out, "--b", &base], &[]);
    let deltas: serde_json::Value = serde_json::from_str(&stdout(&cmp)).unwrap();
    assert!(deltas["first_half_delta"].is_number() && deltas["second_half_delta"].is_number());

    let inspect = marco(&["inspect-knowledge", "--results", &out], &[]);
    assert!(
        stdout(&inspect).contains("--- version 3 (covers 6 problems) ---"),
        "{}",
        stdout(&inspect)
    );
    let inspect_static = marco(&["inspect-knowledge", "--results", &base], &[]);
    assert!(stdout(&inspect_static).contains("no condensations yet"));
}

#[test]
fn schema_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(
        dir.path(),
        "d.jsonl",
        r#"{"id": "a", "kind": "induction", "language": "list_dsl", "pairs": []}"#,
    );
    let cfg = write(dir.path(), "c.json", ENUMERATORS);
    let out = dir.path().join("o").display().to_string();
    let bad_data = marco(
        &["run", "--config", &cfg, "--dataset", &data, "--out", &out],
        &[],
    );
    assert_eq!(bad_data.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_data.stderr).contains("line 1"));

    let bad_cfg = write(dir.path(), "bad.json", r#"{"num_agents": 0, "agents": []}"#);
    let o = marco(
        &[
            "run",
            "--config",
            &bad_cfg,
            "--dataset",
            &data,
            "--out",
            &out,
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    let fam = marco(&["gen-dsl", "--family", "tree", "--count", "1"], &[]);
    assert_eq!(fam.status.code(), Some(2));
}

#[test]
fn rejected_credentials_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let url = fake_endpoint("401 Unauthorized", r#"{"error": "bad key"}"#);
    let cfg = write(dir.path(), "c.json", &http_config(&url));
    let gen = marco(&["gen-dsl", "--family", "list", "--count", "1"], &[]);
    let data = write(dir.path(), "d.jsonl", &stdout(&gen));
    let out = dir.path().join("o").display().to_string();
    let o = marco(
        &["run", "--config", &cfg, "--dataset", &data, "--out", &out],
        &[("MARCO_API_KEY", "nope")],
    );
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn broken_interpreter_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let url = fake_endpoint(
        "200 OK",
        r#"{"choices": [{"message": {"content": "```python\ndef f(x):\n    return x\n```"}}]}"#,
    );
    let cfg = write(dir.path(), "c.json", &http_config(&url));
    let data = write(
        dir.path(),
        "d.jsonl",
        r#"{"id": "g", "kind": "induction", "language": "general", "pairs": [{"input": "1", "output": "1"}, {"input": "2", "output": "2"}]}"#,
    );
    let out = dir.path().join("o").display().to_string();
    let o = marco(
        &["run", "--config", &cfg, "--dataset", &data, "--out", &out],
        &[("MARCO_PYTHON", "/nonexistent/python3")],
    );
    assert_eq!(
        o.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}
