use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn duelkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_duelkit")).args(args).env_remove("DUELKIT_PORT").output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn value_after(text: &str, prefix: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with(prefix)).unwrap_or_else(|| panic!("no {prefix:?} in {text}"));
    line[prefix.len()..].trim().parse().unwrap()
}

fn bench(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["bench", "--rounds", "40", "--seeds", "2", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    duelkit(&args)
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    names
}

#[test]
fn bench_writes_a_reproducible_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = ["--problem", "dtlz2", "--n", "12", "--algo", "rucb,ipea-rucb", "--seed", "5"];
    let first = bench(&a, &args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(stdout(&first).contains("ipea-rucb"));
    assert!(bench(&b, &args).status.success());

    let names = files(&a);
    assert_eq!(names, files(&b));
    for name in ["config.json", "trajectory.csv", "query_histogram.csv", "stats.json"] {
        assert!(names.iter().any(|n| n == name), "{name} missing from {names:?}");
    }
    assert_eq!(names.iter().filter(|n| n.starts_with("events-")).count(), 4);
    for name in &names {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }

    // The written config reruns to the same directory.
    let c = tmp.path().join("c");
    let rerun = duelkit(&["bench", "--config", a.join("config.json").to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert!(rerun.status.success(), "{}", String::from_utf8_lossy(&rerun.stderr));
    for name in &names {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(c.join(name)).unwrap(), "{name}");
    }

    let config: serde_json::Value = serde_json::from_slice(&fs::read(a.join("config.json")).unwrap()).unwrap();
    assert_eq!(config["rounds"], 40);
    assert_eq!(config["seeds"].as_array().unwrap().len(), 2);
    assert_eq!(config["threshold"], 0.85);
    assert_eq!(config["annotator"], "oracle");
}

#[test]
fn stats_reads_back_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    assert!(bench(&run, &["--problem", "clustered", "--algo", "dts"]).status.success());
    let text = duelkit(&["stats", run.to_str().unwrap()]);
    assert!(text.status.success());
    assert!(stdout(&text).contains("clusters 4 (effective size 5)"), "{}", stdout(&text));

    let json = duelkit(&["stats", "--json", run.to_str().unwrap()]);
    let summary: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(summary["queries"]["dts"]["total"], 80);
    assert_eq!(summary["k"], 20);
}

#[test]
fn alpha_sweep_writes_one_directory_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bench(tmp.path(), &["--problem", "random-condorcet", "--k", "6", "--algo", "rucb", "--alpha", "0.3,0.6"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(files(tmp.path()), ["alpha-0.3", "alpha-0.6"]);
    let config: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("alpha-0.6/config.json")).unwrap()).unwrap();
    assert_eq!(config["alpha"], 0.6);
}

#[test]
fn diag_prints_theory_constants() {
    // ((4a - 1) K^2 / ((2a - 1) delta))^(1 / (2a - 1)) = (1.4 * 100 / 0.02)^5 = 7000^5.
    let out = duelkit(&["diag", "--alpha", "0.6", "--delta", "0.1", "--k", "10", "--w-min", "0.5", "--gap-i", "0.2", "--gap-j", "0.4"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let c = value_after(&text, "C(delta) =");
    assert!((c / 7000f64.powi(5) - 1.0).abs() < 1e-12, "{c}");
    // 4a / (w^2 min(gap)^2) = 2.4 / (0.25 * 0.04).
    let d = value_after(&text, "D^w =");
    assert!((d - 240.0).abs() < 1e-9, "{d}");

    let low = duelkit(&["diag", "--alpha", "0.1", "--k", "10"]);
    assert!(low.status.success());
    assert!(stdout(&low).contains("C(delta) undefined"));
}

#[test]
fn configuration_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    for extra in [
        &["--problem", "dtlz2", "--rounds", "0"][..],
        &["--problem", "dtlz2", "--annotator", "sometimes"],
        &["--problem", "dtlz2", "--algo", "ucb"],
        &["--problem", "dtlz2", "--sim-threshold", "1.5"],
        &["--problem", "dtlz2", "--seeds", "0"],
        &["--problem", "dtlz-file"],
        &["--problem", "dtlz2", "--alpha", "-1"],
    ] {
        let mut args = vec!["bench", "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let status = duelkit(&args).status;
        assert_eq!(status.code(), Some(2), "{extra:?}");
    }
    assert!(!out.exists());
    assert_eq!(duelkit(&["diag", "--k", "1"]).status.code(), Some(2));
    assert_eq!(duelkit(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn data_errors_exit_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    let missing = tmp.path().join("missing.csv");
    let code = |args: &[&str]| duelkit(args).status.code();
    assert_eq!(
        code(&["bench", "--problem", "dtlz-file", "--points", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]),
        Some(3)
    );
    let garbled = tmp.path().join("points.csv");
    fs::write(&garbled, "a,b\nnot,numbers\n").unwrap();
    assert_eq!(
        code(&["bench", "--problem", "dtlz-file", "--points", garbled.to_str().unwrap(), "--out", out.to_str().unwrap()]),
        Some(3)
    );
    assert_eq!(code(&["stats", tmp.path().join("nowhere").to_str().unwrap()]), Some(3));
    assert_eq!(code(&["stats", tmp.path().to_str().unwrap()]), Some(3));
}

#[test]
fn serve_rejects_a_bad_port_variable() {
    let out = Command::new(env!("CARGO_BIN_EXE_duelkit")).args(["serve"]).env("DUELKIT_PORT", "eighty").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn serve_answers_http() {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpStream;
    use std::process::Stdio;

    let mut child = Command::new(env!("CARGO_BIN_EXE_duelkit"))
        .args(["serve", "--port", "1"])
        .env("DUELKIT_PORT", "0")
        .env("NO_COLOR", "1")
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let addr = loop {
        let line = lines.next().expect("server exited").unwrap();
        if let Some((_, rest)) = line.split_once("listening on ") {
            break rest.trim().to_owned();
        }
    };
    let body = r#"{"candidates": {"labels": ["tea", "coffee", "cocoa"]}, "seed": 1}"#;
    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(
        stream,
        "POST /sessions HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut reply = String::new();
    stream.read_to_string(&mut reply).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(reply.starts_with("HTTP/1.1 201"), "{reply}");
    assert!(reply.contains("\"champion\""));
}
