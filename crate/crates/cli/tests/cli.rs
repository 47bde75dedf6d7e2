use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qsv::output::data_lines;
use serde_json::Value;

fn qsv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsv"))
        .args(args)
        .output()
        .expect("qsv runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn bound(args: &[&str]) -> f64 {
    let out = qsv(args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    json(&out)["fidelity_bound"].as_f64().unwrap()
}

#[test]
fn certify_examples() {
    let f = bound(&[
        "certify",
        "--protocol",
        "sqsv",
        "--n",
        "10",
        "--k",
        "0",
        "--delta",
        "0.05",
        "--lambda",
        "0.333333333333",
    ]);
    assert!((f - 0.611701).abs() < 2e-6);

    let f = bound(&[
        "certify",
        "--protocol",
        "dqsv",
        "--n",
        "1",
        "--k",
        "0",
        "--delta",
        "0.6666666667",
        "--lambda",
        "0.3333333333",
    ]);
    assert!((f - 0.25).abs() < 1e-8);

    let f = bound(&[
        "certify",
        "--protocol",
        "dqsv",
        "--n",
        "10",
        "--k",
        "0",
        "--delta",
        "1e-9",
        "--lambda",
        "0.3333333333333333",
    ]);
    assert_eq!(f, 0.0);
}

#[test]
fn certify_json_fields() {
    let out = qsv(&[
        "certify",
        "--protocol",
        "dqsv",
        "--n",
        "10",
        "--k",
        "1",
        "--delta",
        "0.05",
        "--intermediates",
    ]);
    assert!(out.status.success());
    let v = json(&out);
    for key in [
        "protocol",
        "n",
        "k",
        "delta",
        "lambda",
        "fidelity_bound",
        "infidelity_bound",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["protocol"], "dqsv");
    assert_eq!(v["intermediates"]["h"].as_array().unwrap().len(), 12);
}

#[test]
fn certify_csv() {
    let out = qsv(&[
        "--format",
        "csv",
        "certify",
        "--protocol",
        "sqsv",
        "--n",
        "10",
        "--k",
        "0",
        "--delta",
        "0.05",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "protocol,n,k,delta,lambda,fidelity_bound,infidelity_bound"
    );
    assert!(lines.next().unwrap().starts_with("sqsv,10,0,0.05,"));
}

#[test]
fn invalid_queries_exit_two() {
    let out = qsv(&[
        "certify",
        "--protocol",
        "dqsv",
        "--n",
        "3",
        "--k",
        "5",
        "--delta",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = qsv(&[
        "certify",
        "--protocol",
        "dqsv",
        "--n",
        "3",
        "--k",
        "0",
        "--delta",
        "1.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = qsv(&[
        "certify",
        "--protocol",
        "dqsv",
        "--n",
        "3",
        "--k",
        "0",
        "--delta",
        "0.5",
        "--lambda",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

fn simulate(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "--seed",
        "11",
        "--out-dir",
        dir.to_str().unwrap(),
        "simulate",
    ];
    args.extend_from_slice(extra);
    qsv(&args)
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "--protocol",
        "dqsv",
        "--n",
        "100",
        "--k",
        "0",
        "--source",
        "rho1",
        "--rounds",
        "200",
        "--threads",
        "3",
    ];
    assert!(simulate(dir.path(), &args).status.success());
    let first = (
        fs::read(dir.path().join("summary.json")).unwrap(),
        data_lines(&fs::read_to_string(dir.path().join("rounds.csv")).unwrap()),
    );
    let mut again = args.to_vec();
    *again.last_mut().unwrap() = "1";
    assert!(simulate(dir.path(), &again).status.success());
    let second = (
        fs::read(dir.path().join("summary.json")).unwrap(),
        data_lines(&fs::read_to_string(dir.path().join("rounds.csv")).unwrap()),
    );
    assert_eq!(first, second);
    let s = summary(dir.path());
    let p = s["summary"]["p_hat"].as_f64().unwrap();
    assert!((p - 2.0 / 3.0).abs() < 0.15);
}

#[test]
fn honest_ideal_source_always_accepts() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(
        dir.path(),
        &[
            "--protocol",
            "dqsv",
            "--n",
            "20",
            "--k",
            "0",
            "--source",
            "honest",
            "--rounds",
            "300",
        ],
    );
    assert!(out.status.success());
    let s = &summary(dir.path())["summary"];
    assert_eq!(s["p_hat"], 1.0);
    assert_eq!(s["conditional_fidelity_truth"]["mean"], 1.0);
}

#[test]
fn until_accepted_writes_enough_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(
        dir.path(),
        &[
            "--protocol",
            "dqsv",
            "--n",
            "5",
            "--k",
            "1",
            "--source",
            "rho2",
            "--phi",
            "3.141592653589793",
            "--until-accepted",
            "1000",
        ],
    );
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("rounds.csv")).unwrap();
    assert!(text.starts_with("# schema_version=1 kind=rounds "));
    let data = data_lines(&text);
    let mut lines = data.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "accepted").unwrap();
    let accepted = lines
        .filter(|l| l.split(',').nth(col) == Some("true"))
        .count();
    assert_eq!(accepted, 1000);
}

#[test]
fn no_accepted_rounds_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(
        dir.path(),
        &[
            "--protocol",
            "dqsv",
            "--n",
            "200",
            "--k",
            "0",
            "--source",
            "honest",
            "--fidelity",
            "0.25",
            "--rounds",
            "50",
        ],
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        r#"
protocol = "dqsv"
n = 4
k = 1
lambda = "1/3"
seed = 5

[source]
model = "custom"

[[source.branches]]
weight = 0.5
fill = "singlet"
overrides = [{ position = 0, state = "werner(0.9)" }]

[[source.branches]]
weight = 0.5
fill = "mixed"

[stopping]
mode = "fixed_rounds"
rounds = 500
"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = qsv(&[
        "--out-dir",
        out_dir.to_str().unwrap(),
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--rounds",
        "300",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s = summary(&out_dir);
    assert_eq!(s["summary"]["rounds"], 300);
    assert_eq!(s["config"]["seed"], 5);
    assert_eq!(s["config"]["n"], 4);
}

#[test]
fn bad_configs_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let stop = "[stopping]\nmode = \"fixed_rounds\"\nrounds = 10\n[source]\nmodel = \"honest\"\n";
    let cases = [
        ("protocol = \"dqsv\"\nn = 5\nk = 0\nbogus = 1\n".to_string(), "`bogus`"),
        (
            "protocol = \"dqsv\"\nn = 5\nk = 0\n[stopping]\nmode = \"fixed_rounds\"\nrounds = 10\n[source]\nmodel = \"rho2\"\n".to_string(),
            "`source.phi`",
        ),
        (format!("protocol = \"dqsv\"\nn = 5\nk = 9\n{stop}"), "`k`"),
        (format!("protocol = \"dqsv\"\nn = 5\nk = 0\nlambda = \"2/1\"\n{stop}"), "`lambda`"),
        ("protocol = \"dqsv\"\nn = 5\nk = 0\n[stopping]\nmode = \"fixed_rounds\"\nrounds = 10\ntarget = 3\n".to_string(), "`target`"),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let cfg = dir.path().join(format!("c{i}.toml"));
        fs::write(&cfg, text).unwrap();
        let out = qsv(&["simulate", "--config", cfg.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "case {i}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(needle), "case {i}: {err}");
    }
}

#[test]
fn oracle_check_reports_json() {
    let out = qsv(&["oracle-check", "factorization", "--budget", "4"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["passed"], true);
    assert_eq!(v["failures"], 0);

    let out = qsv(&[
        "oracle-check",
        "dqsv-sweep",
        "--n",
        "4",
        "--k",
        "0",
        "--trials",
        "500",
    ]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["passed"], true);
    assert_eq!(v["trials"], 500);
}

#[test]
fn reproduce_fig4_phi_zero_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = qsv(&[
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--format",
        "csv",
        "reproduce",
        "fig4",
        "--target-accepted",
        "200",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(dir.path().join("fig4.csv"))
        .unwrap();
    let headers = r.headers().unwrap().clone();
    let idx = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let mut seen = false;
    for rec in r.records() {
        let rec = rec.unwrap();
        if rec[idx("grid")] == *"phi_sweep" && rec[idx("phi")].parse::<f64>().unwrap() == 0.0 {
            let cert: f64 = rec[idx("dqsv_cert_exact")].parse().unwrap();
            let f: f64 = rec[idx("exact_conditional_fidelity")].parse().unwrap();
            assert!((f - 1.0).abs() < 1e-12 && cert <= f);
            seen = true;
        }
    }
    assert!(seen);
    assert!(!dir.path().join("fig4.json").exists());
}
