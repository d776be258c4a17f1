mod common;

use std::net::TcpListener;
use std::process::{Command, Output};

use fsslr::trainer::TrainReport;

fn fsslr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsslr")).args(args).output().expect("binary runs")
}

fn report(out: &Output) -> TrainReport {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("report json")
}

fn iris() -> String {
    common::data("iris_2class.csv").to_string_lossy().into_owned()
}

#[test]
fn simulate_reports_rounds_per_batch() {
    let d = iris();
    let v1 = report(&fsslr(&["simulate", "--dataset", &d, "--protocol", "fss-v1", "--batch", "16"]));
    let ss = report(&fsslr(&["simulate", "--dataset", &d, "--protocol", "ss", "--batch", "16"]));
    assert_eq!(v1.comm.rounds, 100 / 16);
    assert_eq!(ss.comm.rounds, 2 * v1.comm.rounds);
    assert_eq!(v1.auc, 1.0);
}

#[test]
fn simulate_writes_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let d = iris();
    let out = fsslr(&[
        "simulate",
        "--dataset",
        &d,
        "--protocol",
        "plaintext",
        "--batch",
        "10",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let r: TrainReport = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(r.weights.len(), 5);
}

#[test]
fn usage_errors_exit_with_two() {
    let d = iris();
    for args in [
        vec!["simulate", "--dataset", d.as_str(), "--batch", "0"],
        vec!["simulate", "--dataset", d.as_str(), "--batch", "500"],
        vec!["simulate", "--dataset", d.as_str(), "--protocol", "fss-v9"],
        vec!["simulate", "--dataset", "/nonexistent.csv"],
        vec!["simulate", "--dataset", d.as_str(), "--ell", "40"],
        vec!["party", "--dataset", d.as_str(), "--role", "0"],
        vec!["party", "--dataset", d.as_str(), "--role", "2", "--listen", "127.0.0.1:0"],
        vec!["frobnicate"],
    ] {
        let out = fsslr(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn dealer_and_two_party_processes_match_simulate() {
    let d = iris();
    let dir = tempfile::tempdir().unwrap();
    let bundles = dir.path().join("bundles");
    let common_args = ["--dataset", &d, "--protocol", "fss-v1", "--batch", "16", "--epochs", "2", "--seed", "4"];
    let out = fsslr(&[&["dealer", "--out-dir", bundles.to_str().unwrap()], &common_args[..]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(bundles.join("manifest.json").exists());
    assert_eq!(std::fs::read_dir(&bundles).unwrap().count(), 2 * 12 + 1);

    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let spawn = |role: &str, flag: &str| {
        Command::new(env!("CARGO_BIN_EXE_fsslr"))
            .args(["party", "--role", role, flag, &addr, "--bundles", bundles.to_str().unwrap()])
            .args(common_args)
            .stdout(std::process::Stdio::piped())
            .stderr(std::process::Stdio::piped())
            .spawn()
            .unwrap()
    };
    let p0 = spawn("0", "--listen");
    let p1 = spawn("1", "--connect");
    let r0 = report(&p0.wait_with_output().unwrap());
    let r1 = report(&p1.wait_with_output().unwrap());
    let sim = report(&fsslr(&[&["simulate"], &common_args[..]].concat()));
    assert_eq!(r0.comm, sim.comm);
    assert_eq!(r1.comm, sim.comm);
    assert_eq!(r0.weights, sim.weights);
    assert_eq!(r0.transcript, sim.transcript);
}

#[test]
fn party_rejects_foreign_bundles() {
    let d = iris();
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().to_str().unwrap();
    assert!(fsslr(&["dealer", "--out-dir", b, "--dataset", &d, "--batch", "16"]).status.success());
    let out =
        fsslr(&["party", "--role", "0", "--listen", "127.0.0.1:0", "--bundles", b, "--dataset", &d, "--batch", "20"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sigmoid_bench_csv() {
    let out = fsslr(&["sigmoid-bench"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("variant,plain_error,fixed_error,plain_ms,fixed_ms"));
    let names: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["taylor1", "segmented_taylor", "segmented_nonlinear", "reciprocal", "sqrt", "exact"]);
}

#[test]
fn comm_bench_csv() {
    let out = fsslr(&["comm-bench", "--sizes", "300x10", "--protocols", "ss,fss-v1,fss-v2", "--batch", "64"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(text.lines().next(), Some("n,d,protocol,online_s,total_s,bytes,rounds"));
    let rounds: Vec<&str> = rows.iter().map(|r| r[6]).collect();
    assert_eq!(rounds, ["8", "4", "8"]);
    // bytes are deterministic under a fixed seed
    let again = String::from_utf8(
        fsslr(&["comm-bench", "--sizes", "300x10", "--protocols", "ss,fss-v1,fss-v2", "--batch", "64"]).stdout,
    )
    .unwrap();
    let bytes = |t: &str| t.lines().skip(1).map(|l| l.split(',').nth(5).unwrap().to_string()).collect::<Vec<_>>();
    assert_eq!(bytes(&text), bytes(&again));
}
