// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::thread::sleep;
use std::time::{Duration, Instant};

use serde_json::Value;

const SIM: &str = env!("CARGO_BIN_EXE_revelio-sim");
const SP: &str = env!("CARGO_BIN_EXE_revelio-sp");
const ATTEST: &str = env!("CARGO_BIN_EXE_revelio-attest");
const DOMAIN: &str = "app.revelio.test";

fn run(bin: &str, args: &[&str]) -> Output {
    Command::new(bin).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn json_lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

struct Served(Child);

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn serve(dir: &Path, nodes: usize) -> Served {
    let child = Command::new(SIM)
        .args(["serve", "--nodes", &nodes.to_string(), "--seed", "9", "--dir"])
        .arg(dir)
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    let served = Served(child);
    let deadline = Instant::now() + Duration::from_secs(30);
    while !dir.join("deployment.json").exists() {
        assert!(Instant::now() < deadline, "serve did not come up");
        sleep(Duration::from_millis(50));
    }
    served
}

#[test]
fn sim_lists_every_scenario() {
    let out = run(SIM, &["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 12);
    for name in [
        "none",
        "malicious-ovmf",
        "cert-redirect-mitm",
        "wrong-measurement-leader",
    ] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name}");
    }
}

#[test]
fn sim_run_is_deterministic_and_writes_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let t1 = dir.path().join("a.jsonl");
    let t2 = dir.path().join("b.jsonl");
    let a = run(
        SIM,
        &[
            "run",
            "--scenario",
            "none",
            "--seed",
            "4",
            "--transcript",
            t1.to_str().unwrap(),
        ],
    );
    let b = run(
        SIM,
        &[
            "run",
            "--scenario",
            "none",
            "--seed",
            "4",
            "--transcript",
            t2.to_str().unwrap(),
        ],
    );
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(fs::read(&t1).unwrap(), fs::read(&t2).unwrap());
    let report = stdout_json(&a);
    assert_eq!(report["scenario"], "none");
    assert_eq!(report["certificates_issued"], 1);
    assert!(report["detections"].as_array().unwrap().is_empty());
    let lines = fs::read_to_string(&t1).unwrap();
    assert_eq!(
        lines.lines().count() as u64,
        report["transcript_messages"].as_u64().unwrap()
    );
}

#[test]
fn sim_run_attack_reports_detections() {
    let out = run(SIM, &["run", "--scenario", "malicious-kernel", "--nodes", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert!(!report["detections"].as_array().unwrap().is_empty());
    assert!(report["violations"].as_array().unwrap().is_empty());

    let all = run(SIM, &["run", "--scenario", "all"]);
    assert!(all.status.success());
    assert_eq!(stdout_json(&all).as_array().unwrap().len(), 12);
}

#[test]
fn sim_rejects_unknown_scenario() {
    let out = run(SIM, &["run", "--scenario", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn serve_round_and_attest_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let _served = serve(dir.path(), 3);
    let deployment = dir.path().join("deployment.json");
    let registry = dir.path().join("registry.txt");
    let dep = deployment.to_str().unwrap();
    let reg = registry.to_str().unwrap();

    // before any certificate the node still attests; its own key is served
    let early = run(
        ATTEST,
        &["--domain", DOMAIN, "--registry", reg, "--deployment", dep, "--once"],
    );
    assert_eq!(
        early.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&early.stdout)
    );

    let round = run(SP, &["run-round", "--deployment", dep, "--registry", reg]);
    assert_eq!(
        round.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&round.stderr)
    );
    let outcome = stdout_json(&round);
    assert_eq!(outcome["status"], "ok");
    assert_eq!(outcome["outcome"]["validations"], 3);
    assert_eq!(outcome["outcome"]["installs"], 3);
    let log: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("ca-log.json")).unwrap()).unwrap();
    assert_eq!(log.as_array().unwrap().len(), 1);

    let monitor = run(
        ATTEST,
        &[
            "--domain",
            DOMAIN,
            "--registry",
            reg,
            "--deployment",
            dep,
            "--monitor",
            "--requests",
            "3",
        ],
    );
    assert_eq!(monitor.status.code(), Some(0));
    let lines = json_lines(&monitor);
    assert_eq!(lines.len(), 4);
    assert!(lines.iter().all(|l| l["verdict"]["status"] == "Trusted"));

    // every node now serves the same key
    let manifest: Value = serde_json::from_str(&fs::read_to_string(&deployment).unwrap()).unwrap();
    for node in manifest["nodes"].as_array().unwrap() {
        let out = run(
            ATTEST,
            &[
                "--domain",
                DOMAIN,
                "--registry",
                reg,
                "--deployment",
                dep,
                "--connect",
                node.as_str().unwrap(),
            ],
        );
        assert_eq!(out.status.code(), Some(0));
    }

    let revoked = dir.path().join("revoked.txt");
    fs::write(
        &revoked,
        fs::read_to_string(&registry).unwrap().replace("accepted", "revoked"),
    )
    .unwrap();
    let out = run(
        ATTEST,
        &[
            "--domain",
            DOMAIN,
            "--registry",
            revoked.to_str().unwrap(),
            "--deployment",
            dep,
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json_lines(&out)[0]["verdict"]["status"], "RevokedMeasurement");

    // the SP refuses to proceed when policy revokes the running measurement
    let refused = run(
        SP,
        &[
            "run-round",
            "--deployment",
            dep,
            "--registry",
            revoked.to_str().unwrap(),
        ],
    );
    assert_eq!(refused.status.code(), Some(1));
    assert_eq!(stdout_json(&refused)["reason"], "no_accepted_nodes");
}

#[test]
fn sp_rate_limit_persists_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let _served = serve(dir.path(), 1);
    let dep = dir.path().join("deployment.json");
    let mut codes = Vec::new();
    for _ in 0..6 {
        let out = run(SP, &["run-round", "--deployment", dep.to_str().unwrap()]);
        codes.push(out.status.code());
        if out.status.code() == Some(1) {
            assert_eq!(stdout_json(&out)["reason"], "rate_limit");
        }
    }
    assert_eq!(codes, [Some(0), Some(0), Some(0), Some(0), Some(0), Some(1)]);
}

#[test]
fn attest_without_a_server_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let registry = dir.path().join("r.txt");
    fs::write(&registry, format!("{DOMAIN} {} accepted\n", "ab".repeat(48))).unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap();
    let addr = port.to_string();
    let out = run(
        ATTEST,
        &[
            "--domain",
            DOMAIN,
            "--registry",
            registry.to_str().unwrap(),
            "--connect",
            &addr,
            "--kds",
            &addr,
            "--ark",
            &"00".repeat(32),
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json_lines(&out)[0]["verdict"]["status"], "Inconclusive");
}
