//! The `relpos` binary: determinism, the file pipeline and the error contract.

use std::path::Path;
use std::process::{Command, Output};

use relpos::channel::{ChannelModel, Scenario, Speaker, StepTrace};
use relpos::config::Config;
use relpos::io::{read_rows, FixRow};

fn relpos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relpos"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path) -> String {
    let trace = StepTrace::straight(1.0, 0.5, 10, 0.6);
    let cfg = Config {
        scenario: Some(Scenario::walking(
            Speaker {
                x: 4.0,
                y: 4.0,
                height: 0.0,
            },
            trace,
            6.8,
            0,
        )),
        channel: ChannelModel::with_snr(20.0),
        ..Config::default()
    };
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

fn run_ok(args: &[&str]) {
    let out = relpos(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    for (out, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        run_ok(&[
            "simulate",
            "--config",
            &cfg,
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    let read = |d: &Path| std::fs::read(d.join("rx.wav")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(
        std::fs::read(a.join("truth.csv")).unwrap(),
        std::fs::read(c.join("truth.csv")).unwrap()
    );
}

#[test]
fn sequential_flag_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_ok(&["simulate", "--config", &cfg, "--out", a.to_str().unwrap()]);
    run_ok(&[
        "simulate",
        "--config",
        &cfg,
        "--sequential",
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_eq!(
        std::fs::read(a.join("rx.wav")).unwrap(),
        std::fs::read(b.join("rx.wav")).unwrap()
    );
}

#[test]
fn file_pipeline_locates_the_speaker() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    for cmd in ["synth", "simulate", "demod", "locate"] {
        run_ok(&[cmd, "--config", &cfg, "--out", out_s]);
    }
    for f in [
        "tx.wav",
        "rx.wav",
        "truth.csv",
        "steps.json",
        "phase.csv",
        "score.csv",
        "pulses.csv",
        "fix.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let fix: Vec<FixRow> = read_rows(&out.join("fix.csv")).unwrap();
    assert_eq!(fix.len(), 1);
    assert!((fix[0].x - 4.0).hypot(fix[0].y - 4.0) < 0.1, "{:?}", fix[0]);
    assert!((fix[0].psi_deg - 45.0).abs() < 2.0);
    assert_eq!(fix[0].provenance, "estimated");
}

#[test]
fn errors_are_json_with_exit_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    // simulate without a scenario
    let r = relpos(&["simulate", "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&r.stderr).unwrap();
    assert_eq!(v["error"], "Config");
    assert!(v["message"].as_str().unwrap().contains("scenario"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"schema": 9}"#).unwrap();
    let r = relpos(&[
        "synth",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&r.stderr).unwrap();
    assert_eq!(v["error"], "Config");

    let r = relpos(&[
        "demod",
        "--input",
        dir.path().join("missing.wav").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(serde_json::from_slice::<serde_json::Value>(&r.stderr).is_ok());
}
