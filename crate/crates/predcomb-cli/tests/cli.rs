//! End-to-end tests of the `predcomb` binary: flag plumbing, file outputs,
//! determinism, and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn predcomb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_predcomb"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

#[test]
fn toygen_writes_dataset_and_manifest_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("a.csv");
    let out2 = dir.path().join("b.csv");
    for out in [&out1, &out2] {
        let res = predcomb(&["toygen", "--mode", "xor", "--seed", "7", "-o", path_str(out)]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out2).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b, "same flags and seed must produce byte-identical CSVs");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.csv.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "toygen");
    assert_eq!(manifest["seed"], 7);
}

#[test]
fn denoise_zero_iterations_round_trips_the_target() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.csv");
    let res = predcomb(&["toygen", "--seed", "3", "-o", path_str(&data)]);
    assert!(res.status.success());
    let prefix = dir.path().join("run");
    let res = predcomb(&[
        "denoise",
        "--input",
        path_str(&data),
        "--algo",
        "npc",
        "--iters",
        "0",
        "--out-prefix",
        path_str(&prefix),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    // Column 3 of the dataset ("target") must match the denoised values.
    let raw = std::fs::read_to_string(&data).unwrap();
    let targets: Vec<f64> = raw
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    let denoised = std::fs::read_to_string(dir.path().join("run.denoised.csv")).unwrap();
    let values: Vec<f64> = denoised
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(targets.len(), values.len());
    for (t, v) in targets.iter().zip(&values) {
        assert!((t - v).abs() <= 1e-8, "round trip drifted: {t} vs {v}");
    }
    assert!(dir.path().join("run.metrics.csv").exists());
    assert!(dir.path().join("run.summary.json").exists());
    assert!(dir.path().join("run.manifest.json").exists());
}

#[test]
fn denoise_npc_improves_toy1_target_only() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.csv");
    assert!(predcomb(&["toygen", "--seed", "7", "-o", path_str(&data)]).status.success());
    let prefix = dir.path().join("npc");
    let res = predcomb(&[
        "denoise",
        "--input",
        path_str(&data),
        "--algo",
        "npc",
        "--no-joint",
        "--out-prefix",
        path_str(&prefix),
    ]);
    assert!(res.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("npc.summary.json")).unwrap())
            .unwrap();
    let acc = summary["final_metrics"]["test_rank_accuracy"].as_f64().unwrap();
    assert!(acc >= 99.0, "target-only NPC on toy1 scored {acc}");
}

#[test]
fn ard_single_reference_gets_weight_one() {
    let dir = tempfile::tempdir().unwrap();
    // Hand-built dataset with one reference.
    let data = dir.path().join("one_ref.csv");
    let mut body = String::from("id,split,gt,target,ref_1\n");
    let mut state = 11.0_f64;
    for i in 0..40 {
        state = (state * 7.13 + 3.7) % 10.0;
        let split = if i % 2 == 0 { "val" } else { "test" };
        body.push_str(&format!("{i},{split},{state},{},{}\n", state + 0.1, state * 2.0));
    }
    std::fs::write(&data, body).unwrap();
    let out = dir.path().join("weights.csv");
    let res = predcomb(&["ard", "--input", path_str(&data), "-o", path_str(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let content = std::fs::read_to_string(&out).unwrap();
    let mut lines = content.lines();
    assert_eq!(lines.next(), Some("ref,weight_raw,weight_normalized"));
    let row = lines.next().unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[0], "ref_1");
    assert_eq!(fields[2].parse::<f64>().unwrap(), 1.0);
    assert!(lines.next().is_none());
}

#[test]
fn ard_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.csv");
    assert!(predcomb(&["toygen", "--seed", "5", "-o", path_str(&data)]).status.success());
    let out1 = dir.path().join("w1.csv");
    let out2 = dir.path().join("w2.csv");
    for out in [&out1, &out2] {
        assert!(predcomb(&["ard", "--input", path_str(&data), "-o", path_str(out)])
            .status
            .success());
    }
    assert_eq!(std::fs::read(&out1).unwrap(), std::fs::read(&out2).unwrap());
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    // Usage error -> 2 (clap).
    let res = predcomb(&["denoise", "--no-such-flag"]);
    assert_eq!(res.status.code(), Some(2));
    // Missing input file -> 3.
    let res = predcomb(&[
        "denoise",
        "--input",
        path_str(&dir.path().join("missing.csv")),
        "--out-prefix",
        path_str(&dir.path().join("x")),
    ]);
    assert_eq!(res.status.code(), Some(3));
    // Numerical / domain error -> 4.
    let data = dir.path().join("toy.csv");
    assert!(predcomb(&["toygen", "--seed", "1", "-o", path_str(&data)]).status.success());
    let res = predcomb(&[
        "denoise",
        "--input",
        path_str(&data),
        "--sigma-sq=-1",
        "--out-prefix",
        path_str(&dir.path().join("y")),
    ]);
    assert_eq!(res.status.code(), Some(4));
    let msg = String::from_utf8_lossy(&res.stderr);
    assert!(msg.contains("noise"), "diagnostic should name the failing check: {msg}");
}

#[test]
fn bench_writes_csvs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("bench");
    let res = predcomb(&[
        "bench",
        "toy2",
        "--seeds",
        "2",
        "--out-prefix",
        path_str(&prefix),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("toy2"), "pretty table printed: {stdout}");
    let per_seed = std::fs::read_to_string(dir.path().join("bench.per_seed.csv")).unwrap();
    // header + (baseline + opc + lpc + npc) x 2 seeds
    assert_eq!(per_seed.lines().count(), 1 + 4 * 2);
    assert!(dir.path().join("bench.summary.csv").exists());
    assert!(dir.path().join("bench.manifest.json").exists());
}
