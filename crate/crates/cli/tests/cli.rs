use std::path::Path;
use std::process::{Command, Output};

fn branchlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_branchlab"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = branchlab(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let inst_dir = dir.path().join("inst");
    ok(&[
        "generate",
        "--family",
        "cauction",
        "--size",
        "desk",
        "--count",
        "2",
        "--out",
        path(&inst_dir),
        "--seed",
        "3",
    ]);
    let file = inst_dir.join("cauction-desk-0000.milp");
    let out = ok(&[
        "--json",
        "solve",
        "--instance",
        path(&file),
        "--policy",
        "pc",
    ]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["status"], "optimal");
    assert!(v["nodes"].as_u64().unwrap() >= 1);

    let again = ok(&[
        "--json",
        "solve",
        "--instance",
        path(&file),
        "--policy",
        "pc",
    ]);
    let w: serde_json::Value = serde_json::from_str(&again).unwrap();
    assert_eq!(v["objective"], w["objective"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let inst_dir = dir.path().join("inst");
    ok(&[
        "generate",
        "--family",
        "cauction",
        "--size",
        "bench",
        "--count",
        "1",
        "--out",
        path(&inst_dir),
    ]);
    let file = inst_dir.join("cauction-bench-0000.milp");
    assert_eq!(
        branchlab(&[
            "solve",
            "--instance",
            path(&file),
            "--policy",
            "random",
            "--node-limit",
            "1"
        ])
        .status
        .code(),
        Some(3)
    );
    assert_eq!(
        branchlab(&["solve", "--instance", "/nonexistent.milp"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        branchlab(&["solve", "--instance", path(&file), "--policy", "oracle"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        branchlab(&[
            "solve",
            "--instance",
            path(&file),
            "--policy",
            "gcnn:/nonexistent.bin"
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn collect_train_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let model = dir.path().join("model.bin");
    let insts = dir.path().join("inst");
    ok(&[
        "collect",
        "--family",
        "cauction",
        "--size",
        "desk",
        "--train",
        "40",
        "--valid",
        "10",
        "--test",
        "10",
        "--out",
        path(&data),
    ]);
    assert!(data.join("manifest.toml").exists());
    ok(&[
        "train",
        "--data",
        path(&data),
        "--out",
        path(&model),
        "--hidden",
        "8",
        "--max-epochs",
        "2",
    ]);
    assert!(dir.path().join("model.history.csv").exists());

    let acc: serde_json::Value = serde_json::from_str(&ok(&[
        "--json",
        "accuracy",
        "--model",
        path(&model),
        "--data",
        path(&data),
    ]))
    .unwrap();
    assert_eq!(acc["model"]["samples"], 10);

    let csv = dir.path().join("entropy.csv");
    ok(&[
        "entropy",
        "--model",
        path(&model),
        "--data",
        path(&data),
        "--out",
        path(&csv),
    ]);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 11);

    ok(&[
        "generate",
        "--family",
        "cauction",
        "--size",
        "desk",
        "--count",
        "2",
        "--out",
        path(&insts),
        "--seed",
        "9",
    ]);
    let policies = format!("fsb,random,gcnn:{}", path(&model));
    let reports = dir.path().join("reports");
    let out = ok(&[
        "--json",
        "evaluate",
        "--policies",
        &policies,
        "--instances",
        path(&insts),
        "--seeds",
        "0,1",
        "--report",
        path(&reports),
    ]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["runs"].as_array().unwrap().len(), 3 * 2 * 2);
    assert!(reports.join("summary.csv").exists());
}
