use std::path::Path;
use std::process::Command;

fn recover() -> Command {
    Command::new(env!("CARGO_BIN_EXE_recover"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL: &str =
    r#"{"d": 2, "k_true": 4, "epsilon_dist": 0.08, "c": 12, "m": 160, "grid_resolution": 16}"#;

#[test]
fn run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let status = recover()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--seed", "3", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for name in [
        "report.json",
        "comp_trace.csv",
        "pgd_trace.csv",
        "bp_observation.csv",
        "bp_observation.bin",
        "bp_residue_scomp.csv",
        "bp_residue_scomp.bin",
        "bp_residue_opcomp-pgd.csv",
        "bp_residue_opcomp-pgd.bin",
    ] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 3);
    assert_eq!(report["methods"].as_array().unwrap().len(), 2);
}

#[test]
fn method_flag_selects_one_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let status = recover()
        .args(["run", "--method", "scomp", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(!out.join("pgd_trace.csv").exists());
    let header = std::fs::read_to_string(out.join("comp_trace.csv")).unwrap();
    assert!(header.starts_with("k,residue_norm,cond_M,wall_ms,stop_reason"));
}

#[test]
fn config_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), r#"{"k_true": 0}"#);
    let status = recover().args(["run", "--config"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(3));
    let missing = dir.path().join("nope.json");
    let status = recover()
        .args(["run", "--config"])
        .arg(&missing)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
    let good = write_config(dir.path(), SMALL);
    let status = recover()
        .args(["run", "--method", "lasso", "--config"])
        .arg(&good)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn infeasible_packing_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"d": 1, "k_true": 50, "epsilon_dist": 0.1}"#);
    let status = recover().args(["run", "--config"]).arg(&config).status().unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn gradcheck_passes() {
    let output = recover()
        .args([
            "gradcheck",
            "--d",
            "2",
            "--k",
            "4",
            "--m",
            "100",
            "--instances",
            "5",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(text.contains("max relative error"), "{text}");
}

#[test]
fn heatmap_writes_observation_only() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("maps");
    let status = recover()
        .args(["heatmap", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let bytes = std::fs::read(out.join("bp_observation.bin")).unwrap();
    assert_eq!(&bytes[..4], b"GRDF");
    assert_eq!(bytes.len(), 16 + 16 * 16 * 8);
    assert!(!out.join("report.json").exists());

    let config3 = write_config(dir.path(), r#"{"d": 3, "k_true": 3, "epsilon_dist": 0.1}"#);
    let status = recover()
        .args(["heatmap", "--config"])
        .arg(&config3)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}
