//! Black-box tests of the `shaft` binary: artifact layout, idempotence,
//! and the documented exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn shaft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shaft"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn simulate_into(dir: &Path) {
    let out = shaft(&[
        "simulate",
        "--out",
        dir.to_str().unwrap(),
        "--step-secs",
        "0.25",
        "--seed",
        "41",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_writes_all_ten_datasets_idempotently() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    simulate_into(&a);
    simulate_into(&b);
    for id in ["0D", "1D", "2D", "3D", "4D", "0E", "1E", "2E", "3E", "4E"] {
        let fa = a.join(format!("{id}.csv"));
        let fb = b.join(format!("{id}.csv"));
        assert!(fa.is_file(), "{id} missing");
        // Same seed, same bytes.
        assert_eq!(std::fs::read(&fa).unwrap(), std::fs::read(&fb).unwrap(), "{id}");
        let head = std::fs::read_to_string(&fa).unwrap();
        assert!(head.starts_with("V_in,Measured_RPM,Vibration_1,Vibration_2,Vibration_3\n"));
    }
}

#[test]
fn factor_override_changes_only_that_strength() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    simulate_into(&a);
    let out = shaft(&[
        "simulate",
        "--out",
        b.to_str().unwrap(),
        "--step-secs",
        "0.25",
        "--seed",
        "41",
        "--factor",
        "2=100.0",
    ]);
    assert!(out.status.success());
    for id in ["0D", "1D", "3D", "4D", "0E", "1E", "3E", "4E"] {
        assert_eq!(
            std::fs::read(a.join(format!("{id}.csv"))).unwrap(),
            std::fs::read(b.join(format!("{id}.csv"))).unwrap(),
            "{id} should be unchanged"
        );
    }
    for id in ["2D", "2E"] {
        assert_ne!(
            std::fs::read(a.join(format!("{id}.csv"))).unwrap(),
            std::fs::read(b.join(format!("{id}.csv"))).unwrap(),
            "{id} should differ"
        );
    }
}

#[test]
fn features_variants_have_documented_column_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    simulate_into(&data);

    for (variant, n_features) in [("three", 3), ("seven", 7), ("fft", 2048), ("mfcc", 13)] {
        let out_file = dir.path().join(format!("{variant}.csv"));
        let out = shaft(&[
            "features",
            "--in",
            data.to_str().unwrap(),
            "--variant",
            variant,
            "--out",
            out_file.to_str().unwrap(),
            "--datasets",
            "0D",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let text = std::fs::read_to_string(&out_file).unwrap();
        let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
        let trailing_meta = if variant == "three" || variant == "seven" { 2 } else { 3 };
        assert_eq!(
            header.split(',').count(),
            n_features + trailing_meta,
            "{variant}: {header}"
        );
        assert!(text.starts_with("# recipe:"));
    }
}

#[test]
fn train_then_evaluate_json_and_csv_agree() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    simulate_into(&data);

    let model = dir.path().join("model.json");
    let out = shaft(&[
        "train",
        "--approach",
        "rf-minimal3",
        "--mode",
        "pairwise:4",
        "--data",
        data.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--seed",
        "5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(model.is_file());

    let report_json = dir.path().join("report.json");
    let report_csv = dir.path().join("report.csv");
    for (path, format) in [(&report_json, "json"), (&report_csv, "csv")] {
        let out = shaft(&[
            "evaluate",
            "--model",
            model.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--report",
            path.to_str().unwrap(),
            "--format",
            format,
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_json).unwrap()).unwrap();
    let overall = json["overall_accuracy"].as_f64().unwrap();
    assert!(json["rpm_bins"].as_array().unwrap().len() > 1);
    assert_eq!(json["per_class"].as_object().unwrap().len(), 2);

    let csv_text = std::fs::read_to_string(&report_csv).unwrap();
    let csv_overall: f64 = csv_text
        .lines()
        .find(|l| l.starts_with("# overall_accuracy: "))
        .and_then(|l| l.rsplit(' ').next())
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(csv_overall, overall);
    // CSV bins match JSON bins numerically.
    let csv_bins: Vec<Vec<f64>> = csv_text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("center"))
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    let json_bins = json["rpm_bins"].as_array().unwrap();
    assert_eq!(csv_bins.len(), json_bins.len());
    for (c, j) in csv_bins.iter().zip(json_bins) {
        assert_eq!(c[0], j["center"].as_f64().unwrap());
        assert_eq!(c[1], j["acc"].as_f64().unwrap());
        assert_eq!(c[2] as usize, j["n"].as_u64().unwrap() as usize);
    }
}

#[test]
fn bad_approach_is_a_usage_error() {
    let out = shaft(&["train", "--approach", "boosted-stumps", "--data", "/tmp", "--out", "/tmp/m"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_dataset_has_exit_code_5() {
    let dir = tempfile::tempdir().unwrap();
    let out = shaft(&[
        "train",
        "--approach",
        "rf-minimal3",
        "--data",
        dir.path().to_str().unwrap(),
        "--out",
        dir.path().join("m.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn incompatible_model_container_has_exit_code_6() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    simulate_into(&data);
    let model = dir.path().join("model.json");
    let out = shaft(&[
        "train",
        "--approach",
        "rf-minimal3",
        "--mode",
        "pairwise:4",
        "--data",
        data.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    // Bump the container version in place.
    let text = std::fs::read_to_string(&model).unwrap();
    let bumped = text.replacen("\"format_version\":1", "\"format_version\":99", 1);
    assert_ne!(text, bumped);
    std::fs::write(&model, bumped).unwrap();

    let out = shaft(&[
        "evaluate",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--report",
        dir.path().join("r.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(6), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn data_dir_falls_back_to_env_var() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    simulate_into(&data);
    let out_file = dir.path().join("f.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_shaft"))
        .args([
            "features",
            "--variant",
            "three",
            "--out",
            out_file.to_str().unwrap(),
            "--datasets",
            "0D",
        ])
        .env("SHAFT_DATA_DIR", data.to_str().unwrap())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_file.is_file());
}
