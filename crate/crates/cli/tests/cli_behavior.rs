//! Exit codes, validation messages, and configuration precedence.

mod common;

use std::fs;

use common::{code, fixture, run, run_with_env, stderr_text, stdout_text};
use tempfile::TempDir;

fn write_tmp(dir: &TempDir, name: &str, content: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, content).unwrap();
    path.to_string_lossy().into_owned()
}

fn out_dir(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["classify", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    let out = run(&["classify", "--bogus"]);
    assert_eq!(code(&out), 1);
    let out = run(&[]);
    assert_eq!(code(&out), 1);
    let out = run(&["frobnicate"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn unknown_extension_is_rejected_with_expected_list() {
    let tmp = TempDir::new().unwrap();
    let input = write_tmp(&tmp, "data.txt", "case_id,finding,p_yes,gt\n");
    let out = run(&["classify", "--input", &input, "--out-dir", &out_dir(&tmp, "o")]);
    assert_eq!(code(&out), 1);
    let err = stderr_text(&out);
    assert!(err.contains("cannot infer input format"), "{err}");
    assert!(err.contains(".csv"), "{err}");
}

#[test]
fn missing_input_file_exits_one() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.csv").to_string_lossy().into_owned();
    let out = run(&["classify", "--input", &missing, "--out-dir", &out_dir(&tmp, "o")]);
    assert_eq!(code(&out), 1);
    assert!(stderr_text(&out).contains("nope.csv"));
}

#[test]
fn missing_gt_column_names_the_column() {
    let tmp = TempDir::new().unwrap();
    let input = write_tmp(&tmp, "no_gt.csv", "case_id,finding,p_yes\nc1,f,0.5\n");
    let out = run(&["classify", "--input", &input, "--out-dir", &out_dir(&tmp, "o")]);
    assert_eq!(code(&out), 1);
    assert!(stderr_text(&out).contains("\"gt\""), "{}", stderr_text(&out));
}

#[test]
fn missing_gt_value_names_the_case() {
    let tmp = TempDir::new().unwrap();
    let input = write_tmp(
        &tmp,
        "half_gt.jsonl",
        concat!(
            "{\"case_id\":\"c1\",\"finding\":\"f\",\"p_yes\":0.5}\n",
            "{\"case_id\":\"c2\",\"finding\":\"f\",\"p_yes\":0.6,\"gt\":1}\n",
        ),
    );
    let out = run(&["classify", "--input", &input, "--out-dir", &out_dir(&tmp, "o")]);
    assert_eq!(code(&out), 1);
    let err = stderr_text(&out);
    assert!(err.contains("c1") && err.contains("gt"), "{err}");
}

#[test]
fn degenerate_min_max_range_exits_one() {
    let tmp = TempDir::new().unwrap();
    let lines: String = (0..8)
        .map(|i| format!("{{\"case_id\":\"c{i}\",\"image_report_cosine\":0.5}}\n"))
        .collect();
    let input = write_tmp(&tmp, "flat.jsonl", &lines);
    let out = run(&["report", "--input", &input, "--out-dir", &out_dir(&tmp, "o")]);
    assert_eq!(code(&out), 1);
    assert!(stderr_text(&out).contains("degenerate range"), "{}", stderr_text(&out));
}

#[test]
fn out_of_order_and_out_of_range_alphas_exit_one() {
    let tmp = TempDir::new().unwrap();
    let labels = fixture("labels_small.csv");
    let labels = labels.to_str().unwrap();
    let o = out_dir(&tmp, "o");
    let out = run(&["classify", "--input", labels, "--out-dir", &o, "--alphas", "0.2,0.1"]);
    assert_eq!(code(&out), 1);
    assert!(stderr_text(&out).contains("strictly increasing"));
    let out = run(&["classify", "--input", labels, "--out-dir", &o, "--alphas", "0"]);
    assert_eq!(code(&out), 1);
    assert!(stderr_text(&out).contains("strictly between 0 and 1"));
}

#[test]
fn bad_calibration_fraction_exits_one() {
    let tmp = TempDir::new().unwrap();
    let labels = fixture("labels_small.csv");
    let out = run(&[
        "classify",
        "--input",
        labels.to_str().unwrap(),
        "--out-dir",
        &out_dir(&tmp, "o"),
        "--calibration-fraction",
        "1.5",
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr_text(&out).contains("calibration fraction"));
}

#[test]
fn too_few_permutations_exits_one() {
    let tmp = TempDir::new().unwrap();
    let labels = fixture("labels_small.csv");
    let out = run(&[
        "classify",
        "--input",
        labels.to_str().unwrap(),
        "--out-dir",
        &out_dir(&tmp, "o"),
        "--n-perm",
        "10",
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr_text(&out).contains("permutation"), "{}", stderr_text(&out));
}

fn seed_in_report(dir: &TempDir, name: &str) -> u64 {
    let text = fs::read_to_string(dir.path().join(name).join("report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["config"]["seed"].as_u64().unwrap()
}

#[test]
fn seed_precedence_is_flag_config_env_default() {
    let tmp = TempDir::new().unwrap();
    let labels = fixture("labels_small.csv");
    let labels = labels.to_str().unwrap();
    let cfg = write_tmp(&tmp, "cfg.json", r#"{"seed": 42}"#);

    let out = run(&["classify", "--input", labels, "--out-dir", &out_dir(&tmp, "a")]);
    assert_eq!(code(&out), 0, "{}", stderr_text(&out));
    assert_eq!(seed_in_report(&tmp, "a"), 0, "default seed");

    let out = run_with_env(
        &["classify", "--input", labels, "--out-dir", &out_dir(&tmp, "b")],
        &[("CPKIT_SEED", "7")],
    );
    assert_eq!(code(&out), 0);
    assert_eq!(seed_in_report(&tmp, "b"), 7, "env seed");

    let out = run_with_env(
        &["classify", "--input", labels, "--out-dir", &out_dir(&tmp, "c"), "--config", &cfg],
        &[("CPKIT_SEED", "7")],
    );
    assert_eq!(code(&out), 0);
    assert_eq!(seed_in_report(&tmp, "c"), 42, "config beats env");

    let out = run_with_env(
        &[
            "classify", "--input", labels, "--out-dir", &out_dir(&tmp, "d"), "--config", &cfg,
            "--seed", "9",
        ],
        &[("CPKIT_SEED", "7")],
    );
    assert_eq!(code(&out), 0);
    assert_eq!(seed_in_report(&tmp, "d"), 9, "flag beats config");
}

#[test]
fn invalid_env_seed_exits_one() {
    let tmp = TempDir::new().unwrap();
    let labels = fixture("labels_small.csv");
    let out = run_with_env(
        &["classify", "--input", labels.to_str().unwrap(), "--out-dir", &out_dir(&tmp, "o")],
        &[("CPKIT_SEED", "not-a-number")],
    );
    assert_eq!(code(&out), 1);
    assert!(stderr_text(&out).contains("CPKIT_SEED"));
}

#[test]
fn unknown_config_key_exits_one() {
    let tmp = TempDir::new().unwrap();
    let labels = fixture("labels_small.csv");
    let cfg = write_tmp(&tmp, "cfg.json", r#"{"sede": 42}"#);
    let out = run(&[
        "classify",
        "--input",
        labels.to_str().unwrap(),
        "--out-dir",
        &out_dir(&tmp, "o"),
        "--config",
        &cfg,
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr_text(&out).contains("unknown field"), "{}", stderr_text(&out));
}

#[test]
fn config_file_supplies_alphas_and_fraction() {
    let tmp = TempDir::new().unwrap();
    let labels = fixture("labels_small.csv");
    let cfg = write_tmp(
        &tmp,
        "cfg.json",
        r#"{"alphas": [0.1, 0.3], "calibration_fraction": 0.5, "formats": ["json"]}"#,
    );
    let o = out_dir(&tmp, "o");
    let out = run(&[
        "classify", "--input", labels.to_str().unwrap(), "--out-dir", &o, "--config", &cfg,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_text(&out));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("o/report.json")).unwrap())
            .unwrap();
    assert_eq!(v["config"]["alphas"], serde_json::json!([0.1, 0.3]));
    assert_eq!(v["config"]["calibration_fraction"], serde_json::json!(0.5));
    assert!(!tmp.path().join("o/report.txt").exists(), "text output suppressed");
}

#[test]
fn formats_flag_controls_which_reports_exist() {
    let tmp = TempDir::new().unwrap();
    let labels = fixture("labels_small.csv");
    let o = out_dir(&tmp, "o");
    let out = run(&[
        "classify", "--input", labels.to_str().unwrap(), "--out-dir", &o, "--formats", "text",
    ]);
    assert_eq!(code(&out), 0);
    assert!(tmp.path().join("o/report.txt").exists());
    assert!(!tmp.path().join("o/report.json").exists());
    // Threshold and split files are written regardless.
    assert!(tmp.path().join("o/thresholds.json").exists());
    assert!(tmp.path().join("o/data_with_split.csv").exists());
}

#[test]
fn finding_without_positives_runs_and_reports_null_auroc() {
    let tmp = TempDir::new().unwrap();
    let mut csv = String::from("case_id,finding,p_yes,gt\n");
    for i in 0..20 {
        csv.push_str(&format!("n{i:02},clean,0.{:02},0\n", 5 + i * 2));
    }
    let input = write_tmp(&tmp, "no_pos.csv", &csv);
    let o = out_dir(&tmp, "o");
    let out = run(&["classify", "--input", &input, "--out-dir", &o, "--alphas", "0.2"]);
    assert_eq!(code(&out), 0, "{}", stderr_text(&out));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("o/report.json")).unwrap())
            .unwrap();
    let report = &v["cells"][0]["report"];
    let metrics = &report["metrics_uncertain"];
    let metrics =
        if metrics.is_null() { &report["metrics_certain"] } else { metrics };
    assert!(metrics["auroc"].is_null(), "single-class stratum has no auroc: {metrics}");
    assert!(metrics["n_pos"] == 0);
}

#[test]
fn split_output_reingests_cleanly() {
    let tmp = TempDir::new().unwrap();
    let labels = fixture("labels_small.csv");
    let o1 = out_dir(&tmp, "one");
    let out = run(&["classify", "--input", labels.to_str().unwrap(), "--out-dir", &o1]);
    assert_eq!(code(&out), 0);
    let with_split = tmp.path().join("one/data_with_split.csv");
    let o2 = out_dir(&tmp, "two");
    let out = run(&["classify", "--input", with_split.to_str().unwrap(), "--out-dir", &o2]);
    assert_eq!(code(&out), 0, "{}", stderr_text(&out));
    // Same rows, same seed: identical thresholds.
    let a = fs::read_to_string(tmp.path().join("one/thresholds.json")).unwrap();
    let b = fs::read_to_string(tmp.path().join("two/thresholds.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn yes_no_transform_ingests_mass_columns() {
    let tmp = TempDir::new().unwrap();
    let mut csv = String::from("case_id,finding,p_yes_raw,p_no_raw,gt\n");
    for i in 0..16 {
        let yes = 1.0 + f64::from(i) * 0.5;
        let no = 9.0 - f64::from(i) * 0.5;
        let gt = u8::from(i >= 8);
        csv.push_str(&format!("m{i:02},f,{yes},{no},{gt}\n"));
    }
    let input = write_tmp(&tmp, "masses.csv", &csv);
    let o = out_dir(&tmp, "o");
    let out =
        run(&["classify", "--input", &input, "--out-dir", &o, "--transform", "yes-no"]);
    assert_eq!(code(&out), 0, "{}", stderr_text(&out));
    let split_text = fs::read_to_string(tmp.path().join("o/data_with_split.csv")).unwrap();
    // Materialized rows carry the normalized probability, ready to re-ingest
    // with the default transform.
    assert!(split_text.starts_with("case_id,finding,p_yes,gt,split"), "{split_text}");
    assert!(split_text.contains("0.1"), "{split_text}");
}

#[test]
fn sigmoid_diff_transform_ingests_similarity_pairs() {
    let tmp = TempDir::new().unwrap();
    let mut csv = String::from("case_id,finding,c_with,c_without,gt\n");
    for i in 0..16 {
        let with = -0.4 + f64::from(i) * 0.05;
        let without = 0.4 - f64::from(i) * 0.05;
        let gt = u8::from(i >= 8);
        csv.push_str(&format!("s{i:02},f,{with},{without},{gt}\n"));
    }
    let input = write_tmp(&tmp, "pairs.csv", &csv);
    let o = out_dir(&tmp, "o");
    let out =
        run(&["classify", "--input", &input, "--out-dir", &o, "--transform", "sigmoid-diff"]);
    assert_eq!(code(&out), 0, "{}", stderr_text(&out));
}

#[test]
fn report_rejects_unknown_transform() {
    let tmp = TempDir::new().unwrap();
    let align = fixture("alignment_small.jsonl");
    let out = run(&[
        "report",
        "--input",
        align.to_str().unwrap(),
        "--out-dir",
        &out_dir(&tmp, "o"),
        "--transform",
        "yes-no",
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn validate_coverage_passes_nominally_and_fails_under_fault_injection() {
    let tmp = TempDir::new().unwrap();
    let o = out_dir(&tmp, "ok");
    let out = run(&[
        "validate-coverage", "--out-dir", &o, "--n-cal", "100", "--n-test", "200",
        "--n-trials", "200", "--slack", "0.02", "--seed", "5",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_text(&out));
    assert!(stdout_text(&out).contains("coverage guarantee holds"));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("ok/coverage.json")).unwrap())
            .unwrap();
    assert_eq!(v["pass"], serde_json::json!(true));
    assert_eq!(v["results"].as_array().unwrap().len(), 3);

    let o = out_dir(&tmp, "broken");
    let out = run(&[
        "validate-coverage", "--out-dir", &o, "--n-cal", "50", "--n-test", "200",
        "--n-trials", "200", "--rank-offset", "-1", "--seed", "5",
    ]);
    assert_eq!(code(&out), 2, "{}", stderr_text(&out));
    assert!(stdout_text(&out).contains("coverage guarantee violated"));
    let v: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("broken/coverage.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(v["pass"], serde_json::json!(false));
}
