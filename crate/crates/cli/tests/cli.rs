//! End-to-end checks of the binary: output file shapes, error formatting,
//! and config validation, all through `std::process::Command`.

use std::path::Path;
use std::process::{Command, Output};

fn xmodal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xmodal")).args(args).output().unwrap()
}

fn stderr_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

/// Every failure must produce exactly one diagnostic line of the form
/// `error[CODE]: message`.
fn assert_single_error_line(out: &Output, code: &str) -> String {
    let text = stderr_line(out);
    assert!(
        !out.status.success(),
        "expected a failing exit, got success with stderr: {text}"
    );
    let prefix = format!("error[{code}]: ");
    assert!(
        text.starts_with(&prefix),
        "stderr should start with {prefix:?}, got: {text}"
    );
    assert_eq!(
        text.trim_end_matches('\n').lines().count(),
        1,
        "diagnostic should be a single line, got: {text}"
    );
    text
}

fn write_small_dataset(dir: &Path) {
    // Six points on a line, two 1-d modalities related by y = 2x.
    let latent = "dim_0\n0.1\n0.3\n0.5\n0.7\n0.9\n1.1\n";
    let a = "dim_0\n0.1\n0.3\n0.5\n0.7\n0.9\n1.1\n";
    let b = "dim_0\n0.2\n0.6\n1.0\n1.4\n1.8\n2.2\n";
    std::fs::write(dir.join("latent.csv"), latent).unwrap();
    std::fs::write(dir.join("a.csv"), a).unwrap();
    std::fs::write(dir.join("b.csv"), b).unwrap();
}

fn write_config(dir: &Path, extra: &str) -> String {
    let cfg = format!(
        r#"{{
  "site": {{ "kind": "knn", "latent_csv": "{latent}", "k_nn": 2 }},
  "modalities": [
    {{ "id": "a", "csv": "{a}" }},
    {{ "id": "b", "csv": "{b}" }}
  ],
  "pairs": [["a", "b"]],
  "epsilons": [0.5],
  "seed": 11{extra}
}}"#,
        latent = dir.join("latent.csv").display(),
        a = dir.join("a.csv").display(),
        b = dir.join("b.csv").display(),
    );
    let path = dir.join("config.json");
    std::fs::write(&path, &cfg).unwrap();
    path.display().to_string()
}

#[test]
fn tradeoff_svg_is_wellformed_with_one_polyline_per_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = xmodal(&[
        "demo",
        "signflip",
        "--cut",
        "3",
        "--seed",
        "7",
        "--out",
        &dir.path().display().to_string(),
    ]);
    assert!(out.status.success(), "{}", stderr_line(&out));
    let svg = std::fs::read_to_string(dir.path().join("a_to_b.tradeoff.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).expect("plot should be well-formed XML");
    let root = doc.root_element();
    assert_eq!(root.tag_name().name(), "svg");
    let polylines: Vec<_> =
        doc.descendants().filter(|n| n.tag_name().name() == "polyline").collect();
    assert_eq!(polylines.len(), 2, "one polyline per curve (error, variation)");
    for p in &polylines {
        let points = p.attribute("points").expect("polyline needs points");
        assert!(
            points.split_whitespace().count() >= 2,
            "each curve should have at least two points"
        );
    }
}

#[test]
fn missing_config_is_a_single_error_line_naming_the_path() {
    let out = xmodal(&["site", "--config", "/nonexistent/config.json"]);
    let line = assert_single_error_line(&out, "E_INVALID");
    assert!(line.contains("/nonexistent/config.json"), "should name the path: {line}");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_config_field_is_rejected_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    write_small_dataset(dir.path());
    let cfg = write_config(dir.path(), ",\n  \"not_a_field\": 3");
    let out = xmodal(&["site", "--config", &cfg]);
    let line = assert_single_error_line(&out, "E_JSON");
    assert!(line.contains("not_a_field"), "should name the offending field: {line}");
}

#[test]
fn non_positive_epsilon_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_small_dataset(dir.path());
    let cfg = write_config(dir.path(), "");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("[0.5]", "[0.0]");
    std::fs::write(&cfg, text).unwrap();
    let out = xmodal(&["site", "--config", &cfg]);
    let line = assert_single_error_line(&out, "E_INVALID");
    assert!(line.contains("epsilon"), "should mention epsilons: {line}");
}

#[test]
fn pair_referencing_unknown_modality_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_small_dataset(dir.path());
    let cfg = write_config(dir.path(), "");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("[[\"a\", \"b\"]]", "[[\"a\", \"z\"]]");
    std::fs::write(&cfg, text).unwrap();
    let out = xmodal(&["site", "--config", &cfg]);
    let line = assert_single_error_line(&out, "E_INVALID");
    assert!(line.contains('z'), "should name the unknown modality: {line}");
}

#[test]
fn hardness_without_whitened_inputs_names_the_fix() {
    let dir = tempfile::tempdir().unwrap();
    write_small_dataset(dir.path());
    let cfg = write_config(dir.path(), "");
    let out_dir = dir.path().join("out");
    let out = xmodal(&["hardness", "--config", &cfg, "--out", &out_dir.display().to_string()]);
    let line = assert_single_error_line(&out, "E_INVALID");
    assert!(
        line.contains("xmodal whiten"),
        "should tell the user to run the whiten step: {line}"
    );
}

#[test]
fn usage_errors_exit_with_code_two() {
    let out = xmodal(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let text = stderr_line(&out);
    assert!(text.starts_with("error[E_USAGE]: "), "got: {text}");
    assert_eq!(text.trim_end_matches('\n').lines().count(), 1);
}

#[test]
fn whiten_then_full_report_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    write_small_dataset(dir.path());
    let cfg = write_config(dir.path(), "");
    let out_dir = dir.path().join("out").display().to_string();

    let whiten = xmodal(&["whiten", "--config", &cfg, "--out", &out_dir]);
    assert!(whiten.status.success(), "{}", stderr_line(&whiten));
    assert!(dir.path().join("out/a.whitened.csv").exists());
    assert!(dir.path().join("out/b.whitened.csv").exists());

    let report = xmodal(&["report", "--config", &cfg, "--out", &out_dir]);
    assert!(report.status.success(), "{}", stderr_line(&report));
    let text = std::fs::read_to_string(dir.path().join("out/report.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["seed"], 11);
    assert!(json["profiles"].as_array().is_some_and(|p| p.len() == 1));
    assert!(json["config_hash"].as_str().is_some_and(|h| h.len() == 64));
    // The run config fixes every input, so the report must be reproducible.
    let rerun = xmodal(&["report", "--config", &cfg, "--out", &out_dir]);
    assert!(rerun.status.success());
    let text2 = std::fs::read_to_string(dir.path().join("out/report.json")).unwrap();
    assert_eq!(text, text2, "rerun with the same config changed report.json");
}
