use std::path::Path;
use std::process::{Command, Output};

fn driveforge(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_driveforge"))
        .args(args)
        .current_dir(dir)
        .env_remove("DRIVEFORGE_JUDGE_KEY")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn stage_by_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&driveforge(&["simulate", "--fixture", "red_light", "--seed", "3", "--out", "run/red_light.jsonl"], d));
    ok(&driveforge(&["annotate", "--log", "run", "--out", "qa"], d));
    ok(&driveforge(&["label", "--log", "run/red_light.jsonl", "--out", "labels/red_light.labels.json"], d));
    ok(&driveforge(&["fit-bins", "--labels", "labels", "--mode", "uniform", "--out", "bins.json"], d));
    ok(&driveforge(&["tokenize", "--labels", "labels", "--bins", "bins.json", "--out", "tokens.json"], d));
    ok(&driveforge(&["rungraph", "--qa", "qa", "--answerer", "oracle", "--policy", "chain", "--pairs", "pairs.jsonl", "--out", "pred"], d));
    ok(&driveforge(
        &["evaluate", "--qa", "qa", "--pred", "pred", "--bins", "bins.json", "--report", "report.json", "--judge", "mock"],
        d,
    ));
    ok(&driveforge(&["fit-longitudinal", "--log", "run/red_light.jsonl", "--out", "coeffs.json"], d));

    let report = json(&d.join("report.json"));
    assert_eq!(report["completeness"]["value"], 1.0);
    assert_eq!(report["provenance"]["seed"], 3);
    assert_eq!(report["gpt_scores"].as_object().unwrap().len() as u64, report["nodes"].as_u64().unwrap());
    let tokens = json(&d.join("tokens.json"));
    assert_eq!(tokens["entries"][0]["tokens"].as_array().unwrap().len(), 14);
    assert!(d.join("report.json.meta.json").exists());

    let files = [
        "run/red_light.jsonl",
        "qa/red_light.qa.json",
        "labels/red_light.labels.json",
        "bins.json",
        "tokens.json",
        "pred/red_light.pred.json",
        "report.json",
        "coeffs.json",
    ];
    let mut args = vec!["validate"];
    args.extend(files);
    let out = driveforge(&args, d);
    ok(&out);
    assert_eq!(String::from_utf8_lossy(&out.stdout).matches("OK ").count(), files.len());
}

#[test]
fn pipeline_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = driveforge(&["pipeline", "--fixture", "red_light", "--out", "p", "--only", "tokenize"], d);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bins.json"), "{err}");
    assert!(d.join("p/tokens/red_light.tokens.json.failed").exists());

    ok(&driveforge(&["pipeline", "--fixture", "red_light", "--out", "p", "--jobs", "2"], d));
    assert!(!d.join("p/tokens/red_light.tokens.json.failed").exists());
    let report = json(&d.join("p/report.json"));
    assert_eq!(report["completeness"]["value"], 1.0);
}

#[test]
fn validate_reports_problems() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = driveforge(&["validate", "missing.json"], d);
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(d.join("cut.jsonl"), "{\"kind\":\"header\"").unwrap();
    let out = driveforge(&["validate", "cut.jsonl"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("line 1"));
}

#[test]
fn config_file_and_bad_arguments() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("cfg.json"), r#"{"rungraph": {"answerer": "echo", "policy": "none"}}"#).unwrap();
    ok(&driveforge(&["--config", "cfg.json", "pipeline", "--fixture", "straight_road", "--out", "p"], d));
    let pred = json(&d.join("p/pred/straight_road.pred.json"));
    assert_eq!(pred["answerer"], "echo");
    assert_eq!(pred["policy"], "none");

    std::fs::write(d.join("bad.json"), r#"{"rungraph": {"answerr": "echo"}}"#).unwrap();
    let out = driveforge(&["--config", "bad.json", "simulate", "--fixture", "red_light", "--out", "x.jsonl"], d);
    assert_eq!(out.status.code(), Some(1));

    let out = driveforge(&["rungraph", "--qa", "p/qa", "--answerer", "gpt", "--out", "pred"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown answerer"));

    let out = driveforge(&["evaluate", "--qa", "p/qa", "--pred", "p/pred", "--report", "r.json", "--judge", "live"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("DRIVEFORGE_JUDGE_KEY"));
}
