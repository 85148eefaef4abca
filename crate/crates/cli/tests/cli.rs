use std::process::{Command, Output};

fn sddcpf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sddcpf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

#[test]
fn spectrum_lists_every_singular_value() {
    let out = sddcpf(&["spectrum", "--case", "ieee300"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,singular_value,negligible"));
    let values: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 300);
    assert!(values.windows(2).all(|w| w[0] >= w[1]));
    assert!(stderr(&out).contains("166 negligible"));
}

#[test]
fn spectrum_json_reports_rank() {
    let out = sddcpf(&[
        "spectrum", "--case", "ieee118", "--tau", "1e-10", "--format", "json",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rank"], 117);
    assert_eq!(v["negligible_count"], 1);
    assert_eq!(v["singular_values"].as_array().unwrap().len(), 118);
}

#[test]
fn detect_without_errors_flags_nothing() {
    let out = sddcpf(&["detect", "--case", "ieee118", "--alpha", "0"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["flagged_buses"], serde_json::json!([]));
    assert_eq!(v["solver_status"], "optimal");
    assert!(v["detection_rate"].is_null());
}

#[test]
fn detect_csv_has_a_row_per_bus() {
    let out = sddcpf(&[
        "detect", "--case", "ieee118", "--alpha", "0.05", "--format", "csv",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("bus,p_measured,error_true,error_estimated,flagged,"));
    assert_eq!(text.lines().count(), 119);
}

#[test]
fn unknown_flag_is_a_one_line_error() {
    let out = sddcpf(&["detect", "--alpah", "0.1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(err.contains("--alpah"));
}

#[test]
fn out_of_range_value_names_the_flag() {
    let out = sddcpf(&["run-scenario", "--preset", "I", "--alpha", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(err.contains("--alpha"));
}

#[test]
fn missing_case_file_fails() {
    let out = sddcpf(&["spectrum", "--case", "/nonexistent/case.m"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("/nonexistent/case.m"));
}

#[test]
fn preset_output_carries_full_config() {
    let out = sddcpf(&["run-scenario", "--preset", "VI", "--trials", "2"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let cfg = &v["config"];
    assert_eq!(cfg["preset"], "VI");
    assert_eq!(cfg["case_name"], "ieee300");
    assert_eq!(cfg["alpha"], 0.08);
    assert_eq!(cfg["sparse_magnitude"]["lo"], -100.0);
    assert_eq!(cfg["trials"], 2);
    assert_eq!(v["records"].as_array().unwrap().len(), 2);
}

#[test]
fn out_flag_writes_file() {
    let path = std::env::temp_dir().join(format!("sddcpf-flows-{}.csv", std::process::id()));
    let out = sddcpf(&[
        "flows",
        "--case",
        "ieee118",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_file(&path).unwrap();
    assert!(text.starts_with("branch,from_bus,to_bus,x,flow_true,flow_l1,flow_lse"));
    assert_eq!(text.lines().count(), 187);
}

#[test]
fn sweep_reports_each_alpha() {
    let out = sddcpf(&[
        "sweep-alpha",
        "--case",
        "ieee118",
        "--alphas",
        "0.03,0.15",
        "--trials",
        "20",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("0.03,"));
}

#[test]
fn help_documents_columns() {
    let out = sddcpf(&["flows", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("flow_lse"));
    assert_eq!(sddcpf(&["--version"]).status.code(), Some(0));
    assert_eq!(sddcpf(&[]).status.code(), Some(1));
}
