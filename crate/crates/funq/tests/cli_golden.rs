use std::process::{Command, Output};

fn funq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_funq"))
        .args(args)
        .env_remove("FUNQ_CACHE_DIR")
        .output()
        .expect("failed to spawn the funq binary")
}

fn stdout_of(args: &[&str]) -> String {
    let out = funq(args);
    assert!(
        out.status.success(),
        "funq {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("stdout was not utf-8")
}

fn exit_code(args: &[&str]) -> i32 {
    funq(args).status.code().expect("no exit code")
}

fn csv_lines(text: &str) -> (Vec<String>, Vec<String>) {
    let mut header = Vec::new();
    let mut body = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') {
            header.push(line.to_owned());
        } else {
            body.push(line.to_owned());
        }
    }
    (header, body)
}

#[test]
fn design_golden_brownian_three_codes() {
    let text = stdout_of(&["design", "--process", "bm", "--n", "3", "--format", "json"]);
    let doc: serde_json::Value = serde_json::from_str(&text).expect("invalid json");
    assert_eq!(doc["schema"], "funq.design.v1");
    assert_eq!(doc["tool"], "funq");
    assert_eq!(doc["meta"]["m"], 2);
    assert_eq!(doc["meta"]["levels"], serde_json::json!([3, 1]));
    assert_eq!(doc["meta"]["exactness"], "exact");
    let log_n = doc["meta"]["log_n"].as_f64().expect("log_n missing");
    assert!((log_n - 3.0f64.ln()).abs() < 1e-15);
    let rows = doc["rows"].as_array().expect("rows missing");
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][1], 3);
    assert_eq!(rows[1][1], 1);
}

#[test]
fn rd_golden_two_level_boundary() {
    let text = stdout_of(&[
        "rd",
        "--process",
        "explicit:4,1",
        "--eps-grid",
        "sqrt2",
        "--format",
        "csv",
    ]);
    let (header, body) = csv_lines(&text);
    assert!(header.contains(&"# schema: funq.rd.v1".to_owned()));
    assert!(header.contains(&"# process: explicit:4,1".to_owned()));
    assert_eq!(body.len(), 2, "expected a column line and one data row");
    assert_eq!(body[0], "eps,r,theta,rate,rate_asymptotic,ratio");
    let fields: Vec<&str> = body[1].split(',').collect();
    assert_eq!(fields.len(), 6);
    assert_eq!(fields[1], "1");
    let rate: f64 = fields[3].parse().expect("rate did not parse");
    assert!((rate - std::f64::consts::LN_2).abs() < 1e-12);
    assert!(fields[4].is_empty());
    assert!(fields[5].is_empty());
}

#[test]
fn constants_golden_brownian() {
    let text = stdout_of(&["constants", "--process", "bm", "--format", "csv"]);
    let (header, body) = csv_lines(&text);
    assert!(header.contains(&"# schema: funq.constants.v1".to_owned()));
    assert!(header.contains(&"# family: index-b".to_owned()));
    assert_eq!(
        body[0],
        "k_sharp,k_spectral,log_exponent,loglog_exponent,scalar_ratio_bound"
    );
    let fields: Vec<&str> = body[1].split(',').collect();
    let k_sharp: f64 = fields[0].parse().expect("k_sharp did not parse");
    let k_spectral: f64 = fields[1].parse().expect("k_spectral did not parse");
    let expected = std::f64::consts::SQRT_2 / std::f64::consts::PI;
    assert!((k_sharp - expected).abs() < 1e-12);
    assert!((k_spectral - expected).abs() < 1e-9);
    let log_exp: f64 = fields[2].parse().expect("exponent did not parse");
    assert!((log_exp + 0.5).abs() < 1e-15);
}

#[test]
fn scalar_table_matches_the_library() {
    let text = stdout_of(&["scalar", "--levels", "4", "--format", "json"]);
    let doc: serde_json::Value = serde_json::from_str(&text).expect("invalid json");
    assert_eq!(doc["schema"], "funq.scalar.v1");
    let rows = doc["rows"].as_array().expect("rows missing");
    assert_eq!(rows.len(), 4);
    let quantizer =
        funq::scalar::lloyd_1d(4, funq::scalar::DEFAULT_TOL, funq::scalar::DEFAULT_MAX_ITER)
            .expect("training failed");
    for (row, point) in rows.iter().zip(&quantizer.codepoints) {
        let emitted = row[1].as_f64().expect("codepoint missing");
        assert!((emitted - point).abs() < 1e-15);
    }
}

#[test]
fn unknown_process_exits_two() {
    assert_eq!(
        exit_code(&["eigs", "--process", "nosuch", "--count", "4"]),
        2
    );
}

#[test]
fn bad_process_parameter_exits_two() {
    assert_eq!(
        exit_code(&["eigs", "--process", "ou:a=-1", "--count", "4"]),
        2
    );
    assert_eq!(
        exit_code(&["rd", "--process", "rv:c=1,b=1,a=0.5", "--eps-grid", "0.5"]),
        2
    );
}

#[test]
fn malformed_grid_exits_three() {
    assert_eq!(
        exit_code(&["rd", "--process", "bm", "--eps-grid", "0.5:0.1:0"]),
        3
    );
    assert_eq!(
        exit_code(&["rd", "--process", "bm", "--eps-grid", "0.5:0.1:1"]),
        3
    );
    assert_eq!(
        exit_code(&["rd", "--process", "bm", "--eps-grid", "0.5,abc"]),
        3
    );
}

#[test]
fn bias_budget_exits_four() {
    assert_eq!(
        exit_code(&[
            "mc",
            "smallball",
            "--process",
            "bm",
            "--eps",
            "0.3",
            "--truncation",
            "1",
            "--samples",
            "100",
        ]),
        4
    );
}

#[test]
fn domain_errors_exit_one() {
    assert_eq!(exit_code(&["scalar", "--levels", "0"]), 1);
}

#[test]
fn seeded_vq_run_is_byte_reproducible() {
    let args = [
        "vq",
        "--dim",
        "2",
        "--levels",
        "4",
        "--samples",
        "4096",
        "--seed",
        "7",
    ];
    let first = funq(&args);
    let second = funq(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn output_flag_writes_the_table_to_a_file() {
    let dir = tempfile::tempdir().expect("tempdir failed");
    let path = dir.path().join("constants.json");
    let out = funq(&[
        "constants",
        "--process",
        "bm",
        "--output",
        path.to_str().expect("non-utf8 temp path"),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).expect("output file missing");
    let doc: serde_json::Value = serde_json::from_str(&text).expect("invalid json");
    assert_eq!(doc["schema"], "funq.constants.v1");
}

#[test]
fn cache_directory_persists_trained_blocks() {
    let dir = tempfile::tempdir().expect("tempdir failed");
    let run = || {
        let out = Command::new(env!("CARGO_BIN_EXE_funq"))
            .args([
                "design",
                "--process",
                "bm",
                "--log-n",
                "2.0",
                "--block-dim",
                "2",
                "--seed",
                "3",
                "--format",
                "csv",
            ])
            .env("FUNQ_CACHE_DIR", dir.path())
            .output()
            .expect("failed to spawn the funq binary");
        assert!(out.status.success());
        String::from_utf8(out.stdout).expect("stdout was not utf-8")
    };
    let first = run();
    let second = run();
    assert!(first.contains("# cache: miss"));
    assert!(second.contains("# cache: hit"));
    let total = |text: &str| {
        text.lines()
            .find(|line| line.starts_with("# total:"))
            .expect("no total line")
            .to_owned()
    };
    assert_eq!(total(&first), total(&second));
    let entries: Vec<_> = std::fs::read_dir(dir.path())
        .expect("cache dir unreadable")
        .map(|entry| entry.expect("bad entry").file_name())
        .collect();
    assert!(entries.iter().any(|name| name == "block-d2-k7-s3.json"));
}
