use std::process::{Command, Output};

fn nbentropy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nbentropy"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn run_csv_is_byte_identical_across_invocations() {
    let args = [
        "run",
        "--estimator",
        "plugin",
        "--dist",
        "zipf:s=1",
        "--k",
        "30",
        "--trials",
        "4",
        "--seed",
        "7",
        "--override",
        "n=500",
    ];
    let a = nbentropy(&args);
    let b = nbentropy(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("trial,seed,estimate,abs_error,samples_used,failed,working_registers")
    );
    assert_eq!(lines.count(), 4);
}

#[test]
fn out_writes_csv_and_json_summary() {
    let dir = std::env::temp_dir().join(format!("nbentropy-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let csv = dir.join("trials.csv");
    let status = nbentropy(&[
        "run",
        "--estimator",
        "simple",
        "--dist",
        "point-mass",
        "--k",
        "5",
        "--trials",
        "2",
        "--override",
        "m=20",
        "--out",
        csv.to_str().unwrap(),
    ])
    .status;
    assert!(status.success());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("trials.json")).unwrap()).unwrap();
    assert_eq!(json["exact_entropy"], 0.0);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 3);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn poly_prints_exact_coefficients() {
    let out = nbentropy(&["poly", "--t", "16", "--r", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed: toml::Table = text.parse().unwrap();
    let coeffs: Vec<&str> = parsed["coefficients"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(coeffs, ["-1/32", "1/32", "0"]);
}

#[test]
fn configuration_errors_exit_with_one() {
    assert_eq!(
        nbentropy(&["run", "--estimator", "bogus"]).status.code(),
        Some(1)
    );
    assert_eq!(
        nbentropy(&["run", "--k", "10", "--eps", "1.5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        nbentropy(&["run", "--override", "nope=3"]).status.code(),
        Some(1)
    );
    assert_eq!(nbentropy(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(nbentropy(&["--help"]).status.code(), Some(0));
}

#[test]
fn tampered_validation_exits_with_two() {
    let out = nbentropy(&["validate", "--tamper"]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text
        .lines()
        .any(|l| l.starts_with("FAIL correction.r2_closed_form")));
}
