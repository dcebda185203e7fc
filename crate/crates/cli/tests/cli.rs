use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rainfall-nhmm"))
        .args(args)
        .output()
        .unwrap()
}

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["fit", "--bogus"]).status.code(), Some(1));
}

#[test]
fn validation_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let r = run(&["fit", "--data", "/nonexistent/rain.csv", "--out", out]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("/nonexistent/rain.csv"));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "2001-01-01T00:00:00,0\n2001-01-01T00:00:00,0.2\n").unwrap();
    let r = run(&["fit", "--data", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("duplicate timestamp 2001-01-01 00:00:00"));

    let r = run(&["simulate", "--out", out]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("manifest.json"));

    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[mcmc]\nchains = 2\n").unwrap();
    assert_eq!(
        run(&["fit", "-c", cfg.to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn pipeline_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = fixture("synthetic.toml");
    let base = [
        "-c",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--iterations",
        "120",
        "--burn-in",
        "60",
        "--chains",
        "2",
    ];
    let ok = |sub: &str, extra: &[&str]| {
        let mut args = vec![sub];
        args.extend(base);
        args.extend(extra);
        let r = run(&args);
        assert_eq!(
            r.status.code(),
            Some(0),
            "{sub}: {}",
            String::from_utf8_lossy(&r.stderr)
        );
        String::from_utf8(r.stdout).unwrap()
    };
    assert!(ok("fit", &[]).contains("fitted 8760 hours; 60 draws"));
    assert!(ok("simulate", &["--n-series", "12"]).contains("simulated 12 series"));
    // Check and diagnose see the same overrides, so the artifacts match.
    let mut args = vec!["check"];
    args.extend(base);
    let r = run(&args);
    assert_eq!(
        r.status.code(),
        Some(1),
        "ensemble was made with a different n_series"
    );
    args[0] = "simulate";
    assert_eq!(run(&args).status.code(), Some(0));
    args[0] = "check";
    let r = run(&args);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    assert!(String::from_utf8_lossy(&r.stdout).contains("dry_period_lengths"));
    assert!(ok("diagnose", &[]).contains("median"));
    assert!(out.join("check/index.json").exists());
}
