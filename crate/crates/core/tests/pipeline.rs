//! fit -> simulate -> check -> diagnose on the bundled synthetic record.

use std::fs;
use std::path::{Path, PathBuf};

use rainfall_nhmm::config::{CheckKind, RunConfig};
use rainfall_nhmm::workflow::{self, cmd_check, cmd_diagnose, cmd_fit, cmd_simulate};
use rainfall_nhmm::Error;

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn setup() -> (tempfile::TempDir, RunConfig) {
    let dir = tempfile::tempdir().unwrap();
    for f in ["synthetic.csv", "synthetic.toml"] {
        fs::copy(fixture_dir().join(f), dir.path().join(f)).unwrap();
    }
    let cfg = RunConfig::load(&dir.path().join("synthetic.toml")).unwrap();
    (dir, cfg)
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn bundled_fixture_is_reproducible() {
    let series = rainfall_nhmm::synthetic::fixture_series().unwrap();
    let mut buf = Vec::new();
    rainfall_nhmm::io::write_series(&series, &mut buf).unwrap();
    assert_eq!(buf, fs::read(fixture_dir().join("synthetic.csv")).unwrap());
    assert_eq!(series.len(), 8760);
}

#[test]
fn full_pipeline_on_the_fixture() {
    let (_tmp, cfg) = setup();
    let fit = cmd_fit(&cfg).unwrap();
    assert_eq!(fit.data.hours, 8760);
    assert_eq!(fit.acceptance.len(), 4);
    let posterior_path = cfg.output_dir.join("fit/posterior.csv");
    let first = fs::read(&posterior_path).unwrap();

    let sim = cmd_simulate(&cfg).unwrap();
    assert_eq!(sim.timeline, fit.data.timeline);
    let index = cmd_check(&cfg).unwrap();
    let kinds: std::collections::BTreeSet<CheckKind> =
        index.checks.iter().map(|c| c.kind).collect();
    assert_eq!(kinds.len(), CheckKind::ALL.len());
    // One table per check, four for the seasonal sorted values.
    assert_eq!(index.checks.len(), CheckKind::ALL.len() + 3);
    assert_eq!(index.n_simulations, 40);
    for c in &index.checks {
        assert!(
            cfg.output_dir.join("check").join(&c.file).exists(),
            "{}",
            c.file
        );
        assert!(c.coordinates > 0);
    }

    let diag = cmd_diagnose(&cfg).unwrap();
    assert!(diag.psrf.median.is_finite() && diag.psrf.mean.is_finite());
    let summary = fs::read_to_string(cfg.output_dir.join("diagnose/psrf_summary.csv")).unwrap();
    assert!(summary.contains("\nmedian,") && summary.contains("\nmean,"));

    // Every table carries the hash of its inputs.
    for path in files_under(&cfg.output_dir) {
        if path.extension().is_some_and(|e| e == "csv") {
            let text = fs::read_to_string(&path).unwrap();
            assert!(text.starts_with("# inputs="), "{}", path.display());
        }
    }

    // Rerunning with the same seed reproduces the posterior exactly.
    let before: Vec<Vec<u8>> = files_under(&cfg.output_dir)
        .iter()
        .map(|p| fs::read(p).unwrap())
        .collect();
    cmd_fit(&cfg).unwrap();
    assert_eq!(fs::read(&posterior_path).unwrap(), first);
    cmd_simulate(&cfg).unwrap();
    cmd_check(&cfg).unwrap();
    cmd_diagnose(&cfg).unwrap();
    let after: Vec<Vec<u8>> = files_under(&cfg.output_dir)
        .iter()
        .map(|p| fs::read(p).unwrap())
        .collect();
    assert!(before == after, "rerun changed some output");

    // Artifacts from another configuration are refused.
    let mut other = cfg.clone();
    other.mcmc.seed += 1;
    assert!(matches!(
        cmd_simulate(&other),
        Err(Error::ArtifactMismatch(_))
    ));
    let mut other = cfg.clone();
    other.simulate.n_series = 41;
    assert!(matches!(cmd_check(&other), Err(Error::ArtifactMismatch(_))));

    // A tampered posterior is detected.
    let mut bytes = first.clone();
    let n = bytes.len();
    bytes[n - 2] = if bytes[n - 2] == b'1' { b'2' } else { b'1' };
    fs::write(&posterior_path, bytes).unwrap();
    assert!(matches!(
        cmd_diagnose(&cfg),
        Err(Error::ArtifactMismatch(_))
    ));
}

#[test]
fn missing_upstream_artifact_is_named() {
    let (_tmp, cfg) = setup();
    for result in [
        cmd_simulate(&cfg).map(|_| ()),
        cmd_check(&cfg).map(|_| ()),
        cmd_diagnose(&cfg).map(|_| ()),
    ] {
        match result {
            Err(Error::MissingArtifact(p)) => {
                assert!(p.ends_with("fit/manifest.json"), "{}", p.display())
            }
            other => panic!("expected a missing artifact, got {other:?}"),
        }
    }
    let mut cfg = cfg;
    cfg.data.path = Some(cfg.output_dir.join("nowhere.csv"));
    match cmd_fit(&cfg) {
        Err(e @ Error::MissingArtifact(_)) => assert!(e.to_string().contains("nowhere.csv")),
        other => panic!("expected a missing artifact, got {other:?}"),
    }
}

#[test]
fn zero_iteration_fit_has_valid_structure() {
    let (_tmp, mut cfg) = setup();
    cfg.mcmc.n_iter = 0;
    cfg.mcmc.burn_in = 0;
    let fit = cmd_fit(&cfg).unwrap();
    assert!(fit.psrf.is_none());
    let (_, _, set) = workflow::load_posterior(&cfg).unwrap();
    assert_eq!(set.chains.len(), 4);
    assert_eq!(set.total_draws(), 0);
    let err = cmd_diagnose(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn empty_data_file_leaves_no_output() {
    let (_tmp, cfg) = setup();
    fs::write(cfg.data_path().unwrap(), "").unwrap();
    let err = cmd_fit(&cfg).unwrap_err();
    assert!(matches!(err, Error::Ingest(_)));
    assert_eq!(err.exit_code(), 1);
    assert!(!cfg.output_dir.exists());
}
