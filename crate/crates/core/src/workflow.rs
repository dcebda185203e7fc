//! The fit, simulate, check and diagnose commands and their on-disk artifacts.
//!
//! Layout under the output directory:
//!
//! ```text
//! fit/posterior.csv        fit/manifest.json
//! simulate/ensemble.csv    simulate/members.csv    simulate/manifest.json
//! check/<check>.csv        check/index.json
//! diagnose/psrf.csv        diagnose/psrf_summary.csv   diagnose/summary.csv
//! diagnose/effects/<effect>.csv                        diagnose/manifest.json
//! ```
//!
//! Each manifest records the hash of the configuration sections the command
//! depends on, the hashes of its upstream artifacts and of every file it
//! wrote. Downstream commands recompute those hashes and refuse to continue
//! when anything differs. Manifests hold no timestamps, so rerunning a
//! command with the same inputs reproduces every file byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::calendar::{HourlyTimeline, TimeCovariates};
use crate::config::{CheckKind, RunConfig, SimulateConfig};
use crate::diagnostics::{
    aggregated_envelope, autocorr_envelope, effect_curves, seasonal_sorted_envelope,
    seasonal_zero_envelope, top_k_dry_envelope, CheckReport, Resolution, QUANTILE_RULE,
};
use crate::error::{Error, Result};
use crate::generator::{simulate_ensemble, EnsembleRequest};
use crate::inference::{
    psrf_report, run_mcmc, BlockAcceptance, ChainSet, McmcSettings, PriorSpec, PsrfReport,
};
use crate::io::{self, sha256_hex, MissingHours};
use crate::model::{ModelDesign, ModelStructure, RainfallSeries};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const FIT_DIR: &str = "fit";
pub const SIMULATE_DIR: &str = "simulate";
pub const CHECK_DIR: &str = "check";
pub const DIAGNOSE_DIR: &str = "diagnose";
pub const MANIFEST: &str = "manifest.json";
pub const POSTERIOR: &str = "posterior.csv";
pub const ENSEMBLE: &str = "ensemble.csv";
pub const MEMBERS: &str = "members.csv";
pub const CHECK_INDEX: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataRecord {
    pub file: String,
    pub sha256: String,
    pub hours: usize,
    pub timeline: HourlyTimeline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitManifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    /// Tag carried by every file this command wrote.
    pub inputs_hash: String,
    pub data: DataRecord,
    pub structure: ModelStructure,
    pub prior: PriorSpec,
    pub mcmc: McmcSettings,
    /// Chain `c` uses ChaCha8 stream `c << 16 | start` of this seed.
    pub seed: u64,
    pub acceptance: Vec<Vec<BlockAcceptance>>,
    /// `None` when there are too few retained draws.
    pub psrf: Option<PsrfReport>,
    pub outputs: Vec<FileRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateManifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub inputs_hash: String,
    pub fit_manifest: FileRecord,
    pub settings: SimulateConfig,
    pub seed: u64,
    pub timeline: HourlyTimeline,
    pub outputs: Vec<FileRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub kind: CheckKind,
    pub statistic: String,
    pub file: String,
    pub sha256: String,
    pub coordinates: usize,
    pub fraction_inside: f64,
    pub discarded: usize,
}

/// Index manifest of the emitted checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckIndex {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub inputs_hash: String,
    pub data_sha256: String,
    pub simulate_manifest: FileRecord,
    pub n_simulations: usize,
    pub quantile_rule: String,
    pub checks: Vec<CheckEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseManifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub inputs_hash: String,
    pub fit_manifest: FileRecord,
    pub psrf: PsrfReport,
    pub outputs: Vec<FileRecord>,
}

fn hash_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(value)?))
}

fn combine(parts: &[&str]) -> String {
    sha256_hex(parts.join("\n").as_bytes())
}

/// Hash of the configuration sections that determine the fit.
pub fn fit_config_hash(cfg: &RunConfig) -> Result<String> {
    #[derive(Serialize)]
    struct Key<'a> {
        missing_hours: MissingHours,
        model: &'a crate::config::ModelConfig,
        prior: &'a PriorSpec,
        mcmc: &'a McmcSettings,
    }
    hash_json(&Key {
        missing_hours: cfg.data.missing_hours,
        model: &cfg.model,
        prior: &cfg.prior,
        mcmc: &cfg.mcmc,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    Ok(fs::read(path)?)
}

fn read_manifest<T: DeserializeOwned>(path: &Path) -> Result<(T, FileRecord)> {
    let bytes = read_file(path)?;
    let manifest = serde_json::from_slice(&bytes).map_err(|e| {
        Error::ArtifactMismatch(format!("{} is not a valid manifest: {e}", path.display()))
    })?;
    Ok((
        manifest,
        FileRecord {
            file: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        },
    ))
}

fn write_manifest<T: Serialize>(path: &Path, manifest: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn record(dir: &Path, name: &str) -> Result<FileRecord> {
    Ok(FileRecord {
        file: name.to_string(),
        sha256: sha256_hex(&fs::read(dir.join(name))?),
    })
}

/// Reads an output listed in a manifest, checking it against the recorded hash.
fn read_output(dir: &Path, outputs: &[FileRecord], name: &str) -> Result<Vec<u8>> {
    let path = dir.join(name);
    let bytes = read_file(&path)?;
    let expected = outputs.iter().find(|r| r.file == name).ok_or_else(|| {
        Error::ArtifactMismatch(format!(
            "manifest in {} does not list {name}",
            dir.display()
        ))
    })?;
    if sha256_hex(&bytes) != expected.sha256 {
        return Err(Error::ArtifactMismatch(format!(
            "{} does not match the hash recorded in its manifest",
            path.display()
        )));
    }
    Ok(bytes)
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path)?;
    Ok(())
}

/// Reads the observed record named by the configuration.
pub fn load_data(cfg: &RunConfig) -> Result<(RainfallSeries, DataRecord)> {
    let path = cfg.data_path()?;
    let bytes = read_file(path)?;
    let series = io::ingest_reader(bytes.as_slice(), cfg.data.missing_hours)?;
    let record = DataRecord {
        file: path.display().to_string(),
        sha256: sha256_hex(&bytes),
        hours: series.len(),
        timeline: series.timeline(),
    };
    Ok((series, record))
}

fn design_for(structure: ModelStructure, timeline: HourlyTimeline) -> Result<ModelDesign> {
    ModelDesign::build(structure, TimeCovariates::from_timeline(timeline))
}

fn fit_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join(FIT_DIR)
}

/// Fits the model to the configured data and writes the posterior table and manifest.
pub fn cmd_fit(cfg: &RunConfig) -> Result<FitManifest> {
    cfg.validate()?;
    let (series, data) = load_data(cfg)?;
    let structure = cfg.model.structure(series.timeline().record_years())?;
    let design = design_for(structure, series.timeline())?;
    let set = run_mcmc(&series, &design, cfg.prior, &cfg.mcmc)?;
    let config_hash = fit_config_hash(cfg)?;
    let inputs_hash = combine(&[&config_hash, &data.sha256, VERSION]);
    let dir = fit_dir(cfg);
    ensure_dir(&dir)?;
    let mut buf = Vec::new();
    io::write_posterior(&set, &inputs_hash, &mut buf)?;
    fs::write(dir.join(POSTERIOR), &buf)?;
    let manifest = FitManifest {
        command: "fit".into(),
        version: VERSION.into(),
        config_hash,
        inputs_hash,
        data,
        structure,
        prior: cfg.prior,
        mcmc: cfg.mcmc,
        seed: cfg.mcmc.seed,
        acceptance: set.chains.iter().map(|c| c.acceptance.clone()).collect(),
        psrf: psrf_report(&set).ok(),
        outputs: vec![record(&dir, POSTERIOR)?],
    };
    write_manifest(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Loads the fitted posterior, refusing artifacts produced under another configuration.
pub fn load_posterior(cfg: &RunConfig) -> Result<(FitManifest, FileRecord, ChainSet)> {
    let dir = fit_dir(cfg);
    let (manifest, file): (FitManifest, _) = read_manifest(&dir.join(MANIFEST))?;
    if manifest.config_hash != fit_config_hash(cfg)? {
        return Err(Error::ArtifactMismatch(format!(
            "{} was produced with a different model, prior or MCMC configuration; rerun fit",
            file.file
        )));
    }
    let bytes = read_output(&dir, &manifest.outputs, POSTERIOR)?;
    let (tag, mut chains) = io::read_posterior(
        bytes.as_slice(),
        &manifest.structure,
        manifest.mcmc.n_chains,
    )?;
    if tag != manifest.inputs_hash {
        return Err(Error::ArtifactMismatch(format!(
            "{POSTERIOR} does not belong to {}",
            file.file
        )));
    }
    for (chain, acc) in chains.iter_mut().zip(&manifest.acceptance) {
        chain.acceptance = acc.clone();
    }
    let set = ChainSet::new(manifest.structure, manifest.mcmc, chains);
    Ok((manifest, file, set))
}

/// Draws a posterior-predictive ensemble from the fitted posterior.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateManifest> {
    cfg.validate()?;
    let (fit, fit_record, set) = load_posterior(cfg)?;
    let fitted = design_for(fit.structure, fit.data.timeline)?;
    let sim = cfg.simulate;
    let timeline = HourlyTimeline::new(
        sim.start.unwrap_or(fit.data.timeline.start()),
        sim.hours.unwrap_or(fit.data.timeline.len()),
    );
    if timeline.is_empty() {
        return Err(Error::Config("simulate.hours must be at least 1".into()));
    }
    let design = if timeline == fit.data.timeline {
        fitted
    } else {
        fitted.with_covariates(TimeCovariates::from_timeline(timeline))
    };
    let request = EnsembleRequest {
        n_series: sim.n_series,
        seed: sim.seed,
        allow_cycling: sim.allow_cycling,
        keep_latent: false,
    };
    let members = simulate_ensemble(&set, &design, &request)?;
    let config_hash = hash_json(&sim)?;
    let inputs_hash = combine(&[&config_hash, &fit_record.sha256, VERSION]);
    let dir = cfg.output_dir.join(SIMULATE_DIR);
    ensure_dir(&dir)?;
    let mut buf = Vec::new();
    io::write_ensemble(&members, &inputs_hash, &mut buf)?;
    fs::write(dir.join(ENSEMBLE), &buf)?;
    io::write_tagged(&dir.join(MEMBERS), &inputs_hash, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["member", "chain", "draw"])?;
        for (i, m) in members.iter().enumerate() {
            w.write_record([i, m.chain, m.draw].map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    })?;
    let manifest = SimulateManifest {
        command: "simulate".into(),
        version: VERSION.into(),
        config_hash,
        inputs_hash,
        fit_manifest: fit_record,
        settings: sim,
        seed: sim.seed,
        timeline,
        outputs: vec![record(&dir, ENSEMBLE)?, record(&dir, MEMBERS)?],
    };
    write_manifest(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Loads the simulated ensemble, checking it descends from the current fit.
pub fn load_ensemble(
    cfg: &RunConfig,
) -> Result<(SimulateManifest, FileRecord, Vec<RainfallSeries>)> {
    let (_, fit_record, _) = load_posterior(cfg)?;
    let dir = cfg.output_dir.join(SIMULATE_DIR);
    let (manifest, file): (SimulateManifest, _) = read_manifest(&dir.join(MANIFEST))?;
    if manifest.fit_manifest.sha256 != fit_record.sha256 {
        return Err(Error::ArtifactMismatch(format!(
            "{} was simulated from a different fit; rerun simulate",
            file.file
        )));
    }
    if manifest.config_hash != hash_json(&cfg.simulate)? {
        return Err(Error::ArtifactMismatch(format!(
            "{} was produced with different simulate settings; rerun simulate",
            file.file
        )));
    }
    let bytes = read_output(&dir, &manifest.outputs, ENSEMBLE)?;
    let (tag, ensemble) = io::read_ensemble(bytes.as_slice())?;
    if tag != manifest.inputs_hash {
        return Err(Error::ArtifactMismatch(format!(
            "{ENSEMBLE} does not belong to {}",
            file.file
        )));
    }
    Ok((manifest, file, ensemble))
}

fn check_reports(
    kind: CheckKind,
    cfg: &RunConfig,
    obs: &RainfallSeries,
    ens: &[RainfallSeries],
) -> Result<Vec<(String, CheckReport)>> {
    let c = &cfg.check;
    Ok(match kind {
        CheckKind::DryPeriods => {
            vec![("dry_periods".into(), top_k_dry_envelope(obs, ens, c.top_k))]
        }
        CheckKind::Autocorrelation => vec![(
            "autocorrelation".into(),
            autocorr_envelope(obs, ens, &c.lags)?,
        )],
        CheckKind::SeasonalZeros => {
            vec![("seasonal_zeros".into(), seasonal_zero_envelope(obs, ens))]
        }
        CheckKind::SeasonalSorted => seasonal_sorted_envelope(obs, ens, c.max_sorted_ranks)
            .into_iter()
            .map(|r| (r.statistic.clone(), r))
            .collect(),
        CheckKind::DailyTotals => vec![(
            "daily_totals".into(),
            aggregated_envelope(obs, ens, Resolution::Daily),
        )],
        CheckKind::MonthlyTotals => vec![(
            "monthly_totals".into(),
            aggregated_envelope(obs, ens, Resolution::Monthly),
        )],
    })
}

/// Compares the observed record with the ensemble and writes one table per check.
pub fn cmd_check(cfg: &RunConfig) -> Result<CheckIndex> {
    cfg.validate()?;
    let (fit, _, _) = load_posterior(cfg)?;
    let (series, data) = load_data(cfg)?;
    if data.sha256 != fit.data.sha256 {
        return Err(Error::ArtifactMismatch(format!(
            "{} differs from the data the posterior was fitted to",
            data.file
        )));
    }
    let (sim, sim_record, ensemble) = load_ensemble(cfg)?;
    if sim.timeline != series.timeline() {
        return Err(Error::ArtifactMismatch(
            "the ensemble calendar differs from the observed record; simulate over the observed calendar to check".into(),
        ));
    }
    let mut kinds = cfg.check.checks.clone();
    kinds.sort();
    kinds.dedup();
    let config_hash = hash_json(&cfg.check)?;
    let inputs_hash = combine(&[&config_hash, &data.sha256, &sim_record.sha256, VERSION]);
    let dir = cfg.output_dir.join(CHECK_DIR);
    ensure_dir(&dir)?;
    let mut checks = Vec::new();
    for kind in kinds {
        for (stem, report) in check_reports(kind, cfg, &series, &ensemble)? {
            let file = format!("{stem}.csv");
            io::write_tagged(&dir.join(&file), &inputs_hash, |out| report.write_csv(out))?;
            checks.push(CheckEntry {
                kind,
                statistic: report.statistic.clone(),
                sha256: record(&dir, &file)?.sha256,
                file,
                coordinates: report.len(),
                fraction_inside: report.fraction_inside(),
                discarded: report.discarded,
            });
        }
    }
    let index = CheckIndex {
        command: "check".into(),
        version: VERSION.into(),
        config_hash,
        inputs_hash,
        data_sha256: data.sha256,
        simulate_manifest: sim_record,
        n_simulations: ensemble.len(),
        quantile_rule: QUANTILE_RULE.into(),
        checks,
    };
    write_manifest(&dir.join(CHECK_INDEX), &index)?;
    Ok(index)
}

fn write_csv_rows(
    path: &Path,
    inputs: &str,
    header: &[&str],
    rows: Vec<Vec<String>>,
) -> Result<()> {
    io::write_tagged(path, inputs, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(())
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Convergence table, posterior summary and effect curves of the fitted posterior.
pub fn cmd_diagnose(cfg: &RunConfig) -> Result<DiagnoseManifest> {
    cfg.validate()?;
    let (fit, fit_record, set) = load_posterior(cfg)?;
    let psrf = psrf_report(&set)?;
    let config_hash = hash_json(&cfg.check.effect_grid)?;
    let inputs_hash = combine(&[&config_hash, &fit_record.sha256, VERSION]);
    let dir = cfg.output_dir.join(DIAGNOSE_DIR);
    ensure_dir(&dir.join("effects"))?;
    let mut outputs = Vec::new();

    let rows = psrf
        .entries
        .iter()
        .map(|e| vec![e.name.clone(), opt(e.value)])
        .collect();
    write_csv_rows(
        &dir.join("psrf.csv"),
        &inputs_hash,
        &["parameter", "psrf"],
        rows,
    )?;
    outputs.push(record(&dir, "psrf.csv")?);
    let rows = vec![
        vec!["median".into(), psrf.median.to_string()],
        vec!["mean".into(), psrf.mean.to_string()],
        vec!["max".into(), psrf.max.to_string()],
        vec!["multivariate".into(), opt(psrf.multivariate)],
        vec!["undefined".into(), psrf.degenerate.len().to_string()],
    ];
    write_csv_rows(
        &dir.join("psrf_summary.csv"),
        &inputs_hash,
        &["statistic", "value"],
        rows,
    )?;
    outputs.push(record(&dir, "psrf_summary.csv")?);

    let rows = set
        .summary()
        .into_iter()
        .map(|s| {
            let mut r = vec![s.name];
            r.extend([s.mean, s.sd, s.q05, s.q50, s.q95].map(|v| v.to_string()));
            r
        })
        .collect();
    write_csv_rows(
        &dir.join("summary.csv"),
        &inputs_hash,
        &["parameter", "mean", "sd", "q05", "q50", "q95"],
        rows,
    )?;
    outputs.push(record(&dir, "summary.csv")?);

    let design = design_for(fit.structure, fit.data.timeline)?;
    for curve in effect_curves(&set, &design, cfg.check.effect_grid)? {
        let stem: String = curve
            .name
            .chars()
            .filter(|&c| c != ']')
            .map(|c| if c == '[' { '_' } else { c })
            .collect();
        let file = format!("effects/{stem}.csv");
        io::write_tagged(&dir.join(&file), &inputs_hash, |out| curve.write_csv(out))?;
        outputs.push(record(&dir, &file)?);
    }

    let manifest = DiagnoseManifest {
        command: "diagnose".into(),
        version: VERSION.into(),
        config_hash,
        inputs_hash,
        fit_manifest: fit_record,
        psrf,
        outputs,
    };
    write_manifest(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}
