//! Python module `rainfall_nhmm`.
//!
//! Validation problems raise `ValueError`, missing artifacts
//! `FileNotFoundError` and numerical failures `ArithmeticError`.

use std::path::PathBuf;

use chrono::NaiveDateTime;
use pyo3::exceptions::{PyArithmeticError, PyFileNotFoundError, PyValueError};
use pyo3::prelude::*;

use nhmm::calendar::{HourlyTimeline, TimeCovariates};
use nhmm::config::RunConfig;
use nhmm::diagnostics;
use nhmm::generator::{series_rng, simulate_series};
use nhmm::inference::{psrf_report, run_mcmc, ChainSet, ConstraintSet, McmcSettings, PriorSpec};
use nhmm::io::{self, MissingHours};
use nhmm::model::{
    forward_loglik, LatentStateSpace, ModelDesign, ModelStructure, Params, RainfallSeries,
    SmoothTerms,
};
use nhmm::{synthetic, workflow, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::MissingArtifact(_) => PyFileNotFoundError::new_err(e.to_string()),
        _ if e.exit_code() == 2 => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_start(s: &str) -> PyResult<NaiveDateTime> {
    io::parse_timestamp(s)
        .ok_or_else(|| PyValueError::new_err(format!("cannot parse timestamp '{s}'")))
}

/// Hourly rainfall on the 0.2 mm grid.
#[pyclass(name = "Series", frozen)]
struct PySeries {
    inner: RainfallSeries,
}

#[pymethods]
impl PySeries {
    /// Series starting at `start` (ISO timestamp) with one value per hour in mm.
    #[new]
    fn new(start: &str, values: Vec<f64>) -> PyResult<Self> {
        let ticks = values
            .iter()
            .map(|&v| io::snap_to_grid(v).map_err(PyValueError::new_err))
            .collect::<PyResult<Vec<_>>>()?;
        let timeline = HourlyTimeline::new(parse_start(start)?, ticks.len());
        Ok(Self {
            inner: RainfallSeries::from_ticks(timeline, ticks).map_err(to_py)?,
        })
    }

    /// Reads a timestamp,mm file, rejecting gaps, duplicates and off-grid values.
    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: io::ingest(&path, MissingHours::Reject).map_err(to_py)?,
        })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        let mut buf = Vec::new();
        io::write_series(&self.inner, &mut buf).map_err(to_py)?;
        std::fs::write(path, buf).map_err(|e| to_py(e.into()))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn start(&self) -> String {
        self.inner
            .timeline()
            .start()
            .format(io::TIMESTAMP_FORMAT)
            .to_string()
    }

    fn values(&self) -> Vec<f64> {
        self.inner.values()
    }

    fn zero_fraction(&self) -> f64 {
        self.inner.zero_fraction()
    }

    fn dry_period_lengths(&self) -> Vec<usize> {
        diagnostics::dry_period_lengths(self.inner.ticks())
    }

    /// Spearman rank autocorrelation; `None` for a constant series.
    fn spearman_autocorr(&self, lag: usize) -> PyResult<Option<f64>> {
        diagnostics::spearman_autocorr(&self.inner.values(), lag).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Series(start={}, hours={})", self.start(), self.inner.len())
    }
}

/// Model structure evaluated on an hourly calendar.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    design: ModelDesign,
}

#[pymethods]
impl PyModel {
    /// The same knot counts are used for all four regressions; 0 switches a spline off.
    #[new]
    #[pyo3(signature = (n_dry, n_wet, start, hours, seasonal_knots=6, overall_knots=0))]
    fn new(
        n_dry: usize,
        n_wet: usize,
        start: &str,
        hours: usize,
        seasonal_knots: usize,
        overall_knots: usize,
    ) -> PyResult<Self> {
        let terms = SmoothTerms::new(seasonal_knots, overall_knots);
        let structure = ModelStructure {
            space: LatentStateSpace::new(n_dry, n_wet).map_err(to_py)?,
            persistence: terms,
            zero_prob: terms,
            log_scale: terms,
            shape: terms,
        };
        let cov = TimeCovariates::from_timeline(HourlyTimeline::new(parse_start(start)?, hours));
        Ok(Self {
            design: ModelDesign::build(structure, cov).map_err(to_py)?,
        })
    }

    #[getter]
    fn hours(&self) -> usize {
        self.design.hours()
    }

    fn parameter_names(&self) -> Vec<String> {
        nhmm::model::parameter_names(&self.design.structure)
    }

    /// A plausible parameter vector with seasonal structure, in `parameter_names` order.
    fn reference_params(&self) -> Vec<f64> {
        synthetic::reference_params(&self.design).to_flat(&self.design.structure)
    }

    fn params_valid(&self, params: Vec<f64>) -> PyResult<bool> {
        Ok(ConstraintSet.satisfied(&self.params(&params)?))
    }

    /// Exact marginal log-likelihood by the forward algorithm.
    fn loglik(&self, series: &PySeries, params: Vec<f64>) -> PyResult<f64> {
        forward_loglik(&series.inner, &self.params(&params)?, &self.design).map_err(to_py)
    }

    /// `n` independent series over the model calendar.
    #[pyo3(signature = (params, seed, n=1))]
    fn simulate(&self, params: Vec<f64>, seed: u64, n: usize) -> PyResult<Vec<PySeries>> {
        let p = self.params(&params)?;
        Ok((0..n)
            .map(|i| PySeries {
                inner: simulate_series(&p, &self.design, &mut series_rng(seed, i), false).series,
            })
            .collect())
    }

    /// Runs the MCMC sampler; `series` must cover the model calendar.
    #[pyo3(signature = (series, n_chains=4, n_iter=2000, burn_in=1000, thin=1, seed=1))]
    fn fit(
        &self,
        py: Python<'_>,
        series: &PySeries,
        n_chains: usize,
        n_iter: usize,
        burn_in: usize,
        thin: usize,
        seed: u64,
    ) -> PyResult<PyPosterior> {
        let settings = McmcSettings {
            n_chains,
            n_iter,
            burn_in,
            thin,
            seed,
            ..McmcSettings::default()
        };
        let design = &self.design;
        let data = &series.inner;
        let set = py
            .detach(|| run_mcmc(data, design, PriorSpec::default(), &settings))
            .map_err(to_py)?;
        Ok(PyPosterior { inner: set })
    }
}

impl PyModel {
    fn params(&self, flat: &[f64]) -> PyResult<Params> {
        let structure = &self.design.structure;
        let n = nhmm::model::parameter_names(structure).len();
        if flat.len() != n {
            return Err(PyValueError::new_err(format!(
                "expected {n} parameters, got {}",
                flat.len()
            )));
        }
        Ok(Params::from_flat(structure, flat))
    }
}

/// Retained posterior draws of every chain.
#[pyclass(name = "Posterior", frozen)]
struct PyPosterior {
    inner: ChainSet,
}

#[pymethods]
impl PyPosterior {
    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names.clone()
    }

    #[getter]
    fn n_chains(&self) -> usize {
        self.inner.chains.len()
    }

    /// Draws of one chain, one row per retained iteration.
    fn draws(&self, chain: usize) -> PyResult<Vec<Vec<f64>>> {
        self.inner
            .chains
            .get(chain)
            .map(|c| c.draws.clone())
            .ok_or_else(|| PyValueError::new_err(format!("no chain {chain}")))
    }

    /// Posterior summary as a JSON list of {name, mean, sd, q05, q50, q95}.
    fn summary_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.summary()).map_err(|e| to_py(e.into()))
    }

    /// PSRF table as JSON, with median, mean and max over monitored parameters.
    fn psrf_json(&self) -> PyResult<String> {
        let report = psrf_report(&self.inner).map_err(to_py)?;
        serde_json::to_string(&report).map_err(|e| to_py(e.into()))
    }
}

fn load_config(path: PathBuf) -> PyResult<RunConfig> {
    RunConfig::load(&path).map_err(to_py)
}

fn manifest_json<T: serde::Serialize>(m: T) -> PyResult<String> {
    serde_json::to_string(&m).map_err(|e| to_py(e.into()))
}

/// Runs `fit` for a configuration file and returns its manifest as JSON.
#[pyfunction]
fn cmd_fit(py: Python<'_>, config: PathBuf) -> PyResult<String> {
    let cfg = load_config(config)?;
    manifest_json(py.detach(|| workflow::cmd_fit(&cfg)).map_err(to_py)?)
}

#[pyfunction]
fn cmd_simulate(py: Python<'_>, config: PathBuf) -> PyResult<String> {
    let cfg = load_config(config)?;
    manifest_json(py.detach(|| workflow::cmd_simulate(&cfg)).map_err(to_py)?)
}

#[pyfunction]
fn cmd_check(py: Python<'_>, config: PathBuf) -> PyResult<String> {
    let cfg = load_config(config)?;
    manifest_json(py.detach(|| workflow::cmd_check(&cfg)).map_err(to_py)?)
}

#[pyfunction]
fn cmd_diagnose(py: Python<'_>, config: PathBuf) -> PyResult<String> {
    let cfg = load_config(config)?;
    manifest_json(py.detach(|| workflow::cmd_diagnose(&cfg)).map_err(to_py)?)
}

#[pymodule]
pub fn rainfall_nhmm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySeries>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyPosterior>()?;
    m.add_function(wrap_pyfunction!(cmd_fit, m)?)?;
    m.add_function(wrap_pyfunction!(cmd_simulate, m)?)?;
    m.add_function(wrap_pyfunction!(cmd_check, m)?)?;
    m.add_function(wrap_pyfunction!(cmd_diagnose, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
