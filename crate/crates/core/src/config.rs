//! Run configuration: a single TOML file with a closed key set.
//!
//! Every table and key is optional; missing keys take the defaults below.
//! Unknown keys are rejected.
//!
//! ```toml
//! output_dir = "out"
//!
//! [data]
//! path = "rain.csv"
//! missing_hours = "reject"
//!
//! [model]
//! n_dry = 3
//! n_wet = 2
//! # per regression: persistence, zero_prob, log_scale, shape
//! persistence = { seasonal_knots = 6 }   # overall_knots defaults to the record years
//!
//! [prior]
//! intercept_sd = 10.0
//!
//! [mcmc]
//! n_chains = 4
//! n_iter = 20000
//! burn_in = 10000
//! thin = 10
//! seed = 1
//!
//! [simulate]
//! n_series = 100
//!
//! [check]
//! checks = ["dry_periods", "autocorrelation", "seasonal_zeros", "seasonal_sorted", "daily_totals", "monthly_totals"]
//! ```

use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::diagnostics::LAGS;
use crate::error::{Error, Result};
use crate::inference::{McmcSettings, PriorSpec};
use crate::io::MissingHours;
use crate::model::{LatentStateSpace, ModelStructure, SmoothTerms};

/// Fewest knots a spline accepts; an overall spline that would get fewer is switched off.
pub const MIN_KNOTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub missing_hours: MissingHours,
}

/// Knot counts of one regression; 0 switches a spline off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnotConfig {
    pub seasonal_knots: usize,
    /// `None`: one knot per calendar year of the record.
    pub overall_knots: Option<usize>,
}

impl Default for KnotConfig {
    fn default() -> Self {
        Self {
            seasonal_knots: 6,
            overall_knots: None,
        }
    }
}

impl KnotConfig {
    fn resolve(self, record_years: usize) -> SmoothTerms {
        let overall = self.overall_knots.unwrap_or(if record_years >= MIN_KNOTS {
            record_years
        } else {
            0
        });
        SmoothTerms::new(self.seasonal_knots, overall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub n_dry: usize,
    pub n_wet: usize,
    pub persistence: KnotConfig,
    pub zero_prob: KnotConfig,
    pub log_scale: KnotConfig,
    pub shape: KnotConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_dry: 3,
            n_wet: 2,
            persistence: KnotConfig::default(),
            zero_prob: KnotConfig::default(),
            log_scale: KnotConfig::default(),
            shape: KnotConfig::default(),
        }
    }
}

impl ModelConfig {
    /// The model structure for a record spanning `record_years` calendar years.
    pub fn structure(&self, record_years: usize) -> Result<ModelStructure> {
        let s = ModelStructure {
            space: LatentStateSpace::new(self.n_dry, self.n_wet)?,
            persistence: self.persistence.resolve(record_years),
            zero_prob: self.zero_prob.resolve(record_years),
            log_scale: self.log_scale.resolve(record_years),
            shape: self.shape.resolve(record_years),
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub n_series: usize,
    pub seed: u64,
    /// Reuse posterior draws when more series than draws are requested.
    pub allow_cycling: bool,
    /// First hour of the simulated calendar; defaults to the observed record's.
    pub start: Option<NaiveDateTime>,
    /// Length of the simulated calendar; defaults to the observed record's.
    pub hours: Option<usize>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n_series: 100,
            seed: 1,
            allow_cycling: false,
            start: None,
            hours: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    DryPeriods,
    Autocorrelation,
    SeasonalZeros,
    SeasonalSorted,
    DailyTotals,
    MonthlyTotals,
}

impl CheckKind {
    pub const ALL: [CheckKind; 6] = [
        CheckKind::DryPeriods,
        CheckKind::Autocorrelation,
        CheckKind::SeasonalZeros,
        CheckKind::SeasonalSorted,
        CheckKind::DailyTotals,
        CheckKind::MonthlyTotals,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub checks: Vec<CheckKind>,
    /// Longest dry periods compared rank by rank.
    pub top_k: usize,
    pub lags: Vec<usize>,
    /// Largest hourly values kept per season in the sorted-value checks.
    pub max_sorted_ranks: usize,
    /// Grid points of each effect curve written by `diagnose`.
    pub effect_grid: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            checks: CheckKind::ALL.to_vec(),
            top_k: 20,
            lags: LAGS.to_vec(),
            max_sorted_ranks: 500,
            effect_grid: 101,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub prior: PriorSpec,
    pub mcmc: McmcSettings,
    pub simulate: SimulateConfig,
    pub check: CheckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            prior: PriorSpec::default(),
            mcmc: McmcSettings::default(),
            simulate: SimulateConfig::default(),
            check: CheckConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a configuration file; relative paths inside it are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.data.path.as_mut() {
            rebase(p);
        }
        rebase(&mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.mcmc.validate()?;
        LatentStateSpace::new(self.model.n_dry, self.model.n_wet)?;
        let p = &self.prior;
        if !(p.intercept_sd > 0.0 && p.smoothing_scale > 0.0 && p.penalty_ridge > 0.0) {
            return Err(Error::Config("prior scales must be positive".into()));
        }
        if self.simulate.n_series == 0 {
            return Err(Error::Config("simulate.n_series must be at least 1".into()));
        }
        if self.check.lags.is_empty() || self.check.lags.contains(&0) {
            return Err(Error::Config(
                "check.lags must be nonempty and positive".into(),
            ));
        }
        if self.check.top_k == 0 || self.check.max_sorted_ranks == 0 || self.check.effect_grid < 2 {
            return Err(Error::Config("check.top_k, check.max_sorted_ranks must be positive and check.effect_grid at least 2".into()));
        }
        Ok(())
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.data
            .path
            .as_deref()
            .ok_or_else(|| Error::Config("no data path given (data.path or --data)".into()))
    }
}
