use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calendar::TimeCovariates;
use crate::error::{Error, Result};
use crate::spline::{build_cyclic_basis, build_overall_basis, SplineBasis};

/// Clone dry states `0..D` followed by wet states `D..D+W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatentStateSpace {
    n_dry: usize,
    n_wet: usize,
}

impl LatentStateSpace {
    pub fn new(n_dry: usize, n_wet: usize) -> Result<Self> {
        if n_dry == 0 || n_wet == 0 {
            return Err(Error::InvalidArgument(format!(
                "need at least one dry and one wet state, got D={n_dry}, W={n_wet}"
            )));
        }
        Ok(Self { n_dry, n_wet })
    }

    pub fn n_dry(&self) -> usize {
        self.n_dry
    }

    pub fn n_wet(&self) -> usize {
        self.n_wet
    }

    pub fn total(&self) -> usize {
        self.n_dry + self.n_wet
    }

    pub fn is_dry(&self, z: usize) -> bool {
        z < self.n_dry
    }

    /// Emission group of state `z`: 0 for every clone dry state, `1 + j` for wet `j`.
    pub fn group(&self, z: usize) -> usize {
        if z < self.n_dry {
            0
        } else {
            1 + z - self.n_dry
        }
    }

    pub fn n_groups(&self) -> usize {
        1 + self.n_wet
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    Persistence,
    ZeroProb,
    LogScale,
    Shape,
}

impl Family {
    pub const EMISSION: [Family; 3] = [Family::ZeroProb, Family::LogScale, Family::Shape];

    pub fn label(self) -> &'static str {
        match self {
            Family::Persistence => "persistence",
            Family::ZeroProb => "zero_prob",
            Family::LogScale => "log_scale",
            Family::Shape => "shape",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SplineAxis {
    /// Cyclic effect of time of year.
    Seasonal,
    /// Effect of time through the record.
    Overall,
}

impl SplineAxis {
    pub const ALL: [SplineAxis; 2] = [SplineAxis::Seasonal, SplineAxis::Overall];

    pub fn label(self) -> &'static str {
        match self {
            SplineAxis::Seasonal => "seasonal",
            SplineAxis::Overall => "overall",
        }
    }
}

/// Knot counts of one regression family; 0 disables that spline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SmoothTerms {
    pub seasonal_knots: usize,
    pub overall_knots: usize,
}

impl SmoothTerms {
    pub const NONE: SmoothTerms = SmoothTerms {
        seasonal_knots: 0,
        overall_knots: 0,
    };

    pub fn new(seasonal_knots: usize, overall_knots: usize) -> Self {
        Self {
            seasonal_knots,
            overall_knots,
        }
    }

    pub fn knots(&self, axis: SplineAxis) -> usize {
        match axis {
            SplineAxis::Seasonal => self.seasonal_knots,
            SplineAxis::Overall => self.overall_knots,
        }
    }
}

/// One active spline: the unit that owns a coefficient vector and a smoothing scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplineSlot {
    pub family: Family,
    /// Emission group; `None` for the persistence splines shared by all clone states.
    pub group: Option<usize>,
    pub axis: SplineAxis,
    pub n_coef: usize,
}

/// State space plus which smooth terms each regression carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelStructure {
    pub space: LatentStateSpace,
    pub persistence: SmoothTerms,
    pub zero_prob: SmoothTerms,
    pub log_scale: SmoothTerms,
    pub shape: SmoothTerms,
}

impl ModelStructure {
    /// A homogeneous model: intercepts only, no splines.
    pub fn homogeneous(space: LatentStateSpace) -> Self {
        Self {
            space,
            persistence: SmoothTerms::NONE,
            zero_prob: SmoothTerms::NONE,
            log_scale: SmoothTerms::NONE,
            shape: SmoothTerms::NONE,
        }
    }

    pub fn terms(&self, family: Family) -> SmoothTerms {
        match family {
            Family::Persistence => self.persistence,
            Family::ZeroProb => self.zero_prob,
            Family::LogScale => self.log_scale,
            Family::Shape => self.shape,
        }
    }

    /// Coefficient count of a spline after centering (knots - 1), or 0 if inactive.
    pub fn n_coef(&self, family: Family, axis: SplineAxis) -> usize {
        self.terms(family).knots(axis).saturating_sub(1)
    }

    pub fn spline_slots(&self) -> Vec<SplineSlot> {
        let mut slots = Vec::new();
        for axis in SplineAxis::ALL {
            let n_coef = self.n_coef(Family::Persistence, axis);
            if n_coef > 0 {
                slots.push(SplineSlot {
                    family: Family::Persistence,
                    group: None,
                    axis,
                    n_coef,
                });
            }
        }
        for g in 0..self.space.n_groups() {
            for family in Family::EMISSION {
                for axis in SplineAxis::ALL {
                    let n_coef = self.n_coef(family, axis);
                    if n_coef > 0 {
                        slots.push(SplineSlot {
                            family,
                            group: Some(g),
                            axis,
                            n_coef,
                        });
                    }
                }
            }
        }
        slots
    }

    pub fn validate(&self) -> Result<()> {
        for family in [
            Family::Persistence,
            Family::ZeroProb,
            Family::LogScale,
            Family::Shape,
        ] {
            for axis in SplineAxis::ALL {
                let k = self.terms(family).knots(axis);
                if k != 0 && k < 4 {
                    return Err(Error::Config(format!(
                        "{}.{} spline needs 0 (off) or at least 4 knots, got {k}",
                        family.label(),
                        axis.label()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Bases backing the seasonal and overall effects of one regression family.
#[derive(Debug, Clone, Default)]
pub struct SmoothDesign {
    pub seasonal: Option<Arc<SplineBasis>>,
    pub overall: Option<Arc<SplineBasis>>,
}

impl SmoothDesign {
    pub fn basis(&self, axis: SplineAxis) -> Option<&SplineBasis> {
        match axis {
            SplineAxis::Seasonal => self.seasonal.as_deref(),
            SplineAxis::Overall => self.overall.as_deref(),
        }
    }

    /// Adds the spline part of the effect (no intercept) into `out`.
    pub fn add_effect(&self, seasonal: &[f64], overall: &[f64], out: &mut [f64]) {
        if let Some(b) = &self.seasonal {
            b.add_effect(seasonal, out);
        }
        if let Some(b) = &self.overall {
            b.add_effect(overall, out);
        }
    }

    /// Spline part of the effect at hour `t`.
    pub fn effect_at(&self, t: usize, seasonal: &[f64], overall: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (basis, coefs) in [(&self.seasonal, seasonal), (&self.overall, overall)] {
            if let Some(b) = basis {
                let n = b.n_rows();
                let data = b.design().as_slice();
                for (k, c) in coefs.iter().enumerate() {
                    acc += c * data[k * n + t];
                }
            }
        }
        acc
    }
}

/// Every basis a model needs, evaluated on one hourly timeline.
#[derive(Debug, Clone)]
pub struct ModelDesign {
    pub structure: ModelStructure,
    pub covariates: TimeCovariates,
    pub persistence: SmoothDesign,
    pub zero_prob: SmoothDesign,
    pub log_scale: SmoothDesign,
    pub shape: SmoothDesign,
}

impl ModelDesign {
    pub fn build(structure: ModelStructure, covariates: TimeCovariates) -> Result<Self> {
        structure.validate()?;
        let mut cache: BTreeMap<(SplineAxis, usize), Arc<SplineBasis>> = BTreeMap::new();
        let mut smooth = |terms: SmoothTerms| -> Result<SmoothDesign> {
            let mut get = |axis: SplineAxis| -> Result<Option<Arc<SplineBasis>>> {
                let k = terms.knots(axis);
                if k == 0 {
                    return Ok(None);
                }
                if let Some(b) = cache.get(&(axis, k)) {
                    return Ok(Some(b.clone()));
                }
                let basis = Arc::new(match axis {
                    SplineAxis::Seasonal => build_cyclic_basis(&covariates, k)?,
                    SplineAxis::Overall => build_overall_basis(&covariates, k)?,
                });
                cache.insert((axis, k), basis.clone());
                Ok(Some(basis))
            };
            Ok(SmoothDesign {
                seasonal: get(SplineAxis::Seasonal)?,
                overall: get(SplineAxis::Overall)?,
            })
        };
        Ok(Self {
            persistence: smooth(structure.persistence)?,
            zero_prob: smooth(structure.zero_prob)?,
            log_scale: smooth(structure.log_scale)?,
            shape: smooth(structure.shape)?,
            structure,
            covariates,
        })
    }

    /// The same bases (knots and centering) evaluated on another timeline.
    pub fn with_covariates(&self, covariates: TimeCovariates) -> Self {
        let mut cache: Vec<(*const SplineBasis, Arc<SplineBasis>)> = Vec::new();
        let mut remap = |b: &Option<Arc<SplineBasis>>, axis: SplineAxis| {
            b.as_ref().map(|b| {
                if let Some((_, hit)) = cache.iter().find(|(p, _)| *p == Arc::as_ptr(b)) {
                    return hit.clone();
                }
                let xs = match axis {
                    SplineAxis::Seasonal => &covariates.year_position,
                    SplineAxis::Overall => &covariates.overall_position,
                };
                let fresh = Arc::new(b.with_covariates(xs));
                cache.push((Arc::as_ptr(b), fresh.clone()));
                fresh
            })
        };
        let mut smooth = |s: &SmoothDesign| SmoothDesign {
            seasonal: remap(&s.seasonal, SplineAxis::Seasonal),
            overall: remap(&s.overall, SplineAxis::Overall),
        };
        Self {
            structure: self.structure,
            persistence: smooth(&self.persistence),
            zero_prob: smooth(&self.zero_prob),
            log_scale: smooth(&self.log_scale),
            shape: smooth(&self.shape),
            covariates,
        }
    }

    pub fn hours(&self) -> usize {
        self.covariates.hours()
    }

    pub fn family(&self, family: Family) -> &SmoothDesign {
        match family {
            Family::Persistence => &self.persistence,
            Family::ZeroProb => &self.zero_prob,
            Family::LogScale => &self.log_scale,
            Family::Shape => &self.shape,
        }
    }
}
