//! Prior densities and the hard ordering constraints.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::model::{ModelDesign, ModelStructure, Params, SplineSlot};
use crate::spline::quadratic_form;
use nalgebra::DMatrix;

const LN_2PI: f64 = 1.8378770664093453;

/// Hyperparameters of the prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSpec {
    /// Standard deviation of the normal prior on every intercept.
    pub intercept_sd: f64,
    /// Scale of the half-normal prior on each smoothing parameter.
    pub smoothing_scale: f64,
    /// Ridge added to the spline precision so it is full rank.
    pub penalty_ridge: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            intercept_sd: 10.0,
            smoothing_scale: std::f64::consts::SQRT_2,
            penalty_ridge: 1e-8,
        }
    }
}

/// Log density of a flat Dirichlet on a `k`-simplex: `ln((k-1)!)`.
pub fn log_flat_dirichlet(x: &[f64]) -> f64 {
    if x.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return f64::NEG_INFINITY;
    }
    (1..x.len()).map(|i| (i as f64).ln()).sum()
}

pub fn log_normal(x: f64, sd: f64) -> f64 {
    let z = x / sd;
    -0.5 * z * z - sd.ln() - 0.5 * LN_2PI
}

pub fn log_half_normal(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    std::f64::consts::LN_2 + log_normal(x, scale)
}

/// Identifiability orderings.
///
/// Clone persistence intercepts strictly decreasing; the dry zero-probability
/// intercept above every wet one; wet shape intercepts strictly increasing.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstraintSet;

impl ConstraintSet {
    pub fn violations(&self, params: &Params) -> Vec<String> {
        let mut out = Vec::new();
        let iota = &params.transition.persistence.intercepts;
        for k in 1..iota.len() {
            if !(iota[k - 1] > iota[k]) {
                out.push(format!("iota[{}] must exceed iota[{}]", k, k + 1));
            }
        }
        let groups = &params.emission.groups;
        let dry_eta = groups[0].zero_prob.intercept;
        for (j, g) in groups.iter().enumerate().skip(1) {
            if !(dry_eta > g.zero_prob.intercept) {
                out.push(format!(
                    "dry zero-probability intercept must exceed wet state {j}"
                ));
            }
        }
        for j in 2..groups.len() {
            if !(groups[j].shape.intercept > groups[j - 1].shape.intercept) {
                out.push(format!(
                    "shape intercept of wet state {j} must exceed wet state {}",
                    j - 1
                ));
            }
        }
        out
    }

    pub fn satisfied(&self, params: &Params) -> bool {
        let iota = &params.transition.persistence.intercepts;
        if iota.windows(2).any(|w| !(w[0] > w[1])) {
            return false;
        }
        let groups = &params.emission.groups;
        let dry_eta = groups[0].zero_prob.intercept;
        if groups[1..]
            .iter()
            .any(|g| !(dry_eta > g.zero_prob.intercept))
        {
            return false;
        }
        groups[1..]
            .windows(2)
            .all(|w| w[1].shape.intercept > w[0].shape.intercept)
    }
}

#[derive(Debug, Clone)]
struct SplinePrior {
    slot: SplineSlot,
    penalty: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

/// The full prior for one model design.
#[derive(Debug, Clone)]
pub struct Prior {
    pub spec: PriorSpec,
    pub constraints: ConstraintSet,
    splines: Vec<SplinePrior>,
}

impl Prior {
    pub fn new(spec: PriorSpec, design: &ModelDesign) -> Self {
        let splines = design
            .structure
            .spline_slots()
            .into_iter()
            .map(|slot| {
                let basis = design
                    .family(slot.family)
                    .basis(slot.axis)
                    .expect("active slot has a basis");
                let penalty = basis.penalty().clone();
                let eigenvalues = SymmetricEigen::new(penalty.clone())
                    .eigenvalues
                    .iter()
                    .map(|&l| l.max(0.0))
                    .collect();
                SplinePrior {
                    slot,
                    penalty,
                    eigenvalues,
                }
            })
            .collect();
        Self {
            spec,
            constraints: ConstraintSet,
            splines,
        }
    }

    pub fn structure_matches(&self, structure: &ModelStructure) -> bool {
        let slots = structure.spline_slots();
        slots.len() == self.splines.len()
            && slots.iter().zip(&self.splines).all(|(a, b)| *a == b.slot)
    }

    /// `ln N(coefs; 0, (S/nu + ridge I)^-1)` for spline slot `i`.
    pub fn log_spline(&self, i: usize, coefs: &[f64], nu: f64) -> f64 {
        if !(nu > 0.0) {
            return f64::NEG_INFINITY;
        }
        let sp = &self.splines[i];
        let ridge = self.spec.penalty_ridge;
        let log_det: f64 = sp.eigenvalues.iter().map(|&l| (l / nu + ridge).ln()).sum();
        let sq: f64 = coefs.iter().map(|c| c * c).sum();
        let form = quadratic_form(&sp.penalty, coefs) / nu + ridge * sq;
        0.5 * log_det - 0.5 * form - 0.5 * coefs.len() as f64 * LN_2PI
    }

    /// Smoothing-parameter terms only: the half-normal plus every spline density.
    pub fn log_smoothing(&self, params: &Params) -> f64 {
        let mut lp = 0.0;
        for (i, sp) in self.splines.iter().enumerate() {
            let nu = params.smoothing[i];
            lp += log_half_normal(nu, self.spec.smoothing_scale);
            lp += self.log_spline(i, params.spline_coefs(&sp.slot), nu);
        }
        lp
    }

    /// Log prior density; `-inf` outside the support or the constraint set.
    pub fn log_prior(&self, params: &Params) -> f64 {
        if !self.constraints.satisfied(params) {
            return f64::NEG_INFINITY;
        }
        let tm = &params.transition;
        let mut lp =
            log_flat_dirichlet(&tm.p0) + log_flat_dirichlet(&tm.q) + log_flat_dirichlet(&tm.v);
        for row in &tm.r {
            lp += log_flat_dirichlet(row);
        }
        let sd = self.spec.intercept_sd;
        lp += tm
            .persistence
            .intercepts
            .iter()
            .map(|&x| log_normal(x, sd))
            .sum::<f64>();
        for g in &params.emission.groups {
            lp += log_normal(g.zero_prob.intercept, sd);
            lp += log_normal(g.log_scale.intercept, sd);
            lp += log_normal(g.shape.intercept, sd);
        }
        lp + self.log_smoothing(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::{HourlyTimeline, TimeCovariates};
    use crate::model::{LatentStateSpace, SmoothTerms};
    use chrono::NaiveDate;

    fn design(structure: ModelStructure) -> ModelDesign {
        let start = NaiveDate::from_ymd_opt(2005, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        ModelDesign::build(
            structure,
            TimeCovariates::from_timeline(HourlyTimeline::new(start, 24 * 400)),
        )
        .unwrap()
    }

    #[test]
    fn scalar_densities() {
        assert!((log_flat_dirichlet(&[0.2, 0.3, 0.5]) - 2f64.ln()).abs() < 1e-15);
        assert!((log_flat_dirichlet(&[0.1, 0.2, 0.3, 0.4]) - 6f64.ln()).abs() < 1e-15);
        assert_eq!(log_flat_dirichlet(&[1.2, -0.2]), f64::NEG_INFINITY);
        let at_zero = log_half_normal(0.0, std::f64::consts::SQRT_2).exp();
        assert!((at_zero - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-15);
        assert_eq!(log_half_normal(-1e-9, 1.0), f64::NEG_INFINITY);
        assert!((log_normal(0.0, 10.0) - (-(10f64.ln()) - 0.5 * LN_2PI)).abs() < 1e-15);
    }

    #[test]
    fn spline_density_matches_dense_formula() {
        let structure = ModelStructure {
            space: LatentStateSpace::new(2, 2).unwrap(),
            persistence: SmoothTerms::new(6, 0),
            ..ModelStructure::homogeneous(LatentStateSpace::new(2, 2).unwrap())
        };
        let design = design(structure);
        let prior = Prior::new(PriorSpec::default(), &design);
        let basis = design
            .persistence
            .basis(crate::model::SplineAxis::Seasonal)
            .unwrap();
        let nu = 0.7;
        let coefs = [0.3, -0.2, 0.5, 0.1, -0.4];
        let mut precision = basis.penalty() / nu;
        for i in 0..5 {
            precision[(i, i)] += 1e-8;
        }
        let chol = precision.clone().cholesky().unwrap();
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let b = nalgebra::DVector::from_column_slice(&coefs);
        let form = (b.transpose() * &precision * &b)[(0, 0)];
        let expected = 0.5 * log_det - 0.5 * form - 2.5 * LN_2PI;
        assert!((prior.log_spline(0, &coefs, nu) - expected).abs() < 1e-6 * expected.abs());
    }

    #[test]
    fn constraints() {
        let structure = ModelStructure::homogeneous(LatentStateSpace::new(3, 3).unwrap());
        let prior = Prior::new(PriorSpec::default(), &design(structure));
        let mut p = Params::neutral(&structure);
        assert!(prior.log_prior(&p).is_finite());
        assert!(ConstraintSet.violations(&p).is_empty());
        p.transition.persistence.intercepts = vec![1.0, 1.0, 0.0];
        assert_eq!(prior.log_prior(&p), f64::NEG_INFINITY);
        assert_eq!(ConstraintSet.violations(&p).len(), 1);
        let mut p = Params::neutral(&structure);
        p.emission.groups[2].zero_prob.intercept = 5.0;
        assert!(!ConstraintSet.satisfied(&p));
        let mut p = Params::neutral(&structure);
        p.emission.groups[3].shape.intercept = p.emission.groups[2].shape.intercept;
        assert!(!ConstraintSet.satisfied(&p));
        // The dry shape intercept is unconstrained.
        let mut p = Params::neutral(&structure);
        p.emission.groups[0].shape.intercept = 3.0;
        assert!(ConstraintSet.satisfied(&p));
    }
}
