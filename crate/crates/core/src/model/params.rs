//! Parameter containers and their canonical flat layout.
//!
//! The flat layout is the single source of parameter naming: the posterior
//! file columns, PSRF tables, MCMC transforms and Python accessors all walk
//! the same [`Segment`] list.

use serde::{Deserialize, Serialize};

use super::structure::{Family, ModelStructure, SplineAxis, SplineSlot};

/// `intercept + seasonal(t) + overall(t)` on a link scale.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Regression {
    pub intercept: f64,
    pub seasonal: Vec<f64>,
    pub overall: Vec<f64>,
}

impl Regression {
    pub fn new(intercept: f64, n_seasonal: usize, n_overall: usize) -> Self {
        Self {
            intercept,
            seasonal: vec![0.0; n_seasonal],
            overall: vec![0.0; n_overall],
        }
    }

    pub fn coefs(&self, axis: SplineAxis) -> &[f64] {
        match axis {
            SplineAxis::Seasonal => &self.seasonal,
            SplineAxis::Overall => &self.overall,
        }
    }

    fn coefs_mut(&mut self, axis: SplineAxis) -> &mut Vec<f64> {
        match axis {
            SplineAxis::Seasonal => &mut self.seasonal,
            SplineAxis::Overall => &mut self.overall,
        }
    }
}

/// Logit-scale persistence: one intercept per clone dry state, shared splines.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PersistenceRegression {
    pub intercepts: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub overall: Vec<f64>,
}

/// Static simplex parameters plus the time-varying dry persistence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    /// Initial state distribution over all D + W states.
    pub p0: Vec<f64>,
    /// Dry -> wet split, conditional on leaving the dry state (length W).
    pub q: Vec<f64>,
    /// Wet -> dry split over clone states, conditional on entering dry (length D).
    pub v: Vec<f64>,
    /// Row i: (total wet_i -> dry mass, wet_i -> wet_1, ..., wet_i -> wet_W).
    pub r: Vec<Vec<f64>>,
    pub persistence: PersistenceRegression,
}

/// Zero probability (logit), GPD log-scale and GPD shape regressions of one
/// emitting state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEmission {
    pub zero_prob: Regression,
    pub log_scale: Regression,
    pub shape: Regression,
}

impl StateEmission {
    pub fn regression(&self, family: Family) -> &Regression {
        match family {
            Family::ZeroProb => &self.zero_prob,
            Family::LogScale => &self.log_scale,
            Family::Shape => &self.shape,
            Family::Persistence => panic!("persistence is not an emission regression"),
        }
    }

    fn regression_mut(&mut self, family: Family) -> &mut Regression {
        match family {
            Family::ZeroProb => &mut self.zero_prob,
            Family::LogScale => &mut self.log_scale,
            Family::Shape => &mut self.shape,
            Family::Persistence => panic!("persistence is not an emission regression"),
        }
    }
}

/// Emission parameters per emitting group: index 0 is the dry group shared by
/// every clone state, 1..=W are the wet states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionModel {
    pub groups: Vec<StateEmission>,
}

/// One complete parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub transition: TransitionModel,
    pub emission: EmissionModel,
    /// Smoothing scale per active spline, ordered as [`ModelStructure::spline_slots`].
    pub smoothing: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Simplex,
    Real,
    Positive,
}

/// What a segment of the flat vector holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    P0,
    Q,
    V,
    R(usize),
    Iota,
    PersistenceSpline(SplineAxis),
    Intercept(Family, usize),
    Spline(Family, usize, SplineAxis),
    Smoothing(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub role: Role,
    pub kind: SegmentKind,
    pub len: usize,
    /// Included in convergence monitoring (everything except smoothing scales).
    pub monitored: bool,
    pub names: Vec<String>,
}

fn group_label(structure: &ModelStructure, g: usize) -> String {
    if g == 0 {
        "dry".to_string()
    } else if structure.space.n_wet() == 1 {
        "wet".to_string()
    } else {
        format!("wet{g}")
    }
}

fn intercept_symbol(family: Family) -> &'static str {
    match family {
        Family::Persistence => "iota",
        Family::ZeroProb => "eta",
        Family::LogScale => "alpha",
        Family::Shape => "gamma",
    }
}

/// The canonical segment list for a model structure.
pub fn segments(structure: &ModelStructure) -> Vec<Segment> {
    let space = structure.space;
    let (d, w) = (space.n_dry(), space.n_wet());
    let mut out = Vec::new();
    let vector = |role, kind, prefix: &str, len: usize| Segment {
        role,
        kind,
        len,
        monitored: true,
        names: (1..=len).map(|i| format!("{prefix}[{i}]")).collect(),
    };
    out.push(vector(Role::P0, SegmentKind::Simplex, "p0", d + w));
    out.push(vector(Role::Q, SegmentKind::Simplex, "q", w));
    out.push(vector(Role::V, SegmentKind::Simplex, "v", d));
    for i in 0..w {
        out.push(Segment {
            role: Role::R(i),
            kind: SegmentKind::Simplex,
            len: w + 1,
            monitored: true,
            names: (1..=w + 1).map(|j| format!("r[{},{j}]", i + 1)).collect(),
        });
    }
    out.push(vector(Role::Iota, SegmentKind::Real, "iota", d));
    for axis in SplineAxis::ALL {
        let n = structure.n_coef(Family::Persistence, axis);
        if n > 0 {
            let prefix = format!("persistence.{}", axis.label());
            out.push(vector(
                Role::PersistenceSpline(axis),
                SegmentKind::Real,
                &prefix,
                n,
            ));
        }
    }
    for g in 0..=w {
        let label = group_label(structure, g);
        for family in Family::EMISSION {
            out.push(Segment {
                role: Role::Intercept(family, g),
                kind: SegmentKind::Real,
                len: 1,
                monitored: true,
                names: vec![format!("{}[{label}]", intercept_symbol(family))],
            });
            for axis in SplineAxis::ALL {
                let n = structure.n_coef(family, axis);
                if n > 0 {
                    out.push(Segment {
                        role: Role::Spline(family, g, axis),
                        kind: SegmentKind::Real,
                        len: n,
                        monitored: true,
                        names: (1..=n)
                            .map(|k| format!("{}.{}[{label},{k}]", family.label(), axis.label()))
                            .collect(),
                    });
                }
            }
        }
    }
    for (i, slot) in structure.spline_slots().iter().enumerate() {
        let name = match slot.group {
            None => format!("nu[{}.{}]", slot.family.label(), slot.axis.label()),
            Some(g) => format!(
                "nu[{}.{},{}]",
                slot.family.label(),
                slot.axis.label(),
                group_label(structure, g)
            ),
        };
        out.push(Segment {
            role: Role::Smoothing(i),
            kind: SegmentKind::Positive,
            len: 1,
            monitored: false,
            names: vec![name],
        });
    }
    out
}

/// Flattened parameter names in canonical order.
pub fn parameter_names(structure: &ModelStructure) -> Vec<String> {
    segments(structure)
        .into_iter()
        .flat_map(|s| s.names)
        .collect()
}

impl Params {
    /// A structurally valid default: uniform simplexes, zero regressions,
    /// unit smoothing scales, intercepts spaced to satisfy the orderings.
    pub fn neutral(structure: &ModelStructure) -> Self {
        let space = structure.space;
        let (d, w) = (space.n_dry(), space.n_wet());
        let uniform = |n: usize| vec![1.0 / n as f64; n];
        let reg = |family, intercept| {
            Regression::new(
                intercept,
                structure.n_coef(family, SplineAxis::Seasonal),
                structure.n_coef(family, SplineAxis::Overall),
            )
        };
        let groups = (0..=w)
            .map(|g| StateEmission {
                zero_prob: reg(Family::ZeroProb, if g == 0 { 2.0 } else { -1.0 }),
                log_scale: reg(Family::LogScale, 0.0),
                shape: reg(Family::Shape, 0.1 * g as f64),
            })
            .collect();
        Self {
            transition: TransitionModel {
                p0: uniform(d + w),
                q: uniform(w),
                v: uniform(d),
                r: vec![uniform(w + 1); w],
                persistence: PersistenceRegression {
                    intercepts: (0..d).map(|i| 2.0 - i as f64).collect(),
                    seasonal: vec![
                        0.0;
                        structure.n_coef(Family::Persistence, SplineAxis::Seasonal)
                    ],
                    overall: vec![0.0; structure.n_coef(Family::Persistence, SplineAxis::Overall)],
                },
            },
            emission: EmissionModel { groups },
            smoothing: vec![1.0; structure.spline_slots().len()],
        }
    }

    pub fn field(&self, role: Role) -> &[f64] {
        let tm = &self.transition;
        match role {
            Role::P0 => &tm.p0,
            Role::Q => &tm.q,
            Role::V => &tm.v,
            Role::R(i) => &tm.r[i],
            Role::Iota => &tm.persistence.intercepts,
            Role::PersistenceSpline(SplineAxis::Seasonal) => &tm.persistence.seasonal,
            Role::PersistenceSpline(SplineAxis::Overall) => &tm.persistence.overall,
            Role::Intercept(f, g) => {
                std::slice::from_ref(&self.emission.groups[g].regression(f).intercept)
            }
            Role::Spline(f, g, axis) => self.emission.groups[g].regression(f).coefs(axis),
            Role::Smoothing(i) => std::slice::from_ref(&self.smoothing[i]),
        }
    }

    pub fn field_mut(&mut self, role: Role) -> &mut [f64] {
        let tm = &mut self.transition;
        match role {
            Role::P0 => &mut tm.p0,
            Role::Q => &mut tm.q,
            Role::V => &mut tm.v,
            Role::R(i) => &mut tm.r[i],
            Role::Iota => &mut tm.persistence.intercepts,
            Role::PersistenceSpline(SplineAxis::Seasonal) => &mut tm.persistence.seasonal,
            Role::PersistenceSpline(SplineAxis::Overall) => &mut tm.persistence.overall,
            Role::Intercept(f, g) => {
                std::slice::from_mut(&mut self.emission.groups[g].regression_mut(f).intercept)
            }
            Role::Spline(f, g, axis) => self.emission.groups[g].regression_mut(f).coefs_mut(axis),
            Role::Smoothing(i) => std::slice::from_mut(&mut self.smoothing[i]),
        }
    }

    /// Coefficients of an active spline slot.
    pub fn spline_coefs(&self, slot: &SplineSlot) -> &[f64] {
        match slot.group {
            None => self.field(Role::PersistenceSpline(slot.axis)),
            Some(g) => self.field(Role::Spline(slot.family, g, slot.axis)),
        }
    }

    /// Natural-scale values in canonical order.
    pub fn to_flat(&self, structure: &ModelStructure) -> Vec<f64> {
        segments(structure)
            .iter()
            .flat_map(|s| self.field(s.role).iter().copied())
            .collect()
    }

    pub fn from_flat(structure: &ModelStructure, flat: &[f64]) -> Self {
        let mut params = Self::neutral(structure);
        let mut offset = 0;
        for seg in segments(structure) {
            params
                .field_mut(seg.role)
                .copy_from_slice(&flat[offset..offset + seg.len]);
            offset += seg.len;
        }
        assert_eq!(offset, flat.len(), "flat parameter vector has wrong length");
        params
    }

    /// Checks simplex sums, ranges and vector lengths against `structure`.
    pub fn validate(&self, structure: &ModelStructure) -> Result<(), String> {
        for seg in segments(structure) {
            let v = self.field(seg.role);
            if v.len() != seg.len {
                return Err(format!(
                    "{:?}: expected {} values, got {}",
                    seg.role,
                    seg.len,
                    v.len()
                ));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(format!("{:?}: non-finite value", seg.role));
            }
            match seg.kind {
                SegmentKind::Simplex => {
                    let sum: f64 = v.iter().sum();
                    if (sum - 1.0).abs() > 1e-9 || v.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                        return Err(format!("{:?}: not a probability simplex", seg.role));
                    }
                }
                SegmentKind::Positive => {
                    if v.iter().any(|&x| x <= 0.0) {
                        return Err(format!("{:?}: must be positive", seg.role));
                    }
                }
                SegmentKind::Real => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::structure::SmoothTerms;
    use crate::model::LatentStateSpace;

    fn structure() -> ModelStructure {
        ModelStructure {
            space: LatentStateSpace::new(3, 2).unwrap(),
            persistence: SmoothTerms::new(6, 8),
            zero_prob: SmoothTerms::new(6, 0),
            log_scale: SmoothTerms::new(0, 0),
            shape: SmoothTerms::new(0, 4),
        }
    }

    #[test]
    fn flat_round_trip_and_names_align() {
        let s = structure();
        let mut p = Params::neutral(&s);
        p.transition.persistence.seasonal[2] = 0.7;
        p.emission.groups[2].shape.overall[1] = -0.3;
        let flat = p.to_flat(&s);
        assert_eq!(flat.len(), parameter_names(&s).len());
        assert_eq!(Params::from_flat(&s, &flat), p);
        let names = parameter_names(&s);
        assert_eq!(names[0], "p0[1]");
        assert!(names.contains(&"r[2,3]".to_string()));
        assert!(names.contains(&"eta[dry]".to_string()));
        assert!(names.contains(&"shape.overall[wet2,3]".to_string()));
        assert!(names.contains(&"nu[persistence.seasonal]".to_string()));
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
    }

    #[test]
    fn neutral_params_are_valid() {
        let s = structure();
        assert!(Params::neutral(&s).validate(&s).is_ok());
        let mut bad = Params::neutral(&s);
        bad.transition.q = vec![0.7, 0.7];
        assert!(bad.validate(&s).is_err());
    }
}
