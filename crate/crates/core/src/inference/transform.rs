//! Unconstrained coordinates for the sampler.
//!
//! Simplexes use stick-breaking with a centering offset (so the zero vector
//! maps to the uniform simplex), positive scalars use logs, intercepts are
//! left alone. Spline coefficients are non-centred: in the eigenbasis of the
//! penalty `S`, a penalised direction is `z / sqrt(lambda / nu + ridge)` with
//! `z` standard normal a priori, while null-space directions are used as is.
//! `to_params` returns the log-Jacobian of the inverse map.

use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::model::params::{segments, Role, Segment, SegmentKind};
use crate::model::{ModelDesign, ModelStructure, Params};

/// Eigenvalues below this fraction of the largest are treated as null space.
const NULL_TOL: f64 = 1e-9;

/// Non-centring map of one spline slot.
#[derive(Debug, Clone)]
struct SplineMap {
    role: Role,
    smoothing: usize,
    vectors: DMatrix<f64>,
    /// Penalty eigenvalue per direction, `None` for null-space directions.
    eigenvalues: Vec<Option<f64>>,
}

impl SplineMap {
    fn scale(&self, nu: f64, ridge: f64) -> impl Iterator<Item = Option<f64>> + '_ {
        self.eigenvalues
            .iter()
            .map(move |l| l.map(|l| (l / nu + ridge).sqrt().recip()))
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Stick-breaking map from `R^(k-1)` to the `k`-simplex; returns the log-Jacobian.
pub fn simplex_from_free(y: &[f64], out: &mut [f64]) -> f64 {
    let k = out.len();
    debug_assert_eq!(y.len() + 1, k);
    let mut stick: f64 = 1.0;
    let mut log_jac = 0.0;
    for i in 0..k - 1 {
        let a = y[i] - ((k - 1 - i) as f64).ln();
        let z = 1.0 / (1.0 + (-a).exp());
        log_jac += -softplus(-a) - softplus(a) + stick.ln();
        out[i] = stick * z;
        stick -= out[i];
    }
    out[k - 1] = stick.max(0.0);
    log_jac
}

pub fn simplex_to_free(x: &[f64], out: &mut [f64]) {
    let k = x.len();
    let mut stick = 1.0;
    for i in 0..k - 1 {
        let z = (x[i] / stick).clamp(0.0, 1.0);
        out[i] = (z / (1.0 - z)).ln() + ((k - 1 - i) as f64).ln();
        stick -= x[i];
    }
}

/// Where each parameter segment lives in the sampler and natural vectors.
#[derive(Debug, Clone)]
pub struct Layout {
    pub structure: ModelStructure,
    pub segments: Vec<Segment>,
    theta_ranges: Vec<Range<usize>>,
    theta_len: usize,
    splines: Vec<SplineMap>,
    ridge: f64,
}

impl Layout {
    /// Layout for `design`; `ridge` is the prior's penalty ridge.
    pub fn new(design: &ModelDesign, ridge: f64) -> Self {
        let structure = &design.structure;
        let splines = structure
            .spline_slots()
            .iter()
            .enumerate()
            .map(|(i, slot)| {
                let basis = design
                    .family(slot.family)
                    .basis(slot.axis)
                    .expect("active slot has a basis");
                let eig = SymmetricEigen::new(basis.penalty().clone());
                let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
                SplineMap {
                    role: match slot.group {
                        None => Role::PersistenceSpline(slot.axis),
                        Some(g) => Role::Spline(slot.family, g, slot.axis),
                    },
                    smoothing: i,
                    vectors: eig.eigenvectors,
                    eigenvalues: eig
                        .eigenvalues
                        .iter()
                        .map(|&l| (l > NULL_TOL * top).then_some(l))
                        .collect(),
                }
            })
            .collect();
        let segments = segments(structure);
        let mut theta_ranges = Vec::with_capacity(segments.len());
        let mut offset = 0;
        for seg in &segments {
            let n = match seg.kind {
                SegmentKind::Simplex => seg.len - 1,
                _ => seg.len,
            };
            theta_ranges.push(offset..offset + n);
            offset += n;
        }
        Self {
            structure: *structure,
            segments,
            theta_ranges,
            theta_len: offset,
            splines,
            ridge,
        }
    }

    pub fn theta_len(&self) -> usize {
        self.theta_len
    }

    /// Sampler coordinates of the segment holding `role`.
    pub fn theta_range(&self, role: Role) -> Range<usize> {
        let i = self
            .segments
            .iter()
            .position(|s| s.role == role)
            .unwrap_or_else(|| panic!("no segment {role:?}"));
        self.theta_ranges[i].clone()
    }

    /// Writes natural-scale values for `theta` into `params`; returns the log-Jacobian.
    pub fn write_params(&self, theta: &[f64], params: &mut Params) -> f64 {
        let mut log_jac = 0.0;
        for (seg, range) in self.segments.iter().zip(&self.theta_ranges) {
            let y = &theta[range.clone()];
            let out = params.field_mut(seg.role);
            match seg.kind {
                SegmentKind::Simplex => log_jac += simplex_from_free(y, out),
                SegmentKind::Real => out.copy_from_slice(y),
                SegmentKind::Positive => {
                    for (o, &v) in out.iter_mut().zip(y) {
                        *o = v.exp();
                        log_jac += v;
                    }
                }
            }
        }
        for map in &self.splines {
            let nu = params.smoothing[map.smoothing];
            let z = &theta[self.theta_range(map.role)];
            let mut b = Vec::with_capacity(z.len());
            for (&zi, scale) in z.iter().zip(map.scale(nu, self.ridge)) {
                match scale {
                    Some(s) => {
                        b.push(zi * s);
                        log_jac += s.ln();
                    }
                    None => b.push(zi),
                }
            }
            let out = params.field_mut(map.role);
            for (r, o) in out.iter_mut().enumerate() {
                *o = (0..b.len()).map(|c| map.vectors[(r, c)] * b[c]).sum();
            }
        }
        log_jac
    }

    /// Rewrites the simplex coordinates of `theta` from `params`.
    pub fn write_simplex_theta(&self, params: &Params, theta: &mut [f64]) {
        for (seg, range) in self.segments.iter().zip(&self.theta_ranges) {
            if seg.kind == SegmentKind::Simplex {
                simplex_to_free(params.field(seg.role), &mut theta[range.clone()]);
            }
        }
    }

    pub fn to_params(&self, theta: &[f64]) -> (Params, f64) {
        let mut params = Params::neutral(&self.structure);
        let log_jac = self.write_params(theta, &mut params);
        (params, log_jac)
    }

    pub fn to_theta(&self, params: &Params) -> Vec<f64> {
        let mut theta = vec![0.0; self.theta_len];
        for (seg, range) in self.segments.iter().zip(&self.theta_ranges) {
            let x = params.field(seg.role);
            let out = &mut theta[range.clone()];
            match seg.kind {
                SegmentKind::Simplex => simplex_to_free(x, out),
                SegmentKind::Real => out.copy_from_slice(x),
                SegmentKind::Positive => {
                    for (o, &v) in out.iter_mut().zip(x) {
                        *o = v.ln();
                    }
                }
            }
        }
        for map in &self.splines {
            let nu = params.smoothing[map.smoothing];
            let beta = params.field(map.role);
            let range = self.theta_range(map.role);
            for (c, scale) in map.scale(nu, self.ridge).enumerate() {
                let b: f64 = beta
                    .iter()
                    .enumerate()
                    .map(|(r, x)| map.vectors[(r, c)] * x)
                    .sum();
                theta[range.start + c] = match scale {
                    Some(s) => b / s,
                    None => b,
                };
            }
        }
        theta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::{HourlyTimeline, TimeCovariates};
    use crate::inference::prior::{log_normal, Prior, PriorSpec};
    use crate::model::{LatentStateSpace, SmoothTerms};
    use crate::synthetic::random_params;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_maps_to_uniform() {
        let mut x = [0.0; 4];
        simplex_from_free(&[0.0; 3], &mut x);
        for v in x {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    fn design(structure: ModelStructure) -> ModelDesign {
        let start = NaiveDate::from_ymd_opt(2003, 2, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        ModelDesign::build(
            structure,
            TimeCovariates::from_timeline(HourlyTimeline::new(start, 24 * 900)),
        )
        .unwrap()
    }

    fn structure() -> ModelStructure {
        ModelStructure {
            space: LatentStateSpace::new(3, 2).unwrap(),
            persistence: SmoothTerms::new(6, 5),
            zero_prob: SmoothTerms::new(6, 0),
            log_scale: SmoothTerms::new(4, 0),
            shape: SmoothTerms::NONE,
        }
    }

    #[test]
    fn round_trip() {
        let structure = structure();
        let layout = Layout::new(&design(structure), 1e-8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let p = random_params(&structure, &mut rng);
            let theta = layout.to_theta(&p);
            assert_eq!(theta.len(), layout.theta_len());
            let (back, _) = layout.to_params(&theta);
            let (a, b) = (p.to_flat(&structure), back.to_flat(&structure));
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9 * x.abs().max(1.0), "{x} vs {y}");
            }
        }
    }

    /// With the Jacobian, a cyclic spline prior becomes standard normal in `z`
    /// whatever the smoothing parameter.
    #[test]
    fn non_centred_prior_is_standard_normal() {
        let structure = ModelStructure {
            space: LatentStateSpace::new(1, 1).unwrap(),
            persistence: SmoothTerms::new(6, 0),
            zero_prob: SmoothTerms::NONE,
            log_scale: SmoothTerms::NONE,
            shape: SmoothTerms::NONE,
        };
        let d = design(structure);
        let spec = PriorSpec::default();
        let layout = Layout::new(&d, spec.penalty_ridge);
        let prior = Prior::new(spec, &d);
        let range = layout.theta_range(Role::PersistenceSpline(crate::model::SplineAxis::Seasonal));
        let nu_at = layout.theta_range(Role::Smoothing(0)).start;
        let z = [0.4, -1.3, 0.2, 0.9, -0.5];
        let expected: f64 = z.iter().map(|v| log_normal(*v, 1.0)).sum();
        for log_nu in [-3.0, 0.0, 2.5] {
            let mut theta = vec![0.0; layout.theta_len()];
            theta[range.clone()].copy_from_slice(&z);
            theta[nu_at] = log_nu;
            let (params, log_jac) = layout.to_params(&theta);
            let slot = structure.spline_slots()[0];
            // Drop the log(nu) term and the p0 and r stick-breaking terms.
            let simplex = 2.0 * simplex_from_free(&[0.0], &mut [0.0; 2]);
            let got = prior.log_spline(0, params.spline_coefs(&slot), log_nu.exp()) + log_jac
                - log_nu
                - simplex;
            assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        }
    }

    /// Change of the spline log-Jacobian with `nu` against finite-difference determinants.
    #[test]
    fn spline_jacobian_matches_finite_differences() {
        let structure = ModelStructure {
            space: LatentStateSpace::new(1, 1).unwrap(),
            persistence: SmoothTerms::new(0, 6),
            zero_prob: SmoothTerms::NONE,
            log_scale: SmoothTerms::NONE,
            shape: SmoothTerms::NONE,
        };
        let layout = Layout::new(&design(structure), 1e-8);
        let role = Role::PersistenceSpline(crate::model::SplineAxis::Overall);
        let range = layout.theta_range(role);
        let nu_at = layout.theta_range(Role::Smoothing(0)).start;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut theta: Vec<f64> = (0..layout.theta_len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let k = range.len();
        let h = 1e-4;
        let mut measure = |log_nu: f64| {
            theta[nu_at] = log_nu;
            let mut jac = nalgebra::DMatrix::zeros(k, k);
            for c in 0..k {
                let (mut tp, mut tm) = (theta.clone(), theta.clone());
                tp[range.start + c] += h;
                tm[range.start + c] -= h;
                let (pp, _) = layout.to_params(&tp);
                let (pm, _) = layout.to_params(&tm);
                for r in 0..k {
                    jac[(r, c)] = (pp.field(role)[r] - pm.field(role)[r]) / (2.0 * h);
                }
            }
            (
                layout.to_params(&theta).1 - log_nu,
                jac.determinant().abs().ln(),
            )
        };
        let (l1, fd1) = measure(-1.0);
        let (l2, fd2) = measure(1.5);
        assert!(
            ((l2 - l1) - (fd2 - fd1)).abs() < 1e-6,
            "{} vs {}",
            l2 - l1,
            fd2 - fd1
        );
        assert!((fd2 - fd1).abs() > 1.0);
    }

    /// Log-Jacobian of the stick-breaking map against a finite-difference determinant.
    #[test]
    fn simplex_jacobian_matches_finite_differences() {
        let y = [0.3, -1.1, 0.7];
        let mut x = [0.0; 4];
        let lj = simplex_from_free(&y, &mut x);
        let h = 1e-6;
        let mut jac = nalgebra::DMatrix::zeros(3, 3);
        for c in 0..3 {
            let (mut yp, mut ym) = (y, y);
            yp[c] += h;
            ym[c] -= h;
            let (mut xp, mut xm) = ([0.0; 4], [0.0; 4]);
            simplex_from_free(&yp, &mut xp);
            simplex_from_free(&ym, &mut xm);
            for r in 0..3 {
                jac[(r, c)] = (xp[r] - xm[r]) / (2.0 * h);
            }
        }
        assert!((jac.determinant().abs().ln() - lj).abs() < 1e-7);
    }
}
