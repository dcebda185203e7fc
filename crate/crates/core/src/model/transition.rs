//! Constrained clone-state transition matrix with time-varying dry persistence.
//!
//! Row `d` (clone dry state): `p_d(t)` on the diagonal, zero for the other
//! clones, `q_j (1 - p_d(t))` into wet state `j`. Row `D + i` (wet state):
//! `v_d r_{i,1}` into clone `d`, `r_{i,1+j}` into wet state `j`.

use nalgebra::DMatrix;

use crate::model::params::TransitionModel;
use crate::model::structure::{LatentStateSpace, ModelDesign};

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Persistence probability of clone dry state `d` at hour `t`.
pub fn persistence_prob(d: usize, t: usize, model: &TransitionModel, design: &ModelDesign) -> f64 {
    let pr = &model.persistence;
    logistic(pr.intercepts[d] + design.persistence.effect_at(t, &pr.seasonal, &pr.overall))
}

/// `p_d(t)` for every hour and clone state, row-major `T x D`.
#[derive(Debug, Clone, Default)]
pub struct PersistencePath {
    n_dry: usize,
    probs: Vec<f64>,
    spline: Vec<f64>,
}

impl PersistencePath {
    pub fn compute(model: &TransitionModel, design: &ModelDesign) -> Self {
        let mut path = Self::default();
        path.recompute(model, design);
        path
    }

    /// Recomputes in place, reusing buffers.
    pub fn recompute(&mut self, model: &TransitionModel, design: &ModelDesign) {
        let pr = &model.persistence;
        let n = design.hours();
        let d = pr.intercepts.len();
        self.n_dry = d;
        self.spline.clear();
        self.spline.resize(n, 0.0);
        design
            .persistence
            .add_effect(&pr.seasonal, &pr.overall, &mut self.spline);
        self.probs.resize(n * d, 0.0);
        let neg_iota: Vec<f64> = pr.intercepts.iter().map(|i| (-i).exp()).collect();
        for (t, &s) in self.spline.iter().enumerate() {
            let es = (-s).exp();
            let row = &mut self.probs[t * d..(t + 1) * d];
            for k in 0..d {
                let odds = neg_iota[k] * es;
                row[k] = if odds.is_finite() {
                    1.0 / (1.0 + odds)
                } else {
                    logistic(pr.intercepts[k] + s)
                };
            }
        }
    }

    pub fn hours(&self) -> usize {
        if self.n_dry == 0 {
            0
        } else {
            self.probs.len() / self.n_dry
        }
    }

    #[inline]
    pub fn at(&self, t: usize) -> &[f64] {
        &self.probs[t * self.n_dry..(t + 1) * self.n_dry]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }
}

/// Full transition matrix given the clone persistence probabilities of one hour.
pub fn transition_matrix_with(
    persistence: &[f64],
    model: &TransitionModel,
    space: LatentStateSpace,
) -> DMatrix<f64> {
    let (d, w) = (space.n_dry(), space.n_wet());
    let mut m = DMatrix::zeros(d + w, d + w);
    for k in 0..d {
        let p = persistence[k];
        m[(k, k)] = p;
        for j in 0..w {
            m[(k, d + j)] = model.q[j] * (1.0 - p);
        }
    }
    for i in 0..w {
        let row = &model.r[i];
        for k in 0..d {
            m[(d + i, k)] = model.v[k] * row[0];
        }
        for j in 0..w {
            m[(d + i, d + j)] = row[1 + j];
        }
    }
    m
}

/// Transition matrix `P(t)` governing the move from hour `t - 1` to hour `t`.
pub fn transition_matrix(
    t: usize,
    model: &TransitionModel,
    design: &ModelDesign,
    space: LatentStateSpace,
) -> DMatrix<f64> {
    let pers: Vec<f64> = (0..space.n_dry())
        .map(|d| persistence_prob(d, t, model, design))
        .collect();
    transition_matrix_with(&pers, model, space)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::PersistenceRegression;

    fn model(q: Vec<f64>, v: Vec<f64>, r: Vec<Vec<f64>>, iota: Vec<f64>) -> TransitionModel {
        let n = q.len() + v.len();
        TransitionModel {
            p0: vec![1.0 / n as f64; n],
            q,
            v,
            r,
            persistence: PersistenceRegression {
                intercepts: iota,
                seasonal: vec![],
                overall: vec![],
            },
        }
    }

    #[test]
    fn logistic_values() {
        assert_eq!(logistic(0.0), 0.5);
        assert!((logistic(9f64.ln()) - 0.9).abs() < 1e-15);
        assert!((logistic(2.0) - 0.8807970779778823).abs() < 1e-15);
        assert!(logistic(-800.0) >= 0.0 && logistic(800.0) <= 1.0);
    }

    #[test]
    fn dry_and_wet_rows() {
        let space = LatentStateSpace::new(3, 2).unwrap();
        let m = model(
            vec![0.7, 0.3],
            vec![0.5, 0.3, 0.2],
            vec![vec![0.4, 0.5, 0.1], vec![0.2, 0.3, 0.5]],
            vec![0.0; 3],
        );
        let p = transition_matrix_with(&[0.9, 0.8, 0.7], &m, space);
        let dry0 = [0.9, 0.0, 0.0, 0.07, 0.03];
        let wet0 = [0.20, 0.12, 0.08, 0.5, 0.1];
        for c in 0..5 {
            assert!((p[(0, c)] - dry0[c]).abs() < 1e-15);
            assert!((p[(3, c)] - wet0[c]).abs() < 1e-15);
        }
        for r in 0..5 {
            assert!((p.row(r).sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn absorbing_when_persistence_is_one() {
        let space = LatentStateSpace::new(2, 2).unwrap();
        let m = model(
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            vec![vec![0.2, 0.4, 0.4]; 2],
            vec![0.0; 2],
        );
        let p = transition_matrix_with(&[1.0, 1.0], &m, space);
        for k in 0..2 {
            for c in 0..4 {
                assert_eq!(p[(k, c)], if c == k { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn single_dry_state_is_the_baseline_matrix() {
        let space = LatentStateSpace::new(1, 2).unwrap();
        let m = model(
            vec![0.6, 0.4],
            vec![1.0],
            vec![vec![0.3, 0.5, 0.2], vec![0.1, 0.2, 0.7]],
            vec![0.0],
        );
        let p = transition_matrix_with(&[0.85], &m, space);
        let expected = [
            [0.85, 0.6 * 0.15, 0.4 * 0.15],
            [0.3, 0.5, 0.2],
            [0.1, 0.2, 0.7],
        ];
        for r in 0..3 {
            for c in 0..3 {
                assert!((p[(r, c)] - expected[r][c]).abs() < 1e-15);
            }
        }
    }
}
