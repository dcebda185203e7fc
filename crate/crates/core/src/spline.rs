//! Cubic regression spline bases with integrated squared second-derivative
//! penalties.
//!
//! Both kinds are parameterised by the function values at the knots. The
//! second derivatives at the knots follow from the continuity conditions
//! (natural end conditions for [`SplineKind::Cubic`], periodic for
//! [`SplineKind::CyclicCubic`]), giving `delta = F beta` and a penalty
//! `S = D' B^-1 D` with `beta' S beta = int f''(x)^2 dx` exactly.
//!
//! Centered bases absorb the sum-to-zero constraint `1' X beta = 0` through an
//! orthonormal null-space matrix `Z`, so they carry one coefficient fewer than
//! knots and the regression intercept stays identifiable.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::calendar::TimeCovariates;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplineKind {
    /// Periodic on [0, 1): value, slope and curvature match at the wrap point.
    CyclicCubic,
    /// Natural cubic regression spline over the knot range.
    Cubic,
}

#[derive(Debug, Clone)]
pub struct SplineBasis {
    kind: SplineKind,
    knots: Vec<f64>,
    /// Knot second derivatives as a linear map of knot values (K x K).
    second_deriv: DMatrix<f64>,
    raw_penalty: DMatrix<f64>,
    /// Null-space basis of the centering constraint (K x K-1).
    constraint: Option<DMatrix<f64>>,
    penalty: DMatrix<f64>,
    /// Column-major T x n_coef design.
    design: DMatrix<f64>,
}

/// Cyclic basis over the time-of-year covariate with `n_knots` equidistant knots.
pub fn build_cyclic_basis(cov: &TimeCovariates, n_knots: usize) -> Result<SplineBasis> {
    let knots = (0..n_knots).map(|i| i as f64 / n_knots as f64).collect();
    SplineBasis::new(SplineKind::CyclicCubic, knots, &cov.year_position, true)
}

/// Natural cubic basis over the whole-record covariate with `n_knots`
/// equidistant knots spanning [0, 1].
pub fn build_overall_basis(cov: &TimeCovariates, n_knots: usize) -> Result<SplineBasis> {
    if n_knots < 4 {
        return Err(Error::InvalidArgument(format!(
            "spline needs at least 4 knots, got {n_knots}"
        )));
    }
    let knots = (0..n_knots)
        .map(|i| i as f64 / (n_knots - 1) as f64)
        .collect();
    SplineBasis::new(SplineKind::Cubic, knots, &cov.overall_position, true)
}

impl SplineBasis {
    pub fn new(kind: SplineKind, knots: Vec<f64>, xs: &[f64], centered: bool) -> Result<Self> {
        if knots.len() < 4 {
            return Err(Error::InvalidArgument(format!(
                "spline needs at least 4 knots, got {}",
                knots.len()
            )));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) || knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::InvalidArgument(
                "knots must be strictly increasing".into(),
            ));
        }
        if kind == SplineKind::CyclicCubic && (knots[0] < 0.0 || knots[knots.len() - 1] >= 1.0) {
            return Err(Error::InvalidArgument(
                "cyclic knots must lie in [0, 1)".into(),
            ));
        }
        let (second_deriv, raw_penalty) = match kind {
            SplineKind::CyclicCubic => cyclic_matrices(&knots),
            SplineKind::Cubic => natural_matrices(&knots),
        }?;
        let mut basis = Self {
            kind,
            knots,
            second_deriv,
            raw_penalty: symmetrize(raw_penalty),
            constraint: None,
            penalty: DMatrix::zeros(0, 0),
            design: DMatrix::zeros(0, 0),
        };
        let raw = basis.raw_design(xs);
        if centered {
            let sums: Vec<f64> = (0..raw.ncols()).map(|k| raw.column(k).sum()).collect();
            let z = null_space_of_row(&sums);
            basis.penalty = symmetrize(z.transpose() * &basis.raw_penalty * &z);
            basis.design = raw * &z;
            basis.constraint = Some(z);
        } else {
            basis.penalty = basis.raw_penalty.clone();
            basis.design = raw;
        }
        Ok(basis)
    }

    /// Same basis (knots and centering) evaluated at new covariate values.
    pub fn with_covariates(&self, xs: &[f64]) -> Self {
        let raw = self.raw_design(xs);
        let design = match &self.constraint {
            Some(z) => raw * z,
            None => raw,
        };
        Self {
            design,
            ..self.clone()
        }
    }

    pub fn kind(&self) -> SplineKind {
        self.kind
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn is_centered(&self) -> bool {
        self.constraint.is_some()
    }

    /// Number of coefficients (columns of the design).
    pub fn n_coef(&self) -> usize {
        self.design.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.design.nrows()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn penalty(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    /// Penalty on the knot-value parameterisation, before centering.
    pub fn raw_penalty(&self) -> &DMatrix<f64> {
        &self.raw_penalty
    }

    pub fn constraint(&self) -> Option<&DMatrix<f64>> {
        self.constraint.as_ref()
    }

    /// Basis values at `x` in the knot-value parameterisation.
    pub fn raw_row(&self, x: f64) -> Vec<f64> {
        let k = self.knots.len();
        let (j, j1, lo, hi, u) = match self.kind {
            SplineKind::CyclicCubic => {
                let k0 = self.knots[0];
                let u = (x - k0).rem_euclid(1.0) + k0;
                let j = self.knots.partition_point(|&kn| kn <= u).saturating_sub(1);
                let (j1, hi) = if j + 1 < k {
                    (j + 1, self.knots[j + 1])
                } else {
                    (0, k0 + 1.0)
                };
                (j, j1, self.knots[j], hi, u)
            }
            SplineKind::Cubic => {
                let u = x.clamp(self.knots[0], self.knots[k - 1]);
                let j = self
                    .knots
                    .partition_point(|&kn| kn <= u)
                    .saturating_sub(1)
                    .min(k - 2);
                (j, j + 1, self.knots[j], self.knots[j + 1], u)
            }
        };
        let h = hi - lo;
        let am = (hi - u) / h;
        let ap = (u - lo) / h;
        let cm = ((hi - u).powi(3) / h - h * (hi - u)) / 6.0;
        let cp = ((u - lo).powi(3) / h - h * (u - lo)) / 6.0;
        let mut row: Vec<f64> = (0..k)
            .map(|c| cm * self.second_deriv[(j, c)] + cp * self.second_deriv[(j1, c)])
            .collect();
        row[j] += am;
        row[j1] += ap;
        row
    }

    /// Design row at `x`, including the centering transform when present.
    pub fn row(&self, x: f64) -> Vec<f64> {
        let raw = self.raw_row(x);
        match &self.constraint {
            Some(z) => (0..z.ncols())
                .map(|c| raw.iter().enumerate().map(|(r, v)| v * z[(r, c)]).sum())
                .collect(),
            None => raw,
        }
    }

    /// Fitted effect at covariate value `x`.
    pub fn evaluate(&self, x: f64, coefs: &[f64]) -> f64 {
        self.row(x).iter().zip(coefs).map(|(b, c)| b * c).sum()
    }

    /// Adds `design * coefs` into `out`.
    pub fn add_effect(&self, coefs: &[f64], out: &mut [f64]) {
        let n = self.design.nrows();
        assert_eq!(coefs.len(), self.n_coef(), "coefficient count mismatch");
        assert_eq!(out.len(), n, "output length mismatch");
        let data = self.design.as_slice();
        for (k, &c) in coefs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (o, b) in out.iter_mut().zip(&data[k * n..(k + 1) * n]) {
                *o += c * b;
            }
        }
    }

    /// `coefs' S coefs` with the (centered) penalty.
    pub fn penalty_form(&self, coefs: &[f64]) -> f64 {
        quadratic_form(&self.penalty, coefs)
    }

    fn raw_design(&self, xs: &[f64]) -> DMatrix<f64> {
        let k = self.knots.len();
        let mut m = DMatrix::zeros(xs.len(), k);
        for (t, &x) in xs.iter().enumerate() {
            for (c, v) in self.raw_row(x).into_iter().enumerate() {
                m[(t, c)] = v;
            }
        }
        m
    }
}

pub(crate) fn quadratic_form(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[(i, j)] * v[j];
        }
        acc += v[i] * row;
    }
    acc
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Returns (F, S) for periodic knots on [0, 1).
fn cyclic_matrices(knots: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = knots.len();
    let h: Vec<f64> = (0..n)
        .map(|i| {
            if i + 1 < n {
                knots[i + 1] - knots[i]
            } else {
                knots[0] + 1.0 - knots[i]
            }
        })
        .collect();
    let mut b = DMatrix::zeros(n, n);
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let prev = (i + n - 1) % n;
        let next = (i + 1) % n;
        b[(i, i)] = (h[prev] + h[i]) / 3.0;
        b[(i, next)] += h[i] / 6.0;
        b[(i, prev)] += h[prev] / 6.0;
        d[(i, i)] = -1.0 / h[prev] - 1.0 / h[i];
        d[(i, next)] += 1.0 / h[i];
        d[(i, prev)] += 1.0 / h[prev];
    }
    let chol = b.cholesky().ok_or_else(|| {
        Error::Numerical("cyclic spline band matrix not positive definite".into())
    })?;
    let f = chol.solve(&d);
    let s = d.transpose() * &f;
    Ok((f, s))
}

/// Returns (F, S) for natural end conditions (zero curvature at both ends).
fn natural_matrices(knots: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = knots.len();
    let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
    let m = n - 2;
    let mut b = DMatrix::zeros(m, m);
    let mut d = DMatrix::zeros(m, n);
    for i in 1..=m {
        let r = i - 1;
        b[(r, r)] = (h[i - 1] + h[i]) / 3.0;
        if r + 1 < m {
            b[(r, r + 1)] = h[i] / 6.0;
            b[(r + 1, r)] = h[i] / 6.0;
        }
        d[(r, i - 1)] = 1.0 / h[i - 1];
        d[(r, i)] = -1.0 / h[i - 1] - 1.0 / h[i];
        d[(r, i + 1)] = 1.0 / h[i];
    }
    let chol = b
        .cholesky()
        .ok_or_else(|| Error::Numerical("spline band matrix not positive definite".into()))?;
    let inner = chol.solve(&d);
    let s = d.transpose() * &inner;
    let mut f = DMatrix::zeros(n, n);
    f.view_mut((1, 0), (m, n)).copy_from(&inner);
    Ok((f, s))
}

/// Orthonormal basis (K x K-1) of `{z : c' z = 0}` via a Householder reflection.
fn null_space_of_row(c: &[f64]) -> DMatrix<f64> {
    let k = c.len();
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut v = c.to_vec();
    v[0] += norm.copysign(c[0]);
    let vv: f64 = v.iter().map(|x| x * x).sum();
    let mut z = DMatrix::zeros(k, k - 1);
    for col in 1..k {
        for row in 0..k {
            let identity = if row == col { 1.0 } else { 0.0 };
            z[(row, col - 1)] = identity - 2.0 * v[row] * v[col] / vv;
        }
    }
    z
}
