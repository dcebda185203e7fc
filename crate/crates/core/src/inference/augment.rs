//! Data augmentation for the transition simplexes.
//!
//! Given a latent path drawn by forward filtering, backward sampling, the
//! flat Dirichlet priors on `p0`, `q`, `v` and each row of `r` are conjugate:
//! every simplex has a Dirichlet full conditional whose parameters are one plus
//! the matching transition counts. Drawing the path from its exact conditional,
//! then the simplexes, then discarding the path leaves the marginal posterior
//! of the parameters invariant.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::model::{LatentStateSpace, TransitionModel};

const RESCALE_BELOW: f64 = 1e-100;

/// Transition counts of one latent path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionCounts {
    /// State occupied at the first hour.
    pub first: usize,
    /// Moves from any dry clone into wet state `j`.
    pub dry_to_wet: Vec<u64>,
    /// Moves from any wet state into dry clone `k`.
    pub wet_to_clone: Vec<u64>,
    /// `wet[i][0]`: moves from wet `i` to any dry clone; `wet[i][1 + j]`: to wet `j`.
    pub wet: Vec<Vec<u64>>,
}

impl TransitionCounts {
    fn new(space: LatentStateSpace, first: usize) -> Self {
        let (d, w) = (space.n_dry(), space.n_wet());
        Self {
            first,
            dry_to_wet: vec![0; w],
            wet_to_clone: vec![0; d],
            wet: vec![vec![0; w + 1]; w],
        }
    }

    fn record(&mut self, d: usize, from: usize, to: usize) {
        match (from < d, to < d) {
            (true, true) => {}
            (true, false) => self.dry_to_wet[to - d] += 1,
            (false, true) => {
                self.wet_to_clone[to] += 1;
                self.wet[from - d][0] += 1;
            }
            (false, false) => self.wet[from - d][1 + to - d] += 1,
        }
    }
}

fn draw_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // Rounding left `u` past the end; fall back to the last positive weight.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Draws a latent path from its conditional given the data and returns its
/// transition counts, or the path itself when `path` is given.
///
/// Inputs follow [`crate::model::forward_structured`].
pub fn sample_path<R: Rng + ?Sized>(
    space: LatentStateSpace,
    model: &TransitionModel,
    persistence: &[f64],
    emission: &[&[f64]],
    rng: &mut R,
    mut path: Option<&mut Vec<usize>>,
) -> Result<TransitionCounts> {
    let (d, w) = (space.n_dry(), space.n_wet());
    let z = d + w;
    let n = emission[0].len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty series".into()));
    }
    let mut alpha = vec![0.0; n * z];
    for s in 0..z {
        alpha[s] = model.p0[s] * emission[space.group(s)][0];
    }
    for t in 0..n {
        if t > 0 {
            let (done, rest) = alpha.split_at_mut(t * z);
            let prev = &done[(t - 1) * z..];
            let cur = &mut rest[..z];
            let pers = &persistence[t * d..(t + 1) * d];
            let inflow: f64 = (0..w).map(|i| prev[d + i] * model.r[i][0]).sum();
            let mut leave = 0.0;
            for k in 0..d {
                leave += prev[k] * (1.0 - pers[k]);
                cur[k] = (prev[k] * pers[k] + model.v[k] * inflow) * emission[0][t];
            }
            for j in 0..w {
                let a: f64 = model.q[j] * leave
                    + (0..w).map(|i| prev[d + i] * model.r[i][1 + j]).sum::<f64>();
                cur[d + j] = a * emission[1 + j][t];
            }
        }
        let row = &mut alpha[t * z..(t + 1) * z];
        let c: f64 = row.iter().sum();
        if !(c > 0.0) {
            return Err(Error::ZeroLikelihood { index: t });
        }
        if c < RESCALE_BELOW {
            row.iter_mut().for_each(|a| *a /= c);
        }
    }

    let mut weights = vec![0.0; z];
    let mut next = draw_index(&alpha[(n - 1) * z..], rng);
    if let Some(p) = path.as_deref_mut() {
        p.clear();
        p.resize(n, 0);
        p[n - 1] = next;
    }
    let mut counts = TransitionCounts::new(space, 0);
    for t in (0..n - 1).rev() {
        let row = &alpha[t * z..(t + 1) * z];
        let pers = &persistence[(t + 1) * d..(t + 2) * d];
        if next < d {
            for k in 0..d {
                weights[k] = if k == next { row[k] * pers[k] } else { 0.0 };
            }
            for i in 0..w {
                weights[d + i] = row[d + i] * model.v[next] * model.r[i][0];
            }
        } else {
            let j = next - d;
            for k in 0..d {
                weights[k] = row[k] * model.q[j] * (1.0 - pers[k]);
            }
            for i in 0..w {
                weights[d + i] = row[d + i] * model.r[i][1 + j];
            }
        }
        let cur = draw_index(&weights, rng);
        counts.record(d, cur, next);
        if let Some(p) = path.as_deref_mut() {
            p[t] = cur;
        }
        next = cur;
    }
    counts.first = next;
    Ok(counts)
}

fn draw_dirichlet<R: Rng + ?Sized>(
    counts: impl Iterator<Item = u64>,
    out: &mut [f64],
    rng: &mut R,
) {
    for (o, c) in out.iter_mut().zip(counts) {
        let g = Gamma::new(1.0 + c as f64, 1.0).expect("positive shape");
        *o = g.sample(rng).max(f64::MIN_POSITIVE);
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
}

/// Replaces `p0`, `q`, `v` and `r` with a draw from their full conditional.
pub fn draw_simplexes<R: Rng + ?Sized>(
    counts: &TransitionCounts,
    model: &mut TransitionModel,
    rng: &mut R,
) {
    let first = counts.first;
    draw_dirichlet(
        (0..model.p0.len()).map(|s| (s == first) as u64),
        &mut model.p0,
        rng,
    );
    draw_dirichlet(counts.dry_to_wet.iter().copied(), &mut model.q, rng);
    draw_dirichlet(counts.wet_to_clone.iter().copied(), &mut model.v, rng);
    for (row, c) in model.r.iter_mut().zip(&counts.wet) {
        draw_dirichlet(c.iter().copied(), row, rng);
    }
}
