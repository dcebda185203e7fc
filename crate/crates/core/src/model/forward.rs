//! Scaled forward recursion for the marginal likelihood.
//!
//! `alpha_1 = p0 * e_1`, `alpha_t = (alpha_{t-1}' P(t)) * e_t`, each step
//! normalised by `c_t = sum(alpha_t)`; the log-likelihood is `sum ln c_t`.
//!
//! [`forward_structured`] exploits the clone-state sparsity (no clone-to-clone
//! moves, shared `q` and `v`) and runs in `O(T (D + W^2))`.
//! [`forward_dense`] multiplies the explicit `(D+W) x (D+W)` matrices and
//! serves as the reference path.

use crate::error::{Error, Result};
use crate::model::emission::positive_bin_mass;
use crate::model::params::{Params, Regression, StateEmission, TransitionModel};
use crate::model::series::RainfallSeries;
use crate::model::structure::{LatentStateSpace, ModelDesign, SmoothDesign};
use crate::model::transition::{logistic, transition_matrix_with, PersistencePath};

/// Rescale the forward vector once its total falls below this.
const RESCALE_BELOW: f64 = 1e-100;

/// Structured forward pass.
///
/// `persistence` is row-major `T x D`; `emission[g]` holds the per-hour
/// emission probabilities of group `g` (0 = dry, `1 + j` = wet `j`).
/// The forward vector is rescaled only when its total approaches underflow,
/// which keeps the division off the per-hour dependency chain.
pub fn forward_structured(
    space: LatentStateSpace,
    model: &TransitionModel,
    persistence: &[f64],
    emission: &[&[f64]],
) -> Result<f64> {
    let (d, w) = (space.n_dry(), space.n_wet());
    let n = emission[0].len();
    if n == 0 {
        return Ok(0.0);
    }
    assert!(persistence.len() >= n * d && emission.iter().all(|e| e.len() == n));
    let mut alpha = vec![0.0; d + w];
    let mut next = vec![0.0; d + w];
    for z in 0..d + w {
        alpha[z] = model.p0[z] * emission[space.group(z)][0];
    }
    if !(alpha.iter().sum::<f64>() > 0.0) {
        return Err(Error::ZeroLikelihood { index: 0 });
    }
    let mut log_scale = 0.0;

    let q = &model.q;
    let v = &model.v;
    // Wet rows transposed so the inner loop over source states is contiguous.
    let to_dry: Vec<f64> = model.r.iter().map(|row| row[0]).collect();
    let wet_in: Vec<f64> = (0..w)
        .flat_map(|j| model.r.iter().map(move |row| row[1 + j]))
        .collect();
    let dry = emission[0];
    for t in 1..n {
        let pers = &persistence[t * d..(t + 1) * d];
        let (alpha_dry, alpha_wet) = alpha.split_at(d);
        let inflow: f64 = alpha_wet.iter().zip(&to_dry).map(|(a, r)| a * r).sum();
        let mut leave = 0.0;
        let e_dry = dry[t];
        for k in 0..d {
            let p = pers[k];
            leave += alpha_dry[k] * (1.0 - p);
            next[k] = (alpha_dry[k] * p + v[k] * inflow) * e_dry;
        }
        for j in 0..w {
            let col = &wet_in[j * w..(j + 1) * w];
            let a: f64 = q[j] * leave + alpha_wet.iter().zip(col).map(|(x, r)| x * r).sum::<f64>();
            next[d + j] = a * emission[1 + j][t];
        }
        std::mem::swap(&mut alpha, &mut next);
        let c: f64 = alpha.iter().sum();
        if !(c >= RESCALE_BELOW) {
            if !(c > 0.0) {
                return Err(Error::ZeroLikelihood { index: t });
            }
            let inv = 1.0 / c;
            alpha.iter_mut().for_each(|a| *a *= inv);
            log_scale += c.ln();
        }
    }
    Ok(log_scale + alpha.iter().sum::<f64>().ln())
}

/// Reference forward pass over explicit transition matrices.
pub fn forward_dense(
    space: LatentStateSpace,
    model: &TransitionModel,
    persistence: &[f64],
    emission: &[&[f64]],
) -> Result<f64> {
    let (d, z_count) = (space.n_dry(), space.total());
    let n = emission[0].len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut alpha: Vec<f64> = (0..z_count)
        .map(|z| model.p0[z] * emission[space.group(z)][0])
        .collect();
    let mut ll = 0.0;
    for t in 0..n {
        if t > 0 {
            let p = transition_matrix_with(&persistence[t * d..(t + 1) * d], model, space);
            alpha = (0..z_count)
                .map(|j| {
                    let s: f64 = (0..z_count).map(|i| alpha[i] * p[(i, j)]).sum();
                    s * emission[space.group(j)][t]
                })
                .collect();
        }
        let c: f64 = alpha.iter().sum();
        if !(c > 0.0) {
            return Err(Error::ZeroLikelihood { index: t });
        }
        alpha.iter_mut().for_each(|a| *a /= c);
        ll += c.ln();
    }
    Ok(ll)
}

/// Rainfall readings with the indices of the positive ones.
#[derive(Debug, Clone)]
pub struct Observations {
    ticks: Vec<u32>,
    positive: Vec<usize>,
}

impl Observations {
    pub fn new(ticks: &[u32]) -> Self {
        Self {
            ticks: ticks.to_vec(),
            positive: (0..ticks.len()).filter(|&t| ticks[t] > 0).collect(),
        }
    }

    pub fn from_series(series: &RainfallSeries) -> Self {
        Self::new(series.ticks())
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    pub fn ticks(&self) -> &[u32] {
        &self.ticks
    }
}

fn link_at(reg: &Regression, design: &SmoothDesign, t: usize) -> f64 {
    reg.intercept + design.effect_at(t, &reg.seasonal, &reg.overall)
}

/// Per-hour emission terms of one emitting group.
#[derive(Debug, Clone, Default)]
pub struct GroupEmissionCache {
    /// Zero probability at every hour.
    pub pi: Vec<f64>,
    /// Conditional grid mass at each positive observation (aligned with the positive indices).
    pub tail: Vec<f64>,
    /// Emission probability at every hour.
    pub emission: Vec<f64>,
}

impl GroupEmissionCache {
    pub fn compute(state: &StateEmission, design: &ModelDesign, obs: &Observations) -> Self {
        let mut cache = Self::default();
        cache.update_zero(&state.zero_prob, design, obs);
        cache.update_tail(state, design, obs);
        cache
    }

    /// Recomputes `pi` (and the combined emission) from the zero-probability regression.
    pub fn update_zero(&mut self, reg: &Regression, design: &ModelDesign, obs: &Observations) {
        self.pi.clear();
        self.pi.resize(obs.len(), reg.intercept);
        design
            .zero_prob
            .add_effect(&reg.seasonal, &reg.overall, &mut self.pi);
        self.pi.iter_mut().for_each(|v| *v = logistic(*v));
        self.combine(obs);
    }

    /// Recomputes the GPD grid masses (and the combined emission).
    pub fn update_tail(&mut self, state: &StateEmission, design: &ModelDesign, obs: &Observations) {
        self.tail.clear();
        self.tail.extend(obs.positive.iter().map(|&t| {
            let sigma = link_at(&state.log_scale, &design.log_scale, t).exp();
            let xi = link_at(&state.shape, &design.shape, t);
            positive_bin_mass(obs.ticks[t], sigma, xi)
        }));
        if self.pi.len() == obs.len() {
            self.combine(obs);
        }
    }

    fn combine(&mut self, obs: &Observations) {
        self.emission.clear();
        self.emission.extend_from_slice(&self.pi);
        for (&t, &m) in obs.positive.iter().zip(&self.tail) {
            self.emission[t] = (1.0 - self.pi[t]) * m;
        }
    }
}

/// Everything the forward pass needs, precomputed once per parameter vector.
#[derive(Debug, Clone)]
pub struct LikelihoodCache {
    pub persistence: PersistencePath,
    pub groups: Vec<GroupEmissionCache>,
}

impl LikelihoodCache {
    pub fn compute(params: &Params, design: &ModelDesign, obs: &Observations) -> Self {
        Self {
            persistence: PersistencePath::compute(&params.transition, design),
            groups: params
                .emission
                .groups
                .iter()
                .map(|g| GroupEmissionCache::compute(g, design, obs))
                .collect(),
        }
    }

    pub fn emission_columns(&self) -> Vec<&[f64]> {
        self.groups.iter().map(|g| g.emission.as_slice()).collect()
    }

    pub fn loglik(&self, space: LatentStateSpace, model: &TransitionModel) -> Result<f64> {
        forward_structured(
            space,
            model,
            self.persistence.as_slice(),
            &self.emission_columns(),
        )
    }
}

/// Exact marginal log-likelihood of `series` under `params`.
///
/// Fails with [`Error::ZeroLikelihood`] naming the first hour whose reading
/// is impossible under every state.
pub fn forward_loglik(
    series: &RainfallSeries,
    params: &Params,
    design: &ModelDesign,
) -> Result<f64> {
    if series.len() != design.hours() {
        return Err(Error::InvalidArgument(format!(
            "series has {} hours but the design covers {}",
            series.len(),
            design.hours()
        )));
    }
    let obs = Observations::from_series(series);
    LikelihoodCache::compute(params, design, &obs)
        .loglik(design.structure.space, &params.transition)
}
