//! Blockwise adaptive random-walk Metropolis.
//!
//! Each sweep updates, in order: the transition simplexes (`p0`, `q`, `v`,
//! `r`), the persistence regression, then for every emitting group its
//! zero-probability regression and its GPD (log-scale and shape) regressions.
//! Spline coefficients are non-centred, so each smoothing parameter moves
//! jointly with the regression it smooths. Proposals are Gaussian in the
//! unconstrained coordinates with a per-block covariance learned from the
//! chain (Haario) and a scale tuned by Robbins-Monro toward the target
//! acceptance rate. Adaptation stops at the end of burn-in.
//!
//! Only the likelihood terms a block touches are recomputed: a transition
//! move reuses every cached emission column, an emission move recomputes one
//! group's column.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::augment::{draw_simplexes, sample_path};
use crate::inference::prior::{Prior, PriorSpec};
use crate::inference::transform::Layout;
use crate::model::forward::{forward_structured, GroupEmissionCache};
use crate::model::params::Role;
use crate::model::{
    Family, LikelihoodCache, ModelDesign, ModelStructure, Observations, Params, PersistencePath,
    RainfallSeries,
};

/// Run-length and adaptation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSettings {
    pub n_chains: usize,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Standard deviation of the dispersed initial intercepts.
    pub init_sd: f64,
    pub max_init_attempts: usize,
    /// Finite-density starting candidates drawn per start; the best is kept.
    pub init_candidates: usize,
    /// Independent starts per chain, each run for `pilot_sweeps` adaptive
    /// sweeps; the chain continues from the one with the highest mean log
    /// posterior over the second half of its pilot.
    pub pilot_starts: usize,
    /// Length of each pilot, capped at `burn_in`; counts towards the burn-in
    /// of the selected start.
    pub pilot_sweeps: usize,
    /// Update the transition simplexes by drawing a latent path and then
    /// their Dirichlet full conditionals, instead of by random-walk moves.
    pub augment_transition: bool,
    pub target_accept: f64,
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self {
            n_chains: 4,
            n_iter: 20_000,
            burn_in: 10_000,
            thin: 10,
            seed: 1,
            init_sd: 1.0,
            max_init_attempts: 200,
            init_candidates: 20,
            pilot_starts: 4,
            pilot_sweeps: 250,
            augment_transition: true,
            target_accept: 0.25,
        }
    }
}

impl McmcSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_chains == 0 {
            return bad("n_chains must be at least 1");
        }
        if self.thin == 0 {
            return bad("thin must be at least 1");
        }
        if self.burn_in > self.n_iter {
            return bad("burn_in cannot exceed n_iter");
        }
        if !(self.init_sd > 0.0) {
            return bad("init_sd must be positive");
        }
        if self.init_candidates == 0 || self.init_candidates > self.max_init_attempts {
            return bad("init_candidates must lie in 1..=max_init_attempts");
        }
        if self.pilot_starts == 0 {
            return bad("pilot_starts must be at least 1");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        Ok(())
    }

    /// Retained draws per chain.
    pub fn n_retained(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }

    pub fn is_retained(&self, iteration: usize) -> bool {
        iteration >= self.burn_in && (iteration - self.burn_in + 1) % self.thin == 0
    }
}

/// The unnormalised posterior of one data set.
#[derive(Debug, Clone)]
pub struct Posterior<'a> {
    pub design: &'a ModelDesign,
    pub obs: Observations,
    pub prior: Prior,
    pub layout: Layout,
}

impl<'a> Posterior<'a> {
    pub fn new(series: &RainfallSeries, design: &'a ModelDesign, spec: PriorSpec) -> Result<Self> {
        if series.len() != design.hours() {
            return Err(Error::InvalidArgument(format!(
                "series has {} hours but the design covers {}",
                series.len(),
                design.hours()
            )));
        }
        if series.is_empty() {
            return Err(Error::InvalidArgument("empty series".into()));
        }
        Ok(Self {
            design,
            obs: Observations::from_series(series),
            prior: Prior::new(spec, design),
            layout: Layout::new(design, spec.penalty_ridge),
        })
    }

    /// Log-likelihood, `-inf` when some observation is impossible.
    pub fn loglik(&self, params: &Params) -> f64 {
        LikelihoodCache::compute(params, self.design, &self.obs)
            .loglik(self.design.structure.space, &params.transition)
            .unwrap_or(f64::NEG_INFINITY)
    }

    /// Log posterior density of the unconstrained vector `theta` (Jacobian included).
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        let (params, log_jac) = self.layout.to_params(theta);
        let lp = self.prior.log_prior(&params);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        lp + log_jac + self.loglik(&params)
    }
}

fn initial_guess(structure: &ModelStructure, sd: f64, rng: &mut ChaCha8Rng) -> Params {
    let mut draw = || -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        sd * z
    };
    let mut p = Params::neutral(structure);
    let mut iota: Vec<f64> = (0..structure.space.n_dry()).map(|_| draw()).collect();
    iota.sort_by(|a, b| b.total_cmp(a));
    p.transition.persistence.intercepts = iota;
    let n_groups = structure.space.n_groups();
    let mut eta: Vec<f64> = (0..n_groups).map(|_| draw()).collect();
    let top = (0..n_groups)
        .max_by(|&a, &b| eta[a].total_cmp(&eta[b]))
        .unwrap();
    eta.swap(0, top);
    // Wet scales follow the shape order, so the heavier tail starts wider.
    let mut gamma: Vec<f64> = (1..n_groups).map(|_| draw()).collect();
    gamma.sort_by(|a, b| a.total_cmp(b));
    let mut alpha: Vec<f64> = (1..n_groups).map(|_| draw()).collect();
    alpha.sort_by(|a, b| a.total_cmp(b));
    alpha.insert(0, draw());
    for (g, state) in p.emission.groups.iter_mut().enumerate() {
        state.zero_prob.intercept = eta[g];
        state.log_scale.intercept = alpha[g];
        state.shape.intercept = if g == 0 { draw() } else { gamma[g - 1] };
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    Transition,
    Persistence,
    Zero(usize),
    Tail(usize),
}

#[derive(Debug, Clone)]
struct Block {
    name: String,
    coords: Vec<usize>,
    target: Target,
}

fn build_blocks(layout: &Layout, augment: bool) -> Vec<Block> {
    let s = &layout.structure;
    let (w, n_groups) = (s.space.n_wet(), s.space.n_groups());
    let label = |g: usize| {
        if g == 0 {
            "dry".to_string()
        } else {
            format!("wet{g}")
        }
    };
    let mut blocks = vec![
        Block {
            name: "initial".into(),
            coords: layout.theta_range(Role::P0).collect(),
            target: Target::Transition,
        },
        Block {
            name: "transition".into(),
            coords: (layout.theta_range(Role::Q).start..layout.theta_range(Role::R(w - 1)).end)
                .collect(),
            target: Target::Transition,
        },
        Block {
            name: "persistence".into(),
            coords: layout.theta_range(Role::Iota).collect(),
            target: Target::Persistence,
        },
    ];
    if augment {
        blocks.drain(..2);
    }
    let first_group = blocks.len();
    for g in 0..n_groups {
        blocks.push(Block {
            name: format!("zero_prob[{}]", label(g)),
            coords: layout
                .theta_range(Role::Intercept(Family::ZeroProb, g))
                .collect(),
            target: Target::Zero(g),
        });
        blocks.push(Block {
            name: format!("tail[{}]", label(g)),
            coords: [Family::LogScale, Family::Shape]
                .iter()
                .flat_map(|&f| layout.theta_range(Role::Intercept(f, g)))
                .collect(),
            target: Target::Tail(g),
        });
    }
    // Each spline moves with its smoothing parameter. Emission splines join
    // their regression's block; persistence splines get blocks of their own.
    for (i, slot) in s.spline_slots().iter().enumerate() {
        let coords = match slot.group {
            None => {
                blocks.push(Block {
                    name: format!("persistence.{}", slot.axis.label()),
                    coords: Vec::new(),
                    target: Target::Persistence,
                });
                let last = blocks.len() - 1;
                layout
                    .theta_range(Role::PersistenceSpline(slot.axis))
                    .for_each(|c| blocks[last].coords.push(c));
                &mut blocks[last].coords
            }
            Some(g) => {
                let offset = if slot.family == Family::ZeroProb {
                    0
                } else {
                    1
                };
                let b = first_group + 2 * g + offset;
                blocks[b].coords.extend(layout.theta_range(Role::Spline(
                    slot.family,
                    g,
                    slot.axis,
                )));
                &mut blocks[b].coords
            }
        };
        coords.extend(layout.theta_range(Role::Smoothing(i)));
    }
    for b in &mut blocks {
        b.coords.sort_unstable();
    }
    blocks
}

/// Per-block proposal state.
#[derive(Debug, Clone)]
struct Adapter {
    dim: usize,
    chol: DMatrix<f64>,
    log_scale: f64,
    count: usize,
    next_checkpoint: usize,
    window_n: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
    proposed: usize,
    accepted: usize,
}

impl Adapter {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            chol: DMatrix::identity(dim, dim) * 0.1,
            log_scale: Self::optimal_log_scale(dim),
            count: 0,
            next_checkpoint: 100,
            window_n: 0,
            mean: DVector::zeros(dim),
            m2: DMatrix::zeros(dim, dim),
            proposed: 0,
            accepted: 0,
        }
    }

    fn optimal_log_scale(dim: usize) -> f64 {
        (2.38 / (dim as f64).sqrt()).ln()
    }

    fn propose(&self, rng: &mut ChaCha8Rng, current: &[f64], out: &mut [f64]) {
        let z: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(rng)).collect();
        let s = self.log_scale.exp();
        for r in 0..self.dim {
            let mut acc = 0.0;
            for c in 0..=r {
                acc += self.chol[(r, c)] * z[c];
            }
            out[r] = current[r] + s * acc;
        }
    }

    /// Robbins-Monro scale update plus windowed covariance learning.
    fn adapt(&mut self, accept_prob: f64, target: f64, state: &[f64]) {
        self.count += 1;
        let gain = (self.count as f64).powf(-0.6);
        self.log_scale += gain * (accept_prob - target);
        self.log_scale = self.log_scale.clamp(-30.0, 10.0);

        self.window_n += 1;
        let x = DVector::from_column_slice(state);
        let delta = &x - &self.mean;
        self.mean += &delta / self.window_n as f64;
        let delta2 = &x - &self.mean;
        self.m2 += &delta * delta2.transpose();

        if self.count == self.next_checkpoint {
            self.next_checkpoint *= 2;
            if self.window_n > 2 * self.dim + 10 {
                let mut cov = &self.m2 / (self.window_n - 1) as f64;
                let jitter = 1e-10 + 1e-8 * cov.diagonal().max();
                for i in 0..self.dim {
                    cov[(i, i)] += jitter;
                }
                if let Some(ch) = cov.cholesky() {
                    self.chol = ch.l();
                    self.log_scale = Self::optimal_log_scale(self.dim);
                }
            }
            self.window_n = 0;
            self.mean.fill(0.0);
            self.m2.fill(0.0);
        }
    }
}

/// Acceptance rate of one block after burn-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAcceptance {
    pub block: String,
    /// `None` when the block made no proposals after burn-in.
    pub rate: Option<f64>,
}

/// One Markov chain over the posterior.
pub struct ChainSampler<'p, 'a> {
    posterior: &'p Posterior<'a>,
    rng: ChaCha8Rng,
    blocks: Vec<Block>,
    adapters: Vec<Adapter>,
    theta: Vec<f64>,
    params: Params,
    log_jac: f64,
    log_prior: f64,
    loglik: f64,
    cache: LikelihoodCache,
    // Scratch buffers reused across proposals.
    prop_theta: Vec<f64>,
    prop_params: Params,
    scratch_path: PersistencePath,
    scratch_group: GroupEmissionCache,
    augment: bool,
}

impl<'p, 'a> ChainSampler<'p, 'a> {
    /// Draws a dispersed starting point with finite posterior density.
    ///
    /// Intercepts are normal with standard deviation `init_sd`, then sorted
    /// into the constraint order; splines start at zero, simplexes uniform
    /// and smoothing parameters at one. With `init_candidates > 1` the
    /// candidate with the highest posterior density is kept.
    pub fn new(
        posterior: &'p Posterior<'a>,
        mut rng: ChaCha8Rng,
        settings: &McmcSettings,
    ) -> Result<Self> {
        let structure = &posterior.layout.structure;
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut found = 0;
        for _ in 0..settings.max_init_attempts.max(1) {
            let theta =
                posterior
                    .layout
                    .to_theta(&initial_guess(structure, settings.init_sd, &mut rng));
            let lp = posterior.log_density(&theta);
            if !lp.is_finite() {
                continue;
            }
            found += 1;
            if best.as_ref().is_none_or(|(b, _)| lp > *b) {
                best = Some((lp, theta));
            }
            if found == settings.init_candidates.max(1) {
                break;
            }
        }
        let Some((_, theta)) = best else {
            return Err(Error::Numerical(format!(
                "no initial value with finite posterior density after {} attempts",
                settings.max_init_attempts
            )));
        };
        let (params, log_jac) = posterior.layout.to_params(&theta);
        let log_prior = posterior.prior.log_prior(&params);
        let cache = LikelihoodCache::compute(&params, posterior.design, &posterior.obs);
        let loglik = cache.loglik(structure.space, &params.transition)?;
        let blocks = build_blocks(&posterior.layout, settings.augment_transition);
        let adapters = blocks
            .iter()
            .map(|b| Adapter::new(b.coords.len()))
            .collect();
        Ok(Self {
            posterior,
            rng,
            blocks,
            adapters,
            prop_theta: theta.clone(),
            prop_params: params.clone(),
            theta,
            params,
            log_jac,
            log_prior,
            loglik,
            cache,
            scratch_path: PersistencePath::default(),
            scratch_group: GroupEmissionCache::default(),
            augment: settings.augment_transition,
        })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    pub fn log_posterior(&self) -> f64 {
        self.loglik + self.log_prior + self.log_jac
    }

    pub fn block_names(&self) -> Vec<String> {
        self.blocks.iter().map(|b| b.name.clone()).collect()
    }

    /// Log-likelihood of the proposal, touching only what the block changes.
    fn proposal_loglik(&mut self, target: Target) -> f64 {
        let post = self.posterior;
        let space = post.design.structure.space;
        let prop = &self.prop_params;
        let result = match target {
            Target::Transition => self.cache.loglik(space, &prop.transition),
            Target::Persistence => {
                self.scratch_path.recompute(&prop.transition, post.design);
                forward_structured(
                    space,
                    &prop.transition,
                    self.scratch_path.as_slice(),
                    &self.cache.emission_columns(),
                )
            }
            Target::Zero(g) | Target::Tail(g) => {
                let current = &self.cache.groups[g];
                let state = &prop.emission.groups[g];
                if let Target::Zero(_) = target {
                    self.scratch_group.tail.clone_from(&current.tail);
                    self.scratch_group
                        .update_zero(&state.zero_prob, post.design, &post.obs);
                } else {
                    self.scratch_group.pi.clone_from(&current.pi);
                    self.scratch_group
                        .update_tail(state, post.design, &post.obs);
                }
                let mut cols = self.cache.emission_columns();
                cols[g] = &self.scratch_group.emission;
                forward_structured(
                    space,
                    &prop.transition,
                    self.cache.persistence.as_slice(),
                    &cols,
                )
            }
        };
        result.unwrap_or(f64::NEG_INFINITY)
    }

    fn commit(&mut self, target: Target) {
        match target {
            Target::Persistence => {
                std::mem::swap(&mut self.cache.persistence, &mut self.scratch_path)
            }
            Target::Zero(g) | Target::Tail(g) => {
                std::mem::swap(&mut self.cache.groups[g], &mut self.scratch_group)
            }
            Target::Transition => {}
        }
    }

    fn update_block(&mut self, b: usize, adapt: bool, target_accept: f64) -> bool {
        let block = &self.blocks[b];
        let (coords, target) = (block.coords.clone(), block.target);
        self.prop_theta.copy_from_slice(&self.theta);
        let current: Vec<f64> = coords.iter().map(|&i| self.theta[i]).collect();
        let mut moved = vec![0.0; coords.len()];
        self.adapters[b].propose(&mut self.rng, &current, &mut moved);
        for (&i, &v) in coords.iter().zip(&moved) {
            self.prop_theta[i] = v;
        }
        self.prop_params.clone_from(&self.params);
        let layout = &self.posterior.layout;
        let log_jac = layout.write_params(&self.prop_theta, &mut self.prop_params);
        let log_prior = self.posterior.prior.log_prior(&self.prop_params);
        let mut accept_prob = 0.0;
        let mut accepted = false;
        if log_prior.is_finite() && log_jac.is_finite() {
            let loglik = self.proposal_loglik(target);
            let proposed = loglik + log_prior + log_jac;
            let log_ratio = proposed - self.log_posterior();
            if log_ratio.is_finite() || log_ratio == f64::INFINITY {
                accept_prob = log_ratio.min(0.0).exp();
                let u: f64 = self.rng.random();
                if u < accept_prob {
                    accepted = true;
                    std::mem::swap(&mut self.theta, &mut self.prop_theta);
                    std::mem::swap(&mut self.params, &mut self.prop_params);
                    self.log_jac = log_jac;
                    self.log_prior = log_prior;
                    self.loglik = loglik;
                    self.commit(target);
                }
            }
        }
        let adapter = &mut self.adapters[b];
        if adapt {
            let state: Vec<f64> = coords.iter().map(|&i| self.theta[i]).collect();
            adapter.adapt(accept_prob, target_accept, &state);
        } else {
            adapter.proposed += 1;
            adapter.accepted += accepted as usize;
        }
        accepted
    }

    /// Draws the transition simplexes from their full conditional given a
    /// freshly sampled latent path.
    fn augment_transition(&mut self) -> Result<()> {
        let post = self.posterior;
        let space = post.design.structure.space;
        let counts = sample_path(
            space,
            &self.params.transition,
            self.cache.persistence.as_slice(),
            &self.cache.emission_columns(),
            &mut self.rng,
            None,
        )?;
        draw_simplexes(&counts, &mut self.params.transition, &mut self.rng);
        let layout = &post.layout;
        layout.write_simplex_theta(&self.params, &mut self.theta);
        self.log_jac = layout.write_params(&self.theta, &mut self.params);
        self.log_prior = post.prior.log_prior(&self.params);
        self.loglik = self.cache.loglik(space, &self.params.transition)?;
        Ok(())
    }

    /// One pass over every block.
    pub fn sweep(&mut self, adapt: bool, target_accept: f64) -> Result<()> {
        if self.augment {
            self.augment_transition()?;
        }
        for b in 0..self.blocks.len() {
            self.update_block(b, adapt, target_accept);
        }
        Ok(())
    }

    /// Post-adaptation acceptance rate per block.
    pub fn acceptance(&self) -> Vec<BlockAcceptance> {
        self.blocks
            .iter()
            .zip(&self.adapters)
            .map(|(b, a)| BlockAcceptance {
                block: b.name.clone(),
                rate: (a.proposed > 0).then(|| a.accepted as f64 / a.proposed as f64),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::{HourlyTimeline, TimeCovariates};
    use crate::generator::simulate_series;
    use crate::model::{LatentStateSpace, SmoothTerms};
    use crate::synthetic::reference_params;
    use chrono::NaiveDate;
    use rand::SeedableRng;

    fn design(hours: usize) -> ModelDesign {
        let structure = ModelStructure {
            space: LatentStateSpace::new(2, 2).unwrap(),
            persistence: SmoothTerms::new(6, 4),
            zero_prob: SmoothTerms::new(6, 0),
            log_scale: SmoothTerms::new(0, 4),
            shape: SmoothTerms::NONE,
        };
        let start = NaiveDate::from_ymd_opt(2001, 3, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        ModelDesign::build(
            structure,
            TimeCovariates::from_timeline(HourlyTimeline::new(start, hours)),
        )
        .unwrap()
    }

    #[test]
    fn blocks_partition_the_coordinates() {
        let d = design(100);
        let layout = Layout::new(&d, 1e-8);
        let blocks = build_blocks(&layout, false);
        let mut covered = vec![0; layout.theta_len()];
        for b in &blocks {
            assert!(!b.coords.is_empty(), "{}", b.name);
            for &i in &b.coords {
                covered[i] += 1;
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
        assert_eq!(blocks.len(), 3 + 2 * 3 + 2);
        let augmented = build_blocks(&layout, true);
        assert_eq!(augmented.len(), blocks.len() - 2);
        let simplex_end = layout.theta_range(Role::R(1)).end;
        assert!(augmented
            .iter()
            .all(|b| b.coords.iter().all(|&i| i >= simplex_end)));
    }

    #[test]
    fn incremental_state_matches_full_recomputation() {
        let d = design(1500);
        let truth = reference_params(&d);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let series = simulate_series(&truth, &d, &mut rng, false).series;
        let post = Posterior::new(&series, &d, PriorSpec::default()).unwrap();
        let settings = McmcSettings::default();
        let mut chain = ChainSampler::new(&post, ChaCha8Rng::seed_from_u64(1), &settings).unwrap();
        let mut accepted = 0;
        assert!(chain.augment);
        for it in 0..150 {
            chain.augment_transition().unwrap();
            for b in 0..chain.blocks.len() {
                accepted += chain.update_block(b, it < 100, 0.25) as usize;
            }
            let full = post.log_density(chain.theta());
            assert!(
                (full - chain.log_posterior()).abs() < 1e-8 * full.abs(),
                "iteration {it}: {full} vs {}",
                chain.log_posterior()
            );
        }
        assert!(accepted > 100);
    }

    #[test]
    fn retention_rule() {
        let s = McmcSettings {
            n_iter: 20,
            burn_in: 10,
            thin: 3,
            ..McmcSettings::default()
        };
        let kept: Vec<usize> = (0..20).filter(|&i| s.is_retained(i)).collect();
        assert_eq!(kept, vec![12, 15, 18]);
        assert_eq!(s.n_retained(), 3);
    }
}
