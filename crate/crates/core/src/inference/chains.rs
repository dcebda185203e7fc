use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::prior::PriorSpec;
use crate::inference::sampler::{BlockAcceptance, ChainSampler, McmcSettings, Posterior};
use crate::model::params::{segments, SegmentKind};
use crate::model::{ModelDesign, ModelStructure, Params, RainfallSeries};
use crate::stats::quantile;

/// Retained draws of one chain, natural scale, canonical parameter order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub index: usize,
    pub iterations: Vec<usize>,
    pub draws: Vec<Vec<f64>>,
    pub loglik: Vec<f64>,
    pub acceptance: Vec<BlockAcceptance>,
}

/// Posterior summary of one scalar parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSet {
    pub structure: ModelStructure,
    pub names: Vec<String>,
    /// Whether each parameter enters convergence monitoring.
    pub monitored: Vec<bool>,
    /// Whether each parameter is the last (redundant) element of a simplex.
    pub redundant: Vec<bool>,
    pub settings: McmcSettings,
    pub chains: Vec<Chain>,
}

impl ChainSet {
    pub fn new(structure: ModelStructure, settings: McmcSettings, chains: Vec<Chain>) -> Self {
        let mut names = Vec::new();
        let mut monitored = Vec::new();
        let mut redundant = Vec::new();
        for seg in segments(&structure) {
            for (i, n) in seg.names.into_iter().enumerate() {
                names.push(n);
                monitored.push(seg.monitored);
                redundant.push(seg.kind == SegmentKind::Simplex && i + 1 == seg.len);
            }
        }
        Self {
            structure,
            names,
            monitored,
            redundant,
            settings,
            chains,
        }
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(|c| c.draws.len()).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Draws of parameter `j` from one chain.
    pub fn column(&self, chain: usize, j: usize) -> Vec<f64> {
        self.chains[chain].draws.iter().map(|d| d[j]).collect()
    }

    /// Draws of parameter `j` pooled across chains.
    pub fn pooled_column(&self, j: usize) -> Vec<f64> {
        self.chains
            .iter()
            .flat_map(|c| c.draws.iter().map(move |d| d[j]))
            .collect()
    }

    /// `(chain, draw)` for pooled draw index `k` in chain-major order.
    pub fn locate(&self, mut k: usize) -> Option<(usize, usize)> {
        for (c, chain) in self.chains.iter().enumerate() {
            if k < chain.draws.len() {
                return Some((c, k));
            }
            k -= chain.draws.len();
        }
        None
    }

    pub fn draw_params(&self, chain: usize, draw: usize) -> Params {
        Params::from_flat(&self.structure, &self.chains[chain].draws[draw])
    }

    pub fn summary(&self) -> Vec<ParamSummary> {
        (0..self.n_params())
            .map(|j| {
                let mut xs = self.pooled_column(j);
                let n = xs.len() as f64;
                let mean = xs.iter().sum::<f64>() / n;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
                xs.sort_by(|a, b| a.total_cmp(b));
                ParamSummary {
                    name: self.names[j].clone(),
                    mean,
                    sd: var.sqrt(),
                    q05: quantile(&xs, 0.05),
                    q50: quantile(&xs, 0.5),
                    q95: quantile(&xs, 0.95),
                }
            })
            .collect()
    }
}

fn check_finite(sampler: &ChainSampler, index: usize, it: usize) -> Result<()> {
    if sampler.log_posterior().is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "chain {index} reached a non-finite posterior density at iteration {it}"
        )))
    }
}

/// Runs the pilot starts of chain `index` and returns the selected sampler
/// together with the number of sweeps it has already made.
fn select_start<'p, 'a>(
    posterior: &'p Posterior<'a>,
    settings: &McmcSettings,
    index: usize,
) -> Result<(ChainSampler<'p, 'a>, usize)> {
    let stream = |k: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        rng.set_stream(((index as u64) << 16) | k as u64);
        rng
    };
    if settings.pilot_starts <= 1 {
        return Ok((ChainSampler::new(posterior, stream(0), settings)?, 0));
    }
    let sweeps = settings.pilot_sweeps.min(settings.burn_in);
    let mut best: Option<(f64, ChainSampler)> = None;
    for k in 0..settings.pilot_starts {
        let mut sampler = ChainSampler::new(posterior, stream(k), settings)?;
        let mut total = 0.0;
        for it in 0..sweeps {
            sampler.sweep(true, settings.target_accept)?;
            check_finite(&sampler, index, it)?;
            if 2 * it >= sweeps {
                total += sampler.log_posterior();
            }
        }
        let score = if sweeps == 0 {
            sampler.log_posterior()
        } else {
            total
        };
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, sampler));
        }
    }
    Ok((best.expect("at least one pilot start").1, sweeps))
}

/// Runs one chain to completion.
pub fn run_chain(posterior: &Posterior, settings: &McmcSettings, index: usize) -> Result<Chain> {
    let (mut sampler, start) = select_start(posterior, settings, index)?;
    let structure = &posterior.layout.structure;
    let n_keep = settings.n_retained();
    let mut chain = Chain {
        index,
        iterations: Vec::with_capacity(n_keep),
        draws: Vec::with_capacity(n_keep),
        loglik: Vec::with_capacity(n_keep),
        acceptance: Vec::new(),
    };
    for it in start..settings.n_iter {
        sampler.sweep(it < settings.burn_in, settings.target_accept)?;
        check_finite(&sampler, index, it)?;
        if settings.is_retained(it) {
            chain.iterations.push(it);
            chain.draws.push(sampler.params().to_flat(structure));
            chain.loglik.push(sampler.loglik());
        }
    }
    chain.acceptance = sampler.acceptance();
    Ok(chain)
}

/// Fits the model by running `settings.n_chains` chains in parallel.
///
/// Chain `c` draws from the ChaCha8 stream `c` of `settings.seed`, so the
/// result does not depend on thread scheduling.
pub fn run_mcmc(
    series: &RainfallSeries,
    design: &ModelDesign,
    prior: PriorSpec,
    settings: &McmcSettings,
) -> Result<ChainSet> {
    settings.validate()?;
    let posterior = Posterior::new(series, design, prior)?;
    let chains = (0..settings.n_chains)
        .into_par_iter()
        .map(|c| run_chain(&posterior, settings, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChainSet::new(design.structure, *settings, chains))
}
