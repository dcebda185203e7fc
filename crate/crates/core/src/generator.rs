//! Synthetic hourly rainfall from fitted (or known) parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::ChainSet;
use crate::model::emission::sample_positive_ticks;
use crate::model::transition::logistic;
use crate::model::{
    ModelDesign, Params, PersistencePath, RainfallSeries, Regression, SmoothDesign,
};

/// A simulated record, optionally with its latent state path.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSeries {
    pub series: RainfallSeries,
    pub latent: Option<Vec<u16>>,
}

fn link_path(reg: &Regression, design: &SmoothDesign, n: usize) -> Vec<f64> {
    let mut out = vec![reg.intercept; n];
    design.add_effect(&reg.seasonal, &reg.overall, &mut out);
    out
}

fn pick(u: f64, probs: &[f64]) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left a sliver above the cumulative sum: take the last positive entry.
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Draws one series over the calendar of `design`.
///
/// The initial state follows `p0`, each later state the row of `P(t)` of the
/// previous one, and each reading is zero with probability `pi` of the
/// state's group, otherwise a grid-discretised GPD exceedance of 0.1 mm.
pub fn simulate_series<R: Rng + ?Sized>(
    params: &Params,
    design: &ModelDesign,
    rng: &mut R,
    keep_latent: bool,
) -> SimulatedSeries {
    let space = design.structure.space;
    let (d, w) = (space.n_dry(), space.n_wet());
    let n = design.hours();
    let tm = &params.transition;
    let persistence = PersistencePath::compute(tm, design);
    let rates: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = params
        .emission
        .groups
        .iter()
        .map(|g| {
            let mut pi = link_path(&g.zero_prob, &design.zero_prob, n);
            pi.iter_mut().for_each(|v| *v = logistic(*v));
            let mut sigma = link_path(&g.log_scale, &design.log_scale, n);
            sigma.iter_mut().for_each(|v| *v = v.exp());
            (pi, sigma, link_path(&g.shape, &design.shape, n))
        })
        .collect();
    let mut ticks = Vec::with_capacity(n);
    let mut latent = keep_latent.then(|| Vec::with_capacity(n));
    let mut z = 0;
    for t in 0..n {
        let u: f64 = rng.random();
        z = if t == 0 {
            pick(u, &tm.p0)
        } else if z < d {
            let p = persistence.at(t)[z];
            if u < p {
                z
            } else {
                d + pick((u - p) / (1.0 - p), &tm.q)
            }
        } else {
            let row = &tm.r[z - d];
            if u < row[0] {
                pick(u / row[0], &tm.v)
            } else {
                // row[1..] sums to 1 - row[0], so no rescaling
                d + pick(u - row[0], &row[1..])
            }
        };
        debug_assert!(z < d + w);
        let (pi, sigma, xi) = &rates[space.group(z)];
        let u0: f64 = rng.random();
        let k = if u0 < pi[t] {
            0
        } else {
            sample_positive_ticks(rng.random(), sigma[t], xi[t])
        };
        ticks.push(k);
        if let Some(l) = latent.as_mut() {
            l.push(z as u16);
        }
    }
    SimulatedSeries {
        series: RainfallSeries::from_ticks(design.covariates.timeline, ticks)
            .expect("lengths agree by construction"),
        latent,
    }
}

/// The ChaCha8 generator for series `index` of an ensemble seeded by `seed`.
pub fn series_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// `n` independent series from one parameter vector, in parallel.
pub fn simulate_replicates(
    params: &Params,
    design: &ModelDesign,
    n: usize,
    seed: u64,
    keep_latent: bool,
) -> Vec<SimulatedSeries> {
    (0..n)
        .into_par_iter()
        .map(|i| simulate_series(params, design, &mut series_rng(seed, i), keep_latent))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRequest {
    pub n_series: usize,
    pub seed: u64,
    /// Reuse posterior draws when more series than draws are requested.
    pub allow_cycling: bool,
    pub keep_latent: bool,
}

/// One ensemble member and the posterior draw that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMember {
    pub simulated: SimulatedSeries,
    pub chain: usize,
    pub draw: usize,
}

/// Pooled draw index used for ensemble member `i` of `n` out of `total` draws.
pub fn draw_for_member(i: usize, n: usize, total: usize) -> usize {
    if n <= total {
        i * total / n
    } else {
        i % total
    }
}

/// Posterior-predictive ensemble: member `i` uses one retained draw and its
/// own random stream, so members are reproducible individually.
pub fn simulate_ensemble(
    chains: &ChainSet,
    design: &ModelDesign,
    request: &EnsembleRequest,
) -> Result<Vec<EnsembleMember>> {
    if design.structure != chains.structure {
        return Err(Error::ArtifactMismatch(
            "posterior draws were fitted with a different model structure".into(),
        ));
    }
    let total = chains.total_draws();
    if total == 0 {
        return Err(Error::InvalidArgument(
            "posterior has no retained draws".into(),
        ));
    }
    if request.n_series == 0 {
        return Err(Error::InvalidArgument("n_series must be at least 1".into()));
    }
    if request.n_series > total && !request.allow_cycling {
        return Err(Error::InvalidArgument(format!(
            "{} series requested but only {total} posterior draws retained; allow cycling to reuse draws",
            request.n_series
        )));
    }
    Ok((0..request.n_series)
        .into_par_iter()
        .map(|i| {
            let (chain, draw) = chains
                .locate(draw_for_member(i, request.n_series, total))
                .expect("index below total");
            let params = chains.draw_params(chain, draw);
            let simulated = simulate_series(
                &params,
                design,
                &mut series_rng(request.seed, i),
                request.keep_latent,
            );
            EnsembleMember {
                simulated,
                chain,
                draw,
            }
        })
        .collect())
}
