//! Potential scale reduction factors (Gelman-Rubin and Brooks-Gelman).

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::chains::ChainSet;

fn check_shape(lengths: impl Iterator<Item = usize>) -> Result<(usize, usize)> {
    let lengths: Vec<usize> = lengths.collect();
    if lengths.len() < 2 {
        return Err(Error::InvalidArgument(
            "PSRF needs at least two chains".into(),
        ));
    }
    let n = lengths[0];
    if lengths.iter().any(|&l| l != n) {
        return Err(Error::InvalidArgument(
            "PSRF needs chains of equal length".into(),
        ));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(
            "PSRF needs at least two draws per chain".into(),
        ));
    }
    Ok((lengths.len(), n))
}

/// Scalar PSRF `sqrt(V / W)` with `V = (n-1)/n W + B/n`.
///
/// Returns `Ok(None)` when every chain is constant at the same value (the
/// ratio is undefined) and `Some(inf)` when chains are constant at different
/// values.
pub fn psrf(chains: &[Vec<f64>]) -> Result<Option<f64>> {
    let (m, n) = check_shape(chains.iter().map(Vec::len))?;
    let means: Vec<f64> = chains
        .iter()
        .map(|c| c.iter().sum::<f64>() / n as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / m as f64;
    let b_over_n = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m - 1) as f64;
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1) as f64)
        .sum::<f64>()
        / m as f64;
    if w <= 0.0 {
        return Ok(if b_over_n > 0.0 {
            Some(f64::INFINITY)
        } else {
            None
        });
    }
    let v = (n - 1) as f64 / n as f64 * w + b_over_n;
    Ok(Some((v / w).sqrt()))
}

/// Multivariate PSRF. `chains[c][i]` is draw `i` of chain `c` (a vector).
///
/// `None` when the pooled within-chain covariance is singular.
pub fn mpsrf(chains: &[Vec<Vec<f64>>]) -> Result<Option<f64>> {
    let (m, n) = check_shape(chains.iter().map(Vec::len))?;
    let p = chains[0][0].len();
    if p == 0 {
        return Ok(None);
    }
    let mut w = DMatrix::<f64>::zeros(p, p);
    let mut means = Vec::with_capacity(m);
    for chain in chains {
        let mut mu = vec![0.0; p];
        for d in chain {
            for k in 0..p {
                mu[k] += d[k] / n as f64;
            }
        }
        for d in chain {
            for a in 0..p {
                let da = d[a] - mu[a];
                for b in 0..=a {
                    w[(a, b)] += da * (d[b] - mu[b]);
                }
            }
        }
        means.push(mu);
    }
    w /= (m * (n - 1)) as f64;
    let mut grand = vec![0.0; p];
    for mu in &means {
        for k in 0..p {
            grand[k] += mu[k] / m as f64;
        }
    }
    let mut b = DMatrix::<f64>::zeros(p, p);
    for mu in &means {
        for a in 0..p {
            for c in 0..=a {
                b[(a, c)] += (mu[a] - grand[a]) * (mu[c] - grand[c]);
            }
        }
    }
    b /= (m - 1) as f64;
    for a in 0..p {
        for c in 0..a {
            w[(c, a)] = w[(a, c)];
            b[(c, a)] = b[(a, c)];
        }
    }
    let Some(chol) = w.cholesky() else {
        return Ok(None);
    };
    let l = chol.l();
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::Numerical("singular within-chain covariance".into()))?;
    let sym = &linv * b * linv.transpose();
    let lambda = SymmetricEigen::new(sym).eigenvalues.max();
    Ok(Some(
        (n - 1) as f64 / n as f64 + (m + 1) as f64 / m as f64 * lambda,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsrfEntry {
    pub name: String,
    /// `None` when undefined (zero variance everywhere).
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsrfReport {
    pub entries: Vec<PsrfEntry>,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
    pub multivariate: Option<f64>,
    /// Parameters whose PSRF is undefined.
    pub degenerate: Vec<String>,
}

impl PsrfReport {
    /// True when every defined PSRF is below `threshold`.
    pub fn converged(&self, threshold: f64) -> bool {
        self.entries
            .iter()
            .filter_map(|e| e.value)
            .all(|v| v < threshold)
    }
}

/// PSRF for every monitored parameter (smoothing scales excluded) and the
/// multivariate PSRF over the non-redundant ones.
pub fn psrf_report(set: &ChainSet) -> Result<PsrfReport> {
    let mut entries = Vec::new();
    let mut degenerate = Vec::new();
    let mut defined = Vec::new();
    let mut mv_columns = Vec::new();
    for j in 0..set.n_params() {
        if !set.monitored[j] {
            continue;
        }
        let cols: Vec<Vec<f64>> = (0..set.chains.len()).map(|c| set.column(c, j)).collect();
        let value = psrf(&cols)?;
        match value {
            Some(v) => {
                defined.push(v);
                if !set.redundant[j] && v.is_finite() {
                    mv_columns.push(j);
                }
            }
            None => degenerate.push(set.names[j].clone()),
        }
        entries.push(PsrfEntry {
            name: set.names[j].clone(),
            value,
        });
    }
    let mut sorted = defined.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = crate::stats::quantile(&sorted, 0.5);
    let mean = defined.iter().sum::<f64>() / defined.len() as f64;
    let max = sorted.last().copied().unwrap_or(f64::NAN);
    let mv: Vec<Vec<Vec<f64>>> = set
        .chains
        .iter()
        .map(|c| {
            c.draws
                .iter()
                .map(|d| mv_columns.iter().map(|&j| d[j]).collect())
                .collect()
        })
        .collect();
    Ok(PsrfReport {
        entries,
        median,
        mean,
        max,
        multivariate: mpsrf(&mv)?,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn identical_chains() {
        let c = vec![1.0, 2.0, 3.0, 4.0];
        let r = psrf(&[c.clone(), c]).unwrap().unwrap();
        assert!((r - 0.75f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_case() {
        // Means 2 and 4; W = 1; B/n = 2; V = 0.5 + 2.
        let r = psrf(&[vec![1.0, 2.0, 3.0], vec![3.0, 4.0, 5.0]])
            .unwrap()
            .unwrap();
        assert!((r - (2.0f64 / 3.0 + 2.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_variance_is_flagged() {
        assert_eq!(psrf(&[vec![1.0; 5], vec![1.0; 5]]).unwrap(), None);
        assert_eq!(
            psrf(&[vec![1.0; 5], vec![2.0; 5]]).unwrap(),
            Some(f64::INFINITY)
        );
        assert!(psrf(&[vec![1.0; 5]]).is_err());
        assert!(psrf(&[vec![1.0; 5], vec![1.0; 4]]).is_err());
    }

    #[test]
    fn mixed_chains_approach_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let chains: Vec<Vec<Vec<f64>>> = (0..4)
            .map(|_| {
                (0..5000)
                    .map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect())
                    .collect()
            })
            .collect();
        let mv = mpsrf(&chains).unwrap().unwrap();
        assert!(mv > 0.99 && mv < 1.01, "{mv}");
        let scalar: Vec<Vec<f64>> = chains
            .iter()
            .map(|c| c.iter().map(|d| d[0]).collect())
            .collect();
        let r = psrf(&scalar).unwrap().unwrap();
        assert!(r > 0.99 && r < 1.01);
        // The multivariate factor bounds each scalar one from above (asymptotically).
        let mut shifted = chains.clone();
        for d in &mut shifted[0] {
            d[1] += 1.0;
        }
        let mv = mpsrf(&shifted).unwrap().unwrap();
        let scalar: Vec<Vec<f64>> = shifted
            .iter()
            .map(|c| c.iter().map(|d| d[1]).collect())
            .collect();
        assert!(mv >= psrf(&scalar).unwrap().unwrap().powi(2) - 0.01);
        assert!(mv > 1.1);
    }
}
