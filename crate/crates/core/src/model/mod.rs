//! Model core: parameters, transition structure, emission density and the
//! forward-algorithm likelihood.

pub mod emission;
pub mod forward;
pub mod gpd;
pub mod params;
pub mod series;
pub mod structure;
pub mod transition;

pub use emission::{emission_prob, emission_prob_at, EmissionRates, GRID_MM, TRUNCATION_MM};
pub use forward::{
    forward_dense, forward_loglik, forward_structured, LikelihoodCache, Observations,
};
pub use gpd::{gpd_cdf, XI_EPS};
pub use params::{
    parameter_names, EmissionModel, Params, PersistenceRegression, Regression, StateEmission,
    TransitionModel,
};
pub use series::RainfallSeries;
pub use structure::{
    Family, LatentStateSpace, ModelDesign, ModelStructure, SmoothDesign, SmoothTerms, SplineAxis,
    SplineSlot,
};
pub use transition::{persistence_prob, transition_matrix, PersistencePath};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::{HourlyTimeline, TimeCovariates};
    use crate::synthetic::random_params;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn design(structure: ModelStructure, hours: usize) -> ModelDesign {
        let start = NaiveDate::from_ymd_opt(2011, 5, 3)
            .unwrap()
            .and_hms_opt(7, 0, 0)
            .unwrap();
        let cov = TimeCovariates::from_timeline(HourlyTimeline::new(start, hours));
        ModelDesign::build(structure, cov).unwrap()
    }

    fn spline_structure(d: usize, w: usize) -> ModelStructure {
        ModelStructure {
            space: LatentStateSpace::new(d, w).unwrap(),
            persistence: SmoothTerms::new(6, 4),
            zero_prob: SmoothTerms::new(6, 0),
            log_scale: SmoothTerms::new(0, 4),
            shape: SmoothTerms::new(4, 0),
        }
    }

    fn random_series(rng: &mut ChaCha8Rng, design: &ModelDesign) -> RainfallSeries {
        let ticks = (0..design.hours())
            .map(|_| {
                if rng.random_bool(0.5) {
                    0
                } else {
                    rng.random_range(1..12)
                }
            })
            .collect();
        RainfallSeries::from_ticks(design.covariates.timeline, ticks).unwrap()
    }

    /// Sum over every latent path of `p0 * prod P * prod e`.
    fn brute_force(series: &RainfallSeries, params: &Params, design: &ModelDesign) -> f64 {
        let space = design.structure.space;
        let z = space.total();
        let n = series.len();
        let e: Vec<Vec<f64>> = (0..n)
            .map(|t| {
                (0..z)
                    .map(|s| {
                        emission_prob_at(series.value(t), s, t, &params.emission, design).unwrap()
                    })
                    .collect()
            })
            .collect();
        let p: Vec<_> = (0..n)
            .map(|t| transition_matrix(t, &params.transition, design, space))
            .collect();
        let mut total = 0.0;
        let mut path = vec![0usize; n];
        loop {
            let mut prob = params.transition.p0[path[0]] * e[0][path[0]];
            for t in 1..n {
                prob *= p[t][(path[t - 1], path[t])] * e[t][path[t]];
            }
            total += prob;
            let mut i = 0;
            loop {
                if i == n {
                    return total.ln();
                }
                path[i] += 1;
                if path[i] < z {
                    break;
                }
                path[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn forward_matches_path_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let structure = spline_structure(2, 2);
        let design = design(structure, 6);
        for _ in 0..10 {
            let params = random_params(&structure, &mut rng);
            let series = random_series(&mut rng, &design);
            let fast = forward_loglik(&series, &params, &design).unwrap();
            let exact = brute_force(&series, &params, &design);
            assert!((fast - exact).abs() < 1e-9, "{fast} vs {exact}");
        }
    }

    #[test]
    fn single_step_is_a_mixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let structure = spline_structure(3, 2);
        let design = design(structure, 1);
        let params = random_params(&structure, &mut rng);
        let series = RainfallSeries::from_ticks(design.covariates.timeline, vec![4]).unwrap();
        let mix: f64 = (0..5)
            .map(|z| {
                params.transition.p0[z]
                    * emission_prob_at(0.8, z, 0, &params.emission, &design).unwrap()
            })
            .sum();
        let ll = forward_loglik(&series, &params, &design).unwrap();
        assert!((ll - mix.ln()).abs() < 1e-14);
    }

    #[test]
    fn certain_observations_give_zero_loglik() {
        let structure = ModelStructure::homogeneous(LatentStateSpace::new(2, 2).unwrap());
        let design = design(structure, 50);
        let mut params = Params::neutral(&structure);
        for g in &mut params.emission.groups {
            g.zero_prob.intercept = f64::INFINITY;
        }
        let series = RainfallSeries::from_ticks(design.covariates.timeline, vec![0; 50]).unwrap();
        assert!(forward_loglik(&series, &params, &design).unwrap().abs() < 1e-12);
    }

    #[test]
    fn impossible_observation_reports_its_index() {
        let structure = ModelStructure::homogeneous(LatentStateSpace::new(2, 2).unwrap());
        let design = design(structure, 10);
        let mut params = Params::neutral(&structure);
        for g in &mut params.emission.groups {
            g.zero_prob.intercept = f64::INFINITY;
        }
        let mut ticks = vec![0; 10];
        ticks[7] = 3;
        let series = RainfallSeries::from_ticks(design.covariates.timeline, ticks).unwrap();
        match forward_loglik(&series, &params, &design) {
            Err(crate::Error::ZeroLikelihood { index }) => assert_eq!(index, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn structured_and_dense_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (d, w) in [(1, 1), (3, 2), (2, 3)] {
            let structure = spline_structure(d, w);
            let design = design(structure, 500);
            let params = random_params(&structure, &mut rng);
            let series = random_series(&mut rng, &design);
            let obs = Observations::from_series(&series);
            let cache = LikelihoodCache::compute(&params, &design, &obs);
            let cols = cache.emission_columns();
            let a = forward_structured(
                structure.space,
                &params.transition,
                cache.persistence.as_slice(),
                &cols,
            )
            .unwrap();
            let b = forward_dense(
                structure.space,
                &params.transition,
                cache.persistence.as_slice(),
                &cols,
            )
            .unwrap();
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn clone_relabeling_leaves_likelihood_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let structure = spline_structure(3, 2);
        let design = design(structure, 400);
        let params = random_params(&structure, &mut rng);
        let series = random_series(&mut rng, &design);
        let base = forward_loglik(&series, &params, &design).unwrap();
        let perm = [2usize, 0, 1];
        let mut swapped = params.clone();
        let tm = &mut swapped.transition;
        for (new, &old) in perm.iter().enumerate() {
            tm.persistence.intercepts[new] = params.transition.persistence.intercepts[old];
            tm.v[new] = params.transition.v[old];
            tm.p0[new] = params.transition.p0[old];
        }
        let relabeled = forward_loglik(&series, &swapped, &design).unwrap();
        assert!((base - relabeled).abs() < 1e-10);
    }

    #[test]
    fn persistence_ordering_follows_intercepts() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let structure = spline_structure(3, 2);
        let design = design(structure, 300);
        let params = random_params(&structure, &mut rng);
        let path = PersistencePath::compute(&params.transition, &design);
        for t in 0..300 {
            let p = path.at(t);
            assert!(p[0] > p[1] && p[1] > p[2]);
            assert!(p.iter().all(|&x| x > 0.0 && x < 1.0));
            assert!((p[1] - persistence_prob(1, t, &params.transition, &design)).abs() < 1e-14);
        }
    }

    #[test]
    fn persistence_closed_form_with_flat_splines() {
        let structure = spline_structure(2, 2);
        let design = design(structure, 48);
        let mut params = Params::neutral(&structure);
        params.transition.persistence.intercepts = vec![2.0, 0.0];
        for t in [0, 17, 47] {
            assert!(
                (persistence_prob(0, t, &params.transition, &design) - 0.8807970779778823).abs()
                    < 1e-12
            );
            assert_eq!(persistence_prob(1, t, &params.transition, &design), 0.5);
        }
    }
}
