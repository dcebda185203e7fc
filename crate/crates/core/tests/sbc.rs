//! Recovery of the dry-state zero probability in the smallest model.

use chrono::NaiveDate;
use rainfall_nhmm::calendar::{HourlyTimeline, TimeCovariates};
use rainfall_nhmm::generator::{series_rng, simulate_series};
use rainfall_nhmm::inference::{run_mcmc, McmcSettings, PriorSpec};
use rainfall_nhmm::model::{LatentStateSpace, ModelDesign, ModelStructure, Params};
use rainfall_nhmm::stats::effective_sample_size;

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn dry_zero_probability_is_recovered() {
    let start = NaiveDate::from_ymd_opt(2010, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let structure = ModelStructure::homogeneous(LatentStateSpace::new(1, 1).unwrap());
    let design = ModelDesign::build(
        structure,
        TimeCovariates::from_timeline(HourlyTimeline::new(start, 5000)),
    )
    .unwrap();
    let mut truth = Params::neutral(&structure);
    truth.transition.persistence.intercepts = vec![2.5];
    truth.transition.r = vec![vec![0.3, 0.7]];
    truth.emission.groups[0].zero_prob.intercept = 2.0;
    truth.emission.groups[1].zero_prob.intercept = -1.5;
    truth.emission.groups[1].log_scale.intercept = 0.3;
    truth.emission.groups[1].shape.intercept = 0.2;
    let series = simulate_series(&truth, &design, &mut series_rng(17, 0), false).series;

    let settings = McmcSettings {
        n_chains: 4,
        n_iter: 3000,
        burn_in: 1000,
        thin: 1,
        seed: 4,
        ..McmcSettings::default()
    };
    let set = run_mcmc(&series, &design, PriorSpec::default(), &settings).unwrap();
    let j = set.index_of("eta[dry]").unwrap();
    let pi: Vec<f64> = set.pooled_column(j).into_iter().map(logistic).collect();
    let n = pi.len() as f64;
    let mean = pi.iter().sum::<f64>() / n;
    let sd = (pi.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let ess: f64 = (0..set.chains.len())
        .map(|c| {
            effective_sample_size(
                &set.column(c, j)
                    .into_iter()
                    .map(logistic)
                    .collect::<Vec<_>>(),
            )
        })
        .sum();
    // The truth behaves like one more posterior draw: its distance from the
    // Monte-Carlo mean has variance sd^2 (posterior) + sd^2 / ess (sampling).
    let se = sd * (1.0 + 1.0 / ess).sqrt();
    let true_pi = logistic(2.0);
    assert!(
        (mean - true_pi).abs() < 3.0 * se,
        "mean {mean}, truth {true_pi}, se {se}, ess {ess}"
    );
    assert!(ess > 100.0, "ess {ess}");
}
