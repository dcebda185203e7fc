//! Parameter generators for tests, fixtures and simulation studies.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::model::{Family, ModelDesign, ModelStructure, Params, SplineAxis};

fn dirichlet_flat<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / sum).collect()
}

/// Random parameters satisfying every ordering constraint.
///
/// Simplexes are flat-Dirichlet draws; intercepts and spline coefficients are
/// drawn on moderate scales so that every hour has nondegenerate emissions.
pub fn random_params<R: Rng + ?Sized>(structure: &ModelStructure, rng: &mut R) -> Params {
    let space = structure.space;
    let (d, w) = (space.n_dry(), space.n_wet());
    let mut p = Params::neutral(structure);
    let tm = &mut p.transition;
    tm.p0 = dirichlet_flat(rng, d + w);
    tm.q = dirichlet_flat(rng, w);
    tm.v = dirichlet_flat(rng, d);
    for row in &mut tm.r {
        *row = dirichlet_flat(rng, w + 1);
    }
    let mut iota: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..4.0)).collect();
    iota.sort_by(|a, b| b.total_cmp(a));
    tm.persistence.intercepts = iota;
    let mut normal = |sd: f64| -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        sd * z
    };
    for c in tm
        .persistence
        .seasonal
        .iter_mut()
        .chain(tm.persistence.overall.iter_mut())
    {
        *c = normal(0.3);
    }
    let wet_eta: Vec<f64> = (0..w).map(|_| normal(1.0) - 0.5).collect();
    let max_wet = wet_eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut wet_gamma: Vec<f64> = (0..w).map(|_| normal(0.15) + 0.15).collect();
    wet_gamma.sort_by(|a, b| a.total_cmp(b));
    for (g, state) in p.emission.groups.iter_mut().enumerate() {
        if g == 0 {
            state.zero_prob.intercept = max_wet + 0.5 + normal(1.0).abs();
            state.shape.intercept = normal(0.1);
        } else {
            state.zero_prob.intercept = wet_eta[g - 1];
            state.shape.intercept = wet_gamma[g - 1];
        }
        state.log_scale.intercept = normal(0.5);
        for (reg, sd) in [
            (&mut state.zero_prob, 0.3),
            (&mut state.log_scale, 0.3),
            (&mut state.shape, 0.05),
        ] {
            for c in reg.seasonal.iter_mut().chain(reg.overall.iter_mut()) {
                *c = normal(sd);
            }
        }
    }
    for nu in &mut p.smoothing {
        *nu = rng.random_range(0.5..2.0);
    }
    p
}

/// Centered coefficients approximating `f` on the basis of `axis` in `design`.
fn project(
    design: &ModelDesign,
    family: Family,
    axis: SplineAxis,
    f: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let Some(basis) = design.family(family).basis(axis) else {
        return Vec::new();
    };
    let values: Vec<f64> = basis.knots().iter().map(|&k| f(k)).collect();
    match basis.constraint() {
        Some(z) => (0..z.ncols())
            .map(|c| values.iter().enumerate().map(|(r, v)| v * z[(r, c)]).sum())
            .collect(),
        None => values,
    }
}

/// A plausible hourly-rainfall parameter set with seasonal structure.
///
/// Dry spells are longer in summer, wet state 1 is bounded drizzle, the last
/// wet state carries the heavy tail, and every active spline gets a smooth
/// effect small enough to be plausible under the smoothing prior. Used as ground truth
/// in recovery studies and to generate the bundled fixture.
pub fn reference_params(design: &ModelDesign) -> Params {
    use std::f64::consts::TAU;
    let structure = &design.structure;
    let space = structure.space;
    let (d, w) = (space.n_dry(), space.n_wet());
    let mut p = Params::neutral(structure);
    let tm = &mut p.transition;
    tm.p0 = vec![1.0 / (d + w) as f64; d + w];
    tm.q = if w == 1 {
        vec![1.0]
    } else {
        (0..w)
            .map(|j| if j == 0 { 0.7 } else { 0.3 / (w - 1) as f64 })
            .collect()
    };
    tm.v = if d == 1 {
        vec![1.0]
    } else {
        (0..d)
            .map(|k| if k == 0 { 0.4 } else { 0.6 / (d - 1) as f64 })
            .collect()
    };
    tm.r = (0..w)
        .map(|i| {
            if w == 1 {
                return vec![0.4, 0.6];
            }
            let (to_dry, stay) = if i == 0 { (0.3, 0.6) } else { (0.1, 0.6) };
            let mut row = vec![(1.0 - to_dry - stay) / (w - 1) as f64; w + 1];
            row[0] = to_dry;
            row[1 + i] = stay;
            row
        })
        .collect();
    tm.persistence.intercepts = (0..d).map(|k| 4.0 - 2.5 * k as f64).collect();
    tm.persistence.seasonal = project(design, Family::Persistence, SplineAxis::Seasonal, |x| {
        -0.3 * (TAU * x).cos()
    });
    tm.persistence.overall = project(design, Family::Persistence, SplineAxis::Overall, |x| {
        0.2 * x
    });
    for (g, state) in p.emission.groups.iter_mut().enumerate() {
        // Light drizzle in wet state 1, heavier-tailed showers in the last.
        let (eta, alpha, gamma) = match g {
            0 => (4.5, -1.0, 0.0),
            1 => (-1.0, 0.0, -0.2),
            _ => (
                -2.0,
                1.0 + 0.2 * (g - 2) as f64,
                0.35 + 0.05 * (g - 2) as f64,
            ),
        };
        state.zero_prob.intercept = eta;
        state.log_scale.intercept = alpha;
        state.shape.intercept = gamma;
        let phase = g as f64;
        state.zero_prob.seasonal = project(design, Family::ZeroProb, SplineAxis::Seasonal, |x| {
            0.15 * (TAU * x + phase).cos()
        });
        state.zero_prob.overall =
            project(design, Family::ZeroProb, SplineAxis::Overall, |x| 0.1 * x);
        state.log_scale.seasonal = project(design, Family::LogScale, SplineAxis::Seasonal, |x| {
            0.15 * (TAU * x - 1.0).sin()
        });
        state.log_scale.overall =
            project(design, Family::LogScale, SplineAxis::Overall, |x| -0.1 * x);
        state.shape.seasonal = project(design, Family::Shape, SplineAxis::Seasonal, |x| {
            0.03 * (TAU * x).sin()
        });
        state.shape.overall = project(design, Family::Shape, SplineAxis::Overall, |x| 0.03 * x);
    }
    p
}

/// Seed of the bundled synthetic record.
pub const FIXTURE_SEED: u64 = 20_010_101;

/// Design of the bundled synthetic record: two clone dry states, two wet
/// states, seasonal splines on every regression, calendar year 2001.
pub fn fixture_design() -> crate::Result<ModelDesign> {
    use crate::calendar::{HourlyTimeline, TimeCovariates};
    use crate::model::{LatentStateSpace, SmoothTerms};
    let start = chrono::NaiveDate::from_ymd_opt(2001, 1, 1)
        .expect("valid date")
        .and_hms_opt(0, 0, 0)
        .expect("valid time");
    let seasonal = SmoothTerms::new(6, 0);
    let structure = ModelStructure {
        space: LatentStateSpace::new(2, 2)?,
        persistence: seasonal,
        zero_prob: seasonal,
        log_scale: seasonal,
        shape: seasonal,
    };
    ModelDesign::build(
        structure,
        TimeCovariates::from_timeline(HourlyTimeline::new(start, 8760)),
    )
}

/// The bundled synthetic record: one simulation from [`reference_params`].
pub fn fixture_series() -> crate::Result<crate::model::RainfallSeries> {
    let design = fixture_design()?;
    let params = reference_params(&design);
    let mut rng = crate::generator::series_rng(FIXTURE_SEED, 0);
    Ok(crate::generator::simulate_series(&params, &design, &mut rng, false).series)
}
