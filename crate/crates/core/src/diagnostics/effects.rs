use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::ChainSet;
use crate::model::{ModelDesign, SplineAxis};
use crate::spline::SplineKind;
use crate::stats::quantile;

/// Posterior median and 95% band of one spline effect over its covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectCurve {
    pub name: String,
    pub grid: Vec<f64>,
    pub median: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl EffectCurve {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "median", "lower", "upper"])?;
        for i in 0..self.grid.len() {
            w.write_record(
                [self.grid[i], self.median[i], self.lower[i], self.upper[i]].map(|v| v.to_string()),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Effect curves (on the linear-predictor scale, intercept excluded) of every
/// active spline, evaluated at `n_grid` covariate values over all retained draws.
pub fn effect_curves(
    chains: &ChainSet,
    design: &ModelDesign,
    n_grid: usize,
) -> Result<Vec<EffectCurve>> {
    if design.structure != chains.structure {
        return Err(Error::ArtifactMismatch(
            "posterior draws were fitted with a different model structure".into(),
        ));
    }
    if n_grid < 2 {
        return Err(Error::InvalidArgument(
            "effect grid needs at least 2 points".into(),
        ));
    }
    let draws: Vec<_> = chains
        .chains
        .iter()
        .enumerate()
        .flat_map(|(c, ch)| (0..ch.draws.len()).map(move |i| (c, i)))
        .map(|(c, i)| chains.draw_params(c, i))
        .collect();
    if draws.is_empty() {
        return Err(Error::InvalidArgument(
            "posterior has no retained draws".into(),
        ));
    }
    let space = design.structure.space;
    let mut out = Vec::new();
    for slot in design.structure.spline_slots() {
        let basis = design
            .family(slot.family)
            .basis(slot.axis)
            .expect("active slot has a basis");
        let grid: Vec<f64> = match basis.kind() {
            SplineKind::CyclicCubic => (0..n_grid).map(|i| i as f64 / n_grid as f64).collect(),
            SplineKind::Cubic => (0..n_grid)
                .map(|i| i as f64 / (n_grid - 1) as f64)
                .collect(),
        };
        let rows: Vec<Vec<f64>> = grid.iter().map(|&x| basis.row(x)).collect();
        let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(draws.len()); n_grid];
        for p in &draws {
            let coefs = p.spline_coefs(&slot);
            for (g, row) in rows.iter().enumerate() {
                values[g].push(row.iter().zip(coefs).map(|(b, c)| b * c).sum());
            }
        }
        let (mut median, mut lower, mut upper) = (Vec::new(), Vec::new(), Vec::new());
        for mut v in values {
            v.sort_by(|a, b| a.total_cmp(b));
            lower.push(quantile(&v, 0.025));
            median.push(quantile(&v, 0.5));
            upper.push(quantile(&v, 0.975));
        }
        let axis = match slot.axis {
            SplineAxis::Seasonal => "seasonal",
            SplineAxis::Overall => "overall",
        };
        let name = match slot.group {
            None => format!("{}.{axis}", slot.family.label()),
            Some(0) => format!("{}.{axis}[dry]", slot.family.label()),
            Some(_) if space.n_wet() == 1 => format!("{}.{axis}[wet]", slot.family.label()),
            Some(g) => format!("{}.{axis}[wet{g}]", slot.family.label()),
        };
        out.push(EffectCurve {
            name,
            grid,
            median,
            lower,
            upper,
        });
    }
    Ok(out)
}
