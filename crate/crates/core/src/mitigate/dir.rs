//! Rank-preserving repair of numeric features toward a cross-group median
//! distribution.

use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnKind, Dataset};
use crate::error::{Error, Result};

/// Number of evenly spaced quantile levels, `0, 0.01, ..., 1`.
pub const GRID_POINTS: usize = 101;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRepair {
    pub column: String,
    /// Quantile function of the privileged group on the grid.
    pub privileged: Vec<f64>,
    pub unprivileged: Vec<f64>,
    /// Pointwise median of the group quantile functions.
    pub target: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepairMap {
    pub lambda: f64,
    pub protected: String,
    pub features: Vec<FeatureRepair>,
}

/// Quantiles of `values` on the grid, linearly interpolated between order
/// statistics at position `u * (n - 1)`.
pub(crate) fn quantile_grid(values: &mut [f64]) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    (0..GRID_POINTS)
        .map(|k| {
            let pos = k as f64 / (GRID_POINTS - 1) as f64 * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let f = pos - lo as f64;
            values[lo] + f * (values[hi] - values[lo])
        })
        .collect()
}

/// Value of a grid quantile function at level `u`.
pub(crate) fn grid_value(grid: &[f64], u: f64) -> f64 {
    let pos = u.clamp(0.0, 1.0) * (grid.len() - 1) as f64;
    let lo = (pos.floor() as usize).min(grid.len() - 1);
    let hi = (lo + 1).min(grid.len() - 1);
    grid[lo] + (pos - lo as f64) * (grid[hi] - grid[lo])
}

/// Level at which a grid quantile function reaches `x`. Values outside the
/// range map to 0 or 1; a flat stretch equal to `x` maps to its midpoint.
pub(crate) fn grid_level(grid: &[f64], x: f64) -> f64 {
    let last = (grid.len() - 1) as f64;
    let lo = grid.partition_point(|&g| g < x);
    let above = grid.partition_point(|&g| g <= x);
    if above == 0 {
        return 0.0;
    }
    if lo == grid.len() {
        return 1.0;
    }
    let hi = above - 1;
    if lo <= hi {
        return (lo + hi) as f64 / 2.0 / last;
    }
    // grid[hi] < x < grid[lo], hi = lo - 1
    let f = (x - grid[hi]) / (grid[lo] - grid[hi]);
    (hi as f64 + f) / last
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Learns per-group quantile functions for every numeric feature other than
/// the protected attribute.
pub fn dir_fit(train: &Dataset, lambda: f64) -> Result<RepairMap> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("repair level must lie in [0, 1], got {lambda}")));
    }
    let mask = train.group_mask()?;
    let n_priv = mask.iter().filter(|&&m| m).count();
    for (name, count) in [("privileged", n_priv), ("unprivileged", mask.len() - n_priv)] {
        if count == 0 {
            return Err(Error::EmptyGroup(name));
        }
        if count < 2 {
            return Err(Error::InvalidArgument(format!("the {name} group needs at least 2 records")));
        }
    }
    let schema = train.schema();
    let protected = schema.protected.attribute.clone();
    let mut features = Vec::new();
    for (spec, col) in schema.columns.iter().zip(train.columns()) {
        let Column::Numeric(values) = col else { continue };
        if spec.name == protected {
            continue;
        }
        let mut p: Vec<f64> = values.iter().zip(&mask).filter(|(_, &m)| m).map(|(v, _)| *v).collect();
        let mut u: Vec<f64> = values.iter().zip(&mask).filter(|(_, &m)| !m).map(|(v, _)| *v).collect();
        let privileged = quantile_grid(&mut p);
        let unprivileged = quantile_grid(&mut u);
        let target = privileged
            .iter()
            .zip(&unprivileged)
            .map(|(&a, &b)| median(&mut [a, b]))
            .collect();
        features.push(FeatureRepair {
            column: spec.name.clone(),
            privileged,
            unprivileged,
            target,
        });
    }
    if features.is_empty() {
        return Err(Error::InvalidArgument("no numeric feature to repair".into()));
    }
    Ok(RepairMap {
        lambda,
        protected,
        features,
    })
}

impl RepairMap {
    /// Same map at another repair level.
    pub fn with_lambda(&self, lambda: f64) -> Result<RepairMap> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidArgument(format!("repair level must lie in [0, 1], got {lambda}")));
        }
        Ok(RepairMap {
            lambda,
            ..self.clone()
        })
    }

    pub fn repair_value(&self, feature: &FeatureRepair, x: f64, privileged: bool) -> f64 {
        let grid = if privileged {
            &feature.privileged
        } else {
            &feature.unprivileged
        };
        let repaired = grid_value(&feature.target, grid_level(grid, x));
        (1.0 - self.lambda) * x + self.lambda * repaired
    }
}

/// Applies the repair; categorical columns, labels and the protected
/// attribute pass through unchanged.
pub fn dir_transform(map: &RepairMap, ds: &Dataset) -> Result<Dataset> {
    let mask = ds.group_mask()?;
    let mut out = ds.clone();
    for feature in &map.features {
        let j = ds
            .schema()
            .column_index(&feature.column)
            .ok_or_else(|| Error::MissingColumn(feature.column.clone()))?;
        if ds.schema().columns[j].kind != ColumnKind::Numeric {
            return Err(Error::Schema(format!("column `{}` is not numeric", feature.column)));
        }
        let Column::Numeric(values) = &ds.columns()[j] else {
            unreachable!("numeric spec with numeric storage")
        };
        let repaired = values
            .iter()
            .zip(&mask)
            .map(|(&x, &m)| map.repair_value(feature, x, m))
            .collect();
        out = out.with_numeric(j, repaired)?;
    }
    Ok(out)
}
