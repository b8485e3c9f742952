//! Reject option classification: inside a band around the threshold,
//! unprivileged records get the favorable label and privileged records the
//! unfavorable one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{fairness_report, Confusion};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RocMetric {
    StatisticalParity,
    AverageOdds,
    EqualOpportunity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RocConfig {
    pub metric: RocMetric,
    pub bound: f64,
    pub thresholds: Vec<f64>,
    /// Margins `j / margin_steps * min(t, 1 - t)` for `j = 0..=margin_steps`.
    pub margin_steps: usize,
}

impl Default for RocConfig {
    fn default() -> Self {
        Self {
            metric: RocMetric::StatisticalParity,
            bound: 0.05,
            thresholds: (1..=99).map(|i| i as f64 / 100.0).collect(),
            margin_steps: 50,
        }
    }
}

impl RocConfig {
    /// Candidate `(t, m)` pairs in search order.
    pub fn grid(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &t in &self.thresholds {
            let span = t.min(1.0 - t);
            for j in 0..=self.margin_steps {
                out.push((t, j as f64 / self.margin_steps as f64 * span));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ROCParams {
    pub threshold: f64,
    pub margin: f64,
    pub metric: RocMetric,
    pub bound: f64,
    /// Metric value on the fit data at the chosen pair.
    pub fit_metric: f64,
    pub fit_balanced_accuracy: f64,
    /// False when no pair met the bound and the least unfair one was taken.
    pub constraint_met: bool,
}

pub fn roc_apply(threshold: f64, margin: f64, scores: &[f64], mask: &[bool]) -> Vec<bool> {
    scores
        .iter()
        .zip(mask)
        .map(|(&s, &privileged)| {
            if (s - threshold).abs() < margin {
                !privileged
            } else {
                s >= threshold
            }
        })
        .collect()
}

pub fn balanced_accuracy(y: &[bool], yhat: &[bool]) -> f64 {
    let mut c = Confusion::default();
    for (&t, &p) in y.iter().zip(yhat) {
        c.add(t, p);
    }
    0.5 * (c.tpr().unwrap_or(0.0) + 1.0 - c.fpr().unwrap_or(0.0))
}

fn metric_value(metric: RocMetric, y: &[bool], yhat: &[bool], mask: &[bool]) -> Result<f64> {
    let r = fairness_report(y, yhat, mask)?;
    Ok(match metric {
        RocMetric::StatisticalParity => r.statistical_parity,
        RocMetric::AverageOdds => r.average_odds.unwrap_or(f64::INFINITY),
        RocMetric::EqualOpportunity => r.equal_opportunity.unwrap_or(f64::INFINITY),
    })
}

/// Grid search for the pair with the best balanced accuracy among those
/// whose `|metric| <= bound`; without any such pair, the pair with the
/// smallest `|metric|`. Earlier grid entries win ties.
pub fn roc_fit(scores: &[f64], y: &[bool], mask: &[bool], config: &RocConfig) -> Result<ROCParams> {
    if scores.len() != y.len() || mask.len() != y.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            got: scores.len().min(mask.len()),
        });
    }
    if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(Error::InvalidArgument("scores must lie in [0, 1]".into()));
    }
    let grid = config.grid();
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty threshold grid".into()));
    }
    let evaluated: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&(t, m)| {
            let yhat = roc_apply(t, m, scores, mask);
            Ok((metric_value(config.metric, y, &yhat, mask)?, balanced_accuracy(y, &yhat)))
        })
        .collect::<Result<_>>()?;
    let mut best: Option<usize> = None;
    for (i, &(metric, bacc)) in evaluated.iter().enumerate() {
        if metric.abs() <= config.bound && best.is_none_or(|b| bacc > evaluated[b].1) {
            best = Some(i);
        }
    }
    let constraint_met = best.is_some();
    let chosen = best.unwrap_or_else(|| {
        let mut b = 0;
        for (i, &(metric, _)) in evaluated.iter().enumerate() {
            if metric.abs() < evaluated[b].0.abs() {
                b = i;
            }
        }
        b
    });
    let (threshold, margin) = grid[chosen];
    Ok(ROCParams {
        threshold,
        margin,
        metric: config.metric,
        bound: config.bound,
        fit_metric: evaluated[chosen].0,
        fit_balanced_accuracy: evaluated[chosen].1,
        constraint_met,
    })
}
