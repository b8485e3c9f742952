//! Group fairness and accuracy metrics, and cross-fold aggregation.
//!
//! "Positive" always means the favorable label. Rates that cannot be
//! computed (a group without actual positives, or a privileged group that
//! never receives the favorable outcome) are reported as `None` rather than
//! being replaced by zero, and are excluded when aggregating.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn selection_rate(&self) -> f64 {
        (self.tp + self.fp) as f64 / self.total() as f64
    }

    pub fn tpr(&self) -> Option<f64> {
        let p = self.tp + self.fn_;
        (p > 0).then(|| self.tp as f64 / p as f64)
    }

    pub fn fpr(&self) -> Option<f64> {
        let n = self.fp + self.tn;
        (n > 0).then(|| self.fp as f64 / n as f64)
    }

    pub fn add(&mut self, y: bool, yhat: bool) {
        match (y, yhat) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupConfusion {
    pub privileged: Confusion,
    pub unprivileged: Confusion,
}

fn check_lengths(y: &[bool], yhat: &[bool], mask: &[bool]) -> Result<()> {
    if yhat.len() != y.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            got: yhat.len(),
        });
    }
    if mask.len() != y.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            got: mask.len(),
        });
    }
    Ok(())
}

/// Confusion counts per group; `mask[i]` marks privileged records.
pub fn group_confusion(y: &[bool], yhat: &[bool], mask: &[bool]) -> Result<GroupConfusion> {
    check_lengths(y, yhat, mask)?;
    let mut gc = GroupConfusion {
        privileged: Confusion::default(),
        unprivileged: Confusion::default(),
    };
    for ((&yi, &pi), &mi) in y.iter().zip(yhat).zip(mask) {
        if mi {
            gc.privileged.add(yi, pi);
        } else {
            gc.unprivileged.add(yi, pi);
        }
    }
    if gc.privileged.total() == 0 {
        return Err(Error::EmptyGroup("privileged"));
    }
    if gc.unprivileged.total() == 0 {
        return Err(Error::EmptyGroup("unprivileged"));
    }
    Ok(gc)
}

/// Accuracy plus the four group fairness metrics (unprivileged relative to
/// privileged). Ideal values: DI 1, the three differences 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub accuracy: f64,
    pub disparate_impact: Option<f64>,
    pub average_odds: Option<f64>,
    pub equal_opportunity: Option<f64>,
    pub statistical_parity: f64,
}

impl FairnessReport {
    pub fn from_confusion(gc: &GroupConfusion) -> Self {
        let (p, u) = (&gc.privileged, &gc.unprivileged);
        let sel_p = p.selection_rate();
        let sel_u = u.selection_rate();
        let correct = p.tp + p.tn + u.tp + u.tn;
        let total = p.total() + u.total();
        let eod = match (u.tpr(), p.tpr()) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        };
        let aod = match (eod, u.fpr(), p.fpr()) {
            (Some(e), Some(a), Some(b)) => Some(0.5 * ((a - b) + e)),
            _ => None,
        };
        FairnessReport {
            accuracy: correct as f64 / total as f64,
            disparate_impact: (sel_p > 0.0).then(|| sel_u / sel_p),
            average_odds: aod,
            equal_opportunity: eod,
            statistical_parity: sel_u - sel_p,
        }
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Accuracy => Some(self.accuracy),
            Metric::DisparateImpact => self.disparate_impact,
            Metric::AverageOdds => self.average_odds,
            Metric::EqualOpportunity => self.equal_opportunity,
            Metric::StatisticalParity => Some(self.statistical_parity),
        }
    }
}

pub fn fairness_report(y: &[bool], yhat: &[bool], mask: &[bool]) -> Result<FairnessReport> {
    group_confusion(y, yhat, mask).map(|gc| FairnessReport::from_confusion(&gc))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    DisparateImpact,
    AverageOdds,
    EqualOpportunity,
    StatisticalParity,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Accuracy,
        Metric::DisparateImpact,
        Metric::AverageOdds,
        Metric::EqualOpportunity,
        Metric::StatisticalParity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::DisparateImpact => "disparate_impact",
            Metric::AverageOdds => "average_odds",
            Metric::EqualOpportunity => "equal_opportunity",
            Metric::StatisticalParity => "statistical_parity",
        }
    }
}

/// Mean and sample standard deviation over the defined values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    /// `None` when `values` is empty. A single value has std 0.
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(MeanStd { mean, std, n })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub accuracy: MeanStd,
    pub disparate_impact: MeanStd,
    pub average_odds: MeanStd,
    pub equal_opportunity: MeanStd,
    pub statistical_parity: MeanStd,
}

impl AggregateReport {
    pub fn get(&self, metric: Metric) -> MeanStd {
        match metric {
            Metric::Accuracy => self.accuracy,
            Metric::DisparateImpact => self.disparate_impact,
            Metric::AverageOdds => self.average_odds,
            Metric::EqualOpportunity => self.equal_opportunity,
            Metric::StatisticalParity => self.statistical_parity,
        }
    }
}

/// Per-metric mean/std across reports, excluding undefined entries.
pub fn aggregate(reports: &[FairnessReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no reports to aggregate".into()));
    }
    let agg = |m: Metric| -> Result<MeanStd> {
        let vals: Vec<f64> = reports.iter().filter_map(|r| r.get(m)).collect();
        MeanStd::of(&vals)
            .ok_or_else(|| Error::InvalidArgument(format!("{} is undefined in every report", m.name())))
    };
    Ok(AggregateReport {
        accuracy: agg(Metric::Accuracy)?,
        disparate_impact: agg(Metric::DisparateImpact)?,
        average_odds: agg(Metric::AverageOdds)?,
        equal_opportunity: agg(Metric::EqualOpportunity)?,
        statistical_parity: agg(Metric::StatisticalParity)?,
    })
}
