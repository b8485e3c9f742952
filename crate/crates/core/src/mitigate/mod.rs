//! Bias mitigation methods and the common interface the audit runs them
//! through.
//!
//! Pre-processing: [`dir`] (feature repair, followed by retraining the
//! biased-model architecture) and [`lfr`] (fair prototypes with their own
//! label head). In-processing: [`pr`]. Post-processing on the biased
//! model's scores: [`roc`], [`eo`], [`ceo`].
//!
//! Every method sees a whole fold through [`FoldContext`], so an
//! in-processing method that needs the full training split fits the same
//! [`Mitigator`] trait.

pub mod ceo;
pub mod dir;
pub mod eo;
mod features;
pub mod lfr;
pub mod pr;
pub mod roc;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::{encode, encode_excluding, Dataset};
use crate::error::{Error, Result};
use crate::learners::{Forest, ForestParams, OptReport};

pub use ceo::{ceo_apply, ceo_fit, CEOMix, CostConstraint};
pub use dir::{dir_fit, dir_transform, RepairMap};
pub use eo::{eo_apply, eo_fit, EOMix};
pub use features::FeatureMap;
pub use lfr::{lfr_apply, lfr_fit, LFRModel, LfrParams};
pub use pr::{pr_fit, pr_predict, prejudice_index, PRModel, PrParams};
pub use roc::{roc_apply, roc_fit, ROCParams, RocConfig, RocMetric};

/// Mitigated labels, with scores when the method produces them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub labels: Vec<bool>,
    pub scores: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lfr,
    Dir,
    Pr,
    Roc,
    Eo,
    Ceo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pre,
    In,
    Post,
}

impl Method {
    /// Table order.
    pub const ALL: [Method; 6] = [Method::Lfr, Method::Dir, Method::Pr, Method::Roc, Method::Eo, Method::Ceo];

    pub fn key(self) -> &'static str {
        match self {
            Method::Lfr => "lfr",
            Method::Dir => "dir",
            Method::Pr => "pr",
            Method::Roc => "roc",
            Method::Eo => "eo",
            Method::Ceo => "ceo",
        }
    }

    /// Display name used in tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::Lfr => "LFR",
            Method::Dir => "DIR",
            Method::Pr => "PR",
            Method::Roc => "ROC",
            Method::Eo => "EO",
            Method::Ceo => "CEO",
        }
    }

    pub fn stage(self) -> Stage {
        match self {
            Method::Lfr | Method::Dir => Stage::Pre,
            Method::Pr => Stage::In,
            Method::Roc | Method::Eo | Method::Ceo => Stage::Post,
        }
    }

    pub fn build(self, params: &MethodParams) -> Box<dyn Mitigator> {
        match self {
            Method::Lfr => Box::new(LfrMethod(params.lfr)),
            Method::Dir => Box::new(DirMethod(params.dir)),
            Method::Pr => Box::new(PrMethod(params.pr)),
            Method::Roc => Box::new(RocMethod(params.roc.clone())),
            Method::Eo => Box::new(EoMethod),
            Method::Ceo => Box::new(CeoMethod(params.ceo)),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.key().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown method `{s}` (expected one of lfr, dir, pr, roc, eo, ceo)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DirParams {
    pub lambda: f64,
    /// Leave the protected attribute out of the retrained model's inputs.
    pub drop_protected: bool,
}

impl Default for DirParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            drop_protected: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CeoParams {
    pub cost: CostConstraint,
    pub threshold: f64,
}

impl Default for CeoParams {
    fn default() -> Self {
        Self {
            cost: CostConstraint::Weighted,
            threshold: 0.5,
        }
    }
}

/// Hyperparameters for every method.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodParams {
    pub dir: DirParams,
    pub lfr: LfrParams,
    pub pr: PrParams,
    pub roc: RocConfig,
    pub ceo: CeoParams,
}

/// One fold as seen by a mitigation method.
pub struct FoldContext<'a> {
    pub train: &'a Dataset,
    pub test: &'a Dataset,
    /// Biased-model hyperparameters, reused when a method retrains.
    pub forest: ForestParams,
    /// Out-of-bag biased scores on the training rows.
    pub train_scores: &'a [f64],
    /// Biased scores and labels (y') on the test rows.
    pub test_scores: &'a [f64],
    pub test_labels: &'a [bool],
    /// Seed reserved for this (fold, method).
    pub seed: u64,
}

/// Output of one method on one fold.
#[derive(Clone, Debug, PartialEq)]
pub struct Mitigated {
    pub predictions: PredictionSet,
    /// Fitted parameters, kept for the audit record.
    pub fitted: Value,
    pub notes: Vec<String>,
}

pub trait Mitigator: Send + Sync {
    fn method(&self) -> Method;
    fn mitigate(&self, ctx: &FoldContext<'_>) -> Result<Mitigated>;
}

fn report_summary(r: &OptReport) -> Value {
    json!({
        "iterations": r.iterations,
        "converged": r.converged,
        "initial": r.initial,
        "last": r.last,
    })
}

struct DirMethod(DirParams);

impl Mitigator for DirMethod {
    fn method(&self) -> Method {
        Method::Dir
    }

    fn mitigate(&self, ctx: &FoldContext<'_>) -> Result<Mitigated> {
        let map = dir_fit(ctx.train, self.0.lambda)?;
        let train = dir_transform(&map, ctx.train)?;
        let test = dir_transform(&map, ctx.test)?;
        let protected = ctx.train.schema().protected.attribute.clone();
        let (xtr, xte) = if self.0.drop_protected {
            (
                encode_excluding(&train, &[protected.as_str()]).x,
                encode_excluding(&test, &[protected.as_str()]).x,
            )
        } else {
            (encode(&train).x, encode(&test).x)
        };
        let forest = Forest::fit(&xtr, train.labels(), ctx.forest)?;
        let (labels, scores) = forest.predict(&xte)?;
        Ok(Mitigated {
            predictions: PredictionSet {
                labels,
                scores: Some(scores),
            },
            fitted: serde_json::to_value(&map)?,
            notes: Vec::new(),
        })
    }
}

struct LfrMethod(LfrParams);

impl Mitigator for LfrMethod {
    fn method(&self) -> Method {
        Method::Lfr
    }

    fn mitigate(&self, ctx: &FoldContext<'_>) -> Result<Mitigated> {
        let model = lfr_fit(ctx.train, &self.0, ctx.seed)?;
        let predictions = lfr_apply(&model, ctx.test, self.0.threshold)?;
        let mut notes = Vec::new();
        if model.report.iterations == 0 {
            notes.push("optimizer made no descent step".to_string());
        }
        Ok(Mitigated {
            predictions,
            fitted: json!({
                "w": model.w,
                "prototypes": model.prototypes,
                "optimizer": report_summary(&model.report),
            }),
            notes,
        })
    }
}

struct PrMethod(PrParams);

impl Mitigator for PrMethod {
    fn method(&self) -> Method {
        Method::Pr
    }

    fn mitigate(&self, ctx: &FoldContext<'_>) -> Result<Mitigated> {
        let model = pr_fit(ctx.train, &self.0)?;
        let predictions = pr_predict(&model, ctx.test)?;
        let mut notes = Vec::new();
        if !model.report.converged {
            notes.push("optimizer budget exhausted before convergence".to_string());
        }
        Ok(Mitigated {
            predictions,
            fitted: json!({
                "privileged": model.privileged,
                "unprivileged": model.unprivileged,
                "optimizer": report_summary(&model.report),
            }),
            notes,
        })
    }
}

struct RocMethod(RocConfig);

impl Mitigator for RocMethod {
    fn method(&self) -> Method {
        Method::Roc
    }

    fn mitigate(&self, ctx: &FoldContext<'_>) -> Result<Mitigated> {
        let train_mask = ctx.train.group_mask()?;
        let params = roc_fit(ctx.train_scores, ctx.train.labels(), &train_mask, &self.0)?;
        let labels = roc_apply(params.threshold, params.margin, ctx.test_scores, &ctx.test.group_mask()?);
        let mut notes = Vec::new();
        if !params.constraint_met {
            notes.push("no grid pair met the fairness bound; least unfair pair used".to_string());
        }
        Ok(Mitigated {
            predictions: PredictionSet {
                labels,
                scores: Some(ctx.test_scores.to_vec()),
            },
            fitted: serde_json::to_value(&params)?,
            notes,
        })
    }
}

struct EoMethod;

impl Mitigator for EoMethod {
    fn method(&self) -> Method {
        Method::Eo
    }

    fn mitigate(&self, ctx: &FoldContext<'_>) -> Result<Mitigated> {
        let base: Vec<bool> = ctx.train_scores.iter().map(|&s| s > 0.5).collect();
        let mix = eo_fit(&base, ctx.train.labels(), &ctx.train.group_mask()?)?;
        let labels = eo_apply(&mix, ctx.test_labels, &ctx.test.group_mask()?, ctx.seed);
        let notes = mix
            .relaxed
            .iter()
            .map(|c| format!("{c} constraint relaxed (empty cell)"))
            .collect();
        Ok(Mitigated {
            predictions: PredictionSet { labels, scores: None },
            fitted: serde_json::to_value(&mix)?,
            notes,
        })
    }
}

struct CeoMethod(CeoParams);

impl Mitigator for CeoMethod {
    fn method(&self) -> Method {
        Method::Ceo
    }

    fn mitigate(&self, ctx: &FoldContext<'_>) -> Result<Mitigated> {
        let mix = ceo_fit(ctx.train_scores, ctx.train.labels(), &ctx.train.group_mask()?, self.0.cost)?;
        let (labels, scores) = ceo_apply(
            &mix,
            ctx.test_scores,
            &ctx.test.group_mask()?,
            ctx.seed,
            self.0.threshold,
        );
        let mut notes = vec!["forest vote fractions used as calibrated scores".to_string()];
        if let Some(f) = &mix.flag {
            notes.push(f.clone());
        }
        Ok(Mitigated {
            predictions: PredictionSet {
                labels,
                scores: Some(scores),
            },
            fitted: serde_json::to_value(&mix)?,
            notes,
        })
    }
}
