//! End-to-end audit: k-fold biased baseline, bias scan, every configured
//! mitigation method, and the treatment-change meta analysis per fold.

mod config;
mod render;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use config::{AuditConfig, DatasetConfig, SYNTH_NAME};
pub use render::{cell_metric, cell_percent, render, write_outputs, Format, TABLE1_HEADERS};

use crate::data::{encode, encode_excluding, kfold, Dataset, EncodedMatrix, ProtectedSpec};
use crate::error::{Error, Result};
use crate::learners::{Forest, ForestParams, RuleSet};
use crate::meta::{cohort_report, explain_negative_cohort, fit_meta, treatment_labels_bool, CohortReport};
use crate::metrics::{aggregate, fairness_report, AggregateReport, FairnessReport, MeanStd};
use crate::mitigate::{FoldContext, Method, Mitigated};
use crate::scan::{scan, ScanOptions, ScanResult};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub n: usize,
    pub n_privileged: usize,
    pub favorable_rate: f64,
    pub protected: ProtectedSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSeeds {
    pub forest: u64,
    pub scan: u64,
    /// Keyed by method name.
    pub methods: BTreeMap<String, u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub crate_version: String,
    /// Hex SHA-256 of the compact JSON of `config`.
    pub config_sha256: String,
    /// The configuration without its output directory.
    pub config: AuditConfig,
    pub split_seed: u64,
    pub fold_seeds: Vec<FoldSeeds>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub folds: Vec<FairnessReport>,
    pub aggregate: Option<AggregateReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldScan {
    pub fold: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<ScanResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One method on one fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodFold {
    pub fold: usize,
    pub fairness: FairnessReport,
    pub cohort: CohortReport,
    /// Treatment label counts (0, +1, -1).
    pub treatment_counts: [usize; 3],
    /// Records whose mitigated label differs from the biased label.
    pub changed_vs_biased: usize,
    pub meta_single_class: bool,
    pub rules: RuleSet,
    pub fitted: Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldFailure {
    pub fold: usize,
    pub error: String,
}

/// Mean/std of each cohort-table column across folds (undefined
/// precisions count as 0).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortAggregate {
    pub agree_ratio: MeanStd,
    pub disagree_pos_ratio: MeanStd,
    pub disagree_neg_ratio: MeanStd,
    pub meta_accuracy: MeanStd,
    pub agree_precision: MeanStd,
    pub disagree_pos_precision: MeanStd,
    pub disagree_neg_precision: MeanStd,
}

impl CohortAggregate {
    pub fn of(reports: &[CohortReport]) -> Option<Self> {
        let col = |c: usize| MeanStd::of(&reports.iter().map(|r| r.row_values()[c]).collect::<Vec<_>>());
        Some(Self {
            agree_ratio: col(0)?,
            disagree_pos_ratio: col(1)?,
            disagree_neg_ratio: col(2)?,
            meta_accuracy: col(3)?,
            agree_precision: col(4)?,
            disagree_pos_precision: col(5)?,
            disagree_neg_precision: col(6)?,
        })
    }

    pub fn columns(&self) -> [MeanStd; 7] {
        [
            self.agree_ratio,
            self.disagree_pos_ratio,
            self.disagree_neg_ratio,
            self.meta_accuracy,
            self.agree_precision,
            self.disagree_pos_precision,
            self.disagree_neg_precision,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub folds: Vec<MethodFold>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<FoldFailure>,
    /// Present only when every fold succeeded.
    pub aggregate: Option<AggregateReport>,
    pub cohort: Option<CohortAggregate>,
}

impl MethodResult {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditBundle {
    pub dataset: DatasetSummary,
    pub k: usize,
    pub biased: Baseline,
    pub scans: Vec<FoldScan>,
    /// In configured order.
    pub methods: Vec<MethodResult>,
    pub provenance: Provenance,
}

impl AuditBundle {
    pub fn method(&self, m: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn fold_seeds(cfg: &AuditConfig, fold: usize) -> FoldSeeds {
    let f = [fold as u64];
    FoldSeeds {
        forest: seed::derive_str(cfg.seed, &f, "forest"),
        scan: seed::derive_str(cfg.seed, &f, "scan"),
        methods: cfg
            .methods
            .iter()
            .map(|m| (m.key().to_string(), seed::derive_str(cfg.seed, &f, m.key())))
            .collect(),
    }
}

struct FoldRun {
    biased: FairnessReport,
    scan: FoldScan,
    methods: Vec<Result<MethodFold>>,
}

/// Loads the configured dataset and audits it.
pub fn run_audit(cfg: &AuditConfig) -> Result<AuditBundle> {
    cfg.validate()?;
    let ds = cfg.dataset.load(cfg.seed)?;
    run_audit_on(cfg, &ds)
}

/// Audits an already loaded dataset. Folds and methods run in parallel;
/// every random stream is derived from `(cfg.seed, fold, task)`, so the
/// bundle does not depend on scheduling.
pub fn run_audit_on(cfg: &AuditConfig, ds: &Dataset) -> Result<AuditBundle> {
    cfg.validate()?;
    let mask = ds.group_mask()?;
    let split_seed = seed::derive_str(cfg.seed, &[], "kfold");
    let plan = kfold(ds, cfg.k, split_seed)?;
    let seeds: Vec<FoldSeeds> = (0..cfg.k).map(|f| fold_seeds(cfg, f)).collect();

    let runs: Vec<FoldRun> = (0..cfg.k)
        .into_par_iter()
        .map(|f| {
            let (tr, te) = plan.train_test(f);
            run_fold(cfg, ds, f, &tr, &te, &seeds[f])
        })
        .collect::<Result<_>>()?;

    let biased_folds: Vec<FairnessReport> = runs.iter().map(|r| r.biased).collect();
    let mut per_method: Vec<MethodResult> = cfg
        .methods
        .iter()
        .map(|&m| MethodResult {
            method: m,
            folds: Vec::new(),
            failures: Vec::new(),
            aggregate: None,
            cohort: None,
        })
        .collect();
    let mut scans = Vec::with_capacity(cfg.k);
    for (f, run) in runs.into_iter().enumerate() {
        scans.push(run.scan);
        for (slot, outcome) in per_method.iter_mut().zip(run.methods) {
            match outcome {
                Ok(mf) => slot.folds.push(mf),
                Err(e) => slot.failures.push(FoldFailure {
                    fold: f,
                    error: e.to_string(),
                }),
            }
        }
    }
    for r in per_method.iter_mut() {
        if r.succeeded() {
            let reports: Vec<FairnessReport> = r.folds.iter().map(|m| m.fairness).collect();
            r.aggregate = aggregate(&reports).ok();
            r.cohort = CohortAggregate::of(&r.folds.iter().map(|m| m.cohort).collect::<Vec<_>>());
        }
    }
    if per_method.iter().all(|r| !r.succeeded()) {
        let msg = per_method
            .iter()
            .map(|r| format!("{}: {}", r.method, r.failures[0].error))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::AllMethodsFailed(msg));
    }

    // Where results are written is not an input to them.
    let recorded = AuditConfig {
        out: None,
        ..cfg.clone()
    };
    let n_privileged = mask.iter().filter(|&&m| m).count();
    let n_fav = ds.labels().iter().filter(|&&v| v).count();
    Ok(AuditBundle {
        dataset: DatasetSummary {
            name: cfg.dataset.name.clone(),
            n: ds.n(),
            n_privileged,
            favorable_rate: n_fav as f64 / ds.n() as f64,
            protected: ds.schema().protected.clone(),
        },
        k: cfg.k,
        biased: Baseline {
            aggregate: aggregate(&biased_folds).ok(),
            folds: biased_folds,
        },
        scans,
        methods: per_method,
        provenance: Provenance {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: recorded.hash(),
            config: recorded,
            split_seed,
            fold_seeds: seeds,
        },
    })
}

/// Biased model on one fold: trained on the train part, applied to test.
struct BiasedFold {
    train: Dataset,
    test: Dataset,
    test_mask: Vec<bool>,
    test_x: EncodedMatrix,
    forest: ForestParams,
    train_scores: Vec<f64>,
    test_scores: Vec<f64>,
    test_labels: Vec<bool>,
    report: FairnessReport,
}

fn biased_fold(cfg: &AuditConfig, ds: &Dataset, train_idx: &[usize], test_idx: &[usize], seeds: &FoldSeeds) -> Result<BiasedFold> {
    let train = ds.subset(train_idx);
    let test = ds.subset(test_idx);
    let test_mask = test.group_mask()?;
    let forest = ForestParams {
        seed: seeds.forest,
        ..cfg.forest
    };
    let fit = Forest::fit_with_oob(&encode(&train).x, train.labels(), forest)?;
    let test_x = encode(&test);
    let (test_labels, test_scores) = fit.forest.predict(&test_x.x)?;
    let report = fairness_report(test.labels(), &test_labels, &test_mask)?;
    Ok(BiasedFold {
        train,
        test,
        test_mask,
        test_x,
        forest,
        train_scores: fit.oob_scores,
        test_scores,
        test_labels,
        report,
    })
}

fn scan_fold(cfg: &AuditConfig, b: &BiasedFold, fold: usize, seeds: &FoldSeeds) -> FoldScan {
    let opts = ScanOptions {
        seed: seeds.scan,
        ..cfg.scan.clone()
    };
    match scan(&b.test, b.test.labels(), &b.test_scores, &opts) {
        Ok(r) => FoldScan {
            fold,
            result: Some(r),
            error: None,
        },
        Err(e) => FoldScan {
            fold,
            result: None,
            error: Some(e.to_string()),
        },
    }
}

/// Only the biased baseline and bias scan of every fold.
pub fn run_scan(cfg: &AuditConfig) -> Result<Vec<FoldScan>> {
    let ds = cfg.dataset.load(cfg.seed)?;
    let plan = kfold(&ds, cfg.k, seed::derive_str(cfg.seed, &[], "kfold"))?;
    (0..cfg.k)
        .into_par_iter()
        .map(|f| {
            let seeds = fold_seeds(cfg, f);
            let (tr, te) = plan.train_test(f);
            let b = biased_fold(cfg, &ds, &tr, &te, &seeds)?;
            Ok(scan_fold(cfg, &b, f, &seeds))
        })
        .collect()
}

fn run_fold(
    cfg: &AuditConfig,
    ds: &Dataset,
    fold: usize,
    train_idx: &[usize],
    test_idx: &[usize],
    seeds: &FoldSeeds,
) -> Result<FoldRun> {
    let b = biased_fold(cfg, ds, train_idx, test_idx, seeds)?;
    let scan_outcome = scan_fold(cfg, &b, fold, seeds);
    let excluded;
    let meta_x = if cfg.meta.include_protected {
        &b.test_x
    } else {
        excluded = encode_excluding(&b.test, &[b.test.schema().protected.attribute.as_str()]);
        &excluded
    };
    let ctx = FoldContext {
        train: &b.train,
        test: &b.test,
        forest: b.forest,
        train_scores: &b.train_scores,
        test_scores: &b.test_scores,
        test_labels: &b.test_labels,
        seed: 0,
    };
    let methods = cfg
        .methods
        .par_iter()
        .map(|&m| {
            let ctx = FoldContext {
                seed: seeds.methods[m.key()],
                ..ctx
            };
            let mitigated = m.build(&cfg.params).mitigate(&ctx)?;
            meta_audit(cfg, fold, &ctx, &b.test_mask, meta_x, mitigated)
        })
        .collect();
    Ok(FoldRun {
        biased: b.report,
        scan: scan_outcome,
        methods,
    })
}

fn meta_audit(
    cfg: &AuditConfig,
    fold: usize,
    ctx: &FoldContext<'_>,
    test_mask: &[bool],
    meta_x: &EncodedMatrix,
    mitigated: Mitigated,
) -> Result<MethodFold> {
    let y = ctx.test.labels();
    let y2 = &mitigated.predictions.labels;
    let fairness = fairness_report(y, y2, test_mask)?;
    let labels = treatment_labels_bool(y, y2)?;
    let meta_seed = seed::derive_str(ctx.seed, &[], "meta");
    let meta = fit_meta(&meta_x.x, &labels, &cfg.meta, meta_seed)?;
    let cohort = cohort_report(&labels, &meta.cv_predictions)?;
    let rules = explain_negative_cohort(&meta.tree, &meta_x.column_names, &meta_x.x, &labels)?;
    let (a, p, n) = labels.counts();
    let changed = y2.iter().zip(ctx.test_labels).filter(|(a, b)| a != b).count();
    let mut notes = mitigated.notes;
    if meta.single_class {
        notes.push("treatment labels have a single class; meta tree is one leaf".into());
    }
    Ok(MethodFold {
        fold,
        fairness,
        cohort,
        treatment_counts: [a, p, n],
        changed_vs_biased: changed,
        meta_single_class: meta.single_class,
        rules,
        fitted: mitigated.fitted,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(methods: Vec<Method>) -> AuditConfig {
        let mut cfg = AuditConfig::new(DatasetConfig::synth(600, 0.3), methods, 11);
        cfg.k = 3;
        cfg.forest.n_trees = 15;
        cfg.forest.max_depth = 8;
        cfg.params.lfr.max_iters = 150;
        cfg.params.pr.max_iters = 150;
        cfg.scan.restarts = 4;
        cfg
    }

    #[test]
    fn every_method_completes_and_round_trips() {
        let b = run_audit(&small(Method::ALL.to_vec())).unwrap();
        assert_eq!(b.methods.len(), 6);
        for m in &b.methods {
            assert!(m.succeeded(), "{:?}: {:?}", m.method, m.failures);
            assert_eq!(m.folds.len(), 3);
            assert_eq!(m.aggregate.unwrap().accuracy.n, 3);
            for f in &m.folds {
                let c = f.cohort;
                assert!((c.agree_ratio + c.disagree_pos_ratio + c.disagree_neg_ratio - 1.0).abs() < 1e-9);
            }
        }
        let text = b.to_json();
        assert_eq!(AuditBundle::from_json(&text).unwrap(), b);
        assert_eq!(b.provenance.fold_seeds.len(), 3);
    }

    #[test]
    fn identity_repair_reproduces_biased_labels() {
        let mut cfg = small(vec![Method::Dir]);
        cfg.params.dir.lambda = 0.0;
        cfg.params.dir.drop_protected = false;
        let b = run_audit(&cfg).unwrap();
        for f in &b.methods[0].folds {
            assert_eq!(f.changed_vs_biased, 0);
            assert_eq!(f.fairness, b.biased.folds[f.fold]);
        }
    }

    #[test]
    fn removing_a_method_leaves_others_unchanged() {
        let both = run_audit(&small(vec![Method::Roc, Method::Eo])).unwrap();
        let one = run_audit(&small(vec![Method::Eo])).unwrap();
        assert_eq!(both.method(Method::Eo).unwrap().folds, one.methods[0].folds);
        assert_eq!(both.biased, one.biased);
    }
}
