//! Treatment-change labels and the explainable meta-classifier that
//! describes who was helped or harmed by a mitigation.
//!
//! A record's treatment label is `0` when the mitigated prediction equals
//! the ground truth, `+1` when it is favorable against an unfavorable truth,
//! and `-1` when it is unfavorable against a favorable truth.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::data::stratified_folds;
use crate::error::{Error, Result};
use crate::learners::{extract_rules, DecisionTree, RuleSet, TreeParams};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TreatmentLabels(pub Vec<i8>);

impl TreatmentLabels {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_i32(&self) -> Vec<i32> {
        self.0.iter().map(|&v| i32::from(v)).collect()
    }

    /// Recovers the mitigated labels from the ground truth.
    pub fn mitigated_from(&self, y: &[bool]) -> Vec<bool> {
        self.0
            .iter()
            .zip(y)
            .map(|(&t, &yi)| if t == 0 { yi } else { !yi })
            .collect()
    }

    /// Counts of (0, +1, -1).
    pub fn counts(&self) -> (usize, usize, usize) {
        self.0.iter().fold((0, 0, 0), |(a, p, n), &v| match v {
            0 => (a + 1, p, n),
            1 => (a, p + 1, n),
            _ => (a, p, n + 1),
        })
    }
}

/// Treatment labels over an arbitrary two-value label alphabet.
pub fn treatment_labels<L: PartialEq + Debug>(
    y: &[L],
    y_mitigated: &[L],
    favorable: &L,
    unfavorable: &L,
) -> Result<TreatmentLabels> {
    if y.len() != y_mitigated.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            got: y_mitigated.len(),
        });
    }
    let is_fav = |v: &L| -> Result<bool> {
        if v == favorable {
            Ok(true)
        } else if v == unfavorable {
            Ok(false)
        } else {
            Err(Error::LabelOutsideAlphabet(format!("{v:?}")))
        }
    };
    let mut out = Vec::with_capacity(y.len());
    for (a, b) in y.iter().zip(y_mitigated) {
        out.push(match (is_fav(a)?, is_fav(b)?) {
            (t, m) if t == m => 0,
            (false, true) => 1,
            _ => -1,
        });
    }
    Ok(TreatmentLabels(out))
}

/// Treatment labels for boolean (favorable = true) labels.
pub fn treatment_labels_bool(y: &[bool], y_mitigated: &[bool]) -> Result<TreatmentLabels> {
    treatment_labels(y, y_mitigated, &true, &false)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Internal cross-validation folds over the audited split.
    pub folds: usize,
    /// Keep the protected attribute among the meta-tree features.
    pub include_protected: bool,
}

impl Default for MetaParams {
    fn default() -> Self {
        Self {
            max_depth: 6,
            min_samples_leaf: 20,
            folds: 5,
            include_protected: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MetaFit {
    /// Tree fitted on the whole audited split (used for rules).
    pub tree: DecisionTree,
    /// Out-of-fold predictions from the internal cross-validation.
    pub cv_predictions: Vec<i32>,
    /// Only one treatment class was present.
    pub single_class: bool,
}

/// Fits the meta tree on treatment labels and produces out-of-fold
/// predictions by stratified cross-validation over the same records.
pub fn fit_meta(x: &Matrix, labels: &TreatmentLabels, params: &MetaParams, seed: u64) -> Result<MetaFit> {
    let y = labels.as_i32();
    if y.len() != x.rows() {
        return Err(Error::Dimension {
            expected: x.rows(),
            got: y.len(),
        });
    }
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        features_per_split: None,
        seed,
    };
    let tree = DecisionTree::fit(x, &y, tree_params)?;
    let mut distinct = y.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let single_class = distinct.len() < 2;
    let k = params.folds.min(x.rows());
    let cv_predictions = if single_class || k < 2 {
        vec![tree.predict_row(x.row(0)); x.rows()]
    } else {
        let folds = stratified_folds(&y, k, seed)?;
        let mut pred = vec![0; x.rows()];
        for (f, test) in folds.iter().enumerate() {
            let train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            let t = DecisionTree::fit_rows(x, &y, Some(train), tree_params)?;
            for &i in test {
                pred[i] = t.predict_row(x.row(i));
            }
        }
        pred
    };
    Ok(MetaFit {
        tree,
        cv_predictions,
        single_class,
    })
}

/// Cohort shares and meta-classifier quality on one audited split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub agree_ratio: f64,
    pub disagree_pos_ratio: f64,
    pub disagree_neg_ratio: f64,
    pub meta_accuracy: f64,
    /// `None` when the class is never predicted.
    pub agree_precision: Option<f64>,
    pub disagree_pos_precision: Option<f64>,
    pub disagree_neg_precision: Option<f64>,
}

/// Column headers of the cohort table, in order.
pub const COHORT_HEADERS: [&str; 8] = [
    "Fairness Model",
    "Agree Ratio",
    "Disagree(+) Ratio",
    "Disagree(-) Ratio",
    "Meta Clf Accuracy",
    "Agree Precision",
    "Disagree(+) Precision",
    "Disagree(-) Precision",
];

pub fn cohort_report(labels: &TreatmentLabels, predicted: &[i32]) -> Result<CohortReport> {
    let n = labels.len();
    if predicted.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: predicted.len(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty treatment labels".into()));
    }
    let (a, p, m) = labels.counts();
    let nf = n as f64;
    let mut correct = 0usize;
    let mut hits = [0usize; 3];
    let mut calls = [0usize; 3];
    let slot = |c: i32| match c {
        0 => Some(0),
        1 => Some(1),
        -1 => Some(2),
        _ => None,
    };
    for (&t, &c) in labels.0.iter().zip(predicted) {
        if let Some(s) = slot(c) {
            calls[s] += 1;
            if i32::from(t) == c {
                hits[s] += 1;
            }
        }
        correct += usize::from(i32::from(t) == c);
    }
    let prec = |s: usize| (calls[s] > 0).then(|| hits[s] as f64 / calls[s] as f64);
    Ok(CohortReport {
        agree_ratio: a as f64 / nf,
        disagree_pos_ratio: p as f64 / nf,
        disagree_neg_ratio: m as f64 / nf,
        meta_accuracy: correct as f64 / nf,
        agree_precision: prec(0),
        disagree_pos_precision: prec(1),
        disagree_neg_precision: prec(2),
    })
}

impl CohortReport {
    /// Values in table column order; undefined precisions become 0.
    pub fn row_values(&self) -> [f64; 7] {
        [
            self.agree_ratio,
            self.disagree_pos_ratio,
            self.disagree_neg_ratio,
            self.meta_accuracy,
            self.agree_precision.unwrap_or(0.0),
            self.disagree_pos_precision.unwrap_or(0.0),
            self.disagree_neg_precision.unwrap_or(0.0),
        ]
    }

    /// Single-run markdown row, e.g. `| ROC | 80.8% | ... |`.
    pub fn markdown_row(&self, model: &str) -> String {
        let cells: Vec<String> = self.row_values().iter().map(|v| format!("{:.1}%", 100.0 * v)).collect();
        format!("| {model} | {} |", cells.join(" | "))
    }
}

/// Rules of the meta tree's `-1` leaves, most supported first, with
/// precision measured on `(eval_x, labels)`.
pub fn explain_negative_cohort(
    tree: &DecisionTree,
    column_names: &[String],
    eval_x: &Matrix,
    labels: &TreatmentLabels,
) -> Result<RuleSet> {
    let mut rules = extract_rules(tree, column_names, eval_x, &labels.as_i32())?;
    rules.rules.retain(|r| r.class == -1);
    rules.rules.sort_by_key(|r| std::cmp::Reverse(r.support));
    if rules.rules.is_empty() {
        rules.note = Some("meta tree has no leaf predicting -1".into());
    }
    Ok(rules)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn direct_mapping() {
        let t = treatment_labels(&["F", "U", "F", "U"], &["F", "F", "U", "U"], &"F", &"U").unwrap();
        assert_eq!(t.0, vec![0, 1, -1, 0]);
        assert!(matches!(
            treatment_labels(&["F"], &["X"], &"F", &"U"),
            Err(Error::LabelOutsideAlphabet(_))
        ));
    }

    #[test]
    fn identity_and_flip() {
        let y = [true, false, false, true, false];
        let same = treatment_labels_bool(&y, &y).unwrap();
        assert!(same.0.iter().all(|&v| v == 0));
        let rep = cohort_report(&same, &[0; 5]).unwrap();
        assert_eq!(rep.agree_ratio, 1.0);
        let flip: Vec<bool> = y.iter().map(|v| !v).collect();
        let t = treatment_labels_bool(&y, &flip).unwrap();
        let (a, p, _) = t.counts();
        assert_eq!(a, 0);
        assert_eq!(p, 3);
        assert_eq!(t.mitigated_from(&y), flip);
    }

    #[test]
    fn hand_tally() {
        let t = TreatmentLabels(vec![0, 0, 1, -1]);
        let r = cohort_report(&t, &[0, 0, 0, 0]).unwrap();
        assert_eq!((r.agree_ratio, r.disagree_pos_ratio, r.disagree_neg_ratio), (0.5, 0.25, 0.25));
        assert_eq!(r.meta_accuracy, 0.5);
        assert_eq!(r.agree_precision, Some(0.5));
        assert_eq!((r.disagree_pos_precision, r.disagree_neg_precision), (None, None));
        assert_eq!(r.markdown_row("X"), "| X | 50.0% | 25.0% | 25.0% | 50.0% | 50.0% | 0.0% | 0.0% |");
    }

    #[test]
    fn all_zero_labels_give_single_leaf() {
        let x = Matrix::from_rows(&(0..30).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
        let t = TreatmentLabels(vec![0; 30]);
        let fit = fit_meta(&x, &t, &MetaParams::default(), 1).unwrap();
        assert!(fit.single_class);
        assert_eq!(fit.tree.n_leaves(), 1);
        assert_eq!(cohort_report(&t, &fit.cv_predictions).unwrap().meta_accuracy, 1.0);
        let rules = explain_negative_cohort(&fit.tree, &["v".to_string()], &x, &t).unwrap();
        assert!(rules.rules.is_empty() && rules.note.is_some());
    }

    #[test]
    fn planted_rule_is_recovered() {
        // -1 exactly when age <= 30 and group_b == 1.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let mut rows = Vec::new();
        let mut lab = Vec::new();
        for _ in 0..1000 {
            let age = rng.gen_range(18..70) as f64;
            let b = f64::from(u8::from(rng.gen_bool(0.5)));
            let noise: f64 = rng.gen();
            rows.push(vec![age, b, noise]);
            lab.push(if age <= 30.0 && b == 1.0 { -1 } else { 0 });
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let t = TreatmentLabels(lab);
        let fit = fit_meta(&x, &t, &MetaParams::default(), 3).unwrap();
        let names = vec!["age".to_string(), "group_b".to_string(), "noise".to_string()];
        let rules = explain_negative_cohort(&fit.tree, &names, &x, &t).unwrap();
        let top = &rules.rules[0];
        assert!(top.precision.unwrap() >= 0.95);
        let text = top.to_string();
        assert!(text.contains("age <= 30.50") && text.contains("group_b > 0.50"), "{text}");
        assert!(text.ends_with("; [class: -1]"));
        // precision recount
        let hits = (0..1000)
            .filter(|&i| top.matches(x.row(i)) && t.0[i] == -1)
            .count();
        let support = (0..1000).filter(|&i| top.matches(x.row(i))).count();
        assert_eq!(top.support, support);
        assert_eq!(top.precision.unwrap(), hits as f64 / support as f64);
    }
}
