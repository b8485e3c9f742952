//! Calibrated equalized odds: the group with the lower generalized cost
//! mixes toward its base-rate predictor until the costs match.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostConstraint {
    Fnr,
    Fpr,
    #[default]
    Weighted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CEOMix {
    pub cost: CostConstraint,
    pub alpha_unprivileged: f64,
    pub alpha_privileged: f64,
    pub base_rate_unprivileged: f64,
    pub base_rate_privileged: f64,
    /// Generalized cost per group on the fit data, before mixing.
    pub cost_unprivileged: f64,
    pub cost_privileged: f64,
    /// Set when the mixing rate hit a guard (equal trivial cost, clamping).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

impl CEOMix {
    pub fn alpha(&self, privileged: bool) -> f64 {
        if privileged {
            self.alpha_privileged
        } else {
            self.alpha_unprivileged
        }
    }

    pub fn base_rate(&self, privileged: bool) -> f64 {
        if privileged {
            self.base_rate_privileged
        } else {
            self.base_rate_unprivileged
        }
    }
}

struct GroupStats {
    fnr: f64,
    fpr: f64,
    base_rate: f64,
}

fn group_stats(scores: &[f64], y: &[bool], mask: &[bool], group: bool) -> Result<GroupStats> {
    let (mut pos, mut neg, mut miss, mut false_alarm) = (0.0, 0.0, 0.0, 0.0);
    for ((&s, &t), &m) in scores.iter().zip(y).zip(mask) {
        if m != group {
            continue;
        }
        if t {
            pos += 1.0;
            miss += 1.0 - s;
        } else {
            neg += 1.0;
            false_alarm += s;
        }
    }
    let name = if group { "privileged" } else { "unprivileged" };
    if pos + neg == 0.0 {
        return Err(Error::EmptyGroup(name));
    }
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::InvalidArgument(format!("the {name} group needs both label values")));
    }
    Ok(GroupStats {
        fnr: miss / pos,
        fpr: false_alarm / neg,
        base_rate: pos / (pos + neg),
    })
}

pub fn generalized_cost(cost: CostConstraint, fnr: f64, fpr: f64) -> f64 {
    match cost {
        CostConstraint::Fnr => fnr,
        CostConstraint::Fpr => fpr,
        CostConstraint::Weighted => 0.5 * (fnr + fpr),
    }
}

/// Cost of the predictor that scores every record at the group base rate.
pub fn trivial_cost(cost: CostConstraint, base_rate: f64) -> f64 {
    generalized_cost(cost, 1.0 - base_rate, base_rate)
}

/// Mixing rate `(high - low) / (trivial_low - low)`, clamped to `[0, 1]`.
pub fn mixing_rate(low: f64, high: f64, trivial_low: f64) -> (f64, Option<String>) {
    if high == low {
        return (0.0, None);
    }
    let denom = trivial_low - low;
    if denom == 0.0 {
        return (0.0, Some("trivial cost equals the lower group cost".into()));
    }
    let a = (high - low) / denom;
    if (0.0..=1.0).contains(&a) {
        (a, None)
    } else {
        (a.clamp(0.0, 1.0), Some(format!("mixing rate {a} clamped to [0, 1]")))
    }
}

pub fn ceo_fit(scores: &[f64], y: &[bool], mask: &[bool], cost: CostConstraint) -> Result<CEOMix> {
    if scores.len() != y.len() || mask.len() != y.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            got: scores.len().min(mask.len()),
        });
    }
    let u = group_stats(scores, y, mask, false)?;
    let p = group_stats(scores, y, mask, true)?;
    let cu = generalized_cost(cost, u.fnr, u.fpr);
    let cp = generalized_cost(cost, p.fnr, p.fpr);
    let (mut au, mut ap, mut flag) = (0.0, 0.0, None);
    if cu < cp {
        (au, flag) = mixing_rate(cu, cp, trivial_cost(cost, u.base_rate));
    } else if cp < cu {
        (ap, flag) = mixing_rate(cp, cu, trivial_cost(cost, p.base_rate));
    }
    Ok(CEOMix {
        cost,
        alpha_unprivileged: au,
        alpha_privileged: ap,
        base_rate_unprivileged: u.base_rate,
        base_rate_privileged: p.base_rate,
        cost_unprivileged: cu,
        cost_privileged: cp,
        flag,
    })
}

/// Expected post-mix costs `(unprivileged, privileged)` on fit data.
pub fn ceo_expected_costs(mix: &CEOMix) -> (f64, f64) {
    let mixed = |a: f64, c: f64, b: f64| (1.0 - a) * c + a * trivial_cost(mix.cost, b);
    (
        mixed(mix.alpha_unprivileged, mix.cost_unprivileged, mix.base_rate_unprivileged),
        mixed(mix.alpha_privileged, mix.cost_privileged, mix.base_rate_privileged),
    )
}

/// Replaces each mixing-group score by the group base rate with probability
/// alpha (one draw per record, in order); labels are `score > threshold`.
pub fn ceo_apply(mix: &CEOMix, scores: &[f64], mask: &[bool], seed: u64, threshold: f64) -> (Vec<bool>, Vec<f64>) {
    let mut rng = seed::rng(seed);
    let mixed: Vec<f64> = scores
        .iter()
        .zip(mask)
        .map(|(&s, &m)| {
            let draw: f64 = rng.gen();
            if draw < mix.alpha(m) {
                mix.base_rate(m)
            } else {
                s
            }
        })
        .collect();
    (mixed.iter().map(|&s| s > threshold).collect(), mixed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_arithmetic() {
        let (a, flag) = mixing_rate(0.1, 0.3, 0.5);
        assert!((a - 0.5).abs() < 1e-15);
        assert!(flag.is_none());
        assert_eq!(mixing_rate(0.2, 0.2, 0.5), (0.0, None));
        assert!(mixing_rate(0.2, 0.3, 0.2).1.is_some());
    }

    #[test]
    fn equal_costs_mean_no_mixing() {
        let scores = [0.8, 0.3, 0.8, 0.3];
        let y = [true, false, true, false];
        let mask = [true, true, false, false];
        let mix = ceo_fit(&scores, &y, &mask, CostConstraint::Weighted).unwrap();
        assert_eq!((mix.alpha_unprivileged, mix.alpha_privileged), (0.0, 0.0));
        let (labels, s) = ceo_apply(&mix, &scores, &mask, 1, 0.5);
        assert_eq!(s, scores.to_vec());
        assert_eq!(labels, vec![true, false, true, false]);
    }

    #[test]
    fn post_mix_costs_match() {
        let scores = [0.9, 0.8, 0.1, 0.2, 0.6, 0.5, 0.4, 0.45];
        let y = [true, true, false, false, true, true, false, false];
        let mask = [true, true, true, true, false, false, false, false];
        for cost in [CostConstraint::Fnr, CostConstraint::Fpr, CostConstraint::Weighted] {
            let mix = ceo_fit(&scores, &y, &mask, cost).unwrap();
            assert!(mix.alpha_unprivileged == 0.0 || mix.alpha_privileged == 0.0);
            if mix.flag.is_none() {
                let (a, b) = ceo_expected_costs(&mix);
                assert!((a - b).abs() <= 1e-9, "{cost:?} {a} {b}");
            }
        }
    }

    #[test]
    fn full_alpha_and_replacement_rate() {
        let mix = CEOMix {
            cost: CostConstraint::Weighted,
            alpha_unprivileged: 1.0,
            alpha_privileged: 0.0,
            base_rate_unprivileged: 0.3,
            base_rate_privileged: 0.6,
            cost_unprivileged: 0.0,
            cost_privileged: 0.0,
            flag: None,
        };
        let scores: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let mask: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        let (_, s) = ceo_apply(&mix, &scores, &mask, 4, 0.5);
        for i in 0..100 {
            assert_eq!(s[i], if mask[i] { scores[i] } else { 0.3 });
        }

        let mix = CEOMix {
            alpha_unprivileged: 0.3,
            ..mix
        };
        let n = 10_000;
        let scores = vec![0.77; n];
        let mask = vec![false; n];
        let (_, s) = ceo_apply(&mix, &scores, &mask, 8, 0.5);
        let replaced = s.iter().filter(|&&v| v == 0.3).count() as f64 / n as f64;
        assert!((replaced - 0.3).abs() <= 0.02);
    }
}
