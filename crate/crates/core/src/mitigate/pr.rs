//! Group-specific logistic models penalised by a prejudice index, the
//! plug-in mutual information between predictions and group membership.

use serde::{Deserialize, Serialize};

use super::features::FeatureMap;
use super::PredictionSet;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::optim::{minimize, OptOptions, OptReport};
use crate::learners::{fit_logistic_rows, sigmoid, softplus, LinearModel};
use crate::matrix::Matrix;

const P_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrParams {
    /// Weight of the prejudice index.
    pub eta: f64,
    pub l2: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for PrParams {
    fn default() -> Self {
        Self {
            eta: 1.0,
            l2: 0.01,
            max_iters: 1000,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PRModel {
    pub privileged: LinearModel,
    pub unprivileged: LinearModel,
    pub params: PrParams,
    pub features: FeatureMap,
    pub report: OptReport,
}

/// `p ln p + (1 - p) ln(1 - p)`, zero at the endpoints.
fn neg_entropy(p: f64) -> f64 {
    let t = |v: f64| if v > 0.0 { v * v.ln() } else { 0.0 };
    t(p) + t(1.0 - p)
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(P_EPS, 1.0 - P_EPS);
    (p / (1.0 - p)).ln()
}

struct GroupMeans {
    n: [f64; 2],
    p1: [f64; 2],
    all: f64,
}

/// Index 0 is unprivileged, 1 privileged.
fn group_means(scores: &[f64], mask: &[bool]) -> Result<GroupMeans> {
    let mut n = [0.0; 2];
    let mut s = [0.0; 2];
    for (&p, &m) in scores.iter().zip(mask) {
        n[usize::from(m)] += 1.0;
        s[usize::from(m)] += p;
    }
    if n[0] == 0.0 {
        return Err(Error::EmptyGroup("unprivileged"));
    }
    if n[1] == 0.0 {
        return Err(Error::EmptyGroup("privileged"));
    }
    Ok(GroupMeans {
        n,
        p1: [s[0] / n[0], s[1] / n[1]],
        all: (s[0] + s[1]) / (n[0] + n[1]),
    })
}

/// Prejudice index of favorable-probability `scores`:
/// `sum_s N_s h(P1|s) - N h(P1)` with `h(p) = p ln p + (1-p) ln(1-p)`,
/// which equals `sum_n sum_y M(y|n) ln(P(y|s_n) / P(y))`.
pub fn prejudice_index_scores(scores: &[f64], mask: &[bool]) -> Result<f64> {
    let g = group_means(scores, mask)?;
    Ok(g.n[0] * neg_entropy(g.p1[0]) + g.n[1] * neg_entropy(g.p1[1]) - (g.n[0] + g.n[1]) * neg_entropy(g.all))
}

/// Objective and gradient with `theta = [w_u, b_u, w_p, b_p]`: summed
/// negative log-likelihood + `eta * PI` + `(l2 / 2)` times the squared norm
/// of both weight vectors (intercepts unpenalised).
pub fn pr_objective(
    x: &Matrix,
    y: &[bool],
    mask: &[bool],
    eta: f64,
    l2: f64,
    theta: &[f64],
    grad: &mut [f64],
) -> f64 {
    let d = x.cols();
    let block = d + 1;
    let mut z = Vec::with_capacity(x.rows());
    let mut scores = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let t = &theta[usize::from(mask[i]) * block..][..block];
        let zi: f64 = t[..d].iter().zip(x.row(i)).map(|(a, b)| a * b).sum::<f64>() + t[d];
        z.push(zi);
        scores.push(sigmoid(zi));
    }
    let Ok(g) = group_means(&scores, mask) else {
        return f64::NAN;
    };
    let pi = g.n[0] * neg_entropy(g.p1[0]) + g.n[1] * neg_entropy(g.p1[1]) - (g.n[0] + g.n[1]) * neg_entropy(g.all);
    let dpi = [logit(g.p1[0]) - logit(g.all), logit(g.p1[1]) - logit(g.all)];

    grad.iter_mut().for_each(|v| *v = 0.0);
    let mut loss = eta * pi;
    for i in 0..x.rows() {
        let t = f64::from(u8::from(y[i]));
        let s = scores[i];
        loss += softplus(z[i]) - t * z[i];
        let c = (s - t) + eta * dpi[usize::from(mask[i])] * s * (1.0 - s);
        let gb = &mut grad[usize::from(mask[i]) * block..][..block];
        gb[..d].iter_mut().zip(x.row(i)).for_each(|(a, b)| *a += c * b);
        gb[d] += c;
    }
    for gi in 0..2 {
        let w = &theta[gi * block..gi * block + d];
        loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
        grad[gi * block..gi * block + d]
            .iter_mut()
            .zip(w)
            .for_each(|(a, b)| *a += l2 * b);
    }
    loss
}

/// Fits on a prepared design matrix, starting from independent per-group
/// logistic fits (the `eta = 0` optimum).
pub fn pr_fit_matrix(
    x: &Matrix,
    y: &[bool],
    mask: &[bool],
    params: &PrParams,
) -> Result<(LinearModel, LinearModel, OptReport)> {
    let n = x.rows();
    if y.len() != n || mask.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: y.len().min(mask.len()),
        });
    }
    if params.eta < 0.0 || params.l2 < 0.0 {
        return Err(Error::InvalidArgument("eta and l2 must be nonnegative".into()));
    }
    let opts = OptOptions {
        max_iters: params.max_iters,
        tol: params.tol,
        ..Default::default()
    };
    let rows_u: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
    let rows_p: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    if rows_u.is_empty() {
        return Err(Error::EmptyGroup("unprivileged"));
    }
    if rows_p.is_empty() {
        return Err(Error::EmptyGroup("privileged"));
    }
    let (mu, _) = fit_logistic_rows(x, y, &rows_u, params.l2, &opts)?;
    let (mp, _) = fit_logistic_rows(x, y, &rows_p, params.l2, &opts)?;
    let mut theta0 = mu.weights.clone();
    theta0.push(mu.intercept);
    theta0.extend_from_slice(&mp.weights);
    theta0.push(mp.intercept);
    let (theta, report) = minimize(
        |t, g| pr_objective(x, y, mask, params.eta, params.l2, t, g),
        theta0,
        &opts,
        None,
    )?;
    if !report.last.is_finite() {
        return Err(Error::NonFinite("prejudice remover objective".into()));
    }
    let d = x.cols();
    let split = |t: &[f64]| LinearModel {
        weights: t[..d].to_vec(),
        intercept: t[d],
    };
    Ok((split(&theta[..d + 1]), split(&theta[d + 1..]), report))
}

pub fn pr_fit(train: &Dataset, params: &PrParams) -> Result<PRModel> {
    let (features, x) = FeatureMap::fit(train);
    let mask = train.group_mask()?;
    let (unprivileged, privileged, report) = pr_fit_matrix(&x, train.labels(), &mask, params)?;
    Ok(PRModel {
        privileged,
        unprivileged,
        params: *params,
        features,
        report,
    })
}

impl PRModel {
    pub fn scores_matrix(&self, x: &Matrix, mask: &[bool]) -> Result<Vec<f64>> {
        x.check_cols(self.privileged.weights.len())?;
        if mask.len() != x.rows() {
            return Err(Error::Dimension {
                expected: x.rows(),
                got: mask.len(),
            });
        }
        Ok((0..x.rows())
            .map(|i| {
                let m = if mask[i] { &self.privileged } else { &self.unprivileged };
                m.score_row(x.row(i))
            })
            .collect())
    }
}

/// Scores from the weight vector of each record's group; label at 0.5.
pub fn pr_predict(model: &PRModel, ds: &Dataset) -> Result<PredictionSet> {
    let x = model.features.apply(ds)?;
    let scores = model.scores_matrix(&x, &ds.group_mask()?)?;
    Ok(PredictionSet {
        labels: scores.iter().map(|&s| s >= 0.5).collect(),
        scores: Some(scores),
    })
}

pub fn prejudice_index(model: &PRModel, ds: &Dataset) -> Result<f64> {
    let x = model.features.apply(ds)?;
    let mask = ds.group_mask()?;
    prejudice_index_scores(&model.scores_matrix(&x, &mask)?, &mask)
}
