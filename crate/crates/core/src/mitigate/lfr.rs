//! Prototype-based fair representations with a label head.
//!
//! Records are softly assigned to `K` prototypes by a softmax over negative
//! squared distances. The loss mixes three terms: the gap in mean prototype
//! usage between groups, reconstruction error, and cross-entropy of the
//! prototype-label prediction.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::FeatureMap;
use super::PredictionSet;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::optim::{minimize, OptOptions, OptReport, StepRule};
use crate::matrix::Matrix;
use crate::seed;

const CHUNK: usize = 512;
const CLAMP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LfrParams {
    pub k: usize,
    pub a_x: f64,
    pub a_y: f64,
    pub a_z: f64,
    pub max_iters: usize,
    pub threshold: f64,
}

impl Default for LfrParams {
    fn default() -> Self {
        Self {
            k: 5,
            a_x: 0.01,
            a_y: 1.0,
            a_z: 50.0,
            max_iters: 5000,
            threshold: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LFRModel {
    /// `K x d` prototype locations in standardized feature space.
    pub prototypes: Matrix,
    /// Favorable probability attached to each prototype, in `[0, 1]`.
    pub w: Vec<f64>,
    pub params: LfrParams,
    pub features: FeatureMap,
    pub report: OptReport,
}

fn softmax_row(x: &[f64], protos: &[f64], k: usize, out: &mut [f64]) {
    let d = x.len();
    for (j, o) in out.iter_mut().enumerate().take(k) {
        let v = &protos[j * d..(j + 1) * d];
        *o = -x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    let top = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for o in out.iter_mut() {
        *o = (*o - top).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// Soft assignments `M` (`n x K`) of the rows of `x`.
pub fn soft_assignments(x: &Matrix, prototypes: &Matrix) -> Result<Matrix> {
    x.check_cols(prototypes.cols())?;
    let k = prototypes.rows();
    let mut m = Matrix::zeros(x.rows(), k);
    for i in 0..x.rows() {
        softmax_row(x.row(i), prototypes.as_slice(), k, m.row_mut(i));
    }
    Ok(m)
}

/// Full loss and its gradient with `theta = [v (K*d, row-major), w (K)]`.
/// Row work runs in fixed chunks reduced in order, so the result does not
/// depend on the thread count.
pub fn lfr_objective(
    x: &Matrix,
    y: &[bool],
    mask: &[bool],
    k: usize,
    params: &LfrParams,
    theta: &[f64],
    grad: &mut [f64],
) -> f64 {
    let (n, d) = (x.rows(), x.cols());
    let (protos, w) = theta.split_at(k * d);
    let n_priv = mask.iter().filter(|&&m| m).count() as f64;
    let n_unpriv = n as f64 - n_priv;

    let mut assign = vec![0.0; n * k];
    assign
        .par_chunks_mut(CHUNK * k)
        .enumerate()
        .for_each(|(c, block)| {
            for (r, out) in block.chunks_mut(k).enumerate() {
                softmax_row(x.row(c * CHUNK + r), protos, k, out);
            }
        });
    let mut mean_p = vec![0.0; k];
    let mut mean_u = vec![0.0; k];
    for (i, row) in assign.chunks(k).enumerate() {
        let target = if mask[i] { &mut mean_p } else { &mut mean_u };
        target.iter_mut().zip(row).for_each(|(t, m)| *t += m);
    }
    mean_p.iter_mut().for_each(|v| *v /= n_priv);
    mean_u.iter_mut().for_each(|v| *v /= n_unpriv);
    let l_z: f64 = mean_u.iter().zip(&mean_p).map(|(a, b)| (a - b).abs()).sum();
    let sign: Vec<f64> = mean_u.iter().zip(&mean_p).map(|(a, b)| (a - b).signum() * f64::from(u8::from(a != b))).collect();

    let inv_n = 1.0 / n as f64;
    let partials: Vec<(f64, Vec<f64>)> = assign
        .par_chunks(CHUNK * k)
        .enumerate()
        .map(|(c, block)| {
            let mut g = vec![0.0; k * d + k];
            let mut loss = 0.0;
            let mut r = vec![0.0; d];
            let mut gm = vec![0.0; k];
            for (rr, m) in block.chunks(k).enumerate() {
                let i = c * CHUNK + rr;
                let xi = x.row(i);
                r.copy_from_slice(xi);
                for (j, &mj) in m.iter().enumerate() {
                    let v = &protos[j * d..(j + 1) * d];
                    r.iter_mut().zip(v).for_each(|(a, b)| *a -= mj * b);
                }
                let yhat: f64 = m.iter().zip(w).map(|(a, b)| a * b).sum();
                let yc = yhat.clamp(CLAMP, 1.0 - CLAMP);
                let t = f64::from(u8::from(y[i]));
                let ce = -(t * yc.ln() + (1.0 - t) * (1.0 - yc).ln());
                loss += params.a_x * inv_n * r.iter().map(|a| a * a).sum::<f64>() + params.a_y * inv_n * ce;
                let dce = if yhat == yc {
                    params.a_y * inv_n * (-t / yc + (1.0 - t) / (1.0 - yc))
                } else {
                    0.0
                };
                let group_scale = if mask[i] { -1.0 / n_priv } else { 1.0 / n_unpriv };
                for j in 0..k {
                    let v = &protos[j * d..(j + 1) * d];
                    let rv: f64 = r.iter().zip(v).map(|(a, b)| a * b).sum();
                    gm[j] = params.a_z * sign[j] * group_scale - 2.0 * params.a_x * inv_n * rv + dce * w[j];
                }
                let mg: f64 = m.iter().zip(&gm).map(|(a, b)| a * b).sum();
                for j in 0..k {
                    let dz = m[j] * (gm[j] - mg);
                    let gv = &mut g[j * d..(j + 1) * d];
                    let recon = -2.0 * params.a_x * inv_n * m[j];
                    let v = &protos[j * d..(j + 1) * d];
                    for l in 0..d {
                        gv[l] += 2.0 * dz * (xi[l] - v[l]) + recon * r[l];
                    }
                    g[k * d + j] += dce * m[j];
                }
            }
            (loss, g)
        })
        .collect();
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = params.a_z * l_z;
    for (l, g) in partials {
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    loss
}

/// Fits prototypes on a prepared design matrix.
pub fn lfr_fit_matrix(
    x: &Matrix,
    y: &[bool],
    mask: &[bool],
    params: &LfrParams,
    seed: u64,
) -> Result<(Matrix, Vec<f64>, OptReport)> {
    let (n, d, k) = (x.rows(), x.cols(), params.k);
    if k < 2 {
        return Err(Error::InvalidArgument(format!("LFR needs K >= 2, got {k}")));
    }
    if y.len() != n || mask.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: y.len().min(mask.len()),
        });
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyGroup("privileged"));
    }
    if mask.iter().all(|&m| m) {
        return Err(Error::EmptyGroup("unprivileged"));
    }
    let mut rng = seed::rng(seed);
    let mut theta = Vec::with_capacity(k * d + k);
    if n >= k {
        for i in sample(&mut rng, n, k).into_iter() {
            theta.extend_from_slice(x.row(i));
        }
    } else {
        for _ in 0..k * d {
            theta.push(rng.gen_range(-1.0..1.0));
        }
    }
    for _ in 0..k {
        theta.push(rng.gen_range(0.0..1.0));
    }
    let opts = OptOptions {
        step_rule: StepRule::Lbfgs { memory: 10 },
        max_iters: params.max_iters,
        tol: 1e-5,
        ftol: 1e-10,
    };
    let box_w = |t: &mut [f64]| t[k * d..].iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    let (theta, report) = minimize(
        |t, g| lfr_objective(x, y, mask, k, params, t, g),
        theta,
        &opts,
        Some(&box_w),
    )?;
    let prototypes = Matrix::new(k, d, theta[..k * d].to_vec())?;
    Ok((prototypes, theta[k * d..].to_vec(), report))
}

pub fn lfr_fit(train: &Dataset, params: &LfrParams, seed: u64) -> Result<LFRModel> {
    let (features, x) = FeatureMap::fit(train);
    let mask = train.group_mask()?;
    let (prototypes, w, report) = lfr_fit_matrix(&x, train.labels(), &mask, params, seed)?;
    Ok(LFRModel {
        prototypes,
        w,
        params: *params,
        features,
        report,
    })
}

/// Prototype-mixture scores and thresholded labels. Threshold 0 makes every
/// record favorable.
pub fn lfr_scores(prototypes: &Matrix, w: &[f64], x: &Matrix, threshold: f64) -> Result<PredictionSet> {
    let m = soft_assignments(x, prototypes)?;
    let scores: Vec<f64> = (0..x.rows())
        .map(|i| m.row(i).iter().zip(w).map(|(a, b)| a * b).sum::<f64>().clamp(0.0, 1.0))
        .collect();
    let labels = scores.iter().map(|&s| threshold <= 0.0 || s > threshold).collect();
    Ok(PredictionSet {
        labels,
        scores: Some(scores),
    })
}

pub fn lfr_apply(model: &LFRModel, ds: &Dataset, threshold: f64) -> Result<PredictionSet> {
    let x = model.features.apply(ds)?;
    lfr_scores(&model.prototypes, &model.w, &x, threshold)
}
