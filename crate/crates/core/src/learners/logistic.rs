use serde::{Deserialize, Serialize};

use super::optim::{minimize, OptOptions, OptReport};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic-link linear model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn zeros(d: usize) -> Self {
        Self {
            weights: vec![0.0; d],
            intercept: 0.0,
        }
    }

    #[inline]
    pub fn score_row(&self, row: &[f64]) -> f64 {
        let z: f64 = self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>() + self.intercept;
        sigmoid(z)
    }

    /// Labels at threshold 0.5 and the logistic scores.
    pub fn predict(&self, x: &Matrix) -> Result<(Vec<bool>, Vec<f64>)> {
        x.check_cols(self.weights.len())?;
        let scores: Vec<f64> = (0..x.rows()).map(|i| self.score_row(x.row(i))).collect();
        Ok((scores.iter().map(|&s| s >= 0.5).collect(), scores))
    }
}

/// Negative log-likelihood (summed) + (l2/2)·‖w‖² over `rows`, with its
/// gradient in `[w..., b]` layout. The intercept is not penalised.
pub(crate) fn penalized_nll(
    x: &Matrix,
    y: &[bool],
    rows: &[usize],
    l2: f64,
    theta: &[f64],
    grad: &mut [f64],
) -> f64 {
    let d = x.cols();
    let (w, b) = (&theta[..d], theta[d]);
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    for &i in rows {
        let row = x.row(i);
        let z: f64 = w.iter().zip(row).map(|(a, v)| a * v).sum::<f64>() + b;
        let t = f64::from(u8::from(y[i]));
        loss += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        for (gj, xj) in grad[..d].iter_mut().zip(row) {
            *gj += r * xj;
        }
        grad[d] += r;
    }
    loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    for (gj, wj) in grad[..d].iter_mut().zip(w) {
        *gj += l2 * wj;
    }
    loss
}

/// L2-regularised logistic regression by line-search descent.
pub fn fit_logistic(x: &Matrix, y: &[bool], l2: f64, opts: &OptOptions) -> Result<(LinearModel, OptReport)> {
    if y.len() != x.rows() {
        return Err(Error::Dimension {
            expected: x.rows(),
            got: y.len(),
        });
    }
    if l2 < 0.0 {
        return Err(Error::InvalidArgument(format!("l2 must be nonnegative, got {l2}")));
    }
    let rows: Vec<usize> = (0..x.rows()).collect();
    fit_logistic_rows(x, y, &rows, l2, opts)
}

pub(crate) fn fit_logistic_rows(
    x: &Matrix,
    y: &[bool],
    rows: &[usize],
    l2: f64,
    opts: &OptOptions,
) -> Result<(LinearModel, OptReport)> {
    let d = x.cols();
    let (theta, report) = minimize(
        |t, g| penalized_nll(x, y, rows, l2, t, g),
        vec![0.0; d + 1],
        opts,
        None,
    )?;
    if !report.last.is_finite() {
        return Err(Error::NonFinite("logistic loss".into()));
    }
    Ok((
        LinearModel {
            weights: theta[..d].to_vec(),
            intercept: theta[d],
        },
        report,
    ))
}

/// Per-column z-scoring fitted on training data. Constant columns keep a
/// unit scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let (n, d) = (x.rows().max(1) as f64, x.cols());
        let mut mean = vec![0.0; d];
        for i in 0..x.rows() {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for i in 0..x.rows() {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        x.check_cols(self.mean.len())?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::optim::{numeric_gradient, relative_error};
    use rand::{Rng, SeedableRng};

    fn tight() -> OptOptions {
        OptOptions {
            max_iters: 5000,
            tol: 1e-9,
            ..Default::default()
        }
    }

    #[test]
    fn balanced_symmetric_intercept_is_zero() {
        let x = Matrix::from_rows(&[vec![-2.0], vec![-1.0], vec![1.0], vec![2.0], vec![-0.5], vec![0.5]]).unwrap();
        let y = [false, false, true, true, true, false];
        let (m, _) = fit_logistic(&x, &y, 0.1, &tight()).unwrap();
        assert!(m.intercept.abs() < 1e-3, "{}", m.intercept);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y = [true, false, true, true, false];
        let idx: Vec<usize> = (0..5).collect();
        let theta: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut g = vec![0.0; 4];
        penalized_nll(&x, &y, &idx, 0.3, &theta, &mut g);
        let num = numeric_gradient(
            |t| {
                let mut scratch = vec![0.0; 4];
                penalized_nll(&x, &y, &idx, 0.3, t, &mut scratch)
            },
            &theta,
            1e-6,
        );
        assert!(relative_error(&g, &num) <= 1e-5);
    }

    #[test]
    fn separable_with_ridge_is_finite_and_exact() {
        let x = Matrix::from_rows(&[vec![-3.0], vec![-2.0], vec![-1.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let y = [false, false, false, true, true, true];
        let (m, rep) = fit_logistic(&x, &y, 1.0, &tight()).unwrap();
        assert!(m.weights[0].is_finite() && m.intercept.is_finite());
        assert_eq!(m.predict(&x).unwrap().0, y.to_vec());
        assert!(rep.trace.windows(2).all(|w| w[1] <= w[0]));

        // Grid check of the convex objective in (w, b) around the optimum.
        let idx: Vec<usize> = (0..6).collect();
        let mut g = vec![0.0; 2];
        let best = penalized_nll(&x, &y, &idx, 1.0, &[m.weights[0], m.intercept], &mut g);
        for i in -20..=20 {
            for j in -20..=20 {
                let t = [m.weights[0] + i as f64 * 0.05, m.intercept + j as f64 * 0.05];
                assert!(penalized_nll(&x, &y, &idx, 1.0, &t, &mut g) >= best - 1e-9);
            }
        }
    }

    #[test]
    fn standardizer_roundtrip() {
        let x = Matrix::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let s = Standardizer::fit(&x);
        let z = s.transform(&x).unwrap();
        assert_eq!(z.as_slice(), &[-1.0, 0.0, 1.0, 0.0]);
    }
}
