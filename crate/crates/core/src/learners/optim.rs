//! Line-search descent shared by the gradient-trained models.
//!
//! Every accepted step satisfies the Armijo sufficient-decrease condition,
//! so the recorded objective trace is non-increasing.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// In-place projection onto the feasible set.
pub type Projection<'a> = &'a dyn Fn(&mut [f64]);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Steepest descent with backtracking.
    GradientDescent,
    /// Limited-memory BFGS direction with backtracking.
    Lbfgs { memory: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptOptions {
    pub step_rule: StepRule,
    pub max_iters: usize,
    /// Stop once the (projected) gradient norm falls below this.
    pub tol: f64,
    /// Stop once a step improves the objective by less than
    /// `ftol * max(1, |f|)`.
    pub ftol: f64,
}

impl Default for OptOptions {
    fn default() -> Self {
        Self {
            step_rule: StepRule::Lbfgs { memory: 10 },
            max_iters: 1000,
            tol: 1e-6,
            ftol: 1e-14,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptReport {
    pub iterations: usize,
    pub converged: bool,
    pub initial: f64,
    pub last: f64,
    /// Objective after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimises `f`, which returns the objective and writes the gradient.
/// `project`, when given, maps a point back onto the feasible set after
/// every trial step (projected descent).
pub fn minimize<F>(
    mut f: F,
    x0: Vec<f64>,
    opts: &OptOptions,
    project: Option<Projection<'_>>,
) -> Result<(Vec<f64>, OptReport)>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let dim = x0.len();
    let mut x = x0;
    if let Some(p) = project {
        p(&mut x);
    }
    let mut g = vec![0.0; dim];
    let mut fx = f(&x, &mut g);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("initial objective {fx}")));
    }
    let mut report = OptReport {
        iterations: 0,
        converged: false,
        initial: fx,
        last: fx,
        trace: vec![fx],
    };
    let memory = match opts.step_rule {
        StepRule::GradientDescent => 0,
        StepRule::Lbfgs { memory } => memory,
    };
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut gd_step = 1.0 / norm(&g).max(1.0);
    let mut trial = vec![0.0; dim];
    let mut g_trial = vec![0.0; dim];

    let projected_grad_norm = |x: &[f64], g: &[f64]| -> f64 {
        match project {
            None => norm(g),
            Some(p) => {
                let mut z: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
                p(&mut z);
                x.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
            }
        }
    };

    for it in 0..opts.max_iters {
        if projected_grad_norm(&x, &g) < opts.tol {
            report.converged = true;
            break;
        }
        // Search direction.
        let mut dir: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut quasi_newton = false;
        if memory > 0 && !history.is_empty() {
            let mut q = g.clone();
            let mut alpha = Vec::with_capacity(history.len());
            for (s, y, rho) in history.iter().rev() {
                let a = rho * dot(s, &q);
                q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
                alpha.push(a);
            }
            let (s, y, _) = history.back().unwrap();
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
            for ((s, y, rho), a) in history.iter().zip(alpha.iter().rev()) {
                let b = rho * dot(y, &q);
                q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
            }
            if dot(&q, &g) > 0.0 {
                dir = q.iter().map(|v| -v).collect();
                quasi_newton = true;
            } else {
                history.clear();
            }
        }
        let mut step = if quasi_newton {
            1.0
        } else if memory > 0 {
            1.0 / norm(&g).max(1e-12)
        } else {
            gd_step * 2.0
        };

        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            for i in 0..dim {
                trial[i] = x[i] + step * dir[i];
            }
            if let Some(p) = project {
                p(&mut trial);
            }
            let decrease: f64 = g.iter().zip(trial.iter().zip(&x)).map(|(gi, (t, xi))| gi * (t - xi)).sum();
            if decrease >= 0.0 {
                // Projection removed every descent component.
                step *= 0.5;
                continue;
            }
            let ft = f(&trial, &mut g_trial);
            if ft.is_finite() && ft <= fx + ARMIJO * decrease {
                accepted = Some(ft);
                break;
            }
            step *= 0.5;
        }
        let Some(ft) = accepted else {
            if quasi_newton {
                // Curvature pairs can point off the feasible set; retry
                // from steepest descent.
                history.clear();
                continue;
            }
            // No sufficient decrease along the direction: stationary to
            // working precision.
            report.converged = projected_grad_norm(&x, &g) < opts.tol.sqrt();
            break;
        };
        gd_step = step;
        if memory > 0 {
            let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_trial.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * norm(&s) * norm(&y) {
                history.push_back((s, y, 1.0 / sy));
                if history.len() > memory {
                    history.pop_front();
                }
            }
        }
        let improvement = fx - ft;
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_trial);
        fx = ft;
        report.trace.push(fx);
        report.iterations = it + 1;
        if improvement <= opts.ftol * fx.abs().max(1.0) {
            report.converged = true;
            break;
        }
    }
    report.last = fx;
    Ok((x, report))
}

/// Central finite-difference gradient; used by tests as an independent
/// check on analytic gradients.
pub fn numeric_gradient<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut z = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = z[i];
            z[i] = orig + h;
            let up = f(&z);
            z[i] = orig - h;
            let down = f(&z);
            z[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max_i |a_i - b_i| / max(1e-8, max_i |b_i|)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn lbfgs_solves_rosenbrock() {
        let opts = OptOptions {
            max_iters: 500,
            tol: 1e-10,
            ..Default::default()
        };
        let (x, rep) = minimize(rosenbrock, vec![-1.2, 1.0], &opts, None).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6, "{x:?}");
        assert!(rep.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn gradient_descent_is_monotone() {
        let opts = OptOptions {
            step_rule: StepRule::GradientDescent,
            max_iters: 200,
            ..Default::default()
        };
        let (_, rep) = minimize(rosenbrock, vec![-1.2, 1.0], &opts, None).unwrap();
        assert!(rep.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(rep.last < rep.initial);
    }

    #[test]
    fn projection_respects_box() {
        // minimise (x - 2)^2 on [0, 1]
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * (x[0] - 2.0);
            (x[0] - 2.0).powi(2)
        };
        let clamp = |x: &mut [f64]| x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        let (x, rep) = minimize(f, vec![0.2], &OptOptions::default(), Some(&clamp)).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!(rep.converged);
    }

    #[test]
    fn non_finite_start() {
        let f = |_: &[f64], _: &mut [f64]| f64::NAN;
        assert!(matches!(
            minimize(f, vec![0.0], &OptOptions::default(), None),
            Err(Error::NonFinite(_))
        ));
    }
}
