//! Equalized-odds post-processing: randomised label flipping chosen by a
//! four-variable linear program.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

const TOL: f64 = 1e-12;

/// Probability of emitting the favorable label per (group, base label).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EOMix {
    pub unpriv_unfav: f64,
    pub unpriv_fav: f64,
    pub priv_unfav: f64,
    pub priv_fav: f64,
    /// Expected error rate on the fit data at this mix.
    pub objective: f64,
    /// Expected error rate of the identity mix on the fit data.
    pub identity_objective: f64,
    /// Constraints dropped because a (group, label) cell was empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub relaxed: Vec<String>,
}

impl EOMix {
    pub fn identity() -> Self {
        Self {
            unpriv_unfav: 0.0,
            unpriv_fav: 1.0,
            priv_unfav: 0.0,
            priv_fav: 1.0,
            objective: f64::NAN,
            identity_objective: f64::NAN,
            relaxed: Vec::new(),
        }
    }

    /// `[unpriv_unfav, unpriv_fav, priv_unfav, priv_fav]`.
    pub fn as_array(&self) -> [f64; 4] {
        [self.unpriv_unfav, self.unpriv_fav, self.priv_unfav, self.priv_fav]
    }

    pub fn prob(&self, privileged: bool, base: bool) -> f64 {
        self.as_array()[2 * usize::from(privileged) + usize::from(base)]
    }
}

/// Base-label contingency per group: `[group][y][base]` counts, group 0
/// unprivileged.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Contingency {
    pub counts: [[[f64; 2]; 2]; 2],
}

impl Contingency {
    pub fn tally(base: &[bool], y: &[bool], mask: &[bool]) -> Result<Self> {
        if base.len() != y.len() || mask.len() != y.len() {
            return Err(Error::Dimension {
                expected: y.len(),
                got: base.len().min(mask.len()),
            });
        }
        let mut c = Contingency::default();
        for ((&b, &t), &m) in base.iter().zip(y).zip(mask) {
            c.counts[usize::from(m)][usize::from(t)][usize::from(b)] += 1.0;
        }
        Ok(c)
    }

    fn n(&self, g: usize, t: usize) -> f64 {
        self.counts[g][t][0] + self.counts[g][t][1]
    }

    /// `P(base = fav | group, y = t)`, `None` for an empty cell.
    fn base_rate(&self, g: usize, t: usize) -> Option<f64> {
        let n = self.n(g, t);
        (n > 0.0).then(|| self.counts[g][t][1] / n)
    }

    /// Expected `P(out = fav | group, y = t)` under `mix`.
    pub fn expected_rate(&self, mix: &[f64; 4], g: usize, t: usize) -> Option<f64> {
        self.base_rate(g, t)
            .map(|r| mix[2 * g + 1] * r + mix[2 * g] * (1.0 - r))
    }

    /// Expected error rate under `mix`.
    pub fn expected_error(&self, mix: &[f64; 4]) -> f64 {
        let mut err = 0.0;
        let mut total = 0.0;
        for g in 0..2 {
            for t in 0..2 {
                for b in 0..2 {
                    let c = self.counts[g][t][b];
                    let fav = mix[2 * g + b];
                    err += c * if t == 1 { 1.0 - fav } else { fav };
                    total += c;
                }
            }
        }
        err / total
    }
}

/// Expected post-mix `(TPR_u, TPR_p, FPR_u, FPR_p)` on `(base, y, mask)`.
pub fn eo_expected_rates(
    mix: &EOMix,
    base: &[bool],
    y: &[bool],
    mask: &[bool],
) -> Result<[Option<f64>; 4]> {
    let c = Contingency::tally(base, y, mask)?;
    let m = mix.as_array();
    Ok([
        c.expected_rate(&m, 0, 1),
        c.expected_rate(&m, 1, 1),
        c.expected_rate(&m, 0, 0),
        c.expected_rate(&m, 1, 0),
    ])
}

fn solve_free(eqs: &[([f64; 4], f64)], fixed: &[Option<f64>; 4]) -> Option<[f64; 4]> {
    let free: Vec<usize> = (0..4).filter(|&i| fixed[i].is_none()).collect();
    // Reduce each equation a.p = rhs to the free variables.
    let reduced: Vec<(Vec<f64>, f64)> = eqs
        .iter()
        .map(|(a, rhs)| {
            let r = rhs - (0..4).filter_map(|i| fixed[i].map(|v| a[i] * v)).sum::<f64>();
            (free.iter().map(|&i| a[i]).collect(), r)
        })
        .collect();
    let mut p = [0.0; 4];
    for i in 0..4 {
        if let Some(v) = fixed[i] {
            p[i] = v;
        }
    }
    match free.len() {
        0 => {}
        1 => {
            let (a, r) = reduced
                .iter()
                .max_by(|x, y| x.0[0].abs().total_cmp(&y.0[0].abs()))?;
            if a[0].abs() <= TOL {
                return None;
            }
            p[free[0]] = r / a[0];
        }
        2 if reduced.len() == 2 => {
            let (a, r1) = &reduced[0];
            let (b, r2) = &reduced[1];
            let det = a[0] * b[1] - a[1] * b[0];
            if det.abs() <= TOL {
                return None;
            }
            p[free[0]] = (r1 * b[1] - a[1] * r2) / det;
            p[free[1]] = (a[0] * r2 - r1 * b[0]) / det;
        }
        _ => return None,
    }
    for &i in &free {
        if !(-TOL..=1.0 + TOL).contains(&p[i]) {
            return None;
        }
        p[i] = p[i].clamp(0.0, 1.0);
    }
    let ok = eqs
        .iter()
        .all(|(a, rhs)| (a.iter().zip(&p).map(|(x, y)| x * y).sum::<f64>() - rhs).abs() <= 1e-10);
    ok.then_some(p)
}

/// Minimum expected error mix subject to equal expected TPR and FPR across
/// groups, found by enumerating the vertices of the feasible polytope. Ties
/// go to the mix closest (L1) to the identity. A constraint whose rates are
/// undefined for a group is dropped and recorded in `relaxed`.
pub fn eo_fit(base: &[bool], y: &[bool], mask: &[bool]) -> Result<EOMix> {
    let c = Contingency::tally(base, y, mask)?;
    if c.n(0, 0) + c.n(0, 1) == 0.0 {
        return Err(Error::EmptyGroup("unprivileged"));
    }
    if c.n(1, 0) + c.n(1, 1) == 0.0 {
        return Err(Error::EmptyGroup("privileged"));
    }
    let mut eqs = Vec::new();
    let mut relaxed = Vec::new();
    for (t, name) in [(1usize, "true positive rate"), (0, "false positive rate")] {
        match (c.base_rate(0, t), c.base_rate(1, t)) {
            (Some(ru), Some(rp)) => eqs.push(([1.0 - ru, ru, -(1.0 - rp), -rp], 0.0)),
            _ => relaxed.push(name.to_string()),
        }
    }
    let identity = [0.0, 1.0, 0.0, 1.0];
    let mut best: Option<([f64; 4], f64, f64)> = None;
    for code in 0..81u32 {
        let mut fixed = [None; 4];
        let mut rest = code;
        for f in fixed.iter_mut() {
            *f = match rest % 3 {
                0 => None,
                1 => Some(0.0),
                _ => Some(1.0),
            };
            rest /= 3;
        }
        let Some(p) = solve_free(&eqs, &fixed) else { continue };
        let obj = c.expected_error(&p);
        let dist: f64 = p.iter().zip(&identity).map(|(a, b)| (a - b).abs()).sum();
        let better = match &best {
            None => true,
            Some((_, bo, bd)) => obj < bo - TOL || (obj <= bo + TOL && dist < bd - TOL),
        };
        if better {
            best = Some((p, obj, dist));
        }
    }
    let (p, objective, _) = best.expect("the all-unfavorable mix is always feasible");
    Ok(EOMix {
        unpriv_unfav: p[0],
        unpriv_fav: p[1],
        priv_unfav: p[2],
        priv_fav: p[3],
        objective,
        identity_objective: c.expected_error(&identity),
        relaxed,
    })
}

/// Per-record favorable draw with probability from the mix; one uniform
/// draw per record in order, so the output depends only on `seed`.
pub fn eo_apply(mix: &EOMix, base: &[bool], mask: &[bool], seed: u64) -> Vec<bool> {
    let mut rng = seed::rng(seed);
    base.iter()
        .zip(mask)
        .map(|(&b, &m)| rng.gen::<f64>() < mix.prob(m, b))
        .collect()
}
