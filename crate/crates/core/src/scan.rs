//! Multi-dimensional subset scan over categorical attributes.
//!
//! A subgroup restricts some attributes to nonempty value subsets. Its
//! score is the Bernoulli likelihood-ratio statistic
//! `max_q sum_i [y_i ln q - ln(1 - p_i + q p_i)]` over the matched records,
//! with `q > 1` ("over": outcomes exceed expectations) or `q < 1` ("under").
//! The search alternates over attributes, each time choosing the best value
//! subset for that attribute with the others held fixed.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Column, Dataset};
use crate::error::{Error, Result};
use crate::seed;

/// Expected probabilities are clipped into this range before scoring.
pub const P_CLIP: (f64, f64) = (0.01, 0.99);
/// Largest search space `exhaustive_scan` accepts.
pub const EXHAUSTIVE_LIMIT: f64 = 1e6;
const Q_MAX: f64 = 20.0;
const Q_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Over,
    Under,
}

impl Direction {
    pub fn default_bounds(self) -> (f64, f64) {
        match self {
            Direction::Over => (1.0, Q_MAX),
            Direction::Under => (1.0 / Q_MAX, 1.0),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Over => "over",
            Direction::Under => "under",
        })
    }
}

/// Attribute name to allowed values; absent attributes are unrestricted.
pub type Subgroup = BTreeMap<String, Vec<String>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub subgroup: Subgroup,
    /// Penalized score (equal to the likelihood-ratio statistic when the
    /// penalty is 0).
    pub score: f64,
    pub q: f64,
    pub direction: Direction,
    #[serde(rename = "n")]
    pub n_matched: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanOptions {
    pub direction: Direction,
    pub restarts: usize,
    pub penalty: f64,
    pub seed: u64,
    /// Quartile-bin numeric columns so they can be scanned too.
    pub bin_numeric: bool,
    /// Restrict the scan to these attributes; empty means every eligible one.
    pub attributes: Vec<String>,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            direction: Direction::Over,
            restarts: 20,
            penalty: 0.0,
            seed: 0,
            bin_numeric: false,
            attributes: Vec::new(),
        }
    }
}

pub fn bernoulli_score(y: &[bool], p: &[f64], q: f64) -> Result<f64> {
    if p.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::InvalidArgument("expected probabilities must lie in (0, 1)".into()));
    }
    if !(q > 0.0) {
        return Err(Error::InvalidArgument(format!("q must be positive, got {q}")));
    }
    Ok(y.iter()
        .zip(p)
        .map(|(&t, &pi)| f64::from(u8::from(t)) * q.ln() - (1.0 - pi + q * pi).ln())
        .sum())
}

/// Sufficient statistics of a record set: positives and a histogram over
/// the distinct expected probabilities.
#[derive(Clone, Debug)]
struct Stats {
    positives: f64,
    count: usize,
    hist: Vec<f64>,
}

impl Stats {
    fn empty(levels: usize) -> Self {
        Self {
            positives: 0.0,
            count: 0,
            hist: vec![0.0; levels],
        }
    }

    fn add(&mut self, other: &Stats) {
        self.positives += other.positives;
        self.count += other.count;
        self.hist.iter_mut().zip(&other.hist).for_each(|(a, b)| *a += b);
    }
}

/// Maximises a function concave in `ln q` over `[lo, hi]` by ternary search.
fn ternary_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo.ln(), hi.ln());
    while b - a > Q_TOL {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if f(m1.exp()) < f(m2.exp()) {
            a = m1;
        } else {
            b = m2;
        }
    }
    // Endpoints first so monotone objectives clamp exactly.
    let mut best = (lo, f(lo));
    for q in [hi, ((a + b) / 2.0).exp()] {
        let v = f(q);
        if v > best.1 {
            best = (q, v);
        }
    }
    best
}

/// Maximising `q` within `bounds` and the score there.
pub fn optimal_q(y: &[bool], p: &[f64], direction: Direction, bounds: Option<(f64, f64)>) -> Result<(f64, f64)> {
    bernoulli_score(y, p, 1.0)?;
    let (lo, hi) = bounds.unwrap_or_else(|| direction.default_bounds());
    if !(lo > 0.0 && lo <= hi) {
        return Err(Error::InvalidArgument(format!("invalid q bounds [{lo}, {hi}]")));
    }
    let pos = y.iter().filter(|&&t| t).count() as f64;
    Ok(ternary_max(
        |q| pos * q.ln() - p.iter().map(|&pi| (1.0 - pi + q * pi).ln()).sum::<f64>(),
        lo,
        hi,
    ))
}

/// Scannable view of a dataset.
struct ScanData {
    names: Vec<String>,
    values: Vec<Vec<String>>,
    /// `codes[a][i]`: value index of record `i` for attribute `a`.
    codes: Vec<Vec<u32>>,
    y: Vec<bool>,
    p: Vec<f64>,
    levels: Vec<f64>,
    level_of: Vec<u32>,
    direction: Direction,
    penalty: f64,
}

fn quartile_bins(v: &[f64]) -> (Vec<String>, Vec<u32>) {
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |u: f64| {
        let pos = u * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(sorted.len() - 1);
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    };
    let mut cuts = vec![q(0.25), q(0.5), q(0.75)];
    cuts.dedup();
    let mut labels = Vec::new();
    for (k, c) in cuts.iter().enumerate() {
        labels.push(if k == 0 {
            format!("<= {c}")
        } else {
            format!("({}, {c}]", cuts[k - 1])
        });
    }
    labels.push(format!("> {}", cuts[cuts.len() - 1]));
    let codes = v.iter().map(|x| cuts.partition_point(|c| c < x) as u32).collect();
    (labels, codes)
}

impl ScanData {
    fn new(ds: &Dataset, y: &[bool], p: &[f64], opts: &ScanOptions) -> Result<Self> {
        let n = ds.n();
        if y.len() != n || p.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: y.len().min(p.len()),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("expected probabilities must be finite".into()));
        }
        if !(opts.penalty >= 0.0) {
            return Err(Error::InvalidArgument(format!("penalty must be nonnegative, got {}", opts.penalty)));
        }
        let mut names = Vec::new();
        let mut values = Vec::new();
        let mut codes = Vec::new();
        for (spec, col) in ds.schema().columns.iter().zip(ds.columns()) {
            if !opts.attributes.is_empty() && !opts.attributes.contains(&spec.name) {
                continue;
            }
            match col {
                Column::Categorical(c) => {
                    names.push(spec.name.clone());
                    values.push(spec.categories.clone().expect("categorical spec"));
                    codes.push(c.clone());
                }
                Column::Numeric(v) if opts.bin_numeric => {
                    let (labels, c) = quartile_bins(v);
                    names.push(spec.name.clone());
                    values.push(labels);
                    codes.push(c);
                }
                Column::Numeric(_) => {}
            }
        }
        for want in &opts.attributes {
            if !names.contains(want) {
                return Err(Error::MissingColumn(want.clone()));
            }
        }
        if names.is_empty() {
            return Err(Error::InvalidArgument("no categorical attribute to scan".into()));
        }
        let clipped: Vec<f64> = p.iter().map(|v| v.clamp(P_CLIP.0, P_CLIP.1)).collect();
        let mut levels = clipped.clone();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        let level_of = clipped
            .iter()
            .map(|v| levels.partition_point(|l| l < v) as u32)
            .collect();
        Ok(Self {
            names,
            values,
            codes,
            y: y.to_vec(),
            p: clipped,
            levels,
            level_of,
            direction: opts.direction,
            penalty: opts.penalty,
        })
    }

    fn attrs(&self) -> usize {
        self.names.len()
    }

    fn score_stats(&self, s: &Stats) -> (f64, f64) {
        let (lo, hi) = self.direction.default_bounds();
        if s.count == 0 {
            return (1.0, 0.0);
        }
        ternary_max(
            |q| {
                s.positives * q.ln()
                    - s.hist
                        .iter()
                        .zip(&self.levels)
                        .filter(|(c, _)| **c > 0.0)
                        .map(|(c, &pi)| c * (1.0 - pi + q * pi).ln())
                        .sum::<f64>()
            },
            lo,
            hi,
        )
    }

    /// Penalty for a selection; `None` entries are unrestricted.
    fn penalty_of(&self, sel: &[Option<Vec<bool>>]) -> f64 {
        let k: usize = sel
            .iter()
            .flatten()
            .map(|m| m.iter().filter(|&&b| b).count())
            .sum();
        if k == 0 {
            0.0
        } else {
            self.penalty * k as f64
        }
    }

    fn matches(&self, sel: &[Option<Vec<bool>>], i: usize, skip: Option<usize>) -> bool {
        sel.iter().enumerate().all(|(a, m)| {
            Some(a) == skip || m.as_ref().is_none_or(|m| m[self.codes[a][i] as usize])
        })
    }

    /// Per-value statistics of attribute `a` among records matching every
    /// other attribute's restriction.
    fn per_value(&self, sel: &[Option<Vec<bool>>], a: usize) -> Vec<Stats> {
        let mut out = vec![Stats::empty(self.levels.len()); self.values[a].len()];
        for i in 0..self.y.len() {
            if !self.matches(sel, i, Some(a)) {
                continue;
            }
            let s = &mut out[self.codes[a][i] as usize];
            s.count += 1;
            s.positives += f64::from(u8::from(self.y[i]));
            s.hist[self.level_of[i] as usize] += 1.0;
        }
        out
    }

    /// Exact penalized score of a selection, recounted from the records.
    fn evaluate(&self, sel: &[Option<Vec<bool>>]) -> (f64, f64, usize) {
        let mut s = Stats::empty(self.levels.len());
        for i in 0..self.y.len() {
            if self.matches(sel, i, None) {
                s.count += 1;
                s.positives += f64::from(u8::from(self.y[i]));
                s.hist[self.level_of[i] as usize] += 1.0;
            }
        }
        let (q, llr) = self.score_stats(&s);
        (llr - self.penalty_of(sel), q, s.count)
    }

    fn subgroup(&self, sel: &[Option<Vec<bool>>]) -> Subgroup {
        let mut out = Subgroup::new();
        for (a, m) in sel.iter().enumerate() {
            if let Some(m) = m {
                let vals = self.values[a]
                    .iter()
                    .zip(m)
                    .filter(|(_, &b)| b)
                    .map(|(v, _)| v.clone())
                    .collect();
                out.insert(self.names[a].clone(), vals);
            }
        }
        out
    }

    fn selection(&self, sub: &Subgroup) -> Result<Vec<Option<Vec<bool>>>> {
        let mut sel = vec![None; self.attrs()];
        for (name, vals) in sub {
            let a = self
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::MissingColumn(name.clone()))?;
            if vals.is_empty() {
                return Err(Error::InvalidArgument(format!("empty value set for `{name}`")));
            }
            let mut m = vec![false; self.values[a].len()];
            for v in vals {
                let k = self.values[a]
                    .iter()
                    .position(|x| x == v)
                    .ok_or_else(|| Error::InvalidArgument(format!("`{v}` is not a value of `{name}`")))?;
                m[k] = true;
            }
            sel[a] = normalize(m);
        }
        Ok(sel)
    }

    /// Best value subset for attribute `a` with the rest fixed. Values are
    /// ranked by their individual maximum-likelihood `q` and only prefixes
    /// are scored; the current choice is kept unless a prefix beats it.
    fn best_for_attribute(&self, sel: &mut [Option<Vec<bool>>], a: usize) -> f64 {
        let stats = self.per_value(sel, a);
        let (lo, hi) = (1.0 / Q_MAX, Q_MAX);
        let q_mle: Vec<f64> = stats
            .iter()
            .map(|s| {
                if s.count == 0 {
                    return 1.0;
                }
                ternary_max(
                    |q| {
                        s.positives * q.ln()
                            - s.hist
                                .iter()
                                .zip(&self.levels)
                                .filter(|(c, _)| **c > 0.0)
                                .map(|(c, &pi)| c * (1.0 - pi + q * pi).ln())
                                .sum::<f64>()
                    },
                    lo,
                    hi,
                )
                .0
            })
            .collect();
        let mut order: Vec<usize> = (0..stats.len()).collect();
        order.sort_by(|&x, &y| {
            let c = match self.direction {
                Direction::Over => q_mle[y].total_cmp(&q_mle[x]),
                Direction::Under => q_mle[x].total_cmp(&q_mle[y]),
            };
            c.then(x.cmp(&y))
        });

        let others_penalty = {
            let mut rest = sel.to_vec();
            rest[a] = None;
            self.penalty_of(&rest)
        };
        let value_of = |mask: &Option<Vec<bool>>| -> f64 {
            let mut s = Stats::empty(self.levels.len());
            for (k, st) in stats.iter().enumerate() {
                if mask.as_ref().is_none_or(|m| m[k]) {
                    s.add(st);
                }
            }
            let own = mask.as_ref().map_or(0, |m| m.iter().filter(|&&b| b).count());
            let pen = if own == 0 { 0.0 } else { self.penalty * own as f64 };
            let pen = if others_penalty == 0.0 { pen } else { pen + others_penalty };
            self.score_stats(&s).1 - pen
        };

        let mut best_mask = sel[a].clone();
        let mut best = value_of(&best_mask);
        let mut prefix = vec![false; stats.len()];
        for &k in &order {
            prefix[k] = true;
            let cand = normalize(prefix.clone());
            let v = value_of(&cand);
            if v > best + 1e-12 {
                best = v;
                best_mask = cand;
            }
        }
        sel[a] = best_mask;
        best
    }

    fn ascend(&self, mut sel: Vec<Option<Vec<bool>>>, rng: &mut impl Rng) -> (Vec<Option<Vec<bool>>>, f64) {
        let mut current = self.evaluate(&sel).0;
        let mut attrs: Vec<usize> = (0..self.attrs()).collect();
        for _ in 0..100 {
            attrs.shuffle(rng);
            let start = current;
            for &a in &attrs {
                current = self.best_for_attribute(&mut sel, a);
            }
            if current <= start + 1e-12 {
                break;
            }
        }
        (sel, current)
    }

    fn result(&self, sel: &[Option<Vec<bool>>]) -> ScanResult {
        let (score, q, n) = self.evaluate(sel);
        ScanResult {
            subgroup: self.subgroup(sel),
            score,
            q,
            direction: self.direction,
            n_matched: n,
        }
    }
}

/// A full value set means "unrestricted".
fn normalize(m: Vec<bool>) -> Option<Vec<bool>> {
    if m.iter().all(|&b| b) {
        None
    } else {
        Some(m)
    }
}

fn random_start(data: &ScanData, rng: &mut impl Rng) -> Vec<Option<Vec<bool>>> {
    data.values
        .iter()
        .map(|vals| {
            let mut m: Vec<bool> = vals.iter().map(|_| rng.gen_bool(0.5)).collect();
            if !m.iter().any(|&b| b) {
                let k = rng.gen_range(0..m.len());
                m[k] = true;
            }
            normalize(m)
        })
        .collect()
}

fn description(r: &ScanResult) -> String {
    serde_json::to_string(&r.subgroup).expect("subgroup serializes")
}

/// Conditional-ascent scan with `restarts` seeded starting points (the first
/// is the unrestricted subgroup). The best result by score wins; ties go to
/// the lexicographically smaller subgroup description.
pub fn scan(ds: &Dataset, y: &[bool], p: &[f64], opts: &ScanOptions) -> Result<ScanResult> {
    let data = ScanData::new(ds, y, p, opts)?;
    let restarts = opts.restarts.max(1);
    let results: Vec<ScanResult> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed::rng(seed::derive(opts.seed, &[r as u64]));
            let start = if r == 0 {
                vec![None; data.attrs()]
            } else {
                random_start(&data, &mut rng)
            };
            let (sel, _) = data.ascend(start, &mut rng);
            data.result(&sel)
        })
        .collect();
    Ok(pick_best(results))
}

fn pick_best(results: Vec<ScanResult>) -> ScanResult {
    results
        .into_iter()
        .reduce(|a, b| {
            if b.score > a.score || (b.score == a.score && description(&b) < description(&a)) {
                b
            } else {
                a
            }
        })
        .expect("at least one restart")
}

/// Exact maximiser by enumerating every combination of nonempty value
/// subsets (a full subset meaning unrestricted).
pub fn exhaustive_scan(ds: &Dataset, y: &[bool], p: &[f64], opts: &ScanOptions) -> Result<ScanResult> {
    let data = ScanData::new(ds, y, p, opts)?;
    let sizes: Vec<usize> = data.values.iter().map(Vec::len).collect();
    let space: f64 = sizes.iter().map(|&k| 2f64.powi(k as i32) - 1.0).product();
    if space > EXHAUSTIVE_LIMIT {
        return Err(Error::SearchSpaceTooLarge(space));
    }
    // Aggregate records into cells of the value cross-product.
    let mut cells: BTreeMap<Vec<u32>, Stats> = BTreeMap::new();
    for i in 0..data.y.len() {
        let key: Vec<u32> = (0..data.attrs()).map(|a| data.codes[a][i]).collect();
        let s = cells.entry(key).or_insert_with(|| Stats::empty(data.levels.len()));
        s.count += 1;
        s.positives += f64::from(u8::from(data.y[i]));
        s.hist[data.level_of[i] as usize] += 1.0;
    }
    let cells: Vec<(Vec<u32>, Stats)> = cells.into_iter().collect();
    let mut bits = vec![1u64; sizes.len()];
    let mut best: Option<(f64, Vec<Option<Vec<bool>>>)> = None;
    loop {
        let sel: Vec<Option<Vec<bool>>> = bits
            .iter()
            .zip(&sizes)
            .map(|(&b, &k)| normalize((0..k).map(|v| b >> v & 1 == 1).collect()))
            .collect();
        let mut s = Stats::empty(data.levels.len());
        for (key, st) in &cells {
            if sel
                .iter()
                .zip(key)
                .all(|(m, &c)| m.as_ref().is_none_or(|m| m[c as usize]))
            {
                s.add(st);
            }
        }
        let v = data.score_stats(&s).1 - data.penalty_of(&sel);
        if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
            best = Some((v, sel));
        }
        // Next combination, odometer style.
        let mut a = 0;
        loop {
            if a == bits.len() {
                let (_, sel) = best.expect("nonempty space");
                return Ok(data.result(&sel));
            }
            bits[a] += 1;
            if bits[a] < 1 << sizes[a] {
                break;
            }
            bits[a] = 1;
            a += 1;
        }
    }
}

/// Score of a given subgroup, recomputed from the raw records.
pub fn score_subgroup(
    ds: &Dataset,
    y: &[bool],
    p: &[f64],
    subgroup: &Subgroup,
    opts: &ScanOptions,
) -> Result<ScanResult> {
    let data = ScanData::new(ds, y, p, opts)?;
    let sel = data.selection(subgroup)?;
    let (ys, ps): (Vec<bool>, Vec<f64>) = (0..data.y.len())
        .filter(|&i| data.matches(&sel, i, None))
        .map(|i| (data.y[i], data.p[i]))
        .unzip();
    let (q, llr) = if ys.is_empty() {
        (1.0, 0.0)
    } else {
        optimal_q(&ys, &ps, opts.direction, None)?
    };
    Ok(ScanResult {
        subgroup: data.subgroup(&sel),
        score: llr - data.penalty_of(&sel),
        q,
        direction: opts.direction,
        n_matched: ys.len(),
    })
}
