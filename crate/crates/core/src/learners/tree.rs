use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Columns examined per split; `None` means all of them.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 6,
            min_samples_leaf: 20,
            features_per_split: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Training counts per class, aligned with `DecisionTree::classes`.
        counts: Vec<usize>,
        class: i32,
    },
}

/// CART classifier over integer class labels. Node 0 is the root; `left`
/// holds samples with `value <= threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    /// Sorted distinct training classes.
    pub classes: Vec<i32>,
    pub n_features: usize,
    pub params: TreeParams,
}

pub(crate) fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

/// Weighted impurity decrease `n·G(parent) − n_l·G(left) − n_r·G(right)`.
pub(crate) fn gini_decrease(parent: &[usize], left: &[usize]) -> f64 {
    let n: usize = parent.iter().sum();
    let nl: usize = left.iter().sum();
    let right: Vec<usize> = parent.iter().zip(left).map(|(p, l)| p - l).collect();
    n as f64 * gini(parent, n) - nl as f64 * gini(left, nl) - (n - nl) as f64 * gini(&right, n - nl)
}

/// Leaf prediction: the most frequent class, ties to the smallest class.
fn majority(counts: &[usize], classes: &[i32]) -> i32 {
    let mut best = 0;
    for k in 1..counts.len() {
        if counts[k] > counts[best] {
            best = k;
        }
    }
    classes[best]
}

const MIN_GAIN: f64 = 1e-12;

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    n_classes: usize,
    classes: &'a [i32],
    params: TreeParams,
    nodes: Vec<Node>,
    rng: rand_chacha::ChaCha8Rng,
    // scratch
    pairs: Vec<(f64, usize)>,
}

#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    fn best_split(&mut self, idx: &[usize], parent: &[usize]) -> Option<Candidate> {
        let d = self.x.cols();
        let features: Vec<usize> = match self.params.features_per_split {
            Some(m) if m < d => {
                let mut f = sample(&mut self.rng, d, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        };
        let min_leaf = self.params.min_samples_leaf.max(1);
        let n = idx.len();
        let mut best: Option<Candidate> = None;
        let mut left = vec![0usize; self.n_classes];
        for &f in &features {
            self.pairs.clear();
            self.pairs
                .extend(idx.iter().map(|&i| (self.x.get(i, f), self.y[i])));
            self.pairs
                .sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
            if self.pairs[0].0 == self.pairs[n - 1].0 {
                continue;
            }
            left.iter_mut().for_each(|c| *c = 0);
            for s in 0..n - 1 {
                left[self.pairs[s].1] += 1;
                let (v, next) = (self.pairs[s].0, self.pairs[s + 1].0);
                if v == next {
                    continue;
                }
                let nl = s + 1;
                if nl < min_leaf || n - nl < min_leaf {
                    continue;
                }
                let gain = gini_decrease(parent, &left);
                let better = match best {
                    None => gain > MIN_GAIN,
                    Some(b) => gain > b.gain + MIN_GAIN,
                };
                if better {
                    best = Some(Candidate {
                        feature: f,
                        threshold: 0.5 * (v + next),
                        gain,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&idx);
        let id = self.nodes.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let can_split = depth < self.params.max_depth
            && !pure
            && idx.len() >= 2 * self.params.min_samples_leaf.max(1);
        let split = if can_split {
            self.best_split(&idx, &counts)
        } else {
            None
        };
        match split {
            None => {
                let class = majority(&counts, self.classes);
                self.nodes.push(Node::Leaf { counts, class });
                id
            }
            Some(c) => {
                self.nodes.push(Node::Leaf {
                    counts: Vec::new(),
                    class: 0,
                });
                let (l, r): (Vec<usize>, Vec<usize>) = idx
                    .into_iter()
                    .partition(|&i| self.x.get(i, c.feature) <= c.threshold);
                let left = self.build(l, depth + 1);
                let right = self.build(r, depth + 1);
                self.nodes[id] = Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left,
                    right,
                };
                id
            }
        }
    }
}

impl DecisionTree {
    /// Greedy CART with Gini impurity. Candidate thresholds are midpoints of
    /// consecutive distinct values; ties between equal gains keep the lowest
    /// column index, then the lowest threshold.
    pub fn fit(x: &Matrix, y: &[i32], params: TreeParams) -> Result<Self> {
        Self::fit_rows(x, y, None, params)
    }

    /// Fits on the given row indices (duplicates allowed, as in bootstraps).
    pub fn fit_rows(x: &Matrix, y: &[i32], rows: Option<Vec<usize>>, params: TreeParams) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(Error::Dimension {
                expected: x.rows(),
                got: y.len(),
            });
        }
        let idx = rows.unwrap_or_else(|| (0..x.rows()).collect());
        if idx.is_empty() {
            return Err(Error::InvalidArgument("cannot fit a tree on zero samples".into()));
        }
        let mut classes: Vec<i32> = idx.iter().map(|&i| y[i]).collect();
        classes.sort_unstable();
        classes.dedup();
        let code: Vec<usize> = y
            .iter()
            .map(|v| classes.binary_search(v).unwrap_or(0))
            .collect();
        let mut b = Builder {
            x,
            y: &code,
            n_classes: classes.len(),
            classes: &classes,
            params,
            nodes: Vec::new(),
            rng: seed::rng(params.seed),
            pairs: Vec::with_capacity(idx.len()),
        };
        b.build(idx, 0);
        let nodes = b.nodes;
        Ok(DecisionTree {
            nodes,
            classes,
            n_features: x.cols(),
            params,
        })
    }

    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { .. } => return at,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> i32 {
        match &self.nodes[self.leaf_index(row)] {
            Node::Leaf { class, .. } => *class,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Labels and the leaf's training frequency of the predicted class.
    pub fn predict(&self, x: &Matrix) -> Result<(Vec<i32>, Vec<f64>)> {
        x.check_cols(self.n_features)?;
        let mut labels = Vec::with_capacity(x.rows());
        let mut scores = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            match &self.nodes[self.leaf_index(x.row(i))] {
                Node::Leaf { counts, class } => {
                    let k = self.classes.binary_search(class).unwrap_or(0);
                    let total: usize = counts.iter().sum();
                    labels.push(*class);
                    scores.push(counts[k] as f64 / total.max(1) as f64);
                }
                Node::Split { .. } => unreachable!(),
            }
        }
        Ok((labels, scores))
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// Draws `n` indices with replacement.
pub(crate) fn bootstrap<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}
