use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{bootstrap, DecisionTree, TreeParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Columns per split; `None` means `ceil(sqrt(d))`.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 16,
            min_samples_leaf: 1,
            features_per_split: None,
            seed: 0,
        }
    }
}

/// Bagged CART ensemble for binary labels (`true` = favorable).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<DecisionTree>,
    pub params: ForestParams,
}

/// A fitted forest together with out-of-bag scores for its training rows.
#[derive(Clone, Debug)]
pub struct ForestFit {
    pub forest: Forest,
    /// Fraction of out-of-bag trees voting favorable. Rows that were in
    /// every bootstrap fall back to the full-forest score.
    pub oob_scores: Vec<f64>,
}

impl Forest {
    pub fn fit(x: &Matrix, y: &[bool], params: ForestParams) -> Result<Forest> {
        Self::fit_with_oob(x, y, params).map(|f| f.forest)
    }

    /// Each tree sees a bootstrap of `n` draws and `ceil(sqrt(d))` random
    /// columns per split. Tree `t` draws from a stream derived from
    /// `(seed, t)`, so parallel fitting does not change the result.
    pub fn fit_with_oob(x: &Matrix, y: &[bool], params: ForestParams) -> Result<ForestFit> {
        let n = x.rows();
        if n == 0 {
            return Err(Error::InvalidArgument("cannot fit a forest on zero samples".into()));
        }
        if y.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: y.len(),
            });
        }
        if params.n_trees == 0 {
            return Err(Error::InvalidArgument("n_trees must be at least 1".into()));
        }
        let d = x.cols();
        let m = params
            .features_per_split
            .unwrap_or_else(|| ((d as f64).sqrt().ceil() as usize).max(1));
        let yi: Vec<i32> = y.iter().map(|&b| i32::from(b)).collect();
        let fitted: Vec<(DecisionTree, Vec<bool>)> = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let stream = seed::derive(params.seed, &[t as u64]);
                let mut rng = seed::rng(stream);
                let rows = bootstrap(&mut rng, n);
                let mut in_bag = vec![false; n];
                for &r in &rows {
                    in_bag[r] = true;
                }
                let tree = DecisionTree::fit_rows(
                    x,
                    &yi,
                    Some(rows),
                    TreeParams {
                        max_depth: params.max_depth,
                        min_samples_leaf: params.min_samples_leaf,
                        features_per_split: Some(m),
                        seed: seed::derive(stream, &[1]),
                    },
                )?;
                Ok((tree, in_bag))
            })
            .collect::<Result<_>>()?;

        let mut votes = vec![0usize; n];
        let mut counts = vec![0usize; n];
        for (tree, in_bag) in &fitted {
            for i in 0..n {
                if !in_bag[i] {
                    counts[i] += 1;
                    votes[i] += usize::from(tree.predict_row(x.row(i)) == 1);
                }
            }
        }
        let forest = Forest {
            trees: fitted.into_iter().map(|(t, _)| t).collect(),
            params,
        };
        let oob_scores = (0..n)
            .map(|i| {
                if counts[i] > 0 {
                    votes[i] as f64 / counts[i] as f64
                } else {
                    forest.score_row(x.row(i))
                }
            })
            .collect();
        Ok(ForestFit { forest, oob_scores })
    }

    fn score_row(&self, row: &[f64]) -> f64 {
        let fav = self
            .trees
            .iter()
            .filter(|t| t.predict_row(row) == 1)
            .count();
        fav as f64 / self.trees.len() as f64
    }

    /// Majority vote (ties go to unfavorable) and the favorable vote share.
    pub fn predict(&self, x: &Matrix) -> Result<(Vec<bool>, Vec<f64>)> {
        let d = self.trees[0].n_features;
        x.check_cols(d)?;
        let scores: Vec<f64> = (0..x.rows())
            .into_par_iter()
            .map(|i| self.score_row(x.row(i)))
            .collect();
        let labels = scores.iter().map(|&s| s > 0.5).collect();
        Ok((labels, scores))
    }
}
