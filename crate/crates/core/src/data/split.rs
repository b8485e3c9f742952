use std::collections::BTreeMap;
use std::fmt::Debug;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed;

/// `k` disjoint folds covering `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
}

impl SplitPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// (train, test) indices for fold `i`; both ascending.
    pub fn train_test(&self, i: usize) -> (Vec<usize>, Vec<usize>) {
        let test = self.folds[i].clone();
        let mut train: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        train.sort_unstable();
        (train, test)
    }
}

/// Seeded shuffle of each stratum, strata in label order.
fn shuffled_strata<L: Ord + Copy>(labels: &[L], seed: u64) -> BTreeMap<L, Vec<usize>> {
    let mut strata: BTreeMap<L, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        strata.entry(l).or_default().push(i);
    }
    let mut rng = seed::rng(seed);
    for members in strata.values_mut() {
        members.shuffle(&mut rng);
    }
    strata
}

/// Stratified folds over arbitrary labels. Fold sizes differ by at most one,
/// and each stratum's count in fold `f` is the floor or ceiling of its exact
/// share `n_s * |f| / n`, so per-fold label frequencies stay within `1/|f|`
/// of the global ones.
pub fn stratified_folds<L: Ord + Copy>(labels: &[L], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    let n = labels.len();
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the number of records ({n})"
        )));
    }
    let strata: Vec<Vec<usize>> = shuffled_strata(labels, seed).into_values().collect();
    let sizes: Vec<usize> = (0..k).map(|f| n / k + usize::from(f < n % k)).collect();
    let quota = controlled_rounding(&strata.iter().map(Vec::len).collect::<Vec<_>>(), &sizes, n);
    let mut folds = vec![Vec::new(); k];
    for (members, q) in strata.iter().zip(&quota) {
        let mut at = 0;
        for (f, &c) in q.iter().enumerate() {
            folds[f].extend_from_slice(&members[at..at + c]);
            at += c;
        }
    }
    for f in folds.iter_mut() {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Integer table with row sums `rows`, column sums `cols` and every cell the
/// floor or ceiling of `rows[s] * cols[f] / n`. The fractional table has
/// these margins, so an integral one exists; it is found as a unit-capacity
/// flow over the cells with a nonzero remainder.
fn controlled_rounding(rows: &[usize], cols: &[usize], n: usize) -> Vec<Vec<usize>> {
    let mut table: Vec<Vec<usize>> = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| r * c / n).collect())
        .collect();
    let open: Vec<Vec<bool>> = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| (r * c) % n != 0).collect())
        .collect();
    let mut row_need: Vec<usize> = rows.iter().zip(&table).map(|(r, t)| r - t.iter().sum::<usize>()).collect();
    let mut col_need: Vec<usize> = (0..cols.len())
        .map(|f| cols[f] - table.iter().map(|t| t[f]).sum::<usize>())
        .collect();
    let mut used = vec![vec![false; cols.len()]; rows.len()];
    // Augmenting paths alternate row -> unused open cell -> column, and
    // column -> used cell -> row.
    while let Some(start) = (0..rows.len()).find(|&s| row_need[s] > 0) {
        let mut prev_row: Vec<Option<usize>> = vec![None; cols.len()];
        let mut via_col: Vec<Option<usize>> = vec![None; rows.len()];
        let mut seen_row = vec![false; rows.len()];
        let mut queue = std::collections::VecDeque::from([start]);
        seen_row[start] = true;
        let mut end = None;
        'search: while let Some(s) = queue.pop_front() {
            for f in 0..cols.len() {
                if open[s][f] && !used[s][f] && prev_row[f].is_none() {
                    prev_row[f] = Some(s);
                    if col_need[f] > 0 {
                        end = Some(f);
                        break 'search;
                    }
                    for s2 in 0..rows.len() {
                        if used[s2][f] && !seen_row[s2] {
                            seen_row[s2] = true;
                            via_col[s2] = Some(f);
                            queue.push_back(s2);
                        }
                    }
                }
            }
        }
        let Some(mut f) = end else {
            unreachable!("controlled rounding always exists for consistent margins");
        };
        col_need[f] -= 1;
        loop {
            let s = prev_row[f].unwrap();
            used[s][f] = true;
            if s == start {
                break;
            }
            let back = via_col[s].unwrap();
            used[s][back] = false;
            f = back;
        }
        row_need[start] -= 1;
    }
    for (t, u) in table.iter_mut().zip(&used) {
        for (c, &b) in t.iter_mut().zip(u) {
            *c += usize::from(b);
        }
    }
    table
}

/// Stratified k-fold plan over the dataset's labels.
pub fn kfold(ds: &Dataset, k: usize, seed: u64) -> Result<SplitPlan> {
    Ok(SplitPlan {
        folds: stratified_folds(ds.labels(), k, seed)?,
        seed,
    })
}

/// Stratified (train, test) index split. The train size is
/// `round(fraction * n)`, apportioned across strata by largest remainder.
pub fn split_indices<L: Ord + Copy + Debug>(
    labels: &[L],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let strata = shuffled_strata(labels, seed);
    for (l, members) in &strata {
        if members.len() < 2 {
            return Err(Error::SmallStratum {
                label: format!("{l:?}"),
                count: members.len(),
            });
        }
    }
    let n = labels.len();
    let target = (train_fraction * n as f64).round() as usize;
    let exact: Vec<f64> = strata
        .values()
        .map(|m| train_fraction * m.len() as f64)
        .collect();
    let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..quota.len()).collect();
    // Largest remainder first; ties by stratum order.
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut remaining = target.saturating_sub(quota.iter().sum());
    for &s in order.iter().cycle().take(order.len() * 2) {
        if remaining == 0 {
            break;
        }
        let size = strata.values().nth(s).unwrap().len();
        if quota[s] < size {
            quota[s] += 1;
            remaining -= 1;
        }
    }
    let mut train = Vec::with_capacity(target);
    let mut test = Vec::with_capacity(n - target);
    for (members, q) in strata.values().zip(&quota) {
        train.extend_from_slice(&members[..*q]);
        test.extend_from_slice(&members[*q..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Stratified random split of a dataset into (train, test).
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(ds.labels(), train_fraction, seed)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sizes(folds: &[Vec<usize>]) -> Vec<usize> {
        folds.iter().map(Vec::len).collect()
    }

    #[test]
    fn ten_into_five() {
        let labels: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        assert_eq!(sizes(&stratified_folds(&labels, 5, 1).unwrap()), vec![2; 5]);
    }

    #[test]
    fn eleven_into_five() {
        let labels: Vec<bool> = (0..11).map(|i| i % 3 == 0).collect();
        let mut s = sizes(&stratified_folds(&labels, 5, 1).unwrap());
        s.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(s, vec![3, 2, 2, 2, 2]);
    }

    #[test]
    fn k_larger_than_n() {
        assert!(stratified_folds(&[true, false], 3, 0).is_err());
        assert!(stratified_folds(&[true, false], 1, 0).is_err());
    }

    #[test]
    fn split_67_33() {
        let labels: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        let (tr, te) = split_indices(&labels, 0.67, 7).unwrap();
        assert_eq!((tr.len(), te.len()), (67, 33));
        assert_eq!(split_indices(&labels, 0.67, 7).unwrap(), (tr, te));
    }

    #[test]
    fn three_rows_with_singleton_stratum() {
        // Enumerating every stratified 2/1 split of [1,1,0]: the lone 0 can
        // never land on both sides, so the stratum error is the contract.
        let err = split_indices(&[true, true, false], 0.67, 0).unwrap_err();
        assert!(matches!(err, Error::SmallStratum { count: 1, .. }));
    }

    proptest! {
        #[test]
        fn folds_partition_and_stratify(
            labels in proptest::collection::vec(0u8..3, 6..120),
            k in 2usize..6,
            seed in any::<u64>(),
        ) {
            prop_assume!(k <= labels.len());
            let folds = stratified_folds(&labels, k, seed).unwrap();
            let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            let s = sizes(&folds);
            prop_assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
            for class in 0u8..3 {
                let global = labels.iter().filter(|&&l| l == class).count() as f64 / labels.len() as f64;
                for f in &folds {
                    let local = f.iter().filter(|&&i| labels[i] == class).count() as f64 / f.len() as f64;
                    prop_assert!((local - global).abs() <= 1.0 / f.len() as f64 + 1e-12);
                }
            }
        }

        #[test]
        fn split_is_disjoint_and_exhaustive(
            labels in proptest::collection::vec(any::<bool>(), 4..200),
            frac in 0.1f64..0.9,
            seed in any::<u64>(),
        ) {
            let pos = labels.iter().filter(|&&l| l).count();
            prop_assume!(pos >= 2 && labels.len() - pos >= 2);
            let (tr, te) = split_indices(&labels, frac, seed).unwrap();
            prop_assert_eq!(tr.len(), (frac * labels.len() as f64).round() as usize);
            let mut all = tr.clone();
            all.extend(&te);
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        }
    }
}
