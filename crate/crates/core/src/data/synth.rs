use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{ColumnKind, Dataset, ProtectedSpec};
use crate::error::{Error, Result};
use crate::seed;

pub const SYNTH_GROUPS: [&str; 2] = ["a", "b"];
pub const SYNTH_REGIONS: [&str; 4] = ["east", "north", "south", "west"];
pub const SYNTH_SECTORS: [&str; 3] = ["public", "retail", "tech"];

/// Two-group biased fixture.
///
/// Group `a` is privileged. `P(y | a) = 0.5 + gap/2` and
/// `P(y | b) = 0.5 - gap/2`, so the label-level statistical parity
/// difference is `-gap` in expectation. Features: `score` (label signal),
/// `proxy` (group signal), `noise`, and categoricals `region`, `sector`.
/// With `plant` set, records in `region = north & sector = retail` have
/// their favorable probability doubled (capped at 0.95).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub bias_gap: f64,
    pub seed: u64,
    #[serde(default)]
    pub plant: bool,
}

impl SynthConfig {
    pub fn new(n: usize, bias_gap: f64, seed: u64) -> Self {
        Self {
            n,
            bias_gap,
            seed,
            plant: false,
        }
    }

    pub fn planted(mut self) -> Self {
        self.plant = true;
        self
    }

    /// The dataset plus each record's generating probability before any
    /// planted uplift (the "expected" outcome rate).
    pub fn generate_with_base_rates(&self) -> Result<(Dataset, Vec<f64>)> {
        if self.n < 20 {
            return Err(Error::InvalidArgument(format!("n must be at least 20, got {}", self.n)));
        }
        if !(0.0..=1.0).contains(&self.bias_gap) {
            return Err(Error::InvalidArgument(format!(
                "bias gap must lie in [0, 1], got {}",
                self.bias_gap
            )));
        }
        let p_priv = 0.5 + self.bias_gap / 2.0;
        let p_unpriv = 0.5 - self.bias_gap / 2.0;

        let mut rng = seed::rng(self.seed);
        let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
        let columns = [
            ("group".to_string(), ColumnKind::Categorical),
            ("score".to_string(), ColumnKind::Numeric),
            ("proxy".to_string(), ColumnKind::Numeric),
            ("noise".to_string(), ColumnKind::Numeric),
            ("region".to_string(), ColumnKind::Categorical),
            ("sector".to_string(), ColumnKind::Categorical),
        ];
        let mut rows = Vec::with_capacity(self.n);
        let mut labels = Vec::with_capacity(self.n);
        let mut base = Vec::with_capacity(self.n);
        for i in 0..self.n {
            // Alternate groups so both are always populated.
            let privileged = if i < 2 { i == 0 } else { rng.gen_bool(0.5) };
            let region = SYNTH_REGIONS[rng.gen_range(0..SYNTH_REGIONS.len())];
            let sector = SYNTH_SECTORS[rng.gen_range(0..SYNTH_SECTORS.len())];
            let p = if privileged { p_priv } else { p_unpriv };
            let p_eff = if self.plant && region == "north" && sector == "retail" {
                (2.0 * p).min(0.95)
            } else {
                p
            };
            let y = if i < 2 { i == 0 } else { rng.gen_bool(p_eff) };
            let score = 1.2 * f64::from(u8::from(y)) + std_normal.sample(&mut rng);
            let proxy = 0.8 * f64::from(u8::from(privileged)) + std_normal.sample(&mut rng);
            let noise: f64 = rng.gen();
            rows.push(vec![
                SYNTH_GROUPS[usize::from(!privileged)].to_string(),
                format!("{score:.6}"),
                format!("{proxy:.6}"),
                format!("{noise:.6}"),
                region.to_string(),
                sector.to_string(),
            ]);
            labels.push(y);
            base.push(p);
        }
        let ds = Dataset::from_text(
            &columns,
            &rows,
            labels,
            "outcome",
            "1",
            "0",
            ProtectedSpec::values("group", ["a"]),
        )?;
        Ok((ds, base))
    }

    pub fn generate(&self) -> Result<Dataset> {
        self.generate_with_base_rates().map(|(ds, _)| ds)
    }
}

/// Biased two-group dataset; see [`SynthConfig`].
pub fn synth_biased(n: usize, bias_gap: f64, seed: u64) -> Result<Dataset> {
    SynthConfig::new(n, bias_gap, seed).generate()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label_spd(ds: &Dataset) -> f64 {
        let mask = ds.group_mask().unwrap();
        let rate = |g: bool| {
            let (fav, tot) = ds
                .labels()
                .iter()
                .zip(&mask)
                .filter(|(_, &m)| m == g)
                .fold((0usize, 0usize), |(f, t), (&y, _)| (f + usize::from(y), t + 1));
            fav as f64 / tot as f64
        };
        rate(false) - rate(true)
    }

    #[test]
    fn zero_gap_is_fair() {
        let ds = synth_biased(10_000, 0.0, 3).unwrap();
        assert!(label_spd(&ds).abs() < 0.05);
    }

    #[test]
    fn gap_recovered() {
        let ds = synth_biased(10_000, 0.3, 11).unwrap();
        let spd = label_spd(&ds);
        assert!((spd + 0.3).abs() < 0.03, "spd {spd}");
    }

    #[test]
    fn deterministic() {
        let a = serde_json::to_vec(&synth_biased(500, 0.2, 5).unwrap()).unwrap();
        let b = serde_json::to_vec(&synth_biased(500, 0.2, 5).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(synth_biased(10, 0.1, 0).is_err());
        assert!(synth_biased(100, 1.5, 0).is_err());
    }

    #[test]
    fn full_gap_is_feasible() {
        let ds = synth_biased(200, 1.0, 0).unwrap();
        assert!((label_spd(&ds) + 1.0).abs() < 0.02);
    }
}
