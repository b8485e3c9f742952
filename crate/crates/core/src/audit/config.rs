use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    load_registered, split_indices, Dataset, LoadOptions, ProtectedSpec, Registered, SynthConfig,
};
use crate::error::{Error, Result};
use crate::learners::ForestParams;
use crate::meta::MetaParams;
use crate::mitigate::{Method, MethodParams};
use crate::scan::ScanOptions;
use crate::seed;

pub const SYNTH_NAME: &str = "synth_biased";

/// Which data to audit. `name` is a registered dataset (`adult`, `bank`,
/// `utrecht`, read from `path`) or `synth_biased` (generated from `n`,
/// `bias_gap` and `plant`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub favorable: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protected: Option<ProtectedSpec>,
    /// Label-stratified subsample of this many records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample: Option<usize>,
    #[serde(default = "default_synth_n")]
    pub n: usize,
    #[serde(default = "default_bias_gap")]
    pub bias_gap: f64,
    #[serde(default = "default_true")]
    pub plant: bool,
}

fn default_synth_n() -> usize {
    4000
}

fn default_bias_gap() -> f64 {
    0.3
}

fn default_true() -> bool {
    true
}

fn default_k() -> usize {
    5
}

impl DatasetConfig {
    pub fn registered(name: Registered, path: impl Into<PathBuf>) -> Self {
        Self {
            path: Some(path.into()),
            ..Self::named(&name.to_string())
        }
    }

    pub fn synth(n: usize, bias_gap: f64) -> Self {
        Self {
            n,
            bias_gap,
            ..Self::named(SYNTH_NAME)
        }
    }

    fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            path: None,
            label: None,
            favorable: None,
            protected: None,
            subsample: None,
            n: default_synth_n(),
            bias_gap: default_bias_gap(),
            plant: true,
        }
    }

    /// Loads (or generates) the dataset and applies overrides and the
    /// optional subsample. Synthetic data is drawn from `seed`.
    pub fn load(&self, seed: u64) -> Result<Dataset> {
        let ds = if self.name == SYNTH_NAME {
            let mut cfg = SynthConfig::new(self.n, self.bias_gap, seed::derive_str(seed, &[], "synth"));
            cfg.plant = self.plant;
            let ds = cfg.generate()?;
            match &self.protected {
                Some(p) => ds.with_protected(p.clone())?,
                None => ds,
            }
        } else {
            let name: Registered = self.name.parse()?;
            let path = self
                .path
                .as_deref()
                .ok_or_else(|| Error::Config(format!("dataset `{}` needs a `path`", self.name)))?;
            let opts = LoadOptions {
                label: self.label.clone(),
                favorable: self.favorable.clone(),
                protected: self.protected.clone(),
            };
            load_registered(name, path, &opts)?
        };
        match self.subsample {
            Some(m) if m < ds.n() => {
                let (idx, _) = split_indices(ds.labels(), m as f64 / ds.n() as f64, seed::derive_str(seed, &[], "subsample"))?;
                let mut idx = idx;
                idx.sort_unstable();
                Ok(ds.subset(&idx))
            }
            _ => Ok(ds),
        }
    }
}

/// Full audit configuration, read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub dataset: DatasetConfig,
    pub methods: Vec<Method>,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Root of every random stream in the audit.
    pub seed: u64,
    #[serde(default)]
    pub params: MethodParams,
    /// Base-model hyperparameters. The `seed` field is ignored: each fold's
    /// forest seed is derived from the audit seed.
    #[serde(default)]
    pub forest: ForestParams,
    #[serde(default)]
    pub meta: MetaParams,
    /// Scan settings. The `seed` field is ignored as for `forest`.
    #[serde(default)]
    pub scan: ScanOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl AuditConfig {
    pub fn new(dataset: DatasetConfig, methods: Vec<Method>, seed: u64) -> Self {
        Self {
            dataset,
            methods,
            k: default_k(),
            seed,
            params: MethodParams::default(),
            forest: ForestParams::default(),
            meta: MetaParams::default(),
            scan: ScanOptions::default(),
            out: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: AuditConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative dataset and output paths are resolved
    /// against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.dataset.path.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.out.as_mut() {
            resolve(p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("k must be at least 2, got {}", self.k)));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        let mut seen = HashSet::new();
        for m in &self.methods {
            if !seen.insert(*m) {
                return Err(Error::Config(format!("method `{m}` is listed twice")));
            }
        }
        if self.dataset.name != SYNTH_NAME {
            self.dataset.name.parse::<Registered>()?;
        }
        if self.dataset.subsample == Some(0) {
            return Err(Error::Config("subsample must be positive".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
