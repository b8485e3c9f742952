use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Replacement token for missing categorical cells.
pub const UNKNOWN: &str = "unknown";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Sorted, deduplicated category list; `None` for numeric columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

/// Which values of the protected attribute make a record privileged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Privileged {
    /// Categorical membership.
    Values(BTreeSet<String>),
    /// Numeric threshold: privileged iff value >= threshold.
    AtLeast(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtectedSpec {
    pub attribute: String,
    pub privileged: Privileged,
}

impl ProtectedSpec {
    pub fn values<I, S>(attribute: &str, values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            attribute: attribute.to_string(),
            privileged: Privileged::Values(values.into_iter().map(Into::into).collect()),
        }
    }

    pub fn at_least(attribute: &str, threshold: f64) -> Self {
        Self {
            attribute: attribute.to_string(),
            privileged: Privileged::AtLeast(threshold),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    /// Feature columns (the label is not listed here).
    pub columns: Vec<ColumnSpec>,
    pub label_column: String,
    pub favorable_value: String,
    pub unfavorable_value: String,
    pub protected: ProtectedSpec,
}

impl Schema {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn protected_index(&self) -> Result<usize> {
        self.column_index(&self.protected.attribute)
            .ok_or_else(|| Error::MissingColumn(self.protected.attribute.clone()))
    }
}

/// Typed storage for one feature column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Column {
    Numeric(Vec<f64>),
    /// Codes indexing into the schema's category list.
    Categorical(Vec<u32>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, idx: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(idx.iter().map(|&i| v[i]).collect()),
            Column::Categorical(v) => Column::Categorical(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// Tabular records with a binary label. `labels()[i]` is true when record
/// `i` carries the favorable value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: Arc<Schema>,
    columns: Vec<Column>,
    labels: Vec<bool>,
}

impl Dataset {
    /// Validated constructor for a full dataset: both label values must be
    /// present and the privileged set must split the observed population.
    pub fn new(schema: Schema, columns: Vec<Column>, labels: Vec<bool>) -> Result<Self> {
        let ds = Self::from_parts(Arc::new(schema), columns, labels)?;
        if ds.n() == 0 {
            return Err(Error::InvalidArgument("dataset has no records".into()));
        }
        let fav = ds.labels.iter().filter(|&&l| l).count();
        if fav == 0 || fav == ds.n() {
            return Err(Error::NonBinaryLabel {
                column: ds.schema.label_column.clone(),
                found: 1,
            });
        }
        let mask = ds.group_mask()?;
        let privileged = mask.iter().filter(|&&m| m).count();
        if privileged == 0 || privileged == mask.len() {
            return Err(Error::Schema(format!(
                "privileged values of `{}` must be a nonempty proper subset of the observed values",
                ds.schema.protected.attribute
            )));
        }
        Ok(ds)
    }

    /// Structural checks only; used for subsets, which may legitimately be
    /// single-label or single-group.
    pub(crate) fn from_parts(
        schema: Arc<Schema>,
        columns: Vec<Column>,
        labels: Vec<bool>,
    ) -> Result<Self> {
        if columns.len() != schema.columns.len() {
            return Err(Error::Dimension {
                expected: schema.columns.len(),
                got: columns.len(),
            });
        }
        let n = labels.len();
        for (spec, col) in schema.columns.iter().zip(&columns) {
            if col.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: col.len(),
                });
            }
            match (spec.kind, col) {
                (ColumnKind::Numeric, Column::Numeric(v)) => {
                    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                        return Err(Error::BadValue {
                            column: spec.name.clone(),
                            row: i,
                            value: v[i].to_string(),
                        });
                    }
                }
                (ColumnKind::Categorical, Column::Categorical(codes)) => {
                    let m = spec.categories.as_ref().map_or(0, Vec::len) as u32;
                    if let Some(i) = codes.iter().position(|&c| c >= m) {
                        return Err(Error::BadValue {
                            column: spec.name.clone(),
                            row: i,
                            value: codes[i].to_string(),
                        });
                    }
                }
                _ => {
                    return Err(Error::Schema(format!(
                        "column `{}` storage does not match its kind",
                        spec.name
                    )))
                }
            }
        }
        if schema.column_index(&schema.protected.attribute).is_none() {
            return Err(Error::MissingColumn(schema.protected.attribute.clone()));
        }
        Ok(Self {
            schema,
            columns,
            labels,
        })
    }

    /// Builds a dataset from textual cells. Categories are collected from
    /// the data (sorted, deduplicated); empty categorical cells become
    /// [`UNKNOWN`]; numeric cells that do not parse are errors.
    pub fn from_text(
        columns: &[(String, ColumnKind)],
        rows: &[Vec<String>],
        labels: Vec<bool>,
        label_column: &str,
        favorable_value: &str,
        unfavorable_value: &str,
        protected: ProtectedSpec,
    ) -> Result<Self> {
        let mut specs = Vec::with_capacity(columns.len());
        let mut stored = Vec::with_capacity(columns.len());
        for (j, (name, kind)) in columns.iter().enumerate() {
            match kind {
                ColumnKind::Numeric => {
                    let mut v = Vec::with_capacity(rows.len());
                    for (i, r) in rows.iter().enumerate() {
                        let cell = r[j].trim();
                        let x: f64 = cell.parse().map_err(|_| Error::BadValue {
                            column: name.clone(),
                            row: i,
                            value: cell.to_string(),
                        })?;
                        if !x.is_finite() {
                            return Err(Error::BadValue {
                                column: name.clone(),
                                row: i,
                                value: cell.to_string(),
                            });
                        }
                        v.push(x);
                    }
                    specs.push(ColumnSpec {
                        name: name.clone(),
                        kind: ColumnKind::Numeric,
                        categories: None,
                    });
                    stored.push(Column::Numeric(v));
                }
                ColumnKind::Categorical => {
                    let cell = |r: &Vec<String>| -> String {
                        let c = r[j].trim();
                        if c.is_empty() {
                            UNKNOWN.to_string()
                        } else {
                            c.to_string()
                        }
                    };
                    let cats: BTreeSet<String> = rows.iter().map(cell).collect();
                    let cats: Vec<String> = cats.into_iter().collect();
                    let lookup: BTreeMap<&str, u32> = cats
                        .iter()
                        .enumerate()
                        .map(|(k, c)| (c.as_str(), k as u32))
                        .collect();
                    let codes = rows.iter().map(|r| lookup[cell(r).as_str()]).collect();
                    specs.push(ColumnSpec {
                        name: name.clone(),
                        kind: ColumnKind::Categorical,
                        categories: Some(cats),
                    });
                    stored.push(Column::Categorical(codes));
                }
            }
        }
        let schema = Schema {
            columns: specs,
            label_column: label_column.to_string(),
            favorable_value: favorable_value.to_string(),
            unfavorable_value: unfavorable_value.to_string(),
            protected,
        };
        Dataset::new(schema, stored, labels)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.schema.column_index(name).map(|j| &self.columns[j])
    }

    /// Ground truth; `true` means favorable.
    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    /// Textual label value of record `i`.
    pub fn label_text(&self, i: usize) -> &str {
        if self.labels[i] {
            &self.schema.favorable_value
        } else {
            &self.schema.unfavorable_value
        }
    }

    /// Cell `(i, j)` rendered as text.
    pub fn cell_text(&self, i: usize, j: usize) -> String {
        match &self.columns[j] {
            Column::Numeric(v) => v[i].to_string(),
            Column::Categorical(c) => {
                self.schema.columns[j].categories.as_ref().expect("categorical spec")[c[i] as usize]
                    .clone()
            }
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            schema: Arc::clone(&self.schema),
            columns: self.columns.iter().map(|c| c.select(idx)).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Per-record privileged flag.
    pub fn group_mask(&self) -> Result<Vec<bool>> {
        let j = self.schema.protected_index()?;
        let spec = &self.schema.columns[j];
        let mask = match (&self.schema.protected.privileged, &self.columns[j]) {
            (Privileged::Values(set), Column::Categorical(codes)) => {
                let cats = spec.categories.as_ref().expect("categorical spec");
                let flags: Vec<bool> = cats.iter().map(|c| set.contains(c)).collect();
                codes.iter().map(|&c| flags[c as usize]).collect()
            }
            (Privileged::AtLeast(t), Column::Numeric(v)) => v.iter().map(|x| x >= t).collect(),
            (Privileged::Values(set), Column::Numeric(v)) => {
                let set: Vec<f64> = set
                    .iter()
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|_| Error::Schema(format!("privileged value `{s}` is not numeric")))
                    })
                    .collect::<Result<_>>()?;
                v.iter().map(|x| set.contains(x)).collect()
            }
            (Privileged::AtLeast(_), Column::Categorical(_)) => {
                return Err(Error::Schema(format!(
                    "threshold privilege rule on categorical column `{}`",
                    spec.name
                )))
            }
        };
        Ok(mask)
    }

    /// Replaces one numeric column's values (used by feature repair).
    pub(crate) fn with_numeric(&self, j: usize, values: Vec<f64>) -> Result<Dataset> {
        if !matches!(self.columns[j], Column::Numeric(_)) || values.len() != self.n() {
            return Err(Error::InvalidArgument(format!(
                "column {} cannot take {} numeric values",
                j,
                values.len()
            )));
        }
        let mut columns = self.columns.clone();
        columns[j] = Column::Numeric(values);
        Ok(Dataset {
            schema: Arc::clone(&self.schema),
            columns,
            labels: self.labels.clone(),
        })
    }

    /// Same schema (so the same category lists), different protected spec.
    pub fn with_protected(&self, protected: ProtectedSpec) -> Result<Dataset> {
        let mut schema = (*self.schema).clone();
        schema.protected = protected;
        let ds = Dataset::from_parts(Arc::new(schema), self.columns.clone(), self.labels.clone())?;
        ds.group_mask()?;
        Ok(ds)
    }
}
