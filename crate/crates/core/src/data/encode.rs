use serde::{Deserialize, Serialize};

use super::dataset::{Column, Dataset};
use crate::matrix::Matrix;

/// Numeric design matrix with one-hot expanded categoricals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedMatrix {
    pub x: Matrix,
    /// `name` for numeric columns, `name_value` for one-hot columns.
    pub column_names: Vec<String>,
    /// Schema column index each encoded column came from.
    pub source: Vec<usize>,
}

/// One-hot encodes every feature column. The column layout depends only on
/// the schema, so any two subsets of one dataset encode compatibly.
pub fn encode(ds: &Dataset) -> EncodedMatrix {
    encode_excluding(ds, &[])
}

/// As [`encode`], skipping the named schema columns.
pub fn encode_excluding(ds: &Dataset, exclude: &[&str]) -> EncodedMatrix {
    let schema = ds.schema();
    let mut column_names = Vec::new();
    let mut source = Vec::new();
    for (j, spec) in schema.columns.iter().enumerate() {
        if exclude.contains(&spec.name.as_str()) {
            continue;
        }
        match &spec.categories {
            None => {
                column_names.push(spec.name.clone());
                source.push(j);
            }
            Some(cats) => {
                for c in cats {
                    column_names.push(format!("{}_{}", spec.name, c));
                    source.push(j);
                }
            }
        }
    }

    let n = ds.n();
    let d = column_names.len();
    let mut x = Matrix::zeros(n, d);
    let mut offset = 0;
    for (j, spec) in schema.columns.iter().enumerate() {
        if exclude.contains(&spec.name.as_str()) {
            continue;
        }
        match &ds.columns()[j] {
            Column::Numeric(v) => {
                for (i, &val) in v.iter().enumerate() {
                    x.set(i, offset, val);
                }
                offset += 1;
            }
            Column::Categorical(codes) => {
                for (i, &c) in codes.iter().enumerate() {
                    x.set(i, offset + c as usize, 1.0);
                }
                offset += spec.categories.as_ref().map_or(0, Vec::len);
            }
        }
    }
    EncodedMatrix {
        x,
        column_names,
        source,
    }
}
