use serde::{Deserialize, Serialize};

use crate::data::{encode_excluding, Dataset};
use crate::error::{Error, Result};
use crate::learners::Standardizer;
use crate::matrix::Matrix;

/// One-hot encoding without the protected attribute, z-scored with
/// statistics from the fitting split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub column_names: Vec<String>,
    pub excluded: String,
    pub standardizer: Standardizer,
}

impl FeatureMap {
    pub fn fit(ds: &Dataset) -> (FeatureMap, Matrix) {
        let excluded = ds.schema().protected.attribute.clone();
        let enc = encode_excluding(ds, &[excluded.as_str()]);
        let standardizer = Standardizer::fit(&enc.x);
        let x = standardizer.transform(&enc.x).expect("fitted on the same matrix");
        (
            FeatureMap {
                column_names: enc.column_names,
                excluded,
                standardizer,
            },
            x,
        )
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Matrix> {
        let enc = encode_excluding(ds, &[self.excluded.as_str()]);
        if enc.column_names != self.column_names {
            return Err(Error::Schema(format!(
                "encoded columns differ from the fitted layout ({} vs {})",
                enc.column_names.len(),
                self.column_names.len()
            )));
        }
        self.standardizer.transform(&enc.x)
    }
}
