use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dataset::{ColumnKind, Dataset, ProtectedSpec, UNKNOWN};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Registered {
    Adult,
    Bank,
    Utrecht,
}

impl FromStr for Registered {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adult" => Ok(Registered::Adult),
            "bank" => Ok(Registered::Bank),
            "utrecht" => Ok(Registered::Utrecht),
            other => Err(Error::Config(format!("unknown dataset `{other}`"))),
        }
    }
}

impl fmt::Display for Registered {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Registered::Adult => "adult",
            Registered::Bank => "bank",
            Registered::Utrecht => "utrecht",
        })
    }
}

/// Overrides for the registry defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadOptions {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub favorable: Option<String>,
    #[serde(default)]
    pub protected: Option<ProtectedSpec>,
}

struct RegistrySpec {
    columns: &'static [(&'static str, ColumnKind)],
    label: &'static str,
    favorable: &'static str,
    unfavorable: &'static str,
    /// Cell text treated as missing (categoricals only).
    missing: Option<&'static str>,
    dedup: bool,
    /// Raw label text -> canonical label text.
    label_aliases: &'static [(&'static str, &'static str)],
}

use ColumnKind::{Categorical as C, Numeric as N};

const ADULT: RegistrySpec = RegistrySpec {
    columns: &[
        ("age", N),
        ("workclass", C),
        ("fnlwgt", N),
        ("education", C),
        ("education-num", N),
        ("Marital-status", C),
        ("occupation", C),
        ("relationship", C),
        ("race", C),
        ("sex", C),
        ("capital-gain", N),
        ("capital-loss", N),
        ("hours-per-week", N),
        ("native-country", C),
    ],
    label: "income",
    favorable: ">50K",
    unfavorable: "<=50K",
    missing: Some("?"),
    dedup: true,
    label_aliases: &[(">50K.", ">50K"), ("<=50K.", "<=50K")],
};

const BANK: RegistrySpec = RegistrySpec {
    columns: &[
        ("age", N),
        ("job", C),
        ("marital", C),
        ("education", C),
        ("default", C),
        ("balance", N),
        ("housing", C),
        ("loan", C),
        ("contact", C),
        ("day", N),
        ("month", C),
        ("duration", N),
        ("campaign", N),
        ("pdays", N),
        ("previous", N),
        ("poutcome", C),
    ],
    label: "y",
    favorable: "yes",
    unfavorable: "no",
    missing: None,
    dedup: false,
    label_aliases: &[],
};

const UTRECHT: RegistrySpec = RegistrySpec {
    columns: &[
        ("gender", C),
        ("age", N),
        ("nationality", C),
        ("sport", C),
        ("ind-university_grade", N),
        ("ind-debateclub", C),
        ("ind-programming_exp", C),
        ("ind-international_exp", C),
        ("ind-entrepeneur_exp", C),
        ("ind-languages", N),
        ("ind-exact_study", C),
        ("ind-degree", C),
        ("company", C),
    ],
    label: "decision",
    favorable: "hired",
    unfavorable: "rejected",
    missing: None,
    dedup: false,
    label_aliases: &[
        ("True", "hired"),
        ("true", "hired"),
        ("1", "hired"),
        ("False", "rejected"),
        ("false", "rejected"),
        ("0", "rejected"),
    ],
};

impl Registered {
    fn spec(self) -> &'static RegistrySpec {
        match self {
            Registered::Adult => &ADULT,
            Registered::Bank => &BANK,
            Registered::Utrecht => &UTRECHT,
        }
    }

    pub fn default_protected(self) -> ProtectedSpec {
        match self {
            Registered::Adult => ProtectedSpec::values("race", ["White"]),
            Registered::Bank => ProtectedSpec::at_least("age", 25.0),
            Registered::Utrecht => ProtectedSpec::values("gender", ["male"]),
        }
    }
}

/// Header matching ignores case and treats `_`, `.` and `-` alike.
fn normalize(h: &str) -> String {
    h.trim()
        .trim_matches('"')
        .to_ascii_lowercase()
        .replace(['_', '.'], "-")
}

fn sniff_delimiter(path: &Path) -> Result<u8> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    let commas = first.matches(',').count();
    let semis = first.matches(';').count();
    Ok(if semis > commas { b';' } else { b',' })
}

/// Loads one of the registered datasets from a CSV with a header row and
/// applies its preprocessing (adult: "?" becomes "unknown", exact duplicate
/// rows dropped; first occurrence kept).
pub fn load_registered(name: Registered, path: &Path, opts: &LoadOptions) -> Result<Dataset> {
    let spec = name.spec();
    let delimiter = sniff_delimiter(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(normalize).collect();
    let find = |name: &str| -> Result<usize> {
        let key = normalize(name);
        headers
            .iter()
            .position(|h| *h == key)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };

    let label_name = opts.label.as_deref().unwrap_or(spec.label);
    let label_idx = find(label_name)?;
    let mut feature_cols: Vec<(String, ColumnKind, usize)> = Vec::new();
    for &(col, kind) in spec.columns {
        if normalize(col) == normalize(label_name) {
            continue;
        }
        feature_cols.push((col.to_string(), kind, find(col)?));
    }
    if opts.label.is_some() && normalize(label_name) != normalize(spec.label) {
        // The default label becomes an ordinary categorical feature.
        if let Ok(j) = find(spec.label) {
            feature_cols.push((spec.label.to_string(), ColumnKind::Categorical, j));
        }
    }

    let mut seen: HashSet<Vec<String>> = HashSet::new();
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let mut cells: Vec<String> = record.iter().map(str::to_string).collect();
        if let Some(missing) = spec.missing {
            for c in cells.iter_mut() {
                if c == missing {
                    *c = UNKNOWN.to_string();
                }
            }
        }
        if spec.dedup && !seen.insert(cells.clone()) {
            continue;
        }
        let label = cells[label_idx].clone();
        let label = spec
            .label_aliases
            .iter()
            .find(|(raw, _)| *raw == label)
            .map_or(label, |(_, canon)| canon.to_string());
        raw_labels.push(label);
        rows.push(feature_cols.iter().map(|(_, _, j)| cells[*j].clone()).collect());
    }

    let favorable = opts.favorable.as_deref().unwrap_or(spec.favorable).to_string();
    let mut distinct: Vec<&str> = raw_labels.iter().map(String::as_str).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() != 2 || !distinct.contains(&favorable.as_str()) {
        return Err(Error::NonBinaryLabel {
            column: label_name.to_string(),
            found: distinct.len(),
        });
    }
    let unfavorable = distinct
        .iter()
        .find(|v| **v != favorable)
        .map(|v| v.to_string())
        .unwrap_or_else(|| spec.unfavorable.to_string());
    let labels: Vec<bool> = raw_labels.iter().map(|l| *l == favorable).collect();

    let protected = opts.protected.clone().unwrap_or_else(|| name.default_protected());
    let columns: Vec<(String, ColumnKind)> =
        feature_cols.iter().map(|(n, k, _)| (n.clone(), *k)).collect();
    Dataset::from_text(
        &columns,
        &rows,
        labels,
        label_name,
        &favorable,
        &unfavorable,
        protected,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const ADULT_HEADER: &str = "age,workclass,fnlwgt,education,education-num,marital-status,occupation,relationship,race,sex,capital-gain,capital-loss,hours-per-week,native-country,income";

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn adult_rows() -> String {
        [
            ADULT_HEADER,
            "39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, Male, 2174, 0, 40, United-States, <=50K",
            "50, ?, 83311, Bachelors, 13, Married-civ-spouse, Exec-managerial, Husband, Black, Male, 0, 0, 13, ?, >50K",
            "39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, Male, 2174, 0, 40, United-States, <=50K",
        ]
        .join("\n")
    }

    #[test]
    fn adult_drops_duplicates_and_fills_unknown() {
        let f = write(&adult_rows());
        let ds = load_registered(Registered::Adult, f.path(), &LoadOptions::default()).unwrap();
        assert_eq!(ds.n(), 2);
        let wc = ds.schema().column_index("workclass").unwrap();
        assert_eq!(ds.cell_text(1, wc), "unknown");
        assert_eq!(ds.schema().favorable_value, ">50K");
        assert_eq!(ds.labels(), &[false, true]);
        assert!(ds.schema().column_index("Marital-status").is_some());
        for i in 0..ds.n() {
            for j in 0..ds.schema().columns.len() {
                assert!(!ds.cell_text(i, j).is_empty());
            }
        }
    }

    #[test]
    fn missing_registered_column() {
        let f = write("age,income\n30,>50K\n40,<=50K\n");
        let err = load_registered(Registered::Adult, f.path(), &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(_)));
    }

    #[test]
    fn non_binary_label() {
        let mut text = adult_rows();
        text.push_str("\n20, Private, 1000, HS-grad, 9, Never-married, Sales, Own-child, White, Female, 0, 0, 20, United-States, maybe");
        let f = write(&text);
        let err = load_registered(Registered::Adult, f.path(), &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NonBinaryLabel { found: 3, .. }));
    }

    #[test]
    fn bank_semicolons_and_age_rule() {
        let text = "\"age\";\"job\";\"marital\";\"education\";\"default\";\"balance\";\"housing\";\"loan\";\"contact\";\"day\";\"month\";\"duration\";\"campaign\";\"pdays\";\"previous\";\"poutcome\";\"y\"\n\
30;\"admin.\";\"single\";\"secondary\";\"no\";100;\"yes\";\"no\";\"cellular\";5;\"may\";200;1;-1;0;\"unknown\";\"yes\"\n\
22;\"student\";\"single\";\"tertiary\";\"no\";0;\"no\";\"no\";\"cellular\";6;\"may\";100;2;-1;0;\"unknown\";\"no\"\n";
        let f = write(text);
        let ds = load_registered(Registered::Bank, f.path(), &LoadOptions::default()).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.schema().protected.attribute, "age");
        assert_eq!(ds.group_mask().unwrap(), vec![true, false]);
    }

    #[test]
    fn utrecht_boolean_decision() {
        let text = "Id,gender,age,nationality,sport,ind-university_grade,ind-debateclub,ind-programming_exp,ind-international_exp,ind-entrepeneur_exp,ind-languages,ind-exact_study,ind-degree,company,decision\n\
1,female,25,Dutch,Rugby,68,False,True,False,False,1,True,bachelor,A,True\n\
2,male,30,German,Swimming,55,True,False,True,False,0,False,master,C,False\n";
        let f = write(text);
        let ds = load_registered(Registered::Utrecht, f.path(), &LoadOptions::default()).unwrap();
        assert_eq!(ds.labels(), &[true, false]);
        assert_eq!(ds.schema().favorable_value, "hired");
        assert_eq!(ds.group_mask().unwrap(), vec![false, true]);
    }

    #[test]
    fn protected_default_and_override() {
        let f = write(&adult_rows());
        let ds = load_registered(Registered::Adult, f.path(), &LoadOptions::default()).unwrap();
        assert_eq!(ds.group_mask().unwrap(), vec![true, false]);
        // Both remaining rows are Male, so {Male} is not a proper subset.
        let opts = LoadOptions {
            protected: Some(ProtectedSpec::values("sex", ["Male"])),
            ..Default::default()
        };
        let err = load_registered(Registered::Adult, f.path(), &opts).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }
}
