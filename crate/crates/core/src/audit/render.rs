use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::AuditBundle;
use crate::error::{Error, Result};
use crate::meta::COHORT_HEADERS;
use crate::metrics::{AggregateReport, MeanStd, Metric};

pub const TABLE1_HEADERS: [&str; 6] = [
    "Model",
    "Accuracy",
    "Disparate Impact (1.0)",
    "Average Odds (0.0)",
    "Equal Opportunity (0.0)",
    "Statistical Parity (0.0)",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Markdown,
    Rules,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "md" | "markdown" => Ok(Format::Markdown),
            "rules" => Ok(Format::Rules),
            other => Err(Error::Config(format!("unknown format `{other}` (expected json, md or rules)"))),
        }
    }
}

impl Format {
    pub fn file_name(self) -> &'static str {
        match self {
            Format::Json => "bundle.json",
            Format::Markdown => "report.md",
            Format::Rules => "rules.txt",
        }
    }
}

/// A ratio as `83.1%/±1.7` (both in percentage points).
pub fn cell_percent(m: &MeanStd) -> String {
    format!("{:.1}%/±{:.1}", 100.0 * m.mean, 100.0 * m.std)
}

/// A metric as `0.55/±.12`.
pub fn cell_metric(m: &MeanStd) -> String {
    let std = format!("{:.2}", m.std);
    let std = std.strip_prefix('0').unwrap_or(&std);
    format!("{:.2}/±{std}", m.mean)
}

fn row(cells: &[String]) -> String {
    format!("| {} |\n", cells.join(" | "))
}

fn header(cols: &[&str]) -> String {
    let mut s = row(&cols.iter().map(|c| c.to_string()).collect::<Vec<_>>());
    s.push_str(&row(&vec!["---".to_string(); cols.len()]));
    s
}

fn table1_row(name: &str, agg: Option<&AggregateReport>, width: usize) -> String {
    let mut cells = vec![name.to_string()];
    match agg {
        Some(a) => {
            cells.push(cell_percent(&a.accuracy));
            for m in [
                Metric::DisparateImpact,
                Metric::AverageOdds,
                Metric::EqualOpportunity,
                Metric::StatisticalParity,
            ] {
                cells.push(cell_metric(&a.get(m)));
            }
        }
        None => cells.extend(std::iter::repeat_n("n/a".to_string(), width - 1)),
    }
    row(&cells)
}

pub fn render_markdown(b: &AuditBundle) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# Audit of {} (n = {}, k = {}, seed = {})\n",
        b.dataset.name, b.dataset.n, b.k, b.provenance.config.seed
    );
    s.push_str("## Fairness metrics\n\n");
    s.push_str(&header(&TABLE1_HEADERS));
    s.push_str(&table1_row("Biased", b.biased.aggregate.as_ref(), TABLE1_HEADERS.len()));
    for m in &b.methods {
        s.push_str(&table1_row(m.method.label(), m.aggregate.as_ref(), TABLE1_HEADERS.len()));
    }
    s.push_str("\n## Treatment-change cohorts\n\n");
    s.push_str(&header(&COHORT_HEADERS));
    for m in &b.methods {
        let mut cells = vec![m.method.label().to_string()];
        match &m.cohort {
            Some(c) => cells.extend(c.columns().iter().map(cell_percent)),
            None => cells.extend(std::iter::repeat_n("n/a".to_string(), COHORT_HEADERS.len() - 1)),
        }
        s.push_str(&row(&cells));
    }
    let failures: Vec<String> = b
        .methods
        .iter()
        .flat_map(|m| {
            m.failures
                .iter()
                .map(move |f| format!("- {} fold {}: {}", m.method.label(), f.fold, f.error))
        })
        .collect();
    if !failures.is_empty() {
        s.push_str("\n## Failures\n\n");
        for f in failures {
            s.push_str(&f);
            s.push('\n');
        }
    }
    s.push_str("\n## Bias scan\n\n");
    s.push_str(&header(&["Fold", "Subgroup", "Score", "q", "n"]));
    for sc in &b.scans {
        let cells = match (&sc.result, &sc.error) {
            (Some(r), _) => vec![
                sc.fold.to_string(),
                serde_json::to_string(&r.subgroup).expect("subgroup serializes"),
                format!("{:.3}", r.score),
                format!("{:.3}", r.q),
                r.n_matched.to_string(),
            ],
            (None, e) => vec![
                sc.fold.to_string(),
                format!("error: {}", e.as_deref().unwrap_or("unknown")),
                String::new(),
                String::new(),
                String::new(),
            ],
        };
        s.push_str(&row(&cells));
    }
    s
}

/// Negative-cohort rules of every method and fold.
pub fn render_rules(b: &AuditBundle) -> String {
    let mut s = String::new();
    for m in &b.methods {
        for f in &m.folds {
            let _ = writeln!(s, "# {} fold {}", m.method.label(), f.fold);
            s.push_str(&f.rules.to_text());
        }
    }
    s
}

pub fn render(b: &AuditBundle, format: Format) -> String {
    match format {
        Format::Json => b.to_json(),
        Format::Markdown => render_markdown(b),
        Format::Rules => render_rules(b),
    }
}

/// Writes `bundle.json`, `report.md` and `rules.txt` into `dir`.
pub fn write_outputs(b: &AuditBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    let io = |path: &Path, source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut written = Vec::new();
    for f in [Format::Json, Format::Markdown, Format::Rules] {
        let path = dir.join(f.file_name());
        std::fs::write(&path, render(b, f)).map_err(|e| io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
