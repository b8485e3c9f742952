use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use fairaudit::audit::{render, run_audit, run_scan, write_outputs, AuditBundle, AuditConfig, Format, SYNTH_NAME};
use fairaudit::data::{load_registered, ColumnKind, Dataset, LoadOptions, Registered, SynthConfig};
use fairaudit::mitigate::Method;
use fairaudit::Error;

/// Bias-mitigation audit: baseline, mitigation, treatment-change cohorts.
#[derive(Parser)]
#[command(name = "audit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full audit and write bundle.json, report.md and rules.txt.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Biased baseline and bias scan only; prints JSON.
    Scan {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Render a saved bundle.
    Report {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value = "md")]
        format: String,
    },
    /// Dataset utilities.
    Data {
        #[command(subcommand)]
        command: DataCommand,
    },
}

#[derive(Subcommand)]
enum DataCommand {
    /// Print a schema and label summary as JSON.
    Describe {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        path: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct Overrides {
    /// Dataset name (adult, bank, utrecht, synth_biased).
    #[arg(long)]
    dataset: Option<String>,
    /// CSV path for a registered dataset.
    #[arg(long)]
    path: Option<PathBuf>,
    /// Comma-separated method list.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn apply(self, cfg: &mut AuditConfig) -> Result<(), Error> {
        if let Some(d) = self.dataset {
            cfg.dataset.name = d;
        }
        if let Some(p) = self.path {
            cfg.dataset.path = Some(p);
        }
        if let Some(ms) = self.methods {
            cfg.methods = ms.iter().map(|m| m.trim().parse::<Method>()).collect::<Result<_, _>>()?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(o) = self.out {
            cfg.out = Some(o);
        }
        cfg.validate()
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::AllMethodsFailed(_) => 3,
        _ => 2,
    }
}

fn load_config(path: &Path, overrides: Overrides) -> Result<AuditConfig, Error> {
    let mut cfg = AuditConfig::from_file(path).map_err(|e| match e {
        Error::Io { .. } | Error::Json(_) => Error::Config(e.to_string()),
        other => other,
    })?;
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

fn describe(ds: &Dataset, name: &str) -> serde_json::Value {
    let schema = ds.schema();
    let mask = ds.group_mask().unwrap_or_default();
    let columns: Vec<_> = schema
        .columns
        .iter()
        .map(|c| match (&c.kind, &c.categories) {
            (ColumnKind::Numeric, _) => json!({"name": c.name, "kind": "numeric"}),
            (_, cats) => json!({
                "name": c.name,
                "kind": "categorical",
                "levels": cats.as_ref().map_or(0, Vec::len),
            }),
        })
        .collect();
    let fav = ds.labels().iter().filter(|&&v| v).count();
    json!({
        "dataset": name,
        "n": ds.n(),
        "label": schema.label_column,
        "favorable": schema.favorable_value,
        "favorable_rate": fav as f64 / ds.n().max(1) as f64,
        "protected": schema.protected,
        "n_privileged": mask.iter().filter(|&&m| m).count(),
        "columns": columns,
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = load_config(&config, overrides)?;
            let bundle = run_audit(&cfg)?;
            match &cfg.out {
                Some(dir) => {
                    for p in write_outputs(&bundle, dir)? {
                        eprintln!("wrote {}", p.display());
                    }
                    print!("{}", render(&bundle, Format::Markdown));
                }
                None => println!("{}", bundle.to_json()),
            }
            let failed: Vec<_> = bundle.methods.iter().filter(|m| !m.succeeded()).collect();
            for m in failed {
                eprintln!("method {} failed in {} fold(s)", m.method, m.failures.len());
            }
        }
        Command::Scan { config, overrides } => {
            let cfg = load_config(&config, overrides)?;
            let scans = run_scan(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&scans)?);
        }
        Command::Report { bundle, format } => {
            let format: Format = format.parse()?;
            let text = std::fs::read_to_string(&bundle).map_err(|source| Error::Io { path: bundle, source })?;
            let b = AuditBundle::from_json(&text)?;
            print!("{}", render(&b, format));
        }
        Command::Data {
            command: DataCommand::Describe { dataset, path },
        } => {
            let ds = if dataset == SYNTH_NAME {
                SynthConfig::new(4000, 0.3, 0).planted().generate()?
            } else {
                let name: Registered = dataset.parse()?;
                let path = path.ok_or_else(|| Error::Config("--path is required for registered datasets".into()))?;
                load_registered(name, &path, &LoadOptions::default())?
            };
            println!("{}", serde_json::to_string_pretty(&describe(&ds, &dataset))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
