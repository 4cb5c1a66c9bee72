//! Argument parsing and command dispatch for the `cape` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use cape_core::{CapeError, OdeModel};
use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    self, DiagnoseParams, FitOdeParams, IsoclineParams, OdeFitReport, WhatIfParams, DEFAULT_RESAMPLES,
};
use crate::errors::{exit_code, ErrorBody, EXIT_INTERNAL, EXIT_OK};
use crate::report::{DiagnosisReport, OutputFormat, Render};

#[derive(Debug, Parser)]
#[command(name = "cape", version, about = "Capability coupling diagnostics for model families")]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
    /// Write the output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct TableArg {
    /// Base table (CSV/JSON) or data directory; defaults to CAPE_DATA_DIR or the bundled panel.
    pub table: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    match s.split_once(',') {
        Some((a, b)) if !a.trim().is_empty() && !b.trim().is_empty() => Ok((a.trim().to_string(), b.trim().to_string())),
        _ => Err(format!("expected two comma-separated benchmark ids, got {s:?}")),
    }
}

fn parse_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect()
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coupling, phases, critical scale, cohort geometry and width rerun.
    Diagnose {
        #[command(flatten)]
        table: TableArg,
        #[arg(long)]
        family: Option<String>,
        #[arg(long, value_parser = parse_pair, default_value = "hellaswag,truthfulqa_mc1")]
        pair: (String, String),
        /// Random when omitted; the chosen seed is printed to stderr.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
        resamples: usize,
    },
    /// Sparse ODE discovery on one or more families.
    FitOde {
        #[command(flatten)]
        table: TableArg,
        #[arg(long, default_value = "pythia")]
        families: String,
        #[arg(long, default_value = "hellaswag,truthfulqa_mc1,arc,winogrande,mmlu")]
        benchmarks: String,
        #[arg(long, default_value_t = cape_core::ode::DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Also write the bare model JSON here.
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// Integrate a fitted model across a holdout family.
    Predict {
        /// Model JSON from `fit-ode` (bare model or full report).
        model: PathBuf,
        /// Table holding the holdout family.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        family: String,
        /// Fit the polynomial baseline on these families (comma-separated); empty to skip.
        #[arg(long, default_value = "pythia")]
        baseline_families: String,
        #[arg(long, default_value_t = 2)]
        degree: usize,
    },
    /// Isocline sign prediction per family.
    Isocline {
        #[command(flatten)]
        table: TableArg,
        #[arg(long)]
        boundary: Option<String>,
        #[arg(long, value_parser = parse_pair, default_value = "hellaswag,truthfulqa_mc1")]
        pair: (String, String),
        /// Comma-separated; all families when omitted.
        #[arg(long)]
        families: Option<String>,
        /// Orientation override: does a model above the curve predict positive coupling?
        #[arg(long)]
        above_positive: Option<bool>,
    },
    /// Frontier regression, h-field and leave-one-lab-out error.
    Frontier {
        /// Frontier table or data directory.
        table: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// What-if rerun under a curation offset, width change or scale extension.
    Whatif {
        #[command(flatten)]
        table: TableArg,
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        h_offset: f64,
        #[arg(long, default_value_t = 1.0)]
        width_mult: f64,
        #[arg(long, allow_negative_numbers = true)]
        scale_extend: Option<f64>,
        #[arg(long, value_parser = parse_pair, default_value = "hellaswag,truthfulqa_mc1")]
        pair: (String, String),
        #[arg(long, default_value_t = cape_core::ode::DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Serve the JSON API.
    Serve {
        #[command(flatten)]
        table: TableArg,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

fn seed_or_random(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = crate::api::resolve_seed(None);
        eprintln!("seed: {s}");
        s
    })
}

fn load_model(path: &Path) -> Result<OdeModel, CapeError> {
    let text = analysis::read_text(path)?;
    OdeModel::from_json(&text).or_else(|first| match serde_json::from_str::<OdeFitReport>(&text) {
        Ok(r) => OdeModel::from_json(&serde_json::to_string(&r.model).expect("model serializes")),
        Err(_) => Err(first),
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), CapeError> {
    std::fs::write(path, text).map_err(|e| CapeError::Io(format!("{}: {e}", path.display())))
}

/// Runs one command and returns its rendered output.
pub fn execute(cli: &Cli) -> Result<String, CapeError> {
    let f = cli.format;
    match &cli.command {
        Command::Diagnose { table, family, pair, seed, resamples } => {
            let panel = analysis::load_panel(table.table.as_deref())?;
            let params = DiagnoseParams { family: family.clone(), pair: pair.clone(), seed: *seed, resamples: *resamples };
            let seed = seed_or_random(*seed);
            Ok(DiagnosisReport::new(analysis::diagnose(&panel, &params, seed)?).render(f))
        }
        Command::FitOde { table, families, benchmarks, threshold, model_out } => {
            let panel = analysis::load_panel(table.table.as_deref())?;
            let params = FitOdeParams { families: parse_list(families), benchmarks: parse_list(benchmarks), threshold: *threshold };
            let rep = analysis::fit_ode(&panel, &params)?;
            if let Some(p) = model_out {
                write_file(p, &rep.model.to_json())?;
            }
            Ok(rep.render(f))
        }
        Command::Predict { model, table, family, baseline_families, degree } => {
            let model = load_model(model)?;
            let panel = analysis::load_panel(table.as_deref())?;
            if !panel.families().contains(family) {
                return Err(CapeError::UnknownFamily(family.clone()));
            }
            let holdout = panel.family_series(family)?;
            let names = parse_list(baseline_families);
            let train = if names.is_empty() {
                Vec::new()
            } else {
                let source = analysis::load_panel(None)?;
                let from = |n: &String| if panel.families().contains(n) { panel.family_series(n) } else { source.family_series(n) };
                names.iter().map(from).collect::<Result<Vec<_>, _>>()?
            };
            let refs: Vec<_> = train.iter().collect();
            Ok(analysis::predict(&model, &holdout, &refs, *degree)?.render(f))
        }
        Command::Isocline { table, boundary, pair, families, above_positive } => {
            let panel = analysis::load_panel(table.table.as_deref())?;
            let params = IsoclineParams {
                boundary_model: boundary.clone(),
                pair: pair.clone(),
                families: families.as_deref().map(parse_list).unwrap_or_default(),
                above_is_positive: *above_positive,
            };
            Ok(analysis::isocline(&panel, &params)?.render(f))
        }
        Command::Frontier { table, seed } => {
            let records = analysis::load_frontier(table.as_deref())?;
            Ok(analysis::frontier(&records, seed.unwrap_or(analysis::DEFAULT_SEED))?.render(f))
        }
        Command::Whatif { table, family, h_offset, width_mult, scale_extend, pair, threshold } => {
            let panel = analysis::load_panel(table.table.as_deref())?;
            let params = WhatIfParams {
                family: family.clone(),
                h_offset: *h_offset,
                width_mult: *width_mult,
                scale_extend: *scale_extend,
                pair: pair.clone(),
                threshold: *threshold,
            };
            Ok(analysis::whatif(&panel, &params)?.render(f))
        }
        Command::Serve { table, host, port } => {
            let panel = analysis::load_panel(table.table.as_deref())?;
            let addr: std::net::SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| CapeError::InvalidArgument(format!("address {host}:{port}: {e}")))?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| CapeError::Io(e.to_string()))?;
            rt.block_on(crate::api::serve(panel, addr)).map_err(|e| CapeError::Io(e.to_string()))?;
            Ok(String::new())
        }
    }
}

/// Full CLI behaviour: parse, execute, write, and map errors to an exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code() as u8;
        }
    };
    match execute(&cli) {
        Ok(text) => {
            let written = match &cli.out {
                Some(p) => write_file(p, &text),
                None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CapeError::Io(e.to_string())),
            };
            match written {
                Ok(()) => EXIT_OK,
                Err(e) => {
                    eprintln!("error[{}]: {e}", e.class());
                    EXIT_INTERNAL
                }
            }
        }
        Err(e) => {
            if cli.format == OutputFormat::Json {
                eprintln!("{}", serde_json::to_string(&ErrorBody::from(&e)).expect("error body serializes"));
            } else {
                eprintln!("error[{}]: {e}", e.class());
            }
            exit_code(&e)
        }
    }
}
