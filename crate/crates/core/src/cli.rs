//! Command-line front end: CSV ingestion, configuration merging and the
//! `fit`, `select`, `simulate` and `summarize` workflows.
//!
//! Every output file starts with the effective configuration as `#`
//! comment lines, and a sibling `.meta.toml` holds the same configuration.
//! Feeding that file back through `--config` (or `rerun --meta`)
//! reproduces the output byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bootstrap::{BootstrapSpec, Mechanism, DEFAULT_MAX_REDRAWS};
use crate::criteria::{BiasConstantMode, CriterionId};
use crate::rng::{derive, Stream};
use crate::selection::{best_subset_many, nested_scan_many, SelectionResult, SubsetReport};
use crate::simulation::{
    format_sig6, monte_carlo, risk_curve_to_csv, tables_to_tsv, IdentificationTable,
    SimulationConfig,
};
use crate::tobit::{fit_mle, CensoredDataset, FitOptions};

const SUBSAMPLE_STREAM: u64 = 0x5355_4253;
const BOOTSTRAP_STREAM: u64 = 0x424f_4f54;
const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("non-numeric columns: {}", .0.join(", "))]
    NonNumericColumn(Vec<String>),
    #[error("negative response at row {row}: {value}")]
    NegativeResponse { row: usize, value: f64 },
    #[error("missing values at rows {}", join_rows(.0))]
    MissingValue(Vec<usize>),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] crate::Error),
}

fn join_rows(rows: &[usize]) -> String {
    rows.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Fit,
    Select,
    Simulate,
    Summarize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Nested,
    #[default]
    Subset,
}

/// Effective configuration of one command. Every field has a default
/// except `input`, which `fit`, `select` and `summarize` require.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<CommandKind>,
    pub version: String,
    pub input: Option<PathBuf>,
    pub response: String,
    /// Columns left out of the design.
    pub exclude: Vec<String>,
    /// Empty means the command's default list.
    pub criteria: Vec<CriterionId>,
    pub replicates: usize,
    pub seed: u64,
    pub bias_mode: BiasConstantMode,
    pub max_redraws: usize,
    pub subsample: Option<usize>,
    pub mode: SearchMode,
    /// Subset sizes to enumerate; all sizes when absent.
    pub d_range: Option<Vec<usize>>,
    /// Largest nested family; all columns when absent.
    pub max_k: Option<usize>,
    pub table: usize,
    pub n: Vec<usize>,
    pub runs: usize,
    pub bins: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            version: VERSION.to_string(),
            input: None,
            response: "y".into(),
            exclude: Vec::new(),
            criteria: Vec::new(),
            replicates: 200,
            seed: 0,
            bias_mode: BiasConstantMode::Normalized,
            max_redraws: DEFAULT_MAX_REDRAWS,
            subsample: None,
            mode: SearchMode::Subset,
            d_range: None,
            max_k: None,
            table: 1,
            n: vec![100],
            runs: 500,
            bins: 20,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::from_toml(&read_text(path)?)
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Fills command-specific defaults and checks the fields the command
    /// needs.
    pub fn resolve(mut self, command: CommandKind) -> CliResult<Self> {
        if let Some(recorded) = self.command {
            if recorded != command {
                return Err(CliError::Config(format!(
                    "configuration is for `{recorded:?}`, not `{command:?}`"
                )
                .to_lowercase()));
            }
        }
        self.command = Some(command);
        self.version = VERSION.to_string();
        if self.seed > i64::MAX as u64 {
            return Err(CliError::Config(format!("seed must be at most {}", i64::MAX)));
        }
        if self.criteria.is_empty() {
            self.criteria = match command {
                CommandKind::Simulate => CriterionId::table_rows(),
                _ => vec![CriterionId::BIC],
            };
        }
        let needs_input = matches!(
            command,
            CommandKind::Fit | CommandKind::Select | CommandKind::Summarize
        );
        if needs_input && self.input.is_none() {
            return Err(CliError::Config("--input is required".into()));
        }
        if command == CommandKind::Summarize && self.bins == 0 {
            return Err(CliError::Config("--bins must be at least 1".into()));
        }
        if command == CommandKind::Select && self.replicates == 0 {
            return Err(CliError::Config("--B must be at least 1".into()));
        }
        if command == CommandKind::Simulate {
            if self.n.is_empty() {
                return Err(CliError::Config("--n needs at least one sample size".into()));
            }
            if self.runs == 0 || self.replicates == 0 {
                return Err(CliError::Config("--M and --B must be at least 1".into()));
            }
        }
        Ok(self)
    }

    fn bootstrap_spec(&self) -> BootstrapSpec {
        let mut spec = BootstrapSpec::new(
            Mechanism::Nonparametric,
            self.replicates,
            derive(self.seed, BOOTSTRAP_STREAM),
        );
        spec.max_redraws = self.max_redraws;
        spec
    }

    fn header(&self) -> CliResult<String> {
        self.to_toml()
    }
}

#[derive(Debug, Parser)]
#[command(name = "tobit-select", version, about = "Tobit regression and model selection")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the full model by maximum likelihood.
    Fit(DataArgs),
    /// Score candidate models and report the selected one.
    Select(SelectArgs),
    /// Run identification-frequency experiments.
    Simulate(SimulateArgs),
    /// Histogram of the response.
    Summarize(SummarizeArgs),
    /// Repeat a run from its recorded metadata.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub response: Option<String>,
    /// Columns to leave out of the design (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub exclude: Option<Vec<String>>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Criteria (comma separated), e.g. `bic,bcv,eic1:np`.
    #[arg(long, value_delimiter = ',')]
    pub criterion: Option<Vec<CriterionId>>,
    /// Bootstrap replicates.
    #[arg(long = "B")]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Draw this many rows without replacement before selecting.
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<SearchMode>,
    /// Subset sizes to enumerate (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub d_range: Option<Vec<usize>>,
    #[arg(long)]
    pub max_k: Option<usize>,
    #[arg(long)]
    pub bias_mode: Option<BiasConstantMode>,
    #[arg(long)]
    pub max_redraws: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Reference design 1..=4.
    #[arg(long)]
    pub table: Option<usize>,
    /// Sample sizes (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Monte Carlo runs.
    #[arg(long = "M")]
    pub runs: Option<usize>,
    /// Bootstrap replicates.
    #[arg(long = "B")]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub criterion: Option<Vec<CriterionId>>,
    #[arg(long)]
    pub bias_mode: Option<BiasConstantMode>,
    #[arg(long)]
    pub max_redraws: Option<usize>,
    /// Output prefix: writes PREFIX.tsv, PREFIX.risk.csv and PREFIX.meta.toml.
    #[arg(long, default_value = "simulation")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    /// Metadata file written next to a previous output.
    #[arg(long)]
    pub meta: PathBuf,
    /// Output file (prefix for `simulate`).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

impl DataArgs {
    fn apply(self, cfg: &mut RunConfig) -> Option<PathBuf> {
        if self.input.is_some() {
            cfg.input = self.input;
        }
        set(&mut cfg.response, self.response);
        set(&mut cfg.exclude, self.exclude);
        self.output
    }
}

/// Resolves the parsed command line into an effective configuration and
/// an output location.
pub fn effective_config(cli: Cli) -> CliResult<(RunConfig, Option<PathBuf>)> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let (kind, output) = match cli.command {
        Command::Fit(args) => (CommandKind::Fit, args.apply(&mut cfg)),
        Command::Select(args) => {
            let output = args.data.apply(&mut cfg);
            set(&mut cfg.criteria, args.criterion);
            set(&mut cfg.replicates, args.replicates);
            set(&mut cfg.seed, args.seed);
            if args.subsample.is_some() {
                cfg.subsample = args.subsample;
            }
            set(&mut cfg.mode, args.mode);
            if args.d_range.is_some() {
                cfg.d_range = args.d_range;
            }
            if args.max_k.is_some() {
                cfg.max_k = args.max_k;
            }
            set(&mut cfg.bias_mode, args.bias_mode);
            set(&mut cfg.max_redraws, args.max_redraws);
            (CommandKind::Select, output)
        }
        Command::Simulate(args) => {
            set(&mut cfg.table, args.table);
            set(&mut cfg.n, args.n);
            set(&mut cfg.runs, args.runs);
            set(&mut cfg.replicates, args.replicates);
            set(&mut cfg.seed, args.seed);
            set(&mut cfg.criteria, args.criterion);
            set(&mut cfg.bias_mode, args.bias_mode);
            set(&mut cfg.max_redraws, args.max_redraws);
            (CommandKind::Simulate, Some(args.output))
        }
        Command::Summarize(args) => {
            let output = args.data.apply(&mut cfg);
            set(&mut cfg.bins, args.bins);
            (CommandKind::Summarize, output)
        }
        Command::Rerun(args) => {
            let cfg = RunConfig::load(&args.meta)?;
            let kind = cfg
                .command
                .ok_or_else(|| CliError::Config("metadata does not record a command".into()))?;
            let output = match (kind, args.output) {
                (CommandKind::Simulate, None) => Some(PathBuf::from("simulation")),
                (_, output) => output,
            };
            return Ok((cfg.resolve(kind)?, output));
        }
    };
    Ok((cfg.resolve(kind)?, output))
}

// ---------------------------------------------------------------------------
// Ingestion

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_cell(cell: &str) -> Option<Option<f64>> {
    let t = cell.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") {
        return Some(None);
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Some(Some(v)),
        _ => None,
    }
}

/// Parses a CSV with a header row. The response column must be numeric and
/// non-negative; every other column not in `exclude` becomes an explanatory
/// variable and an intercept column is prepended. Row numbers in errors
/// count data rows from 1.
pub fn ingest_csv(path: &Path, response: &str, exclude: &[String]) -> CliResult<CensoredDataset> {
    ingest_text(&read_text(path)?, response, exclude)
}

pub fn ingest_text(text: &str, response: &str, exclude: &[String]) -> CliResult<CensoredDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    for name in std::iter::once(response).chain(exclude.iter().map(String::as_str)) {
        if !header.iter().any(|h| h == name) {
            return Err(CliError::MissingColumn(name.to_string()));
        }
    }
    let response_col = header.iter().position(|h| h == response).expect("checked");
    let explanatory: Vec<usize> = (0..header.len())
        .filter(|&j| j != response_col && !exclude.contains(&header[j]))
        .collect();
    let used: Vec<usize> = std::iter::once(response_col).chain(explanatory.iter().copied()).collect();

    let mut cells: Vec<Vec<Option<f64>>> = Vec::new();
    let mut non_numeric = vec![false; header.len()];
    for record in reader.records() {
        let record = record?;
        let row = used
            .iter()
            .map(|&j| {
                parse_cell(record.get(j).unwrap_or("")).unwrap_or_else(|| {
                    non_numeric[j] = true;
                    None
                })
            })
            .collect();
        cells.push(row);
    }
    let bad: Vec<String> = used
        .iter()
        .filter(|&&j| non_numeric[j])
        .map(|&j| header[j].clone())
        .collect();
    if !bad.is_empty() {
        return Err(CliError::NonNumericColumn(bad));
    }
    let missing: Vec<usize> = cells
        .iter()
        .enumerate()
        .filter(|(_, row)| row.iter().any(Option::is_none))
        .map(|(i, _)| i + 1)
        .collect();
    if !missing.is_empty() {
        return Err(CliError::MissingValue(missing));
    }
    let n = cells.len();
    let mut y = Vec::with_capacity(n);
    for (i, row) in cells.iter().enumerate() {
        let v = row[0].expect("no missing values");
        if v < 0.0 {
            return Err(CliError::NegativeResponse { row: i + 1, value: v });
        }
        y.push(v);
    }
    let x = DMatrix::from_fn(n, explanatory.len(), |i, j| cells[i][j + 1].expect("no missing values"));
    let names = explanatory.iter().map(|&j| header[j].clone()).collect();
    Ok(CensoredDataset::with_intercept(y, x, names)?)
}

/// Seeded draw of `size` rows without replacement, in original row order.
pub fn subsample(data: &CensoredDataset, size: usize, seed: u64) -> CliResult<CensoredDataset> {
    let n = data.n();
    if size > n {
        return Err(CliError::Config(format!("subsample size {size} exceeds n = {n}")));
    }
    let mut stream = Stream::new(derive(seed, SUBSAMPLE_STREAM));
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..size {
        let j = i + stream.index(n - i);
        order.swap(i, j);
    }
    let mut rows = order[..size].to_vec();
    rows.sort_unstable();
    Ok(data.select_rows(&rows))
}

// ---------------------------------------------------------------------------
// Reports

fn comment_block(text: &str) -> String {
    text.lines().map(|l| format!("# {l}\n")).collect()
}

/// Response histogram as CSV with `bins` equal-width bins spanning
/// `[min, max]`; the last bin is closed on the right.
pub fn emit_histogram(data: &CensoredDataset, bins: usize) -> String {
    let bins = bins.max(1);
    let y = data.responses();
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in y {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let mut out = String::from("lower,upper,count\n");
    for (b, c) in counts.iter().enumerate() {
        let lower = lo + b as f64 * width;
        let upper = if b + 1 == bins && hi > lo { hi } else { lo + (b + 1) as f64 * width };
        writeln!(out, "{},{},{c}", format_sig6(lower), format_sig6(upper)).unwrap();
    }
    out
}

fn fit_report(data: &CensoredDataset) -> CliResult<String> {
    let fit = fit_mle(data, &FitOptions::default())?;
    let mut out = String::from("statistic\tvalue\n");
    writeln!(out, "n\t{}", data.n()).unwrap();
    writeln!(out, "uncensored\t{}", data.uncensored()).unwrap();
    writeln!(out, "censoring_rate\t{}", format_sig6(data.censoring_rate())).unwrap();
    writeln!(out, "k\t{}", fit.k).unwrap();
    writeln!(out, "loglik\t{}", format_sig6(fit.loglik)).unwrap();
    writeln!(out, "deviance\t{}", format_sig6(fit.deviance())).unwrap();
    writeln!(out, "converged\t{}", fit.converged).unwrap();
    writeln!(out, "iterations\t{}", fit.iterations).unwrap();
    writeln!(out, "gradient_norm\t{}", format_sig6(fit.gradient_norm)).unwrap();
    out.push_str("\nparameter\testimate\n");
    for (name, b) in data.column_names().iter().zip(fit.params.beta.iter()) {
        writeln!(out, "{name}\t{}", format_sig6(*b)).unwrap();
    }
    writeln!(out, "sigma\t{}", format_sig6(fit.params.sigma)).unwrap();
    Ok(out)
}

fn score_cell(value: f64) -> String {
    if value.is_finite() {
        format_sig6(value)
    } else {
        "NA".into()
    }
}

/// Per-d minima in wide layout (one row per criterion, one column per d),
/// followed by the minimising variables for every criterion and d.
pub fn subset_report(reports: &[SubsetReport], names: &[String]) -> String {
    let mut out = String::new();
    let Some(first) = reports.first() else {
        return out;
    };
    out.push_str("criterion");
    for row in &first.rows {
        write!(out, "\td{}", row.d).unwrap();
    }
    out.push_str("\tbest_d\n");
    for report in reports {
        out.push_str(&report.criterion.label());
        for row in &report.rows {
            let v = row.best.as_ref().map_or(f64::INFINITY, |(_, s)| s.value);
            write!(out, "\t{}", score_cell(v)).unwrap();
        }
        writeln!(out, "\t{}", report.best.d()).unwrap();
    }
    out.push_str("\ncriterion\td\tvalue\tse\tevaluated\tskipped\tselected\tvariables\n");
    for report in reports {
        for row in &report.rows {
            let (value, se, vars, selected) = match &row.best {
                Some((family, score)) => (
                    score_cell(score.value),
                    score.bias_se.map_or("NA".into(), format_sig6),
                    family.describe(names),
                    *family == report.best,
                ),
                None => ("NA".into(), "NA".into(), "NA".into(), false),
            };
            writeln!(
                out,
                "{}\t{}\t{value}\t{se}\t{}\t{}\t{}\t{vars}",
                report.criterion.label(),
                row.d,
                row.evaluated,
                row.skipped,
                if selected { "*" } else { "" }
            )
            .unwrap();
        }
    }
    out
}

/// One row per (criterion, family) of a nested scan.
pub fn nested_report(results: &[SelectionResult], names: &[String]) -> String {
    let mut out = String::from("criterion\tk\td\tvalue\tse\tselected\tvariables\tnote\n");
    for res in results {
        for fs in &res.scores {
            let se = fs
                .score
                .and_then(|s| s.bias_se)
                .map_or("NA".into(), format_sig6);
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{se}\t{}\t{}\t{}",
                res.criterion.label(),
                fs.family.k(),
                fs.family.d(),
                score_cell(fs.value),
                if fs.family == res.chosen { "*" } else { "" },
                fs.family.describe(names),
                fs.skip_reason.as_deref().unwrap_or("")
            )
            .unwrap();
        }
    }
    out
}

fn select_report(cfg: &RunConfig, data: &CensoredDataset) -> CliResult<String> {
    let data = match cfg.subsample {
        Some(size) => subsample(data, size, cfg.seed)?,
        None => data.clone(),
    };
    let spec = cfg.bootstrap_spec();
    let names = data.column_names().to_vec();
    let mut out = String::new();
    writeln!(out, "# rows used: {} (censored {})", data.n(), data.censored()).unwrap();
    match cfg.mode {
        SearchMode::Subset => {
            let p = data.q() - 1;
            let sizes = cfg.d_range.clone().unwrap_or_else(|| (0..=p).collect());
            let reports = best_subset_many(&data, &cfg.criteria, &spec, cfg.bias_mode, &sizes)?;
            out.push_str(&subset_report(&reports, &names));
        }
        SearchMode::Nested => {
            let max_k = cfg.max_k.unwrap_or(data.q() + 1);
            let results =
                nested_scan_many(&data, &cfg.criteria, max_k, &spec, cfg.bias_mode, None)?;
            out.push_str(&nested_report(&results, &names));
        }
    }
    Ok(out)
}

fn simulation_outputs(cfg: &RunConfig) -> CliResult<(String, String)> {
    let mut tables: Vec<IdentificationTable> = Vec::with_capacity(cfg.n.len());
    for &n in &cfg.n {
        let mut sim = SimulationConfig::table(cfg.table, n)?;
        sim.runs = cfg.runs;
        sim.replicates = cfg.replicates;
        sim.criteria = cfg.criteria.clone();
        sim.seed = cfg.seed;
        sim.bias_mode = cfg.bias_mode;
        sim.max_redraws = cfg.max_redraws;
        tables.push(monte_carlo(&sim)?);
    }
    let mut header = cfg.header()?;
    for t in &tables {
        writeln!(
            header,
            "n={}: d0={} failed_runs={} skipped_families={}",
            t.n, t.d0, t.failed_runs, t.skipped_families
        )
        .unwrap();
    }
    Ok((tables_to_tsv(&tables, &header), risk_curve_to_csv(&tables, &header)))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// Paths written by [`execute`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Written {
    pub outputs: Vec<PathBuf>,
    pub meta: Option<PathBuf>,
    /// Report text when no output path was given.
    pub stdout: Option<String>,
}

/// Runs a resolved configuration. Single-file commands write `output` and
/// `output.meta.toml`, or return the report as `stdout` when `output` is
/// absent; `simulate` treats `output` as a file prefix.
pub fn execute(cfg: &RunConfig, output: Option<&Path>) -> CliResult<Written> {
    let command = cfg
        .command
        .ok_or_else(|| CliError::Config("configuration has no command".into()))?;
    let meta_text = cfg.to_toml()?;
    let header = comment_block(&meta_text);

    if command == CommandKind::Simulate {
        let prefix = output.unwrap_or(Path::new("simulation"));
        let (tsv, csv) = simulation_outputs(cfg)?;
        let (tsv_path, csv_path) = (with_suffix(prefix, ".tsv"), with_suffix(prefix, ".risk.csv"));
        let meta = with_suffix(prefix, ".meta.toml");
        write_text(&tsv_path, &tsv)?;
        write_text(&csv_path, &csv)?;
        write_text(&meta, &meta_text)?;
        return Ok(Written {
            outputs: vec![tsv_path, csv_path],
            meta: Some(meta),
            stdout: None,
        });
    }

    let input = cfg.input.as_deref().expect("resolved config has an input");
    let body = match command {
        CommandKind::Fit => fit_report(&ingest_csv(input, &cfg.response, &cfg.exclude)?)?,
        CommandKind::Select => select_report(cfg, &ingest_csv(input, &cfg.response, &cfg.exclude)?)?,
        CommandKind::Summarize => {
            // Only the response matters here, so other columns may be text.
            let text = read_text(input)?;
            let header_row = text.lines().next().unwrap_or("");
            let others: Vec<String> = csv::ReaderBuilder::new()
                .has_headers(false)
                .trim(csv::Trim::All)
                .from_reader(header_row.as_bytes())
                .records()
                .next()
                .transpose()?
                .map(|r| r.iter().filter(|h| *h != cfg.response).map(str::to_string).collect())
                .unwrap_or_default();
            let data = ingest_text(&text, &cfg.response, &others)?;
            let mut s = emit_histogram(&data, cfg.bins);
            writeln!(s, "# zero fraction: {}", format_sig6(data.censoring_rate())).unwrap();
            s
        }
        CommandKind::Simulate => unreachable!(),
    };
    let report = header + &body;
    match output {
        Some(path) => {
            let meta = with_suffix(path, ".meta.toml");
            write_text(path, &report)?;
            write_text(&meta, &meta_text)?;
            Ok(Written {
                outputs: vec![path.to_path_buf()],
                meta: Some(meta),
                stdout: None,
            })
        }
        None => Ok(Written {
            outputs: Vec::new(),
            meta: None,
            stdout: Some(report),
        }),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> CliResult<Written>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(e.to_string()))?;
    let (cfg, output) = effective_config(cli)?;
    execute(&cfg, output.as_deref())
}

pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    let result = effective_config(cli).and_then(|(cfg, output)| execute(&cfg, output.as_deref()));
    match result {
        Ok(written) => {
            if let Some(text) = written.stdout {
                print!("{text}");
            }
            for path in written.outputs.iter().chain(&written.meta) {
                eprintln!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Synthetic data with the column layout of the Affairs survey (601 rows
/// in the original): response `affairs` plus eight numeric covariates, of
/// which five drive the latent response. Roughly three quarters of the
/// responses are zero.
pub fn synthetic_affairs_csv(n: usize, seed: u64) -> String {
    const AGES: [f64; 9] = [17.5, 22.0, 27.0, 32.0, 37.0, 42.0, 47.0, 52.0, 57.0];
    const YEARS: [f64; 8] = [0.125, 0.417, 0.75, 1.5, 4.0, 7.0, 10.0, 15.0];
    const EDUCATION: [f64; 7] = [9.0, 12.0, 14.0, 16.0, 17.0, 18.0, 20.0];
    let mut s = Stream::new(seed);
    let mut out = String::from(
        "affairs,gender,age,yearsmarried,children,religiousness,education,occupation,rating\n",
    );
    for _ in 0..n {
        let gender = s.index(2) as f64;
        let age_i = s.index(AGES.len());
        // Marriage length tracks age.
        let years_i = (age_i + s.index(3)).saturating_sub(1).min(YEARS.len() - 1);
        let (age, years) = (AGES[age_i], YEARS[years_i]);
        let children = if years >= 4.0 || s.uniform() < 0.3 { 1.0 } else { 0.0 };
        let religiousness = (1 + s.index(5)) as f64;
        let education = EDUCATION[s.index(EDUCATION.len())];
        let occupation = (1 + s.index(7)) as f64;
        let rating = (1 + s.index(5)) as f64;
        let latent = 8.17 - 0.179 * age + 0.554 * years - 1.686 * religiousness
            + 0.326 * occupation
            - 2.285 * rating
            + 8.25 * s.standard_normal();
        let affairs = (latent.max(0.0) * 1000.0).round() / 1000.0;
        writeln!(
            out,
            "{affairs},{gender},{age},{years},{children},{religiousness},{education},{occupation},{rating}"
        )
        .unwrap();
    }
    out
}
