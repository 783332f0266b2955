//! Command-line front end: scenario loading, single runs, capacity sweeps and the
//! CSV tables they produce.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use thiserror::Error;

use crate::enodeb::DualAscentResult;
use crate::model::{parse_scenario, CarrierId, Scenario, ScenarioError, SolverParams};
use crate::protocol::{run, sweep_each, AllocationReport, Phase, ProtocolError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: ScenarioError,
    },
    #[error(transparent)]
    Solver(#[from] ProtocolError),
    #[error("{0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Parse { .. } => 4,
            CliError::Solver(_) => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Section5,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "section5" => Ok(Preset::Section5),
            other => Err(format!("unknown preset `{other}` (available: section5)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSource {
    Preset(Preset),
    File(PathBuf),
}

/// `<carrier>=<value>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityOverride {
    pub carrier: CarrierId,
    pub capacity: f64,
}

fn split_assignment(s: &str) -> Result<(CarrierId, &str), String> {
    let (id, rest) = s
        .split_once('=')
        .ok_or_else(|| format!("expected <carrier>=<value>, got `{s}`"))?;
    let id = id
        .trim()
        .parse::<u32>()
        .map_err(|e| format!("bad carrier id `{id}`: {e}"))?;
    Ok((CarrierId(id), rest.trim()))
}

fn parse_number(s: &str) -> Result<f64, String> {
    let v = s.parse::<f64>().map_err(|e| format!("bad number `{s}`: {e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("bad number `{s}`: must be finite"))
    }
}

impl FromStr for CapacityOverride {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (carrier, value) = split_assignment(s)?;
        Ok(Self {
            carrier,
            capacity: parse_number(value)?,
        })
    }
}

/// `<carrier>=<start>:<stop>:<step>`, both ends inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub carrier: CarrierId,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl SweepSpec {
    pub fn values(&self) -> Vec<f64> {
        // Small slack so that 50:200:10 includes 200 despite rounding.
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

impl FromStr for SweepSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (carrier, range) = split_assignment(s)?;
        let parts: Vec<&str> = range.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(format!("expected <start>:<stop>:<step>, got `{range}`"));
        };
        let spec = Self {
            carrier,
            start: parse_number(start)?,
            stop: parse_number(stop)?,
            step: parse_number(step)?,
        };
        if spec.step <= 0.0 {
            return Err(format!("sweep step must be > 0, got {}", spec.step));
        }
        if spec.start > spec.stop {
            return Err(format!("sweep start {} exceeds stop {}", spec.start, spec.stop));
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamOverrides {
    pub delta: Option<f64>,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub max_iters: Option<usize>,
}

impl ParamOverrides {
    pub fn apply(&self, base: &SolverParams) -> SolverParams {
        SolverParams {
            delta: self.delta.unwrap_or(base.delta),
            l1: self.l1.unwrap_or(base.l1),
            l2: self.l2.unwrap_or(base.l2),
            max_outer_iters: self.max_iters.unwrap_or(base.max_outer_iters),
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: ScenarioSource,
    pub capacities: Vec<CapacityOverride>,
    pub sweep: Option<SweepSpec>,
    pub output_dir: PathBuf,
    pub params: ParamOverrides,
}

impl RunConfig {
    pub fn preset(output_dir: impl Into<PathBuf>) -> Self {
        Self {
            source: ScenarioSource::Preset(Preset::Section5),
            capacities: Vec::new(),
            sweep: None,
            output_dir: output_dir.into(),
            params: ParamOverrides::default(),
        }
    }

    pub fn solver_params(&self) -> Result<SolverParams, CliError> {
        let params = self.params.apply(&SolverParams::default());
        params
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(params)
    }
}

pub fn load_scenario(config: &RunConfig) -> Result<Scenario, CliError> {
    let mut scenario = match &config.source {
        ScenarioSource::Preset(Preset::Section5) => Scenario::section5(),
        ScenarioSource::File(path) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            parse_scenario(&text).map_err(|source| CliError::Parse {
                path: path.clone(),
                source,
            })?
        }
    };
    for o in &config.capacities {
        scenario = scenario
            .with_capacity(o.carrier, o.capacity)
            .map_err(|e| CliError::Config(format!("--set-capacity {}={}: {e}", o.carrier, o.capacity)))?;
    }
    Ok(scenario)
}

/// Computed values: 16 significant digits in scientific notation.
fn num(x: f64) -> String {
    format!("{x:.15e}")
}

fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("fields are UTF-8")
}

pub fn allocations_csv(report: &AllocationReport) -> String {
    let mut rows = Vec::new();
    for (user, grants) in &report.grants {
        let mut grants = grants.clone();
        grants.sort_by_key(|g| g.carrier);
        for g in grants {
            rows.push(vec![user.to_string(), g.carrier.to_string(), num(g.rate), num(g.offset)]);
        }
    }
    table(&["user_id", "carrier_id", "rate", "offset_used"], rows)
}

pub fn aggregates_csv(report: &AllocationReport) -> String {
    let rows = report
        .aggregates()
        .into_iter()
        .map(|(u, r)| vec![u.to_string(), num(r)]);
    table(&["user_id", "r_agg"], rows)
}

pub fn prices_csv(report: &AllocationReport) -> String {
    let rows = report.capacities.keys().map(|&c| {
        vec![
            c.to_string(),
            report.offered_price(c).map(num).unwrap_or_default(),
            report.allocation_price(c).map(num).unwrap_or_default(),
        ]
    });
    table(&["carrier_id", "offered_price", "allocation_price"], rows)
}

pub fn trace_csv(result: &DualAscentResult) -> String {
    let trace = &result.trace;
    let rows = trace.steps.iter().flat_map(|step| {
        trace.users.iter().enumerate().map(move |(j, u)| {
            vec![
                step.iteration.to_string(),
                num(step.price),
                u.to_string(),
                num(step.bids[j]),
                num(step.rates[j]),
            ]
        })
    });
    table(&["iteration", "price", "user_id", "w", "r"], rows)
}

pub fn trace_file_name(carrier: CarrierId, phase: Phase) -> String {
    format!("trace_{carrier}_{phase}.csv")
}

/// Every file `cmd_run` writes, as `(name, contents)` in a fixed order.
pub fn run_outputs(report: &AllocationReport) -> Vec<(String, String)> {
    let mut out = vec![
        ("allocations.csv".to_string(), allocations_csv(report)),
        ("aggregates.csv".to_string(), aggregates_csv(report)),
        ("prices.csv".to_string(), prices_csv(report)),
    ];
    for (phase, results) in [
        (Phase::Offered, &report.offered),
        (Phase::Allocation, &report.allocation),
    ] {
        for (&c, r) in results {
            out.push((trace_file_name(c, phase), trace_csv(r)));
        }
    }
    out
}

pub type SweepOutcome = Vec<(f64, Result<AllocationReport, ProtocolError>)>;

pub fn sweep_prices_csv(carriers: &[CarrierId], points: &SweepOutcome) -> String {
    let mut header = vec!["R_value".to_string()];
    header.extend(carriers.iter().map(|c| format!("p{c}_offered")));
    header.push("status".to_string());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = points.iter().map(|(value, outcome)| {
        let mut row = vec![value.to_string()];
        match outcome {
            Ok(report) => {
                row.extend(carriers.iter().map(|&c| report.offered_price(c).map(num).unwrap_or_default()));
                row.push("ok".to_string());
            }
            Err(e) => {
                row.extend(carriers.iter().map(|_| String::new()));
                row.push(format!("error: {e}"));
            }
        }
        row
    });
    table(&header, rows)
}

pub fn sweep_aggregates_csv(points: &SweepOutcome) -> String {
    let rows = points.iter().flat_map(|(value, outcome)| {
        outcome
            .iter()
            .flat_map(|report| report.aggregates())
            .map(move |(u, r)| vec![value.to_string(), u.to_string(), num(r)])
    });
    table(&["R_value", "user_id", "r_agg"], rows)
}

fn write_files(dir: &Path, files: &[(String, String)]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for (name, contents) in files {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Io { path, source })?;
    }
    Ok(())
}

pub fn cmd_run(config: &RunConfig) -> Result<AllocationReport, CliError> {
    let params = config.solver_params()?;
    let scenario = load_scenario(config)?;
    let report = run(&scenario, &params)?;
    write_files(&config.output_dir, &run_outputs(&report))?;
    info!(
        "allocated {} carriers in order {:?}; wrote {}",
        report.activations(),
        report.processing_order.iter().map(|c| c.0).collect::<Vec<_>>(),
        config.output_dir.display()
    );
    Ok(report)
}

/// Runs every sweep point and writes both tables. Failed points are kept as rows
/// with an error status; the call then fails with the first such error.
pub fn cmd_sweep(config: &RunConfig) -> Result<SweepOutcome, CliError> {
    let spec = config
        .sweep
        .ok_or_else(|| CliError::Config("sweep needs --sweep <carrier>=<start>:<stop>:<step>".into()))?;
    let params = config.solver_params()?;
    let scenario = load_scenario(config)?;
    if scenario.carrier(spec.carrier).is_none() {
        return Err(CliError::Config(format!("--sweep: no carrier {}", spec.carrier)));
    }
    let mut points = sweep_each(&scenario, spec.carrier, &spec.values(), &params);
    let carriers: Vec<CarrierId> = scenario.carrier_ids().collect();
    write_files(
        &config.output_dir,
        &[
            ("sweep_prices.csv".to_string(), sweep_prices_csv(&carriers, &points)),
            ("sweep_aggregates.csv".to_string(), sweep_aggregates_csv(&points)),
        ],
    )?;
    let failed = points.iter().filter(|(_, r)| r.is_err()).count();
    if failed > 0 {
        warn!("{failed} of {} sweep points failed", points.len());
        let index = points.iter().position(|(_, r)| r.is_err()).expect("counted above");
        let (_, outcome) = points.swap_remove(index);
        return Err(CliError::Solver(outcome.expect_err("checked above")));
    }
    info!("swept {} points; wrote {}", points.len(), config.output_dir.display());
    Ok(points)
}

#[derive(Debug, Parser)]
#[command(name = "ca-alloc", version, about = "Price-selective carrier-aggregation allocation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Allocate once and write allocations, aggregates, prices and traces.
    Run(CommonArgs),
    /// Vary one carrier's capacity and write price and aggregate tables.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Carrier and capacity range, e.g. `1=50:200:10`.
        #[arg(long)]
        sweep: SweepSpec,
    },
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true))]
pub struct CommonArgs {
    /// Built-in scenario (`section5`).
    #[arg(long, group = "source")]
    pub preset: Option<Preset>,
    /// Scenario JSON file.
    #[arg(long, group = "source")]
    pub scenario: Option<PathBuf>,
    /// Override a carrier capacity, e.g. `1=50`. Repeatable.
    #[arg(long = "set-capacity")]
    pub set_capacity: Vec<CapacityOverride>,
    /// Output directory.
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub l1: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
}

impl CommonArgs {
    pub fn into_config(self, sweep: Option<SweepSpec>) -> RunConfig {
        let source = match (self.preset, self.scenario) {
            (_, Some(path)) => ScenarioSource::File(path),
            (Some(p), None) => ScenarioSource::Preset(p),
            (None, None) => unreachable!("clap requires a source"),
        };
        RunConfig {
            source,
            capacities: self.set_capacity,
            sweep,
            output_dir: self.out,
            params: ParamOverrides {
                delta: self.delta,
                l1: self.l1,
                l2: self.l2,
                max_iters: self.max_iters,
            },
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("section5")
    }
}

/// Parse arguments, dispatch and return the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let outcome = match cli.command {
        Command::Run(common) => cmd_run(&common.into_config(None)).map(|_| ()),
        Command::Sweep { common, sweep } => cmd_sweep(&common.into_config(Some(sweep))).map(|_| ()),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
