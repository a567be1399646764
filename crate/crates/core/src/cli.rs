//! The `sol-coarse` command line.
//!
//! Every command resolves its flags (after merging an optional `key = value`
//! config file, which flags override) into an [`ExperimentSpec`], validates
//! it, runs, and emits a report carrying the resolved parameters. JSON
//! reports are versioned by `schema_version`; CSV reports start with `#`
//! comment lines echoing the same metadata, then a header row.
//!
//! Exit codes: 0 on success, 2 for invalid input or a failed precondition,
//! 64 for an unknown command, 1 for anything else (I/O, no scale found).

use std::ffi::OsString;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::coarse::{
    coarse_differentiate, delta_profile, estimate_qi_constants, fit_vertical, is_eps_efficient, is_eps_monotone,
    subdivision_check, Mode, ScaleLadder,
};
use crate::dl::{dl_box_enumerate, dl_distance_bfs, dl_distance_formula, dl_height_weight, DlBox, DlGraph, DlVertex};
use crate::error::{Error, Result};
use crate::lamplighter::{ll_ball, ll_dl_ball_check, GenSet};
use crate::qgen::{adversarial_sol_family, Generated};
use crate::qilab::{
    detect_dl, detect_sol, make_bilipschitz_1d, make_standard_map, perturb_map_with, DlMap, DlNoise, NoiseModel,
    SampledMap, StepConfig,
};
use crate::sol::{sol_box_measures, sol_box_vertical_family, sol_distance_bounds, sol_distance_refine, SolBox, SolParams, SolPoint};
use crate::trace::{read_trace_file, write_trace_file, AnyTrace, PathTrace, TraceRecord};

pub const SCHEMA_VERSION: u32 = 1;
/// Default factor for `r₀ ≫ C`, read as `r₀ ≥ factor·C`.
pub const DEFAULT_FLOOR_FACTOR: f64 = 10.0;
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

const STOCHASTIC: [&str; 3] = ["lemma-sweep", "coarse-diff", "qi-detect"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Parser, Debug)]
#[command(name = "sol-coarse", version, about = "Coarse geometry of SOL, Diestel-Leader graphs and lamplighters")]
#[command(args_override_self = true, propagate_version = true)]
struct Cli {
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// `key = value` lines supplying defaults for the command's flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Certified bounds on a SOL distance.
    SolDistance(SolDistanceArgs),
    /// Boundary-to-volume ratios of SOL boxes.
    SolFolner(SolFolnerArgs),
    /// Distance in a Diestel-Leader graph.
    DlDistance(DlDistanceArgs),
    /// Size, boundary and slices of a DL box.
    DlBox(DlBoxArgs),
    /// Sphere sizes of a lamplighter Cayley ball.
    LlBall(LlBallArgs),
    /// Check the lamplighter ball against the DL ball edge by edge.
    LlDlCheck(LlDlCheckArgs),
    /// QI constants, monotonicity and efficiency of traces in a trace file.
    TraceAnalyze(TraceAnalyzeArgs),
    /// Bound checks over generated quasi-geodesics.
    #[command(subcommand)]
    LemmaSweep(Sweep),
    /// Scale selection over images of vertical geodesics.
    CoarseDiff(CoarseDiffArgs),
    /// The three-step detector on a synthetic quasi-isometry.
    QiDetect(QiDetectArgs),
}

#[derive(Subcommand, Debug)]
enum Sweep {
    /// Failure of efficiency implies a subdivision gain.
    Subdivision(SweepArgs),
    /// `Σ δ_m ≤ 16K³/ε` for ε-monotonicity.
    Scales(SweepArgs),
    /// `Σ δ_m ≤ 4K²/ε` for ε-efficiency.
    Efficient(SweepArgs),
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct SolDistanceArgs {
    /// `x,y,z`
    #[arg(long, allow_hyphen_values = true)]
    p: String,
    #[arg(long, allow_hyphen_values = true)]
    q: String,
    #[arg(long, default_value_t = 0.5)]
    a: f64,
    #[arg(long, default_value_t = 0.5)]
    b: f64,
    /// Also shoot for the geodesic.
    #[arg(long)]
    refine: bool,
    #[arg(long, default_value_t = 200)]
    budget: usize,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct SolFolnerArgs {
    #[arg(long = "L", value_delimiter = ',', num_args = 1.., default_values_t = [4.0, 6.0, 8.0, 10.0])]
    #[serde(rename = "L")]
    l: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    a: f64,
    #[arg(long, default_value_t = 0.5)]
    b: f64,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct DlDistanceArgs {
    #[arg(long)]
    m: u32,
    #[arg(long)]
    n: u32,
    /// `(h:digits|-h:digits)`, e.g. `(1:0|-1:)`
    #[arg(long, allow_hyphen_values = true)]
    p: String,
    #[arg(long, allow_hyphen_values = true)]
    q: String,
    /// Confirm with breadth-first search.
    #[arg(long)]
    bfs: bool,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct DlBoxArgs {
    #[arg(long)]
    m: u32,
    #[arg(long)]
    n: u32,
    #[arg(long = "L")]
    #[serde(rename = "L")]
    l: u32,
    /// List the vertices instead of counting slices.
    #[arg(long)]
    enumerate: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum GensArg {
    /// Lamp changes at the walker and steps `±1`.
    Standard,
    Walk,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct LlBallArgs {
    #[arg(long, default_value_t = 2)]
    q: u32,
    #[arg(long)]
    radius: u32,
    #[arg(long, value_enum, default_value_t = GensArg::Walk)]
    gens: GensArg,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct LlDlCheckArgs {
    #[arg(long, default_value_t = 2)]
    q: u32,
    #[arg(long)]
    radius: u32,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct TraceAnalyzeArgs {
    /// Trace file, one JSON trace per line.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Efficiency scale; defaults to a quarter of each trace's span.
    #[arg(long)]
    r: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct SweepArgs {
    /// Largest estimated K a generated trace may have.
    #[arg(long = "K")]
    #[serde(rename = "K")]
    k: f64,
    /// Largest estimated C a generated trace may have.
    #[arg(long = "C")]
    #[serde(rename = "C")]
    c: f64,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long)]
    traces: usize,
    #[arg(long)]
    seed: u64,
    /// Trace length; defaults to `8·r0`.
    #[arg(long)]
    span: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    spacing: f64,
    /// Ladder floor; defaults to `floor_factor·C` (at least 1).
    #[arg(long)]
    r0: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    ratio: f64,
    #[arg(long, default_value_t = DEFAULT_FLOOR_FACTOR)]
    floor_factor: f64,
    /// Also write the generated traces to this trace file.
    #[arg(long)]
    save_traces: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum NoiseArg {
    Smooth,
    Independent,
}

impl From<NoiseArg> for NoiseModel {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Smooth => NoiseModel::Smooth,
            NoiseArg::Independent => NoiseModel::Independent,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Efficient,
    Monotone,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct CoarseDiffArgs {
    #[arg(long)]
    seed: u64,
    /// Analyze the traces in this file instead of generating a family.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Half-height of the box whose verticals are mapped; the default
    /// leaves room for three rungs above the `10·C` floor.
    #[arg(long = "L", default_value_t = 20.0)]
    #[serde(rename = "L")]
    l: f64,
    #[arg(long, default_value_t = 200)]
    count: usize,
    /// Bilipschitz constant of the standard map.
    #[arg(long = "K", default_value_t = 2.0)]
    #[serde(rename = "K")]
    k: f64,
    /// Noise added to the standard map.
    #[arg(long = "C", default_value_t = 1.0)]
    #[serde(rename = "C")]
    c: f64,
    #[arg(long, value_enum, default_value_t = NoiseArg::Smooth)]
    noise: NoiseArg,
    #[arg(long, default_value_t = 10)]
    breakpoints: usize,
    #[arg(long, default_value_t = 0.1)]
    net_spacing: f64,
    /// Samples per vertical geodesic.
    #[arg(long, default_value_t = 321)]
    samples: usize,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 0.1)]
    theta: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Efficient)]
    mode: ModeArg,
    /// Ladder floor; defaults to `floor_factor·C` (at least 1).
    #[arg(long)]
    r0: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    ratio: f64,
    #[arg(long, default_value_t = DEFAULT_FLOOR_FACTOR)]
    floor_factor: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SpaceArg {
    Sol,
    Dl,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum DlNoiseArg {
    Horizontal,
    Walk,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct QiDetectArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = SpaceArg::Sol)]
    space: SpaceArg,
    #[arg(long = "L", default_value_t = 8.0)]
    #[serde(rename = "L")]
    l: f64,
    #[arg(long = "R", default_value_t = 2.0)]
    #[serde(rename = "R")]
    r: f64,
    #[arg(long = "K", default_value_t = 2.0)]
    #[serde(rename = "K")]
    k: f64,
    /// Noise size; for DL, the number of perturbing edges.
    #[arg(long = "C", default_value_t = 1.0)]
    #[serde(rename = "C")]
    c: f64,
    /// Pre-compose the standard map with the flip (SOL) or swap the trees (DL).
    #[arg(long)]
    flip: bool,
    #[arg(long, value_enum, default_value_t = NoiseArg::Smooth)]
    noise: NoiseArg,
    #[arg(long, value_enum, default_value_t = DlNoiseArg::Horizontal)]
    dl_noise: DlNoiseArg,
    #[arg(long, default_value_t = 10)]
    breakpoints: usize,
    #[arg(long, default_value_t = 0.1)]
    net_spacing: f64,
    #[arg(long, default_value_t = 3)]
    m: u32,
    #[arg(long, default_value_t = 2)]
    n: u32,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 0.1)]
    theta: f64,
    #[arg(long, default_value_t = 48)]
    tiles: usize,
    #[arg(long, default_value_t = 16)]
    traces: usize,
    #[arg(long, default_value_t = 2000)]
    probes: usize,
}

// ---------------------------------------------------------------------------
// Specs and reports

/// A resolved command: its name, every parameter after defaults and config
/// merging, and where the report goes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub command: String,
    pub params: Map<String, Value>,
    pub output: Option<PathBuf>,
    pub format: Format,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub param: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid {}: {}", self.param, self.message)
    }
}

fn num(params: &Map<String, Value>, key: &str) -> Option<f64> {
    params.get(key).and_then(Value::as_f64)
}

/// Checks the constraints shared across commands; every violation is listed.
pub fn validate_spec(spec: &ExperimentSpec) -> std::result::Result<(), Vec<Violation>> {
    let p = &spec.params;
    let mut out = Vec::new();
    let mut bad = |param: &str, message: String| out.push(Violation { param: param.into(), message });
    if STOCHASTIC.contains(&spec.command.split(' ').next().unwrap_or("")) && !p.contains_key("seed") {
        bad("seed", "stochastic commands need an explicit seed".into());
    }
    if let Some(t) = num(p, "theta") {
        if !(t > 0.0 && t < 1.0) {
            bad("theta", format!("{t} is not in (0, 1)"));
        }
    }
    if let Some(e) = num(p, "eps") {
        if !(e > 0.0 && e.is_finite()) {
            bad("eps", format!("{e} must be positive"));
        }
    }
    if let Some(k) = num(p, "K") {
        if !(k >= 1.0 && k.is_finite()) {
            bad("K", format!("{k} must be at least 1"));
        }
    }
    if let Some(c) = num(p, "C") {
        if !(c >= 0.0 && c.is_finite()) {
            bad("C", format!("{c} must be nonnegative"));
        }
    }
    if let (Some(r0), Some(c)) = (num(p, "r0"), num(p, "C")) {
        let factor = num(p, "floor_factor").unwrap_or(DEFAULT_FLOOR_FACTOR);
        if r0 < factor * c {
            bad("ladder floor r0", format!("r0 = {r0} is below {factor}·C = {}", factor * c));
        }
        if !(r0 > 0.0) {
            bad("ladder floor r0", format!("r0 = {r0} must be positive"));
        }
    }
    if let Some(r) = num(p, "ratio") {
        if !(r > 1.0) {
            bad("ratio", format!("ladder ratio {r} must exceed 1"));
        }
    }
    if spec.command == "dl-box" && p.get("enumerate").and_then(Value::as_bool) == Some(true) {
        let (m, n, l) = (num(p, "m").unwrap_or(2.0), num(p, "n").unwrap_or(2.0), num(p, "L").unwrap_or(0.0));
        let size = (0..=(2.0 * l) as i32).map(|k| m.powf(2.0 * l - f64::from(k)) * n.powf(f64::from(k))).sum::<f64>();
        if size > crate::dl::DEFAULT_BOX_CAP as f64 {
            bad("L", format!("box of about {size:.3e} vertices exceeds the enumeration cap"));
        }
    }
    if out.is_empty() { Ok(()) } else { Err(out) }
}

/// Column names and rows for the CSV form of a report.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub spec: ExperimentSpec,
    pub result: Value,
    pub table: Table,
}

/// `x` rounded to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn round_value(v: &Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|x| serde_json::Number::from_f64(round_sig(x)))
            .map_or(Value::Null, Value::Number),
        Value::Array(a) => Value::Array(a.iter().map(round_value).collect()),
        Value::Object(o) => Value::Object(o.iter().map(|(k, v)| (k.clone(), round_value(v))).collect()),
        other => other.clone(),
    }
}

fn cell(v: &Value) -> String {
    match round_value(v) {
        Value::String(s) => s,
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

pub fn render_report(report: &Report, format: Format) -> Result<String> {
    match format {
        Format::Json => {
            let doc = json!({
                "schema_version": SCHEMA_VERSION,
                "command": report.spec.command,
                "params": report.spec.params,
                "result": report.result,
            });
            let mut s = serde_json::to_string_pretty(&round_value(&doc))?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => {
            let mut buf = format!(
                "# schema_version={SCHEMA_VERSION}\n# command={}\n# params={}\n",
                report.spec.command,
                serde_json::to_string(&round_value(&Value::Object(report.spec.params.clone())))?
            )
            .into_bytes();
            {
                let mut w = csv::Writer::from_writer(&mut buf);
                w.write_record(&report.table.header).map_err(csv_err)?;
                for row in &report.table.rows {
                    w.write_record(row.iter().map(cell)).map_err(csv_err)?;
                }
                w.flush()?;
            }
            String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Writes the report to `out`, or returns it for standard output.
pub fn emit_report(report: &Report, format: Format, out: Option<&Path>) -> Result<Option<String>> {
    let text = render_report(report, format)?;
    match out {
        Some(path) => {
            fs::write(path, text)?;
            Ok(None)
        }
        None => Ok(Some(text)),
    }
}

// ---------------------------------------------------------------------------
// Running

/// Parses `argv`, runs the command and returns the exit code. Reports go to
/// `stdout` unless `--out` is given; diagnostics go to `stderr`.
pub fn run_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match merge_config(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_INVALID;
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                ErrorKind::InvalidSubcommand
                | ErrorKind::MissingSubcommand
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_USAGE,
                _ => EXIT_INVALID,
            };
            let _ = if code == EXIT_OK { write!(stdout, "{e}") } else { write!(stderr, "{e}") };
            return code;
        }
    };
    configure_threads();
    match execute(cli) {
        Ok(Some(text)) => {
            let _ = stdout.write_all(text.as_bytes());
            EXIT_OK
        }
        Ok(None) => EXIT_OK,
        Err(Failure::Invalid(vs)) => {
            for v in vs {
                let _ = writeln!(stderr, "error: {v}");
            }
            EXIT_INVALID
        }
        Err(Failure::Lib(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            match e {
                Error::Domain(_)
                | Error::Range { .. }
                | Error::Validation(_)
                | Error::Cap(_)
                | Error::Precondition(_)
                | Error::Parse(_) => EXIT_INVALID,
                _ => EXIT_FAILURE,
            }
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

/// `SOLQI_THREADS` sizes the worker pool; results do not depend on it.
fn configure_threads() {
    if let Some(n) = std::env::var("SOLQI_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

const COMMANDS: [&str; 10] = [
    "sol-distance",
    "sol-folner",
    "dl-distance",
    "dl-box",
    "ll-ball",
    "ll-dl-check",
    "trace-analyze",
    "lemma-sweep",
    "coarse-diff",
    "qi-detect",
];

/// Splices `--key value` pairs from the config file right after the command
/// words, so that flags given on the command line come later and win.
fn merge_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let strs: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--config" {
            path = strs.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let Some(cmd) = strs.iter().position(|a| COMMANDS.contains(&a.as_str())) else { return Ok(argv) };
    let at = if strs[cmd] == "lemma-sweep" { cmd + 2 } else { cmd + 1 }.min(argv.len());
    let text = fs::read_to_string(&path)?;
    let mut extra = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("{path}:{}: expected key = value", lineno + 1)))?;
        let key = k.trim().replace('_', "-");
        match v.trim() {
            "true" => extra.push(format!("--{key}")),
            "false" => {}
            val => {
                extra.push(format!("--{key}"));
                extra.push(val.to_string());
            }
        }
    }
    let mut out = argv;
    out.splice(at..at, extra.into_iter().map(OsString::from));
    Ok(out)
}

enum Failure {
    Invalid(Vec<Violation>),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn spec_of<A: Serialize>(command: &str, args: &A, out: &Option<PathBuf>, format: Format) -> Result<ExperimentSpec> {
    let params = match serde_json::to_value(args)? {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    Ok(ExperimentSpec { command: command.into(), params, output: out.clone(), format })
}

fn execute(cli: Cli) -> std::result::Result<Option<String>, Failure> {
    let fmt = |default: Format| cli.format.unwrap_or(default);
    let out = &cli.out;
    let report = match &cli.command {
        Command::SolDistance(a) => checked(spec_of("sol-distance", a, out, fmt(Format::Json))?, |s| sol_distance_cmd(s, a))?,
        Command::SolFolner(a) => checked(spec_of("sol-folner", a, out, fmt(Format::Json))?, |s| sol_folner_cmd(s, a))?,
        Command::DlDistance(a) => checked(spec_of("dl-distance", a, out, fmt(Format::Json))?, |s| dl_distance_cmd(s, a))?,
        Command::DlBox(a) => checked(spec_of("dl-box", a, out, fmt(Format::Json))?, |s| dl_box_cmd(s, a))?,
        Command::LlBall(a) => checked(spec_of("ll-ball", a, out, fmt(Format::Json))?, |s| ll_ball_cmd(s, a))?,
        Command::LlDlCheck(a) => checked(spec_of("ll-dl-check", a, out, fmt(Format::Json))?, |s| ll_dl_check_cmd(s, a))?,
        Command::TraceAnalyze(a) => {
            checked(spec_of("trace-analyze", a, out, fmt(Format::Json))?, |s| trace_analyze_cmd(s, a))?
        }
        Command::LemmaSweep(sw) => {
            let (name, a) = match sw {
                Sweep::Subdivision(a) => ("lemma-sweep subdivision", a),
                Sweep::Scales(a) => ("lemma-sweep scales", a),
                Sweep::Efficient(a) => ("lemma-sweep efficient", a),
            };
            let mut spec = spec_of(name, a, out, fmt(Format::Csv))?;
            resolve_sweep(&mut spec, a);
            checked(spec, |s| sweep_cmd(s, sw, a))?
        }
        Command::CoarseDiff(a) => {
            let mut spec = spec_of("coarse-diff", a, out, fmt(Format::Json))?;
            let r0 = a.r0.unwrap_or((a.floor_factor * a.c).max(1.0));
            spec.params.insert("r0".into(), json!(r0));
            checked(spec, |s| coarse_diff_cmd(s, a, r0))?
        }
        Command::QiDetect(a) => checked(spec_of("qi-detect", a, out, fmt(Format::Json))?, |s| qi_detect_cmd(s, a))?,
    };
    Ok(emit_report(&report, report.spec.format, cli.out.as_deref())?)
}

fn checked(spec: ExperimentSpec, f: impl FnOnce(ExperimentSpec) -> Result<Report>) -> std::result::Result<Report, Failure> {
    validate_spec(&spec).map_err(Failure::Invalid)?;
    Ok(f(spec)?)
}

fn parse_point(s: &str) -> Result<SolPoint> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Parse(format!("point {s:?}: {e}"))))
        .collect::<Result<_>>()?;
    match v.as_slice() {
        [x, y, z] => {
            let p = SolPoint::new(*x, *y, *z);
            crate::error::ensure_finite(&v, "point")?;
            Ok(p)
        }
        _ => Err(Error::Parse(format!("point {s:?} needs three comma-separated coordinates"))),
    }
}

fn sol_distance_cmd(spec: ExperimentSpec, a: &SolDistanceArgs) -> Result<Report> {
    let params = SolParams::new(a.a, a.b)?;
    let (p, q) = (parse_point(&a.p)?, parse_point(&a.q)?);
    let b = sol_distance_bounds(p, q, params);
    let mut result = json!({ "lower": b.lower, "upper": b.upper });
    let mut table = Table::new(&["lower", "upper", "refined", "converged"]);
    let mut row = vec![json!(b.lower), json!(b.upper), Value::Null, Value::Null];
    if a.refine {
        let r = sol_distance_refine(p, q, params, a.budget)?;
        result["refined"] = json!(r.value);
        result["converged"] = json!(r.converged);
        row[2] = json!(r.value);
        row[3] = json!(r.converged);
    }
    table.push(row);
    Ok(Report { spec, result, table })
}

fn sol_folner_cmd(spec: ExperimentSpec, a: &SolFolnerArgs) -> Result<Report> {
    let params = SolParams::new(a.a, a.b)?;
    let mut table = Table::new(&["L", "volume", "boundary", "ratio"]);
    let mut rows = Vec::new();
    for &l in &a.l {
        let m = sol_box_measures(l, params)?;
        table.push(vec![json!(l), json!(m.volume), json!(m.boundary()), json!(m.ratio())]);
        rows.push(json!({ "L": l, "volume": m.volume, "boundary": m.boundary(), "ratio": m.ratio(), "faces": m }));
    }
    Ok(Report { spec, result: json!({ "boxes": rows }), table })
}

fn dl_distance_cmd(spec: ExperimentSpec, a: &DlDistanceArgs) -> Result<Report> {
    let g = DlGraph::new(a.m, a.n)?;
    let p: DlVertex = a.p.parse()?;
    let q: DlVertex = a.q.parse()?;
    g.validate(&p)?;
    g.validate(&q)?;
    let d = dl_distance_formula(&p, &q);
    let mut result = json!({ "distance": d });
    let mut table = Table::new(&["distance", "bfs"]);
    let mut bfs = Value::Null;
    if a.bfs {
        bfs = json!(dl_distance_bfs(&g, &p, &q)?);
        result["bfs"] = bfs.clone();
    }
    table.push(vec![json!(d), bfs]);
    Ok(Report { spec, result, table })
}

fn dl_box_cmd(spec: ExperimentSpec, a: &DlBoxArgs) -> Result<Report> {
    let bx = DlBox::centered(DlGraph::new(a.m, a.n)?, a.l)?;
    let (size, boundary) = if a.enumerate {
        let c = dl_box_enumerate(&bx)?;
        let bottom = c.slices.first().map_or(0, |s| s.1);
        let top = c.slices.last().map_or(0, |s| s.1);
        (c.vertices.len() as u64, bottom + top)
    } else {
        (bx.size(), bx.boundary_size())
    };
    let mut table = Table::new(&["height", "count", "incidences", "weight", "weighted_incidences"]);
    let mut slices = Vec::new();
    for h in bx.bottom()..=bx.top() {
        let w = dl_height_weight(h, a.m, a.n);
        let inc = bx.incidences(h);
        table.push(vec![json!(h), json!(bx.slice_count(h)), json!(inc), json!(w), json!(w * inc as f64)]);
        slices.push(json!({ "height": h, "count": bx.slice_count(h), "incidences": inc, "weight": w }));
    }
    let result = json!({
        "size": size,
        "boundary": boundary,
        "folner_ratio": boundary as f64 / size as f64,
        "geodesics": bx.geodesic_count().to_string(),
        "slices": slices,
    });
    Ok(Report { spec, result, table })
}

fn ll_ball_cmd(spec: ExperimentSpec, a: &LlBallArgs) -> Result<Report> {
    let gens = match a.gens {
        GensArg::Standard => GenSet::PaperSet,
        GensArg::Walk => GenSet::WalkAndLight,
    };
    let ball = ll_ball(a.q, gens, a.radius)?;
    let mut spheres = vec![0u64; a.radius as usize + 1];
    for (_, d) in &ball {
        spheres[*d as usize] += 1;
    }
    let mut table = Table::new(&["radius", "sphere", "ball"]);
    let mut acc = 0;
    for (r, s) in spheres.iter().enumerate() {
        acc += s;
        table.push(vec![json!(r), json!(s), json!(acc)]);
    }
    let result = json!({ "size": ball.len(), "spheres": spheres, "generators": gens.generators(a.q).len() });
    Ok(Report { spec, result, table })
}

fn ll_dl_check_cmd(spec: ExperimentSpec, a: &LlDlCheckArgs) -> Result<Report> {
    let c = ll_dl_ball_check(a.q, a.radius)?;
    let mut result = serde_json::to_value(c)?;
    result["isomorphic"] = json!(c.isomorphic());
    let mut table = Table::new(&["vertices", "lamp_edges", "dl_edges", "forward_preserved", "backward_preserved", "isomorphic"]);
    table.push(vec![
        json!(c.lamp_vertices),
        json!(c.lamp_edges),
        json!(c.dl_edges),
        json!(c.forward_preserved),
        json!(c.backward_preserved),
        json!(c.isomorphic()),
    ]);
    Ok(Report { spec, result, table })
}

fn analyze_one<A: crate::trace::Ambient>(
    space: &A,
    tr: &PathTrace<A::Point>,
    eps: f64,
    r: Option<f64>,
) -> Result<(Value, Vec<Value>)> {
    let q = estimate_qi_constants(space, tr).ok();
    let mono = is_eps_monotone(space, tr, eps)?;
    let r = r.unwrap_or(tr.span() / 4.0);
    let eff = is_eps_efficient(space, tr, eps, r)?;
    let info = json!({
        "samples": tr.len(),
        "span": tr.span(),
        "constants": q,
        "monotone": mono,
        "efficiency_scale": r,
        "efficient": eff,
    });
    let row = vec![
        json!(tr.len()),
        json!(tr.span()),
        q.map_or(Value::Null, |q| json!(q.k)),
        q.map_or(Value::Null, |q| json!(q.c)),
        json!(mono.monotone),
        json!(mono.max_gap),
        json!(eff.efficient),
        json!(eff.chord_sum),
        json!(eff.displacement),
    ];
    Ok((info, row))
}

fn trace_analyze_cmd(spec: ExperimentSpec, a: &TraceAnalyzeArgs) -> Result<Report> {
    let file = fs::File::open(&a.input)?;
    let records = read_trace_file(BufReader::new(file))?;
    let mut table = Table::new(&[
        "trace", "space", "samples", "span", "K", "C", "monotone", "max_gap", "efficient", "chord_sum",
        "displacement", "hausdorff",
    ]);
    let mut traces = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        let (mut info, row, space, haus) = match AnyTrace::try_from(rec)? {
            AnyTrace::Sol(p, tr) => {
                let (info, row) = analyze_one(&p, &tr, a.eps, a.r)?;
                let fit = fit_vertical(p, &tr)?;
                (info, row, "sol", json!(fit.hausdorff))
            }
            AnyTrace::Dl(g, tr) => {
                let (info, row) = analyze_one(&g, &tr, a.eps, a.r)?;
                (info, row, "dl", Value::Null)
            }
        };
        info["trace"] = json!(i);
        info["space"] = json!(space);
        info["vertical_hausdorff"] = haus.clone();
        let mut full = vec![json!(i), json!(space)];
        full.extend(row);
        full.push(haus);
        table.push(full);
        traces.push(info);
    }
    Ok(Report { spec, result: json!({ "traces": traces }), table })
}

fn sweep_defaults(a: &SweepArgs) -> (f64, f64) {
    let r0 = a.r0.unwrap_or((a.floor_factor * a.c).max(1.0));
    let span = a.span.unwrap_or(8.0 * r0);
    (r0, span)
}

fn resolve_sweep(spec: &mut ExperimentSpec, a: &SweepArgs) {
    let (r0, span) = sweep_defaults(a);
    spec.params.insert("r0".into(), json!(r0));
    spec.params.insert("span".into(), json!(span));
}

fn sweep_family(a: &SweepArgs, span: f64) -> Result<Vec<Generated<SolPoint>>> {
    let params = SolParams::STANDARD;
    let fam = adversarial_sol_family(a.traces, a.seed, a.k, a.c, span, a.spacing, params)?;
    if let Some(path) = &a.save_traces {
        let recs: Vec<TraceRecord> = fam.iter().map(|g| TraceRecord::from_sol(params, &g.trace)).collect();
        write_trace_file(fs::File::create(path)?, &recs)?;
    }
    Ok(fam)
}

fn sweep_cmd(spec: ExperimentSpec, sw: &Sweep, a: &SweepArgs) -> Result<Report> {
    let params = SolParams::STANDARD;
    let (r0, span) = sweep_defaults(a);
    let fam = sweep_family(a, span)?;
    match sw {
        Sweep::Scales(_) | Sweep::Efficient(_) => {
            let mode = if matches!(sw, Sweep::Scales(_)) { Mode::Monotone } else { Mode::Efficient };
            let mut table = Table::new(&["trace", "kind", "K_est", "C_est", "sum_delta", "bound", "holds"]);
            let mut violations = 0;
            for (i, g) in fam.iter().enumerate() {
                let ladder = ScaleLadder::fitting(r0, a.ratio, g.trace.span())?;
                let prof = delta_profile(&params, &g.trace, &ladder, a.eps, mode)?;
                let bound = match mode {
                    Mode::Monotone => g.constants.monotone_bound(a.eps),
                    Mode::Efficient => g.constants.efficient_bound(a.eps),
                };
                let holds = prof.total() <= bound;
                violations += usize::from(!holds);
                table.push(vec![
                    json!(i),
                    json!(format!("{:?}", g.kind).to_lowercase()),
                    json!(g.constants.k),
                    json!(g.constants.c),
                    json!(prof.total()),
                    json!(bound),
                    json!(holds),
                ]);
            }
            let result = json!({ "traces": fam.len(), "violations": violations });
            Ok(Report { spec, result, table })
        }
        Sweep::Subdivision(_) => {
            let mut table = Table::new(&["trace", "kind", "K_est", "C_est", "windows", "inefficient", "violations"]);
            let (mut total, mut bad) = (0, 0);
            for (i, g) in fam.iter().enumerate() {
                let s = subdivision_check(&params, &g.trace, g.constants, a.eps, r0, a.ratio)?;
                total += s.windows;
                bad += s.violations;
                table.push(vec![
                    json!(i),
                    json!(format!("{:?}", g.kind).to_lowercase()),
                    json!(g.constants.k),
                    json!(g.constants.c),
                    json!(s.windows),
                    json!(s.inefficient),
                    json!(s.violations),
                ]);
            }
            let result = json!({ "traces": fam.len(), "windows": total, "violations": bad });
            Ok(Report { spec, result, table })
        }
    }
}

fn coarse_diff_cmd(spec: ExperimentSpec, a: &CoarseDiffArgs, r0: f64) -> Result<Report> {
    let mode = match a.mode {
        ModeArg::Efficient => Mode::Efficient,
        ModeArg::Monotone => Mode::Monotone,
    };
    let cd = match &a.input {
        Some(path) => {
            let recs = read_trace_file(BufReader::new(fs::File::open(path)?))?;
            let mut sol = Vec::new();
            let mut dl = Vec::new();
            for rec in &recs {
                match AnyTrace::try_from(rec)? {
                    AnyTrace::Sol(p, t) => sol.push((p, t)),
                    AnyTrace::Dl(g, t) => dl.push((g, t)),
                }
            }
            if !dl.is_empty() && !sol.is_empty() {
                return Err(Error::Validation("a family must live in one space".into()));
            }
            if let Some((g, _)) = dl.first() {
                let g = *g;
                let fam: Vec<_> = dl.into_iter().map(|x| x.1).collect();
                let span = fam.iter().map(PathTrace::span).fold(f64::INFINITY, f64::min);
                coarse_differentiate(&g, &fam, &ScaleLadder::fitting(r0, a.ratio, span)?, a.eps, a.theta, mode)?
            } else {
                let p = sol.first().map(|x| x.0).ok_or_else(|| Error::Degenerate("empty trace file".into()))?;
                let fam: Vec<_> = sol.into_iter().map(|x| x.1).collect();
                let span = fam.iter().map(PathTrace::span).fold(f64::INFINITY, f64::min);
                coarse_differentiate(&p, &fam, &ScaleLadder::fitting(r0, a.ratio, span)?, a.eps, a.theta, mode)?
            }
        }
        None => {
            let params = SolParams::STANDARD;
            let bx = SolBox::at_identity(a.l)?;
            let f = make_bilipschitz_1d(a.seed.wrapping_mul(2), a.k, a.breakpoints)?;
            let g = make_bilipschitz_1d(a.seed.wrapping_mul(2) + 1, a.k, a.breakpoints)?;
            let map = SampledMap::new(make_standard_map(f, g, false), a.net_spacing, params)?;
            let map = perturb_map_with(&map, a.c, a.seed, a.noise.into())?;
            let family = sol_box_vertical_family(&bx, a.count, a.seed, params)?
                .iter()
                .map(|seg| Ok(seg.trace(a.samples)?.map_points(|p| map.eval(*p))))
                .collect::<Result<Vec<_>>>()?;
            let ladder = ScaleLadder::fitting(r0, a.ratio, 2.0 * a.l)?;
            coarse_differentiate(&params, &family, &ladder, a.eps, a.theta, mode)?
        }
    };
    let mut table = Table::new(&["rung", "delta"]);
    for (m, d) in cd.profile.iter().enumerate() {
        table.push(vec![json!(m + 1), json!(d)]);
    }
    Ok(Report { spec, result: serde_json::to_value(&cd)?, table })
}

const RECONCILIATION_NOTE: &str =
    "orientation reconciled by weighted majority over sub-boxes; an empirical simplification";

fn qi_detect_cmd(spec: ExperimentSpec, a: &QiDetectArgs) -> Result<Report> {
    let cfg = StepConfig {
        sub_half_height: a.r,
        eps: a.eps,
        theta: a.theta,
        tiles: a.tiles,
        traces_per_tile: a.traces,
        probes: a.probes,
        seed: a.seed,
    };
    let det = match a.space {
        SpaceArg::Sol => {
            let params = SolParams::STANDARD;
            let bx = SolBox::at_identity(a.l)?;
            let f = make_bilipschitz_1d(a.seed.wrapping_mul(2), a.k, a.breakpoints)?;
            let g = make_bilipschitz_1d(a.seed.wrapping_mul(2) + 1, a.k, a.breakpoints)?;
            let map = SampledMap::new(make_standard_map(f, g, a.flip), a.net_spacing, params)?;
            let map = perturb_map_with(&map, a.c, a.seed ^ 0xC0FFEE, a.noise.into())?;
            detect_sol(&map, &bx, &cfg)?
        }
        SpaceArg::Dl => {
            if a.l.fract() != 0.0 || a.l < 1.0 {
                return Err(Error::Validation(format!("DL box half-height must be a positive integer, got {}", a.l)));
            }
            if a.c.fract() != 0.0 {
                return Err(Error::Validation(format!("DL noise counts edges; C = {} is not an integer", a.c)));
            }
            let graph = DlGraph::new(a.m, a.n)?;
            let model = match a.dl_noise {
                DlNoiseArg::Horizontal => DlNoise::Horizontal,
                DlNoiseArg::Walk => DlNoise::Walk,
            };
            let map = DlMap::new(graph, a.flip)?.with_noise(a.c as u32, model, a.seed);
            detect_dl(&map, &DlBox::centered(graph, a.l as u32)?, &cfg)?
        }
    };
    let mut table =
        Table::new(&["tile", "center_height", "orientation", "height_offset", "mass_fraction", "fit"]);
    for f in &det.local {
        table.push(vec![
            json!(f.tile),
            json!(f.center_height),
            json!(format!("{:?}", f.orientation).to_lowercase()),
            json!(f.height_offset),
            json!(f.mass_fraction),
            json!(f.fit),
        ]);
    }
    let mut result = serde_json::to_value(&det)?;
    result["reconciliation_note"] = json!(RECONCILIATION_NOTE);
    Ok(Report { spec, result, table })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_with(std::iter::once("sol-coarse").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    fn spec(params: Value) -> ExperimentSpec {
        ExperimentSpec {
            command: "coarse-diff".into(),
            params: params.as_object().unwrap().clone(),
            output: None,
            format: Format::Json,
        }
    }

    #[test]
    fn validation_names_the_parameter() {
        let errs = validate_spec(&spec(json!({ "seed": 1, "theta": 1.5 }))).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].param, "theta");
        let errs = validate_spec(&spec(json!({ "seed": 1, "r0": 1.0, "C": 1.0 }))).unwrap_err();
        assert!(errs[0].param.contains("ladder floor"));
        assert!(validate_spec(&spec(json!({ "seed": 1, "r0": 10.0, "C": 1.0, "theta": 0.1, "eps": 0.1 }))).is_ok());
        let errs = validate_spec(&spec(json!({ "theta": 0.1 }))).unwrap_err();
        assert_eq!(errs[0].param, "seed");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run_capture(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&[]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["--help"]).0, EXIT_OK);
        assert_eq!(run_capture(&["sol-distance", "--p", "0,0", "--q", "0,0,1"]).0, EXIT_INVALID);
        assert_eq!(run_capture(&["qi-detect"]).0, EXIT_INVALID);
        let (code, _, err) = run_capture(&["coarse-diff", "--seed", "1", "--theta", "1.5"]);
        assert_eq!(code, EXIT_INVALID);
        assert!(err.contains("theta"));
    }

    #[test]
    fn sol_distance_vertical() {
        let (code, out, _) = run_capture(&["sol-distance", "--p", "0,0,0", "--q", "0,0,7"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["result"]["lower"], 7.0);
        assert_eq!(v["result"]["upper"], 7.0);
        assert_eq!(v["params"]["p"], "0,0,0");
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn rounding_keeps_twelve_digits() {
        assert_eq!(round_sig(std::f64::consts::PI), 3.14159265359);
        assert_eq!(round_sig(0.0), 0.0);
        assert_eq!(round_sig(1e-20 / 3.0), 3.33333333333e-21);
    }

    #[test]
    fn empty_table_keeps_header() {
        let r = Report { spec: spec(json!({ "seed": 1 })), result: json!({}), table: Table::new(&["a", "b"]) };
        let csv = render_report(&r, Format::Csv).unwrap();
        assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>(), vec!["a,b"]);
    }

    #[test]
    fn config_file_is_overridden_by_flags() {
        let dir = std::env::temp_dir().join(format!("solqi-cfg-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let cfg = dir.join("box.cfg");
        fs::write(&cfg, "# DL box\nm = 3\nn = 2\nL = 2\n").unwrap();
        let c = cfg.to_str().unwrap();
        let (code, out, err) = run_capture(&["dl-box", "--config", c, "--L", "3"]);
        assert_eq!(code, 0, "{err}");
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["result"]["size"], 2059);
        assert_eq!(v["params"]["L"], 3);
        fs::remove_dir_all(&dir).unwrap();
    }
}
