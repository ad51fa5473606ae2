//! Command-line front end. `run` parses arguments, computes, and writes one
//! table (CSV or JSON) plus diagnostics on the error stream.
//!
//! Exit codes: 0 success, 1 numerical alarm or failed check, 2 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::algebra::{verify_structure, ModelParams};
use crate::dist::{
    poisson_window, proposition41_check_n3, rightmost_configuration_check, rightmost_single_species_table,
    second_class_table, second_class_window, transition_probability, DistributionTable, InitialConfig, TargetConfig,
};
use crate::error::Error;
use crate::oracle::{evolve, rightmost_marginal, second_class_marginal, Species};
use crate::qcomb::verify_identities;
use crate::quadrature::{default_radius, ContourSettings};
use crate::sim::{estimate_pmf, estimate_rightmost_pmf};

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "SECOND_CLASS_THREADS";

/// `|Im|` above this is a numerical alarm.
pub const IMAG_ALARM: f64 = 1e-8;
/// Probabilities below `−NEGATIVE_ALARM` are a numerical alarm.
pub const NEGATIVE_ALARM: f64 = 1e-8;
/// Largest acceptable change of a row under `--cross-check`.
pub const CROSS_ALARM: f64 = 1e-8;
/// Rows whose half-grid discrepancy exceeds this are listed in a warning.
/// The discrepancy overstates the error of the full rule by many orders of
/// magnitude, so it does not change the exit code.
pub const QUAD_WARN: f64 = 1e-2;

#[derive(Debug, Parser)]
#[command(name = "second-class", version, about = "Law of a second-class particle in the two-species ASEP")]
#[command(args_override_self = true)]
pub struct Cli {
    /// key=value file pre-populating flags; flags on the command line win
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads (default: $SECOND_CLASS_THREADS, else all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact law of the second-class particle (or of the rightmost particle)
    Dist(DistArgs),
    /// One transition probability P_Y(X, ν_n; t)
    Transition(TransitionArgs),
    /// Monte Carlo estimate
    Simulate(SimulateArgs),
    /// Master-equation solution on a truncated window
    Oracle(OracleArgs),
    /// Formula, oracle and Monte Carlo side by side
    Compare(CompareArgs),
    /// Algebraic identities and structural checks
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Law {
    /// Position of the second-class particle
    SecondClass,
    /// Rightmost particle, all particles first class
    Rightmost,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Right-jump probability p in (0, 1)
    #[arg(long)]
    pub p: f64,
    /// Time t >= 0
    #[arg(long)]
    pub t: f64,
    /// Initial positions y_1 < ... < y_N, comma separated
    #[arg(long, allow_hyphen_values = true, value_name = "Y1,..,YN")]
    pub y: String,
    /// Tail budget used to size windows
    #[arg(long, default_value_t = 1e-12)]
    pub epsilon: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write the table here instead of standard output
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ContourArgs {
    /// Contour radius (default p/2)
    #[arg(long)]
    pub radius: Option<f64>,
    /// Nodes per circle (even)
    #[arg(long)]
    pub nodes: Option<usize>,
}

impl ContourArgs {
    fn settings(&self) -> ContourSettings {
        ContourSettings::new(self.radius, self.nodes)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DistArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Inclusive range lo:hi of positions (default: the Poisson window)
    #[arg(long, allow_hyphen_values = true, value_name = "LO:HI")]
    pub x_range: Option<String>,
    #[arg(long, value_enum, default_value_t = Law::SecondClass)]
    pub law: Law,
    #[command(flatten)]
    pub contour: ContourArgs,
    /// Recompute on a circle of 0.9 times the radius and raise an alarm on
    /// rows where the two disagree (doubles the run time)
    #[arg(long)]
    pub cross_check: bool,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TransitionArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Target positions x_1 < ... < x_N, comma separated
    #[arg(long, allow_hyphen_values = true, value_name = "X1,..,XN")]
    pub x: String,
    /// Slot of the second-class particle at time t (1-based)
    #[arg(long)]
    pub n: usize,
    #[command(flatten)]
    pub contour: ContourArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, allow_hyphen_values = true, value_name = "LO:HI")]
    pub x_range: Option<String>,
    #[arg(long, value_enum, default_value_t = Law::SecondClass)]
    pub law: Law,
    #[arg(long, default_value_t = 100_000)]
    pub replicas: u64,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OracleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, allow_hyphen_values = true, value_name = "LO:HI")]
    pub x_range: Option<String>,
    #[arg(long, value_enum, default_value_t = Law::SecondClass)]
    pub law: Law,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, allow_hyphen_values = true, value_name = "LO:HI")]
    pub x_range: Option<String>,
    #[arg(long, default_value_t = 100_000)]
    pub replicas: u64,
    #[arg(long)]
    pub seed: u64,
    /// Largest acceptable |formula − oracle|
    #[arg(long, default_value_t = 1e-7)]
    pub max_delta: f64,
    /// Largest acceptable |z| of the Monte Carlo estimate
    #[arg(long, default_value_t = 4.0)]
    pub max_z: f64,
    #[command(flatten)]
    pub contour: ContourArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0.7)]
    pub p: f64,
    /// Random points per identity
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Largest particle number for the identities (2..=6)
    #[arg(long, default_value_t = 6)]
    pub n_max: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Time for the configuration-sum checks
    #[arg(long, default_value_t = 0.5)]
    pub t: f64,
    /// Skip the configuration-sum checks (the slow part)
    #[arg(long)]
    pub quick: bool,
    #[command(flatten)]
    pub out: OutputArgs,
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Self { code: 2, message: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::DegenerateDenominator { .. } | Error::NonFiniteIntegrand | Error::WindowTooSmall { .. } => 1,
            _ => 2,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self { code: 2, message: format!("i/o error: {e}") }
    }
}

type CmdResult = std::result::Result<Outcome, Failure>;

/// A table ready to serialize.
struct Report {
    config: Value,
    header: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
    diagnostics: Map<String, Value>,
}

#[derive(Debug, Clone)]
enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format!("{x:.16e}"),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(i) => json!(i),
            Cell::Float(x) if x.is_finite() => json!(x),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
            Cell::Float(_) | Cell::Empty => Value::Null,
        }
    }
}

struct Outcome {
    report: Report,
    output: OutputArgs,
    /// Exit 1 with these messages after writing the table.
    alarms: Vec<String>,
    /// Printed but not fatal.
    warnings: Vec<String>,
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match with_config_file(args) {
        Ok(a) => a,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            return f.code;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return code;
        }
    };
    let threads = cli.threads.or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()));
    let result = match threads {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command)),
            Err(e) => Err(Failure::usage(format!("cannot start {n} threads: {e}"))),
        },
        Some(_) => Err(Failure::usage("thread count must be positive")),
        None => dispatch(&cli.command),
    };
    match result.and_then(|o| emit(o, stdout, stderr)) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: &Command) -> CmdResult {
    match cmd {
        Command::Dist(a) => cmd_dist(a),
        Command::Transition(a) => cmd_transition(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

fn emit(o: Outcome, stdout: &mut dyn Write, stderr: &mut dyn Write) -> std::result::Result<i32, Failure> {
    let text = match o.output.format {
        Format::Csv => render_csv(&o.report)?,
        Format::Json => render_json(&o.report),
    };
    match &o.output.output {
        Some(path) => std::fs::write(path, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    for w in &o.warnings {
        writeln!(stderr, "warning: {w}")?;
    }
    for a in &o.alarms {
        writeln!(stderr, "alarm: {a}")?;
    }
    Ok(if o.alarms.is_empty() { 0 } else { 1 })
}

fn render_csv(r: &Report) -> std::result::Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure { code: 2, message: format!("csv: {e}") };
    w.write_record(&r.header).map_err(io)?;
    for row in &r.rows {
        w.write_record(row.iter().map(Cell::csv)).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure { code: 2, message: format!("csv: {e}") })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn render_json(r: &Report) -> String {
    let rows: Vec<Value> = r
        .rows
        .iter()
        .map(|row| Value::Object(r.header.iter().zip(row).map(|(h, c)| (h.to_string(), c.json())).collect()))
        .collect();
    let doc = json!({ "config": r.config, "rows": rows, "diagnostics": r.diagnostics });
    let mut s = serde_json::to_string_pretty(&doc).expect("json values serialize");
    s.push('\n');
    s
}

/// Inserts `--key value` pairs from the `--config` file right after the
/// subcommand name, so later (command-line) occurrences override them.
fn with_config_file(args: Vec<OsString>) -> std::result::Result<Vec<OsString>, Failure> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--config" {
            path = strs.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::usage(format!("cannot read config {path}: {e}")))?;
    let mut extra = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| Failure::usage(format!("{path}:{}: expected key=value", ln + 1)))?;
        let k = k.trim().replace('_', "-");
        let v = v.trim();
        match v {
            "true" => extra.push(format!("--{k}")),
            "false" => {}
            _ => {
                extra.push(format!("--{k}"));
                extra.push(v.to_string());
            }
        }
    }
    let names = ["dist", "transition", "simulate", "oracle", "compare", "verify"];
    let pos =
        strs.iter().position(|a| names.contains(&a.as_str())).ok_or_else(|| Failure::usage("no subcommand given"))?;
    let mut out = args;
    let tail = out.split_off(pos + 1);
    out.extend(extra.into_iter().map(OsString::from));
    out.extend(tail);
    Ok(out)
}

fn parse_list(s: &str, what: &str) -> std::result::Result<Vec<i64>, Failure> {
    s.split(',')
        .map(|v| {
            v.trim().parse::<i64>().map_err(|_| Failure::usage(format!("{what}: cannot parse {v:?} as an integer")))
        })
        .collect()
}

fn parse_range(s: &str) -> std::result::Result<(i64, i64), Failure> {
    let (a, b) = s.split_once(':').ok_or_else(|| Failure::usage(format!("x-range {s:?} must look like LO:HI")))?;
    let lo = a.trim().parse().map_err(|_| Failure::usage(format!("x-range: bad lower end {a:?}")))?;
    let hi = b.trim().parse().map_err(|_| Failure::usage(format!("x-range: bad upper end {b:?}")))?;
    if lo > hi {
        return Err(Failure::usage(format!("x-range {lo}:{hi} is empty")));
    }
    Ok((lo, hi))
}

struct Model {
    params: ModelParams,
    y: InitialConfig,
    t: f64,
    eps: f64,
}

fn model(a: &ModelArgs) -> std::result::Result<Model, Failure> {
    let params = ModelParams::new(a.p)?;
    let y = InitialConfig::new(parse_list(&a.y, "y")?)?;
    if !(a.t >= 0.0 && a.t.is_finite()) {
        return Err(Failure::usage(format!("t must be finite and >= 0, got {}", a.t)));
    }
    if !(a.epsilon > 0.0 && a.epsilon < 1.0) {
        return Err(Failure::usage(format!("epsilon must lie in (0, 1), got {}", a.epsilon)));
    }
    Ok(Model { params, y, t: a.t, eps: a.epsilon })
}

fn default_range(m: &Model, law: Law, given: &Option<String>) -> std::result::Result<(i64, i64), Failure> {
    match given {
        Some(s) => parse_range(s),
        None => Ok(match law {
            Law::SecondClass => second_class_window(&m.y, m.t, m.eps),
            Law::Rightmost => {
                let (_, hi) = poisson_window(&m.y, m.t, m.eps);
                let k = hi - m.y.last();
                (m.y.last() - k, hi)
            }
        }),
    }
}

fn config_json<A: Serialize>(cmd: &str, a: &A) -> Value {
    let mut v = serde_json::to_value(a).expect("arguments serialize");
    if let Value::Object(o) = &mut v {
        o.insert("subcommand".into(), json!(cmd));
    }
    v
}

fn table_alarms(tab: &DistributionTable) -> Vec<String> {
    let mut alarms = tab.warnings.iter().filter(|w| w.contains("envelope")).cloned().collect::<Vec<_>>();
    if tab.max_imag_residual > IMAG_ALARM {
        alarms.push(format!("imaginary residue {:e} exceeds {IMAG_ALARM:e}", tab.max_imag_residual));
    }
    let bad = |p: f64| !p.is_finite() || !(-NEGATIVE_ALARM..=1.0 + NEGATIVE_ALARM).contains(&p);
    if let Some(r) = tab.rows.iter().find(|r| bad(r.probability)) {
        alarms.push(format!("probability {} at x = {} is not a probability", r.probability, r.x));
    }
    alarms
}

/// Non-fatal diagnostics: everything but the envelope, plus the rows whose
/// half-grid discrepancy is large.
fn table_warnings(tab: &DistributionTable) -> Vec<String> {
    let mut w: Vec<String> = tab.warnings.iter().filter(|w| !w.contains("envelope")).cloned().collect();
    let rough: Vec<i64> = tab.rows.iter().filter(|r| r.quad_error > QUAD_WARN).map(|r| r.x).collect();
    if let (Some(a), Some(b)) = (rough.first(), rough.last()) {
        w.push(format!(
            "{} rows in [{a}, {b}] have half-grid discrepancy above {QUAD_WARN:e}; check them with a larger --nodes",
            rough.len()
        ));
    }
    w
}

fn dist_table_diagnostics(tab: &DistributionTable) -> Map<String, Value> {
    let mut d = Map::new();
    d.insert("window".into(), json!([tab.x_lo, tab.x_hi]));
    d.insert("total".into(), json!(tab.total()));
    d.insert("max_quad_error".into(), json!(tab.max_quad_error));
    d.insert("max_imag_residual".into(), json!(tab.max_imag_residual));
    d.insert("warnings".into(), json!(tab.warnings));
    d
}

fn dist_rows(tab: &DistributionTable) -> Vec<Vec<Cell>> {
    tab.rows
        .iter()
        .map(|r| {
            vec![Cell::Int(r.x), Cell::Float(r.probability), Cell::Float(r.quad_error), Cell::Float(r.imag_residual)]
        })
        .collect()
}

const DIST_HEADER: [&str; 4] = ["x", "probability", "quad_error", "imag_residual"];

fn cmd_dist(a: &DistArgs) -> CmdResult {
    let m = model(&a.model)?;
    let (lo, hi) = default_range(&m, a.law, &a.x_range)?;
    let table = |settings: &ContourSettings| -> std::result::Result<DistributionTable, Failure> {
        Ok(match a.law {
            Law::SecondClass => second_class_table(&m.params, &m.y, m.t, lo, hi, settings)?,
            Law::Rightmost => rightmost_single_species_table(&m.params, &m.y, m.t, lo, hi, settings)?.0,
        })
    };
    let settings = a.contour.settings();
    let tab = table(&settings)?;
    let mut alarms = table_alarms(&tab);
    let mut diagnostics = dist_table_diagnostics(&tab);
    if a.cross_check {
        let r = settings.radius.unwrap_or_else(|| default_radius(&m.params, m.y.len()));
        let other = table(&ContourSettings::new(Some(0.9 * r), settings.nodes))?;
        let diffs: Vec<(i64, f64)> =
            tab.rows.iter().zip(&other.rows).map(|(u, v)| (u.x, (u.probability - v.probability).abs())).collect();
        let worst = diffs.iter().map(|d| d.1).fold(0.0, f64::max);
        let off: Vec<i64> = diffs.iter().filter(|d| d.1 > CROSS_ALARM).map(|d| d.0).collect();
        if let (Some(a), Some(b)) = (off.first(), off.last()) {
            alarms.push(format!(
                "{} rows in [{a}, {b}] change by more than {CROSS_ALARM:e} when the radius shrinks to {:.4}",
                off.len(),
                0.9 * r
            ));
        }
        diagnostics.insert("cross_check_radius".into(), json!(0.9 * r));
        diagnostics.insert("cross_check_max_diff".into(), json!(worst));
    }
    Ok(Outcome {
        alarms,
        warnings: table_warnings(&tab),
        report: Report {
            config: config_json("dist", a),
            header: DIST_HEADER.to_vec(),
            rows: dist_rows(&tab),
            diagnostics,
        },
        output: a.out.clone(),
    })
}

fn cmd_transition(a: &TransitionArgs) -> CmdResult {
    let m = model(&a.model)?;
    let x = TargetConfig::new(parse_list(&a.x, "x")?)?;
    let r = transition_probability(&m.params, &m.y, &x, a.n, m.t, &a.contour.settings())?;
    let xs = x.xs().iter().map(i64::to_string).collect::<Vec<_>>().join(" ");
    let mut alarms = Vec::new();
    if r.value.im.abs() > IMAG_ALARM {
        alarms.push(format!("imaginary residue {:e}", r.value.im.abs()));
    }
    if !(r.value.re >= -NEGATIVE_ALARM && r.value.re <= 1.0 + NEGATIVE_ALARM) {
        alarms.push(format!("probability {} is not a probability", r.value.re));
    }
    let mut diagnostics = Map::new();
    diagnostics.insert("nodes".into(), json!(r.nodes_used));
    Ok(Outcome {
        alarms,
        warnings: Vec::new(),
        report: Report {
            config: config_json("transition", a),
            header: vec!["x", "n", "probability", "quad_error", "imag_residual"],
            rows: vec![vec![
                Cell::Text(xs),
                Cell::Int(a.n as i64),
                Cell::Float(r.value.re),
                Cell::Float(r.error_estimate),
                Cell::Float(r.value.im.abs()),
            ]],
            diagnostics,
        },
        output: a.out.clone(),
    })
}

fn cmd_simulate(a: &SimulateArgs) -> CmdResult {
    let m = model(&a.model)?;
    let est = match a.law {
        Law::SecondClass => estimate_pmf(&m.params, &m.y, m.t, a.replicas, a.seed)?,
        Law::Rightmost => estimate_rightmost_pmf(&m.params, &m.y, m.t, a.replicas, a.seed)?,
    };
    let rows = match &a.x_range {
        Some(s) => {
            let (lo, hi) = parse_range(s)?;
            est.rows(lo, hi)
        }
        None => est.observed_rows(),
    };
    let mut diagnostics = Map::new();
    diagnostics.insert("mean".into(), json!(est.mean()));
    diagnostics.insert("support".into(), json!(est.support()));
    Ok(Outcome {
        alarms: Vec::new(),
        warnings: Vec::new(),
        report: Report {
            config: config_json("simulate", a),
            header: vec!["x", "estimate", "stderr", "replicas"],
            rows: rows
                .iter()
                .map(|r| {
                    vec![Cell::Int(r.x), Cell::Float(r.estimate), Cell::Float(r.stderr), Cell::Int(r.replicas as i64)]
                })
                .collect(),
            diagnostics,
        },
        output: a.out.clone(),
    })
}

fn oracle_table(m: &Model, law: Law) -> std::result::Result<(DistributionTable, Map<String, Value>), Failure> {
    if m.y.len() > 3 {
        return Err(Failure::usage("the master-equation oracle is limited to N <= 3"));
    }
    let species = match law {
        Law::SecondClass => Species::TwoSpecies,
        Law::Rightmost => Species::SingleSpecies,
    };
    let ev = evolve(&m.params, &m.y, m.t, m.eps, species)?;
    let tab = match law {
        Law::SecondClass => second_class_marginal(&ev),
        Law::Rightmost => rightmost_marginal(&ev),
    };
    let mut d = Map::new();
    d.insert("states".into(), json!(ev.space.len()));
    d.insert("truncation_order".into(), json!(ev.truncation_order));
    d.insert("escaped".into(), json!(ev.escaped));
    d.insert("series_tail".into(), json!(ev.series_tail));
    d.insert("total".into(), json!(ev.total()));
    Ok((tab, d))
}

fn cmd_oracle(a: &OracleArgs) -> CmdResult {
    let m = model(&a.model)?;
    let (tab, mut diagnostics) = oracle_table(&m, a.law)?;
    let (lo, hi) = match &a.x_range {
        Some(s) => parse_range(s)?,
        None => (tab.x_lo, tab.x_hi),
    };
    let rows = (lo..=hi)
        .map(|x| vec![Cell::Int(x), Cell::Float(tab.get(x).unwrap_or(0.0)), Cell::Float(0.0), Cell::Float(0.0)])
        .collect();
    diagnostics.insert("window".into(), json!([tab.x_lo, tab.x_hi]));
    Ok(Outcome {
        alarms: Vec::new(),
        warnings: Vec::new(),
        report: Report { config: config_json("oracle", a), header: DIST_HEADER.to_vec(), rows, diagnostics },
        output: a.out.clone(),
    })
}

fn cmd_compare(a: &CompareArgs) -> CmdResult {
    let m = model(&a.model)?;
    let (lo, hi) = default_range(&m, Law::SecondClass, &a.x_range)?;
    let formula = second_class_table(&m.params, &m.y, m.t, lo, hi, &a.contour.settings())?;
    let oracle = if m.y.len() <= 3 { Some(oracle_table(&m, Law::SecondClass)?.0) } else { None };
    let mc = estimate_pmf(&m.params, &m.y, m.t, a.replicas, a.seed)?;
    let r = a.replicas as f64;
    let mut rows = Vec::new();
    let mut max_delta: f64 = 0.0;
    let mut max_z: f64 = 0.0;
    for fr in &formula.rows {
        let f = fr.probability;
        let o = oracle.as_ref().map(|t| t.get(fr.x).unwrap_or(0.0));
        let e = mc.estimate(fr.x);
        // standard error of the estimator if the formula is right
        let se = (f.clamp(0.0, 1.0) * (1.0 - f.clamp(0.0, 1.0)) / r).sqrt();
        let z = if se > 0.0 {
            (e - f) / se
        } else if e == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        let delta = o.map(|o| f - o);
        if let Some(d) = delta {
            max_delta = max_delta.max(d.abs());
        }
        max_z = max_z.max(z.abs());
        rows.push(vec![
            Cell::Int(fr.x),
            Cell::Float(f),
            o.map_or(Cell::Empty, Cell::Float),
            Cell::Float(e),
            delta.map_or(Cell::Empty, Cell::Float),
            Cell::Float(z),
        ]);
    }
    let warnings = table_warnings(&formula);
    let mut alarms = table_alarms(&formula);
    if oracle.is_some() && max_delta > a.max_delta {
        alarms.push(format!("max |formula - oracle| = {max_delta:e} exceeds {:e}", a.max_delta));
    }
    if max_z > a.max_z {
        alarms.push(format!("max |z| = {max_z:.3} exceeds {}", a.max_z));
    }
    let mut diagnostics = dist_table_diagnostics(&formula);
    diagnostics.insert("max_delta_oracle".into(), if oracle.is_some() { json!(max_delta) } else { Value::Null });
    diagnostics.insert("max_abs_z".into(), if max_z.is_finite() { json!(max_z) } else { json!("inf") });
    Ok(Outcome {
        alarms,
        warnings,
        report: Report {
            config: config_json("compare", a),
            header: vec!["x", "formula", "oracle", "mc", "delta_oracle", "z_mc"],
            rows,
            diagnostics,
        },
        output: a.out.clone(),
    })
}

fn cmd_verify(a: &VerifyArgs) -> CmdResult {
    let params = ModelParams::new(a.p)?;
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    let mut add = |name: String, err: f64, tol: f64, evals: usize, passed: bool| {
        if !passed {
            failed.push(name.clone());
        }
        rows.push(vec![
            Cell::Text(name),
            Cell::Float(err),
            Cell::Float(tol),
            Cell::Int(evals as i64),
            Cell::Bool(passed),
        ]);
    };
    let ids = verify_identities(&params, a.n_max, a.trials, a.seed)?;
    for c in &ids.checks {
        add(c.name.clone(), c.max_rel_error, ids.tolerance, c.evaluations, c.passed);
    }
    let st = verify_structure(&params, a.trials, a.seed)?;
    for c in &st.checks {
        add(c.name.clone(), c.max_rel_error, st.tolerance, c.evaluations, c.passed);
    }
    if !a.quick {
        let settings = ContourSettings::default();
        let eps = 1e-9;
        let rc = rightmost_configuration_check(&params, &InitialConfig::step(2), a.t, eps, &settings)?;
        let n = (rc.x_hi - rc.x_lo + 1) as usize;
        add("rightmost law, configuration sum N=2".into(), rc.max_abs_diff, 1e-6, n, rc.max_abs_diff < 1e-6);
        add("rightmost law, truncation tail N=2".into(), rc.truncation_tail, 1e-8, 1, rc.truncation_tail < 1e-8);
        let pc = proposition41_check_n3(&params, &InitialConfig::step(3), a.t, eps, &settings)?;
        for (i, s) in pc.per_slot.iter().enumerate() {
            add(format!("per-slot identity N=3 n={}", i + 1), s.max_abs_diff, 1e-6, n, s.max_abs_diff < 1e-6);
        }
        add("per-slot sum reproduces the law N=3".into(), pc.sum_vs_theorem, 1e-9, n, pc.sum_vs_theorem < 1e-9);
    }
    let mut diagnostics = Map::new();
    diagnostics.insert("failed".into(), json!(failed));
    let alarms = failed.iter().map(|f| format!("check failed: {f}")).collect();
    Ok(Outcome {
        alarms,
        warnings: Vec::new(),
        report: Report {
            config: config_json("verify", a),
            header: vec!["check", "max_error", "tolerance", "evaluations", "passed"],
            rows,
            diagnostics,
        },
        output: a.out.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("second-class").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn time_zero_is_one_row() {
        let (code, out, _) = run_str(&["dist", "--p", "0.7", "--t", "0", "--y", "-2,-1,0"]);
        assert_eq!(code, 0);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "x,probability,quad_error,imag_residual");
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("0,1.0000000000000000e0,"), "{}", lines[1]);
    }

    #[test]
    fn bad_input_is_a_usage_error() {
        assert_eq!(run_str(&["dist", "--p", "0.7", "--t", "1", "--y", "0,-1"]).0, 2);
        assert_eq!(run_str(&["dist", "--p", "1.5", "--t", "1", "--y", "0"]).0, 2);
        assert_eq!(run_str(&["dist", "--p", "0.7", "--t", "1", "--y", "0", "--x-range", "3:1"]).0, 2);
        assert_eq!(run_str(&["simulate", "--p", "0.7", "--t", "1", "--y", "0"]).0, 2);
        assert_eq!(run_str(&["nonsense"]).0, 2);
        assert_eq!(run_str(&["--help"]).0, 0);
    }

    #[test]
    fn range_and_list_parsing() {
        assert_eq!(parse_range("-5:5").unwrap(), (-5, 5));
        assert!(parse_range("5").is_err());
        assert_eq!(parse_list("-2, -1,0", "y").unwrap(), vec![-2, -1, 0]);
        assert!(parse_list("1,x", "y").is_err());
    }

    #[test]
    fn config_file_fills_flags_and_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# test\np = 0.7\nt=0\ny=-2,-1,0\nformat=json\n").unwrap();
        let p = path.to_str().unwrap();
        let (code, out, _) = run_str(&["dist", "--config", p]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["config"]["model"]["p"], json!(0.7));
        let (code, out, _) = run_str(&["dist", "--config", p, "--format", "csv"]);
        assert_eq!(code, 0);
        assert!(out.starts_with("x,probability"));
    }
}
