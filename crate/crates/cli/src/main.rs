//! `psop`: run, detect, fix and evaluate precision-specific operations.
//!
//! Exit status: 0 on success, 1 for invalid arguments, programs, inputs or
//! domain errors, 2 for internal failures.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read as _, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use psop_core::corpus::{self, grid, kernel, round_trip_digits};
use psop_core::detector::{
    collect, error_string, fix_iteratively, sweep, DetectError, DetectionConfig, FirstOrder, DEFAULT_P0, E0_SWEEP,
    P0_SWEEP,
};
use psop_core::engine::{
    Engine, EngineConfig, EngineError, TraceDump, DEFAULT_ORIGINAL_PRECISION, DEFAULT_SHADOW_PRECISION,
};
use psop_core::evaluator::{evaluate_program, report, rows_csv, summarize, EvalError, ReportFormat};
use psop_core::tac::{parse_annotated, pretty_print, BarrierSet, TacProgram};
use psop_core::transcendental::{Expr, Function, OracleConfig, OracleError};
use psop_mpfloat::{Format, MpFloat};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "psop",
    version,
    about = "Detect and fix precision-specific floating-point operations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Execute a program on the given inputs.
    Run(RunArgs),
    /// Aggregate error samples over a batch and report flagged instructions.
    Detect(DetectArgs),
    /// Add barriers until no instruction is flagged.
    Fix(FixArgs),
    /// Compare original, high-precision and fixed results with the oracle.
    Eval(EvalArgs),
    /// Evaluate oracle expressions, one per line.
    Oracle(OracleArgs),
    /// List the built-in kernels.
    Kernels,
}

#[derive(Args, Debug)]
struct Source {
    /// Built-in kernel name.
    #[arg(long, conflicts_with = "program", required_unless_present = "program")]
    kernel: Option<String>,
    /// TAC program file.
    #[arg(long)]
    program: Option<PathBuf>,
    /// Input grid `lo,hi,count`.
    #[arg(long, conflicts_with = "input", allow_hyphen_values = true)]
    grid: Option<String>,
    /// `single:X[,Y...]` or a file with one literal per line.
    #[arg(long, allow_hyphen_values = true)]
    input: Option<String>,
    #[arg(long, default_value_t = DEFAULT_ORIGINAL_PRECISION)]
    p_orig: u32,
    #[arg(long, default_value_t = DEFAULT_SHADOW_PRECISION)]
    p_shadow: u32,
    /// Oracle precision (default from PSOP_ORACLE_PRECISION, else 256).
    #[arg(long)]
    p_s: Option<u32>,
    /// Barrier ids (`3,28`), or a file holding a list or `fix` JSON output.
    #[arg(long)]
    barriers: Option<String>,
    #[arg(long, value_enum, default_value_t = Fmt::Json)]
    format: Fmt,
    /// Write the main output here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Thresholds {
    /// Relative-error threshold.
    #[arg(long, default_value_t = 1e-6)]
    e0: f64,
    /// Large-error fraction threshold. `detect` tries 0.7, 0.6, 0.5 when
    /// omitted; `fix` and `eval` use 0.5.
    #[arg(long)]
    p0: Option<f64>,
    /// Minimum fraction of runs executing an instruction.
    #[arg(long, default_value_t = 0.1)]
    p1: f64,
    /// Fix the earliest-executed flagged instruction instead of the lowest id.
    #[arg(long)]
    dynamic_first: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Print the four-field trace of every float assignment.
    #[arg(long)]
    debug: bool,
    /// Significant digits of printed values.
    #[arg(long, default_value_t = 30)]
    digits: usize,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    thresholds: Thresholds,
    /// Sweep e0 over 1e-2, 1e-4, 1e-6, 1e-8.
    #[arg(long)]
    sweep: bool,
}

#[derive(Args, Debug)]
struct FixArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    thresholds: Thresholds,
    /// Write the program with barrier annotations to this file.
    #[arg(long)]
    emit_program: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    thresholds: Thresholds,
    /// Compute barriers with `fix` first.
    #[arg(long, conflicts_with = "barriers")]
    auto_fix: bool,
    /// Reference function for `--program` (kernels carry their own).
    #[arg(long)]
    function: Option<String>,
    /// Also write per-input rows as CSV.
    #[arg(long)]
    rows: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// Expression to evaluate; repeatable. Without any, lines are read from
    /// `--file` or standard input.
    #[arg(long = "expr", allow_hyphen_values = true)]
    exprs: Vec<String>,
    #[arg(long)]
    file: Option<PathBuf>,
    /// Oracle precision (default from PSOP_ORACLE_PRECISION, else 256).
    #[arg(long)]
    p_s: Option<u32>,
    #[arg(long, default_value_t = 30)]
    digits: usize,
    #[arg(long, value_enum, default_value_t = Fmt::Text)]
    format: Fmt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Fmt {
    Json,
    Csv,
    Text,
}

#[derive(Debug)]
enum CliError {
    /// Bad arguments, programs, inputs, or values outside a domain.
    Invalid(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

fn invalid(msg: impl std::fmt::Display) -> CliError {
    CliError::Invalid(msg.to_string())
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        invalid(e)
    }
}

impl From<DetectError> for CliError {
    fn from(e: DetectError) -> Self {
        invalid(e)
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::LaneMismatch(_) => CliError::Internal(e.to_string()),
            other => invalid(other),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        invalid(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = std::panic::catch_unwind(|| dispatch(cli));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            let (CliError::Invalid(msg) | CliError::Internal(msg)) = &e;
            eprintln!("psop: {msg}");
            ExitCode::from(e.code())
        }
        Err(_) => ExitCode::from(2),
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Fix(a) => cmd_fix(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Kernels => {
            let mut out = String::new();
            for k in corpus::builtin_kernels() {
                let oracle = k.oracle.map_or("-".to_string(), |f| f.to_string());
                let _ = writeln!(
                    out,
                    "{:<20} {:<6} [{}, {}] x {}",
                    k.name, oracle, k.domain.lo, k.domain.hi, k.domain.count
                );
            }
            emit(&out, None)
        }
    }
}

fn emit(text: &str, path: Option<&Path>) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Internal(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Internal(format!("standard output: {e}")))
        }
    }
}

fn json<T: Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn oracle_config(p_s: Option<u32>) -> CliResult<OracleConfig> {
    let mut cfg = OracleConfig::from_env()?;
    if let Some(p) = p_s {
        cfg.precision = p;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Program, its reference function, and barriers read from annotations.
struct Loaded {
    name: String,
    program: TacProgram,
    function: Option<Function>,
    annotated: BarrierSet,
    default_domain: Option<corpus::Domain>,
}

struct Setup {
    loaded: Loaded,
    engine: EngineConfig,
    oracle: OracleConfig,
    inputs: Vec<Vec<MpFloat>>,
    barriers: BarrierSet,
}

fn load(source: &Source) -> CliResult<Loaded> {
    if let Some(name) = &source.kernel {
        let k =
            kernel(name).map_err(|e| invalid(format!("{e}; known kernels: {}", corpus::kernel_names().join(", "))))?;
        return Ok(Loaded {
            name: k.name.to_string(),
            program: k.program,
            function: k.oracle,
            annotated: BarrierSet::new(),
            default_domain: Some(k.domain),
        });
    }
    let path = source
        .program
        .as_ref()
        .ok_or_else(|| invalid("one of --kernel or --program is required"))?;
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let (program, annotated) = parse_annotated(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    Ok(Loaded {
        name: program.name.clone(),
        program,
        function: None,
        annotated,
        default_domain: None,
    })
}

fn parse_grid(spec: &str, fmt: Format) -> CliResult<Vec<MpFloat>> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let [lo, hi, count] = parts.as_slice() else {
        return Err(invalid(format!("grid `{spec}`: expected lo,hi,count")));
    };
    let bound = |s: &str| {
        MpFloat::parse_literal(s, fmt)
            .ok()
            .filter(MpFloat::is_finite)
            .ok_or_else(|| invalid(format!("grid bound `{s}` is not a finite number")))
    };
    let count: usize = count
        .parse()
        .map_err(|_| invalid(format!("grid count `{count}` is not a positive integer")))?;
    grid(&bound(lo)?, &bound(hi)?, count, fmt).map_err(invalid)
}

fn inputs(source: &Source, loaded: &Loaded, fmt: Format) -> CliResult<Vec<Vec<MpFloat>>> {
    let arity = loaded.program.params.len();
    let tuples = |values: Vec<MpFloat>| -> CliResult<Vec<Vec<MpFloat>>> {
        if arity != 1 {
            return Err(invalid(format!(
                "`{}` takes {arity} inputs; use --input single:X,Y,...",
                loaded.name
            )));
        }
        Ok(values.into_iter().map(|v| vec![v]).collect())
    };
    if let Some(spec) = &source.grid {
        return tuples(parse_grid(spec, fmt)?);
    }
    match source.input.as_deref() {
        Some(spec) => match spec.strip_prefix("single:") {
            Some(list) => {
                let values = list
                    .split(',')
                    .map(|s| {
                        MpFloat::parse_literal(s.trim(), fmt)
                            .ok()
                            .filter(MpFloat::is_finite)
                            .ok_or_else(|| invalid(format!("input `{s}` is not a finite number")))
                    })
                    .collect::<CliResult<Vec<_>>>()?;
                if values.len() != arity {
                    return Err(invalid(format!(
                        "`{}` takes {arity} inputs, got {}",
                        loaded.name,
                        values.len()
                    )));
                }
                Ok(vec![values])
            }
            None => tuples(corpus::read_inputs(Path::new(spec), fmt).map_err(invalid)?),
        },
        None => {
            let d = loaded
                .default_domain
                .ok_or_else(|| invalid("no input source: give --grid or --input"))?;
            tuples(parse_grid(&format!("{},{},{}", d.lo, d.hi, d.count), fmt)?)
        }
    }
}

/// Barrier ids from a list (`3,28`, may be empty) or a file holding a list
/// or the JSON printed by `fix`.
fn parse_barriers(spec: &str) -> CliResult<BarrierSet> {
    let list = |text: &str| -> Option<BarrierSet> {
        text.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<usize>().ok())
            .collect()
    };
    if let Some(set) = list(spec) {
        return Ok(set);
    }
    let text = fs::read_to_string(spec).map_err(|e| invalid(format!("barriers `{spec}`: {e}")))?;
    if let Ok(value) = serde_json::from_str::<serde_json::Value>(&text) {
        let ids = value.get("barriers").unwrap_or(&value);
        return serde_json::from_value::<BarrierSet>(ids.clone()).map_err(|e| invalid(format!("{spec}: {e}")));
    }
    list(&text).ok_or_else(|| invalid(format!("{spec}: expected instruction ids")))
}

fn setup(source: &Source) -> CliResult<Setup> {
    let oracle = oracle_config(source.p_s)?;
    if !(source.p_orig < source.p_shadow && source.p_shadow <= oracle.precision) {
        return Err(invalid(format!(
            "precisions must satisfy p_orig < p_shadow <= p_s, got {} / {} / {}",
            source.p_orig, source.p_shadow, oracle.precision
        )));
    }
    let engine = EngineConfig {
        p_orig: source.p_orig,
        p_shadow: source.p_shadow,
        ..EngineConfig::default()
    };
    engine.validate()?;
    let loaded = load(source)?;
    let inputs = inputs(source, &loaded, engine.original_format())?;
    let mut barriers = loaded.annotated.clone();
    if let Some(spec) = &source.barriers {
        for id in parse_barriers(spec)?.sorted() {
            barriers.insert(id);
        }
    }
    if let Some(bad) = barriers
        .sorted()
        .into_iter()
        .find(|&id| id >= loaded.program.instrs.len())
    {
        return Err(invalid(format!(
            "barrier {bad} is not an instruction of `{}`",
            loaded.name
        )));
    }
    Ok(Setup {
        loaded,
        engine,
        oracle,
        inputs,
        barriers,
    })
}

fn detection_config(t: &Thresholds, p0: f64) -> CliResult<DetectionConfig> {
    let cfg = DetectionConfig {
        e0: t.e0,
        p0,
        p1: t.p1,
        order: if t.dynamic_first {
            FirstOrder::Dynamic
        } else {
            FirstOrder::Static
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

fn p0_list(t: &Thresholds) -> Vec<f64> {
    t.p0.map_or_else(|| P0_SWEEP.to_vec(), |p| vec![p])
}

#[derive(Serialize)]
struct RunRecord {
    input: String,
    original: String,
    shadow: Option<String>,
    relative_error: Option<String>,
    steps: u64,
}

fn cmd_run(a: RunArgs) -> CliResult<()> {
    let s = setup(&a.source)?;
    let engine = Engine::new(&s.loaded.program, &s.engine)?;
    let in_digits = round_trip_digits(s.engine.p_orig);
    let mut records = Vec::new();
    let mut debug = String::new();
    for (i, input) in s.inputs.iter().enumerate() {
        let mut dump = TraceDump::new(&s.engine);
        let summary = engine.run(input, &s.barriers, i, &mut dump)?;
        if a.debug {
            debug.push_str(&dump.text);
        }
        let out = &summary.output;
        records.push(RunRecord {
            input: input
                .iter()
                .map(|v| v.to_decimal_string(in_digits))
                .collect::<Vec<_>>()
                .join(","),
            original: out.original.to_decimal_string(a.digits),
            shadow: out.shadow.as_ref().map(|v| v.to_decimal_string(a.digits)),
            relative_error: out.relative_error(s.engine.error_precision).as_ref().map(error_string),
            steps: summary.steps,
        });
    }
    let text = match a.source.format {
        Fmt::Json => json(&records)?,
        Fmt::Csv => {
            let mut t = String::from("input,original,shadow,relative_error,steps\n");
            for r in &records {
                let _ = writeln!(
                    t,
                    "{},{},{},{},{}",
                    r.input,
                    r.original,
                    r.shadow.as_deref().unwrap_or("-"),
                    r.relative_error.as_deref().unwrap_or("-"),
                    r.steps
                );
            }
            t
        }
        Fmt::Text => {
            let mut t = String::new();
            for r in &records {
                let _ = writeln!(
                    t,
                    "{} -> original {}, shadow {}, relative error {}",
                    r.input,
                    r.original,
                    r.shadow.as_deref().unwrap_or("-"),
                    r.relative_error.as_deref().unwrap_or("-")
                );
            }
            t
        }
    };
    if a.debug {
        // The trace goes to standard output ahead of the results.
        emit(&debug, None)?;
    }
    emit(&text, a.source.output.as_deref())
}

fn cmd_detect(a: DetectArgs) -> CliResult<()> {
    let s = setup(&a.source)?;
    let t = &a.thresholds;
    let base = detection_config(t, t.p0.unwrap_or(P0_SWEEP[0]))?;
    let e0s: Vec<f64> = if a.sweep { E0_SWEEP.to_vec() } else { vec![t.e0] };
    let agg = collect(&s.loaded.program, &s.inputs, &s.engine, &s.barriers, &e0s)?;
    let entries = sweep(&agg, &base, &e0s, &p0_list(t))?;
    let text = match a.source.format {
        Fmt::Json if a.sweep => json(&entries)?,
        Fmt::Json => json(&entries[0].report)?,
        Fmt::Csv => {
            let mut out = String::from("e0,p0,id,srcloc,n,m,k,ratio,max_err,mean_err,flagged\n");
            for e in &entries {
                let p0 = e.p0.map_or("-".to_string(), |p| p.to_string());
                for r in &e.report.instructions {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{},{},{}",
                        e.e0,
                        p0,
                        r.id,
                        r.srcloc,
                        r.n,
                        r.m,
                        r.k,
                        r.ratio,
                        r.max_err.as_deref().unwrap_or("-"),
                        r.mean_err.as_deref().unwrap_or("-"),
                        r.flagged
                    );
                }
            }
            out
        }
        Fmt::Text => {
            let mut out = String::new();
            for e in &entries {
                let flagged = &e.report.flagged;
                match e.p0 {
                    Some(p0) => {
                        let _ = writeln!(out, "e0 {}: p0 {p0} flags {flagged:?}", e.e0);
                        for id in flagged {
                            let ins = &s.loaded.program.instrs[*id];
                            let _ = writeln!(out, "  {id} {} {}", ins.srcloc, ins.dst.as_deref().unwrap_or(""));
                        }
                    }
                    None => {
                        let _ = writeln!(out, "e0 {}: nothing flagged", e.e0);
                    }
                }
            }
            out
        }
    };
    emit(&text, a.source.output.as_deref())
}

#[derive(Serialize)]
struct FixRecord {
    program: String,
    barriers: BarrierSet,
    iterations: Vec<psop_core::detector::IterationRecord>,
}

/// Fix loop at the given p0, or the default 0.5 when none is given.
fn run_fix(s: &Setup, t: &Thresholds) -> CliResult<(BarrierSet, Vec<psop_core::detector::IterationRecord>)> {
    let cfg = detection_config(t, t.p0.unwrap_or(DEFAULT_P0))?;
    let outcome = match fix_iteratively(&s.loaded.program, &s.inputs, &s.engine, &cfg) {
        Ok(o) => o,
        Err(DetectError::NoConvergence(log)) => {
            let last = log.last().map(|r| r.to_string()).unwrap_or_default();
            return Err(invalid(format!(
                "no convergence after {} iterations; {last}",
                log.len()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    Ok((outcome.barriers, outcome.iterations))
}

fn cmd_fix(a: FixArgs) -> CliResult<()> {
    let s = setup(&a.source)?;
    let (barriers, iterations) = run_fix(&s, &a.thresholds)?;
    if let Some(path) = &a.emit_program {
        emit(&pretty_print(&s.loaded.program, &barriers), Some(path))?;
    }
    let record = FixRecord {
        program: s.loaded.name.clone(),
        barriers,
        iterations,
    };
    let text = match a.source.format {
        Fmt::Json => json(&record)?,
        Fmt::Csv => {
            let mut out = String::from("iteration,barriers,flagged,added\n");
            for r in &record.iterations {
                let ids = |v: &[usize]| v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
                let added = r.added.map_or("-".to_string(), |i| i.to_string());
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    r.iteration,
                    ids(&r.barriers),
                    ids(&r.flagged),
                    added
                );
            }
            out
        }
        Fmt::Text => {
            let mut out = String::new();
            for r in &record.iterations {
                let _ = writeln!(out, "{r}");
            }
            let _ = writeln!(out, "barriers: {:?}", record.barriers.sorted());
            out
        }
    };
    emit(&text, a.source.output.as_deref())
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let mut s = setup(&a.source)?;
    let function = match (&a.function, s.loaded.function) {
        (Some(name), _) => name.parse::<Function>()?,
        (None, Some(f)) => f,
        (None, None) => {
            return Err(invalid(format!(
                "`{}` has no reference function; pass --function",
                s.loaded.name
            )))
        }
    };
    if a.auto_fix {
        s.barriers = run_fix(&s, &a.thresholds)?.0;
    }
    let rows = evaluate_program(
        &s.loaded.program,
        function,
        &s.inputs,
        &s.engine,
        &s.barriers,
        &s.oracle,
    )?;
    if let Some(path) = &a.rows {
        emit(&rows_csv(&rows), Some(path))?;
    }
    let table = summarize(&s.loaded.name, &rows, s.oracle.precision)?;
    let format = match a.source.format {
        Fmt::Json => ReportFormat::Json,
        Fmt::Csv => ReportFormat::Csv,
        Fmt::Text => ReportFormat::Text,
    };
    emit(&report(&[table], format), a.source.output.as_deref())
}

#[derive(Serialize)]
struct OracleRecord {
    expr: String,
    value: Option<String>,
    error: Option<String>,
}

fn cmd_oracle(a: OracleArgs) -> CliResult<()> {
    let cfg = oracle_config(a.p_s)?;
    if a.digits == 0 {
        return Err(invalid("--digits must be positive"));
    }
    let lines: Vec<String> = if !a.exprs.is_empty() {
        a.exprs.clone()
    } else {
        let text = match &a.file {
            Some(p) => fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?,
            None => {
                let mut t = String::new();
                io::stdin()
                    .read_to_string(&mut t)
                    .map_err(|e| CliError::Internal(format!("standard input: {e}")))?;
                t
            }
        };
        text.lines()
            .map(|l| l.split('#').next().unwrap_or("").trim().to_string())
            .filter(|l| !l.is_empty())
            .collect()
    };
    let mut records = Vec::new();
    let mut failed = None;
    for line in &lines {
        let result = line.parse::<Expr>().and_then(|e| cfg.eval_expr(&e));
        match result {
            Ok(v) => records.push(OracleRecord {
                expr: line.clone(),
                value: Some(v.to_decimal_string(a.digits)),
                error: None,
            }),
            Err(e) => {
                failed.get_or_insert_with(|| format!("`{line}`: {e}"));
                records.push(OracleRecord {
                    expr: line.clone(),
                    value: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let text = match a.format {
        Fmt::Json => json(&records)?,
        Fmt::Csv => {
            let mut out = String::from("expr,value\n");
            for r in &records {
                let _ = writeln!(out, "\"{}\",{}", r.expr, r.value.as_deref().unwrap_or("-"));
            }
            out
        }
        Fmt::Text => {
            let mut out = String::new();
            for r in &records {
                let _ = writeln!(out, "{}", r.value.as_deref().unwrap_or("error"));
            }
            out
        }
    };
    emit(&text, None)?;
    match failed {
        Some(msg) => Err(invalid(msg)),
        None => Ok(()),
    }
}
