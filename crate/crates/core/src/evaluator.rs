//! Accuracy comparison of a kernel's outputs against the oracle.
//!
//! For each input the kernel is run twice: once without barriers and once
//! with the supplied barrier set. Three results are compared with the oracle
//! value S:
//!
//! - OP: the original lane (identical in both runs),
//! - HP: the shadow lane of the unbarriered run,
//! - MP: the shadow lane of the barriered run.

use std::cmp::Ordering;
use std::fmt::Write;

use psop_mpfloat::{relative_error, MpFloat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{round_trip_digits, Kernel};
use crate::detector::{error_string, ExactSum};
use crate::engine::{DualValue, Engine, EngineConfig, EngineError};
use crate::tac::{BarrierSet, TacProgram};
use crate::transcendental::{Function, OracleConfig, OracleError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("kernel `{0}` has no reference function")]
    NoOracle(String),
    #[error("no rows to summarize")]
    EmptyInput,
    #[error("run {0}: original lane differs between the barriered and unbarriered runs")]
    LaneMismatch(usize),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvaluationRow {
    /// Inputs in round-trip decimal form.
    pub input: String,
    pub values: Vec<MpFloat>,
    /// Oracle value; `None` when the input is outside the function's domain.
    pub s: Option<MpFloat>,
    pub op: MpFloat,
    pub hp: MpFloat,
    pub mp: MpFloat,
    pub err_op: Option<MpFloat>,
    pub err_hp: Option<MpFloat>,
    pub err_mp: Option<MpFloat>,
    pub oracle_error: Option<String>,
}

fn shadow_of(v: &DualValue, cfg: &EngineConfig) -> MpFloat {
    v.shadow
        .clone()
        .unwrap_or_else(|| v.original.extend(cfg.p_shadow.max(v.original.precision())))
}

/// [`evaluate_program`] with the kernel's reference function.
pub fn evaluate(
    kernel: &Kernel,
    inputs: &[Vec<MpFloat>],
    engine_cfg: &EngineConfig,
    barriers: &BarrierSet,
    oracle: &OracleConfig,
) -> Result<Vec<EvaluationRow>, EvalError> {
    let function = kernel
        .oracle
        .ok_or_else(|| EvalError::NoOracle(kernel.name.to_string()))?;
    evaluate_program(&kernel.program, function, inputs, engine_cfg, barriers, oracle)
}

/// Runs `prog` on every input with and without `barriers` and compares the
/// three results with `function` evaluated at `oracle.precision` bits.
pub fn evaluate_program(
    prog: &TacProgram,
    function: Function,
    inputs: &[Vec<MpFloat>],
    engine_cfg: &EngineConfig,
    barriers: &BarrierSet,
    oracle: &OracleConfig,
) -> Result<Vec<EvaluationRow>, EvalError> {
    oracle.validate()?;
    let engine = Engine::new(prog, engine_cfg)?;
    let none = BarrierSet::new();
    let p_s = oracle.precision;
    let digits = round_trip_digits(engine_cfg.p_orig);
    inputs
        .par_iter()
        .enumerate()
        .map(|(i, values)| {
            let hp_run = engine.trace(values, &none, i)?;
            let mp_run = engine.trace(values, barriers, i)?;
            if hp_run.output.original != mp_run.output.original {
                return Err(EvalError::LaneMismatch(i));
            }
            let op = hp_run.output.original.clone();
            let hp = shadow_of(&hp_run.output, engine_cfg);
            let mp = shadow_of(&mp_run.output, engine_cfg);
            let (s, oracle_error) = match oracle.eval(function, values) {
                Ok(s) => (Some(s), None),
                Err(e @ OracleError::Domain { .. }) => (None, Some(e.to_string())),
                Err(e) => return Err(e.into()),
            };
            let err = |v: &MpFloat| s.as_ref().map(|s| relative_error(s, v, p_s));
            let input = values
                .iter()
                .map(|v| v.to_decimal_string(digits))
                .collect::<Vec<_>>()
                .join(" ");
            Ok(EvaluationRow {
                input,
                values: values.clone(),
                err_op: err(&op),
                err_hp: err(&hp),
                err_mp: err(&mp),
                s,
                op,
                hp,
                mp,
                oracle_error,
            })
        })
        .collect()
}

/// Share of rows where one lane's error is below (or equal to) another's.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Share {
    pub count: usize,
    pub total: usize,
}

impl Share {
    pub fn percent(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.count as f64 / self.total as f64
        }
    }
}

/// Mean of the finite errors of one lane, and how many were infinite.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LaneAverage {
    pub mean: Option<MpFloat>,
    pub finite: usize,
    pub infinite: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SummaryTable {
    pub kernel: String,
    pub rows: usize,
    /// Rows without an oracle value, excluded from everything else.
    pub domain_errors: usize,
    pub m_ge_l: Share,
    pub m_gt_l: Share,
    pub m_ge_h: Share,
    pub m_gt_h: Share,
    pub h_ge_l: Share,
    pub h_gt_l: Share,
    pub avg_mp: LaneAverage,
    pub avg_lp: LaneAverage,
    pub avg_hp: LaneAverage,
}

fn average(errors: &[&MpFloat], precision: u32) -> LaneAverage {
    let mut sum = ExactSum::default();
    let mut finite = 0;
    let mut infinite = 0;
    for e in errors {
        if e.is_finite() {
            sum.add(e);
            finite += 1;
        } else {
            infinite += 1;
        }
    }
    LaneAverage {
        mean: (finite > 0).then(|| sum.mean(finite as u64, precision)),
        finite,
        infinite,
    }
}

/// Table of comparison percentages and mean errors. "X is better than or
/// equal to Y" means X's relative error is at most Y's.
pub fn summarize(kernel: &str, rows: &[EvaluationRow], precision: u32) -> Result<SummaryTable, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    // (err_op, err_hp, err_mp) of rows with all three errors.
    type Errors<'a> = (&'a MpFloat, &'a MpFloat, &'a MpFloat);
    let scored: Vec<Errors> = rows
        .iter()
        .filter_map(|r| Some((r.err_op.as_ref()?, r.err_hp.as_ref()?, r.err_mp.as_ref()?)))
        .collect();
    let total = scored.len();
    let share = |pick: &dyn Fn(&Errors) -> (Ordering, bool)| {
        let count = scored
            .iter()
            .filter(|t| {
                let (ord, strict) = pick(t);
                ord == Ordering::Less || (!strict && ord == Ordering::Equal)
            })
            .count();
        Share { count, total }
    };
    let cmp = |a: &MpFloat, b: &MpFloat| a.compare(b).unwrap_or(Ordering::Greater);
    Ok(SummaryTable {
        kernel: kernel.to_string(),
        rows: rows.len(),
        domain_errors: rows.len() - total,
        m_ge_l: share(&|(l, _, m)| (cmp(m, l), false)),
        m_gt_l: share(&|(l, _, m)| (cmp(m, l), true)),
        m_ge_h: share(&|(_, h, m)| (cmp(m, h), false)),
        m_gt_h: share(&|(_, h, m)| (cmp(m, h), true)),
        h_ge_l: share(&|(l, h, _)| (cmp(h, l), false)),
        h_gt_l: share(&|(l, h, _)| (cmp(h, l), true)),
        avg_mp: average(&scored.iter().map(|t| t.2).collect::<Vec<_>>(), precision),
        avg_lp: average(&scored.iter().map(|t| t.0).collect::<Vec<_>>(), precision),
        avg_hp: average(&scored.iter().map(|t| t.1).collect::<Vec<_>>(), precision),
    })
}

/// Serialized form of a [`SummaryTable`]; errors are decimal strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub kernel: String,
    pub rows: usize,
    pub domain_errors: usize,
    pub m_ge_l: Share,
    pub m_gt_l: Share,
    pub m_ge_h: Share,
    pub m_gt_h: Share,
    pub h_ge_l: Share,
    pub h_gt_l: Share,
    pub avg_mp: Option<String>,
    pub avg_lp: Option<String>,
    pub avg_hp: Option<String>,
    pub inf_mp: usize,
    pub inf_lp: usize,
    pub inf_hp: usize,
}

impl SummaryTable {
    pub fn record(&self) -> SummaryRecord {
        let avg = |a: &LaneAverage| a.mean.as_ref().map(error_string);
        SummaryRecord {
            kernel: self.kernel.clone(),
            rows: self.rows,
            domain_errors: self.domain_errors,
            m_ge_l: self.m_ge_l,
            m_gt_l: self.m_gt_l,
            m_ge_h: self.m_ge_h,
            m_gt_h: self.m_gt_h,
            h_ge_l: self.h_ge_l,
            h_gt_l: self.h_gt_l,
            avg_mp: avg(&self.avg_mp),
            avg_lp: avg(&self.avg_lp),
            avg_hp: avg(&self.avg_hp),
            inf_mp: self.avg_mp.infinite,
            inf_lp: self.avg_lp.infinite,
            inf_hp: self.avg_hp.infinite,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "text" => Ok(ReportFormat::Text),
            other => Err(format!("unknown format `{other}` (json, csv, text)")),
        }
    }
}

pub const CSV_HEADER: &str =
    "kernel,rows,M>=L,M>L,M>=H,M>H,H>=L,H>L,AVG_MP,AVG_LP,AVG_HP,inf_MP,inf_LP,inf_HP,domain_errors";

fn pct(s: &Share) -> String {
    format!("{:.2}%", s.percent())
}

fn avg_text(a: &Option<String>) -> &str {
    a.as_deref().unwrap_or("-")
}

/// Renders tables as JSON (an array of records), CSV, or aligned text.
pub fn report(tables: &[SummaryTable], format: ReportFormat) -> String {
    let records: Vec<SummaryRecord> = tables.iter().map(SummaryTable::record).collect();
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(&records).expect("records serialize") + "\n",
        ReportFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for r in &records {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.kernel,
                    r.rows,
                    pct(&r.m_ge_l),
                    pct(&r.m_gt_l),
                    pct(&r.m_ge_h),
                    pct(&r.m_gt_h),
                    pct(&r.h_ge_l),
                    pct(&r.h_gt_l),
                    avg_text(&r.avg_mp),
                    avg_text(&r.avg_lp),
                    avg_text(&r.avg_hp),
                    r.inf_mp,
                    r.inf_lp,
                    r.inf_hp,
                    r.domain_errors
                );
            }
            out
        }
        ReportFormat::Text => {
            let mut out = String::new();
            let _ = writeln!(
                out,
                "{:<20} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
                "function", "M>=L", "M>L", "M>=H", "M>H", "H>=L", "H>L"
            );
            for r in &records {
                let _ = writeln!(
                    out,
                    "{:<20} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
                    r.kernel,
                    pct(&r.m_ge_l),
                    pct(&r.m_gt_l),
                    pct(&r.m_ge_h),
                    pct(&r.m_gt_h),
                    pct(&r.h_ge_l),
                    pct(&r.h_gt_l)
                );
            }
            out.push('\n');
            let _ = writeln!(
                out,
                "{:<20} {:>12} {:>12} {:>12}",
                "function", "AVG MP", "AVG LP", "AVG HP"
            );
            for r in &records {
                let short = |a: &Option<String>| {
                    a.as_ref()
                        .map(|s| {
                            let v = MpFloat::from_decimal_string(s, 64).expect("own output");
                            v.to_scientific(2).to_e_notation()
                        })
                        .unwrap_or_else(|| "-".into())
                };
                let _ = writeln!(
                    out,
                    "{:<20} {:>12} {:>12} {:>12}",
                    r.kernel,
                    short(&r.avg_mp),
                    short(&r.avg_lp),
                    short(&r.avg_hp)
                );
            }
            out
        }
    }
}

/// One CSV line per row: input, S, the three results and their errors.
pub fn rows_csv(rows: &[EvaluationRow]) -> String {
    let mut out = String::from("input,S,OP,HP,MP,err_OP,err_HP,err_MP\n");
    let text = |v: Option<&MpFloat>| v.map(error_string).unwrap_or_else(|| "-".into());
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.input,
            text(r.s.as_ref()),
            text(Some(&r.op)),
            text(Some(&r.hp)),
            text(Some(&r.mp)),
            text(r.err_op.as_ref()),
            text(r.err_hp.as_ref()),
            text(r.err_mp.as_ref())
        );
    }
    out
}
