//! Batch statistics over error samples, the flag rule, and the fix loop.
//!
//! For every float assignment the detector counts its dynamic executions `m`
//! over a batch of `n` runs and the number `k` of those whose relative error
//! exceeds `e0`. An instruction is flagged when `k/m > p0` and `m/n >= p1`.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::{BigInt, Sign};
use psop_mpfloat::MpFloat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{DualValue, Engine, EngineConfig, EngineError, RunTrace, SampleSink};
use crate::tac::{BarrierSet, InstrId, TacProgram};

pub const DEFAULT_E0: f64 = 1e-6;
pub const DEFAULT_P0: f64 = 0.5;
/// Minimum fraction of runs executing an instruction. Chosen here; there is
/// no canonical value.
pub const DEFAULT_P1: f64 = 0.1;
pub const E0_SWEEP: [f64; 4] = [1e-2, 1e-4, 1e-6, 1e-8];
pub const P0_SWEEP: [f64; 3] = [0.7, 0.6, 0.5];
pub const MAX_FIX_ITERATIONS: usize = 50;
/// Significant digits of serialized error values.
pub const REPORT_DIGITS: usize = 30;

/// Precision of means and threshold comparisons.
const STATS_PRECISION: u32 = 128;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("samples from `{expected}` mixed with samples from `{found}`")]
    MixedProvenance { expected: String, found: String },
    #[error("aggregates track different thresholds")]
    ThresholdMismatch,
    #[error("threshold e0 = {0} is not tracked by this aggregate")]
    UntrackedThreshold(f64),
    #[error("invalid detection config: {0}")]
    Config(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("no convergence after {} iterations", .0.len())]
    NoConvergence(Vec<IterationRecord>),
}

/// Which flagged instruction is fixed first.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FirstOrder {
    /// Smallest static id.
    #[default]
    Static,
    /// Earliest execution in the batch (run index, then execution order).
    Dynamic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub e0: f64,
    pub p0: f64,
    pub p1: f64,
    #[serde(default)]
    pub order: FirstOrder,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            e0: DEFAULT_E0,
            p0: DEFAULT_P0,
            p1: DEFAULT_P1,
            order: FirstOrder::Static,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.e0 > 0.0 && self.e0.is_finite()) {
            return Err(DetectError::Config(format!("e0 must be positive, got {}", self.e0)));
        }
        if !(self.p0 > 0.0 && self.p0 <= 1.0) {
            return Err(DetectError::Config(format!("p0 must be in (0, 1], got {}", self.p0)));
        }
        if !(self.p1 > 0.0 && self.p1.is_finite()) {
            return Err(DetectError::Config(format!("p1 must be positive, got {}", self.p1)));
        }
        Ok(())
    }
}

/// Exact sum of dyadic values.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub(crate) struct ExactSum {
    num: BigInt,
    scale: i64,
}

impl ExactSum {
    fn add_parts(&mut self, num: BigInt, scale: i64) {
        if num.sign() == Sign::NoSign {
            return;
        }
        if self.num.sign() == Sign::NoSign {
            self.num = num;
            self.scale = scale;
        } else if scale >= self.scale {
            self.num += num << (scale - self.scale) as usize;
        } else {
            self.num <<= (self.scale - scale) as usize;
            self.num += num;
            self.scale = scale;
        }
    }

    pub(crate) fn add(&mut self, v: &MpFloat) {
        if let Some((neg, mag, scale)) = v.to_parts() {
            let sign = if neg { Sign::Minus } else { Sign::Plus };
            self.add_parts(BigInt::from_biguint(sign, mag), scale);
        }
    }

    fn merge(&mut self, other: &ExactSum) {
        self.add_parts(other.num.clone(), other.scale);
    }

    /// `sum / count` rounded to `precision` bits.
    pub(crate) fn mean(&self, count: u64, precision: u32) -> MpFloat {
        if count == 0 || self.num.sign() == Sign::NoSign {
            return MpFloat::zero(precision);
        }
        let bits = (self.num.bits() as u32).max(2);
        let sum = MpFloat::from_parts(
            self.num.sign() == Sign::Minus,
            self.num.magnitude().clone(),
            self.scale,
            bits,
        );
        sum.div(&MpFloat::from_u64(count, 64), precision)
    }
}

/// Running statistics of one static instruction.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Tally {
    m: u64,
    /// Samples above each tracked threshold.
    k: Vec<u64>,
    infinite: u64,
    max: Option<MpFloat>,
    sum: ExactSum,
    /// (run, position within the run) of the first sample.
    first_seen: Option<(usize, u64)>,
}

impl Tally {
    fn new(thresholds: usize) -> Self {
        Tally {
            m: 0,
            k: vec![0; thresholds],
            infinite: 0,
            max: None,
            sum: ExactSum::default(),
            first_seen: None,
        }
    }

    fn merge(&mut self, other: &Tally) {
        self.m += other.m;
        for (a, b) in self.k.iter_mut().zip(&other.k) {
            *a += b;
        }
        self.infinite += other.infinite;
        self.max = match (self.max.take(), &other.max) {
            (Some(a), Some(b)) => Some(if b.compare(&a) == Some(std::cmp::Ordering::Greater) {
                b.clone()
            } else {
                a
            }),
            (a, b) => a.or_else(|| b.clone()),
        };
        self.sum.merge(&other.sum);
        self.first_seen = match (self.first_seen, other.first_seen) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }
}

/// Per-instruction statistics of a batch. Acts as a [`SampleSink`]; call
/// [`Aggregate::finish_run`] after each completed run.
#[derive(Clone, Debug)]
pub struct Aggregate {
    program: String,
    e0s: Vec<f64>,
    thresholds: Vec<MpFloat>,
    srclocs: BTreeMap<InstrId, String>,
    tallies: BTreeMap<InstrId, Tally>,
    runs: u64,
    current_run: Option<usize>,
    position: u64,
}

/// Equality of the accumulated statistics; the in-progress run position is
/// ignored.
impl PartialEq for Aggregate {
    fn eq(&self, other: &Self) -> bool {
        self.program == other.program
            && self.e0s == other.e0s
            && self.srclocs == other.srclocs
            && self.tallies == other.tallies
            && self.runs == other.runs
    }
}

/// Thresholds tracked by default: the sweep set.
pub fn default_thresholds() -> Vec<f64> {
    E0_SWEEP.to_vec()
}

impl Aggregate {
    /// Empty aggregate for `prog`, counting samples above each of `e0s`.
    pub fn new(prog: &TacProgram, e0s: &[f64]) -> Self {
        let mut list: Vec<f64> = e0s.to_vec();
        list.sort_by(|a, b| a.total_cmp(b));
        list.dedup();
        let thresholds = list.iter().map(|&e| threshold_value(e)).collect();
        let srclocs = prog
            .float_assignments()
            .map(|id| (id, prog.srcloc(id).to_string()))
            .collect::<BTreeMap<_, _>>();
        let tallies = srclocs.keys().map(|&id| (id, Tally::new(list.len()))).collect();
        Aggregate {
            program: prog.name.clone(),
            e0s: list,
            thresholds,
            srclocs,
            tallies,
            runs: 0,
            current_run: None,
            position: 0,
        }
    }

    pub fn program(&self) -> &str {
        &self.program
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.e0s
    }

    /// Number of completed runs.
    pub fn runs(&self) -> u64 {
        self.runs
    }

    pub fn finish_run(&mut self) {
        self.runs += 1;
        self.current_run = None;
    }

    fn record(&mut self, run: usize, instr: InstrId, rel_err: &MpFloat) {
        if self.current_run != Some(run) {
            self.current_run = Some(run);
            self.position = 0;
        }
        let position = self.position;
        self.position += 1;
        let width = self.thresholds.len();
        let tally = self.tallies.entry(instr).or_insert_with(|| Tally::new(width));
        tally.m += 1;
        for (k, t) in tally.k.iter_mut().zip(&self.thresholds) {
            if rel_err.compare(t) == Some(std::cmp::Ordering::Greater) {
                *k += 1;
            }
        }
        if rel_err.is_finite() {
            tally.sum.add(rel_err);
        } else {
            tally.infinite += 1;
        }
        let bigger = match &tally.max {
            None => true,
            Some(cur) => {
                !cur.is_infinite()
                    && (rel_err.is_infinite() || rel_err.compare(cur) == Some(std::cmp::Ordering::Greater))
            }
        };
        if bigger {
            tally.max = Some(rel_err.clone());
        }
        if tally.first_seen.is_none() {
            tally.first_seen = Some((run, position));
        }
    }

    /// Adds all samples of a completed run.
    pub fn add_trace(&mut self, trace: &RunTrace) -> Result<(), DetectError> {
        if trace.program != self.program {
            return Err(DetectError::MixedProvenance {
                expected: self.program.clone(),
                found: trace.program.clone(),
            });
        }
        for s in &trace.samples {
            self.record(trace.run, s.instr, &s.rel_err);
        }
        self.finish_run();
        Ok(())
    }

    /// Combines two partial aggregates of the same program.
    pub fn merge(mut self, other: &Aggregate) -> Result<Aggregate, DetectError> {
        if other.program != self.program {
            return Err(DetectError::MixedProvenance {
                expected: self.program.clone(),
                found: other.program.clone(),
            });
        }
        if other.e0s != self.e0s {
            return Err(DetectError::ThresholdMismatch);
        }
        for (id, loc) in &other.srclocs {
            self.srclocs.entry(*id).or_insert_with(|| loc.clone());
        }
        let width = self.thresholds.len();
        for (id, t) in &other.tallies {
            self.tallies.entry(*id).or_insert_with(|| Tally::new(width)).merge(t);
        }
        self.runs += other.runs;
        Ok(self)
    }

    fn threshold_index(&self, e0: f64) -> Result<usize, DetectError> {
        self.e0s
            .iter()
            .position(|&e| e == e0)
            .ok_or(DetectError::UntrackedThreshold(e0))
    }

    /// Materialized statistics at threshold `e0`.
    pub fn stats(&self, e0: f64) -> Result<Vec<InstrStats>, DetectError> {
        let idx = self.threshold_index(e0)?;
        Ok(self
            .tallies
            .iter()
            .map(|(&id, t)| InstrStats {
                id,
                srcloc: self.srclocs.get(&id).cloned().unwrap_or_default(),
                n: self.runs,
                m: t.m,
                k: t.k[idx],
                infinite: t.infinite,
                max_err: t.max.clone(),
                mean_err: (t.m > t.infinite).then(|| t.sum.mean(t.m - t.infinite, STATS_PRECISION)),
                first_seen: t.first_seen,
            })
            .collect())
    }
}

impl SampleSink for Aggregate {
    fn sample(&mut self, run: usize, instr: InstrId, _: &std::sync::Arc<str>, _: &DualValue, rel_err: MpFloat) {
        self.record(run, instr, &rel_err);
    }
}

/// Statistics of one instruction at one threshold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstrStats {
    pub id: InstrId,
    pub srcloc: String,
    /// Runs in the batch.
    pub n: u64,
    /// Dynamic executions.
    pub m: u64,
    /// Executions with relative error above `e0`.
    pub k: u64,
    /// Executions with infinite relative error (included in `k`).
    pub infinite: u64,
    pub max_err: Option<MpFloat>,
    /// Mean over finite samples.
    pub mean_err: Option<MpFloat>,
    first_seen: Option<(usize, u64)>,
}

/// `p` as the exact fraction of its shortest decimal form, so that 0.1
/// means one tenth rather than the nearest binary64 value.
fn decimal_fraction(p: f64) -> (BigInt, BigInt) {
    let text = format!("{p:e}");
    let (mant, exp) = text.split_once('e').expect("exponent form");
    let exp: i64 = exp.parse().expect("integer exponent");
    let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
    let num: BigInt = format!("{int}{frac}").parse().expect("decimal digits");
    let shift = exp - frac.len() as i64;
    let ten = BigInt::from(10);
    if shift >= 0 {
        (num * ten.pow(shift as u32), BigInt::from(1))
    } else {
        (num, ten.pow((-shift) as u32))
    }
}

/// `a / b > p` (or `>=` when `inclusive`), compared exactly.
fn ratio_exceeds(a: u64, b: u64, p: f64, inclusive: bool) -> bool {
    if b == 0 {
        return false;
    }
    let (num, den) = decimal_fraction(p);
    let lhs = BigInt::from(a) * den;
    let rhs = num * BigInt::from(b);
    lhs > rhs || (inclusive && lhs == rhs)
}

/// Threshold value of `e0`, read from its shortest decimal form.
fn threshold_value(e0: f64) -> MpFloat {
    MpFloat::from_decimal_string(&format!("{e0:e}"), STATS_PRECISION).expect("finite threshold")
}

impl InstrStats {
    pub fn is_flagged(&self, cfg: &DetectionConfig) -> bool {
        self.m > 0 && ratio_exceeds(self.k, self.m, cfg.p0, false) && ratio_exceeds(self.m, self.n, cfg.p1, true)
    }

    /// `k / m`, or 0 when never executed.
    pub fn ratio(&self) -> f64 {
        if self.m == 0 {
            0.0
        } else {
            self.k as f64 / self.m as f64
        }
    }
}

pub fn error_string(v: &MpFloat) -> String {
    if v.is_finite() {
        v.to_scientific(REPORT_DIGITS).to_e_notation()
    } else {
        v.to_decimal_string(REPORT_DIGITS)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstrRecord {
    pub id: InstrId,
    pub srcloc: String,
    pub n: u64,
    pub m: u64,
    pub k: u64,
    pub ratio: f64,
    pub max_err: Option<String>,
    pub mean_err: Option<String>,
    pub infinite: u64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub program: String,
    pub config: DetectionConfig,
    pub instructions: Vec<InstrRecord>,
    /// Flagged ids in static order.
    pub flagged: Vec<InstrId>,
    pub first_flagged: Option<InstrId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub iterations: Vec<IterationRecord>,
}

impl DetectionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Applies the flag rule to `agg` at `cfg`.
pub fn detect(agg: &Aggregate, cfg: &DetectionConfig) -> Result<DetectionReport, DetectError> {
    cfg.validate()?;
    let stats = agg.stats(cfg.e0)?;
    let mut flagged = Vec::new();
    let mut first: Option<(&InstrStats, (usize, u64))> = None;
    let mut instructions = Vec::with_capacity(stats.len());
    for s in &stats {
        let f = s.is_flagged(cfg);
        if f {
            flagged.push(s.id);
            let key = match cfg.order {
                FirstOrder::Static => (s.id, 0),
                FirstOrder::Dynamic => s.first_seen.unwrap_or((usize::MAX, 0)),
            };
            if first.as_ref().is_none_or(|(_, best)| key < *best) {
                first = Some((s, key));
            }
        }
        instructions.push(InstrRecord {
            id: s.id,
            srcloc: s.srcloc.clone(),
            n: s.n,
            m: s.m,
            k: s.k,
            ratio: s.ratio(),
            max_err: s.max_err.as_ref().map(error_string),
            mean_err: s.mean_err.as_ref().map(error_string),
            infinite: s.infinite,
            flagged: f,
        });
    }
    Ok(DetectionReport {
        program: agg.program.clone(),
        config: *cfg,
        instructions,
        flagged,
        first_flagged: first.map(|(s, _)| s.id),
        iterations: Vec::new(),
    })
}

/// Result for one `e0` of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub e0: f64,
    /// First `p0` with at least one flag, if any.
    pub p0: Option<f64>,
    pub report: DetectionReport,
}

/// For each `e0`, tries the `p0` values in order and keeps the first one
/// that flags something. Without any hit the entry holds the last report.
pub fn sweep(
    agg: &Aggregate,
    base: &DetectionConfig,
    e0s: &[f64],
    p0s: &[f64],
) -> Result<Vec<SweepEntry>, DetectError> {
    if e0s.is_empty() || p0s.is_empty() {
        return Err(DetectError::Config("empty sweep set".into()));
    }
    let mut out = Vec::with_capacity(e0s.len());
    for &e0 in e0s {
        let mut entry = None;
        for &p0 in p0s {
            let cfg = DetectionConfig { e0, p0, ..*base };
            let report = detect(agg, &cfg)?;
            let hit = !report.flagged.is_empty();
            entry = Some(SweepEntry {
                e0,
                p0: hit.then_some(p0),
                report,
            });
            if hit {
                break;
            }
        }
        out.push(entry.expect("non-empty p0 list"));
    }
    Ok(out)
}

/// Runs `prog` on every input and aggregates the samples. Runs are spread
/// over threads; the result does not depend on the split.
pub fn collect(
    prog: &TacProgram,
    inputs: &[Vec<MpFloat>],
    engine_cfg: &EngineConfig,
    barriers: &BarrierSet,
    e0s: &[f64],
) -> Result<Aggregate, DetectError> {
    if inputs.is_empty() {
        return Err(DetectError::EmptyBatch);
    }
    let engine = Engine::new(prog, engine_cfg)?;
    let empty = Aggregate::new(prog, e0s);
    inputs
        .par_iter()
        .enumerate()
        .try_fold(
            || empty.clone(),
            |mut agg, (i, input)| {
                engine.run(input, barriers, i, &mut agg)?;
                agg.finish_run();
                Ok::<_, DetectError>(agg)
            },
        )
        .try_reduce(|| empty.clone(), |a, b| a.merge(&b))
}

/// One pass of the fix loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Barriers in effect during this pass.
    pub barriers: Vec<InstrId>,
    pub flagged: Vec<InstrId>,
    /// Instruction barriered after this pass.
    pub added: Option<InstrId>,
}

impl fmt::Display for IterationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iteration {}: barriers {:?}, flagged {:?}",
            self.iteration, self.barriers, self.flagged
        )?;
        if let Some(id) = self.added {
            write!(f, ", adding {id}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FixOutcome {
    pub barriers: BarrierSet,
    pub iterations: Vec<IterationRecord>,
    /// Detection on the final barrier set (nothing flagged).
    pub report: DetectionReport,
}

/// Repeatedly runs the batch, detects, and barriers the first flagged
/// instruction, until nothing is flagged.
///
/// An instruction that stays flagged after being barriered is skipped in
/// favour of the next flagged one. If every flagged instruction is already
/// barriered, no further progress is possible and the loop fails with
/// [`DetectError::NoConvergence`], as it does after
/// [`MAX_FIX_ITERATIONS`] passes.
pub fn fix_iteratively(
    prog: &TacProgram,
    inputs: &[Vec<MpFloat>],
    engine_cfg: &EngineConfig,
    det_cfg: &DetectionConfig,
) -> Result<FixOutcome, DetectError> {
    det_cfg.validate()?;
    let mut barriers = BarrierSet::new();
    let mut log = Vec::new();
    for iteration in 1..=MAX_FIX_ITERATIONS {
        let agg = collect(prog, inputs, engine_cfg, &barriers, &[det_cfg.e0])?;
        let mut report = detect(&agg, det_cfg)?;
        let added = match det_cfg.order {
            FirstOrder::Static => report.flagged.iter().copied().find(|id| !barriers.contains(*id)),
            FirstOrder::Dynamic => {
                // Dynamic order among the remaining candidates.
                let stats = agg.stats(det_cfg.e0)?;
                stats
                    .iter()
                    .filter(|s| s.is_flagged(det_cfg) && !barriers.contains(s.id))
                    .min_by_key(|s| s.first_seen.unwrap_or((usize::MAX, 0)))
                    .map(|s| s.id)
            }
        };
        log.push(IterationRecord {
            iteration,
            barriers: barriers.sorted(),
            flagged: report.flagged.clone(),
            added,
        });
        if report.flagged.is_empty() {
            report.iterations = log.clone();
            return Ok(FixOutcome {
                barriers,
                iterations: log,
                report,
            });
        }
        match added {
            Some(id) => {
                barriers.insert(id);
            }
            None => return Err(DetectError::NoConvergence(log)),
        }
    }
    Err(DetectError::NoConvergence(log))
}
