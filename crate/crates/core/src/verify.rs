//! Empirical range verification and identity suites.
//!
//! [`verify_range`] checks, for every integer start in an inclusive range,
//! that iterating a `T0`/`Tk` family map reaches `3^k` within a step
//! budget. The range is split into contiguous shards processed by
//! independent workers; per-shard results merge into one report whose JSON
//! form is byte-identical whatever the shard count, and an optional
//! checkpoint file makes interrupted runs resumable without drift.
//!
//! Non-convergence within the budget is a recorded observation, never a
//! counterexample claim: the report always carries the budget it ran with.
//!
//! The identity checks at the bottom re-derive each structural identity of
//! the family two ways and compare exactly: scaling, the odd-start offset,
//! iterated conjugacy, and absorption into multiples of `3^k`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use num_integer::Integer;
use num_traits::{Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cycles::{self, atlas_order, CycleRecord};
use crate::maps::{conjugate_down, conjugate_up, pow3, MapFamily, MapSpec};
use crate::rational::{ExactInt, OddRational};

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("verification needs a T0 or Tk:<k> spec, got {0}")]
    UnsupportedFamily(String),
    #[error("reports cannot merge: {0}")]
    MergeConflict(String),
    #[error("checkpoint does not match this run: {0}")]
    CheckpointMismatch(String),
    #[error("malformed checkpoint: {0}")]
    CheckpointFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

mod exact_int_string {
    use super::ExactInt;
    use serde::{Deserialize, Deserializer, Serializer};
    use std::str::FromStr;

    pub fn serialize<S: Serializer>(v: &ExactInt, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ExactInt, D::Error> {
        let s = String::deserialize(d)?;
        ExactInt::from_str(&s).map_err(serde::de::Error::custom)
    }
}

/// A maximal statistic together with the smallest start achieving it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxSteps {
    pub value: u64,
    pub witness: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxValue {
    #[serde(with = "exact_int_string")]
    pub value: ExactInt,
    pub witness: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ShardStatus {
    Complete,
    Partial { last_verified: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardSpan {
    pub lo: u64,
    pub hi: u64,
    #[serde(flatten)]
    pub status: ShardStatus,
}

/// Aggregated outcome of a range run. Merging two reports over disjoint
/// ranges is associative and commutative; adjacent complete spans coalesce
/// so the shard layout leaves no trace in a finished report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema: String,
    pub spec: MapSpec,
    pub lo: u64,
    pub hi: u64,
    pub budget: u64,
    pub verified_count: u64,
    pub non_converged: Vec<u64>,
    pub max_total_stopping_time: Option<MaxSteps>,
    pub max_excursion: Option<MaxValue>,
    pub shard_info: Vec<ShardSpan>,
}

pub const REPORT_SCHEMA: &str = "threenc.report/1";

impl VerificationReport {
    pub fn is_complete(&self) -> bool {
        self.shard_info.iter().all(|s| s.status == ShardStatus::Complete)
    }

    pub fn all_converged(&self) -> bool {
        self.non_converged.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// Single-row CSV with a header; the non-converged list is
    /// semicolon-joined inside the field.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "spec,lo,hi,budget,verified_count,non_converged,\
             max_total_stopping_time,tst_witness,max_excursion,excursion_witness\n",
        );
        let nc: Vec<String> = self.non_converged.iter().map(u64::to_string).collect();
        let (tst, tst_w) = match &self.max_total_stopping_time {
            Some(m) => (m.value.to_string(), m.witness.to_string()),
            None => (String::new(), String::new()),
        };
        let (exc, exc_w) = match &self.max_excursion {
            Some(m) => (m.value.to_string(), m.witness.to_string()),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            self.spec,
            self.lo,
            self.hi,
            self.budget,
            self.verified_count,
            nc.join(";"),
            tst,
            tst_w,
            exc,
            exc_w,
        );
        out
    }

    /// Combines reports over disjoint ranges. Maxima take the larger
    /// value; on ties the smaller witness wins, which keeps the result
    /// independent of merge order.
    pub fn merge(&self, other: &VerificationReport) -> Result<VerificationReport, VerifyError> {
        if self.spec != other.spec {
            return Err(VerifyError::MergeConflict("different specs".into()));
        }
        if self.budget != other.budget {
            return Err(VerifyError::MergeConflict("different budgets".into()));
        }
        if self.lo <= other.hi && other.lo <= self.hi {
            return Err(VerifyError::MergeConflict(format!(
                "ranges [{}, {}] and [{}, {}] overlap",
                self.lo, self.hi, other.lo, other.hi
            )));
        }

        fn pick_steps(a: &Option<MaxSteps>, b: &Option<MaxSteps>) -> Option<MaxSteps> {
            match (a, b) {
                (Some(x), Some(y)) => Some(
                    if (y.value, std::cmp::Reverse(y.witness))
                        > (x.value, std::cmp::Reverse(x.witness))
                    {
                        y.clone()
                    } else {
                        x.clone()
                    },
                ),
                (x, y) => x.clone().or_else(|| y.clone()),
            }
        }
        fn pick_value(a: &Option<MaxValue>, b: &Option<MaxValue>) -> Option<MaxValue> {
            match (a, b) {
                (Some(x), Some(y)) => {
                    let y_wins = y.value > x.value
                        || (y.value == x.value && y.witness < x.witness);
                    Some(if y_wins { y.clone() } else { x.clone() })
                }
                (x, y) => x.clone().or_else(|| y.clone()),
            }
        }

        let mut non_converged =
            [self.non_converged.as_slice(), other.non_converged.as_slice()].concat();
        non_converged.sort_unstable();
        let mut shard_info = [self.shard_info.as_slice(), other.shard_info.as_slice()].concat();
        shard_info.sort_by_key(|s| s.lo);

        Ok(VerificationReport {
            schema: REPORT_SCHEMA.to_string(),
            spec: self.spec.clone(),
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
            budget: self.budget,
            verified_count: self.verified_count + other.verified_count,
            non_converged,
            max_total_stopping_time: pick_steps(
                &self.max_total_stopping_time,
                &other.max_total_stopping_time,
            ),
            max_excursion: pick_value(&self.max_excursion, &other.max_excursion),
            shard_info: coalesce(shard_info),
        })
    }
}

fn coalesce(spans: Vec<ShardSpan>) -> Vec<ShardSpan> {
    let mut out: Vec<ShardSpan> = Vec::with_capacity(spans.len());
    for span in spans {
        match out.last_mut() {
            Some(prev)
                if prev.status == ShardStatus::Complete
                    && span.status == ShardStatus::Complete
                    && prev.hi + 1 == span.lo =>
            {
                prev.hi = span.hi;
            }
            _ => out.push(span),
        }
    }
    out
}

/// Knobs for a range run.
#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Map applications allowed per start.
    pub budget: u64,
    /// Contiguous sub-ranges processed independently. The merged report
    /// does not depend on this.
    pub shards: u32,
    /// Starts per checkpoint slice.
    pub chunk: u64,
    /// Checkpoint file, written atomically after every processed chunk and
    /// consumed on restart to skip verified prefixes.
    pub checkpoint: Option<PathBuf>,
    /// Stop after this many chunks and return a partial report (the
    /// checkpoint, if any, stays valid). `None` runs to completion.
    pub max_chunks: Option<u64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            budget: 10_000,
            shards: 1,
            chunk: 8_192,
            checkpoint: None,
            max_chunks: None,
        }
    }
}

// ---------------------------------------------------------------------------
// The per-start kernel.

/// Exact integer trajectory runner for `T_c` with positive integer `c`.
/// Values run in u128 while they fit — overflow falls back to the big
/// integer loop, recomputing the start from scratch — so the arithmetic is
/// exact on both paths.
struct Kernel {
    constant_big: ExactInt,
    target_big: ExactInt,
    small: Option<(u128, u128)>,
}

impl Kernel {
    fn new(spec: &MapSpec) -> Result<Self, VerifyError> {
        let k = match spec.family() {
            MapFamily::Classic => 0,
            MapFamily::PowerOfThree { k } => *k,
            _ => return Err(VerifyError::UnsupportedFamily(spec.to_string())),
        };
        let target_big = pow3(k);
        let small = u128::try_from(&target_big).ok().map(|t| (t, t));
        Ok(Kernel { constant_big: target_big.clone(), target_big, small })
    }

    /// Runs one start. Returns the stopping time (iterate index at which
    /// the value first equals `3^k`, `None` if not within budget) and the
    /// largest iterate visited.
    fn run(&self, start: u64, budget: u64) -> (Option<u64>, ExactInt) {
        if let Some((constant, target)) = self.small {
            if let Some(outcome) = run_small(start, constant, target, budget) {
                return (outcome.0, outcome.1.into());
            }
        }
        self.run_big(start, budget)
    }

    fn run_big(&self, start: u64, budget: u64) -> (Option<u64>, ExactInt) {
        let mut value = ExactInt::from(start);
        let mut max = value.clone();
        for index in 0..=budget {
            if value == self.target_big {
                return (Some(index), max);
            }
            if index == budget {
                break;
            }
            value = if value.is_odd() {
                (3 * &value + &self.constant_big) / 2
            } else {
                value / 2
            };
            if value > max {
                max = value.clone();
            }
        }
        (None, max)
    }
}

fn run_small(start: u64, constant: u128, target: u128, budget: u64) -> Option<(Option<u64>, u128)> {
    let mut value = start as u128;
    let mut max = value;
    for index in 0..=budget {
        if value == target {
            return Some((Some(index), max));
        }
        if index == budget {
            break;
        }
        value = if value & 1 == 1 {
            value.checked_mul(3)?.checked_add(constant)? / 2
        } else {
            value / 2
        };
        if value > max {
            max = value;
        }
    }
    Some((None, max))
}

// ---------------------------------------------------------------------------
// Shard state and checkpointing.

#[derive(Debug, Clone, PartialEq, Eq)]
struct ShardState {
    lo: u64,
    hi: u64,
    /// Next start to verify; `hi + 1` once complete.
    next: u64,
    verified: u64,
    non_converged: Vec<u64>,
    max_tst: Option<MaxSteps>,
    max_exc: Option<MaxValue>,
}

impl ShardState {
    fn fresh(lo: u64, hi: u64) -> Self {
        ShardState {
            lo,
            hi,
            next: lo,
            verified: 0,
            non_converged: Vec::new(),
            max_tst: None,
            max_exc: None,
        }
    }

    fn complete(&self) -> bool {
        self.next > self.hi
    }

    fn span(&self) -> ShardSpan {
        let status = if self.complete() {
            ShardStatus::Complete
        } else {
            ShardStatus::Partial { last_verified: self.next - 1 }
        };
        ShardSpan { lo: self.lo, hi: self.hi, status }
    }
}

fn plan_shards(lo: u64, hi: u64, shards: u32) -> Vec<(u64, u64)> {
    let total = hi - lo + 1;
    let shards = u64::from(shards.max(1)).min(total);
    let width = total / shards;
    let remainder = total % shards;
    let mut spans = Vec::with_capacity(shards as usize);
    let mut cursor = lo;
    for i in 0..shards {
        let extra = u64::from(i < remainder);
        let end = cursor + width + extra - 1;
        spans.push((cursor, end));
        cursor = end + 1;
    }
    debug_assert_eq!(cursor, hi + 1);
    spans
}

const CHECKPOINT_MAGIC: &str = "threenc-checkpoint v1";

fn opt_steps_field(m: &Option<MaxSteps>) -> String {
    m.as_ref().map_or_else(|| "-".into(), |m| format!("{}@{}", m.value, m.witness))
}

fn opt_value_field(m: &Option<MaxValue>) -> String {
    m.as_ref().map_or_else(|| "-".into(), |m| format!("{}@{}", m.value, m.witness))
}

fn write_checkpoint(
    path: &Path,
    spec: &MapSpec,
    budget: u64,
    lo: u64,
    hi: u64,
    states: &[ShardState],
) -> Result<(), VerifyError> {
    let mut body = String::new();
    let _ = writeln!(body, "{CHECKPOINT_MAGIC}");
    let _ = writeln!(body, "spec {spec}");
    let _ = writeln!(body, "budget {budget}");
    let _ = writeln!(body, "range {lo} {hi}");
    for s in states {
        let nc = if s.non_converged.is_empty() {
            "-".to_string()
        } else {
            s.non_converged.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
        };
        let _ = writeln!(
            body,
            "{} {} {} tst={} exc={} nc={}",
            s.lo,
            s.hi,
            s.next - 1,
            opt_steps_field(&s.max_tst),
            opt_value_field(&s.max_exc),
            nc,
        );
    }
    // Write-temp-then-rename keeps a crash from leaving a torn file.
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(body.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_checkpoint(
    path: &Path,
    spec: &MapSpec,
    budget: u64,
    lo: u64,
    hi: u64,
) -> Result<Vec<ShardState>, VerifyError> {
    let content = fs::read_to_string(path)?;
    let bad = |msg: &str| VerifyError::CheckpointFormat(format!("{msg} in {}", path.display()));
    let mismatch = |msg: String| VerifyError::CheckpointMismatch(msg);

    let mut lines = content.lines();
    if lines.next() != Some(CHECKPOINT_MAGIC) {
        return Err(bad("missing magic line"));
    }
    let spec_line = lines.next().ok_or_else(|| bad("missing spec line"))?;
    let file_spec = spec_line
        .strip_prefix("spec ")
        .ok_or_else(|| bad("missing spec line"))?;
    if file_spec != spec.to_string() {
        return Err(mismatch(format!("checkpoint is for {file_spec}, run is {spec}")));
    }
    let budget_line = lines.next().ok_or_else(|| bad("missing budget line"))?;
    let file_budget: u64 = budget_line
        .strip_prefix("budget ")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("bad budget line"))?;
    if file_budget != budget {
        return Err(mismatch(format!("checkpoint budget {file_budget}, run budget {budget}")));
    }
    let range_line = lines.next().ok_or_else(|| bad("missing range line"))?;
    let mut range_parts = range_line
        .strip_prefix("range ")
        .ok_or_else(|| bad("bad range line"))?
        .split_whitespace();
    let file_lo: u64 = range_parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad("bad range lo"))?;
    let file_hi: u64 = range_parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad("bad range hi"))?;
    if (file_lo, file_hi) != (lo, hi) {
        return Err(mismatch(format!(
            "checkpoint range [{file_lo}, {file_hi}], run range [{lo}, {hi}]"
        )));
    }

    let parse_at = |field: &str| -> Option<(String, u64)> {
        let (v, w) = field.split_once('@')?;
        Some((v.to_string(), w.parse().ok()?))
    };

    let mut states = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(bad("shard record needs at least lo, hi, last_verified"));
        }
        let lo: u64 = fields[0].parse().map_err(|_| bad("bad shard lo"))?;
        let hi: u64 = fields[1].parse().map_err(|_| bad("bad shard hi"))?;
        let last: u64 = fields[2].parse().map_err(|_| bad("bad last_verified"))?;
        let mut state = ShardState::fresh(lo, hi);
        state.next = last + 1;
        for field in &fields[3..] {
            if let Some(v) = field.strip_prefix("tst=") {
                if v != "-" {
                    let (value, witness) = parse_at(v).ok_or_else(|| bad("bad tst field"))?;
                    let value = value.parse().map_err(|_| bad("bad tst value"))?;
                    state.max_tst = Some(MaxSteps { value, witness });
                }
            } else if let Some(v) = field.strip_prefix("exc=") {
                if v != "-" {
                    let (value, witness) = parse_at(v).ok_or_else(|| bad("bad exc field"))?;
                    let value = value.parse().map_err(|_| bad("bad exc value"))?;
                    state.max_exc = Some(MaxValue { value, witness });
                }
            } else if let Some(v) = field.strip_prefix("nc=") {
                if v != "-" {
                    for item in v.split(',') {
                        state
                            .non_converged
                            .push(item.parse().map_err(|_| bad("bad nc item"))?);
                    }
                }
            }
        }
        state.verified = (state.next - state.lo) - state.non_converged.len() as u64;
        states.push(state);
    }
    if states.is_empty() {
        return Err(bad("no shard records"));
    }
    Ok(states)
}

// ---------------------------------------------------------------------------
// The range runner.

struct ChunkOutcome {
    shard: usize,
    hi: u64,
    verified: u64,
    non_converged: Vec<u64>,
    max_tst: Option<MaxSteps>,
    max_exc: Option<MaxValue>,
}

fn process_chunk(kernel: &Kernel, shard: usize, lo: u64, hi: u64, budget: u64) -> ChunkOutcome {
    let mut out = ChunkOutcome {
        shard,
        hi,
        verified: 0,
        non_converged: Vec::new(),
        max_tst: None,
        max_exc: None,
    };
    for n in lo..=hi {
        let (stopping, excursion) = kernel.run(n, budget);
        match stopping {
            Some(steps) => {
                out.verified += 1;
                // Ascending n: replace only on strictly larger values and
                // the witness is automatically the smallest.
                if out.max_tst.as_ref().is_none_or(|m| steps > m.value) {
                    out.max_tst = Some(MaxSteps { value: steps, witness: n });
                }
            }
            None => out.non_converged.push(n),
        }
        if out.max_exc.as_ref().is_none_or(|m| excursion > m.value) {
            out.max_exc = Some(MaxValue { value: excursion, witness: n });
        }
    }
    out
}

fn apply_chunk(state: &mut ShardState, outcome: ChunkOutcome) {
    debug_assert_eq!(state.next, outcome.hi + 1 - (outcome.verified + outcome.non_converged.len() as u64));
    state.next = outcome.hi + 1;
    state.verified += outcome.verified;
    state.non_converged.extend(outcome.non_converged);
    if let Some(m) = outcome.max_tst {
        if state.max_tst.as_ref().is_none_or(|cur| m.value > cur.value) {
            state.max_tst = Some(m);
        }
    }
    if let Some(m) = outcome.max_exc {
        if state.max_exc.as_ref().is_none_or(|cur| m.value > cur.value) {
            state.max_exc = Some(m);
        }
    }
}

fn report_from_states(
    spec: &MapSpec,
    lo: u64,
    hi: u64,
    budget: u64,
    states: &[ShardState],
) -> VerificationReport {
    let shard_reports: Vec<VerificationReport> = states
        .iter()
        .map(|s| VerificationReport {
            schema: REPORT_SCHEMA.to_string(),
            spec: spec.clone(),
            lo: s.lo,
            hi: s.hi,
            budget,
            verified_count: s.verified,
            non_converged: s.non_converged.clone(),
            max_total_stopping_time: s.max_tst.clone(),
            max_excursion: s.max_exc.clone(),
            shard_info: vec![s.span()],
        })
        .collect();
    let mut merged = shard_reports[0].clone();
    for r in &shard_reports[1..] {
        merged = merged.merge(r).expect("planned shards are disjoint");
    }
    // The hull of the shard spans is the requested range even when some
    // shards have not produced anything yet.
    merged.lo = lo;
    merged.hi = hi;
    merged
}

/// Verifies every start in `[lo, hi]` and aggregates the outcome. The
/// report is deterministic for fixed `(spec, lo, hi, budget)` whatever the
/// shard count, chunk size, or interrupt/resume history.
pub fn verify_range(
    spec: &MapSpec,
    lo: u64,
    hi: u64,
    opts: &VerifyOptions,
) -> Result<VerificationReport, VerifyError> {
    if lo < 1 || lo > hi {
        return Err(VerifyError::InvalidRange(format!(
            "need 1 <= lo <= hi, got lo = {lo}, hi = {hi}"
        )));
    }
    if opts.budget < 1 {
        return Err(VerifyError::InvalidRange("budget must be at least 1".into()));
    }
    let kernel = Kernel::new(spec)?;

    let mut states = match &opts.checkpoint {
        Some(path) if path.exists() => read_checkpoint(path, spec, opts.budget, lo, hi)?,
        _ => plan_shards(lo, hi, opts.shards)
            .into_iter()
            .map(|(a, b)| ShardState::fresh(a, b))
            .collect(),
    };

    let chunk = opts.chunk.max(1);
    let mut allowance = opts.max_chunks;
    loop {
        let mut claims: Vec<(usize, u64, u64)> = Vec::new();
        for (i, s) in states.iter().enumerate() {
            if s.complete() {
                continue;
            }
            if let Some(left) = &mut allowance {
                if *left == 0 {
                    break;
                }
                *left -= 1;
            }
            let end = s.hi.min(s.next + chunk - 1);
            claims.push((i, s.next, end));
        }
        if claims.is_empty() {
            break;
        }
        let outcomes: Vec<ChunkOutcome> = claims
            .into_par_iter()
            .map(|(i, a, b)| process_chunk(&kernel, i, a, b, opts.budget))
            .collect();
        for outcome in outcomes {
            apply_chunk(&mut states[outcome.shard], outcome);
        }
        if let Some(path) = &opts.checkpoint {
            write_checkpoint(path, spec, opts.budget, lo, hi, &states)?;
        }
        if allowance == Some(0) {
            break;
        }
    }

    Ok(report_from_states(spec, lo, hi, opts.budget, &states))
}

// ---------------------------------------------------------------------------
// Identity checks.

/// `T_k(3^k·n) = 3^k·T_0(n)`, exactly.
pub fn check_scaling(k: u32, n: &ExactInt) -> bool {
    let factor = pow3(k);
    let lhs = MapSpec::power_of_three(k).step(&OddRational::from_integer(n * &factor));
    let rhs = MapSpec::classic()
        .step(&OddRational::from_integer(n.clone()))
        .mul_int(&factor);
    lhs == rhs
}

/// `T_1(n) = 3·T_0(n + 1)` for odd `n`: the odd start under `T1` and its
/// even neighbour under `T0` run in lockstep from the first step on.
pub fn check_offset(n: &ExactInt) -> bool {
    assert!(n.is_odd(), "offset identity is about odd starts");
    let lhs = MapSpec::power_of_three(1).step(&OddRational::from_integer(n.clone()));
    let rhs = MapSpec::classic()
        .step(&OddRational::from_integer(n + 1))
        .mul_int(&ExactInt::from(3));
    lhs == rhs
}

/// The `steps`-fold iterate of `T_c` from `q` equals `c` times the
/// `steps`-fold iterate of `T_0` from `q/c`: conjugation survives
/// composition because the inner scale operators cancel in pairs.
pub fn check_composed_conjugacy(c: &ExactInt, q: &OddRational, steps: u64) -> bool {
    let spec = MapSpec::from_odd_constant(c.clone()).expect("conjugacy needs odd nonzero c");
    let direct = spec.iterate(q, steps);
    let through_t0 =
        conjugate_up(c, &MapSpec::classic().iterate(&conjugate_down(c, q), steps));
    direct == through_t0
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AbsorptionError {
    #[error("no multiple of 3^{k} within {budget} steps from {start}")]
    NotWithinBudget { k: u32, start: ExactInt, budget: u64 },
    /// An odd iterate coprime to 3 whose successor is not a multiple of 3
    /// would contradict the one-step absorption argument; finding one is
    /// an implementation alarm.
    #[error("odd iterate {value} (coprime to 3) stepped to {next}, not a multiple of 3")]
    OneStepClaimViolated { value: ExactInt, next: ExactInt },
}

/// The least iterate index under `T_k` at which the value is divisible by
/// `3^k`. Along the way every odd iterate coprime to 3 must step to a
/// multiple of 3; a violation is reported as an error in its own right.
pub fn check_absorption(k: u32, n: &ExactInt, budget: u64) -> Result<u64, AbsorptionError> {
    assert!(k >= 1, "absorption needs k >= 1");
    assert!(n.is_positive(), "absorption is about positive starts");
    let spec = MapSpec::power_of_three(k);
    let modulus = pow3(k);
    let three = ExactInt::from(3);
    let mut value = n.clone();
    for index in 0..=budget {
        if (&value % &modulus).is_zero() {
            return Ok(index);
        }
        if index == budget {
            break;
        }
        let next = if value.is_odd() {
            (3 * &value + &modulus) / 2
        } else {
            &value / 2
        };
        if value.is_odd() && !(&value % &three).is_zero() && !(&next % &three).is_zero() {
            return Err(AbsorptionError::OneStepClaimViolated { value, next });
        }
        value = next;
    }
    Err(AbsorptionError::NotWithinBudget { k, start: n.clone(), budget })
}

// ---------------------------------------------------------------------------
// Identity suites (exhaustive or seeded-random batches of the checks).

/// Outcome of one suite: how many cases ran and which failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub cases: u64,
    pub failures: Vec<String>,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn collect_failures(name: &str, cases: u64, failures: Vec<String>) -> SuiteOutcome {
    SuiteOutcome { name: name.to_string(), cases, failures }
}

/// `check_scaling` exhaustively over `1..=n_max` for every `k <= k_max`.
pub fn scaling_suite(n_max: u64, k_max: u32) -> SuiteOutcome {
    let mut cases = 0;
    let mut failures = Vec::new();
    for k in 0..=k_max {
        let bad: Vec<u64> = (1..=n_max)
            .into_par_iter()
            .filter(|n| !check_scaling(k, &ExactInt::from(*n)))
            .collect();
        cases += n_max;
        failures.extend(bad.into_iter().map(|n| format!("k = {k}, n = {n}")));
    }
    collect_failures("scaling", cases, failures)
}

/// `check_offset` exhaustively over odd `n <= n_max`.
pub fn offset_suite(n_max: u64) -> SuiteOutcome {
    let odds: Vec<u64> = (1..=n_max).step_by(2).collect();
    let cases = odds.len() as u64;
    let failures: Vec<String> = odds
        .into_par_iter()
        .filter(|n| !check_offset(&ExactInt::from(*n)))
        .map(|n| format!("n = {n}"))
        .collect();
    collect_failures("offset", cases, failures)
}

/// Deterministic xorshift-style generator for the randomized suites.
struct SplitMix64(u64);

impl SplitMix64 {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

pub const CONJUGACY_CONSTANTS: [i64; 7] = [1, 3, 5, 9, 15, 27, 81];

/// `check_composed_conjugacy` on `samples` seeded-random cases: constants
/// from [`CONJUGACY_CONSTANTS`], integer starts up to 128 bits, iterate
/// depths up to `max_steps`.
pub fn conjugacy_suite(samples: u64, max_steps: u64, seed: u64) -> SuiteOutcome {
    let mut rng = SplitMix64(seed);
    let cases: Vec<(i64, u128, u64)> = (0..samples)
        .map(|_| {
            let c = CONJUGACY_CONSTANTS[(rng.next() % 7) as usize];
            let q = (u128::from(rng.next()) << 64) | u128::from(rng.next());
            let steps = rng.next() % max_steps + 1;
            (c, q, steps)
        })
        .collect();
    let failures: Vec<String> = cases
        .into_par_iter()
        .filter_map(|(c, q, steps)| {
            let q = OddRational::from_integer(ExactInt::from(q));
            let ok = check_composed_conjugacy(&ExactInt::from(c), &q, steps);
            (!ok).then(|| format!("c = {c}, q = {q}, steps = {steps}"))
        })
        .collect();
    collect_failures("conjugacy", samples, failures)
}

/// Absorption, two layers: the one-step claim exhaustively over odd
/// `n <= n_max` coprime to 3 under `T1`, then finiteness of the
/// `3^k`-absorption index for every `k <= k_max`, `n <= n_max_full`.
pub fn absorption_suite(n_max: u64, k_max: u32, n_max_full: u64, budget: u64) -> SuiteOutcome {
    let three = ExactInt::from(3);
    let t1 = MapSpec::power_of_three(1);
    let mut failures: Vec<String> = (1..=n_max)
        .step_by(2)
        .into_iter()
        .filter(|n| n % 3 != 0)
        .filter_map(|n| {
            let next = t1.step(&OddRational::from_integer(n as i64));
            let divisible = next.as_integer().is_some_and(|v| (v % &three).is_zero());
            (!divisible).then(|| format!("one-step claim failed at n = {n}"))
        })
        .collect();
    let mut cases = n_max / 2;
    for k in 1..=k_max {
        let bad: Vec<String> = (1..=n_max_full)
            .into_par_iter()
            .filter_map(|n| {
                check_absorption(k, &ExactInt::from(n), budget)
                    .err()
                    .map(|e| format!("k = {k}, n = {n}: {e}"))
            })
            .collect();
        cases += n_max_full;
        failures.extend(bad);
    }
    collect_failures("absorption", cases, failures)
}

/// Cycle transport between `T_O` and `T_{3^k·O}`: both inventories are
/// found by the same integral search, then matched one-to-one through
/// [`cycles::lift_cycle`] / [`cycles::project_cycle`].
#[derive(Debug, Clone)]
pub struct LiftSuiteOutcome {
    pub outcome: SuiteOutcome,
    pub base_spec: MapSpec,
    pub lifted_spec: MapSpec,
    /// `(base cycle, lifted cycle)` in atlas order, braced display forms.
    pub pairs: Vec<(String, String)>,
}

pub fn lift_suite(
    odd: ExactInt,
    k: u32,
    n_max: u64,
    budget: u64,
) -> Result<LiftSuiteOutcome, crate::maps::MapError> {
    let base_spec = MapSpec::lagarias(odd.clone())?;
    let lifted_spec = base_spec.scaled_up(k);
    let base = cycles::integral_cycle_search(&base_spec, n_max, budget);
    let found = cycles::integral_cycle_search(&lifted_spec, n_max, budget);

    let mut failures = Vec::new();
    let mut pairs = Vec::new();

    let mut lifted_from_base: Vec<CycleRecord> = Vec::new();
    for cycle in &base {
        match cycles::lift_cycle(cycle, k) {
            Ok(lifted) => {
                if cycles::project_cycle(&lifted, k).as_ref() != Ok(cycle) {
                    failures.push(format!("project(lift({})) drifted", cycle.braced()));
                }
                pairs.push((cycle.braced(), lifted.braced()));
                lifted_from_base.push(lifted);
            }
            Err(e) => failures.push(format!("lift({}) failed: {e}", cycle.braced())),
        }
    }
    lifted_from_base.sort_by(atlas_order);

    if lifted_from_base != found {
        let show = |set: &[CycleRecord]| {
            set.iter().map(CycleRecord::braced).collect::<Vec<_>>().join(" ")
        };
        failures.push(format!(
            "lifted inventory mismatch: expected {} found {}",
            show(&lifted_from_base),
            show(&found),
        ));
    }
    for cycle in &found {
        if let Err(e) = cycles::project_cycle(cycle, k) {
            failures.push(format!("project({}) failed: {e}", cycle.braced()));
        }
    }

    let cases = (base.len() + found.len()) as u64;
    Ok(LiftSuiteOutcome {
        outcome: collect_failures("lift", cases, failures),
        base_spec,
        lifted_spec,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn t1() -> MapSpec {
        MapSpec::power_of_three(1)
    }

    #[test]
    fn verify_small_ranges() {
        let report = verify_range(&MapSpec::classic(), 1, 100, &VerifyOptions::default()).unwrap();
        assert_eq!(report.verified_count, 100);
        assert!(report.all_converged());
        assert!(report.is_complete());
        assert_eq!(report.shard_info, vec![ShardSpan { lo: 1, hi: 100, status: ShardStatus::Complete }]);

        let report = verify_range(&t1(), 1, 100, &VerifyOptions::default()).unwrap();
        assert_eq!(report.verified_count, 100);
        assert!(report.all_converged());

        // Start equal to the target verifies at step 0.
        let report = verify_range(
            &MapSpec::classic(),
            1,
            1,
            &VerifyOptions { budget: 1, ..VerifyOptions::default() },
        )
        .unwrap();
        assert_eq!(report.verified_count, 1);
        assert_eq!(report.max_total_stopping_time, Some(MaxSteps { value: 0, witness: 1 }));
    }

    #[test]
    fn starved_budget_records_non_convergence() {
        let report = verify_range(
            &MapSpec::classic(),
            1,
            20,
            &VerifyOptions { budget: 3, ..VerifyOptions::default() },
        )
        .unwrap();
        assert!(!report.all_converged());
        // 1, 2, 4, 8, and 16 resolve within three steps; 3 → 5 → 8 → 4 does not.
        assert!(report.non_converged.contains(&3));
        assert_eq!(
            report.verified_count + report.non_converged.len() as u64,
            20
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            verify_range(&MapSpec::classic(), 0, 5, &VerifyOptions::default()),
            Err(VerifyError::InvalidRange(_))
        ));
        assert!(matches!(
            verify_range(&MapSpec::classic(), 7, 5, &VerifyOptions::default()),
            Err(VerifyError::InvalidRange(_))
        ));
        let spec = MapSpec::lagarias(5.into()).unwrap();
        assert!(matches!(
            verify_range(&spec, 1, 5, &VerifyOptions::default()),
            Err(VerifyError::UnsupportedFamily(_))
        ));
    }

    #[test]
    fn small_and_big_kernels_agree() {
        let kernel = Kernel::new(&t1()).unwrap();
        for n in 1..500u64 {
            let small = kernel.run(n, 300);
            let big = kernel.run_big(n, 300);
            assert_eq!(small, big, "kernel disagreement at {n}");
        }
    }

    #[test]
    fn shard_count_does_not_change_the_report() {
        let spec = t1();
        let base = verify_range(&spec, 1, 4_000, &VerifyOptions::default()).unwrap();
        for shards in [4u32, 16, 64] {
            let opts = VerifyOptions { shards, chunk: 100, ..VerifyOptions::default() };
            let report = verify_range(&spec, 1, 4_000, &opts).unwrap();
            assert_eq!(report.to_json(), base.to_json(), "shards = {shards}");
        }
    }

    #[test]
    fn interrupted_run_resumes_to_the_same_report() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t1.ckpt");
        let spec = t1();
        let uninterrupted =
            verify_range(&spec, 1, 3_000, &VerifyOptions { shards: 4, chunk: 128, ..VerifyOptions::default() })
                .unwrap();

        let partial_opts = VerifyOptions {
            shards: 4,
            chunk: 128,
            checkpoint: Some(path.clone()),
            max_chunks: Some(5),
            ..VerifyOptions::default()
        };
        let partial = verify_range(&spec, 1, 3_000, &partial_opts).unwrap();
        assert!(!partial.is_complete());
        assert!(path.exists());

        let resumed_opts = VerifyOptions {
            shards: 4,
            chunk: 128,
            checkpoint: Some(path.clone()),
            max_chunks: None,
            ..VerifyOptions::default()
        };
        let resumed = verify_range(&spec, 1, 3_000, &resumed_opts).unwrap();
        assert_eq!(resumed.to_json(), uninterrupted.to_json());
    }

    #[test]
    fn checkpoint_mismatch_is_refused() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("x.ckpt");
        let opts = VerifyOptions { checkpoint: Some(path.clone()), ..VerifyOptions::default() };
        verify_range(&t1(), 1, 50, &opts).unwrap();
        assert!(matches!(
            verify_range(&MapSpec::classic(), 1, 50, &opts),
            Err(VerifyError::CheckpointMismatch(_))
        ));
        assert!(matches!(
            verify_range(&t1(), 1, 60, &opts),
            Err(VerifyError::CheckpointMismatch(_))
        ));
        let other_budget = VerifyOptions { budget: 99, ..opts };
        assert!(matches!(
            verify_range(&t1(), 1, 50, &other_budget),
            Err(VerifyError::CheckpointMismatch(_))
        ));
    }

    #[test]
    fn merge_is_order_insensitive_and_coalesces() {
        let spec = t1();
        let opts = VerifyOptions::default();
        let a = verify_range(&spec, 1, 500, &opts).unwrap();
        let b = verify_range(&spec, 501, 900, &opts).unwrap();
        let c = verify_range(&spec, 901, 1_200, &opts).unwrap();
        let whole = verify_range(&spec, 1, 1_200, &opts).unwrap();

        let ab_c = a.merge(&b).unwrap().merge(&c).unwrap();
        let c_ba = c.merge(&b).unwrap().merge(&a).unwrap();
        assert_eq!(ab_c, c_ba);
        assert_eq!(ab_c.to_json(), whole.to_json());

        assert!(a.merge(&a).is_err()); // overlap
    }

    #[test]
    fn report_json_round_trips() {
        let report = verify_range(&t1(), 1, 64, &VerifyOptions::default()).unwrap();
        let json = report.to_json();
        let back: VerificationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        assert!(json.starts_with("{\"schema\":\"threenc.report/1\""));
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn identity_checks_on_fixtures() {
        // T_2(189) = 288 = 9·32 and T_1(63) = 96 = 3·32.
        assert!(check_scaling(2, &21.into()));
        assert!(check_scaling(1, &21.into()));
        assert!(check_scaling(0, &17.into()));

        assert!(check_offset(&63.into()));
        assert!(check_offset(&1.into()));
        assert!(check_offset(&5.into()));

        assert!(check_composed_conjugacy(&9.into(), &OddRational::from_integer(189), 6));
        assert!(check_composed_conjugacy(&3.into(), &OddRational::from_integer(63), 6));
        assert!(check_composed_conjugacy(&7.into(), &"4/5".parse().unwrap(), 25));

        assert_eq!(check_absorption(1, &5.into(), 100), Ok(1));
        assert_eq!(check_absorption(1, &9.into(), 100), Ok(0));
        // T_2 from 1: 1 → 6 → 3 → 9, divisible by 9 at index 3.
        assert_eq!(check_absorption(2, &1.into(), 100), Ok(3));
        assert!(matches!(
            check_absorption(2, &1.into(), 2),
            Err(AbsorptionError::NotWithinBudget { .. })
        ));
    }

    #[test]
    fn suites_pass_at_small_bounds() {
        assert!(scaling_suite(500, 4).passed());
        assert!(offset_suite(499).passed());
        let conj = conjugacy_suite(50, 60, 7);
        assert_eq!(conj.cases, 50);
        assert!(conj.passed());
        assert!(absorption_suite(999, 2, 200, 10_000).passed());
    }

    #[test]
    fn conjugacy_suite_is_deterministic_per_seed() {
        assert_eq!(conjugacy_suite(25, 40, 11), conjugacy_suite(25, 40, 11));
    }

    #[test]
    fn lift_suite_matches_known_inventory() {
        let suite = lift_suite(5.into(), 1, 120, 2_000).unwrap();
        assert!(suite.outcome.passed(), "failures: {:?}", suite.outcome.failures);
        assert!(suite
            .pairs
            .iter()
            .any(|(b, l)| b == "{19, 31, 49, 76, 38}" && l == "{57, 93, 147, 228, 114}"));
    }
}
