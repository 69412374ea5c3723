//! Rational cycle parametrization, confirmation, and cycle transport
//! between map families.
//!
//! Every element `q` of a `T0` cycle with period `m` and `l` odd steps
//! satisfies
//!
//! ```text
//!           sum_{i=0}^{l-1} 3^i · 2^(a_i)
//!     q  =  -----------------------------        m >= a_0 > a_1 > ... > a_{l-1} >= 0
//!                  2^m  -  3^l
//! ```
//!
//! for some strictly decreasing exponent list `a` (the positions of the
//! odd steps, read backwards). The formula is a *necessary* form, not a
//! sufficient one, so enumeration here always pairs it with confirmation
//! by actual iteration: a candidate only enters the atlas once iterating
//! the map from it returns to it.
//!
//! Because `2^m` is even and `3^l` odd, the denominator above is odd, and
//! modulo 3 it is congruent to `2^m`, never zero. That is the whole
//! 3-divisibility story: no nonzero cycle element can have a denominator
//! divisible by 3, which is what makes exact division by `3^k` — and with
//! it [`lift_cycle`] / [`project_cycle`] — total on confirmed cycles.

use itertools::Itertools;
use num_integer::Integer;
use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{canonical_cycle, CycleRecord, DynamicsError};
use crate::maps::{pow3, MapSpec};
use crate::rational::{ExactInt, OddRational};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CyclesError {
    #[error("invalid cycle parameters: {0}")]
    InvalidParams(String),
    #[error("re-confirmation of a transported cycle failed: {0}")]
    LiftVerificationFailed(#[from] DynamicsError),
    /// A cycle element is not an exact multiple of `3^k`. For integral
    /// cycles of a `3^k`-carrying family this would contradict the cycle
    /// correspondence, so callers should treat it as an alarm, not a
    /// routine error.
    #[error("cycle element {element} is not divisible by 3^{k}")]
    NotDivisible { element: OddRational, k: u32 },
    #[error("cannot project: {0}")]
    CannotProject(String),
}

/// Exponent data `(l, m, a)` for one candidate cycle element.
///
/// `l` may equal `m` (a period of nothing but odd steps — the fixed point
/// `-1` is the smallest example, with `l = m = 1`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CycleParams {
    /// Odd-step count `l`.
    pub l: u64,
    /// Period length `m` (total steps).
    pub m: u64,
    /// Strictly decreasing exponents, `m > a_0 > ... > a_{l-1} >= 0`.
    pub a: Vec<u64>,
}

impl CycleParams {
    pub fn new(l: u64, m: u64, a: Vec<u64>) -> Result<Self, CyclesError> {
        let invalid = |msg: String| Err(CyclesError::InvalidParams(msg));
        if m < 1 {
            return invalid("m must be at least 1".into());
        }
        if l > m {
            return invalid(format!("odd-step count l = {l} exceeds period m = {m}"));
        }
        if a.len() as u64 != l {
            return invalid(format!("expected {l} exponents, got {}", a.len()));
        }
        if let Some(first) = a.first() {
            if *first >= m {
                return invalid(format!("a_0 = {first} must be below m = {m}"));
            }
        }
        if !a.windows(2).all(|w| w[0] > w[1]) {
            return invalid(format!("exponents {a:?} are not strictly decreasing"));
        }
        Ok(CycleParams { l, m, a })
    }
}

/// Evaluates the candidate formula exactly. For `l = 0` the numerator is
/// the empty sum, so the value is exactly zero whatever `m` is.
pub fn cycle_element_from_params(p: &CycleParams) -> OddRational {
    let numerator: ExactInt = p
        .a
        .iter()
        .enumerate()
        .map(|(i, a_i)| pow3(i as u32) << *a_i)
        .sum();
    let denominator = (ExactInt::from(1) << p.m) - pow3(p.l as u32);
    OddRational::new(numerator, denominator).expect("2^m - 3^l is odd for m >= 1")
}

/// Every valid `CycleParams` with `m <= max_m`, paired with its formula
/// value, in lexicographic `(m, l, a)` order.
pub fn enumerate_candidates(
    max_m: u64,
) -> impl Iterator<Item = (CycleParams, OddRational)> {
    assert!(max_m >= 1, "max_m must be at least 1");
    (1..=max_m).flat_map(|m| {
        (0..=m).flat_map(move |l| {
            (0..m)
                .combinations(l as usize)
                .map(move |ascending| {
                    let a: Vec<u64> = ascending.into_iter().rev().collect();
                    CycleParams::new(l, m, a).expect("generated params are valid")
                })
                .map(|p| {
                    let value = cycle_element_from_params(&p);
                    (p, value)
                })
        })
    })
}

/// Confirms that `q` is itself periodic under the classic map within
/// `max_len` steps, returning the canonical cycle through it. A value
/// whose trajectory merely *enters* a cycle later is not on one.
pub fn confirm_cycle(q: &OddRational, max_len: u64) -> Option<CycleRecord> {
    let spec = MapSpec::classic();
    let mut orbit = vec![q.clone()];
    for _ in 0..max_len {
        let next = spec.step(orbit.last().expect("nonempty"));
        if &next == q {
            return Some(canonical_cycle(&spec, orbit).expect("first return closes the orbit"));
        }
        orbit.push(next);
    }
    None
}

/// Outcome of the 3-divisibility check over a batch of confirmed cycles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LemmaReport {
    pub cycles_checked: u64,
    pub elements_checked: u64,
    /// Nonzero elements whose reduced denominator is a multiple of 3.
    /// Always empty for genuine cycles; anything here is an alarm.
    pub violations: Vec<OddRational>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that no nonzero element of any confirmed cycle has a reduced
/// denominator divisible by 3. Zero elements (the `{0}` cycle) are
/// outside the claim and are skipped.
pub fn check_lemma_denominator<'a>(
    cycles: impl IntoIterator<Item = &'a CycleRecord>,
) -> LemmaReport {
    let three = ExactInt::from(3);
    let mut report =
        LemmaReport { cycles_checked: 0, elements_checked: 0, violations: Vec::new() };
    for cycle in cycles {
        report.cycles_checked += 1;
        for element in cycle.elements() {
            if element.is_zero() {
                continue;
            }
            report.elements_checked += 1;
            if element.denominator().mod_floor(&three).is_zero() {
                report.violations.push(element.clone());
            }
        }
    }
    report
}

/// Multiplies a confirmed cycle elementwise by `3^k` and re-confirms it
/// under the correspondingly scaled map constant. Length and odd-step
/// count are preserved (scaling by an odd constant preserves parity).
pub fn lift_cycle(record: &CycleRecord, k: u32) -> Result<CycleRecord, CyclesError> {
    if k == 0 {
        return Ok(record.clone());
    }
    let lifted_spec = record.spec().scaled_up(k);
    let factor = pow3(k);
    let elements: Vec<OddRational> =
        record.elements().iter().map(|e| e.mul_int(&factor)).collect();
    let lifted = canonical_cycle(&lifted_spec, elements)?;
    debug_assert_eq!(lifted.length(), record.length());
    debug_assert_eq!(lifted.odd_steps(), record.odd_steps());
    Ok(lifted)
}

/// Divides a confirmed cycle elementwise by `3^k`, requiring every
/// numerator to carry the full `3^k` factor, and re-confirms it under the
/// unscaled constant. Inverse of [`lift_cycle`] wherever both apply.
pub fn project_cycle(record: &CycleRecord, k: u32) -> Result<CycleRecord, CyclesError> {
    if k == 0 {
        return Ok(record.clone());
    }
    let projected_spec = record
        .spec()
        .scaled_down(k)
        .map_err(|e| CyclesError::CannotProject(e.to_string()))?;
    let factor = pow3(k);
    let elements = record
        .elements()
        .iter()
        .map(|e| {
            if e.numerator().mod_floor(&factor).is_zero() {
                Ok(e.div_odd_int(&factor))
            } else {
                Err(CyclesError::NotDivisible { element: e.clone(), k })
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(canonical_cycle(&projected_spec, elements)?)
}

/// One atlas line: a confirmed cycle plus the first parameter triple that
/// generated it, when it came from enumeration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtlasEntry {
    #[serde(flatten)]
    pub record: CycleRecord,
    pub params: Option<CycleParams>,
}

#[derive(Debug, Clone)]
pub struct AtlasOptions {
    pub max_m: u64,
    /// Candidates whose reduced |numerator| exceeds the cap are skipped
    /// and counted instead of confirmed, to bound runtime at large `m`.
    pub numerator_cap: Option<ExactInt>,
}

impl Default for AtlasOptions {
    fn default() -> Self {
        AtlasOptions { max_m: 11, numerator_cap: None }
    }
}

/// The confirmed-cycle atlas for the classic map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Atlas {
    pub entries: Vec<AtlasEntry>,
    pub candidates_seen: u64,
    pub skipped_over_cap: u64,
    pub lemma: LemmaReport,
}

/// Sort key shared by atlas ordering and cycle-set comparisons:
/// (|min element|, length, elements).
pub fn atlas_order(a: &CycleRecord, b: &CycleRecord) -> std::cmp::Ordering {
    a.min_element()
        .abs()
        .cmp(&b.min_element().abs())
        .then(a.length().cmp(&b.length()))
        .then_with(|| a.elements().cmp(b.elements()))
}

/// Enumerates candidates to `max_m`, confirms each by iteration (budget
/// `max_m`: a cycle of period `s <= max_m` is generated by its own
/// `m = s` parameters, so no longer budget is needed), deduplicates into
/// canonical records, and runs the 3-divisibility check over the result.
pub fn build_atlas(opts: &AtlasOptions) -> Atlas {
    let candidates: Vec<(CycleParams, OddRational)> =
        enumerate_candidates(opts.max_m).collect();
    let candidates_seen = candidates.len() as u64;

    let mut skipped_over_cap = 0u64;
    let kept: Vec<(CycleParams, OddRational)> = candidates
        .into_iter()
        .filter(|(_, value)| match &opts.numerator_cap {
            Some(cap) if value.numerator().abs() > *cap => {
                skipped_over_cap += 1;
                false
            }
            _ => true,
        })
        .collect();

    let confirmed: Vec<Option<(CycleParams, CycleRecord)>> = kept
        .into_par_iter()
        .map(|(params, value)| confirm_cycle(&value, opts.max_m).map(|rec| (params, rec)))
        .collect();

    // Sequential dedup keeps the first generating params in (m, l, a) order.
    let mut entries: Vec<AtlasEntry> = Vec::new();
    for (params, record) in confirmed.into_iter().flatten() {
        if !entries.iter().any(|e| e.record == record) {
            entries.push(AtlasEntry { record, params: Some(params) });
        }
    }
    entries.sort_by(|x, y| atlas_order(&x.record, &y.record));

    let lemma = check_lemma_denominator(entries.iter().map(|e| &e.record));
    Atlas { entries, candidates_seen, skipped_over_cap, lemma }
}

/// Integral-cycle inventory of an arbitrary family member: detects the
/// cycle entered from every integer start with `|n| <= n_max` (zero
/// included) and returns the deduplicated canonical set in atlas order.
pub fn integral_cycle_search(spec: &MapSpec, n_max: u64, budget: u64) -> Vec<CycleRecord> {
    let starts: Vec<i64> = (-(n_max as i64)..=n_max as i64).collect();
    let found: Vec<Option<CycleRecord>> = starts
        .into_par_iter()
        .map(|n| {
            crate::dynamics::detect_cycle(spec, &OddRational::from_integer(n), budget)
        })
        .collect();
    let mut cycles: Vec<CycleRecord> = Vec::new();
    for record in found.into_iter().flatten() {
        if !cycles.contains(&record) {
            cycles.push(record);
        }
    }
    cycles.sort_by(atlas_order);
    cycles
}
