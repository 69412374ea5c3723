//! Trajectory iteration, cycle detection, and stopping statistics.
//!
//! Everything here is exact and deterministic: identical inputs produce
//! identical trajectories and cycle records, which is what lets the range
//! harness shard and merge without drift.

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::maps::{pow3, MapSpec};
use crate::rational::{ExactInt, OddRational};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DynamicsError {
    #[error("elements do not form a cycle under {spec}: {reason}")]
    NotACycle { spec: String, reason: String },
}

/// Why an iteration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedTarget,
    EnteredCycle,
    BudgetExhausted,
}

/// A fully stored iteration: `iterates[0]` is the start and each later
/// entry is the map applied to its predecessor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trajectory {
    pub spec: MapSpec,
    pub start: OddRational,
    pub iterates: Vec<OddRational>,
    pub termination: Termination,
    /// Number of odd-branch applications taken, i.e. odd iterates among
    /// all but the last.
    pub odd_step_count: u64,
    /// Largest iterate visited, in the rational order.
    pub max_excursion: OddRational,
}

/// Iterates `spec` from `start` until `target` is hit, a previously seen
/// value repeats, or `budget` map applications have been spent — in that
/// priority order.
pub fn trajectory(
    spec: &MapSpec,
    start: &OddRational,
    budget: u64,
    target: Option<&OddRational>,
) -> Trajectory {
    assert!(budget >= 1, "budget must be at least 1");
    let mut iterates = vec![start.clone()];
    let mut seen: HashSet<OddRational> = HashSet::new();
    seen.insert(start.clone());

    let mut termination = Termination::BudgetExhausted;
    if target == Some(start) {
        termination = Termination::ReachedTarget;
    } else {
        for _ in 0..budget {
            let next = spec.step(iterates.last().expect("nonempty"));
            let hit_target = target == Some(&next);
            let repeated = !seen.insert(next.clone());
            iterates.push(next);
            if hit_target {
                termination = Termination::ReachedTarget;
                break;
            }
            if repeated {
                termination = Termination::EnteredCycle;
                break;
            }
        }
    }

    let odd_step_count =
        iterates[..iterates.len() - 1].iter().filter(|v| v.is_odd()).count() as u64;
    let max_excursion = iterates.iter().max().expect("nonempty").clone();
    Trajectory {
        spec: spec.clone(),
        start: start.clone(),
        iterates,
        termination,
        odd_step_count,
        max_excursion,
    }
}

/// A memory-flat run for harness use: only counters and extremes are kept.
/// Stops on `target` or budget; repeats are not tracked, since tracking
/// them is exactly what this mode avoids paying for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompactRun {
    pub steps: u64,
    pub termination: Termination,
    pub odd_steps: u64,
    pub max_excursion: OddRational,
    pub last: OddRational,
}

pub fn run_compact(
    spec: &MapSpec,
    start: &OddRational,
    budget: u64,
    target: Option<&OddRational>,
) -> CompactRun {
    let mut value = start.clone();
    let mut max_excursion = start.clone();
    let mut odd_steps = 0;
    let mut steps = 0;
    while Some(&value) != target && steps < budget {
        if value.is_odd() {
            odd_steps += 1;
        }
        value = spec.step(&value);
        steps += 1;
        if value > max_excursion {
            max_excursion = value.clone();
        }
    }
    let termination = if Some(&value) == target {
        Termination::ReachedTarget
    } else {
        Termination::BudgetExhausted
    };
    CompactRun { steps, termination, odd_steps, max_excursion, last: value }
}

/// A confirmed cycle in canonical rotation: the minimum element (in the
/// rational order) comes first, and each element steps to the next, the
/// last wrapping to the first. Equality of records is therefore
/// rotation-insensitive by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CycleRecord {
    spec: MapSpec,
    elements: Vec<OddRational>,
    odd_steps: u64,
}

impl CycleRecord {
    pub fn spec(&self) -> &MapSpec {
        &self.spec
    }

    pub fn elements(&self) -> &[OddRational] {
        &self.elements
    }

    /// Total steps in one period (= number of elements).
    pub fn length(&self) -> u64 {
        self.elements.len() as u64
    }

    /// Number of odd-branch applications in one period.
    pub fn odd_steps(&self) -> u64 {
        self.odd_steps
    }

    pub fn min_element(&self) -> &OddRational {
        &self.elements[0]
    }

    /// All elements of one cycle share a reduced denominator (the odd part
    /// survives every step), so this is the cycle's denominator.
    pub fn denominator(&self) -> &ExactInt {
        self.elements[0].denominator()
    }

    /// `{a, b, ...}` display form, canonical order.
    pub fn braced(&self) -> String {
        let inner: Vec<String> = self.elements.iter().map(|e| e.to_string()).collect();
        format!("{{{}}}", inner.join(", "))
    }

    /// Test-only escape hatch for building records that violate the cycle
    /// invariants (negative controls). Not reachable through the public API.
    #[cfg(test)]
    pub(crate) fn from_parts_unchecked(spec: MapSpec, elements: Vec<OddRational>) -> Self {
        let odd_steps = elements.iter().filter(|v| v.is_odd()).count() as u64;
        CycleRecord { spec, elements, odd_steps }
    }
}

/// Validates that `elements` is a genuine orbit of `spec` (consecutive
/// step relation, wrap-around, all distinct) and rotates the minimum
/// element to the front.
pub fn canonical_cycle(
    spec: &MapSpec,
    elements: Vec<OddRational>,
) -> Result<CycleRecord, DynamicsError> {
    let fail = |reason: String| DynamicsError::NotACycle { spec: spec.to_string(), reason };
    if elements.is_empty() {
        return Err(fail("empty element list".into()));
    }
    let n = elements.len();
    for i in 0..n {
        let expected = &elements[(i + 1) % n];
        let got = spec.step(&elements[i]);
        if &got != expected {
            return Err(fail(format!(
                "step({}) = {} but the list continues with {}",
                elements[i], got, expected
            )));
        }
    }
    let distinct: HashSet<&OddRational> = elements.iter().collect();
    if distinct.len() != n {
        return Err(fail("elements repeat within one period".into()));
    }
    let min_pos = elements
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.cmp(b))
        .map(|(i, _)| i)
        .expect("nonempty");
    let mut elements = elements;
    elements.rotate_left(min_pos);
    let odd_steps = elements.iter().filter(|v| v.is_odd()).count() as u64;
    Ok(CycleRecord { spec: spec.clone(), elements, odd_steps })
}

/// Finds the cycle eventually entered from `start`, if a repeat shows up
/// within `budget` map applications.
///
/// Detection is Brent's power-of-two teleporting comparison over exact
/// values: O(1) memory, no hashing of huge rationals, just equality
/// checks. Once the period is known the entry point is located by the
/// usual two-pointer walk and the period is read off from there.
pub fn detect_cycle(spec: &MapSpec, start: &OddRational, budget: u64) -> Option<CycleRecord> {
    assert!(budget >= 1, "budget must be at least 1");
    let mut power: u64 = 1;
    let mut period: u64 = 1;
    let mut anchor = start.clone();
    let mut probe = spec.step(start);
    let mut spent: u64 = 1;
    while anchor != probe {
        if spent >= budget {
            return None;
        }
        if power == period {
            anchor = probe.clone();
            power *= 2;
            period = 0;
        }
        probe = spec.step(&probe);
        spent += 1;
        period += 1;
    }

    // Walk two pointers `period` apart; they meet at the cycle entry.
    let mut ahead = start.clone();
    for _ in 0..period {
        ahead = spec.step(&ahead);
    }
    let mut entry = start.clone();
    while entry != ahead {
        entry = spec.step(&entry);
        ahead = spec.step(&ahead);
    }

    let mut elements = Vec::with_capacity(period as usize);
    let mut value = entry.clone();
    for _ in 0..period {
        elements.push(value.clone());
        value = spec.step(&value);
    }
    debug_assert_eq!(value, entry);
    Some(canonical_cycle(spec, elements).expect("detected orbit is a cycle"))
}

/// Per-start stopping statistics, each `None` when the event did not occur
/// within the budget (or is undefined for the spec/start combination).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StoppingStats {
    pub start: OddRational,
    /// Least iterate index equal to `3^k`, the minimum of the expected
    /// terminal cycle. Defined for the `T0`/`Tk` families only.
    pub total_stopping_time: Option<u64>,
    /// Least index `i >= 1` with the iterate strictly below the start.
    pub first_descent_time: Option<u64>,
    /// Least iterate index at which the value is an integer multiple of
    /// `3^k`; defined when the family carries a power of three and the
    /// start is an integer.
    pub steps_to_multiple_of_3k: Option<u64>,
}

pub fn stopping_stats(spec: &MapSpec, start: &OddRational, budget: u64) -> StoppingStats {
    let target = spec.convergence_target();
    let modulus = match spec.three_exponent() {
        Some(k) if start.is_integer() => Some(pow3(k)),
        _ => None,
    };
    let divisible = |v: &OddRational, m: &ExactInt| {
        v.as_integer().is_some_and(|n| (n % m).is_zero())
    };

    let mut total_stopping_time = None;
    let mut first_descent_time = None;
    let mut steps_to_multiple = None;

    let mut value = start.clone();
    for index in 0..=budget {
        if total_stopping_time.is_none() && target.as_ref() == Some(&value) {
            total_stopping_time = Some(index);
        }
        if first_descent_time.is_none() && index >= 1 && value < *start {
            first_descent_time = Some(index);
        }
        if steps_to_multiple.is_none() {
            if let Some(m) = &modulus {
                if divisible(&value, m) {
                    steps_to_multiple = Some(index);
                }
            }
        }
        let unresolved = (target.is_some() && total_stopping_time.is_none())
            || first_descent_time.is_none()
            || (modulus.is_some() && steps_to_multiple.is_none());
        if !unresolved || index == budget {
            break;
        }
        value = spec.step(&value);
    }

    StoppingStats {
        start: start.clone(),
        total_stopping_time,
        first_descent_time,
        steps_to_multiple_of_3k: steps_to_multiple,
    }
}

impl Serialize for CycleRecord {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("CycleRecord", 4)?;
        s.serialize_field("spec", &self.spec)?;
        s.serialize_field("elements", &self.elements)?;
        s.serialize_field("length", &self.length())?;
        s.serialize_field("odd_steps", &self.odd_steps)?;
        s.end()
    }
}

impl<'de> Deserialize<'de> for CycleRecord {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        #[derive(Deserialize)]
        struct Repr {
            spec: MapSpec,
            elements: Vec<OddRational>,
            length: u64,
            odd_steps: u64,
        }
        let repr = Repr::deserialize(deserializer)?;
        let record =
            canonical_cycle(&repr.spec, repr.elements).map_err(D::Error::custom)?;
        if record.length() != repr.length || record.odd_steps() != repr.odd_steps {
            return Err(D::Error::custom("cycle counts do not match the element list"));
        }
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> OddRational {
        s.parse().unwrap()
    }

    fn qs(list: &[&str]) -> Vec<OddRational> {
        list.iter().map(|s| q(s)).collect()
    }

    #[test]
    fn trajectory_reaches_stated_fixtures() {
        let t = trajectory(&MapSpec::power_of_three(2), &q("189"), 10, Some(&q("9")));
        assert_eq!(t.iterates, qs(&["189", "288", "144", "72", "36", "18", "9"]));
        assert_eq!(t.termination, Termination::ReachedTarget);
        assert_eq!(t.odd_step_count, 1);
        assert_eq!(t.max_excursion, q("288"));

        let t = trajectory(&MapSpec::classic(), &q("64"), 10, Some(&q("1")));
        assert_eq!(t.iterates, qs(&["64", "32", "16", "8", "4", "2", "1"]));
    }

    #[test]
    fn trajectory_detects_repeats_and_budget() {
        let t = trajectory(&MapSpec::classic(), &q("1"), 3, None);
        assert_eq!(t.iterates, qs(&["1", "2", "1"]));
        assert_eq!(t.termination, Termination::EnteredCycle);

        let t = trajectory(&MapSpec::classic(), &q("1/5"), 4, None);
        assert_eq!(t.iterates, qs(&["1/5", "4/5", "2/5", "1/5"]));
        assert_eq!(t.termination, Termination::EnteredCycle);

        let t = trajectory(&MapSpec::classic(), &q("27"), 5, Some(&q("1")));
        assert_eq!(t.termination, Termination::BudgetExhausted);
        assert_eq!(t.iterates.len(), 6);

        // Start equal to target stops at index 0.
        let t = trajectory(&MapSpec::classic(), &q("1"), 1, Some(&q("1")));
        assert_eq!(t.iterates, qs(&["1"]));
        assert_eq!(t.termination, Termination::ReachedTarget);
    }

    #[test]
    fn compact_run_agrees_with_full_trajectory() {
        let spec = MapSpec::power_of_three(1);
        for start in ["7", "63", "97"] {
            let full = trajectory(&spec, &q(start), 200, Some(&q("3")));
            let compact = run_compact(&spec, &q(start), 200, Some(&q("3")));
            assert_eq!(compact.steps + 1, full.iterates.len() as u64);
            assert_eq!(compact.termination, full.termination);
            assert_eq!(compact.odd_steps, full.odd_step_count);
            assert_eq!(compact.max_excursion, full.max_excursion);
            assert_eq!(&compact.last, full.iterates.last().unwrap());
        }
    }

    #[test]
    fn detect_cycle_finds_the_terminal_cycles() {
        let c = detect_cycle(&MapSpec::classic(), &q("21"), 10_000).unwrap();
        assert_eq!(c.elements(), qs(&["1", "2"]));
        assert_eq!((c.length(), c.odd_steps()), (2, 1));

        let c = detect_cycle(&MapSpec::power_of_three(1), &q("63"), 10_000).unwrap();
        assert_eq!(c.elements(), qs(&["3", "6"]));

        // Independent brute-force route: -5 → -7 → -10 → -5, so the
        // canonical rotation starts at the minimum, -10, and follows the
        // map: -10 → -5 → -7.
        let c = detect_cycle(&MapSpec::classic(), &q("-5"), 10_000).unwrap();
        assert_eq!(c.elements(), qs(&["-10", "-5", "-7"]));
        assert_eq!((c.length(), c.odd_steps()), (3, 2));

        assert!(detect_cycle(&MapSpec::classic(), &q("27"), 10).is_none());
    }

    #[test]
    fn canonical_cycle_rotates_and_validates() {
        let spec = MapSpec::classic();
        let c = canonical_cycle(&spec, qs(&["2", "1"])).unwrap();
        assert_eq!(c.elements(), qs(&["1", "2"]));

        let spec1 = MapSpec::power_of_three(1);
        let c = canonical_cycle(&spec1, qs(&["6", "3"])).unwrap();
        assert_eq!(c.elements(), qs(&["3", "6"]));

        let c = canonical_cycle(&spec, qs(&["4/5", "2/5", "1/5"])).unwrap();
        assert_eq!(c.elements(), qs(&["1/5", "4/5", "2/5"]));

        assert!(canonical_cycle(&spec, qs(&["1", "3"])).is_err());
        assert!(canonical_cycle(&spec, qs(&[])).is_err());
        // A doubled period repeats elements and is rejected.
        assert!(canonical_cycle(&spec, qs(&["1", "2", "1", "2"])).is_err());
    }

    #[test]
    fn stopping_stats_fixtures() {
        let t1 = MapSpec::power_of_three(1);
        assert_eq!(stopping_stats(&t1, &q("5"), 100).steps_to_multiple_of_3k, Some(1));
        assert_eq!(stopping_stats(&t1, &q("3"), 100).steps_to_multiple_of_3k, Some(0));
        // 4 → 2 → 1 → 3.
        assert_eq!(stopping_stats(&t1, &q("4"), 100).steps_to_multiple_of_3k, Some(3));

        // 5 → 9 → 15 → 24 → 12 → 6 → 3.
        let s = stopping_stats(&t1, &q("5"), 100);
        assert_eq!(s.total_stopping_time, Some(6));
        assert_eq!(s.first_descent_time, Some(6));
        // 7 → 11 → 17 → 26 → 13 → 20 → 10 → 5 → 8 → 4 → 2 → 1.
        let s = stopping_stats(&MapSpec::classic(), &q("7"), 100);
        assert_eq!(s.total_stopping_time, Some(11));
        assert_eq!(s.first_descent_time, Some(7)); // the iterate 5 at index 7

        // Fractional start: no 3^k statistic.
        let s = stopping_stats(&MapSpec::power_of_three(1), &q("1/5"), 100);
        assert_eq!(s.steps_to_multiple_of_3k, None);
        // Lagarias family: no exponent at all.
        let s = stopping_stats(&MapSpec::lagarias(5.into()).unwrap(), &q("7"), 100);
        assert_eq!(s.steps_to_multiple_of_3k, None);
        assert_eq!(s.total_stopping_time, None);
    }

    #[test]
    fn stopping_stats_against_direct_iteration() {
        // Recompute every statistic with a plain recorded trajectory.
        let spec = MapSpec::power_of_three(1);
        for start in 1i64..=40 {
            let start = OddRational::from_integer(start);
            let stats = stopping_stats(&spec, &start, 500);
            let t = trajectory(&spec, &start, 500, None);
            let three = ExactInt::from(3);
            let expect_tst = t
                .iterates
                .iter()
                .position(|v| v == &q("3"))
                .map(|i| i as u64);
            let expect_descent = t
                .iterates
                .iter()
                .enumerate()
                .position(|(i, v)| i >= 1 && *v < start)
                .map(|i| i as u64);
            let expect_mult = t
                .iterates
                .iter()
                .position(|v| v.as_integer().is_some_and(|n| (n % &three).is_zero()))
                .map(|i| i as u64);
            // The trajectory stops on its own cycle entry; statistics the
            // cycle loop would eventually produce stay comparable because
            // every start here resolves before that.
            assert_eq!(stats.total_stopping_time, expect_tst, "tst for {start}");
            assert_eq!(stats.first_descent_time, expect_descent, "descent for {start}");
            assert_eq!(stats.steps_to_multiple_of_3k, expect_mult, "3^k for {start}");
        }
    }

    #[test]
    fn trajectory_json_shape() {
        let t = trajectory(&MapSpec::classic(), &q("4"), 10, Some(&q("1")));
        let json = serde_json::to_value(&t).unwrap();
        assert_eq!(json["spec"]["family"], "T0");
        assert_eq!(json["iterates"], serde_json::json!(["4", "2", "1"]));
        assert_eq!(json["termination"], "reached_target");
    }

    #[test]
    fn cycle_record_json_round_trips() {
        let c = detect_cycle(&MapSpec::classic(), &q("1/5"), 100).unwrap();
        let json = serde_json::to_string(&c).unwrap();
        let back: CycleRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        // Tampered counts are rejected.
        let bad = json.replace("\"odd_steps\":2", "\"odd_steps\":1");
        assert!(serde_json::from_str::<CycleRecord>(&bad).is_err());
    }
}
