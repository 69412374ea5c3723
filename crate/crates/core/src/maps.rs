//! The generalized map step `T_c` and the conjugation operators `L_A`.
//!
//! Every map in the family has the same shape,
//!
//! ```text
//! T_c(q) = (3q + c) / 2   if q is odd,
//!          q / 2          if q is even,
//! ```
//!
//! differing only in the odd additive constant `c`. [`MapSpec`] pairs the
//! constant with a family tag that records how it was built:
//!
//! - `T0` — the classic shortcut map, `c = 1`;
//! - `Tk:<k>` — `c = 3^k`;
//! - `TO:<O>` — `c = O` with `O ≡ ±1 (mod 6)`, so `O` is odd and never a
//!   multiple of 3;
//! - `T3kO:<k>,<O>` — `c = 3^k·O`, the two generalizations combined.
//!
//! Conjugation ties the family together: with `L_A(q) = q/A` for odd `A`,
//! the identity `T_c = L_c⁻¹ ∘ T_0 ∘ L_c` holds on all of `ℚ[(2)]`, because
//! dividing by an odd constant preserves parity. [`conjugated_step`]
//! evaluates the right-hand side so the identity can be checked against
//! [`MapSpec::step`] value by value.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::rational::{ExactInt, OddRational, Parity};

/// How a map's additive constant was assembled.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MapFamily {
    /// `c = 1`.
    Classic,
    /// `c = 3^k`, `k >= 1` (`k = 0` normalizes to `Classic`).
    PowerOfThree { k: u32 },
    /// `c = O` with `O ≡ ±1 (mod 6)`.
    Lagarias { odd: ExactInt },
    /// `c = 3^k·O`, `k >= 1`, `O ≡ ±1 (mod 6)` (`k = 0` normalizes to
    /// `Lagarias`).
    Scaled { k: u32, odd: ExactInt },
}

/// Errors from building a [`MapSpec`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MapError {
    #[error("invalid map constant: {0}")]
    InvalidConstant(String),
    #[error("family carries 3^{have} but 3^{want} was asked to be removed")]
    InsufficientPower { have: u32, want: u32 },
    #[error("cannot parse {0:?} as a map spec (expected T0, Tk:<k>, TO:<O>, or T3kO:<k>,<O>)")]
    Parse(String),
}

/// A fully validated member of the map family: the family tag plus the
/// derived odd constant `c`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MapSpec {
    family: MapFamily,
    constant: ExactInt,
}

pub fn pow3(k: u32) -> ExactInt {
    ExactInt::from(3).pow(k)
}

/// `O ≡ ±1 (mod 6)`: odd and not a multiple of 3, in one test. Negative
/// constants are fine; the congruence is taken in the mathematical sense.
fn check_lagarias_constant(odd: &ExactInt) -> Result<(), MapError> {
    let residue = odd.mod_floor(&ExactInt::from(6));
    if residue == ExactInt::one() || residue == ExactInt::from(5) {
        Ok(())
    } else {
        Err(MapError::InvalidConstant(format!(
            "O = {odd} is {residue} mod 6; it must be ±1 mod 6"
        )))
    }
}

impl MapSpec {
    /// The classic map, `c = 1`.
    pub fn classic() -> Self {
        MapSpec { family: MapFamily::Classic, constant: ExactInt::one() }
    }

    /// The map with `c = 3^k`. `k = 0` is admitted and collapses to
    /// [`MapSpec::classic`], keeping lift/project round trips exact.
    pub fn power_of_three(k: u32) -> Self {
        if k == 0 {
            return Self::classic();
        }
        MapSpec { family: MapFamily::PowerOfThree { k }, constant: pow3(k) }
    }

    /// The map with `c = O`, `O ≡ ±1 (mod 6)`.
    pub fn lagarias(odd: ExactInt) -> Result<Self, MapError> {
        check_lagarias_constant(&odd)?;
        Ok(MapSpec { family: MapFamily::Lagarias { odd: odd.clone() }, constant: odd })
    }

    /// The map with `c = 3^k·O`. `k = 0` collapses to [`MapSpec::lagarias`].
    pub fn scaled(k: u32, odd: ExactInt) -> Result<Self, MapError> {
        if k == 0 {
            return Self::lagarias(odd);
        }
        check_lagarias_constant(&odd)?;
        let constant = pow3(k) * &odd;
        Ok(MapSpec { family: MapFamily::Scaled { k, odd }, constant })
    }

    pub fn family(&self) -> &MapFamily {
        &self.family
    }

    /// The additive constant `c`. Always odd and nonzero.
    pub fn constant(&self) -> &ExactInt {
        &self.constant
    }

    /// The power of three carried by the family tag: `k` for `Tk` and
    /// `T3kO`, 0 for `T0`, and `None` for a bare `TO` constant.
    pub fn three_exponent(&self) -> Option<u32> {
        match &self.family {
            MapFamily::Classic => Some(0),
            MapFamily::PowerOfThree { k } => Some(*k),
            MapFamily::Lagarias { .. } => None,
            MapFamily::Scaled { k, .. } => Some(*k),
        }
    }

    /// For `T0` and `Tk`, the value `3^k` whose two-element cycle
    /// `3^k → 2·3^k → 3^k` is the expected terminal cycle of positive
    /// integer trajectories.
    pub fn convergence_target(&self) -> Option<OddRational> {
        match &self.family {
            MapFamily::Classic => Some(OddRational::one()),
            MapFamily::PowerOfThree { k } => Some(OddRational::from_integer(pow3(*k))),
            _ => None,
        }
    }

    /// The family member with constant `3^k·c`: `T0 → Tk`, `Tk → Tk`,
    /// `TO → T3kO`, `T3kO → T3kO`.
    pub fn scaled_up(&self, k: u32) -> MapSpec {
        match &self.family {
            MapFamily::Classic => MapSpec::power_of_three(k),
            MapFamily::PowerOfThree { k: j } => MapSpec::power_of_three(j + k),
            MapFamily::Lagarias { odd } => {
                MapSpec::scaled(k, odd.clone()).expect("constant already validated")
            }
            MapFamily::Scaled { k: j, odd } => {
                MapSpec::scaled(j + k, odd.clone()).expect("constant already validated")
            }
        }
    }

    /// The family member with constant `c/3^k`, defined only when the tag
    /// carries at least `3^k`.
    pub fn scaled_down(&self, k: u32) -> Result<MapSpec, MapError> {
        let insufficient = |have: u32| MapError::InsufficientPower { have, want: k };
        match &self.family {
            _ if k == 0 => Ok(self.clone()),
            MapFamily::Classic => Err(insufficient(0)),
            MapFamily::Lagarias { .. } => Err(insufficient(0)),
            MapFamily::PowerOfThree { k: j } => {
                if *j >= k {
                    Ok(MapSpec::power_of_three(j - k))
                } else {
                    Err(insufficient(*j))
                }
            }
            MapFamily::Scaled { k: j, odd } => {
                if *j >= k {
                    Ok(MapSpec::scaled(j - k, odd.clone()).expect("constant already validated"))
                } else {
                    Err(insufficient(*j))
                }
            }
        }
    }

    /// One application of the map.
    pub fn step(&self, q: &OddRational) -> OddRational {
        match q.parity() {
            Parity::Odd => {
                // (3q + c)/2 over a common denominator: (3a + cb) / 2b.
                // With a, c, b all odd the numerator is even, so the
                // halving is exact and the result stays in Q[(2)].
                let num = 3 * q.numerator() + &self.constant * q.denominator();
                debug_assert!(num.is_even());
                OddRational::new(num / 2, q.denominator().clone())
                    .expect("odd step stays in Q[(2)]")
            }
            Parity::Even => OddRational::from_reduced(
                q.numerator() / 2,
                q.denominator().clone(),
            ),
        }
    }

    /// `n` applications of the map.
    pub fn iterate(&self, q: &OddRational, n: u64) -> OddRational {
        let mut value = q.clone();
        for _ in 0..n {
            value = self.step(&value);
        }
        value
    }
}

/// `L_A(q) = q/A` for odd nonzero `A`. A bijection of `ℚ[(2)]` that
/// preserves parity, which is exactly why it conjugates the map family.
pub fn conjugate_down(scale: &ExactInt, q: &OddRational) -> OddRational {
    assert!(!scale.is_zero(), "conjugation scale must be nonzero");
    q.div_odd_int(scale)
}

/// `L_A⁻¹(q) = A·q`, the inverse of [`conjugate_down`].
pub fn conjugate_up(scale: &ExactInt, q: &OddRational) -> OddRational {
    assert!(scale.is_odd() && !scale.is_zero(), "conjugation scale must be odd and nonzero");
    q.mul_int(scale)
}

/// `L_A⁻¹ ∘ T_0 ∘ L_A`, which agrees with `T_A` pointwise on `ℚ[(2)]`.
pub fn conjugated_step(scale: &ExactInt, q: &OddRational) -> OddRational {
    conjugate_up(scale, &MapSpec::classic().step(&conjugate_down(scale, q)))
}

/// One-token textual form: `T0`, `Tk:2`, `TO:5`, `T3kO:1,5`.
impl fmt::Display for MapSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            MapFamily::Classic => write!(f, "T0"),
            MapFamily::PowerOfThree { k } => write!(f, "Tk:{k}"),
            MapFamily::Lagarias { odd } => write!(f, "TO:{odd}"),
            MapFamily::Scaled { k, odd } => write!(f, "T3kO:{k},{odd}"),
        }
    }
}

impl FromStr for MapSpec {
    type Err = MapError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let parse_err = || MapError::Parse(s.to_string());
        if s == "T0" {
            return Ok(MapSpec::classic());
        }
        if let Some(k) = s.strip_prefix("Tk:") {
            let k: u32 = k.parse().map_err(|_| parse_err())?;
            return Ok(MapSpec::power_of_three(k));
        }
        if let Some(odd) = s.strip_prefix("TO:") {
            let odd = BigInt::from_str(odd).map_err(|_| parse_err())?;
            return MapSpec::lagarias(odd);
        }
        if let Some(rest) = s.strip_prefix("T3kO:") {
            let (k, odd) = rest.split_once(',').ok_or_else(parse_err)?;
            let k: u32 = k.parse().map_err(|_| parse_err())?;
            let odd = BigInt::from_str(odd).map_err(|_| parse_err())?;
            return MapSpec::scaled(k, odd);
        }
        Err(parse_err())
    }
}

/// Report form: `{family, k, O, c}` with absent parameters null.
#[derive(Serialize, Deserialize)]
struct MapSpecRepr {
    family: String,
    k: Option<u32>,
    #[serde(rename = "O")]
    odd: Option<String>,
    c: String,
}

impl Serialize for MapSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let (family, k, odd) = match &self.family {
            MapFamily::Classic => ("T0", Some(0), None),
            MapFamily::PowerOfThree { k } => ("Tk", Some(*k), None),
            MapFamily::Lagarias { odd } => ("TO", None, Some(odd.to_string())),
            MapFamily::Scaled { k, odd } => ("T3kO", Some(*k), Some(odd.to_string())),
        };
        MapSpecRepr {
            family: family.to_string(),
            k,
            odd,
            c: self.constant.to_string(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MapSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let repr = MapSpecRepr::deserialize(deserializer)?;
        let int = |s: &str| BigInt::from_str(s).map_err(D::Error::custom);
        let spec = match repr.family.as_str() {
            "T0" => MapSpec::classic(),
            "Tk" => MapSpec::power_of_three(
                repr.k.ok_or_else(|| D::Error::custom("Tk needs k"))?,
            ),
            "TO" => {
                let odd = repr.odd.ok_or_else(|| D::Error::custom("TO needs O"))?;
                MapSpec::lagarias(int(&odd)?).map_err(D::Error::custom)?
            }
            "T3kO" => {
                let k = repr.k.ok_or_else(|| D::Error::custom("T3kO needs k"))?;
                let odd = repr.odd.ok_or_else(|| D::Error::custom("T3kO needs O"))?;
                MapSpec::scaled(k, int(&odd)?).map_err(D::Error::custom)?
            }
            other => return Err(D::Error::custom(format!("unknown family {other:?}"))),
        };
        if spec.constant.to_string() != repr.c {
            return Err(D::Error::custom("constant does not match family parameters"));
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> OddRational {
        s.parse().unwrap()
    }

    // Independent evaluation of (3a/b + c)/2 resp. (a/b)/2 over i64 pairs,
    // reduced by a local gcd. Kept free of OddRational internals.
    fn naive_step(a: i64, b: i64, c: i64) -> (i64, i64) {
        fn gcd(mut x: i64, mut y: i64) -> i64 {
            x = x.abs();
            y = y.abs();
            while y != 0 {
                (x, y) = (y, x % y);
            }
            x
        }
        let (num, den) = if a % 2 != 0 { (3 * a + c * b, 2 * b) } else { (a, 2 * b) };
        let g = gcd(num, den).max(1);
        (num / g, den / g)
    }

    #[test]
    fn spec_validation() {
        assert_eq!(MapSpec::power_of_three(2).constant(), &ExactInt::from(9));
        assert_eq!(MapSpec::scaled(1, 5.into()).unwrap().constant(), &ExactInt::from(15));
        assert!(matches!(MapSpec::lagarias(9.into()), Err(MapError::InvalidConstant(_))));
        assert!(MapSpec::lagarias(4.into()).is_err());
        assert!(MapSpec::lagarias((-1).into()).is_ok());
        assert!(MapSpec::lagarias((-7).into()).is_ok());
        assert!(MapSpec::scaled(3, 15.into()).is_err()); // 15 ≡ 3 mod 6
        // k = 0 collapses onto the unscaled family.
        assert_eq!(MapSpec::power_of_three(0), MapSpec::classic());
        assert_eq!(
            MapSpec::scaled(0, 5.into()).unwrap(),
            MapSpec::lagarias(5.into()).unwrap()
        );
    }

    #[test]
    fn step_matches_fixtures() {
        assert_eq!(MapSpec::power_of_three(2).step(&q("189")), q("288"));
        assert_eq!(MapSpec::power_of_three(1).step(&q("6")), q("3"));
        assert_eq!(MapSpec::classic().step(&q("1/5")), q("4/5"));
        assert_eq!(MapSpec::classic().step(&q("0")), q("0"));
        assert_eq!(MapSpec::classic().step(&q("-5")), q("-7"));
    }

    #[test]
    fn step_matches_independent_evaluation() {
        for c in [1i64, 3, 9, 5, 15, -1, -5] {
            let spec = if c == 1 {
                MapSpec::classic()
            } else {
                MapSpec { family: MapFamily::Lagarias { odd: c.into() }, constant: c.into() }
            };
            for a in -60..=60i64 {
                for b in [1i64, 3, 5, 7, 9, 55].into_iter() {
                    if num_integer::gcd(a, b) != 1 {
                        continue;
                    }
                    let got = spec.step(&OddRational::new(a.into(), b.into()).unwrap());
                    let (en, ed) = naive_step(a, b, c);
                    assert_eq!(got, OddRational::new(en.into(), ed.into()).unwrap());
                }
            }
        }
    }

    #[test]
    fn conjugation_examples() {
        assert_eq!(conjugate_down(&9.into(), &q("189")), q("21"));
        assert_eq!(conjugate_down(&1.into(), &q("4/5")), q("4/5"));
        assert_eq!(conjugate_down(&3.into(), &q("63")), q("21"));
        assert_eq!(conjugate_up(&9.into(), &q("21")), q("189"));
        assert_eq!(conjugate_up(&3.into(), &q("32")), q("96"));
        assert_eq!(conjugate_up(&5.into(), &q("1/5")), q("1"));
    }

    #[test]
    fn conjugated_step_agrees_with_the_direct_step() {
        assert_eq!(conjugated_step(&9.into(), &q("189")), q("288"));
        assert_eq!(conjugated_step(&3.into(), &q("63")), q("96"));
        // (3·57 + 15)/2 = 93 on one side, 3·(3·19 + 5)/2 = 3·31 on the other.
        assert_eq!(conjugated_step(&15.into(), &q("57")), q("93"));
        assert_eq!(
            MapSpec::scaled(1, 5.into()).unwrap().step(&q("57")),
            q("93")
        );
    }

    #[test]
    fn parity_transport_under_conjugation() {
        for a in -40..=40i64 {
            for b in [1i64, 5, 9, 21] {
                if num_integer::gcd(a, b) != 1 {
                    continue;
                }
                let v = OddRational::new(a.into(), b.into()).unwrap();
                for scale in [1i64, 3, -5, 27] {
                    assert_eq!(conjugate_down(&scale.into(), &v).parity(), v.parity());
                }
            }
        }
    }

    #[test]
    fn spec_strings_round_trip() {
        for s in ["T0", "Tk:2", "TO:5", "TO:-7", "T3kO:1,5", "T3kO:2,-55"] {
            let spec: MapSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert_eq!("Tk:0".parse::<MapSpec>().unwrap(), MapSpec::classic());
        assert!("T1".parse::<MapSpec>().is_err());
        assert!("TO:9".parse::<MapSpec>().is_err());
        assert!("T3kO:1".parse::<MapSpec>().is_err());
    }

    #[test]
    fn spec_json_round_trips() {
        for s in ["T0", "Tk:3", "TO:-7", "T3kO:2,11"] {
            let spec: MapSpec = s.parse().unwrap();
            let json = serde_json::to_string(&spec).unwrap();
            assert_eq!(serde_json::from_str::<MapSpec>(&json).unwrap(), spec);
        }
        let json = serde_json::to_string(&MapSpec::scaled(1, 5.into()).unwrap()).unwrap();
        assert_eq!(json, r#"{"family":"T3kO","k":1,"O":"5","c":"15"}"#);
    }
}
