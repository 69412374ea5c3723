//! Exact arithmetic over the odd-denominator rationals.
//!
//! Every value the map kernels touch lives in the subring of `ℚ` whose
//! reduced denominators are odd (written `ℚ[(2)]` in the classical
//! literature). The odd denominator is invertible mod 2, so the parity of
//! a value is the parity of its reduced numerator, and the `(3n + c)/2`
//! step stays inside the subring. [`OddRational`] enforces that closure at
//! construction time: the reduced denominator must be odd, or you get an
//! [`ArithError::EvenDenominator`] instead of a value.

use std::cmp::Ordering;
use std::fmt;
use std::hash::Hash;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Arbitrary-precision signed integer. Arithmetic never overflows or rounds.
pub type ExactInt = BigInt;

/// Parity of an odd-denominator rational: the parity of its reduced
/// numerator. Zero is even.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
}

/// Errors from constructing or combining [`OddRational`] values.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArithError {
    #[error("denominator is zero")]
    ZeroDenominator,
    /// The reduced denominator came out even: the value is a perfectly good
    /// rational, but it is not in `ℚ[(2)]` and the map dynamics are not
    /// defined on it.
    #[error("value {0} has an even reduced denominator (outside Q[(2)])")]
    EvenDenominator(String),
    #[error("division by zero")]
    DivideByZero,
    #[error("cannot parse {0:?} as a rational")]
    Parse(String),
}

/// A reduced rational with positive odd denominator.
///
/// Invariants, enforced by every constructor:
/// - `denominator >= 1` and odd; the sign lives on the numerator;
/// - `gcd(|numerator|, denominator) = 1`;
/// - zero is stored as `0/1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OddRational {
    numerator: ExactInt,
    denominator: ExactInt,
}

impl OddRational {
    /// Builds the reduced form of `num/den`, rejecting values outside
    /// `ℚ[(2)]`.
    pub fn new(num: ExactInt, den: ExactInt) -> Result<Self, ArithError> {
        if den.is_zero() {
            return Err(ArithError::ZeroDenominator);
        }
        let (mut num, mut den) = if den.is_negative() { (-num, -den) } else { (num, den) };
        if num.is_zero() {
            return Ok(Self::zero());
        }
        let g = num.gcd(&den);
        if !g.is_one() {
            num /= &g;
            den /= &g;
        }
        if den.is_even() {
            return Err(ArithError::EvenDenominator(format!("{num}/{den}")));
        }
        Ok(OddRational { numerator: num, denominator: den })
    }

    /// Embeds an integer as `n/1`.
    pub fn from_integer(n: impl Into<ExactInt>) -> Self {
        OddRational { numerator: n.into(), denominator: ExactInt::one() }
    }

    pub fn zero() -> Self {
        OddRational { numerator: ExactInt::zero(), denominator: ExactInt::one() }
    }

    pub fn one() -> Self {
        Self::from_integer(1)
    }

    /// Internal constructor for values already known to be reduced with a
    /// positive odd denominator.
    pub(crate) fn from_reduced(numerator: ExactInt, denominator: ExactInt) -> Self {
        debug_assert!(denominator.is_positive() && denominator.is_odd());
        debug_assert!(numerator.gcd(&denominator).is_one() || numerator.is_zero());
        debug_assert!(!numerator.is_zero() || denominator.is_one());
        OddRational { numerator, denominator }
    }

    pub fn numerator(&self) -> &ExactInt {
        &self.numerator
    }

    pub fn denominator(&self) -> &ExactInt {
        &self.denominator
    }

    pub fn is_zero(&self) -> bool {
        self.numerator.is_zero()
    }

    pub fn is_integer(&self) -> bool {
        self.denominator.is_one()
    }

    /// The numerator, when the value is an integer.
    pub fn as_integer(&self) -> Option<&ExactInt> {
        self.is_integer().then_some(&self.numerator)
    }

    /// Parity of the reduced numerator; well defined because the odd
    /// denominator is a unit mod 2.
    pub fn parity(&self) -> Parity {
        if self.numerator.is_odd() {
            Parity::Odd
        } else {
            Parity::Even
        }
    }

    pub fn is_odd(&self) -> bool {
        self.parity() == Parity::Odd
    }

    pub fn abs(&self) -> Self {
        OddRational {
            numerator: self.numerator.abs(),
            denominator: self.denominator.clone(),
        }
    }

    /// Exact division. Fails on a zero divisor, or when the quotient leaves
    /// `ℚ[(2)]` (for example `1 / 2`); leaving the subring indicates a logic
    /// bug in dynamics code, so it is an error rather than a widening.
    pub fn div(&self, rhs: &Self) -> Result<Self, ArithError> {
        if rhs.is_zero() {
            return Err(ArithError::DivideByZero);
        }
        OddRational::new(
            &self.numerator * &rhs.denominator,
            &self.denominator * &rhs.numerator,
        )
    }

    /// Division by an odd integer. This never leaves `ℚ[(2)]`, which is what
    /// makes conjugation by odd constants total.
    pub fn div_odd_int(&self, odd: &ExactInt) -> Self {
        assert!(odd.is_odd(), "divisor must be odd, got {odd}");
        OddRational::new(self.numerator.clone(), &self.denominator * odd)
            .expect("odd divisor keeps the denominator odd")
    }

    /// Multiplication by an integer.
    pub fn mul_int(&self, n: &ExactInt) -> Self {
        OddRational::new(&self.numerator * n, self.denominator.clone())
            .expect("integer multiple keeps the denominator odd")
    }

    fn add_impl(&self, rhs: &Self) -> Self {
        let num = &self.numerator * &rhs.denominator + &rhs.numerator * &self.denominator;
        let den = &self.denominator * &rhs.denominator;
        OddRational::new(num, den).expect("sum of odd denominators stays odd")
    }

    fn mul_impl(&self, rhs: &Self) -> Self {
        OddRational::new(
            &self.numerator * &rhs.numerator,
            &self.denominator * &rhs.denominator,
        )
        .expect("product of odd denominators stays odd")
    }
}

impl PartialOrd for OddRational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OddRational {
    /// Standard total order on rationals: `a/b < c/d` iff `ad < cb`
    /// (denominators are positive).
    fn cmp(&self, other: &Self) -> Ordering {
        (&self.numerator * &other.denominator).cmp(&(&other.numerator * &self.denominator))
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident, $impl:ident) => {
        impl $trait<&OddRational> for &OddRational {
            type Output = OddRational;
            fn $method(self, rhs: &OddRational) -> OddRational {
                self.$impl(rhs)
            }
        }
        impl $trait<OddRational> for OddRational {
            type Output = OddRational;
            fn $method(self, rhs: OddRational) -> OddRational {
                self.$impl(&rhs)
            }
        }
    };
}

forward_binop!(Add, add, add_impl);
forward_binop!(Mul, mul, mul_impl);

impl Sub<&OddRational> for &OddRational {
    type Output = OddRational;
    fn sub(self, rhs: &OddRational) -> OddRational {
        self.add_impl(&-rhs)
    }
}

impl Sub<OddRational> for OddRational {
    type Output = OddRational;
    fn sub(self, rhs: OddRational) -> OddRational {
        self.add_impl(&-&rhs)
    }
}

impl Neg for &OddRational {
    type Output = OddRational;
    fn neg(self) -> OddRational {
        OddRational {
            numerator: -&self.numerator,
            denominator: self.denominator.clone(),
        }
    }
}

impl Neg for OddRational {
    type Output = OddRational;
    fn neg(self) -> OddRational {
        OddRational { numerator: -self.numerator, denominator: self.denominator }
    }
}

impl From<i64> for OddRational {
    fn from(n: i64) -> Self {
        Self::from_integer(n)
    }
}

impl From<ExactInt> for OddRational {
    fn from(n: ExactInt) -> Self {
        Self::from_integer(n)
    }
}

/// Textual form `a/b`, with `/b` omitted for integers.
impl fmt::Display for OddRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denominator.is_one() {
            write!(f, "{}", self.numerator)
        } else {
            write!(f, "{}/{}", self.numerator, self.denominator)
        }
    }
}

impl FromStr for OddRational {
    type Err = ArithError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let parse_int =
            |t: &str| ExactInt::from_str(t).map_err(|_| ArithError::Parse(s.to_string()));
        match s.split_once('/') {
            None => Ok(Self::from_integer(parse_int(s)?)),
            Some((num, den)) => OddRational::new(parse_int(num)?, parse_int(den)?),
        }
    }
}

impl Serialize for OddRational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OddRational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> OddRational {
        s.parse().unwrap()
    }

    #[test]
    fn construction_reduces_and_normalizes_sign() {
        let v = OddRational::new(8.into(), 10.into()).unwrap();
        assert_eq!((v.numerator(), v.denominator()), (&4.into(), &5.into()));

        let v = OddRational::new((-5).into(), 1.into()).unwrap();
        assert_eq!(v, OddRational::from_integer(-5));

        // Sign moves onto the numerator.
        let v = OddRational::new(3.into(), (-9).into()).unwrap();
        assert_eq!(v, q("-1/3"));
    }

    #[test]
    fn construction_rejects_values_outside_the_subring() {
        assert_eq!(
            OddRational::new(3.into(), 6.into()),
            Err(ArithError::EvenDenominator("1/2".into()))
        );
        assert_eq!(OddRational::new(1.into(), 0.into()), Err(ArithError::ZeroDenominator));
        // Reduction can rescue an even denominator...
        assert_eq!(OddRational::new(2.into(), 6.into()).unwrap(), q("1/3"));
        // ...and zero always reduces to 0/1.
        assert_eq!(OddRational::new(0.into(), 4.into()).unwrap(), OddRational::zero());
    }

    #[test]
    fn parity_is_numerator_parity() {
        assert_eq!(q("1/5").parity(), Parity::Odd);
        assert_eq!(q("4/5").parity(), Parity::Even);
        assert_eq!(q("0").parity(), Parity::Even);
        assert_eq!(q("-7/3").parity(), Parity::Odd);
    }

    #[test]
    fn arithmetic_examples() {
        assert_eq!(&q("1/5") + &q("4/5"), q("1"));
        assert_eq!(q("63").div(&q("3")).unwrap(), q("21"));
        assert_eq!(q("1").div(&q("2")), Err(ArithError::EvenDenominator("1/2".into())));
        assert_eq!(q("1").div(&q("0")), Err(ArithError::DivideByZero));
        assert_eq!(&q("2/3") * &q("3/5"), q("2/5"));
        assert_eq!(&q("1/3") - &q("1/5"), q("2/15"));
    }

    #[test]
    fn order_is_the_rational_order() {
        assert!(q("1/3") < q("2/5"));
        assert!(q("-10") < q("-7"));
        assert!(q("-1/3") > q("-1"));
        assert_eq!(q("7/21").cmp(&q("1/3")), Ordering::Equal);
    }

    #[test]
    fn display_and_parse_round_trip() {
        for s in ["0", "-5", "4/5", "-7/3", "189"] {
            assert_eq!(q(s).to_string(), s);
        }
        assert!("1/2".parse::<OddRational>().is_err());
        assert!("".parse::<OddRational>().is_err());
        assert!("a/b".parse::<OddRational>().is_err());
        assert_eq!(q(" -5 "), q("-5"));
    }

    #[test]
    fn serde_uses_the_textual_form() {
        let v = q("-4/5");
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, "\"-4/5\"");
        assert_eq!(serde_json::from_str::<OddRational>(&json).unwrap(), v);
    }
}
