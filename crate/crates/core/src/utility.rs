//! Extended utility values: finite nonnegative amounts plus a distinguished
//! negative-infinity sentinel used for hard constraints.
//!
//! The sentinel is its own variant rather than `f64::NEG_INFINITY` so that
//! serialization is exact and the absorption rules are explicit.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::Add;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

/// A utility value: either finite (nonnegative in stored tables) or `NegInf`.
///
/// Addition is absorbing (`NegInf + u = NegInf`) and `NegInf` loses every max.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Utility {
    Finite(f64),
    NegInf,
}

impl Utility {
    pub const ZERO: Utility = Utility::Finite(0.0);

    pub fn is_neg_inf(self) -> bool {
        matches!(self, Utility::NegInf)
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Utility::Finite(_))
    }

    /// The finite value, if any.
    pub fn finite(self) -> Option<f64> {
        match self {
            Utility::Finite(v) => Some(v),
            Utility::NegInf => None,
        }
    }

    pub fn max(self, other: Utility) -> Utility {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn min(self, other: Utility) -> Utility {
        if self <= other {
            self
        } else {
            other
        }
    }

    /// Mean contribution of a total over `n` parts; `NegInf` stays absorbing.
    pub fn mean(self, n: usize) -> Utility {
        match self {
            Utility::Finite(v) => Utility::Finite(v / n as f64),
            Utility::NegInf => Utility::NegInf,
        }
    }

    /// Absolute-tolerance comparison; `NegInf` only matches itself.
    pub fn approx_eq(self, other: Utility, tol: f64) -> bool {
        match (self, other) {
            (Utility::Finite(a), Utility::Finite(b)) => (a - b).abs() <= tol,
            (Utility::NegInf, Utility::NegInf) => true,
            _ => false,
        }
    }
}

impl Add for Utility {
    type Output = Utility;

    fn add(self, rhs: Utility) -> Utility {
        match (self, rhs) {
            (Utility::Finite(a), Utility::Finite(b)) => Utility::Finite(a + b),
            _ => Utility::NegInf,
        }
    }
}

impl Sum for Utility {
    fn sum<I: Iterator<Item = Utility>>(iter: I) -> Utility {
        iter.fold(Utility::ZERO, |acc, u| acc + u)
    }
}

impl Eq for Utility {}

impl PartialOrd for Utility {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Utility {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Utility::NegInf, Utility::NegInf) => Ordering::Equal,
            (Utility::NegInf, Utility::Finite(_)) => Ordering::Less,
            (Utility::Finite(_), Utility::NegInf) => Ordering::Greater,
            (Utility::Finite(a), Utility::Finite(b)) => {
                debug_assert!(!a.is_nan() && !b.is_nan());
                a.partial_cmp(b).unwrap_or(Ordering::Equal)
            }
        }
    }
}

impl fmt::Display for Utility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Utility::Finite(v) => write!(f, "{v}"),
            Utility::NegInf => write!(f, "-inf"),
        }
    }
}

impl From<f64> for Utility {
    fn from(v: f64) -> Self {
        Utility::Finite(v)
    }
}

// In instance files a utility is a JSON number, or the string "-inf".
// Integral values serialize as integers so generated files stay diffable.
impl Serialize for Utility {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Utility::NegInf => serializer.serialize_str("-inf"),
            Utility::Finite(v) => {
                if v.fract() == 0.0 && v.abs() < 9e15 {
                    serializer.serialize_i64(*v as i64)
                } else {
                    serializer.serialize_f64(*v)
                }
            }
        }
    }
}

struct UtilityVisitor;

impl Visitor<'_> for UtilityVisitor {
    type Value = Utility;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a number or the string \"-inf\"")
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Utility, E> {
        Ok(Utility::Finite(v as f64))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Utility, E> {
        Ok(Utility::Finite(v as f64))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Utility, E> {
        Ok(Utility::Finite(v))
    }

    fn visit_str<E: de::Error>(self, s: &str) -> Result<Utility, E> {
        if s == "-inf" {
            Ok(Utility::NegInf)
        } else {
            Err(E::invalid_value(de::Unexpected::Str(s), &self))
        }
    }
}

impl<'de> Deserialize<'de> for Utility {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Utility, D::Error> {
        deserializer.deserialize_any(UtilityVisitor)
    }
}

/// Index of the maximum entry; ties resolve to the lowest index, and an
/// all-`NegInf` slice yields index 0 so value selection stays total.
pub fn argmax(values: &[Utility]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
