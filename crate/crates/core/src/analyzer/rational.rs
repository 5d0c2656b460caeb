use std::fmt;
use std::ops::{Add, Div, Mul, Sub};

use num_rational::Ratio;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Exact ratio that serializes as `{"exact": "31/10", "approx": 3.1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rational(pub Ratio<i64>);

impl Rational {
    pub const ZERO: Rational = Rational(Ratio::new_raw(0, 1));
    pub const ONE: Rational = Rational(Ratio::new_raw(1, 1));

    pub fn new(numer: i64, denom: i64) -> Self {
        Rational(Ratio::new(numer, denom))
    }

    pub fn from_int(n: i64) -> Self {
        Rational(Ratio::from_integer(n))
    }

    pub fn to_f64(self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    /// Arithmetic mean; zero for an empty slice.
    pub fn mean(values: &[Rational]) -> Rational {
        if values.is_empty() {
            return Rational::ZERO;
        }
        values.iter().fold(Rational::ZERO, |acc, v| acc + *v) / Rational::from_int(values.len() as i64)
    }

    pub fn parse(s: &str) -> Option<Rational> {
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (n.trim().parse().ok()?, d.trim().parse().ok()?),
            None => (s.trim().parse().ok()?, 1),
        };
        (d != 0).then(|| Rational::new(n, d))
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

macro_rules! forward_op {
    ($tr:ident, $m:ident) => {
        impl $tr for Rational {
            type Output = Rational;
            fn $m(self, rhs: Rational) -> Rational {
                Rational(self.0.$m(rhs.0))
            }
        }
    };
}
forward_op!(Add, add);
forward_op!(Sub, sub);
forward_op!(Mul, mul);
forward_op!(Div, div);

#[derive(Serialize, Deserialize)]
struct Wire {
    exact: String,
    approx: f64,
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        Wire { exact: self.to_string(), approx: self.to_f64() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let wire = Wire::deserialize(d)?;
        Rational::parse(&wire.exact).ok_or_else(|| D::Error::custom(format!("bad rational `{}`", wire.exact)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_is_exact() {
        let vals: Vec<Rational> = [3, 3, 3, 3, 3, 3, 3, 3, 4, 4].iter().map(|&n| Rational::from_int(n)).collect();
        assert_eq!(Rational::mean(&vals), Rational::new(16, 5));
        assert_eq!(Rational::mean(&vals).to_string(), "16/5");
    }

    #[test]
    fn json_round_trip() {
        let r = Rational::new(31, 10);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(json, r#"{"exact":"31/10","approx":3.1}"#);
        assert_eq!(serde_json::from_str::<Rational>(&json).unwrap(), r);
    }
}
