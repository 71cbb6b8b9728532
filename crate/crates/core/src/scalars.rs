//! Exact rational and complex-rational scalars used inside ASTs.
//!
//! Matrix numerics run in double precision; everything syntactic (term
//! coefficients, question distributions, mesh sizes) stays exact so that
//! printing, parsing and grid refinement never drift.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

pub type Rat = BigRational;

pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn rat_to_f64(q: &Rat) -> f64 {
    q.to_f64().expect("rational out of f64 range")
}

/// Canonical text form: `p` when the denominator is 1, else `p/q`.
pub fn rat_str(q: &Rat) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Parses `p` or `p/q` with optional leading sign. Returns None on anything
/// else (no decimals, no whitespace).
pub fn parse_rat(s: &str) -> Option<Rat> {
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let n: BigInt = num.parse().ok()?;
    let d: BigInt = den.parse().ok()?;
    if d.is_zero() {
        return None;
    }
    Some(Rat::new(n, d))
}

/// Serializes Rat as its canonical `p` / `p/q` string.
pub mod rat_serde {
    use super::{parse_rat, rat_str, Rat};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(q: &Rat, s: S) -> Result<S::Ok, S::Error> {
        rat_str(q).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rat, D::Error> {
        let text = String::deserialize(d)?;
        parse_rat(&text).ok_or_else(|| serde::de::Error::custom(format!("bad rational: {text}")))
    }
}

/// Same string encoding for Option<Rat>, with None as null.
pub mod rat_opt_serde {
    use super::{parse_rat, rat_str, Rat};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(q: &Option<Rat>, s: S) -> Result<S::Ok, S::Error> {
        q.as_ref().map(rat_str).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rat>, D::Error> {
        match Option::<String>::deserialize(d)? {
            None => Ok(None),
            Some(text) => parse_rat(&text)
                .map(Some)
                .ok_or_else(|| serde::de::Error::custom(format!("bad rational: {text}"))),
        }
    }
}

/// A complex number with exact rational parts. Term coefficients only.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CRat {
    #[serde(with = "rat_serde")]
    pub re: Rat,
    #[serde(with = "rat_serde")]
    pub im: Rat,
}

impl CRat {
    pub fn new(re: Rat, im: Rat) -> Self {
        CRat { re, im }
    }

    pub fn from_rat(re: Rat) -> Self {
        CRat { re, im: Rat::zero() }
    }

    pub fn from_int(n: i64) -> Self {
        Self::from_rat(rat_int(n))
    }

    pub fn zero() -> Self {
        Self::from_int(0)
    }

    pub fn one() -> Self {
        Self::from_int(1)
    }

    pub fn i() -> Self {
        CRat { re: Rat::zero(), im: Rat::one() }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.re.is_one() && self.im.is_zero()
    }

    pub fn is_real(&self) -> bool {
        self.im.is_zero()
    }

    pub fn conj(&self) -> Self {
        CRat { re: self.re.clone(), im: -self.im.clone() }
    }

    /// Rational upper bound on the modulus: |re| + |im| >= sqrt(re^2 + im^2).
    pub fn abs_bound(&self) -> Rat {
        self.re.abs() + self.im.abs()
    }

    pub fn to_c64(&self) -> Complex64 {
        Complex64::new(rat_to_f64(&self.re), rat_to_f64(&self.im))
    }
}

impl Add for &CRat {
    type Output = CRat;
    fn add(self, rhs: &CRat) -> CRat {
        CRat { re: &self.re + &rhs.re, im: &self.im + &rhs.im }
    }
}

impl Sub for &CRat {
    type Output = CRat;
    fn sub(self, rhs: &CRat) -> CRat {
        CRat { re: &self.re - &rhs.re, im: &self.im - &rhs.im }
    }
}

impl Mul for &CRat {
    type Output = CRat;
    fn mul(self, rhs: &CRat) -> CRat {
        CRat {
            re: &self.re * &rhs.re - &self.im * &rhs.im,
            im: &self.re * &rhs.im + &self.im * &rhs.re,
        }
    }
}

impl Neg for CRat {
    type Output = CRat;
    fn neg(self) -> CRat {
        CRat { re: -self.re, im: -self.im }
    }
}

/// Canonical scalar token. Never carries a leading minus: callers that need
/// a negative value print `-` and the negated token, matching how the lexer
/// fuses `a+bi` / `a-bi` written without internal spaces.
impl fmt::Display for CRat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im.is_zero() {
            return write!(f, "{}", rat_str(&self.re));
        }
        if self.re.is_zero() {
            return write!(f, "{}i", rat_str(&self.im));
        }
        if self.im.is_negative() {
            write!(f, "{}-{}i", rat_str(&self.re), rat_str(&self.im.clone().abs()))
        } else {
            write!(f, "{}+{}i", rat_str(&self.re), rat_str(&self.im))
        }
    }
}
