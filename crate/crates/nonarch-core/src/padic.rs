//! Exact Q_p scalar arithmetic.
//!
//! Scalars are arbitrary-precision rationals; a [`FieldSpec`] fixes the prime
//! and turns a scalar into its p-adic valuation. Absolute values are never
//! materialized as floats: |x| = p^(-val x) is carried as the base-p exponent.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const MAX_PRIME: u64 = 1_000_000;

/// A prime p, validated on construction. Cheap to copy and compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct FieldSpec {
    p: u64,
}

impl FieldSpec {
    pub fn new(p: u64) -> Result<Self> {
        if !(2..=MAX_PRIME).contains(&p) || !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        Ok(FieldSpec { p })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    /// p as an exact scalar.
    pub fn uniformizer(&self) -> Scalar {
        Scalar::from_int(self.p as i64)
    }

    /// p^k as an exact scalar, any sign of k.
    pub fn pow(&self, k: i64) -> Scalar {
        let base = BigInt::from(self.p);
        if k >= 0 {
            Scalar(BigRational::from_integer(base.pow(k as u32)))
        } else {
            Scalar(BigRational::new(BigInt::one(), base.pow((-k) as u32)))
        }
    }

    /// p-adic valuation; val(0) = +infinity.
    pub fn val(&self, x: &Scalar) -> Valuation {
        if x.is_zero() {
            return Valuation::Infinite;
        }
        let vn = int_val(self.p, x.0.numer());
        let vd = int_val(self.p, x.0.denom());
        Valuation::Finite(vn - vd)
    }

    /// Base-p exponent of |x|: abs_exp(x) = -val(x), with -infinity for 0.
    /// |x| itself is p^abs_exp(x).
    pub fn abs_exp(&self, x: &Scalar) -> ExtRat {
        match self.val(x) {
            Valuation::Infinite => ExtRat::NegInf,
            Valuation::Finite(v) => ExtRat::from_int(-v),
        }
    }

    /// Checks the sanity of another operand's field before mixed operations.
    pub fn require_same(&self, other: &FieldSpec) -> Result<()> {
        if self != other {
            return Err(Error::FieldMismatch(self.p, other.p));
        }
        Ok(())
    }
}

impl TryFrom<u64> for FieldSpec {
    type Error = Error;
    fn try_from(p: u64) -> Result<Self> {
        FieldSpec::new(p)
    }
}

impl From<FieldSpec> for u64 {
    fn from(f: FieldSpec) -> u64 {
        f.p
    }
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// Multiplicity of p in a nonzero integer.
fn int_val(p: u64, n: &BigInt) -> i64 {
    debug_assert!(!n.is_zero());
    let p = BigInt::from(p);
    let mut n = n.abs();
    let mut v = 0i64;
    loop {
        let (q, r) = num_integer::Integer::div_rem(&n, &p);
        if !r.is_zero() {
            return v;
        }
        n = q;
        v += 1;
    }
}

/// An exact element of Q (and hence of every Q_p).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Scalar(BigRational);

impl Scalar {
    pub fn new(r: BigRational) -> Self {
        Scalar(r)
    }

    pub fn from_int(n: i64) -> Self {
        Scalar(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn from_ratio(num: i64, den: i64) -> Result<Self> {
        if den == 0 {
            return Err(Error::DivisionByZero);
        }
        Ok(Scalar(BigRational::new(BigInt::from(num), BigInt::from(den))))
    }

    pub fn zero() -> Self {
        Scalar(BigRational::zero())
    }

    pub fn one() -> Self {
        Scalar(BigRational::one())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn as_rational(&self) -> &BigRational {
        &self.0
    }

    pub fn into_rational(self) -> BigRational {
        self.0
    }

    pub fn abs(&self) -> Scalar {
        Scalar(self.0.abs())
    }

    pub fn inv(&self) -> Result<Scalar> {
        if self.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(Scalar(self.0.recip()))
    }

    pub fn div(&self, rhs: &Scalar) -> Result<Scalar> {
        if rhs.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(Scalar(&self.0 / &rhs.0))
    }

    /// x^k for any integer k; 0^k errors for k < 0 and is 1 for k = 0.
    pub fn pow(&self, k: i64) -> Result<Scalar> {
        if self.is_zero() && k < 0 {
            return Err(Error::ZeroToNegativePower);
        }
        if k == 0 {
            return Ok(Scalar::one());
        }
        let mag = self.0.pow(k.unsigned_abs().try_into().expect("exponent fits i32"));
        Ok(Scalar(if k < 0 { mag.recip() } else { mag }))
    }
}

impl From<i64> for Scalar {
    fn from(n: i64) -> Self {
        Scalar::from_int(n)
    }
}

macro_rules! scalar_binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: Scalar) -> Scalar {
                Scalar(self.0 $op rhs.0)
            }
        }
        impl<'a> $trait<&'a Scalar> for &'a Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &'a Scalar) -> Scalar {
                Scalar(&self.0 $op &rhs.0)
            }
        }
        impl<'a> $trait<&'a Scalar> for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &'a Scalar) -> Scalar {
                Scalar(self.0 $op &rhs.0)
            }
        }
    };
}

scalar_binop!(Add, add, +);
scalar_binop!(Sub, sub, -);
scalar_binop!(Mul, mul, *);

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-self.0)
    }
}

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-&self.0)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl FromStr for Scalar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parse_int = |t: &str| -> Result<BigInt> {
            t.parse::<BigInt>()
                .map_err(|_| Error::InvalidInput(format!("not an integer: {t:?}")))
        };
        match s.split_once('/') {
            None => Ok(Scalar(BigRational::from_integer(parse_int(s)?))),
            Some((n, d)) => {
                let den = parse_int(d)?;
                if den.is_zero() {
                    return Err(Error::DivisionByZero);
                }
                Ok(Scalar(BigRational::new(parse_int(n)?, den)))
            }
        }
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl de::Visitor<'_> for V {
            type Value = Scalar;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a rational as \"num/den\" string or an integer")
            }
            fn visit_str<E: de::Error>(self, s: &str) -> std::result::Result<Scalar, E> {
                s.parse().map_err(E::custom)
            }
            fn visit_i64<E: de::Error>(self, n: i64) -> std::result::Result<Scalar, E> {
                Ok(Scalar::from_int(n))
            }
            fn visit_u64<E: de::Error>(self, n: u64) -> std::result::Result<Scalar, E> {
                i64::try_from(n).map(Scalar::from_int).map_err(E::custom)
            }
        }
        de.deserialize_any(V)
    }
}

/// p-adic valuation of a scalar: an integer, or +infinity for 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Valuation {
    Finite(i64),
    Infinite,
}

impl Valuation {
    pub fn finite(&self) -> Option<i64> {
        match self {
            Valuation::Finite(v) => Some(*v),
            Valuation::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Valuation::Infinite)
    }
}

impl PartialOrd for Valuation {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Valuation {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use Valuation::*;
        match (self, other) {
            (Infinite, Infinite) => std::cmp::Ordering::Equal,
            (Infinite, Finite(_)) => std::cmp::Ordering::Greater,
            (Finite(_), Infinite) => std::cmp::Ordering::Less,
            (Finite(a), Finite(b)) => a.cmp(b),
        }
    }
}

impl Add for Valuation {
    type Output = Valuation;
    fn add(self, rhs: Valuation) -> Valuation {
        match (self, rhs) {
            (Valuation::Finite(a), Valuation::Finite(b)) => Valuation::Finite(a + b),
            _ => Valuation::Infinite,
        }
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Valuation::Finite(v) => write!(f, "{v}"),
            Valuation::Infinite => f.write_str("inf"),
        }
    }
}

/// A rational extended by both infinities. Used for log-scale magnitudes:
/// norm exponents take values in Q ∪ {+inf} (kernel directions), absolute
/// values in Q ∪ {-inf} (zero), so one type covers both ends.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ExtRat {
    NegInf,
    Finite(BigRational),
    PosInf,
}

impl ExtRat {
    pub fn from_int(n: i64) -> Self {
        ExtRat::Finite(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        ExtRat::Finite(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn finite(&self) -> Option<&BigRational> {
        match self {
            ExtRat::Finite(r) => Some(r),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtRat::Finite(_))
    }

    /// self + v where v is an integer valuation; +inf absorbs everything.
    /// Only meaningful when self is not -inf (asserted).
    pub fn plus_val(&self, v: Valuation) -> ExtRat {
        match (self, v) {
            (ExtRat::PosInf, _) | (_, Valuation::Infinite) => ExtRat::PosInf,
            (ExtRat::Finite(r), Valuation::Finite(k)) => {
                ExtRat::Finite(r + BigRational::from_integer(BigInt::from(k)))
            }
            (ExtRat::NegInf, _) => unreachable!("-inf has no valuation shift"),
        }
    }
}

impl PartialOrd for ExtRat {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtRat {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering::*;
        use ExtRat::*;
        match (self, other) {
            (NegInf, NegInf) | (PosInf, PosInf) => Equal,
            (NegInf, _) | (_, PosInf) => Less,
            (_, NegInf) | (PosInf, _) => Greater,
            (Finite(a), Finite(b)) => a.cmp(b),
        }
    }
}

impl fmt::Display for ExtRat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtRat::NegInf => f.write_str("-inf"),
            ExtRat::PosInf => f.write_str("inf"),
            ExtRat::Finite(r) => {
                if r.denom().is_one() {
                    write!(f, "{}", r.numer())
                } else {
                    write!(f, "{}/{}", r.numer(), r.denom())
                }
            }
        }
    }
}

/// Parses "inf" / "-inf" / "num/den" into an extended rational.
impl FromStr for ExtRat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "+inf" => Ok(ExtRat::PosInf),
            "-inf" => Ok(ExtRat::NegInf),
            t => Ok(ExtRat::Finite(t.parse::<Scalar>()?.into_rational())),
        }
    }
}

impl Serialize for ExtRat {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ExtRat {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// Displays a plain rational in the same "num/den" format as `Scalar`.
pub fn rational_string(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn q(s: &str) -> Scalar {
        s.parse().unwrap()
    }

    #[test]
    fn rejects_non_primes() {
        assert!(FieldSpec::new(1).is_err());
        assert!(FieldSpec::new(4).is_err());
        assert!(FieldSpec::new(1_000_003).is_err()); // prime but over the cap
        assert!(FieldSpec::new(997).is_ok());
    }

    #[test]
    fn valuation_examples() {
        let f3 = FieldSpec::new(3).unwrap();
        let f5 = FieldSpec::new(5).unwrap();
        let f2 = FieldSpec::new(2).unwrap();
        assert_eq!(f3.val(&q("18")), Valuation::Finite(2));
        assert_eq!(f5.val(&q("0")), Valuation::Infinite);
        assert_eq!(f2.val(&q("3/4")), Valuation::Finite(-2));
    }

    #[test]
    fn abs_exp_examples() {
        let f3 = FieldSpec::new(3).unwrap();
        assert_eq!(f3.abs_exp(&q("1/3")), ExtRat::from_int(1));
        assert_eq!(f3.abs_exp(&q("1")), ExtRat::from_int(0));
        assert_eq!(f3.abs_exp(&q("0")), ExtRat::NegInf);
    }

    #[test]
    fn field_op_examples() {
        assert_eq!(q("1/2") + q("1/3"), q("5/6"));
        assert_eq!(q("3/7").inv().unwrap(), q("7/3"));
        assert_eq!(q("2").pow(-3).unwrap(), q("1/8"));
        assert_eq!(q("0").pow(0).unwrap(), q("1"));
        assert!(q("0").pow(-1).is_err());
        assert!(q("0").inv().is_err());
    }

    #[test]
    fn display_round_trip() {
        for s in ["0", "7", "-3", "5/6", "-22/7"] {
            assert_eq!(q(s).to_string(), s);
        }
        // normalization on parse
        assert_eq!(q("4/6"), q("2/3"));
        assert_eq!(q("3/-6").to_string(), "-1/2");
    }

    #[test]
    fn serde_uses_num_den_strings() {
        let x = q("-5/6");
        let js = serde_json::to_string(&x).unwrap();
        assert_eq!(js, "\"-5/6\"");
        let back: Scalar = serde_json::from_str(&js).unwrap();
        assert_eq!(back, x);
        let from_int: Scalar = serde_json::from_str("42").unwrap();
        assert_eq!(from_int, q("42"));
    }

    #[test]
    fn ext_rat_ordering_and_parse() {
        assert!(ExtRat::NegInf < ExtRat::from_int(-100));
        assert!(ExtRat::from_int(3) < ExtRat::PosInf);
        assert_eq!("inf".parse::<ExtRat>().unwrap(), ExtRat::PosInf);
        assert_eq!("-inf".parse::<ExtRat>().unwrap(), ExtRat::NegInf);
        assert_eq!("1/2".parse::<ExtRat>().unwrap(), ExtRat::from_ratio(1, 2));
    }

    fn random_scalar(rng: &mut impl Rng) -> Scalar {
        let num = rng.gen_range(-400i64..=400);
        let den = rng.gen_range(1i64..=400);
        Scalar::from_ratio(num, den).unwrap()
    }

    /// val(xy) = val(x) + val(y) and the ultrametric inequality, with the
    /// sharpened equality case when the two valuations differ.
    #[test]
    fn valuation_laws_bulk() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0xAD1C);
        for p in [2u64, 3, 5, 997] {
            let f = FieldSpec::new(p).unwrap();
            for _ in 0..2500 {
                let x = random_scalar(&mut rng);
                let y = random_scalar(&mut rng);
                let (vx, vy) = (f.val(&x), f.val(&y));
                assert_eq!(f.val(&(&x * &y)), vx + vy);
                let vsum = f.val(&(&x + &y));
                assert!(vsum >= vx.min(vy));
                if vx != vy {
                    assert_eq!(vsum, vx.min(vy));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn prop_mul_add_val(a in -1000i64..1000, b in 1i64..1000, c in -1000i64..1000, d in 1i64..1000) {
            let f = FieldSpec::new(3).unwrap();
            let x = Scalar::from_ratio(a, b).unwrap();
            let y = Scalar::from_ratio(c, d).unwrap();
            prop_assert_eq!(f.val(&(&x * &y)), f.val(&x) + f.val(&y));
            prop_assert!(f.val(&(&x + &y)) >= f.val(&x).min(f.val(&y)));
        }

        #[test]
        fn prop_scalar_string_round_trip(a in -10_000i64..10_000, b in 1i64..10_000) {
            let x = Scalar::from_ratio(a, b).unwrap();
            let s = x.to_string();
            prop_assert_eq!(s.parse::<Scalar>().unwrap(), x);
        }
    }
}
