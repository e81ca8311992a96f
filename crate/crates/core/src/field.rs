//! Exact scalars: residues modulo a word-sized prime, or arbitrary-precision
//! rationals. Every coefficient in the crate flows through [`FieldSpec`].

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest admissible modulus bound (exclusive).
pub const MAX_MODULUS: u64 = 1 << 61;

/// The field an experiment runs over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldSpec {
    PrimeField { p: u64 },
    Rationals,
}

/// A field element. Residues are always canonical (`0 <= v < p`), rationals
/// are always reduced, so derived equality is field equality.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Scalar {
    Residue(u64),
    Rational(Box<BigRational>),
}

impl FieldSpec {
    /// `F_p` for a prime `p < 2^61`. Characteristic 2 is accepted here; the
    /// Hadamard constructions reject it separately.
    pub fn prime(p: u64) -> Result<Self> {
        if p >= MAX_MODULUS {
            return Err(Error::InvalidField(format!("modulus {p} is not below 2^61")));
        }
        if !is_prime(p) {
            return Err(Error::InvalidField(format!("modulus {p} is not prime")));
        }
        Ok(FieldSpec::PrimeField { p })
    }

    pub const fn rationals() -> Self {
        FieldSpec::Rationals
    }

    pub fn characteristic(&self) -> u64 {
        match *self {
            FieldSpec::PrimeField { p } => p,
            FieldSpec::Rationals => 0,
        }
    }

    pub fn is_char_two(&self) -> bool {
        self.characteristic() == 2
    }

    /// Fails with a diagnostic for characteristic 2, where `-1 == 1` and every
    /// Walsh-Hadamard matrix collapses to the all-ones matrix.
    pub fn require_odd_characteristic(&self) -> Result<()> {
        if self.is_char_two() {
            Err(Error::InvalidField(
                "characteristic 2 makes -1 = 1, so H_n degenerates to the rank-1 all-ones matrix".into(),
            ))
        } else {
            Ok(())
        }
    }

    /// Short label: `F3`, `F2305843009213693951`, `Q`.
    pub fn label(&self) -> String {
        match *self {
            FieldSpec::PrimeField { p } => format!("F{p}"),
            FieldSpec::Rationals => "Q".into(),
        }
    }

    pub fn zero(&self) -> Scalar {
        match self {
            FieldSpec::PrimeField { .. } => Scalar::Residue(0),
            FieldSpec::Rationals => Scalar::Rational(Box::new(BigRational::zero())),
        }
    }

    pub fn one(&self) -> Scalar {
        self.from_i64(1)
    }

    pub fn from_i64(&self, v: i64) -> Scalar {
        match *self {
            FieldSpec::PrimeField { p } => Scalar::Residue((v as i128).rem_euclid(p as i128) as u64),
            FieldSpec::Rationals => Scalar::Rational(Box::new(BigRational::from_integer(BigInt::from(v)))),
        }
    }

    pub fn from_bigint(&self, v: &BigInt) -> Scalar {
        match *self {
            FieldSpec::PrimeField { p } => {
                let r = v.mod_floor(&BigInt::from(p));
                Scalar::Residue(r.to_u64().expect("residue fits in u64"))
            }
            FieldSpec::Rationals => Scalar::Rational(Box::new(BigRational::from_integer(v.clone()))),
        }
    }

    /// Maps a rational into the field. Fails over `F_p` when `p` divides the
    /// denominator.
    pub fn from_rational(&self, v: &BigRational) -> Result<Scalar> {
        match *self {
            FieldSpec::PrimeField { p } => {
                let num = self.from_bigint(v.numer());
                let den = self.from_bigint(v.denom());
                let inv = self
                    .inv(&den)
                    .ok_or_else(|| Error::InvalidField(format!("denominator of {v} vanishes modulo {p}")))?;
                Ok(self.mul(&num, &inv))
            }
            FieldSpec::Rationals => Ok(Scalar::Rational(Box::new(v.clone()))),
        }
    }

    pub fn add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        match (self, a, b) {
            (FieldSpec::PrimeField { p }, Scalar::Residue(x), Scalar::Residue(y)) => {
                Scalar::Residue(add_mod(*x, *y, *p))
            }
            (FieldSpec::Rationals, Scalar::Rational(x), Scalar::Rational(y)) => {
                Scalar::Rational(Box::new(x.as_ref() + y.as_ref()))
            }
            _ => panic!("scalar {a} or {b} does not belong to {}", self.label()),
        }
    }

    pub fn sub(&self, a: &Scalar, b: &Scalar) -> Scalar {
        self.add(a, &self.neg(b))
    }

    pub fn neg(&self, a: &Scalar) -> Scalar {
        match (self, a) {
            (FieldSpec::PrimeField { p }, Scalar::Residue(x)) => Scalar::Residue(if *x == 0 { 0 } else { p - x }),
            (FieldSpec::Rationals, Scalar::Rational(x)) => Scalar::Rational(Box::new(-x.as_ref())),
            _ => panic!("scalar {a} does not belong to {}", self.label()),
        }
    }

    pub fn mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        match (self, a, b) {
            (FieldSpec::PrimeField { p }, Scalar::Residue(x), Scalar::Residue(y)) => {
                Scalar::Residue(mul_mod(*x, *y, *p))
            }
            (FieldSpec::Rationals, Scalar::Rational(x), Scalar::Rational(y)) => {
                Scalar::Rational(Box::new(x.as_ref() * y.as_ref()))
            }
            _ => panic!("scalar {a} or {b} does not belong to {}", self.label()),
        }
    }

    pub fn inv(&self, a: &Scalar) -> Option<Scalar> {
        if a.is_zero() {
            return None;
        }
        match (self, a) {
            (FieldSpec::PrimeField { p }, Scalar::Residue(x)) => Some(Scalar::Residue(pow_mod(*x, p - 2, *p))),
            (FieldSpec::Rationals, Scalar::Rational(x)) => Some(Scalar::Rational(Box::new(x.recip()))),
            _ => panic!("scalar {a} does not belong to {}", self.label()),
        }
    }

    /// `(-1)^e` in the field.
    pub fn sign_power(&self, e: u32) -> Scalar {
        if e.is_multiple_of(2) {
            self.one()
        } else {
            self.from_i64(-1)
        }
    }

    /// Whether `a` is an element of this field.
    pub fn contains(&self, a: &Scalar) -> bool {
        match (self, a) {
            (FieldSpec::PrimeField { p }, Scalar::Residue(x)) => x < p,
            (FieldSpec::Rationals, Scalar::Rational(_)) => true,
            _ => false,
        }
    }

    /// Parses a decimal residue, an integer, `num/den`, or a finite decimal
    /// such as `-0.25`, and maps it into the field.
    pub fn parse_scalar(&self, s: &str) -> Result<Scalar> {
        let q = parse_rational(s)?;
        self.from_rational(&q)
    }
}

impl Scalar {
    pub fn is_zero(&self) -> bool {
        match self {
            Scalar::Residue(x) => *x == 0,
            Scalar::Rational(x) => x.is_zero(),
        }
    }

    /// Residue value; panics on rationals.
    pub fn residue(&self) -> u64 {
        match self {
            Scalar::Residue(x) => *x,
            Scalar::Rational(x) => panic!("expected a residue, found rational {x}"),
        }
    }

    /// Rational value; panics on residues.
    pub fn rational(&self) -> &BigRational {
        match self {
            Scalar::Rational(x) => x,
            Scalar::Residue(x) => panic!("expected a rational, found residue {x}"),
        }
    }

    /// Sign of a rational scalar (-1, 0, 1). Residues have no order.
    pub fn signum(&self) -> Option<i8> {
        match self {
            Scalar::Rational(x) => Some(match x.numer().sign() {
                Sign::Minus => -1,
                Sign::NoSign => 0,
                Sign::Plus => 1,
            }),
            Scalar::Residue(_) => None,
        }
    }

    /// The value as an `i64` when it is an integer that fits (rationals), or
    /// the canonical residue (prime fields).
    pub fn to_i64(&self) -> Option<i64> {
        match self {
            Scalar::Residue(x) => i64::try_from(*x).ok(),
            Scalar::Rational(x) if x.is_integer() => x.numer().to_i64(),
            Scalar::Rational(_) => None,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Residue(x) => write!(f, "{x}"),
            Scalar::Rational(x) if x.is_integer() => write!(f, "{}", x.numer()),
            Scalar::Rational(x) => write!(f, "{}/{}", x.numer(), x.denom()),
        }
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Scalars deserialize from their string form. Residues and integral
/// rationals are indistinguishable in text, so the value is parsed as a
/// rational and callers re-home it with [`FieldSpec::from_rational`].
impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_rational(&s).map(|q| Scalar::Rational(Box::new(q))).map_err(serde::de::Error::custom)
    }
}

impl FromStr for FieldSpec {
    type Err = Error;

    /// `Q`, `QQ` or `rationals` for the rationals; `F<p>` or a bare prime for
    /// `F_p`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t {
            "Q" | "q" | "QQ" | "rationals" => return Ok(FieldSpec::Rationals),
            _ => {}
        }
        let digits = t.strip_prefix('F').or_else(|| t.strip_prefix('f')).unwrap_or(t);
        let p: u64 =
            digits.parse().map_err(|_| Error::Parse(format!("unrecognized field '{s}' (expected e.g. F3 or Q)")))?;
        FieldSpec::prime(p)
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Parses `a`, `a/b`, or a finite decimal `a.bcd` into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let t = s.trim();
    let bad = || Error::Parse(format!("'{s}' is not an exact rational"));
    if let Some((num, den)) = t.split_once('/') {
        let num: BigInt = num.trim().parse().map_err(|_| bad())?;
        let den: BigInt = den.trim().parse().map_err(|_| bad())?;
        if den.is_zero() {
            return Err(Error::Parse(format!("'{s}' has a zero denominator")));
        }
        return Ok(BigRational::new(num, den));
    }
    if let Some((int, frac)) = t.split_once('.') {
        let negative = int.starts_with('-');
        let int_part: BigInt = match int.trim_start_matches(['-', '+']) {
            "" => BigInt::zero(),
            digits => digits.parse().map_err(|_| bad())?,
        };
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let frac_part: BigInt = frac.parse().map_err(|_| bad())?;
        let mag = BigRational::new(int_part * &scale + frac_part, scale);
        return Ok(if negative { -mag } else { mag });
    }
    let v: BigInt = t.parse().map_err(|_| bad())?;
    Ok(BigRational::from_integer(v))
}

/// Smallest integer `>= q`.
pub fn ceil_rational(q: &BigRational) -> BigInt {
    q.ceil().to_integer()
}

/// Largest integer `<= q`.
pub fn floor_rational(q: &BigRational) -> BigInt {
    q.floor().to_integer()
}

/// Approximate value for reporting and statistical tolerances only.
pub fn rational_to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

pub fn is_positive(q: &BigRational) -> bool {
    q.is_positive()
}

pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rational_one() -> BigRational {
    BigRational::one()
}

/// Serde adapter writing a rational as its `num/den` string.
pub mod rational_str {
    use num_rational::BigRational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(q: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        if q.is_integer() {
            s.serialize_str(&q.numer().to_string())
        } else {
            s.serialize_str(&format!("{}/{}", q.numer(), q.denom()))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_rational(&s).map_err(serde::de::Error::custom)
    }
}

#[inline]
pub(crate) fn add_mod(a: u64, b: u64, p: u64) -> u64 {
    let s = a as u128 + b as u128;
    let p = p as u128;
    (if s >= p { s - p } else { s }) as u64
}

#[inline]
pub(crate) fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

pub(crate) fn pow_mod(mut base: u64, mut exp: u64, p: u64) -> u64 {
    let mut acc = 1 % p;
    base %= p;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, p);
        }
        base = mul_mod(base, base, p);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin; these bases are exact for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &b in &BASES {
        if n.is_multiple_of(b) {
            return n == b;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Precomputed reduction for a fixed modulus, used by the dense kernels.
/// Below 2^32 a Barrett step replaces the 128-bit division.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Modulus {
    p: u64,
    barrett: u64,
}

impl Modulus {
    pub(crate) fn new(p: u64) -> Self {
        Modulus { p, barrett: u64::MAX / p }
    }

    #[inline]
    pub(crate) fn p(&self) -> u64 {
        self.p
    }

    #[inline]
    pub(crate) fn small(&self) -> bool {
        self.p < (1 << 32)
    }

    /// Reduces any `x < 2^64` when the modulus is small.
    #[inline]
    pub(crate) fn reduce_u64(&self, x: u64) -> u64 {
        debug_assert!(self.small());
        let q = ((x as u128 * self.barrett as u128) >> 64) as u64;
        let mut r = x - q * self.p;
        while r >= self.p {
            r -= self.p;
        }
        r
    }

    #[inline]
    pub(crate) fn reduce_u128(&self, x: u128) -> u64 {
        if x < (1u128 << 64) && self.small() {
            self.reduce_u64(x as u64)
        } else {
            (x % self.p as u128) as u64
        }
    }

    #[inline]
    pub(crate) fn mul(&self, a: u64, b: u64) -> u64 {
        if self.small() {
            self.reduce_u64(a * b)
        } else {
            mul_mod(a, b, self.p)
        }
    }

    #[inline]
    pub(crate) fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + (self.p - b)
        }
    }

    pub(crate) fn inv(&self, a: u64) -> u64 {
        pow_mod(a, self.p - 2, self.p)
    }

    /// How many products of two residues fit in a `u128` accumulator.
    pub(crate) fn products_per_u128(&self) -> usize {
        let max_product = (self.p as u128 - 1) * (self.p as u128 - 1);
        if max_product == 0 {
            return usize::MAX;
        }
        (u128::MAX / max_product).min(usize::MAX as u128) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primality_matches_trial_division() {
        let trial = |n: u64| n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d));
        for n in 0..5000u64 {
            assert_eq!(is_prime(n), trial(n), "n = {n}");
        }
        assert!(is_prime((1 << 61) - 1));
        assert!(!is_prime((1 << 61) + 1));
    }

    #[test]
    fn prime_field_rejects_composites_and_large_moduli() {
        assert!(FieldSpec::prime(9).is_err());
        assert!(FieldSpec::prime(1 << 61).is_err());
        assert!(FieldSpec::prime((1 << 61) - 1).is_ok());
        assert!(FieldSpec::prime(2).is_ok());
        assert!(FieldSpec::prime(2).unwrap().require_odd_characteristic().is_err());
    }

    #[test]
    fn negative_integers_map_to_canonical_residues() {
        let f3 = FieldSpec::prime(3).unwrap();
        assert_eq!(f3.from_i64(-1), Scalar::Residue(2));
        assert_eq!(f3.from_i64(-3), Scalar::Residue(0));
        let big = FieldSpec::prime((1 << 61) - 1).unwrap();
        assert_eq!(big.from_i64(-1), Scalar::Residue((1 << 61) - 2));
    }

    #[test]
    fn field_labels_round_trip() {
        for s in ["F3", "F2305843009213693951", "Q"] {
            let f: FieldSpec = s.parse().unwrap();
            assert_eq!(f.label(), s);
        }
        assert!("F4".parse::<FieldSpec>().is_err());
        assert!("R".parse::<FieldSpec>().is_err());
    }

    #[test]
    fn decimal_and_fraction_parsing_is_exact() {
        assert_eq!(parse_rational("0.2").unwrap(), rational(1, 5));
        assert_eq!(parse_rational("-0.25").unwrap(), rational(-1, 4));
        assert_eq!(parse_rational("3/64").unwrap(), rational(3, 64));
        assert_eq!(parse_rational("7").unwrap(), rational(7, 1));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("0.").is_err());
        let f3 = FieldSpec::prime(3).unwrap();
        assert_eq!(f3.parse_scalar("1/2").unwrap(), Scalar::Residue(2));
        assert!(f3.parse_scalar("1/3").is_err());
    }

    #[test]
    fn barrett_reduction_agrees_with_division() {
        for p in [3u64, 5, 65_521, 4_294_967_291] {
            let m = Modulus::new(p);
            for x in [0u64, 1, p - 1, p, p + 1, u64::MAX, u64::MAX - 7, 1 << 40] {
                assert_eq!(m.reduce_u64(x), x % p, "p = {p}, x = {x}");
            }
            assert_eq!(m.mul(p - 1, p - 1), 1);
        }
    }

    #[test]
    fn inverses() {
        let f = FieldSpec::prime(101).unwrap();
        for v in 1..101 {
            let a = f.from_i64(v);
            assert_eq!(f.mul(&a, &f.inv(&a).unwrap()), f.one());
        }
        assert!(f.inv(&f.zero()).is_none());
        let q = FieldSpec::Rationals;
        let a = q.from_rational(&rational(-3, 7)).unwrap();
        assert_eq!(q.mul(&a, &q.inv(&a).unwrap()), q.one());
    }
}
