//! Exact rational scalars.
//!
//! Coefficients of everything in sight live in `Z_(p)`, the integers
//! localized at `p`: fractions whose denominator is coprime to `p`.  The
//! rational stage of the formal group law computation temporarily leaves
//! `Z_(p)` (logarithm coefficients have denominators divisible by `p`), so
//! the scalar type itself is an arbitrary reduced fraction and `p`-locality
//! is a checked property, asserted at the module boundaries that require it.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

/// A reduced exact fraction.  Zero is `0/1`, denominators are positive.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Scalar(BigRational);

impl Scalar {
    pub fn zero() -> Self {
        Scalar(BigRational::zero())
    }

    pub fn one() -> Self {
        Scalar(BigRational::one())
    }

    pub fn from_int(n: i64) -> Self {
        Scalar(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn from_bigint(n: BigInt) -> Self {
        Scalar(BigRational::from_integer(n))
    }

    pub fn ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Scalar(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn new(num: BigInt, den: BigInt) -> Self {
        assert!(!den.is_zero(), "zero denominator");
        Scalar(BigRational::new(num, den))
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

    pub fn inv(&self) -> Option<Scalar> {
        if self.is_zero() {
            None
        } else {
            Some(Scalar(self.0.recip()))
        }
    }

    pub fn pow(&self, e: u32) -> Scalar {
        let mut acc = Scalar::one();
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }

    /// `p`-adic valuation; `None` for zero.
    pub fn p_valuation(&self, p: u32) -> Option<i64> {
        if self.is_zero() {
            return None;
        }
        let p = BigInt::from(p);
        let mut v: i64 = 0;
        let mut n = self.0.numer().abs();
        while (&n % &p).is_zero() {
            n /= &p;
            v += 1;
        }
        let mut d = self.0.denom().clone();
        while (&d % &p).is_zero() {
            d /= &p;
            v -= 1;
        }
        Some(v)
    }

    /// Membership in `Z_(p)`: denominator coprime to `p`.
    pub fn is_p_local(&self, p: u32) -> bool {
        !(self.0.denom() % BigInt::from(p)).is_zero()
    }

    /// Reduction mod `p` of a `p`-local scalar, as an integer in `0..p`.
    pub fn mod_p(&self, p: u32) -> u32 {
        assert!(self.is_p_local(p), "scalar not p-local");
        let pb = BigInt::from(p);
        let num = ((self.0.numer() % &pb) + &pb) % &pb;
        let den = ((self.0.denom() % &pb) + &pb) % &pb;
        // denominator is a unit mod p
        let d = u32::try_from(&den).unwrap();
        let n = u32::try_from(&num).unwrap();
        let mut dinv = 0;
        for k in 0..p {
            if (k * d) % p == 1 {
                dinv = k;
                break;
            }
        }
        (n * dinv) % p
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
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

impl std::str::FromStr for Scalar {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: BigInt = n.trim().parse().map_err(|e| format!("{e}"))?;
            let d: BigInt = d.trim().parse().map_err(|e| format!("{e}"))?;
            if d.is_zero() {
                return Err("zero denominator".into());
            }
            Ok(Scalar(BigRational::new(n, d)))
        } else {
            let n: BigInt = s.parse().map_err(|e| format!("{e}"))?;
            Ok(Scalar(BigRational::from_integer(n)))
        }
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident) => {
        impl $trait for &Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &Scalar) -> Scalar {
                Scalar((&self.0).$method(&rhs.0))
            }
        }
        impl $trait for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: Scalar) -> Scalar {
                Scalar(self.0.$method(rhs.0))
            }
        }
    };
}

binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-&self.0)
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduced_and_p_local() {
        let x = Scalar::ratio(6, 4);
        assert_eq!(x.to_string(), "3/2");
        assert!(!x.is_p_local(2));
        assert!(x.is_p_local(3));
        assert_eq!(x.p_valuation(2), Some(-1));
        assert_eq!(Scalar::from_int(12).p_valuation(2), Some(2));
        assert_eq!(Scalar::zero().p_valuation(2), None);
    }

    #[test]
    fn zero_is_canonical() {
        let z = &Scalar::ratio(3, 7) - &Scalar::ratio(3, 7);
        assert!(z.is_zero());
        assert_eq!(z.denom(), &BigInt::from(1));
    }

    #[test]
    fn mod_p_inverts_denominator() {
        // 1/3 mod 2 = 1, 1/3 mod 5 = 2 (3*2=6=1 mod 5)
        assert_eq!(Scalar::ratio(1, 3).mod_p(2), 1);
        assert_eq!(Scalar::ratio(1, 3).mod_p(5), 2);
        assert_eq!(Scalar::ratio(-1, 1).mod_p(3), 2);
    }

    #[test]
    fn parse_round_trip() {
        for s in ["0", "5", "-3", "7/3", "-11/4"] {
            let x: Scalar = s.parse().unwrap();
            assert_eq!(x.to_string(), s);
        }
    }
}
