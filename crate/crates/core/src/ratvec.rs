//! Exact rational sparse vectors over the 1-based naturals.
//!
//! Vectors and functionals share [`SparseVector`]; which one a value plays is
//! decided by the caller.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::ParseError;

pub type Rational = BigRational;

/// Shorthand constructor, panics on a zero denominator.
pub fn rat(num: i64, den: i64) -> Rational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(v: i64) -> Rational {
    BigRational::from_integer(BigInt::from(v))
}

pub fn big(v: &BigInt) -> Rational {
    BigRational::from_integer(v.clone())
}

/// `num/den` form; integers still carry `/1`.
pub fn fmt_rat(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Decimal rendering for humans only, never compared.
pub fn fmt_decimal(r: &Rational, digits: usize) -> String {
    let neg = r.is_negative();
    let a = r.abs();
    let scale = BigInt::from(10u32).pow(digits as u32);
    let scaled = (a.numer() * &scale + a.denom() / 2u32) / a.denom();
    let ip = &scaled / &scale;
    let fp = &scaled % &scale;
    let mut s = format!("{}.{:0>width$}", ip, fp.to_string(), width = digits);
    if neg && !scaled.is_zero() {
        s.insert(0, '-');
    }
    s
}

/// `num/den (decimal)` as used in every report line.
pub fn fmt_report(r: &Rational) -> String {
    format!("{} ({})", fmt_rat(r), fmt_decimal(r, 6))
}

pub fn parse_rat(s: &str) -> Result<Rational, ParseError> {
    let bad = || ParseError::new(format!("bad rational `{s}`"));
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
    let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
    if d.is_zero() {
        return Err(bad());
    }
    Ok(BigRational::new(n, d))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Interval {
    Empty,
    Range { lo: u64, hi: u64 },
}

impl Interval {
    pub fn new(lo: u64, hi: u64) -> Interval {
        if lo <= hi {
            Interval::Range { lo, hi }
        } else {
            Interval::Empty
        }
    }

    pub fn contains(&self, k: u64) -> bool {
        match *self {
            Interval::Empty => false,
            Interval::Range { lo, hi } => lo <= k && k <= hi,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Interval::Empty)
    }

    pub fn bounds(&self) -> Option<(u64, u64)> {
        match *self {
            Interval::Empty => None,
            Interval::Range { lo, hi } => Some((lo, hi)),
        }
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        match (self.bounds(), other.bounds()) {
            (Some((a, b)), Some((c, d))) => Interval::new(a.max(c), b.min(d)),
            _ => Interval::Empty,
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Interval::Empty => write!(f, "[]"),
            Interval::Range { lo, hi } => write!(f, "[{lo},{hi}]"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParityMask {
    Even,
    Odd,
}

impl ParityMask {
    pub fn selects(&self, k: u64) -> bool {
        match self {
            ParityMask::Even => k % 2 == 0,
            ParityMask::Odd => k % 2 == 1,
        }
    }
}

/// Anything a vector can be restricted to.
pub trait Selector {
    fn selects(&self, k: u64) -> bool;
}

impl Selector for Interval {
    fn selects(&self, k: u64) -> bool {
        self.contains(k)
    }
}

impl Selector for ParityMask {
    fn selects(&self, k: u64) -> bool {
        ParityMask::selects(self, k)
    }
}

/// Finitely supported map from indices (starting at 1) to nonzero rationals.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SparseVector {
    entries: BTreeMap<u64, Rational>,
}

impl SparseVector {
    pub fn zero() -> SparseVector {
        SparseVector::default()
    }

    /// Basis vector (or functional) `e_k`.
    pub fn basis(k: u64) -> SparseVector {
        Self::from_pairs([(k, Rational::one())])
    }

    pub fn from_pairs<I: IntoIterator<Item = (u64, Rational)>>(pairs: I) -> SparseVector {
        let mut v = SparseVector::zero();
        for (k, a) in pairs {
            v.add_at(k, &a);
        }
        v
    }

    pub fn from_ints(pairs: &[(u64, i64)]) -> SparseVector {
        Self::from_pairs(pairs.iter().map(|&(k, a)| (k, int(a))))
    }

    /// Coefficient `c` on every index of `set`.
    pub fn constant_on<I: IntoIterator<Item = u64>>(set: I, c: &Rational) -> SparseVector {
        Self::from_pairs(set.into_iter().map(|k| (k, c.clone())))
    }

    pub fn get(&self, k: u64) -> Rational {
        self.entries.get(&k).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn set(&mut self, k: u64, a: Rational) {
        assert!(k >= 1, "indices start at 1");
        if a.is_zero() {
            self.entries.remove(&k);
        } else {
            self.entries.insert(k, a);
        }
    }

    pub fn add_at(&mut self, k: u64, a: &Rational) {
        let cur = self.get(k);
        self.set(k, cur + a);
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &Rational)> + '_ {
        self.entries.iter().map(|(k, a)| (*k, a))
    }

    pub fn support(&self) -> Vec<u64> {
        self.entries.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.is_zero()
    }

    pub fn min_supp(&self) -> Option<u64> {
        self.entries.keys().next().copied()
    }

    pub fn max_supp(&self) -> Option<u64> {
        self.entries.keys().next_back().copied()
    }

    /// Smallest interval containing the support.
    pub fn range(&self) -> Interval {
        match (self.min_supp(), self.max_supp()) {
            (Some(a), Some(b)) => Interval::new(a, b),
            _ => Interval::Empty,
        }
    }

    /// `self < other` in the block order: every index of self is below every
    /// index of other. Zero vectors are successive to anything.
    pub fn precedes(&self, other: &SparseVector) -> bool {
        match (self.max_supp(), other.min_supp()) {
            (Some(a), Some(b)) => a < b,
            _ => true,
        }
    }

    pub fn supported_in(&self, mask: ParityMask) -> bool {
        self.entries.keys().all(|&k| mask.selects(k))
    }

    pub fn restrict<S: Selector + ?Sized>(&self, sel: &S) -> SparseVector {
        SparseVector {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| sel.selects(**k))
                .map(|(k, a)| (*k, a.clone()))
                .collect(),
        }
    }

    pub fn restrict_interval(&self, e: Interval) -> SparseVector {
        self.restrict(&e)
    }

    pub fn restrict_parity(&self, p: ParityMask) -> SparseVector {
        self.restrict(&p)
    }

    /// `ĝ(2i) = g(i)`.
    pub fn hat(&self) -> SparseVector {
        SparseVector {
            entries: self.entries.iter().map(|(k, a)| (2 * k, a.clone())).collect(),
        }
    }

    /// Inverse of [`hat`](Self::hat) on the even coordinates; odd ones are dropped.
    pub fn unhat(&self) -> SparseVector {
        SparseVector {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| *k % 2 == 0)
                .map(|(k, a)| (k / 2, a.clone()))
                .collect(),
        }
    }

    pub fn scale(&self, c: &Rational) -> SparseVector {
        if c.is_zero() {
            return SparseVector::zero();
        }
        SparseVector {
            entries: self.entries.iter().map(|(k, a)| (*k, a * c)).collect(),
        }
    }

    pub fn neg(&self) -> SparseVector {
        self.scale(&-Rational::one())
    }

    pub fn add(&self, other: &SparseVector) -> SparseVector {
        let mut out = self.clone();
        for (k, a) in other.iter() {
            out.add_at(k, a);
        }
        out
    }

    pub fn sub(&self, other: &SparseVector) -> SparseVector {
        self.add(&other.neg())
    }

    pub fn sum<'a, I: IntoIterator<Item = &'a SparseVector>>(items: I) -> SparseVector {
        let mut out = SparseVector::zero();
        for v in items {
            for (k, a) in v.iter() {
                out.add_at(k, a);
            }
        }
        out
    }

    pub fn abs(&self) -> SparseVector {
        SparseVector {
            entries: self.entries.iter().map(|(k, a)| (*k, a.abs())).collect(),
        }
    }

    pub fn sup_norm(&self) -> Rational {
        self.entries
            .values()
            .map(|a| a.abs())
            .max()
            .unwrap_or_else(Rational::zero)
    }

    pub fn l1_norm(&self) -> Rational {
        self.entries.values().map(|a| a.abs()).sum()
    }

    /// Exact pairing `Σ f(k)·x(k)`.
    pub fn evaluate(&self, x: &SparseVector) -> Rational {
        let (small, large) = if self.len() <= x.len() { (self, x) } else { (x, self) };
        let mut acc = Rational::zero();
        for (k, a) in small.iter() {
            if let Some(b) = large.entries.get(&k) {
                acc += a * b;
            }
        }
        acc
    }

    /// Canonical one-line text form, `1:3/1 2:-1/1`; the zero vector is empty.
    pub fn canonical(&self) -> String {
        let parts: Vec<String> = self
            .entries
            .iter()
            .map(|(k, a)| format!("{}:{}", k, fmt_rat(a)))
            .collect();
        parts.join(" ")
    }

    /// Coordinates on `support` as a dense slice, shifted to start at 0.
    pub fn values_on(&self, support: &[u64]) -> Vec<Rational> {
        support.iter().map(|k| self.get(*k)).collect()
    }
}

impl fmt::Display for SparseVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

impl FromStr for SparseVector {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = SparseVector::zero();
        let mut last: Option<u64> = None;
        for tok in s.split_whitespace() {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| ParseError::new(format!("expected idx:num/den, got `{tok}`")))?;
            let k: u64 = idx
                .parse()
                .map_err(|_| ParseError::new(format!("bad index `{idx}`")))?;
            if k == 0 {
                return Err(ParseError::new("indices start at 1"));
            }
            if let Some(prev) = last {
                if k <= prev {
                    return Err(ParseError::new(format!(
                        "indices must be strictly increasing ({prev} then {k})"
                    )));
                }
            }
            last = Some(k);
            out.set(k, parse_rat(val)?);
        }
        Ok(out)
    }
}

pub fn evaluate(f: &SparseVector, x: &SparseVector) -> Rational {
    f.evaluate(x)
}

pub fn hat(g: &SparseVector) -> SparseVector {
    g.hat()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hat_examples() {
        let g = SparseVector::from_pairs([(1, int(1)), (3, rat(1, 2))]);
        let h = g.hat();
        assert_eq!(h, SparseVector::from_pairs([(2, int(1)), (6, rat(1, 2))]));
        assert!(SparseVector::zero().hat().is_zero());
        assert_eq!(h.unhat(), g);
    }

    #[test]
    fn restrict_examples() {
        let v = SparseVector::from_ints(&[(1, 1), (2, 2), (5, 1)]);
        assert_eq!(
            v.restrict_interval(Interval::new(2, 5)),
            SparseVector::from_ints(&[(2, 2), (5, 1)])
        );
        assert!(v.restrict_interval(Interval::Empty).is_zero());
        let f = SparseVector::from_ints(&[(2, 1), (3, 1)]);
        assert_eq!(f.restrict_parity(ParityMask::Even), SparseVector::basis(2));
    }

    #[test]
    fn evaluate_example() {
        let f = SparseVector::from_pairs([(1, rat(1, 2)), (2, rat(1, 2))]);
        let x = SparseVector::from_ints(&[(1, 3), (2, -1)]);
        assert_eq!(f.evaluate(&x), int(1));
        assert!(f.evaluate(&SparseVector::zero()).is_zero());
    }

    #[test]
    fn text_round_trip_and_rejects() {
        let v: SparseVector = "1:3/1 2:-1/1".parse().unwrap();
        assert_eq!(v.canonical(), "1:3/1 2:-1/1");
        assert!("2:1/1 1:1/1".parse::<SparseVector>().is_err());
        assert!("1:1/1 1:2/1".parse::<SparseVector>().is_err());
        assert!("0:1/1".parse::<SparseVector>().is_err());
        let z: SparseVector = "3:0/1".parse().unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(fmt_decimal(&rat(1, 3), 6), "0.333333");
        assert_eq!(fmt_decimal(&rat(-1, 8), 3), "-0.125");
        assert_eq!(fmt_report(&int(2)), "2/1 (2.000000)");
    }
}
