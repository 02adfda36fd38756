//! Admissibility families: `A_n`, the Schreier families `S_n`, the flattened
//! `S_n^f` and the product `S_n^f ⊙ A_2`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, ParseError, Result};
use crate::ratvec::Interval;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FamilyKind {
    AN,
    Schreier,
    SchreierFlat,
    FlatProductA2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FamilyDescriptor {
    pub kind: FamilyKind,
    pub order: usize,
}

impl FamilyDescriptor {
    pub fn new(kind: FamilyKind, order: usize) -> FamilyDescriptor {
        assert!(order >= 1, "family order must be at least 1");
        FamilyDescriptor { kind, order }
    }

    pub fn an(order: usize) -> FamilyDescriptor {
        Self::new(FamilyKind::AN, order)
    }

    pub fn schreier(order: usize) -> FamilyDescriptor {
        Self::new(FamilyKind::Schreier, order)
    }

    pub fn flat(order: usize) -> FamilyDescriptor {
        Self::new(FamilyKind::SchreierFlat, order)
    }

    pub fn flat_a2(order: usize) -> FamilyDescriptor {
        Self::new(FamilyKind::FlatProductA2, order)
    }

    /// Whether admissibility depends only on how many blocks there are.
    pub fn count_only(&self) -> bool {
        self.kind == FamilyKind::AN
    }
}

impl fmt::Display for FamilyDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.kind {
            FamilyKind::AN => "AN",
            FamilyKind::Schreier => "S",
            FamilyKind::SchreierFlat => "SF",
            FamilyKind::FlatProductA2 => "SFxA2",
        };
        write!(f, "{}:{}", tag, self.order)
    }
}

impl FromStr for FamilyDescriptor {
    type Err = ParseError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (tag, ord) = s
            .split_once(':')
            .ok_or_else(|| ParseError::new(format!("bad family `{s}`")))?;
        let order: usize = ord
            .parse()
            .map_err(|_| ParseError::new(format!("bad family order `{ord}`")))?;
        if order == 0 {
            return Err(ParseError::new("family order must be at least 1"));
        }
        let kind = match tag {
            "AN" => FamilyKind::AN,
            "S" => FamilyKind::Schreier,
            "SF" => FamilyKind::SchreierFlat,
            "SFxA2" => FamilyKind::FlatProductA2,
            _ => return Err(ParseError::new(format!("unknown family `{tag}`"))),
        };
        Ok(FamilyDescriptor { kind, order })
    }
}

/// `S_1`: `#F <= min F` (so `{1}` is in).
fn s1(set: &[u64]) -> bool {
    set.is_empty() || set.len() as u64 <= set[0]
}

/// `S_1^f`: `{1}` or `2#F <= min F`.
fn sf1(set: &[u64]) -> bool {
    set.is_empty() || set == [1] || 2 * set.len() as u64 <= set[0]
}

/// Fewest pieces into which `set` splits as successive members of `inner`.
/// Taking the longest admissible initial segment each time is optimal for any
/// hereditary inner family.
fn greedy_pieces(set: &[u64], inner: &dyn Fn(&[u64]) -> bool) -> usize {
    let mut pieces = 0;
    let mut start = 0;
    while start < set.len() {
        let mut end = start + 1;
        while end < set.len() && inner(&set[start..=end]) {
            end += 1;
        }
        pieces += 1;
        start = end;
    }
    pieces
}

fn schreier(order: usize, set: &[u64]) -> bool {
    if set.is_empty() {
        return true;
    }
    // membership is the same for every order >= #F
    let order = order.min(set.len());
    if order == 1 {
        return s1(set);
    }
    let k = greedy_pieces(set, &|s| schreier(order - 1, s));
    k as u64 <= set[0]
}

fn schreier_flat(order: usize, set: &[u64]) -> bool {
    if set.is_empty() {
        return true;
    }
    let order = order.min(set.len());
    if order == 1 {
        return sf1(set);
    }
    let k = greedy_pieces(set, &|s| schreier_flat(order - 1, s)) as u64;
    // The set of minima is in S_1^f: either the single minimum is 1, or 2k <= min.
    (k == 1 && set[0] == 1) || 2 * k <= set[0]
}

/// Maxima of the grouping that pairs elements from the left, `{x2,x4,...}`
/// plus the last element when the count is odd.
fn left_pair_maxima(set: &[u64]) -> Vec<u64> {
    set.chunks(2).map(|c| *c.last().unwrap()).collect()
}

fn flat_a2(order: usize, set: &[u64]) -> bool {
    schreier_flat(order, &left_pair_maxima(set))
}

/// Exhaustive search over groupings into successive blocks of size at most 2.
pub fn flat_a2_bruteforce(order: usize, set: &[u64]) -> bool {
    fn rec(order: usize, set: &[u64], i: usize, maxima: &mut Vec<u64>) -> bool {
        if i == set.len() {
            return schreier_flat(order, maxima);
        }
        // hereditary: a failing prefix of maxima can never recover
        if !schreier_flat(order, maxima) {
            return false;
        }
        for take in 1..=2 {
            if i + take <= set.len() {
                maxima.push(set[i + take - 1]);
                let ok = rec(order, set, i + take, maxima);
                maxima.pop();
                if ok {
                    return true;
                }
            }
        }
        false
    }
    rec(order, set, 0, &mut Vec::new())
}

/// Membership of a sorted, duplicate-free set.
pub fn member(d: &FamilyDescriptor, set: &[u64]) -> bool {
    debug_assert!(set.windows(2).all(|w| w[0] < w[1]));
    match d.kind {
        FamilyKind::AN => set.len() <= d.order,
        FamilyKind::Schreier => schreier(d.order, set),
        FamilyKind::SchreierFlat => schreier_flat(d.order, set),
        FamilyKind::FlatProductA2 => flat_a2(d.order, set),
    }
}

/// Admissibility of a list of supports. Empty supports are dropped first.
pub fn block_admissible(d: &FamilyDescriptor, supports: &[Vec<u64>]) -> Result<bool> {
    let nonempty: Vec<&Vec<u64>> = supports.iter().filter(|s| !s.is_empty()).collect();
    for w in nonempty.windows(2) {
        let a = *w[0].last().unwrap();
        let b = w[1][0];
        if a >= b {
            return Err(Error::NonSuccessive(format!(
                "block ending at {a} is followed by block starting at {b}"
            )));
        }
    }
    if d.count_only() {
        return Ok(nonempty.len() <= d.order);
    }
    let minima: Vec<u64> = nonempty.iter().map(|s| s[0]).collect();
    Ok(member(d, &minima))
}

/// Admissibility from the minima of already-successive blocks.
pub fn minima_admissible(d: &FamilyDescriptor, minima: &[u64]) -> bool {
    if d.count_only() {
        minima.len() <= d.order
    } else {
        member(d, minima)
    }
}

/// Interval partitions of the support range of `s`. Each piece starts at an
/// element of `s` and runs to just before the next piece, so partitions are
/// distinct exactly when they split `s` differently. Yielded in order of the
/// cut mask, coarsest first.
pub struct Partitions<'a> {
    d: FamilyDescriptor,
    s: &'a [u64],
    mask: u64,
    end: u64,
}

pub fn admissible_partitions<'a>(d: &FamilyDescriptor, s: &'a [u64]) -> Partitions<'a> {
    assert!(!s.is_empty(), "partitions of an empty set");
    assert!(s.len() <= 63, "partition enumeration limited to 63 points");
    Partitions {
        d: *d,
        s,
        mask: 0,
        end: 1u64 << (s.len() - 1),
    }
}

impl<'a> Iterator for Partitions<'a> {
    type Item = Vec<Interval>;

    fn next(&mut self) -> Option<Vec<Interval>> {
        while self.mask < self.end {
            let mask = self.mask;
            self.mask += 1;
            let mut starts = vec![0usize];
            for i in 1..self.s.len() {
                if mask & (1 << (i - 1)) != 0 {
                    starts.push(i);
                }
            }
            let minima: Vec<u64> = starts.iter().map(|&i| self.s[i]).collect();
            if !minima_admissible(&self.d, &minima) {
                continue;
            }
            let last = *self.s.last().unwrap();
            let parts = starts
                .iter()
                .enumerate()
                .map(|(t, &i)| {
                    let hi = if t + 1 < starts.len() { self.s[starts[t + 1]] - 1 } else { last };
                    Interval::new(self.s[i], hi)
                })
                .collect();
            return Some(parts);
        }
        None
    }
}

/// Greedy extension to the right: the least maximal `S_n` set with minimum `start`.
pub fn maximal_schreier_from(order: usize, start: u64) -> Vec<u64> {
    maximal_schreier_within(order, start, u64::MAX).expect("unbounded extension")
}

/// As [`maximal_schreier_from`], or `None` once the set would pass `bound`.
/// These sets grow very fast with the minimum, so callers scanning many
/// starts must bound them.
pub fn maximal_schreier_within(order: usize, start: u64, bound: u64) -> Option<Vec<u64>> {
    if start == 0 {
        return None;
    }
    let end = maximal_end(order, start, bound)?;
    Some((start..=end).collect())
}

/// Last element of the maximal `S_n` interval starting at `a`: `2a - 1` for
/// `n = 1`, otherwise `a` maximal `S_{n-1}` intervals laid end to end.
fn maximal_end(order: usize, a: u64, bound: u64) -> Option<u64> {
    if order == 1 {
        let e = a.checked_mul(2)? - 1;
        return (e <= bound).then_some(e);
    }
    let mut next = a;
    for _ in 0..a {
        next = maximal_end(order - 1, next, bound)? + 1;
    }
    Some(next - 1)
}

/// No single larger element can be appended.
pub fn is_maximal(d: &FamilyDescriptor, set: &[u64]) -> bool {
    if !member(d, set) {
        return false;
    }
    let next = set.last().map(|m| m + 1).unwrap_or(1);
    let mut ext = set.to_vec();
    ext.push(next);
    // for these families membership of F ∪ {k}, k > max F, does not depend on k
    !member(d, &ext)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn member_examples() {
        assert!(member(&FamilyDescriptor::an(3), &[1, 5, 9]));
        assert!(member(&FamilyDescriptor::flat(1), &[4, 5]));
        assert!(!member(&FamilyDescriptor::flat(1), &[2, 3]));
        assert!(member(&FamilyDescriptor::schreier(1), &[2, 3]));
        assert!(member(&FamilyDescriptor::schreier(1), &[1]));
        assert!(member(&FamilyDescriptor::flat(1), &[1]));
        for d in [
            FamilyDescriptor::an(1),
            FamilyDescriptor::schreier(2),
            FamilyDescriptor::flat(3),
            FamilyDescriptor::flat_a2(1),
        ] {
            assert!(member(&d, &[]));
        }
    }

    #[test]
    fn schreier_two() {
        let s2 = FamilyDescriptor::schreier(2);
        // {2,3} ∪ {4,5,6,7}: minima {2,4} ∈ S_1
        assert!(member(&s2, &[2, 3, 4, 5, 6, 7]));
        assert!(!member(&s2, &[2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12]));
        assert!(!member(&s2, &[1, 2]));
    }

    #[test]
    fn block_examples() {
        let singles: Vec<Vec<u64>> = (1..=4).map(|k| vec![k]).collect();
        assert!(block_admissible(&FamilyDescriptor::an(4), &singles).unwrap());
        let blocks = vec![vec![3], vec![4], vec![7], vec![8]];
        assert!(block_admissible(&FamilyDescriptor::flat_a2(1), &blocks).unwrap());
        let blocks = vec![vec![2], vec![5, 6], vec![9]];
        assert!(!block_admissible(&FamilyDescriptor::schreier(1), &blocks).unwrap());
        let bad = vec![vec![2, 5], vec![4]];
        assert!(matches!(
            block_admissible(&FamilyDescriptor::an(4), &bad),
            Err(Error::NonSuccessive(_))
        ));
        let with_empty = vec![vec![1], vec![], vec![2]];
        assert!(block_admissible(&FamilyDescriptor::an(2), &with_empty).unwrap());
    }

    #[test]
    fn partition_examples() {
        let p: Vec<_> = admissible_partitions(&FamilyDescriptor::an(2), &[1, 2]).collect();
        assert_eq!(
            p,
            vec![
                vec![Interval::new(1, 2)],
                vec![Interval::new(1, 1), Interval::new(2, 2)]
            ]
        );
        let p: Vec<_> = admissible_partitions(&FamilyDescriptor::an(1), &[1, 2, 3]).collect();
        assert_eq!(p, vec![vec![Interval::new(1, 3)]]);
        assert_eq!(admissible_partitions(&FamilyDescriptor::an(3), &[1, 2, 3]).count(), 4);
    }

    #[test]
    fn odd_count_pairs_on_the_left() {
        // {3},{4,5} gives maxima {3,5} which fails; {3,4},{5} gives {4,5}
        assert!(member(&FamilyDescriptor::flat_a2(1), &[3, 4, 5]));
        assert!(flat_a2_bruteforce(1, &[3, 4, 5]));
    }

    #[test]
    fn maximal_sets() {
        assert_eq!(maximal_schreier_from(1, 3), vec![3, 4, 5]);
        // the interval recursion agrees with growing the set one point at a time
        for order in 1..=3 {
            for a in 1..=6 {
                let Some(m) = maximal_schreier_within(order, a, 3000) else { continue };
                let d = FamilyDescriptor::schreier(order);
                assert!(is_maximal(&d, &m), "{order} {a}");
                assert!((1..m.len()).all(|l| member(&d, &m[..l])));
            }
        }
        assert!(is_maximal(&FamilyDescriptor::schreier(1), &[3, 4, 5]));
        assert!(!is_maximal(&FamilyDescriptor::schreier(1), &[3, 4]));
        let m2 = maximal_schreier_from(2, 2);
        assert!(is_maximal(&FamilyDescriptor::schreier(2), &m2));
    }
}
