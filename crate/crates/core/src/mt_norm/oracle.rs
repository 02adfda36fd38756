//! Brute-force generation of the norming set, level by level.
//!
//! Weight indices with `m_j` above the support bound are left out: a child of
//! weight `m_j > S` is beaten on every vector supported in `[1, S]` by one of
//! its own leaves, so dropping them never changes a supremum.

use std::collections::HashSet;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::ToPrimitive;
use rayon::prelude::*;

use super::{ParamSchedule, SetDescriptor};
use crate::error::{Error, Result};
use crate::families::block_admissible;
use crate::ratvec::{Interval, Rational, SparseVector};
use crate::tree::{ConstructionRecord, TreeAnalysis, WeightTag};

fn allowed_weights(sched: &ParamSchedule, bound: u64) -> Vec<usize> {
    (0..=sched.max_index())
        .filter(|&j| sched.m(j) <= &num_bigint::BigUint::from(bound))
        .collect()
}

/// Every functional of tree depth at most `depth` supported in
/// `[1, support_bound]`, including single-child operations and interval
/// restrictions, deduplicated by realized vector and weight tag. The zero
/// functional is left out.
pub fn generate_set(
    depth: usize,
    support_bound: u64,
    sched: &ParamSchedule,
    d: SetDescriptor,
    budget: usize,
) -> Result<Vec<ConstructionRecord>> {
    let weights = allowed_weights(sched, support_bound);
    let mut out: Vec<ConstructionRecord> = Vec::new();
    let mut seen: HashSet<(SparseVector, WeightTag)> = HashSet::new();
    let push = |rec: ConstructionRecord, out: &mut Vec<ConstructionRecord>, seen: &mut HashSet<_>| -> Result<bool> {
        if rec.functional.is_zero() || !seen.insert((rec.functional.clone(), rec.weight)) {
            return Ok(false);
        }
        out.push(rec);
        if out.len() > budget {
            return Err(Error::BudgetExceeded { reached: out.len(), limit: budget });
        }
        Ok(true)
    };
    for k in 1..=support_bound {
        for positive in [true, false] {
            let tree = TreeAnalysis::leaf(positive, k);
            let rec = ConstructionRecord::from_tree(tree, sched, d)?;
            push(rec, &mut out, &mut seen)?;
        }
    }
    for _ in 0..depth {
        let prev = out.clone();
        // successive tuples, enumerated by increasing start
        let mut by_min: Vec<Vec<usize>> = vec![Vec::new(); support_bound as usize + 2];
        for (i, r) in prev.iter().enumerate() {
            by_min[r.functional.min_supp().unwrap() as usize].push(i);
        }
        for &j in &weights {
            let fam = d.family(j, sched);
            let cap = if fam.count_only() { fam.order } else { usize::MAX };
            let mut stack: Vec<usize> = Vec::new();
            #[allow(clippy::too_many_arguments)]
            fn rec(
                from: u64,
                bound: u64,
                cap: usize,
                j: usize,
                prev: &[ConstructionRecord],
                by_min: &[Vec<usize>],
                stack: &mut Vec<usize>,
                found: &mut Vec<TreeAnalysis>,
            ) {
                if stack.len() == cap {
                    return;
                }
                for start in from..=bound {
                    for &i in &by_min[start as usize] {
                        stack.push(i);
                        found.push(TreeAnalysis::weighted(j, stack.iter().map(|&c| prev[c].tree.clone()).collect()));
                        let next = prev[i].functional.max_supp().unwrap() + 1;
                        rec(next, bound, cap, j, prev, by_min, stack, found);
                        stack.pop();
                    }
                }
            }
            let mut found = Vec::new();
            rec(1, support_bound, cap, j, &prev, &by_min, &mut stack, &mut found);
            for t in found {
                if let TreeAnalysis::Weighted { children, .. } = &t {
                    let supports: Vec<Vec<u64>> = children
                        .iter()
                        .map(|c| crate::tree::realize_with(c, sched, d).map(|v| v.support()))
                        .collect::<Result<_>>()?;
                    if !block_admissible(&fam, &supports)? {
                        continue;
                    }
                }
                let rec = ConstructionRecord::from_tree(t, sched, d)?;
                push(rec, &mut out, &mut seen)?;
            }
        }
        for r in &prev {
            let (lo, hi) = r.functional.range().bounds().unwrap();
            for a in lo..=hi {
                for b in a..=hi {
                    if a == lo && b == hi {
                        continue;
                    }
                    let t = TreeAnalysis::restrict(Interval::new(a, b), r.tree.clone());
                    let rec = ConstructionRecord::from_tree(t, sched, d)?;
                    push(rec, &mut out, &mut seen)?;
                }
            }
        }
    }
    Ok(out)
}

/// `sup f(x)` over generated records.
pub fn oracle_sup(set: &[ConstructionRecord], x: &SparseVector) -> Rational {
    set.iter()
        .map(|r| r.functional.evaluate(x))
        .max()
        .unwrap_or_default()
}

const MAXS: usize = 8;

/// Functionals on `[1, S]` as integer numerators over one common
/// denominator. Only operations with at least two children are formed: a
/// single-child operation `m^{-1} f` is dominated by `f` or `-f`, and
/// restrictions of such trees are again such trees over restricted children.
pub struct DenseSet {
    pub support_bound: usize,
    pub denom: i64,
    pub items: Vec<[i64; MAXS]>,
}

impl DenseSet {
    pub fn generate(
        depth: usize,
        support_bound: usize,
        sched: &ParamSchedule,
        d: SetDescriptor,
        budget: usize,
    ) -> Result<DenseSet> {
        assert!(support_bound <= MAXS, "dense oracle limited to {MAXS} coordinates");
        assert!(d.count_only(), "dense oracle handles count-only families");
        let weights = allowed_weights(sched, support_bound as u64);
        let ms: Vec<i64> = weights.iter().map(|&j| sched.m(j).to_i64().unwrap()).collect();
        let l = ms.iter().fold(1i64, |a, &m| a.lcm(&m));
        let denom = (l as i128)
            .checked_pow(depth as u32)
            .filter(|v| *v < (1i128 << 56))
            .ok_or(Error::BudgetExceeded { reached: depth, limit: 0 })? as i64;
        let caps: Vec<usize> = weights.iter().map(|&j| d.family(j, sched).order.min(support_bound)).collect();

        let span = |v: &[i64; MAXS]| -> (usize, usize) {
            let lo = v.iter().position(|&a| a != 0).unwrap();
            let hi = MAXS - 1 - v.iter().rev().position(|&a| a != 0).unwrap();
            (lo, hi)
        };
        let mut items: Vec<[i64; MAXS]> = Vec::new();
        let mut seen: HashSet<[i64; MAXS]> = HashSet::new();
        for k in 0..support_bound {
            for s in [1, -1] {
                let mut v = [0i64; MAXS];
                v[k] = s * denom;
                seen.insert(v);
                items.push(v);
            }
        }
        let mut fresh_from = 0usize;
        for _ in 0..depth {
            let n_old = items.len();
            let mut by_min: Vec<Vec<usize>> = vec![Vec::new(); support_bound + 1];
            let mut his = Vec::with_capacity(n_old);
            for (i, v) in items.iter().enumerate() {
                let (lo, hi) = span(v);
                by_min[lo].push(i);
                his.push(hi);
            }
            let mut added: Vec<[i64; MAXS]> = Vec::new();
            for (w, &m) in ms.iter().enumerate() {
                let cap = caps[w];
                let ctx = TupleCtx { items: &items, by_min: &by_min, his: &his, fresh_from, cap, m, bound: support_bound };
                let mut acc = [0i64; MAXS];
                ctx.walk(0, 0, false, &mut acc, &mut |v| {
                    if seen.insert(v) {
                        added.push(v);
                    }
                });
                if items.len() + added.len() > budget {
                    return Err(Error::BudgetExceeded { reached: items.len() + added.len(), limit: budget });
                }
            }
            if added.is_empty() {
                break;
            }
            fresh_from = n_old;
            items.extend(added);
        }
        Ok(DenseSet { support_bound, denom, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Exact supremum over the set for an integer vector.
    pub fn sup_int(&self, x: &[i64]) -> Rational {
        let best = self
            .items
            .par_iter()
            .map(|v| v.iter().zip(x).map(|(a, b)| *a as i128 * *b as i128).sum::<i128>())
            .max()
            .unwrap_or(0);
        Rational::new(BigInt::from(best), BigInt::from(self.denom))
    }

    /// The records as sparse functionals, for spot checks.
    pub fn functionals(&self) -> Vec<SparseVector> {
        self.items
            .iter()
            .map(|v| {
                SparseVector::from_pairs(v.iter().enumerate().filter(|(_, a)| **a != 0).map(|(k, a)| {
                    (k as u64 + 1, Rational::new(BigInt::from(*a), BigInt::from(self.denom)))
                }))
            })
            .collect()
    }
}

struct TupleCtx<'a> {
    items: &'a [[i64; MAXS]],
    by_min: &'a [Vec<usize>],
    his: &'a [usize],
    fresh_from: usize,
    cap: usize,
    m: i64,
    bound: usize,
}

impl TupleCtx<'_> {
    /// Extends a successive tuple of `count` children; emits tuples of at
    /// least two children with at least one child from the newest level.
    fn walk(&self, from: usize, count: usize, has_fresh: bool, acc: &mut [i64; MAXS], emit: &mut dyn FnMut([i64; MAXS])) {
        if count == self.cap {
            return;
        }
        for start in from..self.bound {
            for &i in &self.by_min[start] {
                let v = &self.items[i];
                for k in 0..MAXS {
                    acc[k] += v[k];
                }
                let fresh = has_fresh || i >= self.fresh_from;
                if count + 1 >= 2 && fresh {
                    let mut out = [0i64; MAXS];
                    for k in 0..MAXS {
                        debug_assert_eq!(acc[k] % self.m, 0);
                        out[k] = acc[k] / self.m;
                    }
                    emit(out);
                }
                self.walk(self.his[i] + 1, count + 1, fresh, acc, emit);
                for k in 0..MAXS {
                    acc[k] -= v[k];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mt_norm::{named_schedule, NormEngine};
    use crate::ratvec::{int, rat};

    #[test]
    fn depth_zero_and_one() {
        let s = named_schedule("tiny").unwrap();
        let g0 = generate_set(0, 2, &s, SetDescriptor::WmT, 1000).unwrap();
        let v0: HashSet<String> = g0.iter().map(|r| r.functional.canonical()).collect();
        let want: HashSet<String> = ["1:1/1", "1:-1/1", "2:1/1", "2:-1/1"].iter().map(|s| s.to_string()).collect();
        assert_eq!(v0, want);
        let g1 = generate_set(1, 2, &s, SetDescriptor::WmT, 1000).unwrap();
        assert_eq!(g1.len(), 12);
        let v1: HashSet<String> = g1.iter().map(|r| r.functional.canonical()).collect();
        for extra in ["1:1/2", "2:-1/2", "1:1/2 2:-1/2", "1:-1/2 2:-1/2"] {
            assert!(v1.contains(extra), "missing {extra}");
        }
    }

    #[test]
    fn budget() {
        let s = named_schedule("tiny").unwrap();
        let e = generate_set(3, 3, &s, SetDescriptor::WmT, 20).unwrap_err();
        assert!(matches!(e, Error::BudgetExceeded { limit: 20, .. }));
    }

    #[test]
    fn literal_and_dense_agree_with_dp() {
        let s = named_schedule("oracle2").unwrap();
        let lit = generate_set(3, 3, &s, SetDescriptor::WmT, 1_000_000).unwrap();
        let dense = DenseSet::generate(3, 3, &s, SetDescriptor::WmT, 1_000_000).unwrap();
        let e = NormEngine::new(s, SetDescriptor::WmT);
        for a in -2..=2i64 {
            for b in -2..=2i64 {
                for c in -2..=2i64 {
                    let x = SparseVector::from_ints(&[(1, a), (2, b), (3, c)]);
                    let v = e.norm(&x).unwrap().value;
                    assert_eq!(oracle_sup(&lit, &x).max(int(0)), v, "literal at {x}");
                    assert_eq!(dense.sup_int(&[a, b, c]), v, "dense at {x}");
                }
            }
        }
        assert_eq!(dense.sup_int(&[1, 1, 1]), rat(1, 1));
    }
}
