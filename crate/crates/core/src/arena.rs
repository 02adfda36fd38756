//! Arena of generated functionals on `[1, S]`. Coordinates are integer
//! numerators over one common denominator; trees are stored as child ids and
//! materialized on demand with restrictions pushed to the leaves.

use std::collections::{HashMap, HashSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::families::{block_admissible, FamilyDescriptor};
use crate::mt_norm::ParamSchedule;
use crate::ratvec::{Interval, Rational, SparseVector};
use crate::tree::{TreeAnalysis, WeightTag};

pub type ItemId = u32;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Node {
    Leaf { positive: bool, index: u64 },
    Op { j: usize, children: Vec<ItemId> },
    Restrict { lo: u64, hi: u64, child: ItemId },
}

#[derive(Clone, Debug)]
pub struct Item {
    pub v: Box<[i64]>,
    pub weight: WeightTag,
    pub node: Node,
    pub lo: u64,
    pub hi: u64,
}

impl Item {
    pub fn weight_index(&self) -> Option<usize> {
        match self.weight {
            WeightTag::Weighted(j) => Some(j),
            WeightTag::Unweighted => None,
        }
    }

    pub fn support(&self) -> impl Iterator<Item = u64> + '_ {
        self.v.iter().enumerate().filter(|(_, a)| **a != 0).map(|(k, _)| k as u64 + 1)
    }

    pub fn odd_supported(&self) -> bool {
        self.support().all(|k| k % 2 == 1)
    }

    pub fn even_supported(&self) -> bool {
        self.support().all(|k| k % 2 == 0)
    }
}

#[derive(Clone, Debug)]
pub struct Arena {
    size: usize,
    denom: i64,
    items: Vec<Item>,
    index: HashMap<(Box<[i64]>, WeightTag), ItemId>,
}

/// `lcm(m_0..m_J)^depth`, the denominator that makes every coordinate of a
/// tree of that depth an integer.
pub fn common_denominator(sched: &ParamSchedule, max_index: usize, depth: usize) -> Result<i64> {
    let mut l: i64 = 1;
    for j in 0..=max_index.min(sched.max_index()) {
        let m = sched.m(j).to_i64().ok_or_else(|| Error::BudgetExceeded { reached: 0, limit: 0 })?;
        l = num_integer::lcm(l, m);
    }
    let mut d: i64 = 1;
    for _ in 0..depth {
        d = d.checked_mul(l).ok_or_else(|| {
            Error::TruncationTooTight(format!("denominator lcm^{depth} overflows 64 bits"))
        })?;
    }
    Ok(d)
}

impl Arena {
    pub fn new(size: u64, denom: i64) -> Arena {
        Arena { size: size as usize, denom, items: Vec::new(), index: HashMap::new() }
    }

    pub fn size(&self) -> u64 {
        self.size as u64
    }

    pub fn denom(&self) -> i64 {
        self.denom
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: ItemId) -> &Item {
        &self.items[id as usize]
    }

    pub fn find(&self, v: &[i64], w: WeightTag) -> Option<ItemId> {
        self.index.get(&(v.into(), w)).copied()
    }

    fn insert(&mut self, v: Box<[i64]>, weight: WeightTag, node: Node) -> Option<(ItemId, bool)> {
        let lo = v.iter().position(|a| *a != 0)? as u64 + 1;
        let hi = v.iter().rposition(|a| *a != 0).unwrap() as u64 + 1;
        if let Some(id) = self.index.get(&(v.clone(), weight)) {
            return Some((*id, false));
        }
        let id = self.items.len() as ItemId;
        self.index.insert((v.clone(), weight), id);
        self.items.push(Item { v, weight, node, lo, hi });
        Some((id, true))
    }

    pub fn leaf(&mut self, positive: bool, index: u64) -> (ItemId, bool) {
        let mut v = vec![0i64; self.size].into_boxed_slice();
        v[index as usize - 1] = if positive { self.denom } else { -self.denom };
        self.insert(v, WeightTag::Unweighted, Node::Leaf { positive, index }).unwrap()
    }

    /// `m_j⁻¹ Σ children`; the caller checks admissibility. `None` for zero.
    pub fn op(&mut self, j: usize, m: i64, children: &[ItemId]) -> Result<Option<(ItemId, bool)>> {
        let mut v = vec![0i64; self.size];
        for &c in children {
            for (a, b) in v.iter_mut().zip(self.items[c as usize].v.iter()) {
                *a += *b;
            }
        }
        for a in v.iter_mut() {
            if *a % m != 0 {
                return Err(Error::TruncationTooTight(format!(
                    "denominator {} too small for weight index {j}",
                    self.denom
                )));
            }
            *a /= m;
        }
        Ok(self.insert(v.into_boxed_slice(), WeightTag::Weighted(j), Node::Op { j, children: children.to_vec() }))
    }

    /// `E f` for `E = [lo, hi]`, keeping the weight.
    pub fn restrict(&mut self, id: ItemId, lo: u64, hi: u64) -> Option<(ItemId, bool)> {
        let it = &self.items[id as usize];
        let (base, lo, hi) = match it.node {
            Node::Restrict { lo: a, hi: b, child } => (child, lo.max(a), hi.min(b)),
            _ => (id, lo, hi),
        };
        let mut v = self.items[id as usize].v.clone();
        for (k, a) in v.iter_mut().enumerate() {
            let c = k as u64 + 1;
            if c < lo || c > hi {
                *a = 0;
            }
        }
        let w = self.items[id as usize].weight;
        if v == self.items[id as usize].v {
            return Some((id, false));
        }
        self.insert(v, w, Node::Restrict { lo, hi, child: base })
    }

    pub fn vector(&self, id: ItemId) -> SparseVector {
        self.to_sparse(&self.items[id as usize].v)
    }

    pub fn to_sparse(&self, v: &[i64]) -> SparseVector {
        let d = BigInt::from(self.denom);
        SparseVector::from_pairs(
            v.iter()
                .enumerate()
                .filter(|(_, a)| **a != 0)
                .map(|(k, a)| (k as u64 + 1, BigRational::new(BigInt::from(*a), d.clone()))),
        )
    }

    /// Numerators over the arena denominator, if `f` is representable here.
    pub fn to_dense(&self, f: &SparseVector) -> Option<Box<[i64]>> {
        let mut v = vec![0i64; self.size];
        for (k, a) in f.iter() {
            if k as usize > self.size {
                return None;
            }
            let s = a * BigRational::from_integer(BigInt::from(self.denom));
            if !s.is_integer() {
                return None;
            }
            v[k as usize - 1] = s.to_integer().to_i64()?;
        }
        Some(v.into_boxed_slice())
    }

    pub fn tree(&self, id: ItemId) -> TreeAnalysis {
        self.mat(id, 1, u64::MAX).unwrap_or_else(|| TreeAnalysis::weighted(0, vec![]))
    }

    /// Restrictions pass through even operations; an odd operation keeps its
    /// children intact and is wrapped in the restriction instead.
    fn mat(&self, id: ItemId, lo: u64, hi: u64) -> Option<TreeAnalysis> {
        let it = &self.items[id as usize];
        let lo = lo.max(it.lo);
        let hi = hi.min(it.hi);
        if lo > hi || !it.v[(lo - 1) as usize..hi as usize].iter().any(|a| *a != 0) {
            return None;
        }
        match &it.node {
            Node::Leaf { positive, index } => Some(TreeAnalysis::leaf(*positive, *index)),
            Node::Op { j, children } if j % 2 == 0 => {
                let kids: Vec<TreeAnalysis> = children.iter().filter_map(|c| self.mat(*c, lo, hi)).collect();
                Some(TreeAnalysis::weighted(*j, kids))
            }
            Node::Op { j, children } => {
                let kids: Vec<TreeAnalysis> =
                    children.iter().filter_map(|c| self.mat(*c, 1, u64::MAX)).collect();
                let t = TreeAnalysis::weighted(*j, kids);
                if lo == it.lo && hi == it.hi {
                    Some(t)
                } else {
                    Some(TreeAnalysis::restrict(Interval::new(lo, hi), t))
                }
            }
            Node::Restrict { lo: a, hi: b, child } => self.mat(*child, lo.max(*a), hi.min(*b)),
        }
    }

    /// `f(x)` with `x` given as integer numerators over `q`.
    pub fn dot(&self, id: ItemId, x: &[i64]) -> i128 {
        self.items[id as usize]
            .v
            .iter()
            .zip(x)
            .map(|(a, b)| *a as i128 * *b as i128)
            .sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ItemId> {
        0..self.items.len() as ItemId
    }
}

/// `x` as integer numerators over a common denominator `q`, on `[1, size]`.
pub fn scale_vector(x: &SparseVector, size: u64) -> Option<(Vec<i64>, BigInt)> {
    let mut q = BigInt::from(1);
    for (_, a) in x.iter() {
        q = num_integer::lcm(q, a.denom().clone());
    }
    let mut out = vec![0i64; size as usize];
    for (k, a) in x.iter() {
        if k > size {
            return None;
        }
        out[k as usize - 1] = (a * BigRational::from_integer(q.clone())).to_integer().to_i64()?;
    }
    Some((out, q))
}

/// Largest `|f(x)|` over the listed items.
pub fn sup_abs(arena: &Arena, ids: &[ItemId], x: &SparseVector) -> Option<(Rational, ItemId)> {
    let (xs, q) = scale_vector(x, arena.size())?;
    let mut best: Option<(i128, ItemId)> = None;
    for &id in ids {
        let v = arena.dot(id, &xs).abs();
        if best.map_or(true, |(b, _)| v > b) {
            best = Some((v, id));
        }
    }
    best.map(|(v, id)| (BigRational::new(BigInt::from(v), q * BigInt::from(arena.denom())), id))
}

/// Successive tuples of the given items (length 1..=max_len) whose supports
/// are admissible for `fam`. Items are grouped by minimum for the search.
pub fn admissible_tuples(
    arena: &Arena,
    pool: &[ItemId],
    fam: &FamilyDescriptor,
    max_len: usize,
    mut visit: impl FnMut(&[ItemId]) -> Result<()>,
) -> Result<()> {
    let size = arena.size() as usize;
    let mut by_lo: Vec<Vec<ItemId>> = vec![Vec::new(); size + 2];
    for &id in pool {
        by_lo[arena.get(id).lo as usize].push(id);
    }
    let mut chosen: Vec<ItemId> = Vec::new();
    let mut minima: Vec<u64> = Vec::new();
    fn rec(
        arena: &Arena,
        by_lo: &[Vec<ItemId>],
        fam: &FamilyDescriptor,
        max_len: usize,
        start: usize,
        chosen: &mut Vec<ItemId>,
        minima: &mut Vec<u64>,
        visit: &mut dyn FnMut(&[ItemId]) -> Result<()>,
    ) -> Result<()> {
        if chosen.len() == max_len {
            return Ok(());
        }
        for lo in start..by_lo.len() {
            for &id in &by_lo[lo] {
                minima.push(lo as u64);
                let ok = crate::families::minima_admissible(fam, minima);
                if ok {
                    chosen.push(id);
                    visit(chosen)?;
                    let next = arena.get(id).hi as usize + 1;
                    rec(arena, by_lo, fam, max_len, next, chosen, minima, visit)?;
                    chosen.pop();
                }
                minima.pop();
            }
        }
        Ok(())
    }
    rec(arena, &by_lo, fam, max_len, 1, &mut chosen, &mut minima, &mut visit)
}

/// Checks an explicit list of blocks against a family.
pub fn tuple_admissible(arena: &Arena, ids: &[ItemId], fam: &FamilyDescriptor) -> Result<bool> {
    let supports: Vec<Vec<u64>> = ids.iter().map(|&i| arena.get(i).support().collect()).collect();
    block_admissible(fam, &supports)
}

/// Vectors of a set of items, for membership by functional alone.
pub fn vector_set(arena: &Arena, ids: impl IntoIterator<Item = ItemId>) -> HashSet<Box<[i64]>> {
    ids.into_iter().map(|id| arena.get(id).v.clone()).collect()
}

pub fn is_zero_dense(v: &[i64]) -> bool {
    v.iter().all(|a| a.is_zero())
}

pub fn abs_max_entry(v: &[i64]) -> i64 {
    v.iter().map(|a| a.abs()).max().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mt_norm::{named_schedule, SetDescriptor};
    use crate::tree::realize_with;

    #[test]
    fn op_restrict_and_materialize() {
        let s = named_schedule("micro").unwrap();
        let d = common_denominator(&s, 2, 2).unwrap();
        let mut a = Arena::new(6, d);
        let (e1, _) = a.leaf(true, 1);
        let (e3, _) = a.leaf(false, 3);
        let (e5, _) = a.leaf(true, 5);
        let (f, fresh) = a.op(2, 4, &[e1, e3, e5]).unwrap().unwrap();
        assert!(fresh);
        let (g, _) = a.restrict(f, 2, 6).unwrap();
        assert_eq!(a.get(g).weight, WeightTag::Weighted(2));
        let t = a.tree(g);
        assert_eq!(t.to_string(), "(w 2 (- 3) (+ 5))");
        let v = realize_with(&t, &s, SetDescriptor::WmT).unwrap();
        assert_eq!(v, a.vector(g));
        assert_eq!(a.op(2, 4, &[e1, e3, e5]).unwrap().unwrap(), (f, false));
    }
}
