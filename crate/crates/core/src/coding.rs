//! The coding functions: `sigma` chains the weights of special sequences,
//! `rho` pairs odd-supported functionals with full averages in the K-pools.
//!
//! Allocation log lines: `SIGMA|seq|index` and `RHO|k|i|f|image`, where a
//! sequence is its functionals in canonical form joined by `;`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::Path;

use num_bigint::BigInt;
use rand::Rng;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::families::maximal_schreier_within;
use crate::mt_norm::ParamSchedule;
use crate::ratvec::{big, fmt_rat, ParityMask, Rational, SparseVector};
use crate::tree::{ConstructionRecord, TreeAnalysis, WeightTag};

/// `Ω₁`: odd naturals.
pub fn in_omega1(j: usize) -> bool {
    j % 2 == 1
}

/// `Ω₂`: even naturals (zero excluded).
pub fn in_omega2(j: usize) -> bool {
    j >= 2 && j % 2 == 0
}

pub fn serialize_seq(seq: &[SparseVector]) -> String {
    seq.iter().map(|f| f.canonical()).collect::<Vec<_>>().join(";")
}

pub fn parse_seq(s: &str) -> Result<Vec<SparseVector>> {
    s.split(';').map(|p| p.parse::<SparseVector>().map_err(Error::from)).collect()
}

/// `max{1/|f_i(e_k)|} · maxsupp f_l`, the right side of the growth condition.
pub fn sigma_bound(seq: &[SparseVector]) -> Result<Rational> {
    check_qs(seq)?;
    let mut inv_max = Rational::zero();
    for f in seq {
        for (_, a) in f.iter() {
            let inv = a.abs().recip();
            if inv > inv_max {
                inv_max = inv;
            }
        }
    }
    let last = seq.last().unwrap().max_supp().unwrap();
    Ok(inv_max * big(&BigInt::from(last)))
}

fn check_qs(seq: &[SparseVector]) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::InvalidSequence("empty sequence".into()));
    }
    if seq.iter().any(|f| f.is_zero()) {
        return Err(Error::InvalidSequence("zero functional in sequence".into()));
    }
    for (i, w) in seq.windows(2).enumerate() {
        if !w[0].precedes(&w[1]) {
            return Err(Error::NonSuccessive(format!("elements {} and {}", i + 1, i + 2)));
        }
    }
    Ok(())
}

/// The explicit injection: each new sequence takes the least unused index
/// `2j`, `j ∈ Ω₂`, whose weight beats the growth bound.
#[derive(Clone, Debug, Default)]
pub struct SigmaFunction {
    codes: BTreeMap<String, usize>,
    taken: BTreeSet<usize>,
}

impl SigmaFunction {
    pub fn lookup(&self, seq: &[SparseVector]) -> Option<usize> {
        self.codes.get(&serialize_seq(seq)).copied()
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Least index that is admissible for `seq` without consuming anything.
    pub fn candidate(&self, seq: &[SparseVector], sched: &ParamSchedule) -> Result<usize> {
        if let Some(i) = self.lookup(seq) {
            return Ok(i);
        }
        let bound = sigma_bound(seq)?;
        let mut idx = 4;
        while idx <= sched.max_index() {
            if !self.taken.contains(&idx) && sched.m_rat(idx) > bound {
                return Ok(idx);
            }
            idx += 4;
        }
        Err(Error::ScheduleExhausted(format!(
            "sigma needs an unused even index with m > {} beyond {}",
            fmt_rat(&bound),
            sched.id()
        )))
    }

    fn record(&mut self, key: String, idx: usize) -> Result<()> {
        if self.codes.contains_key(&key) {
            return Err(Error::Io(format!("duplicate sigma entry for `{key}`")));
        }
        if !self.taken.insert(idx) {
            return Err(Error::Io(format!("sigma index {idx} allocated twice")));
        }
        self.codes.insert(key, idx);
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &usize)> {
        self.codes.iter()
    }
}

/// Shape of the K-sets: `#F = n_{2j}` or a maximal `S_{n_{2j}}` set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KShape {
    Count,
    MaximalSchreier,
}

/// Minima are grouped in blocks of four and the blocks follow the ruler
/// sequence: `1 + v₂(⌈min F / 4⌉)`. Every set starting in `[1, 4]` is in
/// pool 1.
pub fn pool_of(min: u64) -> usize {
    1 + min.div_ceil(POOL_BLOCK).trailing_zeros() as usize
}

pub const POOL_BLOCK: u64 = 4;

/// If `g` is `m_{2j}⁻¹ Σ_{i∈F} e*_i` for an admissible `F`, its pool and `F`.
pub fn k_membership(g: &SparseVector, j2: usize, sched: &ParamSchedule, shape: KShape) -> Option<(usize, Vec<u64>)> {
    if j2 % 2 != 0 || j2 > sched.max_index() || g.is_zero() {
        return None;
    }
    let c = sched.m_inv(j2);
    if g.iter().any(|(_, a)| *a != c) {
        return None;
    }
    let f = g.support();
    let ok = match shape {
        KShape::Count => f.len() == sched.n_count(j2),
        KShape::MaximalSchreier => {
            maximal_schreier_within(sched.n_count(j2), f[0], *f.last().unwrap()).is_some_and(|m| m == f)
        }
    };
    ok.then(|| (pool_of(f[0]), f))
}

/// All pool elements of weight `m_{2j}` inside `[1, bound]`.
pub fn k_elements(j2: usize, bound: u64, sched: &ParamSchedule, shape: KShape) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    match shape {
        KShape::Count => {
            let n = sched.n_count(j2);
            if n as u64 <= bound {
                let mut c: Vec<u64> = (1..=n as u64).collect();
                loop {
                    out.push(c.clone());
                    if !next_combination(&mut c, bound) {
                        break;
                    }
                }
            }
        }
        KShape::MaximalSchreier => {
            for a in 1..=bound {
                match maximal_schreier_within(sched.n_count(j2), a, bound) {
                    Some(f) => out.push(f),
                    None => break,
                }
            }
        }
    }
    out
}

/// Lexicographic successor among increasing tuples with entries `<= top`.
fn next_combination(c: &mut [u64], top: u64) -> bool {
    let n = c.len();
    for i in (0..n).rev() {
        let limit = top - (n - 1 - i) as u64;
        if c[i] < limit {
            c[i] += 1;
            for t in i + 1..n {
                c[t] = c[t - 1] + 1;
            }
            return true;
        }
    }
    false
}

pub fn k_functional(j2: usize, f: &[u64], sched: &ParamSchedule) -> SparseVector {
    SparseVector::constant_on(f.iter().copied(), &sched.m_inv(j2))
}

pub fn k_record(j2: usize, f: &[u64], sched: &ParamSchedule) -> ConstructionRecord {
    let tree = TreeAnalysis::weighted(j2, f.iter().map(|&t| TreeAnalysis::plus(t)).collect());
    ConstructionRecord {
        functional: k_functional(j2, f, sched),
        tree,
        weight: WeightTag::Weighted(j2),
    }
}

/// The injections `ϱ_k^{2i}` with their allocation record. Images are drawn
/// from `[1, pool_bound]`.
#[derive(Clone, Debug)]
pub struct RhoFamily {
    shape: KShape,
    pool_bound: u64,
    images: BTreeMap<(usize, usize, String), Vec<u64>>,
    used: BTreeSet<(usize, Vec<u64>)>,
}

impl RhoFamily {
    pub fn new(shape: KShape, pool_bound: u64) -> RhoFamily {
        RhoFamily { shape, pool_bound, images: BTreeMap::new(), used: BTreeSet::new() }
    }

    pub fn shape(&self) -> KShape {
        self.shape
    }

    pub fn pool_bound(&self) -> u64 {
        self.pool_bound
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image_of(&self, k: usize, i2: usize, f: &SparseVector) -> Option<&Vec<u64>> {
        self.images.get(&(k, i2, f.canonical()))
    }

    /// The preimage of a K-element, if it was allocated.
    pub fn preimage(&self, i2: usize, set: &[u64]) -> Option<(usize, SparseVector)> {
        // linear scan is fine at desk sizes
        self.images
            .iter()
            .find(|((_, i, _), v)| *i == i2 && v.as_slice() == set)
            .map(|((k, _, f), _)| (*k, f.parse().expect("canonical form parses")))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(usize, usize, String), &Vec<u64>)> {
        self.images.iter()
    }

    fn choose(&self, k: usize, i2: usize, maxsupp: u64, sched: &ParamSchedule) -> Result<Vec<u64>> {
        // property (p1): maxsupp f < 2 min F
        let first = maxsupp / 2 + 1;
        let n = sched.n_count(i2) as u64;
        for a in first..=self.pool_bound {
            if pool_of(a) != k {
                continue;
            }
            match self.shape {
                KShape::Count => {
                    if a + n - 1 > self.pool_bound {
                        break;
                    }
                    let mut c: Vec<u64> = (a..a + n).collect();
                    loop {
                        if c[0] != a {
                            break;
                        }
                        if !self.used.contains(&(i2, c.clone())) {
                            return Ok(c);
                        }
                        if !next_combination(&mut c, self.pool_bound) {
                            break;
                        }
                    }
                }
                KShape::MaximalSchreier => {
                    let Some(f) = maximal_schreier_within(sched.n_count(i2), a, self.pool_bound) else {
                        break;
                    };
                    if !self.used.contains(&(i2, f.clone())) {
                        return Ok(f);
                    }
                }
            }
        }
        Err(Error::PoolExhausted(format!(
            "no unused set in pool {k} for weight index {i2} with min > {} inside [1, {}]",
            maxsupp / 2,
            self.pool_bound
        )))
    }

    fn record(&mut self, k: usize, i2: usize, key: String, image: Vec<u64>) -> Result<()> {
        if self.images.contains_key(&(k, i2, key.clone())) {
            return Err(Error::Io(format!("duplicate rho entry for `{key}`")));
        }
        if !self.used.insert((i2, image.clone())) {
            return Err(Error::Io(format!("rho image {image:?} allocated twice")));
        }
        self.images.insert((k, i2, key), image);
        Ok(())
    }
}

/// Both coding functions plus the optional persisted log.
pub struct Coder {
    sched: ParamSchedule,
    pub sigma: SigmaFunction,
    pub rho: RhoFamily,
    log: Option<File>,
}

impl Coder {
    pub fn new(sched: &ParamSchedule, shape: KShape, pool_bound: u64) -> Coder {
        Coder {
            sched: sched.clone(),
            sigma: SigmaFunction::default(),
            rho: RhoFamily::new(shape, pool_bound),
            log: None,
        }
    }

    /// Replays an existing log and appends new allocations to it.
    pub fn with_log(sched: &ParamSchedule, shape: KShape, pool_bound: u64, path: &Path) -> Result<Coder> {
        let mut c = Coder::new(sched, shape, pool_bound);
        let mut text = String::new();
        if path.exists() {
            File::open(path)?.read_to_string(&mut text)?;
        }
        for (n, line) in text.lines().enumerate() {
            c.replay_line(line)
                .map_err(|e| Error::Io(format!("{}:{}: {e}", path.display(), n + 1)))?;
        }
        c.log = Some(OpenOptions::new().create(true).append(true).open(path)?);
        Ok(c)
    }

    fn replay_line(&mut self, line: &str) -> Result<()> {
        let parts: Vec<&str> = line.split('|').collect();
        match parts.as_slice() {
            ["SIGMA", seq, idx] => {
                let idx: usize = idx.parse().map_err(|_| Error::Io(format!("bad index `{idx}`")))?;
                let fs = parse_seq(seq)?;
                if !in_omega2(idx / 2) || idx % 2 != 0 || idx > self.sched.max_index() {
                    return Err(Error::Io(format!("sigma index {idx} not available")));
                }
                if self.sched.m_rat(idx) <= sigma_bound(&fs)? {
                    return Err(Error::Io(format!("sigma index {idx} violates the growth bound")));
                }
                self.sigma.record(serialize_seq(&fs), idx)
            }
            ["RHO", k, i, f, image] => {
                let k: usize = k.parse().map_err(|_| Error::Io(format!("bad pool `{k}`")))?;
                let i2: usize = i.parse().map_err(|_| Error::Io(format!("bad index `{i}`")))?;
                let f: SparseVector = f.parse()?;
                let g: SparseVector = image.parse()?;
                let (pool, set) = k_membership(&g, i2, &self.sched, self.rho.shape)
                    .ok_or_else(|| Error::Io(format!("`{image}` is not a K element")))?;
                if pool != k || f.max_supp().unwrap_or(0) >= 2 * set[0] {
                    return Err(Error::Io(format!("rho entry `{line}` breaks the pool rules")));
                }
                self.rho.record(k, i2, f.canonical(), set)
            }
            _ => Err(Error::Io(format!("unrecognised log line `{line}`"))),
        }
    }

    fn append(&mut self, line: String) -> Result<()> {
        if let Some(file) = self.log.as_mut() {
            file.write_all(line.as_bytes())?;
            file.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn schedule(&self) -> &ParamSchedule {
        &self.sched
    }

    pub fn sigma(&mut self, seq: &[SparseVector]) -> Result<usize> {
        if let Some(i) = self.sigma.lookup(seq) {
            return Ok(i);
        }
        let idx = self.sigma.candidate(seq, &self.sched)?;
        let key = serialize_seq(seq);
        self.sigma.record(key.clone(), idx)?;
        self.append(format!("SIGMA|{key}|{idx}"))?;
        Ok(idx)
    }

    /// `ϱ_k^{2i}(f)` for `f ∈ L_k^{2i}`; `i2` is the even weight index `2i`.
    pub fn rho(&mut self, k: usize, i2: usize, f: &ConstructionRecord) -> Result<ConstructionRecord> {
        if f.weight != WeightTag::Weighted(i2) || i2 % 2 != 0 {
            return Err(Error::PreconditionFailed(format!(
                "rho needs a functional of weight index {i2}, got {}",
                f.weight
            )));
        }
        if f.functional.is_zero() || !f.functional.supported_in(ParityMask::Odd) {
            return Err(Error::PreconditionFailed("rho needs a nonzero odd-supported functional".into()));
        }
        if k == 0 {
            return Err(Error::PreconditionFailed("pools are numbered from 1".into()));
        }
        let key = f.functional.canonical();
        if let Some(set) = self.rho.images.get(&(k, i2, key.clone())) {
            return Ok(k_record(i2, set, &self.sched));
        }
        let set = self.rho.choose(k, i2, f.functional.max_supp().unwrap(), &self.sched)?;
        self.rho.record(k, i2, key.clone(), set.clone())?;
        let image = k_record(i2, &set, &self.sched);
        self.append(format!("RHO|{k}|{i2}|{key}|{}", image.functional.canonical()))?;
        Ok(image)
    }
}

/// A member of a pair sequence: the couple `{f, g}` or the singleton `{g}`,
/// carrying the weight index of `g`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Couple {
    pub weight: usize,
    pub parts: Vec<SparseVector>,
}

impl Couple {
    pub fn single(weight: usize, g: SparseVector) -> Couple {
        Couple { weight, parts: vec![g] }
    }

    pub fn paired(weight: usize, f: SparseVector, g: SparseVector) -> Couple {
        Couple { weight, parts: vec![f, g] }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeViolation {
    pub a: usize,
    pub b: usize,
    pub pos_a: usize,
    pub pos_b: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct TreeReport {
    pub pairs_checked: usize,
    pub violations: Vec<TreeViolation>,
}

impl TreeReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn check_pair(a: &[Couple], b: &[Couple], ia: usize, ib: usize, out: &mut Vec<TreeViolation>) {
    let mut push = |pa: usize, pb: usize, reason: &str| {
        out.push(TreeViolation { a: ia, b: ib, pos_a: pa + 1, pos_b: pb + 1, reason: reason.into() })
    };
    for (p, ca) in a.iter().enumerate() {
        for (q, cb) in b.iter().enumerate() {
            if ca.weight != cb.weight {
                continue;
            }
            if p != q {
                push(p, q, "equal weights at different positions");
                continue;
            }
            if let Some(t) = (0..p).find(|&t| a[t] != b[t]) {
                push(t, t, "equal weights after differing couples");
                continue;
            }
            if ca != cb {
                let clash = a[p + 1..]
                    .iter()
                    .any(|x| b[p + 1..].iter().any(|y| x.weight == y.weight));
                if clash {
                    push(p, q, "shared weight after the first difference");
                }
            }
        }
    }
}

/// Checks the tree structure for every unordered pair of sequences.
pub fn verify_tree_property(seqs: &[Vec<Couple>]) -> TreeReport {
    let mut report = TreeReport::default();
    for i in 0..seqs.len() {
        for j in i..seqs.len() {
            check_pair(&seqs[i], &seqs[j], i, j, &mut report.violations);
            report.pairs_checked += 1;
        }
    }
    report
}

/// Checks the listed pairs only.
pub fn verify_tree_pairs(seqs: &[Vec<Couple>], pairs: &[(usize, usize)]) -> TreeReport {
    let mut report = TreeReport::default();
    for &(i, j) in pairs {
        check_pair(&seqs[i], &seqs[j], i, j, &mut report.violations);
        report.pairs_checked += 1;
    }
    report
}

/// One random couple of weight index `w` starting after `after`: a single
/// `m_w⁻¹ Σ ±e*_i`, or an odd-supported `f` paired with the hat of `ϱ₁(f)`.
fn random_couple<R: Rng>(coder: &mut Coder, rng: &mut R, w: usize, after: u64) -> Result<Couple> {
    let c = coder.sched.m_inv(w);
    if w % 2 == 0 && rng.gen_bool(0.5) {
        let start = after + 1 + (after % 2 == 1) as u64;
        let pts = (0..rng.gen_range(1..=2u64)).map(|t| start + 2 * t);
        let f = SparseVector::from_pairs(pts.map(|k| (k, if rng.gen_bool(0.7) { c.clone() } else { -c.clone() })));
        let rec = ConstructionRecord {
            tree: TreeAnalysis::weighted(
                w,
                f.iter().map(|(k, a)| TreeAnalysis::leaf(a.is_positive(), k)).collect(),
            ),
            functional: f.clone(),
            weight: WeightTag::Weighted(w),
        };
        let g = coder.rho(1, w, &rec)?.functional.hat();
        return Ok(Couple::paired(w, f, g));
    }
    let n = rng.gen_range(1..=3u64);
    let g = SparseVector::from_pairs((1..=n).map(|t| (after + t, if rng.gen_bool(0.7) { c.clone() } else { -c.clone() })));
    Ok(Couple::single(w, g))
}

/// Random sequences whose weights follow `σ` on the last parts of the
/// couples. New sequences mostly copy a prefix of an earlier one, so the
/// family is a forest with plenty of shared stems. Generation stops early
/// when the schedule runs out of codes.
pub fn random_couple_forest<R: Rng>(
    coder: &mut Coder,
    rng: &mut R,
    first_weights: &[usize],
    count: usize,
    max_len: usize,
) -> Result<Vec<Vec<Couple>>> {
    let mut seqs: Vec<Vec<Couple>> = Vec::new();
    'outer: while seqs.len() < count {
        let mut seq: Vec<Couple> = match seqs.len() {
            0 => Vec::new(),
            n if rng.gen_bool(0.8) => {
                let base = &seqs[rng.gen_range(0..n)];
                base[..rng.gen_range(0..=base.len())].to_vec()
            }
            _ => Vec::new(),
        };
        let target = rng.gen_range(1..=max_len).max(seq.len() + 1);
        while seq.len() < target {
            let w = if seq.is_empty() {
                first_weights[rng.gen_range(0..first_weights.len())]
            } else {
                let lasts: Vec<SparseVector> = seq.iter().map(|c| c.parts.last().unwrap().clone()).collect();
                match coder.sigma(&lasts) {
                    Ok(w) => w,
                    Err(Error::ScheduleExhausted(_)) => break 'outer,
                    Err(e) => return Err(e),
                }
            };
            let after = seq.last().map(|c| c.parts.last().unwrap().max_supp().unwrap()).unwrap_or(0);
            seq.push(random_couple(coder, rng, w, after)?);
        }
        seqs.push(seq);
    }
    Ok(seqs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mt_norm::{named_schedule, SetDescriptor};
    use crate::ratvec::rat;

    fn fuzz() -> ParamSchedule {
        named_schedule("fuzz").unwrap()
    }

    #[test]
    fn sigma_is_deterministic_and_respects_the_bound() {
        let s = fuzz();
        let mut c = Coder::new(&s, KShape::Count, 1000);
        let a = vec![SparseVector::basis(1)];
        let b = vec![SparseVector::constant_on([3], &rat(1, 2))];
        let ia = c.sigma(&a).unwrap();
        let ib = c.sigma(&b).unwrap();
        assert_eq!(c.sigma(&a).unwrap(), ia);
        assert_ne!(ia, ib);
        assert!(s.m_rat(ib) > rat(6, 1));
        assert!(in_omega2(ia / 2) && in_omega2(ib / 2));
    }

    #[test]
    fn sigma_rejects_non_successive() {
        let s = fuzz();
        let mut c = Coder::new(&s, KShape::Count, 1000);
        let seq = vec![SparseVector::basis(3), SparseVector::basis(2)];
        assert!(matches!(c.sigma(&seq), Err(Error::NonSuccessive(_))));
    }

    #[test]
    fn rho_property_p1_and_memo() {
        let s = named_schedule("micro").unwrap();
        let mut c = Coder::new(&s, KShape::Count, 40);
        let t = TreeAnalysis::weighted(2, vec![TreeAnalysis::plus(1), TreeAnalysis::plus(7)]);
        let f = ConstructionRecord::from_tree(t, &s, SetDescriptor::WmT).unwrap();
        let g = c.rho(1, 2, &f).unwrap();
        let min = g.functional.min_supp().unwrap();
        assert!(min >= 4 && pool_of(min) == 1);
        assert!(g.functional.hat().min_supp().unwrap() > 7);
        assert_eq!(c.rho(1, 2, &f).unwrap(), g);
        let t2 = TreeAnalysis::weighted(2, vec![TreeAnalysis::minus(1), TreeAnalysis::plus(7)]);
        let f2 = ConstructionRecord::from_tree(t2, &s, SetDescriptor::WmT).unwrap();
        assert_ne!(c.rho(1, 2, &f2).unwrap(), g);
    }

    #[test]
    fn rho_preconditions() {
        let s = named_schedule("micro").unwrap();
        let mut c = Coder::new(&s, KShape::Count, 40);
        let even = ConstructionRecord::from_tree(
            TreeAnalysis::weighted(2, vec![TreeAnalysis::plus(2)]),
            &s,
            SetDescriptor::WmT,
        )
        .unwrap();
        assert!(matches!(c.rho(1, 2, &even), Err(Error::PreconditionFailed(_))));
        let wrong = ConstructionRecord::from_tree(
            TreeAnalysis::weighted(0, vec![TreeAnalysis::plus(1)]),
            &s,
            SetDescriptor::WmT,
        )
        .unwrap();
        assert!(matches!(c.rho(1, 2, &wrong), Err(Error::PreconditionFailed(_))));
        let mut tight = Coder::new(&s, KShape::Count, 3);
        let far = ConstructionRecord::from_tree(
            TreeAnalysis::weighted(2, vec![TreeAnalysis::plus(9)]),
            &s,
            SetDescriptor::WmT,
        )
        .unwrap();
        assert!(matches!(tight.rho(1, 2, &far), Err(Error::PoolExhausted(_))));
    }

    #[test]
    fn pools_follow_the_blocked_ruler_sequence() {
        for a in 1..=4 {
            assert_eq!(pool_of(a), 1);
        }
        assert_eq!(pool_of(5), 2);
        assert_eq!(pool_of(8), 2);
        assert_eq!(pool_of(9), 1);
        assert_eq!(pool_of(13), 3);
        assert_eq!(pool_of(24), 2);
        // every pool keeps growing
        for k in 1..=4 {
            assert!((1..=400).filter(|&a| pool_of(a) == k).count() >= 400 >> (k + 1));
        }
    }

    #[test]
    fn log_replay_and_duplicates() {
        let s = fuzz();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("alloc.log");
        let (ia, ib);
        {
            let mut c = Coder::with_log(&s, KShape::Count, 1000, &p).unwrap();
            ia = c.sigma(&[SparseVector::basis(1)]).unwrap();
            ib = c.sigma(&[SparseVector::basis(1), SparseVector::basis(5)]).unwrap();
        }
        let mut c = Coder::with_log(&s, KShape::Count, 1000, &p).unwrap();
        assert_eq!(c.sigma.lookup(&[SparseVector::basis(1)]), Some(ia));
        let fresh = c.sigma(&[SparseVector::basis(2)]).unwrap();
        assert!(fresh != ia && fresh != ib);
        drop(c);
        let text = std::fs::read_to_string(&p).unwrap();
        let first = text.lines().next().unwrap().to_string();
        std::fs::write(&p, format!("{text}{first}\n")).unwrap();
        assert!(Coder::with_log(&s, KShape::Count, 1000, &p).is_err());
    }

    #[test]
    fn tree_property_on_diverging_sequences() {
        let c = |w: usize, k: u64| Couple::single(w, SparseVector::basis(k));
        let a = vec![c(2, 1), c(4, 2), c(8, 3)];
        let b = vec![c(2, 1), c(12, 5), c(16, 6)];
        assert!(verify_tree_property(&[a.clone(), b]).ok());
        let bad = vec![c(2, 1), c(12, 5), c(8, 6)];
        let r = verify_tree_property(&[a, bad]);
        assert!(!r.ok());
    }
}
