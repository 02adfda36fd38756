//! The staged norming set `W_ex` of the HI extension and its non-convex
//! variant, special sequences of the three kinds, the even-restriction and
//! lift witnesses, dependent paired sequences and their estimates.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use num_traits::{Signed, Zero};

use crate::arena::{admissible_tuples, common_denominator, sup_abs, Arena, ItemId};
use crate::coding::{k_elements, k_functional, k_membership, Coder, KShape};
use crate::error::{Error, Result};
use crate::families::{minima_admissible, FamilyDescriptor};
use crate::hi_core::{
    build_sep, check_budget, effective_weight, first_weight, first_weight_ok, m_i64, validate_whi, BasisSource,
    EstimateCheck, EstimateReport, Truncation, Variant, WhiSet,
};
use crate::mt_norm::{ParamSchedule, SetDescriptor};
use crate::ratvec::{fmt_rat, int, Interval, ParityMask, Rational, SparseVector};
use crate::tree::{ConstructionRecord, TreeAnalysis, WeightTag};

/// Which families and K-shapes the two sides use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExtConfig {
    pub trunc: Truncation,
    pub hi_desc: SetDescriptor,
    pub ext_desc: SetDescriptor,
    pub shape: KShape,
    pub variant: Variant,
    /// deepest stage the arena denominator allows
    pub max_stage: usize,
}

impl ExtConfig {
    pub fn standard(trunc: Truncation, max_stage: usize) -> ExtConfig {
        ExtConfig {
            trunc,
            hi_desc: SetDescriptor::WmT,
            ext_desc: SetDescriptor::ExtMT,
            shape: KShape::Count,
            variant: Variant::Convex,
            max_stage,
        }
    }

    pub fn schreier(trunc: Truncation, max_stage: usize) -> ExtConfig {
        ExtConfig {
            trunc,
            hi_desc: SetDescriptor::Schreier,
            ext_desc: SetDescriptor::WmTSchreier,
            shape: KShape::MaximalSchreier,
            variant: Variant::Convex,
            max_stage,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SeqKind {
    Paired,
    SemiPaired,
    Special,
}

impl fmt::Display for SeqKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SeqKind::Paired => "paired",
            SeqKind::SemiPaired => "semiPaired",
            SeqKind::Special => "special",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Classification {
    Kind(SeqKind),
    Invalid(String),
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Classification::Kind(k) => write!(f, "{k}"),
            Classification::Invalid(r) => write!(f, "invalid({r})"),
        }
    }
}

/// What happened at one stage.
#[derive(Clone, Debug, Default)]
pub struct Layer {
    pub u: Vec<ItemId>,
    pub excluded: Vec<ItemId>,
    pub d: Vec<ItemId>,
    pub l: BTreeMap<usize, Vec<ItemId>>,
    pub odd: Vec<(ItemId, SeqKind)>,
    pub w_new: Vec<ItemId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Paired,
    Semi,
    Tail,
}

pub struct StageState {
    pub n: usize,
    pub config: ExtConfig,
    pub arena: Arena,
    /// stage at which an item entered `W`
    pub in_w: Vec<Option<usize>>,
    /// stage at which an item entered `D`
    pub in_d: Vec<Option<usize>>,
    pub layers: Vec<Layer>,
    pub coder: Coder,
    sched: ParamSchedule,
    w_vecs: HashMap<Box<[i64]>, usize>,
    v_vecs: HashSet<Box<[i64]>>,
    v_items: Vec<ItemId>,
    kind_of: HashMap<ItemId, SeqKind>,
}

impl StageState {
    /// Stage 0: `W₀ = {±e*_k}`.
    pub fn new(config: ExtConfig, sched: &ParamSchedule, coder: Coder) -> Result<StageState> {
        let t = config.trunc;
        let max_index = t.max_index.min(sched.max_index());
        let denom = common_denominator(sched, max_index, 2 * config.max_stage.max(1))?;
        let mut arena = Arena::new(t.support_bound, denom);
        let mut layer = Layer::default();
        for k in 1..=t.support_bound {
            for pos in [true, false] {
                layer.w_new.push(arena.leaf(pos, k).0);
            }
        }
        let mut s = StageState {
            n: 0,
            config,
            in_w: vec![Some(0); arena.len()],
            in_d: vec![None; arena.len()],
            w_vecs: HashMap::new(),
            v_vecs: HashSet::new(),
            v_items: Vec::new(),
            arena,
            layers: vec![layer],
            coder,
            sched: sched.clone(),
            kind_of: HashMap::new(),
        };
        s.w_vecs = s.arena.ids().map(|i| (s.arena.get(i).v.clone(), 0)).collect();
        s.v_items = s.arena.ids().collect();
        s.v_vecs = s.w_vecs.keys().cloned().collect();
        Ok(s)
    }

    pub fn schedule(&self) -> &ParamSchedule {
        &self.sched
    }

    fn max_index(&self) -> usize {
        self.config.trunc.max_index.min(self.sched.max_index())
    }

    fn sync(&mut self) {
        self.in_w.resize(self.arena.len(), None);
        self.in_d.resize(self.arena.len(), None);
    }

    pub fn w_ids(&self) -> Vec<ItemId> {
        self.arena.ids().filter(|&i| self.in_w[i as usize].is_some()).collect()
    }

    pub fn w_ids_up_to(&self, n: usize) -> Vec<ItemId> {
        self.arena.ids().filter(|&i| self.in_w[i as usize].is_some_and(|k| k <= n)).collect()
    }

    /// Items of the current `V_n`.
    pub fn v_ids(&self) -> &[ItemId] {
        &self.v_items
    }

    pub fn in_v(&self, f: &SparseVector) -> bool {
        self.arena.to_dense(f).is_some_and(|v| self.v_vecs.contains(&v))
    }

    pub fn in_w(&self, f: &SparseVector) -> bool {
        self.arena.to_dense(f).is_some_and(|v| self.w_vecs.contains_key(&v))
    }

    /// First stage whose `W` contains `f`.
    pub fn w_stage(&self, f: &SparseVector) -> Option<usize> {
        self.w_vecs.get(&self.arena.to_dense(f)?).copied()
    }

    /// First stage at which `f` is in `W` with a tree of weight `w`.
    pub fn w_stage_weighted(&self, f: &SparseVector, w: WeightTag) -> Option<usize> {
        let v = self.arena.to_dense(f)?;
        self.arena.find(&v, w).and_then(|i| self.in_w[i as usize])
    }

    /// Stage at which `f` joined `D`, i.e. the `k` with `f ∈ L_k` when it is
    /// odd-supported.
    pub fn d_stage(&self, f: &SparseVector, w: WeightTag) -> Option<usize> {
        let v = self.arena.to_dense(f)?;
        self.arena.find(&v, w).and_then(|i| self.in_d[i as usize])
    }

    pub fn record(&self, id: ItemId) -> ConstructionRecord {
        ConstructionRecord {
            functional: self.arena.vector(id),
            tree: self.arena.tree(id),
            weight: self.arena.get(id).weight,
        }
    }

    pub fn odd_ids(&self) -> Vec<ItemId> {
        self.layers.iter().flat_map(|l| l.odd.iter().map(|(i, _)| *i)).collect()
    }

    pub fn kind(&self, id: ItemId) -> Option<SeqKind> {
        self.kind_of.get(&id).copied()
    }

    /// If `f` equals `K̂_i^{2j}`-element for some even index, that index and
    /// the pool level `i`.
    pub fn khat_level(&self, f: &SparseVector) -> Option<(usize, usize)> {
        if f.is_zero() || !f.supported_in(ParityMask::Even) {
            return None;
        }
        let g = f.unhat();
        (0..=self.max_index())
            .step_by(2)
            .find_map(|j2| k_membership(&g, j2, &self.sched, self.config.shape).map(|(lvl, _)| (j2, lvl)))
    }

    fn hat_item(&mut self, j2: usize, set: &[u64]) -> Result<Option<ItemId>> {
        if set.last().is_some_and(|&k| 2 * k > self.arena.size()) {
            return Ok(None);
        }
        let leaves: Vec<ItemId> = set.iter().map(|&k| self.arena.leaf(true, 2 * k).0).collect();
        let m = m_i64(&self.sched, j2)?;
        let id = self.arena.op(j2, m, &leaves)?.map(|(i, _)| i);
        self.sync();
        Ok(id)
    }
}

fn l_order_key(f: &SparseVector) -> (usize, std::cmp::Reverse<usize>, u64, String) {
    let neg = f.iter().filter(|(_, a)| a.is_negative()).count();
    (neg, std::cmp::Reverse(f.len()), f.max_supp().unwrap_or(0), f.canonical())
}

/// `U_n`, the exclusion of high pools, `D_n`, `L_n`, `ϱ_n`, the odd
/// functionals and the restriction closure, in that order.
pub fn advance_stage(mut s: StageState) -> Result<StageState> {
    let n = s.n + 1;
    if n > s.config.max_stage {
        return Err(Error::TruncationTooTight(format!(
            "stage {n} beyond the configured depth {}",
            s.config.max_stage
        )));
    }
    let sched = s.sched.clone();
    let budget = s.config.trunc.budget;
    let size = s.arena.size() as usize;
    let max_index = s.max_index();
    let prev: Vec<ItemId> = s.w_ids();
    let mut layer = Layer::default();

    let mut u_set = HashSet::new();
    for j in (0..=max_index).step_by(2) {
        let fam = s.config.ext_desc.family(j, &sched);
        let m = m_i64(&sched, j)?;
        let max_len = if fam.count_only() { fam.order.min(size) } else { size };
        let mut tuples = Vec::new();
        admissible_tuples(&s.arena, &prev, &fam, max_len, |t| {
            tuples.push(t.to_vec());
            if tuples.len() > budget {
                return Err(Error::BudgetExceeded { reached: tuples.len(), limit: budget });
            }
            Ok(())
        })?;
        for t in tuples {
            if let Some((id, _)) = s.arena.op(j, m, &t)? {
                if u_set.insert(id) {
                    layer.u.push(id);
                }
            }
        }
        check_budget(&s.arena, budget)?;
    }
    s.sync();

    let mut v_items = prev.clone();
    let mut v_vecs: HashSet<Box<[i64]>> = s.w_vecs.keys().cloned().collect();
    for &id in &layer.u {
        let f = s.arena.vector(id);
        if s.khat_level(&f).is_some_and(|(_, lvl)| lvl > n) {
            layer.excluded.push(id);
            continue;
        }
        if s.in_w[id as usize].is_none() {
            v_items.push(id);
        }
        v_vecs.insert(s.arena.get(id).v.clone());
        if !s.w_vecs.contains_key(&s.arena.get(id).v) {
            layer.d.push(id);
        }
    }
    for &id in &layer.d {
        debug_assert!(s.in_d[id as usize].is_none() && s.in_w[id as usize].is_none());
        s.in_d[id as usize] = Some(n);
        let it = s.arena.get(id);
        if let Some(w) = it.weight_index() {
            if w % 2 == 0 && it.odd_supported() {
                layer.l.entry(w).or_default().push(id);
            }
        }
    }
    s.v_items = v_items;
    s.v_vecs = v_vecs;

    // ϱ_n on L_n, positive full averages first
    for (&w, ids) in layer.l.iter_mut() {
        ids.sort_by_cached_key(|&i| l_order_key(&s.arena.vector(i)));
        for &id in ids.iter() {
            let r = s.record(id);
            debug_assert_eq!(r.weight, WeightTag::Weighted(w));
            // ϱ_n is partial: once the pool has no set inside the bound the
            // functional cannot open a paired sequence here
            match s.coder.rho(n, w, &r) {
                Ok(_) | Err(Error::PoolExhausted(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }

    let mut fresh: Vec<ItemId> = Vec::new();
    for &id in &s.v_items {
        if s.in_w[id as usize].is_none() {
            s.in_w[id as usize] = Some(n);
            fresh.push(id);
        }
    }
    s.n = n;
    s.layers.push(layer);

    let mut odd = Vec::new();
    for j in (1..=max_index).step_by(2) {
        for (entries, kind) in odd_sequences(&mut s, j)? {
            let m = m_i64(&sched, j)?;
            if let Some((id, _)) = s.arena.op(j, m, &entries)? {
                s.sync();
                if s.in_w[id as usize].is_none() {
                    s.in_w[id as usize] = Some(n);
                    s.kind_of.insert(id, kind);
                    odd.push((id, kind));
                }
            }
            check_budget(&s.arena, budget)?;
        }
    }

    fresh.extend(odd.iter().map(|(i, _)| *i));
    let mut w_new = fresh.clone();
    for id in fresh {
        let (lo, hi) = (s.arena.get(id).lo, s.arena.get(id).hi);
        for x in lo..=hi {
            for y in x..=hi {
                if (x, y) == (lo, hi) {
                    continue;
                }
                if let Some((r, _)) = s.arena.restrict(id, x, y) {
                    s.sync();
                    if s.in_w[r as usize].is_none() {
                        s.in_w[r as usize] = Some(n);
                        w_new.push(r);
                    }
                }
            }
        }
        check_budget(&s.arena, budget)?;
    }
    for &id in &w_new {
        s.w_vecs.entry(s.arena.get(id).v.clone()).or_insert(n);
    }
    let layer = &mut s.layers[n];
    layer.odd = odd;
    layer.w_new = w_new;
    Ok(s)
}

struct SeqSearch {
    n: usize,
    ext_fam: FamilyDescriptor,
    hi_fam: FamilyDescriptor,
    max_entries: usize,
    /// `L_k^{w}` items with their level, per weight
    l_by_w: BTreeMap<usize, Vec<(ItemId, usize)>>,
    /// K-sets of pool level `≤ n`, per weight
    k_by_w: BTreeMap<usize, Vec<Vec<u64>>>,
    v_by_w: BTreeMap<usize, Vec<ItemId>>,
}

#[derive(Clone, Default)]
struct SeqState {
    entries: Vec<ItemId>,
    minima: Vec<u64>,
    hi: Vec<SparseVector>,
    hi_minima: Vec<u64>,
    last: u64,
}

fn odd_sequences(s: &mut StageState, j: usize) -> Result<Vec<(Vec<ItemId>, SeqKind)>> {
    let sched = s.sched.clone();
    let n = s.n;
    let size = s.arena.size();
    let ext_fam = s.config.ext_desc.family(j, &sched);
    let hi_fam = s.config.hi_desc.family(j, &sched);
    let max_entries = if ext_fam.count_only() { ext_fam.order } else { size as usize };
    let mut l_by_w: BTreeMap<usize, Vec<(ItemId, usize)>> = BTreeMap::new();
    for (k, layer) in s.layers.iter().enumerate() {
        for (&w, ids) in &layer.l {
            l_by_w.entry(w).or_default().extend(ids.iter().map(|&i| (i, k)));
        }
    }
    let mut k_by_w = BTreeMap::new();
    let mut v_by_w: BTreeMap<usize, Vec<ItemId>> = BTreeMap::new();
    for j2 in (0..=s.max_index()).step_by(2) {
        let sets: Vec<Vec<u64>> = k_elements(j2, size / 2, &sched, s.config.shape)
            .into_iter()
            .filter(|f| crate::coding::pool_of(f[0]) <= n)
            .collect();
        k_by_w.insert(j2, sets);
    }
    for &id in &s.v_items {
        if let Some(w) = s.arena.get(id).weight_index() {
            if w % 2 == 0 {
                v_by_w.entry(w).or_default().push(id);
            }
        }
    }
    let search = SeqSearch { n, ext_fam, hi_fam, max_entries, l_by_w, k_by_w, v_by_w };
    let mut out = Vec::new();
    let Ok(w1) = first_weight(j, &sched) else { return Ok(out) };
    if w1 > s.max_index() {
        return Ok(out);
    }
    let mut starts: Vec<usize> = (w1..=s.max_index()).step_by(4).filter(|&w| first_weight_ok(w, j, &sched)).collect();
    starts.dedup();
    for w in starts {
        seq_step(s, &search, SeqState::default(), Phase::Paired, w, &mut out)?;
    }
    Ok(out)
}

fn seq_push(
    s: &StageState,
    search: &SeqSearch,
    st: &SeqState,
    items: &[ItemId],
    hi: SparseVector,
) -> Option<SeqState> {
    if st.entries.len() + items.len() > search.max_entries {
        return None;
    }
    let mut next = st.clone();
    for &i in items {
        next.entries.push(i);
        next.minima.push(s.arena.get(i).lo);
    }
    if !minima_admissible(&search.ext_fam, &next.minima) {
        return None;
    }
    next.hi_minima.push(hi.min_supp()?);
    if !minima_admissible(&search.hi_fam, &next.hi_minima) {
        return None;
    }
    next.hi.push(hi);
    next.last = s.arena.get(*items.last().unwrap()).hi;
    Some(next)
}

fn seq_step(
    s: &mut StageState,
    search: &SeqSearch,
    st: SeqState,
    phase: Phase,
    w: usize,
    out: &mut Vec<(Vec<ItemId>, SeqKind)>,
) -> Result<()> {
    let sched = s.sched.clone();
    let n = search.n;
    let mut options: Vec<(SeqState, Phase)> = Vec::new();
    if phase == Phase::Paired {
        for &(f, k) in search.l_by_w.get(&w).map(|v| v.as_slice()).unwrap_or(&[]) {
            if s.arena.get(f).lo <= st.last {
                continue;
            }
            let fv = s.arena.vector(f);
            let Some(set) = s.coder.rho.image_of(k, w, &fv).cloned() else { continue };
            let Some(g) = s.hat_item(w, &set)? else { continue };
            if let Some(next) = seq_push(s, search, &st, &[f, g], k_functional(w, &set, &sched)) {
                options.push((next, Phase::Paired));
            }
        }
    }
    if phase != Phase::Tail {
        for set in search.k_by_w.get(&w).map(|v| v.as_slice()).unwrap_or(&[]) {
            if 2 * set[0] <= st.last {
                continue;
            }
            if phase == Phase::Paired {
                // the first unpaired position must not admit a pairing
                if let Some((k, phi)) = s.coder.rho.preimage(w, set) {
                    if k <= n && phi.min_supp().is_some_and(|a| a > st.last) {
                        continue;
                    }
                }
            }
            let Some(g) = s.hat_item(w, set)? else { continue };
            if let Some(next) = seq_push(s, search, &st, &[g], k_functional(w, set, &sched)) {
                options.push((next, Phase::Semi));
            }
        }
    }
    for &h in search.v_by_w.get(&w).map(|v| v.as_slice()).unwrap_or(&[]) {
        if s.arena.get(h).lo <= st.last {
            continue;
        }
        let hev = s.arena.vector(h).restrict_parity(ParityMask::Even);
        if hev.is_zero() {
            continue;
        }
        if phase != Phase::Tail {
            if !s.in_v(&hev) || s.khat_level(&hev).is_some_and(|(_, lvl)| lvl <= n) {
                continue;
            }
        }
        if let Some(next) = seq_push(s, search, &st, &[h], hev.unhat()) {
            options.push((next, Phase::Tail));
        }
    }
    let max_index = s.max_index();
    for (next, ph) in options {
        let kind = match ph {
            Phase::Paired => SeqKind::Paired,
            Phase::Semi => SeqKind::SemiPaired,
            Phase::Tail => SeqKind::Special,
        };
        out.push((next.entries.clone(), kind));
        let w2 = match s.coder.sigma.lookup(&next.hi) {
            Some(i) => Some(i),
            None => match s.coder.sigma.candidate(&next.hi, &sched) {
                Ok(i) if i <= max_index => Some(s.coder.sigma(&next.hi)?),
                Ok(_) | Err(Error::ScheduleExhausted(_)) => None,
                Err(e) => return Err(e),
            },
        };
        if let Some(w2) = w2.filter(|&i| i <= max_index) {
            seq_step(s, search, next, ph, w2, out)?;
        }
    }
    Ok(())
}

/// Decides the strongest kind of an explicit sequence of `W_ex` functionals
/// for the slot `j`, against the current stage.
pub fn classify_sequence(seq: &[ConstructionRecord], j: usize, s: &StageState) -> Classification {
    match classify_inner(seq, j, s) {
        Ok(k) => Classification::Kind(k),
        Err(e) => Classification::Invalid(e),
    }
}

fn classify_inner(seq: &[ConstructionRecord], j: usize, s: &StageState) -> std::result::Result<SeqKind, String> {
    let sched = &s.sched;
    let n = s.n;
    if j % 2 == 0 {
        return Err(format!("slot {j} is not odd"));
    }
    if seq.is_empty() {
        return Err("empty sequence".into());
    }
    for (i, w) in seq.windows(2).enumerate() {
        if !w[0].functional.precedes(&w[1].functional) {
            return Err(format!("NonSuccessive: entries {} and {}", i + 1, i + 2));
        }
    }
    if seq.iter().any(|r| r.functional.is_zero()) {
        return Err("zero entry".into());
    }
    let ext_fam = s.config.ext_desc.family(j, sched);
    let minima: Vec<u64> = seq.iter().map(|r| r.functional.min_supp().unwrap()).collect();
    if !minima_admissible(&ext_fam, &minima) {
        return Err(format!("entries not {ext_fam}-admissible"));
    }
    let mut phase = Phase::Paired;
    let mut hi: Vec<SparseVector> = Vec::new();
    let mut weights: Vec<usize> = Vec::new();
    let mut last = 0u64;
    let mut i = 0;
    while i < seq.len() {
        let r = &seq[i];
        let w = r.weight_index().ok_or_else(|| format!("entry {} is unweighted", i + 1))?;
        let f = &r.functional;
        if phase == Phase::Paired && f.supported_in(ParityMask::Odd) {
            let k = s
                .d_stage(f, r.weight)
                .filter(|&k| k <= n)
                .ok_or_else(|| format!("entry {} is odd-supported but not in L", i + 1))?;
            let set = s
                .coder
                .rho
                .image_of(k, w, f)
                .ok_or_else(|| format!("entry {} has no rho image", i + 1))?;
            let g = k_functional(w, set, sched);
            let ghat = seq.get(i + 1).map(|x| &x.functional);
            if ghat != Some(&g.hat()) {
                return Err(format!("entry {} is not followed by its rho image", i + 1));
            }
            hi.push(g);
            weights.push(w);
            last = seq[i + 1].functional.max_supp().unwrap();
            i += 2;
            continue;
        }
        if phase != Phase::Tail {
            if let Some((j2, lvl)) = s.khat_level(f) {
                if j2 == w && lvl <= n {
                    let g = f.unhat();
                    if phase == Phase::Paired {
                        if let Some((k, phi)) = s.coder.rho.preimage(w, &g.support()) {
                            if k <= n && phi.min_supp().is_some_and(|a| a > last) {
                                return Err(format!(
                                    "entry {} could be paired with {}",
                                    i + 1,
                                    phi.canonical()
                                ));
                            }
                        }
                    }
                    phase = Phase::Semi;
                    hi.push(g);
                    weights.push(w);
                    last = f.max_supp().unwrap();
                    i += 1;
                    continue;
                }
            }
        }
        // tail entry
        if !s.in_v(f) {
            return Err(format!("entry {} is not in V_{n}", i + 1));
        }
        let hev = f.restrict_parity(ParityMask::Even);
        if hev.is_zero() {
            return Err(format!("entry {} vanishes on even coordinates", i + 1));
        }
        if phase != Phase::Tail && (!s.in_v(&hev) || s.khat_level(&hev).is_some_and(|(_, l)| l <= n)) {
            return Err(format!("entry {} restricted to even coordinates is not in V minus K-hat", i + 1));
        }
        phase = Phase::Tail;
        hi.push(hev.unhat());
        weights.push(w);
        last = f.max_supp().unwrap();
        i += 1;
    }
    let hi_fam = s.config.hi_desc.family(j, sched);
    let hi_min: Vec<u64> = hi.iter().map(|g| g.min_supp().unwrap()).collect();
    if !minima_admissible(&hi_fam, &hi_min) {
        return Err(format!("restricted sequence not {hi_fam}-admissible"));
    }
    if !first_weight_ok(weights[0], j, sched) {
        return Err(format!("first weight index {} not allowed for slot {j}", weights[0]));
    }
    for k in 1..weights.len() {
        if s.coder.sigma.lookup(&hi[..k]) != Some(weights[k]) {
            return Err(format!("weight of restricted member {} breaks the sigma chain", k + 1));
        }
    }
    Ok(match phase {
        Phase::Paired => SeqKind::Paired,
        Phase::Semi => SeqKind::SemiPaired,
        Phase::Tail => SeqKind::Special,
    })
}

fn half_interval(e: &Interval) -> Interval {
    match e.bounds() {
        Some((a, b)) => Interval::new(a.div_ceil(2), b / 2),
        None => Interval::Empty,
    }
}

fn restrict_even_tree(t: &TreeAnalysis) -> Option<TreeAnalysis> {
    match t {
        TreeAnalysis::Leaf { positive, index } => (index % 2 == 0).then(|| TreeAnalysis::leaf(*positive, index / 2)),
        TreeAnalysis::Weighted { j, family, children } => {
            let kids: Vec<TreeAnalysis> = children.iter().filter_map(restrict_even_tree).collect();
            if kids.is_empty() {
                return None;
            }
            // the even side uses its own default families
            let _ = family;
            Some(TreeAnalysis::weighted(*j, kids))
        }
        TreeAnalysis::Convex { weights, children } => {
            let kids: Vec<TreeAnalysis> = children
                .iter()
                .map(|c| restrict_even_tree(c).unwrap_or_else(|| TreeAnalysis::weighted(0, vec![])))
                .collect();
            Some(TreeAnalysis::Convex { weights: weights.clone(), children: kids })
        }
        TreeAnalysis::Restrict { interval, child } => {
            let e = half_interval(interval);
            if e.is_empty() {
                return None;
            }
            restrict_even_tree(child).map(|c| TreeAnalysis::restrict(e, c))
        }
    }
}

/// A tree of `W_hi` whose hat is `f` restricted to the even coordinates,
/// by induction on the tree.
pub fn restrict_even_witness(f: &ConstructionRecord, s: &StageState) -> Result<ConstructionRecord> {
    let tree = restrict_even_tree(&f.tree).unwrap_or_else(|| TreeAnalysis::weighted(0, vec![]));
    let g = validate_whi(&tree, &s.sched, s.config.hi_desc, s.config.variant, &s.coder)
        .map_err(|e| Error::WitnessFailed(format!("{}: {e}", f.tree)))?;
    if g.hat() != f.functional.restrict_parity(ParityMask::Even) {
        return Err(Error::WitnessFailed(format!("{}: hat of the witness differs", f.tree)));
    }
    let weight = match effective_weight(&tree) {
        Some(j) => WeightTag::Weighted(j),
        None => WeightTag::Unweighted,
    };
    Ok(ConstructionRecord { functional: g, tree, weight })
}

/// Result of lifting a functional of `W_hi`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lift {
    pub record: ConstructionRecord,
    pub stage: usize,
}

fn hat_range(g: &SparseVector) -> Option<Interval> {
    g.range().bounds().map(|(a, b)| Interval::new(2 * a, 2 * b))
}

fn clip(t: TreeAnalysis, v: &SparseVector, e: Interval) -> TreeAnalysis {
    let (a, b) = e.bounds().unwrap();
    match v.range().bounds() {
        Some((lo, hi)) if lo >= a && hi <= b => t,
        _ => TreeAnalysis::restrict(e, t),
    }
}

/// A functional `φ ∈ W_ex` with `φ` restricted to the even coordinates equal
/// to `ĝ`, by cases on the root. The stage is read off the
/// generated sets.
pub fn lift_witness(g: &ConstructionRecord, s: &StageState) -> Result<Lift> {
    let tree = lift_tree(&g.tree, s)?;
    let phi = crate::tree::realize_with(&tree, &s.sched, s.config.ext_desc)
        .map_err(|e| Error::WitnessFailed(format!("{}: {e}", g.tree)))?;
    if phi.restrict_parity(ParityMask::Even) != g.functional.hat() {
        return Err(Error::WitnessFailed(format!("{}: lift does not restrict to the hat", g.tree)));
    }
    let weight = match effective_weight(&tree) {
        Some(j) => WeightTag::Weighted(j),
        None => WeightTag::Unweighted,
    };
    let stage = match &tree {
        TreeAnalysis::Convex { .. } => convex_stage(&tree, s)?,
        _ => member_stage(&phi, weight, s)?,
    };
    Ok(Lift { record: ConstructionRecord { functional: phi, tree, weight }, stage })
}

/// Outcome of running both witnesses over whole snapshots.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RestrictLiftReport {
    pub restricted: usize,
    pub restrict_failures: Vec<String>,
    pub lifted: usize,
    pub lift_failures: Vec<String>,
    /// Lifts per stage of `W_ex` they land in.
    pub lift_stages: BTreeMap<usize, usize>,
}

impl RestrictLiftReport {
    pub fn passed(&self) -> bool {
        self.restrict_failures.is_empty() && self.lift_failures.is_empty()
    }
}

impl fmt::Display for RestrictLiftReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "restriction: {} checked, {} failed", self.restricted, self.restrict_failures.len())?;
        for e in &self.restrict_failures {
            writeln!(f, "  {e}")?;
        }
        write!(f, "lift: {} checked, {} failed, stages", self.lifted, self.lift_failures.len())?;
        for (st, c) in &self.lift_stages {
            write!(f, " {st}:{c}")?;
        }
        writeln!(f)?;
        for e in &self.lift_failures {
            writeln!(f, "  {e}")?;
        }
        Ok(())
    }
}

/// Restricts every member of `W_ex` and lifts every member of `whi`, checking
/// that each lift restricts back to the functional it came from.
pub fn check_restrict_lift(s: &StageState, whi: &WhiSet) -> RestrictLiftReport {
    let mut rep = RestrictLiftReport::default();
    for id in s.w_ids() {
        rep.restricted += 1;
        if let Err(e) = restrict_even_witness(&s.record(id), s) {
            rep.restrict_failures.push(e.to_string());
        }
    }
    for id in whi.ids() {
        let g = whi.record(id);
        rep.lifted += 1;
        let back = lift_witness(&g, s).and_then(|l| {
            let b = restrict_even_witness(&l.record, s)?;
            if b.functional != g.functional {
                return Err(Error::WitnessFailed(format!("{}: round trip gives {}", g.tree, b.functional)));
            }
            Ok(l.stage)
        });
        match back {
            Ok(st) => *rep.lift_stages.entry(st).or_default() += 1,
            Err(e) => rep.lift_failures.push(e.to_string()),
        }
    }
    rep
}

fn member_stage(phi: &SparseVector, weight: WeightTag, s: &StageState) -> Result<usize> {
    if phi.is_zero() {
        return Ok(0);
    }
    if phi.max_supp().unwrap() > s.arena.size() {
        return Err(Error::TruncationTooTight(format!(
            "lift reaches coordinate {} beyond support bound {}",
            phi.max_supp().unwrap(),
            s.arena.size()
        )));
    }
    s.w_stage_weighted(phi, weight).or_else(|| s.w_stage(phi)).ok_or_else(|| {
        Error::TruncationTooTight(format!(
            "lift {} is not in W_{}; a later stage is needed",
            phi.canonical(),
            s.n
        ))
    })
}

fn convex_stage(t: &TreeAnalysis, s: &StageState) -> Result<usize> {
    let TreeAnalysis::Convex { children, .. } = t else { unreachable!() };
    let mut st = 0;
    for c in children {
        let v = crate::tree::realize_with(c, &s.sched, s.config.ext_desc)?;
        let w = match effective_weight(c) {
            Some(j) => WeightTag::Weighted(j),
            None => WeightTag::Unweighted,
        };
        st = st.max(member_stage(&v, w, s)?);
    }
    Ok(st)
}

fn lift_tree(t: &TreeAnalysis, s: &StageState) -> Result<TreeAnalysis> {
    let sched = &s.sched;
    match t {
        TreeAnalysis::Leaf { positive, index } => Ok(TreeAnalysis::leaf(*positive, 2 * index)),
        TreeAnalysis::Restrict { interval, child } => {
            let e = match interval.bounds() {
                Some((a, b)) => Interval::new(2 * a - 1, 2 * b),
                None => Interval::Empty,
            };
            Ok(TreeAnalysis::restrict(e, lift_tree(child, s)?))
        }
        TreeAnalysis::Convex { weights, children } => Ok(TreeAnalysis::Convex {
            weights: weights.clone(),
            children: children.iter().map(|c| lift_tree(c, s)).collect::<Result<_>>()?,
        }),
        TreeAnalysis::Weighted { j, children, .. } if j % 2 == 0 => {
            let mut kids = Vec::new();
            for c in children {
                let gv = validate_whi(c, sched, s.config.hi_desc, s.config.variant, &s.coder)?;
                let Some(e) = hat_range(&gv) else { continue };
                let phi = lift_tree(c, s)?;
                let pv = crate::tree::realize_with(&phi, sched, s.config.ext_desc)?;
                kids.push(clip(phi, &pv, e));
            }
            Ok(TreeAnalysis::weighted(*j, kids))
        }
        TreeAnalysis::Weighted { j, children, .. } => {
            let parts: Vec<SparseVector> = children
                .iter()
                .map(|c| validate_whi(c, sched, s.config.hi_desc, s.config.variant, &s.coder))
                .collect::<Result<_>>()?;
            let weights: Vec<usize> = children
                .iter()
                .map(|c| effective_weight(c).ok_or_else(|| Error::WitnessFailed("unweighted special member".into())))
                .collect::<Result<_>>()?;
            // longest prefix inside the K-pools
            let mut m = 0;
            let mut sets = Vec::new();
            while m < parts.len() {
                match k_membership(&parts[m], weights[m], sched, s.config.shape) {
                    Some((_, f)) => sets.push(f),
                    None => break,
                }
                m += 1;
            }
            // longest paired prefix within it
            let mut entries = Vec::new();
            let mut last = 0u64;
            let mut l = 0;
            while l < m {
                let Some((k, phi)) = s.coder.rho.preimage(weights[l], &sets[l]) else { break };
                if k > s.n || phi.min_supp().is_none_or(|a| a <= last) {
                    break;
                }
                let Some(fid) = s
                    .arena
                    .to_dense(&phi)
                    .and_then(|v| s.arena.find(&v, WeightTag::Weighted(weights[l])))
                else {
                    break;
                };
                entries.push(s.arena.tree(fid));
                entries.push(crate::coding::k_record(weights[l], &sets[l], sched).tree.hat());
                last = 2 * sets[l].last().unwrap();
                l += 1;
            }
            for k in l..m {
                entries.push(crate::coding::k_record(weights[k], &sets[k], sched).tree.hat());
            }
            for k in m..parts.len() {
                let e = hat_range(&parts[k]).unwrap();
                let h = lift_tree(&children[k], s)?;
                let hv = crate::tree::realize_with(&h, sched, s.config.ext_desc)?;
                entries.push(clip(h, &hv, e));
            }
            Ok(TreeAnalysis::weighted(*j, entries))
        }
    }
}

/// Convex combinations in the non-convex extension set must be supported in
/// the odd coordinates.
pub fn check_convex_rule(t: &TreeAnalysis, s: &StageState) -> Result<()> {
    match t {
        TreeAnalysis::Leaf { .. } => Ok(()),
        TreeAnalysis::Restrict { child, .. } => check_convex_rule(child, s),
        TreeAnalysis::Weighted { children, .. } => children.iter().try_for_each(|c| check_convex_rule(c, s)),
        TreeAnalysis::Convex { children, .. } => {
            if s.config.variant == Variant::NonConvex {
                let v = crate::tree::realize_with(t, &s.sched, s.config.ext_desc)?;
                if !v.supported_in(ParityMask::Odd) {
                    return Err(Error::InvalidTree("convex combination with even support".into()));
                }
            }
            children.iter().try_for_each(|c| check_convex_rule(c, s))
        }
    }
}

/// Pairs `(x_k, f_k)`, `k = 1..2L`: odd-supported SEPs alternating with
/// hatted averages on the ϱ-images.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DependentPairedSequence {
    pub j: usize,
    pub c: Rational,
    pub eps: Rational,
    pub pairs: Vec<(SparseVector, ConstructionRecord)>,
    pub hi_weights: Vec<usize>,
}

impl DependentPairedSequence {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn functional(&self, sched: &ParamSchedule) -> ConstructionRecord {
        let f = SparseVector::sum(self.pairs.iter().map(|(_, r)| &r.functional)).scale(&sched.m_inv(self.j));
        let tree = TreeAnalysis::weighted(self.j, self.pairs.iter().map(|(_, r)| r.tree.clone()).collect());
        ConstructionRecord { functional: f, tree, weight: WeightTag::Weighted(self.j) }
    }

    /// `Σ_{k∈E} (−1)^{k+1} x_k` for `E = [a, b]`, 1-based.
    pub fn alternating_on(&self, a: usize, b: usize) -> SparseVector {
        let mut acc = SparseVector::zero();
        for k in a..=b {
            let x = &self.pairs[k - 1].0;
            acc = if k % 2 == 1 { acc.add(x) } else { acc.sub(x) };
        }
        acc
    }

    pub fn sum(&self) -> SparseVector {
        SparseVector::sum(self.pairs.iter().map(|(x, _)| x))
    }
}

/// Builds a dependent paired sequence with `len` couples for the slot `j`.
/// Odd SEP functionals lie in `L₁`, so their partners are `ϱ₁`-images.
pub fn build_dependent_paired(
    j: usize,
    len: usize,
    eps: &Rational,
    odd_source: &BasisSource,
    s: &mut StageState,
) -> Result<DependentPairedSequence> {
    let sched = s.sched.clone();
    if !(eps.is_positive() && *eps < int(1)) {
        return Err(Error::PreconditionFailed(format!("eps {} outside (0, 1)", fmt_rat(eps))));
    }
    if odd_source.step % 2 != 0 || odd_source.start % 2 != 1 {
        return Err(Error::PreconditionFailed("the odd source must yield odd coordinates".into()));
    }
    if j % 2 == 0 || len > sched.n_count(j) {
        return Err(Error::PreconditionFailed(format!("slot {j} with {len} couples")));
    }
    let mut w = first_weight(j, &sched)?;
    let mut pairs = Vec::new();
    let mut hi: Vec<SparseVector> = Vec::new();
    let mut weights = Vec::new();
    let mut after = 0u64;
    for k in 0..len {
        if k > 0 {
            w = s.coder.sigma(&hi)?;
        }
        let p = build_sep(w, odd_source, after, &sched)?;
        let level = s.d_stage(&p.f.functional, p.f.weight).unwrap_or(1);
        let image = s.coder.rho(level, w, &p.f)?;
        let set = image.functional.support();
        let x2 = SparseVector::constant_on(set.iter().map(|i| 2 * i), &(sched.m_rat(w) / sched.n_rat(w)));
        let f2 = ConstructionRecord {
            functional: image.functional.hat(),
            tree: image.tree.hat(),
            weight: WeightTag::Weighted(w),
        };
        after = x2.max_supp().unwrap();
        pairs.push((p.x.clone(), p.f.clone()));
        pairs.push((x2, f2));
        hi.push(image.functional.clone());
        weights.push(w);
    }
    let dp = DependentPairedSequence { j, c: int(2), eps: eps.clone(), pairs, hi_weights: weights };
    for (k, (x, f)) in dp.pairs.iter().enumerate() {
        let parity = if k % 2 == 0 { ParityMask::Odd } else { ParityMask::Even };
        if !x.supported_in(parity) || !f.functional.supported_in(parity) || f.functional.evaluate(x) != int(1) {
            return Err(Error::InvalidSequence(format!("couple {} breaks the definition", k + 1)));
        }
    }
    Ok(dp)
}

/// The exact identities for `F` and, over the generated special functionals
/// of the slot, the largest action on each alternating interval sum against
/// `6C(1 + #E m⁻²)`.
pub fn verify_extension_estimates(dp: &DependentPairedSequence, s: &StageState) -> Result<EstimateReport> {
    let sched = &s.sched;
    let trunc = format!("W_ex stage {} {}", s.n, s.config.trunc);
    if dp.is_empty() {
        return Ok(EstimateReport { title: "dependent paired sequence (empty)".into(), truncation: trunc, checks: vec![] });
    }
    let j = dp.j;
    let l = dp.len() / 2;
    let lr = int(l as i64);
    let m = sched.m_rat(j);
    let m_inv2 = sched.m_inv(j) * sched.m_inv(j);
    let f = dp.functional(sched);
    let mut checks = vec![
        EstimateCheck::eq("F((m/L) sum)", f.functional.evaluate(&dp.sum().scale(&(m.clone() / lr.clone()))), int(2), Some(f.tree.to_string())),
        EstimateCheck::eq(
            "F(L^-1 alternating)",
            f.functional.evaluate(&dp.alternating_on(1, dp.len()).scale(&(int(1) / lr.clone()))),
            Rational::zero(),
            None,
        ),
    ];
    let top = dp.sum().max_supp().unwrap_or(0);
    if top > s.arena.size() {
        return Err(Error::TruncationTooTight(format!(
            "sequence reaches {top} beyond support bound {}",
            s.arena.size()
        )));
    }
    let special: Vec<ItemId> =
        s.odd_ids().into_iter().filter(|&i| s.arena.get(i).weight == WeightTag::Weighted(j)).collect();
    for a in 1..=dp.len() {
        for b in a..=dp.len() {
            let x = dp.alternating_on(a, b);
            let bound = int(6) * dp.c.clone() * (int(1) + int((b - a + 1) as i64) * m_inv2.clone());
            let (v, w) = match sup_abs(&s.arena, &special, &x) {
                Some((v, id)) => (v, Some(s.arena.tree(id).to_string())),
                None => (Rational::zero(), None),
            };
            checks.push(EstimateCheck::le(&format!("E=[{a},{b}] sup |g(x_E)|"), v, bound, true, w));
        }
    }
    let all = s.w_ids();
    let alt = dp.alternating_on(1, dp.len()).scale(&(int(1) / lr));
    let (v, w) = match sup_abs(&s.arena, &all, &alt) {
        Some((v, id)) => (v, Some(s.arena.tree(id).to_string())),
        None => (Rational::zero(), None),
    };
    checks.push(EstimateCheck::le("sup |g(L^-1 alternating)| over W", v, int(12) * dp.c.clone() / m, false, w));
    Ok(EstimateReport {
        title: format!("dependent paired sequence slot {j} couples {l} C={} eps={}", fmt_rat(&dp.c), fmt_rat(&dp.eps)),
        truncation: trunc,
        checks,
    })
}

/// `f = (1−δ)x* + (1−δ) Σ ε_{2n} |x*(e_{2n})| e*_{2n}` with
/// `ε_{2n} = −sign x*(e_{2n})` over the even coordinates in `ran x`, witnessed
/// as a convex combination of `x*`, signed basis functionals and zero.
pub fn build_annihilating_functional(
    x: &SparseVector,
    xstar: &ConstructionRecord,
    delta: &Rational,
    sched: &ParamSchedule,
    desc: SetDescriptor,
) -> Result<ConstructionRecord> {
    if !(delta.is_positive() && *delta < int(1)) {
        return Err(Error::DeltaOutOfRange(fmt_rat(delta)));
    }
    let e = x.range();
    let evens: Vec<(u64, Rational)> =
        xstar.functional.iter().filter(|(k, _)| k % 2 == 0).map(|(k, a)| (k, a.clone())).collect();
    if let Some((k, _)) = evens.iter().find(|(k, _)| !e.contains(*k)) {
        return Err(Error::PreconditionFailed(format!("x* has even coordinate {k} outside ran x")));
    }
    let keep = int(1) - delta.clone();
    let mut weights = vec![keep.clone()];
    let mut children = vec![xstar.tree.clone()];
    for (k, a) in &evens {
        weights.push(keep.clone() * a.abs());
        children.push(TreeAnalysis::leaf(a.is_negative(), *k));
    }
    let used: Rational = weights.iter().sum();
    if used > int(1) {
        return Err(Error::PreconditionFailed(format!(
            "even mass of x* needs total weight {} above 1",
            fmt_rat(&used)
        )));
    }
    if used < int(1) {
        weights.push(int(1) - used);
        children.push(TreeAnalysis::weighted(0, vec![]));
    }
    let tree = TreeAnalysis::Convex { weights, children };
    let f = crate::tree::realize_with(&tree, sched, desc)?;
    debug_assert!(f.supported_in(ParityMask::Odd));
    debug_assert!(f.iter().all(|(_, a)| !a.is_zero()));
    if !f.supported_in(ParityMask::Odd) {
        return Err(Error::WitnessFailed("annihilating functional kept an even coordinate".into()));
    }
    Ok(ConstructionRecord { functional: f, tree, weight: WeightTag::Unweighted })
}

fn line(s: &StageState, id: ItemId) -> String {
    format!("{}\t{}\t{}", s.arena.get(id).weight, s.arena.vector(id).canonical(), s.arena.tree(id))
}

fn sorted_lines(s: &StageState, ids: impl IntoIterator<Item = ItemId>) -> String {
    let mut v: Vec<String> = ids.into_iter().map(|i| line(s, i)).collect();
    v.sort();
    let mut out = v.join("\n");
    out.push('\n');
    out
}

/// Text files describing every stage, keyed by file name.
pub fn snapshot_files(s: &StageState) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for (n, layer) in s.layers.iter().enumerate() {
        let p = format!("stage{n}");
        if n > 0 {
            out.insert(format!("{p}/U.txt"), sorted_lines(s, layer.u.iter().copied()));
            out.insert(format!("{p}/excluded.txt"), sorted_lines(s, layer.excluded.iter().copied()));
            out.insert(format!("{p}/D.txt"), sorted_lines(s, layer.d.iter().copied()));
            for (w, ids) in &layer.l {
                out.insert(format!("{p}/L{w}.txt"), sorted_lines(s, ids.iter().copied()));
            }
            let mut odd: Vec<String> = layer.odd.iter().map(|(i, k)| format!("{k}\t{}", line(s, *i))).collect();
            odd.sort();
            out.insert(format!("{p}/odd.txt"), odd.join("\n") + "\n");
        }
        out.insert(format!("{p}/W.txt"), sorted_lines(s, layer.w_new.iter().copied()));
    }
    let mut codes: Vec<String> = s.coder.sigma.entries().map(|(k, i)| format!("SIGMA|{k}|{i}")).collect();
    codes.extend(s.coder.rho.entries().map(|((k, i, f), set)| {
        format!("RHO|{k}|{i}|{f}|{}", k_functional(*i, set, &s.sched).canonical())
    }));
    out.insert("codes.txt".into(), codes.join("\n") + "\n");
    let meta = format!(
        "schedule = {}\nstage = {}\nsupport_bound = {}\nmax_index = {}\nhi = {}\next = {}\nvariant = {}\n",
        s.sched.id(),
        s.n,
        s.config.trunc.support_bound,
        s.config.trunc.max_index,
        s.config.hi_desc,
        s.config.ext_desc,
        s.config.variant
    );
    out.insert("meta.txt".into(), meta);
    out
}

pub fn write_snapshot(s: &StageState, dir: &Path) -> Result<()> {
    for (name, body) in snapshot_files(s) {
        let p = dir.join(&name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::Io(format!("{}: {e}", parent.display())))?;
        }
        fs::write(&p, body).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

/// Names of files under `dir` that differ from a fresh regeneration `s`.
pub fn diff_snapshot(s: &StageState, dir: &Path) -> Result<Vec<String>> {
    let mut bad = Vec::new();
    for (name, body) in snapshot_files(s) {
        let p = dir.join(&name);
        match fs::read_to_string(&p) {
            Ok(old) if old == body => {}
            _ => bad.push(name),
        }
    }
    Ok(bad)
}

/// Runs stages `1..=stage` from scratch.
pub fn build_stages(config: ExtConfig, sched: &ParamSchedule, coder: Coder, stage: usize) -> Result<StageState> {
    let mut s = StageState::new(config, sched, coder)?;
    for _ in 0..stage {
        s = advance_stage(s)?;
    }
    Ok(s)
}
