//! Schreier-family version of the extension: the flattened families, the
//! identity `Ŝ_n = S_n^f ∩ [ℕ_ev]^{<ω}`, interleaved `S_n^f ⊙ A_2`
//! admissibility and the descriptors handed to the extension engine.

use std::collections::HashMap;
use std::fmt;

use crate::coding::{Coder, KShape};
use crate::error::{Error, Result};
use crate::extension::{build_stages, check_restrict_lift, ExtConfig, RestrictLiftReport};
use crate::families::{member, FamilyDescriptor};
use crate::hi_core::{generate_whi, Truncation, Variant};
use crate::mt_norm::{ParamSchedule, SetDescriptor};

/// Largest number of even points the exhaustive check accepts by default.
pub const DEFAULT_SUBSET_BUDGET: u64 = 1 << 12;

#[derive(Clone, Debug)]
pub struct SchreierVariantConfig {
    pub sched: ParamSchedule,
    /// Truncation of `W_ex`.
    pub ext_trunc: Truncation,
    /// Truncation of the `W_hi` whose members get lifted.
    pub hi_trunc: Truncation,
    pub ext_stage: usize,
    pub hi_stage: usize,
    pub pool_bound: u64,
}

impl SchreierVariantConfig {
    pub fn ext_config(&self) -> ExtConfig {
        ExtConfig::schreier(self.ext_trunc, self.ext_stage)
    }

    pub fn coder(&self) -> Coder {
        Coder::new(&self.sched, KShape::MaximalSchreier, self.pool_bound)
    }
}

/// Which side of the extension a slot belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Extension,
    Hi,
}

/// The family governing operations of index `slot`.
pub fn schreier_family_descriptors(cfg: &SchreierVariantConfig, slot: usize, side: Side) -> Result<FamilyDescriptor> {
    if slot > cfg.sched.max_index() {
        return Err(Error::ScheduleExhausted(format!(
            "slot {slot} beyond table `{}` (last index {})",
            cfg.sched.id(),
            cfg.sched.max_index()
        )));
    }
    let desc = match side {
        Side::Extension => SetDescriptor::WmTSchreier,
        Side::Hi => SetDescriptor::Schreier,
    };
    Ok(desc.family(slot, &cfg.sched))
}

/// Membership straight from the recursive definition: some split into
/// successive pieces of the previous order whose minima form a first-order
/// set. Independent of the greedy test in `families`.
struct Definitional<'a> {
    set: &'a [u64],
    flat: bool,
    memo: HashMap<(usize, usize, usize), bool>,
}

impl<'a> Definitional<'a> {
    fn new(set: &'a [u64], flat: bool) -> Self {
        Definitional { set, flat, memo: HashMap::new() }
    }

    fn first_order(&self, first: u64, count: usize) -> bool {
        if self.flat {
            (count == 1 && first == 1) || 2 * count as u64 <= first
        } else {
            count as u64 <= first
        }
    }

    /// Is `set[i..j]` in the family of order `n`?
    fn member(&mut self, n: usize, i: usize, j: usize) -> bool {
        if i == j {
            return true;
        }
        if let Some(&b) = self.memo.get(&(n, i, j)) {
            return b;
        }
        let b = if n == 1 {
            self.first_order(self.set[i], j - i)
        } else {
            self.fewest_pieces(n - 1, i, j).is_some_and(|k| self.first_order(self.set[i], k))
        };
        self.memo.insert((n, i, j), b);
        b
    }

    fn fewest_pieces(&mut self, n: usize, i: usize, j: usize) -> Option<usize> {
        // best[t] = fewest pieces covering set[i..i+t]
        let mut best: Vec<Option<usize>> = vec![None; j - i + 1];
        best[0] = Some(0);
        for end in i + 1..=j {
            for start in i..end {
                if let Some(b) = best[start - i] {
                    if self.member(n, start, end) {
                        let c = b + 1;
                        if best[end - i].is_none_or(|x| c < x) {
                            best[end - i] = Some(c);
                        }
                    }
                }
            }
        }
        best[j - i]
    }
}

pub fn schreier_by_definition(n: usize, set: &[u64]) -> bool {
    Definitional::new(set, false).member(n, 0, set.len())
}

pub fn flat_by_definition(n: usize, set: &[u64]) -> bool {
    Definitional::new(set, true).member(n, 0, set.len())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HatReport {
    pub n: usize,
    pub max_elem: u64,
    pub checked: u64,
    /// `G ∈ S_n` with `Ĝ ∉ S_n^f`.
    pub hat_not_flat: Vec<Vec<u64>>,
    /// `F ∈ S_n^f` even with `unhat F ∉ S_n`.
    pub flat_not_hat: Vec<Vec<u64>>,
    /// Sets where the greedy membership test disagrees with the definition.
    pub greedy_mismatch: Vec<Vec<u64>>,
}

impl HatReport {
    pub fn passed(&self) -> bool {
        self.hat_not_flat.is_empty() && self.flat_not_hat.is_empty() && self.greedy_mismatch.is_empty()
    }
}

impl fmt::Display for HatReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "lsa2 n={} max={}: {} even subsets", self.n, self.max_elem, self.checked)?;
        for (name, v) in [
            ("hat of S_n outside S_n^f", &self.hat_not_flat),
            ("even S_n^f set outside hat of S_n", &self.flat_not_hat),
            ("greedy test disagrees with definition", &self.greedy_mismatch),
        ] {
            writeln!(f, "  {name}: {}", v.len())?;
            for s in v.iter().take(10) {
                writeln!(f, "    {s:?}")?;
            }
        }
        write!(f, "  verdict: {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Exhausts the subsets of the even numbers in `[1, max_elem]` and checks
/// both inclusions pointwise. `budget` bounds the number of subsets.
pub fn hat_equivalence_check(n: usize, max_elem: u64, budget: u64) -> Result<HatReport> {
    if n == 0 {
        return Err(Error::PreconditionFailed("family order must be at least 1".into()));
    }
    let evens: Vec<u64> = (1..=max_elem / 2).map(|i| 2 * i).collect();
    if evens.len() >= 63 || 1u64 << evens.len() > budget {
        return Err(Error::BudgetExceeded { reached: 1usize.checked_shl(evens.len() as u32).unwrap_or(usize::MAX), limit: budget as usize });
    }
    let mut rep = HatReport {
        n,
        max_elem,
        checked: 0,
        hat_not_flat: vec![],
        flat_not_hat: vec![],
        greedy_mismatch: vec![],
    };
    for mask in 0u64..1 << evens.len() {
        let f: Vec<u64> = (0..evens.len()).filter(|&i| mask >> i & 1 == 1).map(|i| evens[i]).collect();
        let g: Vec<u64> = f.iter().map(|x| x / 2).collect();
        let in_flat = flat_by_definition(n, &f);
        let in_s = schreier_by_definition(n, &g);
        rep.checked += 1;
        if in_s && !in_flat {
            rep.hat_not_flat.push(g.clone());
        }
        if in_flat && !in_s {
            rep.flat_not_hat.push(f.clone());
        }
        if member(&FamilyDescriptor::flat(n), &f) != in_flat || member(&FamilyDescriptor::schreier(n), &g) != in_s {
            rep.greedy_mismatch.push(f);
        }
    }
    Ok(rep)
}

/// Admissibility of `{k_1, 2g_1, …, k_d, 2g_d, 2g_{d+1}, …}` for the product
/// family `S_n^f ⊙ A_2`, where `G ∈ S_n` and each `k_i` sits strictly between
/// `2g_{i-1}` and `2g_i`.
pub fn interleave_admissible(g: &[u64], ks: &[u64], n: usize) -> Result<bool> {
    if !member(&FamilyDescriptor::schreier(n), g) {
        return Err(Error::PreconditionFailed(format!("{g:?} is not in S_{n}")));
    }
    if ks.len() > g.len() {
        return Err(Error::PatternViolation(format!("{} interleaved points for {} elements", ks.len(), g.len())));
    }
    let mut set = Vec::with_capacity(g.len() + ks.len());
    let mut prev = 0;
    for (i, &x) in g.iter().enumerate() {
        if let Some(&k) = ks.get(i) {
            if k <= prev || k >= 2 * x {
                return Err(Error::PatternViolation(format!("k_{} = {k} is not between {prev} and {}", i + 1, 2 * x)));
            }
            set.push(k);
        }
        set.push(2 * x);
        prev = 2 * x;
    }
    Ok(member(&FamilyDescriptor::flat_a2(n), &set))
}

/// Builds `W_ex` and `W_hi` for the Schreier families and runs the
/// restriction and lift witnesses over both.
pub fn check_step_lemmas(cfg: &SchreierVariantConfig) -> Result<RestrictLiftReport> {
    let s = build_stages(cfg.ext_config(), &cfg.sched, cfg.coder(), cfg.ext_stage)?;
    let mut coder = cfg.coder();
    let whi = generate_whi(cfg.hi_stage, cfg.hi_trunc, &cfg.sched, SetDescriptor::Schreier, Variant::Convex, &mut coder)?;
    Ok(check_restrict_lift(&s, &whi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mt_norm::named_schedule;

    fn cfg() -> SchreierVariantConfig {
        SchreierVariantConfig {
            sched: named_schedule("micro").unwrap(),
            ext_trunc: Truncation { support_bound: 6, max_index: 2, budget: 5_000_000 },
            hi_trunc: Truncation { support_bound: 3, max_index: 2, budget: 1_000_000 },
            ext_stage: 2,
            hi_stage: 2,
            pool_bound: 4096,
        }
    }

    #[test]
    fn interleaved_pattern_example() {
        assert!(interleave_admissible(&[2, 3], &[3, 5], 1).unwrap());
        assert!(interleave_admissible(&[2, 3], &[], 1).unwrap());
        assert!(matches!(interleave_admissible(&[2, 3], &[5, 3], 1), Err(Error::PatternViolation(_))));
        assert!(matches!(interleave_admissible(&[2, 3], &[4], 1), Err(Error::PatternViolation(_))));
    }

    #[test]
    fn small_hat_examples() {
        assert!(flat_by_definition(1, &[4, 6]));
        assert!(schreier_by_definition(1, &[2, 3]));
        assert!(flat_by_definition(1, &[2]));
        assert!(schreier_by_definition(1, &[1]));
        assert!(!flat_by_definition(1, &[2, 4]));
        assert!(!schreier_by_definition(1, &[1, 2]));
    }

    #[test]
    fn hat_equivalence_small() {
        for n in 1..=3 {
            let r = hat_equivalence_check(n, 16, DEFAULT_SUBSET_BUDGET).unwrap();
            assert!(r.passed(), "{r}");
            assert_eq!(r.checked, 256);
        }
        assert!(matches!(hat_equivalence_check(2, 30, DEFAULT_SUBSET_BUDGET), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn descriptors_by_slot() {
        let c = cfg();
        assert_eq!(schreier_family_descriptors(&c, 2, Side::Extension).unwrap().to_string(), "SF:3");
        assert_eq!(schreier_family_descriptors(&c, 1, Side::Extension).unwrap().to_string(), "SFxA2:2");
        assert_eq!(schreier_family_descriptors(&c, 1, Side::Hi).unwrap().to_string(), "S:2");
        assert!(matches!(schreier_family_descriptors(&c, 1000, Side::Hi), Err(Error::ScheduleExhausted(_))));
    }

    #[test]
    fn step_checks_at_desk_truncation() {
        let r = check_step_lemmas(&cfg()).unwrap();
        assert!(r.passed(), "{r}");
        assert!(r.lifted > 0 && r.restricted > 0);
    }
}
