//! The named check suites. Each builds its own objects from pinned settings
//! plus the sampling knobs of the run configuration, so reports only depend
//! on the configuration.

use std::collections::BTreeSet;

use num_traits::Zero;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::report::{Check, Report};
use crate::coding::{random_couple_forest, verify_tree_pairs, Coder, Couple, KShape};
use crate::error::Result;
use crate::extension::{build_dependent_paired, build_stages, check_restrict_lift, verify_extension_estimates, ExtConfig};
use crate::hi_core::{
    build_dependent_sequence, first_weight, generate_whi, verify_dependent_estimates, BasisSource, EstimateReport,
    Truncation, Variant,
};
use crate::mt_norm::{
    aux_bound_report, generate_set, named_schedule, oracle_sup, DenseSet, NormEngine, ParamSchedule, SetDescriptor,
};
use crate::ratvec::{int, rat, Interval, Rational, SparseVector};
use crate::schreier_ext::{check_step_lemmas, hat_equivalence_check, SchreierVariantConfig};
use crate::tree::{certify_with, realize_with, TreeAnalysis};

pub const SUITES: &[&str] = &[
    "oracle",
    "exact-pair",
    "aux-bounds",
    "tree-property",
    "restriction",
    "lift",
    "dependent",
    "dependent-paired",
    "lsa2",
    "invariants",
    "schreier-steps",
];

/// Extra arguments of `verify lsa2`.
#[derive(Clone, Debug, Default)]
pub struct SuiteArgs {
    pub n: Option<usize>,
    pub max: Option<u64>,
}

pub fn run_suite(name: &str, cfg: &RunConfig, args: &SuiteArgs) -> Result<Report> {
    match name {
        "oracle" => oracle(cfg),
        "exact-pair" => exact_pair(),
        "aux-bounds" => aux_bounds(),
        "tree-property" => tree_property(cfg),
        "restriction" => restriction_lift(cfg, true),
        "lift" => restriction_lift(cfg, false),
        "dependent" => dependent(),
        "dependent-paired" => dependent_paired(),
        "lsa2" => lsa2(args),
        "invariants" => invariants(cfg),
        "schreier-steps" => schreier_steps(),
        _ => Err(crate::Error::Config(format!("unknown suite `{name}`; known: {}", SUITES.join(", ")))),
    }
}

fn engine(sched: &ParamSchedule, d: SetDescriptor, cfg: &RunConfig) -> Result<NormEngine> {
    let e = NormEngine::new(sched.clone(), d);
    match &cfg.cache {
        Some(p) => e.with_cache(p),
        None => Ok(e),
    }
}

fn ints(x: &[i64]) -> SparseVector {
    let pairs: Vec<(u64, i64)> = x.iter().enumerate().map(|(k, &a)| (k as u64 + 1, a)).collect();
    SparseVector::from_ints(&pairs)
}

/// All coordinate vectors on `[1, 4]` with entries in `-2..=2`, then
/// `cfg.samples` random ones on `[1, 6]`.
pub fn oracle_vectors(cfg: &RunConfig) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for code in 0..625i64 {
        let mut v = vec![0i64; 6];
        let mut c = code;
        for slot in v.iter_mut().take(4) {
            *slot = c % 5 - 2;
            c /= 5;
        }
        out.push(v);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.samples {
        out.push((0..6).map(|_| rng.gen_range(-2..=2)).collect());
    }
    out
}

fn oracle(cfg: &RunConfig) -> Result<Report> {
    let sched = named_schedule("oracle2")?;
    let mut rep = Report::new("oracle", "schedule oracle2, WmT, depth 6, support [1, 6]");
    let set = DenseSet::generate(6, 6, &sched, SetDescriptor::WmT, 50_000_000)?;
    rep.line(format!("generated functionals: {}", set.len()));
    let e = engine(&sched, SetDescriptor::WmT, cfg)?;
    let xs = oracle_vectors(cfg);
    let mut mismatches = Vec::new();
    let mut bad_certs = 0usize;
    let mut largest = Rational::zero();
    for x in &xs {
        let v = ints(x);
        let r = e.norm(&v)?;
        if certify_with(&r.certificate, &v, &sched, SetDescriptor::WmT)? != r.value {
            bad_certs += 1;
        }
        let o = set.sup_int(x);
        if o != r.value {
            mismatches.push(format!("{v}: norm {} oracle {}", r.value, o));
        }
        largest = largest.max(r.value);
    }
    let mut c = Check::new("oracle equivalence", "norm equals the brute-force supremum", mismatches.is_empty())
        .count("vectors", xs.len())
        .count("mismatches", mismatches.len())
        .value("largest norm", largest);
    if let Some(m) = mismatches.first() {
        c = c.note(m.clone());
    }
    rep.push(c);
    rep.push(
        Check::new("certificates", "each certificate evaluates to the norm", bad_certs == 0)
            .count("failures", bad_certs),
    );
    Ok(rep)
}

fn exact_pair() -> Result<Report> {
    let sched = ParamSchedule::paper_a();
    let mut rep = Report::new("exact-pair", "schedule paperA, WmT");
    let x = SparseVector::constant_on(1..=4, &int(1));
    let r = crate::mt_norm::norm(&x, &sched, SetDescriptor::WmT)?;
    let f = realize_with(&r.certificate, &sched, SetDescriptor::WmT)?;
    let half = SparseVector::constant_on(1..=4, &rat(1, 2));
    rep.push(Check::new("norm", "||e1+e2+e3+e4|| = 2", r.value == int(2)).value("norm", r.value.clone()));
    rep.push(
        Check::new("certificate", "the certificate realizes 1/2 (e*1+...+e*4)", f == half)
            .certificate(r.certificate.to_string()),
    );
    let set = generate_set(2, 4, &sched, SetDescriptor::WmT, 1_000_000)?;
    let o = oracle_sup(&set, &x);
    rep.push(
        Check::new("oracle", "brute-force supremum over depth 2 on [1, 4]", o == int(2))
            .value("sup", o)
            .count("functionals", set.len()),
    );
    Ok(rep)
}

fn aux_bounds() -> Result<Report> {
    let sched = named_schedule("aux")?;
    let mut rep = Report::new("aux-bounds", "schedule aux, descriptor Aux, every j below the last table entry");
    let r = aux_bound_report(&sched, SetDescriptor::Aux)?;
    for c in &r.checks {
        let mut ch = Check::new(&c.name, "max action <= bound", c.pass).value("max action", c.lhs.clone()).value("bound", c.rhs.clone());
        if let Some(w) = &c.witness {
            ch = ch.certificate(w.to_string());
        }
        rep.push(ch);
    }
    Ok(rep)
}

/// Slots whose sequences the tree-property fuzz starts from.
const FUZZ_SLOTS: [usize; 3] = [1, 3, 5];

pub fn couple_forest(cfg: &RunConfig) -> Result<Vec<Vec<Couple>>> {
    let sched = named_schedule("fuzz")?;
    let mut coder = Coder::new(&sched, KShape::Count, 1 << 40);
    let firsts: Vec<usize> = FUZZ_SLOTS.iter().map(|&j| first_weight(j, &sched)).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    random_couple_forest(&mut coder, &mut rng, &firsts, 400, 5)
}

/// `count` distinct unordered pairs of distinct indices below `n`.
pub fn sample_pairs(n: usize, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let total = n * n.saturating_sub(1) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<usize> = sample(&mut rng, total, count.min(total)).into_vec();
    picks.sort_unstable();
    // unrank k into (i, j) with i < j, row by row
    let mut out = Vec::with_capacity(picks.len());
    let (mut i, mut row_start) = (0usize, 0usize);
    for k in picks {
        while k >= row_start + (n - 1 - i) {
            row_start += n - 1 - i;
            i += 1;
        }
        out.push((i, i + 1 + (k - row_start)));
    }
    out
}

fn tree_property(cfg: &RunConfig) -> Result<Report> {
    let mut rep = Report::new("tree-property", "schedule fuzz, slots 1 3 5, sequences of at most 5 couples");
    let seqs = couple_forest(cfg)?;
    let kinds = seqs.iter().filter(|s| s.iter().any(|c| c.parts.len() == 2)).count();
    rep.line(format!("sequences: {} ({} with paired couples)", seqs.len(), kinds));
    let pairs = sample_pairs(seqs.len(), cfg.pairs, cfg.seed);
    let shared = pairs.iter().filter(|&&(a, b)| seqs[a][0] == seqs[b][0]).count();
    let r = verify_tree_pairs(&seqs, &pairs);
    let mut c = Check::new("tree structure", "equal weights only at equal positions after equal prefixes", r.ok())
        .count("pairs", r.pairs_checked)
        .count("pairs sharing a first couple", shared)
        .count("violations", r.violations.len());
    if let Some(v) = r.violations.first() {
        c = c.note(format!("{} vs {} at {}/{}: {}", v.a, v.b, v.pos_a, v.pos_b, v.reason));
    }
    rep.push(c);
    rep.push(Check::new("sample size", "the requested number of pairs was drawn", r.pairs_checked >= cfg.pairs.min(seqs.len() * (seqs.len() - 1) / 2)));
    // the checker must notice a forged weight collision
    let forged = seqs.iter().enumerate().find_map(|(i, a)| {
        seqs.iter().enumerate().skip(i + 1).find_map(|(j, b)| {
            (a.len() >= 2 && b.len() >= 3 && a[0] == b[0] && a[1] != b[1]).then_some((i, j))
        })
    });
    if let Some((i, j)) = forged {
        let mut bad = seqs[j].clone();
        bad[2].weight = seqs[i][1].weight;
        let r = verify_tree_pairs(&[seqs[i].clone(), bad], &[(0, 1)]);
        rep.push(Check::new("detector", "a forged collision after a shared stem is reported", !r.ok()));
    }
    Ok(rep)
}

pub fn micro_ext_truncation() -> Truncation {
    Truncation { support_bound: 6, max_index: 2, budget: 5_000_000 }
}

pub fn micro_hi_truncation() -> Truncation {
    Truncation { support_bound: 3, max_index: 2, budget: 1_000_000 }
}

fn restriction_lift(_cfg: &RunConfig, restriction: bool) -> Result<Report> {
    let sched = named_schedule("micro")?;
    let ext = micro_ext_truncation();
    let hi = micro_hi_truncation();
    let s = build_stages(ExtConfig::standard(ext, 2), &sched, Coder::new(&sched, KShape::Count, 4096), 2)?;
    let mut coder = Coder::new(&sched, KShape::Count, 4096);
    let whi = generate_whi(2, hi, &sched, SetDescriptor::WmT, Variant::Convex, &mut coder)?;
    let r = check_restrict_lift(&s, &whi);
    if restriction {
        let mut rep = Report::new("restriction", format!("schedule micro, W_ex stage 2 {ext}"));
        for n in 1..s.layers.len() {
            let l = &s.layers[n];
            rep.line(format!(
                "stage {n}: U {} excluded {} D {} odd {} new in W {}",
                l.u.len(),
                l.excluded.len(),
                l.d.len(),
                l.odd.len(),
                l.w_new.len()
            ));
        }
        let mut c = Check::new("even restriction", "every f in W_ex has f restricted to the evens in the hat of W_hi", r.restrict_failures.is_empty())
            .count("functionals", r.restricted)
            .count("failures", r.restrict_failures.len());
        if let Some(e) = r.restrict_failures.first() {
            c = c.note(e.clone());
        }
        rep.push(c);
        Ok(rep)
    } else {
        let mut rep = Report::new("lift", format!("schedule micro, W_hi stage 2 {hi}, W_ex stage 2 {ext}"));
        rep.line(format!(
            "lift stages: {}",
            r.lift_stages.iter().map(|(k, v)| format!("{k}:{v}")).collect::<Vec<_>>().join(" ")
        ));
        let mut c = Check::new("lift", "every g in W_hi lifts into W_ex and restricts back to g", r.lift_failures.is_empty())
            .count("functionals", r.lifted)
            .count("failures", r.lift_failures.len());
        if let Some(e) = r.lift_failures.first() {
            c = c.note(e.clone());
        }
        rep.push(c);
        Ok(rep)
    }
}

fn push_estimates(rep: &mut Report, e: &EstimateReport) {
    rep.line(format!("{} ({})", e.title, e.truncation));
    for c in &e.checks {
        let mut ch = Check::new(&c.name, "value against bound", c.holds)
            .value("value", c.value.clone())
            .value("bound", c.bound.clone());
        if !c.required {
            ch = ch.optional();
            if !c.holds {
                ch = ch.note("reported only: the desk schedule is far from the asymptotic regime");
            }
        }
        if let Some(w) = &c.witness {
            ch = ch.certificate(w.clone());
        }
        rep.push(ch);
    }
}

fn dependent() -> Result<Report> {
    let sched = named_schedule("micro")?;
    let trunc = Truncation { support_bound: 8, max_index: 2, budget: 5_000_000 };
    let mut rep = Report::new("dependent", "schedule micro, W_hi stage 2");
    let mut coder = Coder::new(&sched, KShape::Count, 4096);
    let set = generate_whi(2, trunc, &sched, SetDescriptor::WmT, Variant::Convex, &mut coder)?;
    let dep = build_dependent_sequence(1, 2, &BasisSource::all(), &BasisSource::all(), &mut coder)?;
    let e = verify_dependent_estimates(&dep, &set)?;
    push_estimates(&mut rep, &e);
    Ok(rep)
}

fn dependent_paired() -> Result<Report> {
    let sched = named_schedule("micro")?;
    let mut rep = Report::new("dependent-paired", "schedule micro");
    // exact identities for every sequence the builder produces on the first slots
    let t = micro_ext_truncation();
    let mut s = build_stages(ExtConfig::standard(t, 0), &sched, Coder::new(&sched, KShape::Count, 1 << 20), 0)?;
    let mut built = 0;
    let mut bad = Vec::new();
    for j in [1usize, 3, 5] {
        for len in 1..=sched.n_count(j) {
            let dp = build_dependent_paired(j, len, &rat(1, 2), &BasisSource::odd(), &mut s)?;
            let f = dp.functional(&sched);
            let l = int(len as i64);
            let a = f.functional.evaluate(&dp.sum().scale(&(sched.m_rat(j) / l.clone())));
            let b = f.functional.evaluate(&dp.alternating_on(1, dp.len()).scale(&(int(1) / l)));
            built += 1;
            if a != int(2) || !b.is_zero() {
                bad.push(format!("slot {j} couples {len}: {a} and {b}"));
            }
            rep.line(format!("slot {j} couples {len}: weights {:?}", dp.hi_weights));
        }
    }
    let mut c = Check::new("identities", "F((m/L) sum) = 2 and F(L^-1 alternating) = 0", bad.is_empty())
        .count("sequences", built)
        .count("failures", bad.len());
    if let Some(e) = bad.first() {
        c = c.note(e.clone());
    }
    rep.push(c);
    // alternating-sum smallness against the special functionals of a fresh run
    let t = Truncation { support_bound: 10, max_index: 2, budget: 5_000_000 };
    let mut s = build_stages(ExtConfig::standard(t, 1), &sched, Coder::new(&sched, KShape::Count, 4096), 1)?;
    let dp = build_dependent_paired(1, 1, &rat(1, 2), &BasisSource::odd(), &mut s)?;
    for (x, f) in &dp.pairs {
        rep.line(format!("couple x = {x} f = {}", f.tree));
    }
    rep.line(format!("special functionals of weight m_1: {}", s.odd_ids().len()));
    let e = verify_extension_estimates(&dp, &s)?;
    push_estimates(&mut rep, &e);
    Ok(rep)
}

fn lsa2(args: &SuiteArgs) -> Result<Report> {
    let runs: Vec<(usize, u64)> = match (args.n, args.max) {
        (Some(n), Some(m)) => vec![(n, m)],
        (Some(n), None) => vec![(n, if n <= 2 { 20 } else { 14 })],
        (None, Some(m)) => (1..=3).map(|n| (n, m)).collect(),
        (None, None) => vec![(1, 20), (2, 20), (3, 14)],
    };
    let mut rep = Report::new("lsa2", "subsets of the even numbers up to the given maximum");
    for (n, max) in runs {
        let r = hat_equivalence_check(n, max, 1 << 12)?;
        rep.push(
            Check::new(&format!("n={n} max={max}"), "hat of S_n equals S_n^f on even sets", r.passed())
                .count("subsets", r.checked as usize)
                .count("hat not flat", r.hat_not_flat.len())
                .count("flat not hat", r.flat_not_hat.len())
                .count("greedy mismatches", r.greedy_mismatch.len()),
        );
    }
    Ok(rep)
}

/// A random tree with successive children that is valid for count families:
/// each operation gets at most `n_j` children.
pub fn random_tree<R: Rng>(rng: &mut R, sched: &ParamSchedule, lo: u64, hi: u64, depth: usize) -> TreeAnalysis {
    if depth == 0 || hi == lo || rng.gen_bool(0.25) {
        let k = rng.gen_range(lo..=hi);
        return TreeAnalysis::leaf(rng.gen_bool(0.5), k);
    }
    let j = rng.gen_range(0..=sched.max_index().min(2));
    let cap = sched.n_count(j).min((hi - lo + 1) as usize);
    let parts = rng.gen_range(1..=cap);
    // cut [lo, hi] into `parts` successive pieces
    let mut cuts: BTreeSet<u64> = BTreeSet::new();
    while cuts.len() + 1 < parts {
        cuts.insert(rng.gen_range(lo + 1..=hi));
    }
    let mut bounds = vec![lo];
    bounds.extend(cuts.iter().copied());
    bounds.push(hi + 1);
    let children = bounds.windows(2).map(|w| random_tree(rng, sched, w[0], w[1] - 1, depth - 1)).collect();
    let t = TreeAnalysis::weighted(j, children);
    if rng.gen_bool(0.2) {
        let a = rng.gen_range(lo..=hi);
        let b = rng.gen_range(a..=hi);
        return TreeAnalysis::restrict(Interval::new(a, b), t);
    }
    t
}

fn invariants(cfg: &RunConfig) -> Result<Report> {
    let sched = named_schedule("oracle2")?;
    let d = SetDescriptor::WmT;
    let e = engine(&sched, d, cfg)?;
    let mut rep = Report::new("invariants", "schedule oracle2, WmT, support [1, 6], entries -2..2");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let n = cfg.samples;
    let (mut mono, mut flips, mut sup, mut cert) = (0usize, 0usize, 0usize, 0usize);
    for _ in 0..n {
        let x = ints(&(0..6).map(|_| rng.gen_range(-2..=2)).collect::<Vec<_>>());
        let v = e.norm_value(&x)?;
        let a = rng.gen_range(1..=6);
        let b = rng.gen_range(a..=6);
        if e.norm_value(&x.restrict_interval(Interval::new(a, b)))? > v {
            mono += 1;
        }
        let flipped = SparseVector::from_pairs(x.iter().map(|(k, c)| (k, if rng.gen_bool(0.5) { -c.clone() } else { c.clone() })));
        if e.norm_value(&flipped)? != v {
            flips += 1;
        }
    }
    for _ in 0..n {
        let t = random_tree(&mut rng, &sched, 1, 6, 3);
        let f = realize_with(&t, &sched, d)?;
        if f.sup_norm() > int(1) {
            sup += 1;
        }
        let x = ints(&(0..6).map(|_| rng.gen_range(-2..=2)).collect::<Vec<_>>());
        if certify_with(&t, &x, &sched, d)? > e.norm_value(&x)? {
            cert += 1;
        }
    }
    rep.push(Check::new("bimonotone", "||Ex|| <= ||x|| for random intervals E", mono == 0).count("vectors", n).count("violations", mono));
    rep.push(Check::new("sign flips", "||x|| is unchanged by flipping signs", flips == 0).count("vectors", n).count("violations", flips));
    rep.push(Check::new("sup norm", "realized trees have sup norm at most 1", sup == 0).count("trees", n).count("violations", sup));
    rep.push(Check::new("certificates", "f(x) <= ||x|| for random valid trees", cert == 0).count("pairs", n).count("violations", cert));
    Ok(rep)
}

fn schreier_steps() -> Result<Report> {
    let cfg = SchreierVariantConfig {
        sched: named_schedule("micro")?,
        ext_trunc: micro_ext_truncation(),
        hi_trunc: micro_hi_truncation(),
        ext_stage: 2,
        hi_stage: 2,
        pool_bound: 4096,
    };
    let mut rep = Report::new("schreier-steps", format!("schedule micro, Schreier families, W_ex stage 2 {}", cfg.ext_trunc));
    let r = check_step_lemmas(&cfg)?;
    let mut c = Check::new("restriction", "even restrictions of W_ex lie in the hat of W_hi", r.restrict_failures.is_empty())
        .count("functionals", r.restricted);
    if let Some(e) = r.restrict_failures.first() {
        c = c.note(e.clone());
    }
    rep.push(c);
    let mut c = Check::new("lift", "members of W_hi lift into W_ex", r.lift_failures.is_empty())
        .count("functionals", r.lifted);
    if let Some(e) = r.lift_failures.first() {
        c = c.note(e.clone());
    }
    rep.push(c);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_unranking_covers_all_pairs() {
        let p = sample_pairs(6, 100, 3);
        assert_eq!(p.len(), 15);
        let set: BTreeSet<_> = p.iter().copied().collect();
        assert_eq!(set.len(), 15);
        assert!(p.iter().all(|&(i, j)| i < j && j < 6));
    }
}
