use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hiext::cli::suites::random_tree;
use hiext::coding::{Coder, KShape};
use hiext::extension::{build_stages, ExtConfig};
use hiext::families::{member, FamilyDescriptor};
use hiext::hi_core::Truncation;
use hiext::mt_norm::{named_schedule, NormEngine, ParamSchedule, SetDescriptor};
use hiext::ratvec::{int, Interval, SparseVector};
use hiext::tree::{certify_with, normalize, realize_with};

fn oracle2() -> ParamSchedule {
    named_schedule("oracle2").unwrap()
}

fn vec6() -> impl Strategy<Value = SparseVector> {
    prop::collection::vec(-2i64..=2, 6).prop_map(|v| {
        let pairs: Vec<(u64, i64)> = v.iter().enumerate().map(|(k, &a)| (k as u64 + 1, a)).collect();
        SparseVector::from_ints(&pairs)
    })
}

fn rational_vec() -> impl Strategy<Value = SparseVector> {
    prop::collection::btree_map(1u64..30, (-9i64..=9, 1i64..=6), 0..8).prop_map(|m| {
        SparseVector::from_pairs(m.into_iter().map(|(k, (p, q))| (k, hiext::ratvec::rat(p, q))))
    })
}

fn sorted_set() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::btree_set(1u64..40, 0..8).prop_map(|s| s.into_iter().collect())
}

fn families() -> Vec<FamilyDescriptor> {
    let mut out = Vec::new();
    for n in 1..=3 {
        out.push(FamilyDescriptor::an(n));
        out.push(FamilyDescriptor::schreier(n));
        out.push(FamilyDescriptor::flat(n));
    }
    out
}

proptest! {
    #[test]
    fn families_are_hereditary(set in sorted_set(), drop in any::<u8>()) {
        let sub: Vec<u64> = set.iter().enumerate().filter(|(i, _)| drop >> (i % 8) & 1 == 0).map(|(_, &x)| x).collect();
        for d in families() {
            if member(&d, &set) {
                prop_assert!(member(&d, &sub), "{d} {set:?} {sub:?}");
            }
        }
    }

    #[test]
    fn families_are_spreading(set in sorted_set(), shifts in prop::collection::vec(0u64..5, 8)) {
        // push each element right while keeping the order
        let mut spread = Vec::with_capacity(set.len());
        let mut prev = 0;
        for (i, &x) in set.iter().enumerate() {
            let y = (x + shifts[i]).max(prev + 1);
            spread.push(y);
            prev = y;
        }
        for d in families() {
            if member(&d, &set) {
                prop_assert!(member(&d, &spread), "{d} {set:?} {spread:?}");
            }
        }
    }

    #[test]
    fn hat_round_trip_and_action(g in rational_vec(), x in rational_vec()) {
        let h = g.hat();
        prop_assert!(h.iter().all(|(k, _)| k % 2 == 0));
        prop_assert_eq!(h.unhat(), g.clone());
        prop_assert_eq!(h.evaluate(&x.hat()), g.evaluate(&x));
    }

    #[test]
    fn restriction_is_self_adjoint(f in rational_vec(), x in rational_vec(), a in 1u64..30, len in 0u64..30) {
        let e = Interval::new(a, a + len);
        prop_assert_eq!(f.restrict_interval(e).evaluate(&x), f.evaluate(&x.restrict_interval(e)));
    }

    #[test]
    fn norm_is_bimonotone(x in vec6(), a in 1u64..=6, b in 1u64..=6) {
        let (a, b) = (a.min(b), a.max(b));
        let e = NormEngine::new(oracle2(), SetDescriptor::WmT);
        prop_assert!(e.norm_value(&x.restrict_interval(Interval::new(a, b))).unwrap() <= e.norm_value(&x).unwrap());
    }

    #[test]
    fn norm_ignores_signs(x in vec6(), flips in any::<u8>()) {
        let e = NormEngine::new(oracle2(), SetDescriptor::WmT);
        let y = SparseVector::from_pairs(x.iter().map(|(k, c)| (k, if flips >> (k - 1) & 1 == 1 { -c.clone() } else { c.clone() })));
        prop_assert_eq!(e.norm_value(&y).unwrap(), e.norm_value(&x).unwrap());
    }

    #[test]
    fn trees_realize_into_the_unit_ball(seed in any::<u64>()) {
        let sched = oracle2();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_tree(&mut rng, &sched, 1, 6, 3);
        let f = realize_with(&t, &sched, SetDescriptor::WmT).unwrap();
        prop_assert!(f.sup_norm() <= int(1), "{t} realizes {f}");
    }

    #[test]
    fn certificates_never_exceed_the_norm(seed in any::<u64>(), x in vec6()) {
        let sched = oracle2();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_tree(&mut rng, &sched, 1, 6, 3);
        let e = NormEngine::new(sched.clone(), SetDescriptor::WmT);
        prop_assert!(certify_with(&t, &x, &sched, SetDescriptor::WmT).unwrap() <= e.norm_value(&x).unwrap());
    }

    #[test]
    fn normalize_keeps_the_functional(seed in any::<u64>()) {
        let sched = oracle2();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_tree(&mut rng, &sched, 1, 6, 4);
        let n = normalize(&t, &sched, SetDescriptor::WmT).unwrap();
        prop_assert_eq!(realize_with(&n, &sched, SetDescriptor::WmT).unwrap(), realize_with(&t, &sched, SetDescriptor::WmT).unwrap());
    }

    #[test]
    fn norm_certificate_attains_the_norm(x in vec6()) {
        let sched = oracle2();
        let r = NormEngine::new(sched.clone(), SetDescriptor::WmT).norm(&x).unwrap();
        prop_assert_eq!(certify_with(&r.certificate, &x, &sched, SetDescriptor::WmT).unwrap(), r.value.clone());
        prop_assert!(r.value >= x.sup_norm());
        prop_assert!(r.value <= x.l1_norm());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cache_is_transparent(xs in prop::collection::vec(vec6(), 1..6)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("norms.log");
        let plain = NormEngine::new(oracle2(), SetDescriptor::WmT);
        let cold = NormEngine::new(oracle2(), SetDescriptor::WmT).with_cache(&path).unwrap();
        let first: Vec<_> = xs.iter().map(|x| cold.norm_value(x).unwrap()).collect();
        drop(cold);
        let warm = NormEngine::new(oracle2(), SetDescriptor::WmT).with_cache(&path).unwrap();
        for (x, v) in xs.iter().zip(&first) {
            prop_assert_eq!(&plain.norm_value(x).unwrap(), v);
            prop_assert_eq!(&warm.norm_value(x).unwrap(), v);
        }
    }
}

#[test]
fn arena_trees_realize_to_their_vectors() {
    let sched = named_schedule("micro").unwrap();
    let t = Truncation { support_bound: 5, max_index: 2, budget: 1_000_000 };
    let cfg = ExtConfig::standard(t, 2);
    let s = build_stages(cfg, &sched, Coder::new(&sched, KShape::Count, 4096), 2).unwrap();
    assert!(s.arena.len() > 100);
    for id in s.arena.ids() {
        let tree = s.arena.tree(id);
        let f = realize_with(&tree, &sched, cfg.ext_desc).unwrap();
        assert_eq!(f, s.arena.vector(id), "{tree}");
    }
}
