use std::collections::BTreeMap;

use fermat_core::morse::{
    assemble_series, check_relations, contractible_betti, parity_check, Betti, InfiniteTag, Verdict,
};
use proptest::prelude::*;

fn ledger_of(indices: &[usize], betti: &BTreeMap<usize, Betti>) -> fermat_core::morse::MorseLedger {
    let recs: Vec<_> = indices.iter().map(|&i| (i, true)).collect();
    assemble_series(&recs, betti, None)
}

#[test]
fn assembles_counts() {
    let b = contractible_betti();
    assert_eq!(ledger_of(&[0], &b).counts, BTreeMap::from([(0, 1)]));
    assert_eq!(ledger_of(&[0, 1], &b).counts, BTreeMap::from([(0, 1), (1, 1)]));
    assert!(ledger_of(&[], &b).counts.is_empty());
    let l = assemble_series(&[(0, true), (1, false)], &b, None);
    assert_eq!(l.excluded_degenerate, 1);
    assert_eq!(l.total(), 1);
    assert_eq!(l.max_degree, 2);
}

#[test]
fn worked_examples() {
    let b = contractible_betti();
    let r = check_relations(&ledger_of(&[0], &b));
    assert!(r.s.iter().all(|v| *v == Some(0)));
    assert_eq!(r.verdict, Verdict::Consistent);

    let r = check_relations(&ledger_of(&[0, 0, 1], &b));
    assert_eq!(&r.s[..2], &[Some(1), Some(0)]);
    assert_eq!(r.verdict, Verdict::Consistent);
    let s1: i64 = r.s.iter().map(|v| v.unwrap()).sum();
    assert_eq!(3, 1 + 2 * s1);
    assert_eq!(r.identity_defect, Some(0));

    let r = check_relations(&ledger_of(&[], &b));
    assert_eq!(r.s[0], Some(-1));
    assert_eq!(r.verdict, Verdict::Violated { degree: 0 });
    assert_eq!(r.below_betti, vec![0]);
}

#[test]
fn degenerate_records_downgrade_the_verdict() {
    let l = assemble_series(&[(0, true), (2, false)], &contractible_betti(), None);
    assert_eq!(check_relations(&l).verdict, Verdict::DegenerateWarning);
}

#[test]
fn infinite_betti_stops_the_recursion() {
    let betti = BTreeMap::from([(0, Betti::Finite(1)), (1, Betti::Infinite(InfiniteTag::Inf))]);
    let l = ledger_of(&[0, 1], &betti);
    let r = check_relations(&l);
    assert_eq!(r.s[0], Some(0));
    assert_eq!(r.s[1], None);
    assert_eq!(r.verdict, Verdict::Violated { degree: 1 });
    assert_eq!(r.identity_defect, None);
    let p = parity_check(&l, false);
    assert!(p.consistent);
    assert!(p.message.contains("infinitely many"));
}

#[test]
fn parity() {
    let b = contractible_betti();
    assert!(parity_check(&ledger_of(&[0], &b), true).consistent);
    assert!(!parity_check(&ledger_of(&[0, 1], &b), true).consistent);
    assert!(parity_check(&ledger_of(&[0, 1], &b), false).consistent);
    assert!(!parity_check(&ledger_of(&[0], &b), false).consistent);
}

#[test]
fn betti_serializes_as_integer_or_inf() {
    let b = BTreeMap::from([(0usize, Betti::Finite(1)), (3, Betti::Infinite(InfiniteTag::Inf))]);
    let json = serde_json::to_string(&b).unwrap();
    assert_eq!(json, r#"{"0":1,"3":"inf"}"#);
    let back: BTreeMap<usize, Betti> = serde_json::from_str(&json).unwrap();
    assert_eq!(back, b);
    assert_eq!(
        serde_json::to_string(&Verdict::Violated { degree: 2 }).unwrap(),
        r#"{"status":"violated","degree":2}"#
    );
}

fn histogram(max: u64) -> impl Strategy<Value = BTreeMap<usize, u64>> {
    prop::collection::btree_map(0usize..5, 0..=max, 0..5)
}

proptest! {
    #[test]
    fn assembly_ignores_order(mut idx in prop::collection::vec(0usize..6, 0..12), seed in any::<u64>()) {
        let b = contractible_betti();
        let a = ledger_of(&idx, &b);
        let n = idx.len();
        if n > 1 {
            idx.rotate_left((seed % n as u64) as usize);
            idx.reverse();
        }
        prop_assert_eq!(a, ledger_of(&idx, &b));
    }

    #[test]
    fn adding_a_ray_never_breaks_lower_degrees(
        idx in prop::collection::vec(0usize..5, 0..8),
        betti in histogram(3),
        extra in 0usize..5,
    ) {
        let betti: BTreeMap<usize, Betti> = betti.into_iter().map(|(k, v)| (k, Betti::Finite(v))).collect();
        let recs: Vec<_> = idx.iter().map(|&i| (i, true)).collect();
        let before = check_relations(&assemble_series(&recs, &betti, Some(6)));
        let mut more = recs.clone();
        more.push((extra, true));
        let after = check_relations(&assemble_series(&more, &betti, Some(6)));
        if before.verdict == Verdict::Consistent {
            if let Verdict::Violated { degree } = after.verdict {
                prop_assert!(degree >= extra);
            }
        }
    }
}
