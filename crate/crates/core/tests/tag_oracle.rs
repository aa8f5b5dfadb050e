//! Tag queries and group expiry against brute-force scans.

use std::collections::BTreeSet;

use bytes::Bytes;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tagcache_core::{CmpOp, Key, Store, StoreConfig, Tag, TagSet};

type Records = Vec<(Key, TagSet)>;

fn random_store(rng: &mut ChaCha8Rng) -> (Store, Records) {
    let store = Store::new(StoreConfig { bucket_count: 16, ..StoreConfig::default() }).unwrap();
    let n = rng.random_range(0..=300);
    let mut records = Vec::new();
    for i in 0..n {
        let key = Key::new(format!("r{i}")).unwrap();
        let tags = TagSet::from_tags(
            (0..rng.random_range(0..4)).map(|_| Tag::new(rng.random_range(0..4), rng.random_range(-5..6))),
        )
        .unwrap();
        store.put(key.clone(), Bytes::from_static(b"v"), tags.clone()).unwrap();
        records.push((key, tags));
    }
    (store, records)
}

fn brute(records: &Records, ttype: i64, op: Option<CmpOp>, operand: i64) -> BTreeSet<Key> {
    records
        .iter()
        .filter(|(_, t)| match (t.get(ttype), op) {
            (Some(v), Some(op)) => op.matches(v, operand),
            (Some(_), None) => true,
            (None, _) => false,
        })
        .map(|(k, _)| k.clone())
        .collect()
}

fn as_set(keys: Vec<Key>) -> BTreeSet<Key> {
    let n = keys.len();
    let set: BTreeSet<Key> = keys.into_iter().collect();
    assert_eq!(set.len(), n, "a key appeared twice in one result");
    set
}

#[test]
fn queries_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..200 {
        let (store, records) = random_store(&mut rng);
        for ttype in 0..5 {
            assert_eq!(as_set(store.query_type(ttype)), brute(&records, ttype, None, 0));
            for operand in [-6, -1, 0, 3, 6] {
                for op in [CmpOp::Eq, CmpOp::Lt, CmpOp::Gt] {
                    assert_eq!(
                        as_set(store.query_cmp(ttype, op, operand)),
                        brute(&records, ttype, Some(op), operand),
                        "type {ttype} {op:?} {operand}"
                    );
                }
            }
        }
    }
}

#[test]
fn expiry_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..200 {
        let (store, records) = random_store(&mut rng);
        let ttype = rng.random_range(0..4);
        let op = [CmpOp::Eq, CmpOp::Lt, CmpOp::Gt][rng.random_range(0..3)];
        let operand = rng.random_range(-5..6);
        let doomed = brute(&records, ttype, Some(op), operand);
        assert_eq!(store.expire_group(ttype, op, operand), doomed.len());
        for (k, _) in &records {
            assert_eq!(store.get(k).is_some(), !doomed.contains(k));
        }
        // The index no longer names any expired key.
        let survivors: Records = records.into_iter().filter(|(k, _)| !doomed.contains(k)).collect();
        for t in 0..4 {
            assert_eq!(as_set(store.query_type(t)), brute(&survivors, t, None, 0));
        }
    }
}

proptest! {
    #[test]
    fn replacing_tags_moves_index_entries(first in prop::collection::vec((0i64..3, -3i64..3), 0..4),
                                          second in prop::collection::vec((0i64..3, -3i64..3), 0..4)) {
        let store = Store::new(StoreConfig::default()).unwrap();
        let key = Key::new("k").unwrap();
        let a = TagSet::from_tags(first.iter().map(|&(t, v)| Tag::new(t, v))).unwrap();
        let b = TagSet::from_tags(second.iter().map(|&(t, v)| Tag::new(t, v))).unwrap();
        store.put(key.clone(), Bytes::new(), a).unwrap();
        store.put(key.clone(), Bytes::new(), b.clone()).unwrap();
        for t in 0..3 {
            let found = store.query_type(t);
            prop_assert_eq!(found.len(), usize::from(b.get(t).is_some()));
            if let Some(v) = b.get(t) {
                prop_assert_eq!(store.query_cmp(t, CmpOp::Eq, v), vec![key.clone()]);
            }
        }
        store.delete(&key);
        prop_assert!(store.index().snapshot().is_empty());
    }
}
