//! Secondary index over record tags.
//!
//! A tree of tag types, each node owning a tree from tag value to the keys
//! that carry `(type, value)`. The type tree has one shared-exclusive lock;
//! every value tree has its own. Lock order is always type tree, then value
//! tree, and callers already hold the record's bucket lock when mutating.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Bound;
use std::sync::Arc;

use crate::lock::{LockCounters, RwLock};
use crate::rbtree::RbTree;
use crate::types::{CmpOp, Key, TagSet};

#[derive(Default)]
struct ValueTree {
    values: RbTree<i64, BTreeSet<Key>>,
    /// Set once the node has been unlinked from the type tree. Writers that
    /// raced with the unlink retry against a fresh node.
    unlinked: bool,
}

struct TypeNode {
    values: RwLock<ValueTree>,
}

/// Lock-acquisition counts for the index, split by lock level.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IndexLockStats {
    pub type_shared: u64,
    pub type_exclusive: u64,
    pub value_shared: u64,
    pub value_exclusive: u64,
}

pub struct TagIndex {
    types: RwLock<RbTree<i64, Arc<TypeNode>>>,
    value_counters: Option<Arc<LockCounters>>,
}

/// `ttype -> tvalue -> keys`, used to compare index states structurally.
pub type IndexSnapshot = BTreeMap<i64, BTreeMap<i64, BTreeSet<Key>>>;

impl TagIndex {
    pub fn new(instrument: bool) -> TagIndex {
        TagIndex {
            types: RwLock::with_counters(RbTree::new(), instrument.then(LockCounters::new)),
            value_counters: instrument.then(LockCounters::new),
        }
    }

    fn new_node(&self) -> Arc<TypeNode> {
        Arc::new(TypeNode {
            values: RwLock::with_counters(ValueTree::default(), self.value_counters.clone()),
        })
    }

    fn lookup(&self, ttype: i64) -> Option<Arc<TypeNode>> {
        self.types.read().get(&ttype).cloned()
    }

    /// Adds `key` under every tag in `tags`.
    pub fn add(&self, key: &Key, tags: &TagSet) {
        for tag in tags.iter() {
            loop {
                let node = match self.lookup(tag.ttype) {
                    Some(node) => node,
                    None => {
                        let mut types = self.types.write();
                        match types.get(&tag.ttype) {
                            Some(node) => Arc::clone(node),
                            None => {
                                let node = self.new_node();
                                types.insert(tag.ttype, Arc::clone(&node));
                                node
                            }
                        }
                    }
                };
                let mut tree = node.values.write();
                if tree.unlinked {
                    continue;
                }
                match tree.values.get_mut(&tag.tvalue) {
                    Some(keys) => {
                        keys.insert(key.clone());
                    }
                    None => {
                        tree.values.insert(tag.tvalue, BTreeSet::from([key.clone()]));
                    }
                }
                break;
            }
        }
    }

    /// Removes `key` from every tag in `tags`, pruning empty entries and
    /// empty type nodes.
    pub fn remove(&self, key: &Key, tags: &TagSet) {
        for tag in tags.iter() {
            let Some(node) = self.lookup(tag.ttype) else {
                continue;
            };
            let now_empty = {
                let mut tree = node.values.write();
                if let Some(keys) = tree.values.get_mut(&tag.tvalue) {
                    keys.remove(key);
                    if keys.is_empty() {
                        tree.values.remove(&tag.tvalue);
                    }
                }
                tree.values.is_empty() && !tree.unlinked
            };
            if now_empty {
                // Re-take both locks in order and re-check: another writer
                // may have repopulated the node in between.
                let mut types = self.types.write();
                let mut tree = node.values.write();
                if tree.values.is_empty() && !tree.unlinked {
                    tree.unlinked = true;
                    types.remove(&tag.ttype);
                }
            }
        }
    }

    /// All keys carrying any tag of `ttype`, ordered by tag value then key.
    pub fn query_type(&self, ttype: i64) -> Vec<Key> {
        let types = self.types.read();
        let Some(node) = types.get(&ttype) else {
            return Vec::new();
        };
        let tree = node.values.read();
        tree.values.values().flat_map(|keys| keys.iter().cloned()).collect()
    }

    /// Keys carrying `(ttype, x)` with `x op operand`, ordered by tag value
    /// then key. Walks only the matching part of the value tree.
    pub fn query_cmp(&self, ttype: i64, op: CmpOp, operand: i64) -> Vec<Key> {
        let types = self.types.read();
        let Some(node) = types.get(&ttype) else {
            return Vec::new();
        };
        let tree = node.values.read();
        let collect = |it: &mut dyn Iterator<Item = (&i64, &BTreeSet<Key>)>| {
            it.flat_map(|(_, keys)| keys.iter().cloned()).collect::<Vec<_>>()
        };
        match op {
            CmpOp::Eq => tree
                .values
                .get(&operand)
                .map(|keys| keys.iter().cloned().collect())
                .unwrap_or_default(),
            CmpOp::Lt => collect(&mut tree.values.range((Bound::Unbounded, Bound::Excluded(operand)))),
            CmpOp::Gt => collect(&mut tree.values.range((Bound::Excluded(operand), Bound::Unbounded))),
        }
    }

    pub fn type_count(&self) -> usize {
        self.types.read().len()
    }

    /// Full structural copy of the index.
    pub fn snapshot(&self) -> IndexSnapshot {
        let types = self.types.read();
        types
            .iter()
            .map(|(ttype, node)| {
                let tree = node.values.read();
                let values = tree
                    .values
                    .iter()
                    .map(|(v, keys)| (*v, keys.clone()))
                    .collect();
                (*ttype, values)
            })
            .collect()
    }

    pub fn lock_stats(&self) -> IndexLockStats {
        let (ts, te) = self
            .types
            .counters()
            .map_or((0, 0), |c| (c.shared(), c.exclusive()));
        let (vs, ve) = self
            .value_counters
            .as_ref()
            .map_or((0, 0), |c| (c.shared(), c.exclusive()));
        IndexLockStats {
            type_shared: ts,
            type_exclusive: te,
            value_shared: vs,
            value_exclusive: ve,
        }
    }
}
