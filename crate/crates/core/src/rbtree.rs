//! Left-leaning red-black tree used as the ordered map inside every bucket
//! and every tag-value tree.
//!
//! The tree keeps the usual red-black guarantees (no red node has a red
//! child, every root-to-leaf path crosses the same number of black nodes),
//! so its height never exceeds `2 * log2(n + 1)`. Red links always lean
//! left, which keeps insertion and deletion short enough to write in safe
//! Rust over boxed nodes.

use std::cmp::Ordering;
use std::fmt;
use std::mem;
use std::ops::{Bound, RangeBounds};

type Link<K, V> = Option<Box<Node<K, V>>>;

struct Node<K, V> {
    key: K,
    value: V,
    red: bool,
    left: Link<K, V>,
    right: Link<K, V>,
}

impl<K, V> Node<K, V> {
    fn new(key: K, value: V) -> Box<Self> {
        Box::new(Node {
            key,
            value,
            red: true,
            left: None,
            right: None,
        })
    }
}

/// An ordered map backed by a left-leaning red-black tree.
pub struct RbTree<K, V> {
    root: Link<K, V>,
    len: usize,
}

impl<K, V> Default for RbTree<K, V> {
    fn default() -> Self {
        RbTree { root: None, len: 0 }
    }
}

fn is_red<K, V>(link: &Link<K, V>) -> bool {
    link.as_ref().is_some_and(|n| n.red)
}

fn left_left_red<K, V>(node: &Node<K, V>) -> bool {
    node.left.as_ref().is_some_and(|l| is_red(&l.left))
}

fn right_left_red<K, V>(node: &Node<K, V>) -> bool {
    node.right.as_ref().is_some_and(|r| is_red(&r.left))
}

fn rotate_left<K, V>(mut h: Box<Node<K, V>>) -> Box<Node<K, V>> {
    let mut x = h.right.take().expect("rotate_left needs a right child");
    h.right = x.left.take();
    x.red = h.red;
    h.red = true;
    x.left = Some(h);
    x
}

fn rotate_right<K, V>(mut h: Box<Node<K, V>>) -> Box<Node<K, V>> {
    let mut x = h.left.take().expect("rotate_right needs a left child");
    h.left = x.right.take();
    x.red = h.red;
    h.red = true;
    x.right = Some(h);
    x
}

fn flip_colors<K, V>(h: &mut Node<K, V>) {
    h.red = !h.red;
    if let Some(l) = h.left.as_mut() {
        l.red = !l.red;
    }
    if let Some(r) = h.right.as_mut() {
        r.red = !r.red;
    }
}

fn fix_up<K, V>(mut h: Box<Node<K, V>>) -> Box<Node<K, V>> {
    if is_red(&h.right) && !is_red(&h.left) {
        h = rotate_left(h);
    }
    if is_red(&h.left) && left_left_red(&h) {
        h = rotate_right(h);
    }
    if is_red(&h.left) && is_red(&h.right) {
        flip_colors(&mut h);
    }
    h
}

fn move_red_left<K, V>(mut h: Box<Node<K, V>>) -> Box<Node<K, V>> {
    flip_colors(&mut h);
    if right_left_red(&h) {
        let right = h.right.take().expect("move_red_left needs a right child");
        h.right = Some(rotate_right(right));
        h = rotate_left(h);
        flip_colors(&mut h);
    }
    h
}

fn move_red_right<K, V>(mut h: Box<Node<K, V>>) -> Box<Node<K, V>> {
    flip_colors(&mut h);
    if left_left_red(&h) {
        h = rotate_right(h);
        flip_colors(&mut h);
    }
    h
}

fn insert_at<K: Ord, V>(link: Link<K, V>, key: K, value: V) -> (Box<Node<K, V>>, Option<V>) {
    let mut h = match link {
        None => return (Node::new(key, value), None),
        Some(h) => h,
    };
    let old = match key.cmp(&h.key) {
        Ordering::Less => {
            let (l, old) = insert_at(h.left.take(), key, value);
            h.left = Some(l);
            old
        }
        Ordering::Greater => {
            let (r, old) = insert_at(h.right.take(), key, value);
            h.right = Some(r);
            old
        }
        Ordering::Equal => Some(mem::replace(&mut h.value, value)),
    };
    (fix_up(h), old)
}

fn remove_min_at<K, V>(mut h: Box<Node<K, V>>) -> (Link<K, V>, (K, V)) {
    if h.left.is_none() {
        // A left-leaning node without a left child has no right child either.
        debug_assert!(h.right.is_none());
        let Node { key, value, .. } = *h;
        return (None, (key, value));
    }
    if !is_red(&h.left) && !left_left_red(&h) {
        h = move_red_left(h);
    }
    let left = h.left.take().expect("left child checked above");
    let (l, kv) = remove_min_at(left);
    h.left = l;
    (Some(fix_up(h)), kv)
}

/// Removes `key`, which must be present in the subtree rooted at `h`.
fn remove_at<K: Ord, V>(mut h: Box<Node<K, V>>, key: &K) -> (Link<K, V>, V) {
    let removed;
    if *key < h.key {
        if !is_red(&h.left) && !left_left_red(&h) {
            h = move_red_left(h);
        }
        let left = h.left.take().expect("key is present in the left subtree");
        let (l, v) = remove_at(left, key);
        h.left = l;
        removed = v;
    } else {
        if is_red(&h.left) {
            h = rotate_right(h);
        }
        if *key == h.key && h.right.is_none() {
            debug_assert!(h.left.is_none());
            return (None, h.value);
        }
        if !is_red(&h.right) && !right_left_red(&h) {
            h = move_red_right(h);
        }
        if *key == h.key {
            let right = h.right.take().expect("successor exists");
            let (r, (succ_key, succ_value)) = remove_min_at(right);
            h.right = r;
            h.key = succ_key;
            removed = mem::replace(&mut h.value, succ_value);
        } else {
            let right = h.right.take().expect("key is present in the right subtree");
            let (r, v) = remove_at(right, key);
            h.right = r;
            removed = v;
        }
    }
    (Some(fix_up(h)), removed)
}

impl<K: Ord, V> RbTree<K, V> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn find(&self, key: &K) -> Option<&Node<K, V>> {
        let mut cur = self.root.as_deref();
        while let Some(node) = cur {
            cur = match key.cmp(&node.key) {
                Ordering::Less => node.left.as_deref(),
                Ordering::Greater => node.right.as_deref(),
                Ordering::Equal => return Some(node),
            };
        }
        None
    }

    pub fn get(&self, key: &K) -> Option<&V> {
        self.find(key).map(|n| &n.value)
    }

    pub fn get_mut(&mut self, key: &K) -> Option<&mut V> {
        let mut cur = self.root.as_deref_mut();
        while let Some(node) = cur {
            match key.cmp(&node.key) {
                Ordering::Less => cur = node.left.as_deref_mut(),
                Ordering::Greater => cur = node.right.as_deref_mut(),
                Ordering::Equal => return Some(&mut node.value),
            }
        }
        None
    }

    pub fn contains_key(&self, key: &K) -> bool {
        self.find(key).is_some()
    }

    /// Inserts or replaces, returning the previous value for `key`.
    pub fn insert(&mut self, key: K, value: V) -> Option<V> {
        let (mut root, old) = insert_at(self.root.take(), key, value);
        root.red = false;
        self.root = Some(root);
        if old.is_none() {
            self.len += 1;
        }
        old
    }

    pub fn remove(&mut self, key: &K) -> Option<V> {
        if !self.contains_key(key) {
            return None;
        }
        let mut root = self.root.take().expect("non-empty tree");
        if !is_red(&root.left) && !is_red(&root.right) {
            root.red = true;
        }
        let (root, removed) = remove_at(root, key);
        self.root = root.map(|mut r| {
            r.red = false;
            r
        });
        self.len -= 1;
        Some(removed)
    }

    pub fn first(&self) -> Option<(&K, &V)> {
        let mut cur = self.root.as_deref()?;
        while let Some(l) = cur.left.as_deref() {
            cur = l;
        }
        Some((&cur.key, &cur.value))
    }

    pub fn pop_first(&mut self) -> Option<(K, V)> {
        let mut root = self.root.take()?;
        if !is_red(&root.left) && !is_red(&root.right) {
            root.red = true;
        }
        let (root, kv) = remove_min_at(root);
        self.root = root.map(|mut r| {
            r.red = false;
            r
        });
        self.len -= 1;
        Some(kv)
    }

    pub fn iter(&self) -> Iter<'_, K, V> {
        self.seek(Bound::Unbounded, Bound::Unbounded)
    }

    /// In-order iteration over the keys inside `bounds`.
    pub fn range<R: RangeBounds<K>>(&self, bounds: R) -> Iter<'_, K, V>
    where
        K: Clone,
    {
        let upper = bounds.end_bound().cloned();
        self.seek(bounds.start_bound(), upper)
    }

    fn seek(&self, lower: Bound<&K>, upper: Bound<K>) -> Iter<'_, K, V> {
        let mut iter = Iter {
            stack: Vec::new(),
            upper,
        };
        // Seed the stack with the path to the first key that satisfies the
        // lower bound. Subtrees entirely below the bound are skipped.
        let mut cur = self.root.as_deref();
        while let Some(node) = cur {
            let above_lower = match lower {
                Bound::Included(k) => node.key >= *k,
                Bound::Excluded(k) => node.key > *k,
                Bound::Unbounded => true,
            };
            if above_lower {
                iter.stack.push(node);
                cur = node.left.as_deref();
            } else {
                cur = node.right.as_deref();
            }
        }
        iter
    }

    pub fn keys(&self) -> impl Iterator<Item = &K> {
        self.iter().map(|(k, _)| k)
    }

    pub fn values(&self) -> impl Iterator<Item = &V> {
        self.iter().map(|(_, v)| v)
    }

    pub fn clear(&mut self) {
        self.root = None;
        self.len = 0;
    }

    /// Number of nodes on the longest root-to-leaf path.
    pub fn height(&self) -> usize {
        fn h<K, V>(link: &Link<K, V>) -> usize {
            match link {
                None => 0,
                Some(n) => 1 + h(&n.left).max(h(&n.right)),
            }
        }
        h(&self.root)
    }

    /// Checks ordering, colouring, black balance and the cached length.
    #[doc(hidden)]
    pub fn check_invariants(&self) -> Result<(), String> {
        fn walk<K: Ord, V>(
            link: &Link<K, V>,
            lo: Option<&K>,
            hi: Option<&K>,
            parent_red: bool,
            count: &mut usize,
        ) -> Result<usize, String> {
            let Some(n) = link else { return Ok(1) };
            *count += 1;
            if lo.is_some_and(|lo| n.key <= *lo) || hi.is_some_and(|hi| n.key >= *hi) {
                return Err("keys out of order".into());
            }
            if n.red && parent_red {
                return Err("red node with red parent".into());
            }
            if is_red(&n.right) {
                return Err("right-leaning red link".into());
            }
            let lb = walk(&n.left, lo, Some(&n.key), n.red, count)?;
            let rb = walk(&n.right, Some(&n.key), hi, n.red, count)?;
            if lb != rb {
                return Err("black heights differ".into());
            }
            Ok(lb + usize::from(!n.red))
        }
        if is_red(&self.root) {
            return Err("red root".into());
        }
        let mut count = 0;
        walk(&self.root, None, None, false, &mut count)?;
        if count != self.len {
            return Err(format!("len {} but {} nodes", self.len, count));
        }
        Ok(())
    }
}

impl<K, V> Drop for RbTree<K, V> {
    fn drop(&mut self) {
        // Iterative teardown so a degenerate drop order cannot recurse deeply.
        let mut stack: Vec<Box<Node<K, V>>> = self.root.take().into_iter().collect();
        while let Some(mut n) = stack.pop() {
            stack.extend(n.left.take());
            stack.extend(n.right.take());
        }
    }
}

impl<K: Ord + fmt::Debug, V: fmt::Debug> fmt::Debug for RbTree<K, V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.iter()).finish()
    }
}

impl<K: Ord, V> FromIterator<(K, V)> for RbTree<K, V> {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        let mut tree = RbTree::new();
        for (k, v) in iter {
            tree.insert(k, v);
        }
        tree
    }
}

pub struct Iter<'a, K, V> {
    stack: Vec<&'a Node<K, V>>,
    upper: Bound<K>,
}

impl<'a, K: Ord, V> Iterator for Iter<'a, K, V> {
    type Item = (&'a K, &'a V);

    fn next(&mut self) -> Option<Self::Item> {
        let node = self.stack.pop()?;
        let in_range = match &self.upper {
            Bound::Included(k) => node.key <= *k,
            Bound::Excluded(k) => node.key < *k,
            Bound::Unbounded => true,
        };
        if !in_range {
            self.stack.clear();
            return None;
        }
        let mut cur = node.right.as_deref();
        while let Some(n) = cur {
            self.stack.push(n);
            cur = n.left.as_deref();
        }
        Some((&node.key, &node.value))
    }
}
