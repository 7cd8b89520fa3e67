//! Multi-type trees, type counts, weighted sizes and canonical keys.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_rational::Rational64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Type labels are small non-negative integers.
pub type TypeId = u32;

/// Ordered set of distinct type labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeSet {
    labels: Vec<TypeId>,
}

impl TypeSet {
    pub fn new(mut labels: Vec<TypeId>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Model("type set is empty".into()));
        }
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Model("duplicate type label".into()));
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[TypeId] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, t: TypeId) -> bool {
        self.labels.binary_search(&t).is_ok()
    }

    pub fn index_of(&self, t: TypeId) -> Option<usize> {
        self.labels.binary_search(&t).ok()
    }
}

/// Finitely supported vector of offspring counts per type.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OffspringVector(BTreeMap<TypeId, u32>);

impl OffspringVector {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn unit(t: TypeId) -> Self {
        Self::from_pairs(&[(t, 1)])
    }

    /// Zero counts are dropped so equal vectors compare equal.
    pub fn from_pairs(pairs: &[(TypeId, u32)]) -> Self {
        let mut v = Self::default();
        for &(t, k) in pairs {
            v.add(t, k);
        }
        v
    }

    pub fn add(&mut self, t: TypeId, k: u32) {
        if k > 0 {
            *self.0.entry(t).or_insert(0) += k;
        }
    }

    pub fn get(&self, t: TypeId) -> u32 {
        self.0.get(&t).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.0.values().map(|&k| k as u64).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TypeId, u32)> + '_ {
        self.0.iter().map(|(&t, &k)| (t, k))
    }

    /// Child types listed block by block in increasing type order.
    pub fn child_types(&self) -> Vec<TypeId> {
        let mut out = Vec::with_capacity(self.total() as usize);
        for (t, k) in self.iter() {
            out.extend(std::iter::repeat_n(t, k as usize));
        }
        out
    }
}

/// Non-negative per-type weights defining `|T|_γ = Σ γ_i #_i T`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GammaWeights(BTreeMap<TypeId, Rational64>);

impl GammaWeights {
    pub fn new(weights: BTreeMap<TypeId, Rational64>) -> Result<Self> {
        if weights.values().any(|w| *w < Rational64::zero()) {
            return Err(Error::Invalid("negative size weight".into()));
        }
        if weights.values().all(|w| w.is_zero()) {
            return Err(Error::Invalid("all size weights are zero".into()));
        }
        Ok(Self(weights))
    }

    pub fn from_integers(pairs: &[(TypeId, i64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(t, w)| (t, Rational64::from_integer(w))).collect())
    }

    pub fn weight(&self, t: TypeId) -> Result<Rational64> {
        self.0.get(&t).copied().ok_or(Error::UnknownType(t))
    }

    pub fn iter(&self) -> impl Iterator<Item = (TypeId, Rational64)> + '_ {
        self.0.iter().map(|(&t, &w)| (t, w))
    }
}

/// Rooted finite tree with typed vertices stored in depth-first preorder.
///
/// Vertex 0 is the root. Child lists are ordered; only the order within a
/// type block is meaningful (see [`MultiTypeTree::canonical_key`]).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TreeRepr", into = "TreeRepr")]
pub struct MultiTypeTree {
    types: Vec<TypeId>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct TreeRepr {
    types: Vec<TypeId>,
    parents: Vec<Option<usize>>,
}

impl TryFrom<TreeRepr> for MultiTypeTree {
    type Error = Error;

    fn try_from(r: TreeRepr) -> Result<Self> {
        MultiTypeTree::from_parents(r.types, r.parents)
    }
}

impl From<MultiTypeTree> for TreeRepr {
    fn from(t: MultiTypeTree) -> Self {
        TreeRepr { types: t.types, parents: t.parent }
    }
}

impl MultiTypeTree {
    pub fn single(t: TypeId) -> Self {
        Self { types: vec![t], parent: vec![None], children: vec![Vec::new()] }
    }

    /// Builds a tree from preorder types and parent indices.
    pub fn from_parents(types: Vec<TypeId>, parents: Vec<Option<usize>>) -> Result<Self> {
        if types.is_empty() || types.len() != parents.len() {
            return Err(Error::Invalid("types and parents must be non-empty and equally long".into()));
        }
        if parents[0].is_some() {
            return Err(Error::Invalid("vertex 0 must be the root".into()));
        }
        let mut children = vec![Vec::new(); types.len()];
        // The open path from the root to the previous vertex.
        let mut path: Vec<usize> = vec![0];
        for (v, p) in parents.iter().enumerate().skip(1) {
            let p = p.ok_or_else(|| Error::Invalid(format!("vertex {v} has no parent")))?;
            while path.last().is_some_and(|&top| top != p) {
                path.pop();
            }
            if path.is_empty() {
                return Err(Error::Invalid(format!("vertex {v} breaks depth-first order")));
            }
            children[p].push(v);
            path.push(v);
        }
        Ok(Self { types, parent: parents, children })
    }

    /// Trusted constructor for generators that emit vertices in preorder.
    pub(crate) fn from_preorder_unchecked(types: Vec<TypeId>, parent: Vec<Option<usize>>) -> Self {
        let mut children = vec![Vec::new(); types.len()];
        for (v, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                children[p].push(v);
            }
        }
        Self { types, parent, children }
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn type_of(&self, v: usize) -> TypeId {
        self.types[v]
    }

    pub fn types(&self) -> &[TypeId] {
        &self.types
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.children[v].is_empty()
    }

    pub fn type_counts(&self) -> BTreeMap<TypeId, usize> {
        let mut m = BTreeMap::new();
        for &t in &self.types {
            *m.entry(t).or_insert(0) += 1;
        }
        m
    }

    pub fn count_of(&self, t: TypeId) -> usize {
        self.types.iter().filter(|&&u| u == t).count()
    }

    pub fn offspring_vector(&self, v: usize) -> OffspringVector {
        let mut o = OffspringVector::empty();
        for &c in &self.children[v] {
            o.add(self.types[c], 1);
        }
        o
    }

    pub fn weighted_size(&self, gamma: &GammaWeights) -> Result<Rational64> {
        let mut total = Rational64::zero();
        for (t, k) in self.type_counts() {
            total += gamma.weight(t)? * Rational64::from_integer(k as i64);
        }
        Ok(total)
    }

    /// Number of vertices in each fringe subtree.
    pub fn subtree_sizes(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.len()];
        for v in (1..self.len()).rev() {
            let p = self.parent[v].expect("non-root vertex has a parent");
            s[p] += s[v];
        }
        s
    }

    pub fn depth(&self, mut v: usize) -> usize {
        let mut d = 0;
        while let Some(p) = self.parent[v] {
            v = p;
            d += 1;
        }
        d
    }

    /// Fringe subtree rooted at `v`; vertex `v + i` maps to vertex `i`.
    pub fn fringe(&self, v: usize) -> MultiTypeTree {
        let size = self.subtree_size(v);
        let types = self.types[v..v + size].to_vec();
        let parent = (v..v + size)
            .map(|u| if u == v { None } else { self.parent[u].map(|p| p - v) })
            .collect();
        let children = (v..v + size)
            .map(|u| self.children[u].iter().map(|c| c - v).collect())
            .collect();
        MultiTypeTree { types, parent, children }
    }

    pub fn subtree_size(&self, v: usize) -> usize {
        // Preorder: the subtree of v is the maximal run after v of deeper vertices.
        let mut end = v + 1;
        let mut stack: Vec<usize> = self.children[v].iter().rev().copied().collect();
        while let Some(u) = stack.pop() {
            end = end.max(u + 1);
            stack.extend(self.children[u].iter().rev().copied());
        }
        end - v
    }

    /// Children of `v` stably sorted by type label.
    pub fn canonical_children(&self, v: usize) -> Vec<usize> {
        let mut c = self.children[v].clone();
        c.sort_by_key(|&u| self.types[u]);
        c
    }

    /// Vertices in the depth-first order used by the canonical key.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.len());
        let mut stack = vec![0usize];
        while let Some(v) = stack.pop() {
            order.push(v);
            stack.extend(self.canonical_children(v).into_iter().rev());
        }
        order
    }

    /// Depth-first encoding of the tree with siblings stably sorted by type.
    ///
    /// Keys agree exactly when the trees differ only by interleaving sibling
    /// blocks of distinct types.
    pub fn canonical_key(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 * self.len());
        for v in self.canonical_order() {
            put_varint(&mut out, self.types[v] as u64);
            put_varint(&mut out, self.children[v].len() as u64);
        }
        out
    }

    pub fn from_key(key: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut b = TreeBuilder::new();
        // Stack of (vertex, remaining children to read).
        let mut stack: Vec<(usize, u64)> = Vec::new();
        loop {
            let t = get_varint(key, &mut pos)?;
            let k = get_varint(key, &mut pos)?;
            let t = TypeId::try_from(t).map_err(|_| Error::Invalid("type label too large".into()))?;
            let v = match stack.last_mut() {
                None => b.root(t),
                Some((p, rem)) => {
                    *rem -= 1;
                    b.child(*p, t)
                }
            };
            stack.push((v, k));
            while stack.last().is_some_and(|&(_, rem)| rem == 0) {
                stack.pop();
            }
            if stack.is_empty() {
                break;
            }
        }
        if pos != key.len() {
            return Err(Error::Invalid("trailing bytes after tree key".into()));
        }
        Ok(b.build().0)
    }

    /// Bracket notation, e.g. `1[1,2]`, with siblings in canonical order.
    pub fn display(&self) -> String {
        self.display_marked(None)
    }

    fn display_marked(&self, mark: Option<usize>) -> String {
        fn rec(t: &MultiTypeTree, v: usize, mark: Option<usize>, out: &mut String) {
            let _ = write!(out, "{}", t.types[v]);
            if mark == Some(v) {
                out.push('*');
            }
            let kids = t.canonical_children(v);
            if !kids.is_empty() {
                out.push('[');
                for (i, &c) in kids.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    rec(t, c, mark, out);
                }
                out.push(']');
            }
        }
        let mut s = String::new();
        if self.depth_exceeds(4096) {
            // Deep trees fall back to the byte key to avoid deep recursion.
            for b in self.canonical_key() {
                let _ = write!(s, "{b:02x}");
            }
            return s;
        }
        rec(self, 0, mark, &mut s);
        s
    }

    fn depth_exceeds(&self, limit: usize) -> bool {
        let mut depth = vec![0usize; self.len()];
        for v in 1..self.len() {
            depth[v] = depth[self.parent[v].unwrap()] + 1;
            if depth[v] > limit {
                return true;
            }
        }
        false
    }
}

/// Incremental tree construction in arbitrary order; [`TreeBuilder::build`]
/// re-indexes to depth-first preorder.
#[derive(Clone, Debug, Default)]
pub struct TreeBuilder {
    types: Vec<TypeId>,
    children: Vec<Vec<usize>>,
}

impl TreeBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self { types: Vec::with_capacity(n), children: Vec::with_capacity(n) }
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    /// Adds the root; must be the first vertex.
    pub fn root(&mut self, t: TypeId) -> usize {
        debug_assert!(self.types.is_empty());
        self.types.push(t);
        self.children.push(Vec::new());
        0
    }

    pub fn child(&mut self, parent: usize, t: TypeId) -> usize {
        let id = self.types.len();
        self.types.push(t);
        self.children.push(Vec::new());
        self.children[parent].push(id);
        id
    }

    /// Copies `sub` below `parent` and returns the ids of its vertices.
    pub fn graft(&mut self, parent: usize, sub: &MultiTypeTree) -> Vec<usize> {
        let mut ids = vec![0usize; sub.len()];
        ids[0] = self.child(parent, sub.type_of(0));
        for v in 1..sub.len() {
            ids[v] = self.child(ids[sub.parent(v).unwrap()], sub.type_of(v));
        }
        ids
    }

    pub fn type_at(&self, v: usize) -> TypeId {
        self.types[v]
    }

    pub fn set_type(&mut self, v: usize, t: TypeId) {
        self.types[v] = t;
    }

    /// Returns the tree and the map from builder ids to preorder indices.
    pub fn build(self) -> (MultiTypeTree, Vec<usize>) {
        let n = self.types.len();
        let mut new_id = vec![usize::MAX; n];
        let mut types = Vec::with_capacity(n);
        let mut parent = Vec::with_capacity(n);
        let mut stack: Vec<(usize, Option<usize>)> = vec![(0, None)];
        while let Some((v, p)) = stack.pop() {
            new_id[v] = types.len();
            types.push(self.types[v]);
            parent.push(p);
            let me = new_id[v];
            stack.extend(self.children[v].iter().rev().map(|&c| (c, Some(me))));
        }
        let mut children = vec![Vec::new(); types.len()];
        for (v, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                children[p].push(v);
            }
        }
        (MultiTypeTree { types, parent, children }, new_id)
    }
}

/// A tree with a distinguished vertex.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointedTree {
    pub tree: MultiTypeTree,
    pub mark: usize,
}

impl PointedTree {
    pub fn new(tree: MultiTypeTree, mark: usize) -> Result<Self> {
        if mark >= tree.len() {
            return Err(Error::Invalid(format!("mark {mark} outside tree of size {}", tree.len())));
        }
        Ok(Self { tree, mark })
    }

    /// Canonical tree key followed by the mark's canonical preorder position.
    pub fn canonical_key(&self) -> Vec<u8> {
        let order = self.tree.canonical_order();
        let pos = order.iter().position(|&v| v == self.mark).expect("mark is a vertex");
        let mut key = self.tree.canonical_key();
        put_varint(&mut key, pos as u64);
        key
    }

    pub fn display(&self) -> String {
        self.tree.display_marked(Some(self.mark))
    }
}

pub(crate) fn put_varint(out: &mut Vec<u8>, mut x: u64) {
    loop {
        let byte = (x & 0x7f) as u8;
        x >>= 7;
        if x == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

pub(crate) fn get_varint(buf: &[u8], pos: &mut usize) -> Result<u64> {
    let mut x = 0u64;
    let mut shift = 0;
    loop {
        let b = *buf.get(*pos).ok_or_else(|| Error::Invalid("truncated key".into()))?;
        *pos += 1;
        if shift >= 64 {
            return Err(Error::Invalid("varint overflow".into()));
        }
        x |= ((b & 0x7f) as u64) << shift;
        if b & 0x80 == 0 {
            return Ok(x);
        }
        shift += 7;
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    fn root_with(kids: &[TypeId]) -> MultiTypeTree {
        let mut b = TreeBuilder::new();
        let r = b.root(1);
        for &k in kids {
            b.child(r, k);
        }
        b.build().0
    }

    #[test]
    fn counts_of_small_trees() {
        assert_eq!(MultiTypeTree::single(1).type_counts(), BTreeMap::from([(1, 1)]));
        assert_eq!(root_with(&[3, 3]).type_counts(), BTreeMap::from([(1, 1), (3, 2)]));
    }

    #[test]
    fn weighted_sizes() {
        let g = GammaWeights::from_integers(&[(1, 1), (2, 0), (3, 0), (4, 0)]).unwrap();
        assert_eq!(root_with(&[1, 1, 1, 1]).weighted_size(&g).unwrap(), Rational64::from_integer(5));
        // counts (2,1,3,0) under γ = (1,0,1,1)
        let g = GammaWeights::from_integers(&[(1, 1), (2, 0), (3, 1), (4, 1)]).unwrap();
        let t = root_with(&[1, 2, 3, 3, 3]);
        assert_eq!(t.weighted_size(&g).unwrap(), Rational64::from_integer(5));
        let g = GammaWeights::from_integers(&[(1, 1)]).unwrap();
        assert!(matches!(t.weighted_size(&g), Err(Error::UnknownType(2))));
    }

    #[test]
    fn inter_type_order_is_quotiented() {
        assert_eq!(MultiTypeTree::single(2).canonical_key(), MultiTypeTree::single(2).canonical_key());
        assert_eq!(root_with(&[3, 1]).canonical_key(), root_with(&[1, 3]).canonical_key());
    }

    #[test]
    fn within_type_order_is_kept() {
        let mut b = TreeBuilder::new();
        let r = b.root(1);
        let a = b.child(r, 3);
        b.child(a, 2);
        b.child(r, 3);
        let t1 = b.build().0;
        let mut b = TreeBuilder::new();
        let r = b.root(1);
        b.child(r, 3);
        let a = b.child(r, 3);
        b.child(a, 2);
        let t2 = b.build().0;
        assert_ne!(t1.canonical_key(), t2.canonical_key());
    }

    #[test]
    fn preorder_validation() {
        assert!(MultiTypeTree::from_parents(vec![1, 1, 1], vec![None, Some(0), Some(0)]).is_ok());
        assert!(MultiTypeTree::from_parents(vec![1, 1, 1, 1], vec![None, Some(0), Some(0), Some(1)]).is_err());
        assert!(MultiTypeTree::from_parents(vec![1, 1], vec![Some(0), None]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let t = root_with(&[2, 1, 3]);
        let s = serde_json::to_string(&t).unwrap();
        assert!(!s.contains('\n'));
        let back: MultiTypeTree = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn fringe_extracts_subtree() {
        let mut b = TreeBuilder::new();
        let r = b.root(1);
        let a = b.child(r, 1);
        b.child(a, 2);
        b.child(r, 2);
        let t = b.build().0;
        assert_eq!(t.fringe(1).display(), "1[2]");
        assert_eq!(t.subtree_sizes(), vec![4, 2, 1, 1]);
        assert_eq!(t.subtree_size(1), 2);
    }

    /// Random tree from a preorder parent sequence.
    pub(crate) fn arb_tree(max: usize) -> impl Strategy<Value = MultiTypeTree> {
        prop::collection::vec((0usize..1000, 1u32..4), 0..max).prop_map(|spec| {
            let mut b = TreeBuilder::new();
            b.root(1);
            for (i, (p, t)) in spec.into_iter().enumerate() {
                b.child(p % (i + 1), t);
            }
            b.build().0
        })
    }

    fn shuffle_across_types(t: &MultiTypeTree, seed: u64) -> MultiTypeTree {
        // Interleave type blocks pseudo-randomly while keeping within-type order.
        let mut b = TreeBuilder::new();
        let mut ids = vec![0usize; t.len()];
        ids[0] = b.root(t.type_of(0));
        let mut s = seed;
        for v in 0..t.len() {
            let mut blocks: BTreeMap<TypeId, std::collections::VecDeque<usize>> = BTreeMap::new();
            for &c in t.children(v) {
                blocks.entry(t.type_of(c)).or_default().push_back(c);
            }
            while blocks.values().any(|q| !q.is_empty()) {
                let keys: Vec<TypeId> = blocks.iter().filter(|(_, q)| !q.is_empty()).map(|(&k, _)| k).collect();
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let k = keys[(s >> 33) as usize % keys.len()];
                let c = blocks.get_mut(&k).unwrap().pop_front().unwrap();
                ids[c] = b.child(ids[v], t.type_of(c));
            }
        }
        b.build().0
    }

    proptest! {
        #[test]
        fn counts_sum_to_size(t in arb_tree(60)) {
            prop_assert_eq!(t.type_counts().values().sum::<usize>(), t.len());
        }

        #[test]
        fn key_round_trip(t in arb_tree(60)) {
            let back = MultiTypeTree::from_key(&t.canonical_key()).unwrap();
            prop_assert_eq!(back.canonical_key(), t.canonical_key());
        }

        #[test]
        fn key_ignores_type_interleaving(t in arb_tree(60), seed in any::<u64>()) {
            prop_assert_eq!(shuffle_across_types(&t, seed).canonical_key(), t.canonical_key());
        }

        #[test]
        fn key_sees_within_type_swaps(t in arb_tree(60)) {
            // Swapping two same-type siblings with different subtrees changes the key.
            for v in 0..t.len() {
                let kids = t.children(v);
                for i in 0..kids.len() {
                    for j in i + 1..kids.len() {
                        let (a, c) = (kids[i], kids[j]);
                        if t.type_of(a) != t.type_of(c) || t.fringe(a).canonical_key() == t.fringe(c).canonical_key() {
                            continue;
                        }
                        let mut b = TreeBuilder::new();
                        let mut ids = vec![0usize; t.len()];
                        ids[0] = b.root(t.type_of(0));
                        for u in 0..t.len() {
                            let mut order = t.children(u).to_vec();
                            if u == v {
                                order.swap(i, j);
                            }
                            for c in order {
                                ids[c] = b.child(ids[u], t.type_of(c));
                            }
                        }
                        prop_assert_ne!(b.build().0.canonical_key(), t.canonical_key());
                        return Ok(());
                    }
                }
            }
        }

        #[test]
        fn gamma_matches_counts(t in arb_tree(60)) {
            let g = GammaWeights::from_integers(&[(1, 0), (2, 0), (3, 1), (4, 1)]).unwrap();
            let c = t.type_counts();
            let expect = c.get(&3).copied().unwrap_or(0) + c.get(&4).copied().unwrap_or(0);
            prop_assert_eq!(t.weighted_size(&g).unwrap(), Rational64::from_integer(expect as i64));
        }
    }
}
