//! Limit objects of fringe convergence: κ-biased stopped trees, truncated
//! sin-trees with a backwards growing spine, and their type mixtures.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{Num, One, Signed, Zero};
use rand::Rng as _;
use serde::Serialize;

use crate::enumerate::trees_up_to;
use crate::error::{Error, Result};
use crate::model::{ratio_to_f64, OffspringLaw, OffspringModel};
use crate::rng::Rng;
use crate::sampler::{sample_stopped_with, RootLaw, SampleOptions};
use crate::tree::{MultiTypeTree, OffspringVector, PointedTree, TreeBuilder, TypeId};

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve<T: Clone + Num + Signed + PartialOrd>(mut a: Vec<Vec<T>>, mut b: Vec<Vec<T>>) -> Option<Vec<Vec<T>>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col].is_zero() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col].clone() / a[col][col].clone();
            for c in col..n {
                let v = f.clone() * a[col][c].clone();
                a[r][c] = a[r][c].clone() - v;
            }
            for c in 0..b[r].len() {
                let v = f.clone() * b[col][c].clone();
                b[r][c] = b[r][c].clone() - v;
            }
        }
    }
    for r in 0..n {
        let d = a[r][r].clone();
        for v in &mut b[r] {
            *v = v.clone() / d.clone();
        }
    }
    Some(b)
}

/// Expected type counts of stopped subtrees.
///
/// Row `i` of `below` holds the expected counts of the stopped subtree grown
/// from a non-root vertex of type `labels[i]`; `root` holds `E[#_j T^κ]`.
#[derive(Clone, Debug)]
struct StoppedMeans<T> {
    below: Vec<Vec<T>>,
    root: Vec<T>,
}

fn stopped_means<T: Clone + Num + Signed + PartialOrd>(
    labels: &[TypeId],
    mean: &[Vec<T>],
    kappa: TypeId,
) -> Result<StoppedMeans<T>> {
    let d = labels.len();
    let k = labels.iter().position(|&t| t == kappa).ok_or(Error::UnknownType(kappa))?;
    let others: Vec<usize> = (0..d).filter(|&i| i != k).collect();
    let unit = |i: usize| -> Vec<T> { (0..d).map(|j| if i == j { T::one() } else { T::zero() }).collect() };
    // (I − M_NN) G_N = E_N + M_Nκ e_κ
    let a: Vec<Vec<T>> = others
        .iter()
        .map(|&i| {
            others
                .iter()
                .map(|&j| if i == j { T::one() - mean[i][j].clone() } else { T::zero() - mean[i][j].clone() })
                .collect()
        })
        .collect();
    let b: Vec<Vec<T>> = others
        .iter()
        .map(|&i| {
            let mut row = unit(i);
            row[k] = row[k].clone() + mean[i][k].clone();
            row
        })
        .collect();
    let g = solve(a, b).ok_or_else(|| Error::Model("stopped trees have infinite expected size".into()))?;
    let mut below = vec![Vec::new(); d];
    for (r, &i) in others.iter().enumerate() {
        if g[r].iter().any(|v| v.is_negative()) {
            return Err(Error::Model("stopped trees have infinite expected size".into()));
        }
        below[i] = g[r].clone();
    }
    below[k] = unit(k);
    let mut root = unit(k);
    for l in 0..d {
        for (j, r) in root.iter_mut().enumerate() {
            *r = r.clone() + mean[k][l].clone() * below[l][j].clone();
        }
    }
    Ok(StoppedMeans { below, root })
}

/// `p(γ) = E[#_γ T^κ]` for every type, computed exactly.
pub fn expected_stopped_counts(model: &OffspringModel, kappa: TypeId) -> Result<BTreeMap<TypeId, BigRational>> {
    let labels = model.types().labels().to_vec();
    let s = stopped_means(&labels, &model.mean_matrix_exact()?, kappa)?;
    Ok(labels.into_iter().zip(s.root).collect())
}

/// Floating-point version of [`expected_stopped_counts`] that also accepts
/// real-parameter laws.
pub fn expected_stopped_counts_f64(model: &OffspringModel, kappa: TypeId) -> Result<BTreeMap<TypeId, f64>> {
    let labels = model.types().labels().to_vec();
    let s = stopped_means(&labels, &model.mean_matrix_f64(), kappa)?;
    Ok(labels.into_iter().zip(s.root).collect())
}

/// Checks `E[#_κ T^κ] = 2`: exactly for rational laws, to 1e-9 otherwise.
pub fn check_critical(model: &OffspringModel, kappa: TypeId) -> Result<()> {
    if model.is_exact() {
        let p = expected_stopped_counts(model, kappa)?.remove(&kappa).expect("kappa is a type");
        if p != BigRational::from_integer(2.into()) {
            return Err(Error::Model(format!("E[#_κ T^κ] = {p}, the κ-branching is not critical")));
        }
    } else {
        let p = expected_stopped_counts_f64(model, kappa)?[&kappa];
        if (p - 2.0).abs() >= 1e-9 {
            return Err(Error::Model(format!("E[#_κ T^κ] = {p}, the κ-branching is not critical")));
        }
    }
    Ok(())
}

/// A stopped tree with a marked non-root vertex of the biased type.
#[derive(Clone, Debug, Serialize)]
pub struct BiasedStoppedTree {
    pub tree: MultiTypeTree,
    pub mark: usize,
}

/// How [`sample_biased_stopped`] realises the size bias.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BiasMethod {
    /// Rejection when the number of eligible vertices is bounded by a small
    /// constant, the spine construction otherwise.
    Auto,
    Rejection,
    Spine,
}

/// Precomputed data for drawing κ-biased (or γ-biased) stopped trees.
#[derive(Clone, Debug)]
pub struct BiasedStoppedSampler {
    model: OffspringModel,
    kappa: TypeId,
    target: TypeId,
    /// Expected eligible vertices in the stopped subtree of a non-root vertex.
    h: BTreeMap<TypeId, f64>,
    mean: BTreeMap<TypeId, BTreeMap<TypeId, f64>>,
    bound: Option<u64>,
    method: BiasMethod,
    budget: u64,
}

const REJECTION_BOUND_LIMIT: u64 = 64;

impl BiasedStoppedSampler {
    /// `gamma = None` (or `Some(kappa)`) gives the κ-biased tree; otherwise the
    /// mark is a uniformly chosen vertex of type γ.
    pub fn new(model: &OffspringModel, kappa: TypeId, gamma: Option<TypeId>, method: BiasMethod) -> Result<Self> {
        let labels = model.types().labels().to_vec();
        let target = gamma.unwrap_or(kappa);
        if !model.types().contains(target) {
            return Err(Error::UnknownType(target));
        }
        let (below, norm) = if model.is_exact() {
            let s = stopped_means(&labels, &model.mean_matrix_exact()?, kappa)?;
            let below: Vec<Vec<f64>> = s.below.iter().map(|r| r.iter().map(ratio_to_f64).collect()).collect();
            (below, s.root.iter().map(ratio_to_f64).collect::<Vec<_>>())
        } else {
            let s = stopped_means(&labels, &model.mean_matrix_f64(), kappa)?;
            (s.below, s.root)
        };
        let ti = labels.iter().position(|&t| t == target).expect("checked above");
        if target == kappa {
            check_critical(model, kappa)?;
        } else if !(norm[ti] > 0.0 && norm[ti].is_finite()) {
            return Err(Error::Model(format!("E[#_{target} T^{kappa}] must be positive and finite")));
        }
        let h = labels.iter().enumerate().map(|(i, &t)| (t, below[i][ti])).collect();
        let mm = model.mean_matrix_f64();
        let mean = labels
            .iter()
            .enumerate()
            .map(|(i, &a)| (a, labels.iter().enumerate().map(|(j, &b)| (b, mm[i][j])).collect()))
            .collect();
        let bound = eligible_bound(model, kappa, target);
        let method = match method {
            BiasMethod::Auto if bound.is_some_and(|b| b <= REJECTION_BOUND_LIMIT) => BiasMethod::Rejection,
            BiasMethod::Auto => BiasMethod::Spine,
            BiasMethod::Rejection if bound.is_none() => {
                return Err(Error::Invalid("rejection needs a finite bound on the number of eligible vertices".into()))
            }
            m => m,
        };
        Ok(Self { model: model.clone(), kappa, target, h, mean, bound, method, budget: 1_000_000 })
    }

    pub fn method(&self) -> BiasMethod {
        self.method
    }

    fn eligible(&self, t: TypeId, is_root: bool) -> bool {
        !is_root && t == self.target
    }

    pub fn sample(&self, rng: &mut Rng, opts: &SampleOptions) -> Result<BiasedStoppedTree> {
        match self.method {
            BiasMethod::Rejection => self.sample_rejection(rng, opts),
            _ => self.sample_spine(rng, opts),
        }
    }

    fn sample_rejection(&self, rng: &mut Rng, opts: &SampleOptions) -> Result<BiasedStoppedTree> {
        let bound = self.bound.expect("rejection needs a bound") as f64;
        let root = RootLaw::Fixed(self.kappa);
        for _ in 0..self.budget {
            let t = sample_stopped_with(&self.model, self.kappa, &root, rng, opts)?;
            let elig: Vec<usize> = (1..t.len()).filter(|&v| self.eligible(t.type_of(v), false)).collect();
            if rng.random::<f64>() * bound < elig.len() as f64 {
                let mark = elig[rng.random_range(0..elig.len())];
                return Ok(BiasedStoppedTree { tree: t, mark });
            }
        }
        Err(Error::BudgetExhausted { attempts: self.budget, accepted: 0, rate: 0.0 })
    }

    /// Grows the path from the root to the mark with offspring laws tilted by
    /// the expected number of eligible descendants; everything hanging off the
    /// path is an ordinary stopped subtree.
    fn sample_spine(&self, rng: &mut Rng, opts: &SampleOptions) -> Result<BiasedStoppedTree> {
        let mut b = TreeBuilder::new();
        let mut cur = b.root(self.kappa);
        let mut is_root = true;
        let mut pending = Vec::new();
        let mark = loop {
            let t = b.type_at(cur);
            if !is_root && t == self.kappa {
                // Non-root κ-vertices are leaves; only reachable as the mark.
                break cur;
            }
            if self.eligible(t, is_root) && rng.random::<f64>() * self.h[&t] < 1.0 {
                break cur;
            }
            let weights: Vec<(TypeId, f64)> =
                self.mean[&t].iter().map(|(&c, &m)| (c, m * self.h[&c])).filter(|&(_, w)| w > 0.0).collect();
            let total: f64 = weights.iter().map(|w| w.1).sum();
            let mut u = rng.random::<f64>() * total;
            let mut via = weights.last().ok_or_else(|| Error::Model("no eligible descendants".into()))?.0;
            for &(c, w) in &weights {
                if u < w {
                    via = c;
                    break;
                }
                u -= w;
            }
            let omega = size_biased_draw(self.model.law(t)?, via, rng)?;
            let spine_pos = rng.random_range(0..omega.get(via));
            let mut seen = 0;
            let mut next = None;
            for c in omega.child_types() {
                let id = b.child(cur, c);
                if c == via {
                    if seen == spine_pos {
                        next = Some(id);
                    } else {
                        pending.push(id);
                    }
                    seen += 1;
                } else {
                    pending.push(id);
                }
            }
            cur = next.expect("spine child exists");
            is_root = false;
            if b.len() > opts.cap {
                return Err(Error::PossiblyNonExtinct { cap: opts.cap });
            }
        };
        for v in pending {
            grow_into(&mut b, v, &self.model, Some(self.kappa), rng, opts)?;
        }
        let (tree, map) = b.build();
        Ok(BiasedStoppedTree { tree, mark: map[mark] })
    }
}

/// Draws an offspring vector with probability proportional to
/// `P(ω) · ω_via`.
fn size_biased_draw(law: &OffspringLaw, via: TypeId, rng: &mut Rng) -> Result<OffspringVector> {
    match law {
        OffspringLaw::Finite(f) => {
            let w: Vec<f64> = f.atoms().iter().map(|(v, p)| ratio_to_f64(p) * v.get(via) as f64).collect();
            let total: f64 = w.iter().sum();
            let mut u = rng.random::<f64>() * total;
            for (i, wi) in w.iter().enumerate() {
                if u < *wi {
                    return Ok(f.atoms()[i].0.clone());
                }
                u -= wi;
            }
            let i = w.iter().rposition(|&x| x > 0.0).ok_or_else(|| Error::Model("no atom has the spine type".into()))?;
            Ok(f.atoms()[i].0.clone())
        }
        OffspringLaw::Geometric(g) if g.child == via => {
            // k·(1−s)^{k−1}·s² is one plus a sum of two geometric counts.
            let k = 1 + g.sample_count(rng) + g.sample_count(rng);
            let k = u32::try_from(k).map_err(|_| Error::Overflow("geometric count"))?;
            Ok(OffspringVector::from_pairs(&[(via, k)]))
        }
        OffspringLaw::Geometric(_) => Err(Error::Model(format!("type {via} cannot be a child here"))),
        OffspringLaw::Custom(_) => Err(Error::NotExact("size-biased draws from a real-parameter law".into())),
    }
}

/// Largest possible number of eligible vertices in `T^κ`, if finite.
fn eligible_bound(model: &OffspringModel, kappa: TypeId, target: TypeId) -> Option<u64> {
    fn below(
        model: &OffspringModel,
        t: TypeId,
        kappa: TypeId,
        target: TypeId,
        memo: &mut BTreeMap<TypeId, Option<u64>>,
        active: &mut Vec<TypeId>,
    ) -> Option<u64> {
        if t == kappa {
            return Some((target == kappa) as u64);
        }
        if let Some(v) = memo.get(&t) {
            return *v;
        }
        if active.contains(&t) {
            return None;
        }
        active.push(t);
        let r = children_bound(model, t, kappa, target, memo, active).map(|c| c + (t == target) as u64);
        active.pop();
        memo.insert(t, r);
        r
    }
    fn children_bound(
        model: &OffspringModel,
        t: TypeId,
        kappa: TypeId,
        target: TypeId,
        memo: &mut BTreeMap<TypeId, Option<u64>>,
        active: &mut Vec<TypeId>,
    ) -> Option<u64> {
        let law = model.law(t).ok()?;
        match law {
            OffspringLaw::Finite(f) => {
                let mut best = 0u64;
                for (v, _) in f.atoms() {
                    let mut s = 0u64;
                    for (c, k) in v.iter() {
                        s = s.checked_add((k as u64).checked_mul(below(model, c, kappa, target, memo, active)?)?)?;
                    }
                    best = best.max(s);
                }
                Some(best)
            }
            _ => {
                let mut s = 0u64;
                for c in law.child_types() {
                    let b = below(model, c, kappa, target, memo, active)?;
                    if b > 0 {
                        s = s.checked_add(law.max_count(c)?.checked_mul(b)?)?;
                    }
                }
                Some(s)
            }
        }
    }
    let mut memo = BTreeMap::new();
    children_bound(model, kappa, kappa, target, &mut memo, &mut Vec::new())
}

/// Expands `v` (already in the builder, without children) into a full
/// subtree; with `stop`, vertices of that type, `v` included, stay leaves.
pub(crate) fn grow_into(
    b: &mut TreeBuilder,
    v: usize,
    model: &OffspringModel,
    stop: Option<TypeId>,
    rng: &mut Rng,
    opts: &SampleOptions,
) -> Result<()> {
    let mut stack = vec![v];
    let mut kids = Vec::new();
    while let Some(u) = stack.pop() {
        let t = b.type_at(u);
        if stop == Some(t) {
            continue;
        }
        kids.clear();
        model.sample_into(t, rng, &mut kids);
        if b.len() + kids.len() > opts.cap {
            return Err(Error::PossiblyNonExtinct { cap: opts.cap });
        }
        for &c in &kids {
            stack.push(b.child(u, c));
        }
    }
    Ok(())
}

pub fn sample_biased_stopped(
    model: &OffspringModel,
    kappa: TypeId,
    gamma: Option<TypeId>,
    seed: u64,
) -> Result<BiasedStoppedTree> {
    BiasedStoppedSampler::new(model, kappa, gamma, BiasMethod::Auto)?
        .sample(&mut crate::rng::rng_for(seed, "biased", 0), &SampleOptions::default())
}

/// The sin-tree cut at the `depth`-th spine vertex above the mark.
///
/// This is the extended fringe of the infinite tree at its `depth`-th
/// κ-ancestor of the mark.
#[derive(Clone, Debug, Serialize)]
pub struct TruncatedSinTree {
    pub pointed: PointedTree,
    /// `spine[i]` is `u_i`; `spine[depth]` is the root.
    pub spine: Vec<usize>,
    pub depth: usize,
    pub gamma: Option<TypeId>,
}

impl TruncatedSinTree {
    /// Number of type-`t` vertices on the path from the mark to the root.
    pub fn spine_type_count(&self, t: TypeId) -> usize {
        let tree = &self.pointed.tree;
        let mut v = Some(self.pointed.mark);
        let mut n = 0;
        while let Some(u) = v {
            n += (tree.type_of(u) == t) as usize;
            v = tree.parent(u);
        }
        n
    }
}

/// Reusable sampler for truncated sin-trees `T̂(κ)` and `T̂(κ, γ)`.
#[derive(Clone, Debug)]
pub struct SinTreeSampler {
    model: OffspringModel,
    kappa: TypeId,
    gamma: Option<TypeId>,
    spine: BiasedStoppedSampler,
    base: Option<BiasedStoppedSampler>,
}

impl SinTreeSampler {
    pub fn new(model: &OffspringModel, kappa: TypeId, gamma: Option<TypeId>) -> Result<Self> {
        let gamma = gamma.filter(|&g| g != kappa);
        let spine = BiasedStoppedSampler::new(model, kappa, None, BiasMethod::Auto)?;
        let base = gamma.map(|g| BiasedStoppedSampler::new(model, kappa, Some(g), BiasMethod::Auto)).transpose()?;
        Ok(Self { model: model.clone(), kappa, gamma, spine, base })
    }

    pub fn sample(&self, depth: usize, rng: &mut Rng, opts: &SampleOptions) -> Result<TruncatedSinTree> {
        self.sample_bounded(depth, None, rng, opts)?.ok_or(Error::PossiblyNonExtinct { cap: opts.cap })
    }

    /// Like [`Self::sample`], but gives up with `None` as soon as the tree
    /// has more than `limit` vertices. Only the size decides, so the
    /// returned trees follow the exact law restricted to small trees.
    pub fn sample_within(
        &self,
        depth: usize,
        limit: usize,
        rng: &mut Rng,
        opts: &SampleOptions,
    ) -> Result<Option<TruncatedSinTree>> {
        self.sample_bounded(depth, Some(limit), rng, opts)
    }

    fn sample_bounded(
        &self,
        depth: usize,
        limit: Option<usize>,
        rng: &mut Rng,
        opts: &SampleOptions,
    ) -> Result<Option<TruncatedSinTree>> {
        let mut b = TreeBuilder::new();
        let mut attach = b.root(self.kappa);
        let mut spine = Vec::with_capacity(depth + 1);
        let mut full = Vec::new();
        for _ in 0..depth {
            spine.push(attach);
            let piece = self.spine.sample(rng, opts)?;
            let map = copy_piece(&mut b, attach, &piece.tree);
            full.extend((1..piece.tree.len()).filter(|&v| v != piece.mark && piece.tree.type_of(v) == self.kappa).map(|v| map[v]));
            attach = map[piece.mark];
        }
        spine.push(attach);
        let mark = match &self.base {
            None => {
                full.push(attach);
                attach
            }
            Some(base) => {
                let piece = base.sample(rng, opts)?;
                let map = copy_piece(&mut b, attach, &piece.tree);
                full.extend((1..piece.tree.len()).filter(|&v| piece.tree.type_of(v) == self.kappa).map(|v| map[v]));
                map[piece.mark]
            }
        };
        let cap = limit.map_or(opts.cap, |l| l.min(opts.cap));
        if b.len() > cap {
            return match limit {
                Some(_) => Ok(None),
                None => Err(Error::PossiblyNonExtinct { cap }),
            };
        }
        let grow = SampleOptions { cap, ..opts.clone() };
        for v in full {
            match grow_into(&mut b, v, &self.model, None, rng, &grow) {
                Err(Error::PossiblyNonExtinct { .. }) if limit.is_some() => return Ok(None),
                r => r?,
            }
        }
        let (tree, map) = b.build();
        spine.reverse();
        let spine = spine.into_iter().map(|v| map[v]).collect();
        Ok(Some(TruncatedSinTree { pointed: PointedTree::new(tree, map[mark])?, spine, depth, gamma: self.gamma }))
    }
}

/// Copies `piece` into the builder with its root identified with `at`.
fn copy_piece(b: &mut TreeBuilder, at: usize, piece: &MultiTypeTree) -> Vec<usize> {
    let mut map = vec![at; piece.len()];
    for v in 1..piece.len() {
        let p = piece.parent(v).expect("non-root vertex has a parent");
        map[v] = b.child(map[p], piece.type_of(v));
    }
    map
}

pub fn sample_sin_tree(
    model: &OffspringModel,
    kappa: TypeId,
    gamma: Option<TypeId>,
    depth: usize,
    seed: u64,
) -> Result<TruncatedSinTree> {
    SinTreeSampler::new(model, kappa, gamma)?.sample(
        depth,
        &mut crate::rng::rng_for(seed, "sin", 0),
        &SampleOptions::default(),
    )
}

/// Law of the random type `η` on a type set `G₀`: `P(η = γ) ∝ p(γ)` with
/// `p(γ) = E[#_γ T^κ]` for `γ ≠ κ` and `p(κ) = 1`.
#[derive(Clone, Debug, Serialize)]
pub struct MixtureLaw {
    pub kappa: TypeId,
    pub types: Vec<TypeId>,
    pub probs: Vec<f64>,
    /// Exact probabilities as `p/q` strings, for rational models.
    pub exact: Option<Vec<String>>,
}

impl MixtureLaw {
    pub fn new(model: &OffspringModel, kappa: TypeId, g0: &[TypeId]) -> Result<Self> {
        let mut types = g0.to_vec();
        types.sort_unstable();
        types.dedup();
        if types.is_empty() {
            return Err(Error::Invalid("the type set G₀ is empty".into()));
        }
        for &t in &types {
            if !model.types().contains(t) {
                return Err(Error::UnknownType(t));
            }
        }
        if model.is_exact() {
            let p = expected_stopped_counts(model, kappa)?;
            let w: Vec<BigRational> =
                types.iter().map(|&t| if t == kappa { BigRational::one() } else { p[&t].clone() }).collect();
            let total: BigRational = w.iter().cloned().sum();
            if total.is_zero() {
                return Err(Error::Model("all mixture weights vanish".into()));
            }
            let exact: Vec<BigRational> = w.iter().map(|x| x / &total).collect();
            Ok(Self {
                kappa,
                types,
                probs: exact.iter().map(ratio_to_f64).collect(),
                exact: Some(exact.iter().map(|x| x.to_string()).collect()),
            })
        } else {
            let p = expected_stopped_counts_f64(model, kappa)?;
            let w: Vec<f64> = types.iter().map(|&t| if t == kappa { 1.0 } else { p[&t] }).collect();
            let total: f64 = w.iter().sum();
            if !(total > 0.0 && total.is_finite()) {
                return Err(Error::Model("mixture weights vanish or diverge".into()));
            }
            Ok(Self { kappa, types, probs: w.iter().map(|x| x / total).collect(), exact: None })
        }
    }

    pub fn probability(&self, t: TypeId) -> f64 {
        self.types.iter().position(|&u| u == t).map_or(0.0, |i| self.probs[i])
    }

    pub fn sample_type(&self, rng: &mut Rng) -> TypeId {
        let mut u: f64 = rng.random();
        for (i, &p) in self.probs.iter().enumerate() {
            if u < p {
                return self.types[i];
            }
            u -= p;
        }
        *self.types.last().expect("non-empty")
    }
}

/// Draws `η` and then the truncated `T̂(κ, η)`.
pub fn sample_mixture(
    model: &OffspringModel,
    kappa: TypeId,
    g0: &[TypeId],
    depth: usize,
    rng: &mut Rng,
    opts: &SampleOptions,
) -> Result<(TypeId, TruncatedSinTree)> {
    let law = MixtureLaw::new(model, kappa, g0)?;
    let eta = law.sample_type(rng);
    let gamma = (eta != kappa).then_some(eta);
    Ok((eta, SinTreeSampler::new(model, kappa, gamma)?.sample(depth, rng, opts)?))
}

/// [`sample_mixture`] with the tree given up past `limit` vertices; `η`
/// is always returned.
pub fn sample_mixture_within(
    model: &OffspringModel,
    kappa: TypeId,
    g0: &[TypeId],
    depth: usize,
    limit: usize,
    rng: &mut Rng,
    opts: &SampleOptions,
) -> Result<(TypeId, Option<TruncatedSinTree>)> {
    let law = MixtureLaw::new(model, kappa, g0)?;
    let eta = law.sample_type(rng);
    let gamma = (eta != kappa).then_some(eta);
    Ok((eta, SinTreeSampler::new(model, kappa, gamma)?.sample_within(depth, limit, rng, opts)?))
}

/// Exact law of the extended fringe at depth `h` of `T̂(κ)` (or `T̂(κ, γ)`)
/// restricted to pointed trees with at most `max_size` vertices, keyed by
/// [`PointedTree::canonical_key`].
pub fn exact_extended_law(
    model: &OffspringModel,
    kappa: TypeId,
    gamma: Option<TypeId>,
    h: usize,
    max_size: usize,
) -> Result<BTreeMap<Vec<u8>, BigRational>> {
    let target = gamma.unwrap_or(kappa);
    let norm = if target == kappa {
        BigRational::one()
    } else {
        expected_stopped_counts(model, kappa)?.remove(&target).ok_or(Error::UnknownType(target))?
    };
    let mut out = BTreeMap::new();
    for (tree, p) in trees_up_to(model, kappa, max_size)? {
        // Number of κ-vertices on the path from the root to each vertex.
        let mut kc = vec![0usize; tree.len()];
        for v in 0..tree.len() {
            let up = tree.parent(v).map_or(0, |p| kc[p]);
            kc[v] = up + (tree.type_of(v) == kappa) as usize;
            if tree.type_of(v) == target && kc[v] == h + 1 {
                let key = PointedTree::new(tree.clone(), v)?.canonical_key();
                *out.entry(key).or_insert_with(BigRational::zero) += &p / &norm;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::SesquiModel;
    use crate::rng::rng_for;

    fn e1() -> OffspringModel {
        SesquiModel::e1().to_offspring_model()
    }

    #[test]
    fn e1_stopped_means() {
        let p = expected_stopped_counts(&e1(), 1).unwrap();
        assert_eq!(p[&1], BigRational::from_integer(2.into()));
        assert_eq!(p[&2], crate::model::parse_ratio("1/4").unwrap());
        check_critical(&e1(), 1).unwrap();
    }

    #[test]
    fn subcritical_is_refused() {
        let m = OffspringModel::monotype(&[(0, "2/3"), (2, "1/3")]).unwrap();
        assert!(check_critical(&m, 1).is_err());
        assert!(BiasedStoppedSampler::new(&m, 1, None, BiasMethod::Auto).is_err());
    }

    #[test]
    fn two_leaf_model_marks_uniformly() {
        // T^κ is the root alone or the root with two κ-leaves, each with
        // probability 1/2; the biased tree always has both leaves.
        let m = OffspringModel::monotype(&[(0, "1/2"), (2, "1/2")]).unwrap();
        let s = BiasedStoppedSampler::new(&m, 1, None, BiasMethod::Auto).unwrap();
        let mut rng = rng_for(1, "t", 0);
        let opts = SampleOptions::default();
        let mut hits = [0u32; 3];
        for _ in 0..4000 {
            let b = s.sample(&mut rng, &opts).unwrap();
            assert_eq!(b.tree.len(), 3);
            hits[b.mark] += 1;
        }
        assert_eq!(hits[0], 0);
        assert!((hits[1] as f64 - 2000.0).abs() < 200.0, "{hits:?}");
    }

    /// Exact law of the marked stopped tree: `P(T^κ = T)` per eligible mark.
    fn exact_biased_law(model: &OffspringModel, kappa: TypeId, gamma: Option<TypeId>) -> BTreeMap<Vec<u8>, f64> {
        let target = gamma.unwrap_or(kappa);
        let norm = ratio_to_f64(&expected_stopped_counts(model, kappa).unwrap()[&target]);
        let norm = if target == kappa { 1.0 } else { norm };
        let mut out = BTreeMap::new();
        // Stopped trees of E1 are the root with its offspring.
        let crate::model::OffspringLaw::Finite(law) = model.law(kappa).unwrap() else { unreachable!() };
        for (omega, p) in law.atoms() {
            let mut b = TreeBuilder::new();
            let r = b.root(kappa);
            for c in omega.child_types() {
                b.child(r, c);
            }
            let t = b.build().0;
            for v in 1..t.len() {
                if t.type_of(v) == target {
                    let k = PointedTree::new(t.clone(), v).unwrap().canonical_key();
                    *out.entry(k).or_insert(0.0) += ratio_to_f64(p) / norm;
                }
            }
        }
        out
    }

    fn empirical(s: &BiasedStoppedSampler, n: usize, seed: u64) -> BTreeMap<Vec<u8>, f64> {
        let mut rng = rng_for(seed, "t", 0);
        let opts = SampleOptions::default();
        let mut out = BTreeMap::new();
        for _ in 0..n {
            let b = s.sample(&mut rng, &opts).unwrap();
            let k = PointedTree::new(b.tree, b.mark).unwrap().canonical_key();
            *out.entry(k).or_insert(0.0) += 1.0 / n as f64;
        }
        out
    }

    fn tv(p: &BTreeMap<Vec<u8>, f64>, q: &BTreeMap<Vec<u8>, f64>) -> f64 {
        let keys: std::collections::BTreeSet<_> = p.keys().chain(q.keys()).collect();
        keys.into_iter().map(|k| (p.get(k).unwrap_or(&0.0) - q.get(k).unwrap_or(&0.0)).abs()).sum::<f64>() / 2.0
    }

    #[test]
    fn spine_and_rejection_agree_with_the_exact_bias() {
        let m = e1();
        for gamma in [None, Some(2)] {
            let exact = exact_biased_law(&m, 1, gamma);
            let total: f64 = exact.values().sum();
            assert!((total - 1.0).abs() < 1e-12);
            for method in [BiasMethod::Rejection, BiasMethod::Spine] {
                let s = BiasedStoppedSampler::new(&m, 1, gamma, method).unwrap();
                let d = tv(&exact, &empirical(&s, 40_000, 3));
                assert!(d < 0.02, "{gamma:?} {method:?}: {d}");
            }
        }
    }

    #[test]
    fn geometric_spine_bias() {
        // Type 1 has a geometric number of type-2 children; type 2 has either
        // no children or one type-1 child. E[#_1 T^1] = 1 + (1/2)·2 = 2.
        let json = r#"{"types":[1,2],"offspring":{
            "1":{"kind":"geometric","type":2,"stop":"1/3"},
            "2":[{"counts":{},"prob":"1/2"},{"counts":{"1":1},"prob":"1/2"}]}}"#;
        let m = OffspringModel::from_json_str(json).unwrap();
        check_critical(&m, 1).unwrap();
        let s = BiasedStoppedSampler::new(&m, 1, None, BiasMethod::Auto).unwrap();
        assert_eq!(s.method(), BiasMethod::Spine);
        // Importance reweighting: E[f(T̂)/N(T̂)] = E[f(T)] / E[N] with E[N] = 1.
        let mut rng = rng_for(5, "t", 0);
        let opts = SampleOptions::default();
        let n = 100_000;
        let (mut inv, mut small) = (0.0, 0.0);
        for _ in 0..n {
            let b = s.sample(&mut rng, &opts).unwrap();
            let k = (1..b.tree.len()).filter(|&v| b.tree.type_of(v) == 1).count() as f64;
            assert_eq!(b.tree.type_of(b.mark), 1);
            inv += 1.0 / k;
            small += (b.tree.len() == 3) as u8 as f64 / k;
        }
        // E[1/N · N] over T^1 with N ≥ 1 equals P(N ≥ 1).
        let p_n_pos = 1.0 - (1.0 / 3.0) / (1.0 - (2.0 / 3.0) * 0.5);
        assert!((inv / n as f64 - p_n_pos).abs() < 0.01, "{}", inv / n as f64);
        // The tree 1[2[1]]: P = (1/3)(2/3)(1/2).
        let p_small = (1.0 / 3.0) * (2.0 / 3.0) * 0.5;
        assert!((small / n as f64 - p_small).abs() < 0.01);
    }

    #[test]
    fn depth_zero_is_a_plain_tree_marked_at_the_root() {
        let s = SinTreeSampler::new(&e1(), 1, None).unwrap();
        let mut rng = rng_for(2, "t", 0);
        let opts = SampleOptions { cap: 10_000, interleave: false };
        for _ in 0..200 {
            if let Ok(t) = s.sample(0, &mut rng, &opts) {
                assert_eq!(t.pointed.mark, 0);
                assert_eq!(t.spine, vec![0]);
            }
        }
    }

    #[test]
    fn spine_has_the_requested_length() {
        let s = SinTreeSampler::new(&e1(), 1, Some(2)).unwrap();
        let mut rng = rng_for(3, "t", 0);
        let opts = SampleOptions { cap: 10_000, interleave: false };
        for _ in 0..200 {
            let Ok(t) = s.sample(3, &mut rng, &opts) else { continue };
            assert_eq!(t.spine.len(), 4);
            assert_eq!(t.spine[3], 0);
            assert_eq!(t.pointed.tree.type_of(t.pointed.mark), 2);
            for w in t.spine.windows(2) {
                let mut v = w[0];
                while v != w[1] {
                    v = t.pointed.tree.parent(v).unwrap();
                }
            }
            assert_eq!(t.spine_type_count(1), 4);
        }
    }

    #[test]
    fn mixture_law_for_e1() {
        let law = MixtureLaw::new(&e1(), 1, &[1, 2]).unwrap();
        assert_eq!(law.exact.as_ref().unwrap(), &vec!["4/5".to_string(), "1/5".to_string()]);
        let only = MixtureLaw::new(&e1(), 1, &[1]).unwrap();
        let mut rng = rng_for(4, "t", 0);
        assert!((0..100).all(|_| only.sample_type(&mut rng) == 1));
    }

    #[test]
    fn exact_extended_law_has_unit_mass_in_the_limit() {
        let m = e1();
        let mut last = 0.0;
        for size in [3, 5, 7, 9] {
            let s: f64 = exact_extended_law(&m, 1, None, 1, size).unwrap().values().map(ratio_to_f64).sum();
            assert!(s >= last && s <= 1.0);
            last = s;
        }
        let three: BigRational = exact_extended_law(&m, 1, None, 1, 3).unwrap().values().sum();
        assert_eq!(three, crate::model::parse_ratio("1/16").unwrap());
        let z: f64 = exact_extended_law(&m, 1, None, 0, 1).unwrap().values().map(ratio_to_f64).sum();
        assert!((z - 0.25).abs() < 1e-15);
    }
}
