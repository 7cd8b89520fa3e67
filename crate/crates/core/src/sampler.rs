//! Galton-Watson sampling, conditioning, spinal decomposition and the
//! forest expansion of reducible trees.

use std::collections::BTreeMap;

use num_rational::{BigRational, Rational64};
use num_traits::Zero;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::lattice::{SesquiExactSampler, SesquiModel};
use crate::model::{ratio_to_f64, OffspringModel};
use crate::rng::{rng_for, Rng};
use crate::tree::{GammaWeights, MultiTypeTree, TreeBuilder, TypeId};

/// Law of the root type.
#[derive(Clone, Debug)]
pub enum RootLaw {
    Fixed(TypeId),
    Distribution(Vec<(TypeId, BigRational)>),
}

impl RootLaw {
    pub fn validate(&self, model: &OffspringModel) -> Result<()> {
        match self {
            RootLaw::Fixed(t) => {
                model.law(*t)?;
            }
            RootLaw::Distribution(d) => {
                let total: BigRational = d.iter().map(|(_, p)| p.clone()).sum();
                if total != BigRational::from_integer(1.into()) {
                    return Err(Error::Model(format!("root law sums to {total}")));
                }
                for (t, _) in d {
                    model.law(*t)?;
                }
            }
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut Rng) -> TypeId {
        match self {
            RootLaw::Fixed(t) => *t,
            RootLaw::Distribution(d) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (t, p) in d {
                    acc += ratio_to_f64(p);
                    if u < acc {
                        return *t;
                    }
                }
                d.last().expect("non-empty root law").0
            }
        }
    }

    pub fn support(&self) -> Vec<TypeId> {
        match self {
            RootLaw::Fixed(t) => vec![*t],
            RootLaw::Distribution(d) => d.iter().filter(|(_, p)| !p.is_zero()).map(|(t, _)| *t).collect(),
        }
    }
}

/// Conditioning events for [`ConditionedSampler`].
#[derive(Clone, Debug)]
pub enum Conditioning {
    TotalSize(u64),
    GammaSize(GammaWeights, Rational64),
    TypeVector(BTreeMap<TypeId, u64>),
}

impl Conditioning {
    pub fn holds(&self, tree: &MultiTypeTree) -> Result<bool> {
        Ok(match self {
            Conditioning::TotalSize(n) => tree.len() as u64 == *n,
            Conditioning::GammaSize(g, n) => tree.weighted_size(g)? == *n,
            Conditioning::TypeVector(k) => {
                let counts = tree.type_counts();
                counts.iter().all(|(t, &c)| k.get(t).copied().unwrap_or(0) == c as u64)
                    && k.iter().all(|(t, &c)| counts.get(t).copied().unwrap_or(0) as u64 == c)
            }
        })
    }
}

/// Generation options.
#[derive(Clone, Debug)]
pub struct SampleOptions {
    /// Maximum number of vertices before a draw is abandoned.
    pub cap: usize,
    /// Shuffle each child list uniformly, including across types.
    pub interleave: bool,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self { cap: 10_000_000, interleave: false }
    }
}

/// Outcome of a generation pass that may be cut short by a predicate.
pub(crate) enum Generated {
    Done(MultiTypeTree),
    Aborted,
}

/// Preorder generation. `stop` makes non-root vertices of that type leaves;
/// `abort` sees every new vertex type and may cut the draw short.
pub(crate) fn generate(
    model: &OffspringModel,
    root_type: TypeId,
    rng: &mut Rng,
    opts: &SampleOptions,
    stop: Option<TypeId>,
    abort: &mut dyn FnMut(TypeId) -> bool,
) -> Result<Generated> {
    let mut types = Vec::new();
    let mut parent = Vec::new();
    let mut stack: Vec<(Option<usize>, TypeId)> = vec![(None, root_type)];
    let mut kids = Vec::new();
    while let Some((p, t)) = stack.pop() {
        if abort(t) {
            return Ok(Generated::Aborted);
        }
        let v = types.len();
        if v >= opts.cap {
            return Err(Error::PossiblyNonExtinct { cap: opts.cap });
        }
        types.push(t);
        parent.push(p);
        if p.is_some() && stop == Some(t) {
            continue;
        }
        kids.clear();
        model.sample_into(t, rng, &mut kids);
        if opts.interleave {
            shuffle(&mut kids, rng);
        }
        stack.extend(kids.iter().rev().map(|&c| (Some(v), c)));
    }
    Ok(Generated::Done(MultiTypeTree::from_preorder_unchecked(types, parent)))
}

pub(crate) fn shuffle<T>(xs: &mut [T], rng: &mut Rng) {
    for i in (1..xs.len()).rev() {
        let j = rng.random_range(0..=i);
        xs.swap(i, j);
    }
}

pub fn sample_tree_with(
    model: &OffspringModel,
    root: &RootLaw,
    rng: &mut Rng,
    opts: &SampleOptions,
) -> Result<MultiTypeTree> {
    let r = root.sample(rng);
    match generate(model, r, rng, opts, None, &mut |_| false)? {
        Generated::Done(t) => Ok(t),
        Generated::Aborted => unreachable!("no abort predicate"),
    }
}

/// Unconditioned ξ-Galton-Watson tree.
pub fn sample_tree(model: &OffspringModel, root: &RootLaw, seed: u64) -> Result<MultiTypeTree> {
    sample_tree_with(model, root, &mut rng_for(seed, "tree", 0), &SampleOptions::default())
}

/// Tree in which non-root vertices of type `kappa` receive no offspring.
pub fn sample_stopped_with(
    model: &OffspringModel,
    kappa: TypeId,
    root: &RootLaw,
    rng: &mut Rng,
    opts: &SampleOptions,
) -> Result<MultiTypeTree> {
    let r = root.sample(rng);
    match generate(model, r, rng, opts, Some(kappa), &mut |_| false)? {
        Generated::Done(t) => Ok(t),
        Generated::Aborted => unreachable!("no abort predicate"),
    }
}

pub fn sample_stopped(model: &OffspringModel, kappa: TypeId, root: &RootLaw, seed: u64) -> Result<MultiTypeTree> {
    sample_stopped_with(model, kappa, root, &mut rng_for(seed, "stopped", 0), &SampleOptions::default())
}

/// How a [`ConditionedSampler`] produces its draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Auto,
    Rejection,
    ExactSesqui,
}

/// Sampler for `(T | event)`; reusable across draws so any exact tables are
/// built once.
#[derive(Debug)]
pub struct ConditionedSampler {
    model: OffspringModel,
    root: RootLaw,
    cond: Conditioning,
    opts: SampleOptions,
    budget: u64,
    exact: Option<SesquiExactSampler>,
}

impl ConditionedSampler {
    pub fn new(
        model: &OffspringModel,
        root: RootLaw,
        cond: Conditioning,
        method: Method,
        budget: u64,
    ) -> Result<Self> {
        root.validate(model)?;
        let exact_ok = match (&root, &cond) {
            (RootLaw::Fixed(r), Conditioning::TotalSize(_)) => SesquiModel::from_offspring_model(model, *r).is_ok(),
            _ => false,
        };
        let use_exact = match method {
            Method::Auto => exact_ok,
            Method::Rejection => false,
            Method::ExactSesqui if exact_ok => true,
            Method::ExactSesqui => {
                return Err(Error::Invalid(
                    "the exact sampler needs a two-type model with an infertile second type, a fixed fertile root and total-size conditioning".into(),
                ))
            }
        };
        let exact = if use_exact {
            let (RootLaw::Fixed(r), Conditioning::TotalSize(n)) = (&root, &cond) else { unreachable!() };
            let sesqui = SesquiModel::from_offspring_model(model, *r)?;
            Some(SesquiExactSampler::new(&sesqui, *n)?)
        } else {
            None
        };
        Ok(Self { model: model.clone(), root, cond, opts: SampleOptions::default(), budget, exact })
    }

    pub fn with_options(mut self, opts: SampleOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn model(&self) -> &OffspringModel {
        &self.model
    }

    pub fn method(&self) -> Method {
        if self.exact.is_some() {
            Method::ExactSesqui
        } else {
            Method::Rejection
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> Result<MultiTypeTree> {
        if let Some(ex) = &self.exact {
            return Ok(ex.sample(rng));
        }
        self.sample_rejection(rng)
    }

    fn sample_rejection(&self, rng: &mut Rng) -> Result<MultiTypeTree> {
        let mut report_at = 1000u64;
        for attempt in 1..=self.budget {
            let r = self.root.sample(rng);
            let mut abort = abort_predicate(&self.cond)?;
            if let Generated::Done(t) = generate(&self.model, r, rng, &self.opts, None, &mut abort)? {
                if self.cond.holds(&t)? {
                    return Ok(t);
                }
            }
            if attempt == report_at {
                log::debug!("conditioned rejection: {attempt} attempts without acceptance");
                report_at *= 10;
            }
        }
        Err(Error::BudgetExhausted { attempts: self.budget, accepted: 0, rate: 0.0 })
    }
}

/// Returns a predicate that fires once the growing tree can no longer satisfy
/// the event (all conditioning weights are non-negative).
fn abort_predicate(cond: &Conditioning) -> Result<Box<dyn FnMut(TypeId) -> bool + '_>> {
    Ok(match cond {
        Conditioning::TotalSize(n) => {
            let n = *n;
            let mut count = 0u64;
            Box::new(move |_| {
                count += 1;
                count > n
            })
        }
        Conditioning::GammaSize(g, n) => {
            let n = *n;
            let mut acc = Rational64::zero();
            Box::new(move |t| {
                acc += g.weight(t).unwrap_or_else(|_| Rational64::zero());
                acc > n
            })
        }
        Conditioning::TypeVector(k) => {
            let mut counts: BTreeMap<TypeId, u64> = BTreeMap::new();
            Box::new(move |t| {
                let c = counts.entry(t).or_insert(0);
                *c += 1;
                *c > k.get(&t).copied().unwrap_or(0)
            })
        }
    })
}

/// Convenience wrapper drawing a single conditioned tree.
pub fn sample_conditioned(
    model: &OffspringModel,
    root: RootLaw,
    cond: Conditioning,
    seed: u64,
    budget: u64,
) -> Result<MultiTypeTree> {
    ConditionedSampler::new(model, root, cond, Method::Auto, budget)?.sample(&mut rng_for(seed, "conditioned", 0))
}

/// A tree cut at its non-root κ-vertices: the head part and one block per
/// non-root κ-vertex, listed in depth-first order of those vertices.
#[derive(Clone, Debug)]
pub struct SpinalDecomposition {
    pub head: MultiTypeTree,
    pub blocks: Vec<MultiTypeTree>,
    pub kappa: TypeId,
}

impl SpinalDecomposition {
    pub fn root_is_kappa(&self) -> bool {
        self.head.type_of(0) == self.kappa
    }

    /// Checks `#_κ head − 1{root is κ} + Σ_i (#_κ block_i − 1) = L`, and that
    /// no smaller prefix of blocks balances.
    pub fn balance_holds(&self) -> bool {
        // Discovered κ-leaves minus consumed blocks must stay positive until
        // the last block.
        let mut open = self.head.count_of(self.kappa) as i64 - self.root_is_kappa() as i64;
        for b in &self.blocks {
            if open <= 0 {
                return false;
            }
            open += b.count_of(self.kappa) as i64 - 2;
        }
        open == 0
    }
}

/// Copy of the subtree at `v` in which non-root κ-vertices become leaves.
fn truncated_fringe(tree: &MultiTypeTree, v: usize, kappa: TypeId) -> MultiTypeTree {
    let mut b = TreeBuilder::new();
    let r = b.root(tree.type_of(v));
    let mut stack: Vec<(usize, usize)> = tree.children(v).iter().rev().map(|&c| (c, r)).collect();
    while let Some((u, pid)) = stack.pop() {
        let id = b.child(pid, tree.type_of(u));
        if tree.type_of(u) != kappa {
            stack.extend(tree.children(u).iter().rev().map(|&c| (c, id)));
        }
    }
    b.build().0
}

pub fn decompose(tree: &MultiTypeTree, kappa: TypeId) -> SpinalDecomposition {
    let head = truncated_fringe(tree, 0, kappa);
    let blocks = (1..tree.len())
        .filter(|&v| tree.type_of(v) == kappa)
        .map(|v| truncated_fringe(tree, v, kappa))
        .collect();
    SpinalDecomposition { head, blocks, kappa }
}

pub fn reassemble(dec: &SpinalDecomposition) -> Result<MultiTypeTree> {
    struct Frame<'a> {
        src: &'a MultiTypeTree,
        ids: Vec<usize>,
        pos: usize,
    }
    let kappa = dec.kappa;
    let mut b = TreeBuilder::new();
    let mut root_ids = vec![0usize; dec.head.len()];
    root_ids[0] = b.root(dec.head.type_of(0));
    let mut frames = vec![Frame { src: &dec.head, ids: root_ids, pos: 1 }];
    let mut next = 0usize;
    while let Some(f) = frames.last_mut() {
        if f.pos == f.src.len() {
            frames.pop();
            continue;
        }
        let v = f.pos;
        f.pos += 1;
        let t = f.src.type_of(v);
        let id = b.child(f.ids[f.src.parent(v).expect("non-root")], t);
        f.ids[v] = id;
        if t == kappa {
            if !f.src.is_leaf(v) {
                return Err(Error::Invalid("non-root κ-vertex with children in a decomposition part".into()));
            }
            let block = dec.blocks.get(next).ok_or_else(|| Error::Invalid("too few blocks".into()))?;
            next += 1;
            if block.type_of(0) != kappa {
                return Err(Error::Invalid("block root is not of type κ".into()));
            }
            let mut ids = vec![0usize; block.len()];
            ids[0] = id;
            frames.push(Frame { src: block, ids, pos: 1 });
        }
    }
    if next != dec.blocks.len() {
        return Err(Error::Invalid("unused blocks in decomposition".into()));
    }
    Ok(b.build().0)
}

/// Two-type tree whose fertile vertices carry forests replacing their
/// infertile children.
#[derive(Clone, Debug)]
pub struct ForestDecoratedTree {
    pub tree: MultiTypeTree,
    /// Forest per vertex; empty for vertices without infertile children.
    pub forests: Vec<Vec<MultiTypeTree>>,
    pub fertile: TypeId,
    pub infertile: TypeId,
}

/// Deletes each infertile child and attaches the forest roots to its parent.
/// The forest of a vertex must contain exactly as many vertices as the
/// vertex has infertile children.
pub fn xi_expand(input: &ForestDecoratedTree) -> Result<MultiTypeTree> {
    let s = &input.tree;
    if input.forests.len() != s.len() {
        return Err(Error::Invalid("one forest per vertex required".into()));
    }
    let mut b = TreeBuilder::with_capacity(s.len());
    let mut ids = vec![usize::MAX; s.len()];
    for v in 0..s.len() {
        let t = s.type_of(v);
        if v == 0 {
            if t != input.fertile {
                return Err(Error::Invalid("root must be of the fertile type".into()));
            }
            ids[0] = b.root(t);
        } else if t == input.fertile {
            ids[v] = b.child(ids[s.parent(v).unwrap()], t);
        } else if t == input.infertile {
            if !s.is_leaf(v) {
                return Err(Error::Invalid("infertile vertex with children".into()));
            }
            continue;
        } else {
            return Err(Error::UnknownType(t));
        }
        let n2 = s.children(v).iter().filter(|&&c| s.type_of(c) == input.infertile).count();
        let forest = &input.forests[v];
        let fsize: usize = forest.iter().map(MultiTypeTree::len).sum();
        if fsize != n2 {
            return Err(Error::Invalid(format!(
                "forest at vertex {v} has {fsize} vertices but the vertex has {n2} infertile children"
            )));
        }
    }
    for v in 0..s.len() {
        if s.type_of(v) == input.fertile {
            for f in &input.forests[v] {
                b.graft(ids[v], f);
            }
        }
    }
    Ok(b.build().0)
}
