//! Four-type mobiles: the offspring law, uniform decorations, labels and
//! Boltzmann sampling of `T⁺` and `T⁰`.

use std::collections::BTreeMap;
use std::ops::AddAssign;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng as _;
use serde::Serialize;

use super::solve::BoltzmannParams;
use super::weights::{evaluate, term, Series, WeightSequence};
use crate::error::{Error, Result};
use crate::model::{CustomLaw, FiniteLaw, GeometricLaw, OffspringLaw, OffspringModel};
use crate::rng::Rng;
use crate::sampler::{generate, Generated, SampleOptions};
use crate::tree::{MultiTypeTree, OffspringVector, TreeBuilder, TypeId, TypeSet};

pub const LABELLED: TypeId = 1;
pub const FLAGGED: TypeId = 2;
pub const FACE: TypeId = 3;
pub const FLAGGED_FACE: TypeId = 4;

fn in_first_group(t: TypeId) -> bool {
    t == LABELLED || t == FACE
}

struct DegreeRow {
    cum: f64,
    pairs: Vec<(u32, u32)>,
    within: Vec<f64>,
}

/// Offspring law of a face vertex: `(k, k′)` labelled/flagged children with
/// probability proportional to the `(k, k′)` term of `f•` or `f⋄`.
///
/// Draws invert the face degree first. Rows are tabulated until the
/// cumulative mass is within `1e-14` of one and extended on demand beyond.
pub struct FaceLaw {
    series: Series,
    q: WeightSequence,
    x: f64,
    y: f64,
    norm: f64,
    mean_labelled: f64,
    mean_flagged: f64,
    rows: Vec<DegreeRow>,
}

impl std::fmt::Debug for FaceLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FaceLaw")
            .field("series", &self.series)
            .field("x", &self.x)
            .field("y", &self.y)
            .field("norm", &self.norm)
            .field("tabulated_degrees", &self.rows.len())
            .finish()
    }
}

const MAX_TABLE_DEGREE: u32 = 20_000;

impl FaceLaw {
    pub fn new(series: Series, q: &WeightSequence, x: f64, y: f64) -> Result<Self> {
        let v = evaluate(q, series, x, y)?;
        if !(v.value > 0.0 && v.value.is_finite()) {
            return Err(Error::Model(format!("{series:?} series vanishes at ({x}, {y})")));
        }
        let mut law = Self {
            series,
            q: q.clone(),
            x,
            y,
            norm: v.value,
            mean_labelled: x * v.dx / v.value,
            mean_flagged: y * v.dy / v.value,
            rows: Vec::new(),
        };
        let top = q.max_degree().unwrap_or(MAX_TABLE_DEGREE).min(MAX_TABLE_DEGREE);
        let mut deg = series.min_degree();
        while deg <= top && law.cum() < 1.0 - 1e-14 {
            law.push_row(deg);
            deg += 1;
        }
        if (law.cum() - 1.0).abs() > 1e-9 {
            return Err(Error::Model(format!(
                "{series:?} law: tabulated mass {} differs from 1 by more than 1e-9",
                law.cum()
            )));
        }
        Ok(law)
    }

    fn cum(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cum)
    }

    fn next_degree(&self) -> u32 {
        self.series.min_degree() + self.rows.len() as u32
    }

    fn row(&self, deg: u32) -> DegreeRow {
        let pairs: Vec<(u32, u32)> = self.series.pairs_of_degree(deg).collect();
        let terms: Vec<f64> = pairs.iter().map(|&(k, kp)| term(&self.q, self.series, k, kp, self.x, self.y)).collect();
        let mass: f64 = terms.iter().sum();
        let mut acc = 0.0;
        let within = terms
            .iter()
            .map(|t| {
                acc += t;
                if mass > 0.0 {
                    acc / mass
                } else {
                    0.0
                }
            })
            .collect();
        DegreeRow { cum: self.cum() + mass / self.norm, pairs, within }
    }

    fn push_row(&mut self, deg: u32) {
        let r = self.row(deg);
        self.rows.push(r);
    }

    fn pick(row: &DegreeRow, rng: &mut Rng) -> (u32, u32) {
        let v: f64 = rng.random();
        let i = row.within.partition_point(|&c| c <= v).min(row.pairs.len() - 1);
        row.pairs[i]
    }

    pub fn sample_pair(&self, rng: &mut Rng) -> (u32, u32) {
        let u: f64 = rng.random();
        let i = self.rows.partition_point(|r| r.cum <= u);
        if i < self.rows.len() {
            // Skip zero-mass rows that share the cumulative value.
            let row = &self.rows[i];
            return Self::pick(row, rng);
        }
        // Rare tail draw past the table.
        let mut scratch = Self {
            series: self.series,
            q: self.q.clone(),
            x: self.x,
            y: self.y,
            norm: self.norm,
            mean_labelled: 0.0,
            mean_flagged: 0.0,
            rows: vec![DegreeRow { cum: self.cum(), pairs: Vec::new(), within: Vec::new() }],
        };
        let mut deg = self.next_degree();
        loop {
            let row = scratch.row(deg);
            if (row.cum > u || deg > 100 * MAX_TABLE_DEGREE) && !row.pairs.is_empty() {
                return Self::pick(&row, rng);
            }
            scratch.rows[0] = row;
            deg += 1;
        }
    }
}

impl CustomLaw for FaceLaw {
    fn sample_into(&self, rng: &mut Rng, out: &mut Vec<TypeId>) {
        let (k, kp) = self.sample_pair(rng);
        out.extend(std::iter::repeat_n(LABELLED, k as usize));
        out.extend(std::iter::repeat_n(FLAGGED, kp as usize));
    }

    fn prob(&self, v: &OffspringVector) -> f64 {
        let (k, kp) = (v.get(LABELLED), v.get(FLAGGED));
        if v.total() != (k + kp) as u64 {
            return 0.0;
        }
        term(&self.q, self.series, k, kp, self.x, self.y) / self.norm
    }

    fn mean(&self, t: TypeId) -> f64 {
        match t {
            LABELLED => self.mean_labelled,
            FLAGGED => self.mean_flagged,
            _ => 0.0,
        }
    }

    fn child_types(&self) -> Vec<TypeId> {
        let mut out = Vec::new();
        if self.mean_labelled > 0.0 {
            out.push(LABELLED);
        }
        if self.mean_flagged > 0.0 {
            out.push(FLAGGED);
        }
        out
    }
}

/// The four-type offspring model of the mobiles for admissible weights.
pub fn mobile_offspring(params: &BoltzmannParams) -> Result<OffspringModel> {
    let (x, y) = (params.x, params.y);
    if x <= 1.0 {
        return Err(Error::NotAdmissible(format!("x = {x} must exceed 1")));
    }
    let mut laws = BTreeMap::new();
    laws.insert(LABELLED, OffspringLaw::Geometric(GeometricLaw::real(FACE, 1.0 / x)?));
    laws.insert(
        FLAGGED,
        OffspringLaw::Finite(FiniteLaw::new(vec![(OffspringVector::unit(FLAGGED_FACE), BigRational::one())])?),
    );
    laws.insert(FACE, OffspringLaw::Custom(Arc::new(FaceLaw::new(Series::Bullet, &params.q, x, y)?)));
    laws.insert(FLAGGED_FACE, OffspringLaw::Custom(Arc::new(FaceLaw::new(Series::Diamond, &params.q, x, y)?)));
    OffspringModel::new(TypeSet::new(vec![LABELLED, FLAGGED, FACE, FLAGGED_FACE])?, laws)
}

/// Constraints of a decoration in doubled units: per-step lower bounds
/// `a_i ≥ −b_i` and the required parity of each prefix sum.
struct Constraints {
    bounds: Vec<i64>,
    parity: Vec<i64>,
}

fn constraints(parent: TypeId, children: &[TypeId]) -> Result<Constraints> {
    if parent != FACE && parent != FLAGGED_FACE {
        return Err(Error::Invalid(format!("decorations live on face vertices, not type {parent}")));
    }
    if let Some(&c) = children.iter().find(|&&c| c != LABELLED && c != FLAGGED) {
        return Err(Error::Invalid(format!("face vertices have labelled or flagged children, not type {c}")));
    }
    // Weight 1 for corners carrying an integer label of a labelled vertex.
    let w = |t: TypeId| i64::from(t == LABELLED || t == FACE);
    let d = children.len();
    let at = |i: usize| if i == 0 || i == d + 1 { parent } else { children[i - 1] };
    let bounds = (0..=d).map(|i| w(at(i)) + w(at(i + 1))).collect();
    let parity =
        (1..=d).map(|i| if in_first_group(at(i)) == in_first_group(parent) { 0 } else { 1 }).collect();
    Ok(Constraints { bounds, parity })
}

/// Counting table over prefix sums: `n[i][s − lo[i]]` is the number of ways
/// to complete from `S_i = s`.
struct Table<N> {
    lo: Vec<i64>,
    n: Vec<Vec<N>>,
}

fn table<N: Copy + Zero + AddAssign>(c: &Constraints, one: N) -> Table<N> {
    let d = c.parity.len();
    let total: i64 = c.bounds.iter().sum();
    let mut lo = vec![0i64; d + 2];
    let mut hi = vec![0i64; d + 2];
    let mut before = 0;
    for i in 1..=d {
        before += c.bounds[i - 1];
        lo[i] = -before;
        hi[i] = total - before;
    }
    let valid = |i: usize, s: i64| -> bool {
        if i == 0 || i == d + 1 {
            s == 0
        } else {
            (s - c.parity[i - 1]).rem_euclid(2) == 0
        }
    };
    let mut n: Vec<Vec<N>> = (0..d + 2).map(|i| vec![N::zero(); (hi[i] - lo[i] + 1) as usize]).collect();
    n[d + 1][0] = one;
    for i in (0..=d).rev() {
        // suffix[j] = Σ_{s' ≥ lo[i+1] + j} n[i+1][s'] over valid s'.
        let next = &n[i + 1];
        let mut suffix = vec![N::zero(); next.len() + 1];
        for j in (0..next.len()).rev() {
            let mut v = suffix[j + 1];
            if valid(i + 1, lo[i + 1] + j as i64) {
                v += next[j];
            }
            suffix[j] = v;
        }
        for j in 0..n[i].len() {
            let s = lo[i] + j as i64;
            if !valid(i, s) {
                continue;
            }
            let from = (s - c.bounds[i]).max(lo[i + 1]);
            let idx = (from - lo[i + 1]) as usize;
            if idx < suffix.len() {
                n[i][j] = suffix[idx];
            }
        }
    }
    Table { lo, n }
}

/// Number of valid decorations of a face vertex with the given ordered
/// children.
pub fn decoration_count(parent: TypeId, children: &[TypeId]) -> Result<u128> {
    let c = constraints(parent, children)?;
    Ok(table::<u128>(&c, 1).n[0][0])
}

/// Decoration count summed over all orderings of `k` labelled and `k′`
/// flagged children.
pub fn aggregated_decoration_count(parent: TypeId, k: usize, kp: usize) -> Result<u128> {
    let mut total = 0u128;
    let mut kids = Vec::with_capacity(k + kp);
    fn rec(parent: TypeId, k: usize, kp: usize, kids: &mut Vec<TypeId>, total: &mut u128) -> Result<()> {
        if k == 0 && kp == 0 {
            *total += decoration_count(parent, kids)?;
            return Ok(());
        }
        if k > 0 {
            kids.push(LABELLED);
            rec(parent, k - 1, kp, kids, total)?;
            kids.pop();
        }
        if kp > 0 {
            kids.push(FLAGGED);
            rec(parent, k, kp - 1, kids, total)?;
            kids.pop();
        }
        Ok(())
    }
    rec(parent, k, kp, &mut kids, &mut total)?;
    Ok(total)
}

/// Uniform decoration `(a_0, …, a_d)` in doubled units.
pub fn sample_decoration(parent: TypeId, children: &[TypeId], rng: &mut Rng) -> Result<Vec<i64>> {
    if children.is_empty() {
        return Err(Error::Invalid("a decoration needs at least one child".into()));
    }
    let c = constraints(parent, children)?;
    let t = table::<f64>(&c, 1.0);
    let d = children.len();
    if t.n[0][0] == 0.0 {
        return Err(Error::Invalid("no decoration satisfies the constraints".into()));
    }
    let mut s = 0i64;
    let mut prefix = Vec::with_capacity(d + 2);
    prefix.push(0);
    for i in 0..d {
        let row = &t.n[i + 1];
        let from = ((s - c.bounds[i]) - t.lo[i + 1]).max(0) as usize;
        let mass: f64 = row[from..].iter().sum();
        let mut u = rng.random::<f64>() * mass;
        let mut pick = row.len() - 1;
        for (j, &w) in row.iter().enumerate().skip(from) {
            if w > 0.0 {
                pick = j;
                if u < w {
                    break;
                }
                u -= w;
            }
        }
        s = t.lo[i + 1] + pick as i64;
        prefix.push(s);
    }
    prefix.push(0);
    Ok(prefix.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Checks the sum, lower-bound and parity conditions of a decoration.
pub fn decoration_is_valid(parent: TypeId, children: &[TypeId], a: &[i64]) -> Result<bool> {
    let c = constraints(parent, children)?;
    if a.len() != children.len() + 1 || a.iter().sum::<i64>() != 0 {
        return Ok(false);
    }
    if a.iter().zip(&c.bounds).any(|(ai, b)| *ai < -b) {
        return Ok(false);
    }
    let mut s = 0;
    for (i, ai) in a.iter().take(children.len()).enumerate() {
        s += ai;
        if (s - c.parity[i]).rem_euclid(2) != 0 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A decorated four-type tree with labels. Labels and decorations are
/// stored doubled so that half-integers become integers.
#[derive(Clone, Debug, Serialize)]
pub struct Mobile {
    pub tree: MultiTypeTree,
    pub decorations: Vec<Option<Vec<i64>>>,
    pub labels: Vec<i64>,
}

impl Mobile {
    pub fn label(&self, v: usize) -> f64 {
        self.labels[v] as f64 / 2.0
    }

    /// `(#₁, #₂, #₃, #₄)`.
    pub fn type_counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for &t in self.tree.types() {
            c[(t - 1) as usize] += 1;
        }
        c
    }

    /// Re-checks every decoration and label rule.
    pub fn validate(&self) -> Result<()> {
        let t = &self.tree;
        let expected = assign_labels(t, &self.decorations)?;
        if expected != self.labels {
            return Err(Error::Invalid("labels do not follow the decorations".into()));
        }
        for v in 0..t.len() {
            let ty = t.type_of(v);
            let kids: Vec<TypeId> = t.children(v).iter().map(|&c| t.type_of(c)).collect();
            match (&self.decorations[v], ty) {
                (Some(a), FACE | FLAGGED_FACE) => {
                    if !decoration_is_valid(ty, &kids, a)? {
                        return Err(Error::Invalid(format!("decoration of vertex {v} is invalid")));
                    }
                }
                (None, FACE | FLAGGED_FACE) if kids.is_empty() => {}
                (None, LABELLED | FLAGGED) => {}
                _ => return Err(Error::Invalid(format!("vertex {v} has a misplaced decoration"))),
            }
            let integral = self.labels[v].rem_euclid(2) == 0;
            if integral != in_first_group(ty) {
                return Err(Error::Invalid(format!("vertex {v} has a label of the wrong parity")));
            }
        }
        Ok(())
    }
}

/// Labels induced by the decorations with the root at label 0 (labelled
/// root) or 1/2 (flagged root).
pub fn assign_labels(tree: &MultiTypeTree, decorations: &[Option<Vec<i64>>]) -> Result<Vec<i64>> {
    let root = match tree.type_of(0) {
        LABELLED => 0,
        FLAGGED => 1,
        t => return Err(Error::Invalid(format!("mobile roots have type 1 or 2, not {t}"))),
    };
    assign_labels_from(tree, decorations, root)
}

/// As [`assign_labels`] with an arbitrary doubled root label.
pub fn assign_labels_from(tree: &MultiTypeTree, decorations: &[Option<Vec<i64>>], root: i64) -> Result<Vec<i64>> {
    if decorations.len() != tree.len() {
        return Err(Error::Invalid("one decoration slot per vertex is required".into()));
    }
    let mut labels = vec![0i64; tree.len()];
    labels[0] = root;
    // Preorder: parents come first.
    for v in 0..tree.len() {
        let kids = tree.children(v);
        match tree.type_of(v) {
            FACE | FLAGGED_FACE if !kids.is_empty() => {
                let a = decorations[v]
                    .as_ref()
                    .ok_or_else(|| Error::Invalid(format!("face vertex {v} lacks its decoration")))?;
                if a.len() != kids.len() + 1 {
                    return Err(Error::Invalid(format!("decoration of vertex {v} has the wrong length")));
                }
                let mut s = 0;
                for (i, &c) in kids.iter().enumerate() {
                    s += a[i];
                    labels[c] = labels[v] + s;
                }
            }
            _ => {
                for &c in kids {
                    labels[c] = labels[v];
                }
            }
        }
    }
    Ok(labels)
}

/// Draws uniform decorations for every face vertex and derives the labels.
pub fn decorate(tree: MultiTypeTree, rng: &mut Rng) -> Result<Mobile> {
    let mut decorations = vec![None; tree.len()];
    let mut kids = Vec::new();
    for (v, slot) in decorations.iter_mut().enumerate() {
        let t = tree.type_of(v);
        if (t == FACE || t == FLAGGED_FACE) && !tree.is_leaf(v) {
            kids.clear();
            kids.extend(tree.children(v).iter().map(|&c| tree.type_of(c)));
            *slot = Some(sample_decoration(t, &kids, rng)?);
        }
    }
    let labels = assign_labels(&tree, &decorations)?;
    Ok(Mobile { tree, decorations, labels })
}

/// Which part of the Boltzmann map a mobile encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Flavor {
    Plus,
    Zero,
    Minus,
}

/// Size functional `Σ γ_i #_i T` with integer weights on the four types.
pub type SizeWeights = [u64; 4];

/// Samples mobiles for fixed admissible parameters.
#[derive(Debug)]
pub struct MobileSampler {
    params: BoltzmannParams,
    model: OffspringModel,
    cap: usize,
}

impl MobileSampler {
    pub fn new(params: &BoltzmannParams) -> Result<Self> {
        Ok(Self { params: params.clone(), model: mobile_offspring(params)?, cap: 10_000_000 })
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn params(&self) -> &BoltzmannParams {
        &self.params
    }

    pub fn model(&self) -> &OffspringModel {
        &self.model
    }

    /// Probabilities of the three flavours of the Boltzmann map, from the
    /// partition functions `Z⁺ = x`, `Z⁰ = y²` and `Z⁻ = Z⁺`.
    pub fn flavor_weights(&self) -> [(Flavor, f64); 3] {
        let (x, y) = (self.params.x, self.params.y);
        let z = 2.0 * x + y * y;
        [(Flavor::Plus, x / z), (Flavor::Zero, y * y / z), (Flavor::Minus, x / z)]
    }

    fn opts(&self) -> SampleOptions {
        SampleOptions { cap: self.cap, interleave: true }
    }

    /// Undecorated tree of the given flavour, abandoned once its weighted
    /// size exceeds `limit`.
    pub fn tree_within(
        &self,
        flavor: Flavor,
        weights: &SizeWeights,
        limit: Option<u64>,
        rng: &mut Rng,
    ) -> Result<Option<MultiTypeTree>> {
        let opts = self.opts();
        let acc = std::cell::Cell::new(0u64);
        let mut abort = |t: TypeId| {
            acc.set(acc.get() + weights[(t - 1) as usize]);
            limit.is_some_and(|l| acc.get() > l)
        };
        match flavor {
            Flavor::Plus | Flavor::Minus => {
                Ok(match generate(&self.model, LABELLED, rng, &opts, None, &mut abort)? {
                    Generated::Done(t) => Some(t),
                    Generated::Aborted => None,
                })
            }
            Flavor::Zero => {
                let a = match generate(&self.model, FLAGGED, rng, &opts, None, &mut abort)? {
                    Generated::Done(t) => t,
                    Generated::Aborted => return Ok(None),
                };
                // The shared root is counted once.
                acc.set(acc.get() - weights[(FLAGGED - 1) as usize]);
                let b = match generate(&self.model, FLAGGED, rng, &opts, None, &mut abort)? {
                    Generated::Done(t) => t,
                    Generated::Aborted => return Ok(None),
                };
                Ok(Some(glue_roots(&a, &b)))
            }
        }
    }

    /// Unconditioned decorated mobile.
    pub fn sample(&self, flavor: Flavor, rng: &mut Rng) -> Result<Mobile> {
        let t = self.tree_within(flavor, &[0; 4], None, rng)?.expect("no limit");
        decorate(t, rng)
    }

    /// Mobile of the given flavour conditioned on `Σ γ_i #_i T = target`,
    /// by rejection with early abort. Returns the mobile and the number of
    /// attempts.
    pub fn sample_conditioned(
        &self,
        flavor: Flavor,
        weights: &SizeWeights,
        target: u64,
        budget: u64,
        rng: &mut Rng,
    ) -> Result<(Mobile, u64)> {
        for attempt in 1..=budget {
            if let Some(t) = self.tree_within(flavor, weights, Some(target), rng)? {
                if weighted_size(&t, weights) == target {
                    return Ok((decorate(t, rng)?, attempt));
                }
            }
        }
        Err(Error::BudgetExhausted { attempts: budget, accepted: 0, rate: 0.0 })
    }
}

pub fn weighted_size(t: &MultiTypeTree, weights: &SizeWeights) -> u64 {
    t.types().iter().map(|&ty| weights[(ty - 1) as usize]).sum()
}

/// Identifies the roots of two trees; the children of `a` come first.
pub fn glue_roots(a: &MultiTypeTree, b: &MultiTypeTree) -> MultiTypeTree {
    let mut builder = TreeBuilder::with_capacity(a.len() + b.len() - 1);
    builder.root(a.type_of(0));
    for t in [a, b] {
        for &c in t.children(0) {
            builder.graft(0, &t.fringe(c));
        }
    }
    builder.build().0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::solve::{params_at, vertex_weight_params};
    use crate::maps::weights::binomial;
    use crate::rng::rng_for;

    fn uniform_params() -> BoltzmannParams {
        let p = vertex_weight_params(1.0).unwrap();
        params_at(&p.weights(), p.x, p.y).unwrap()
    }

    #[test]
    fn decoration_counts_match_the_series_coefficients() {
        for k in 0..=6usize {
            for kp in 0..=6 - k {
                let b = aggregated_decoration_count(FACE, k, kp).unwrap();
                assert_eq!(b, Series::Bullet.coefficient(k as u32, kp as u32), "bullet ({k}, {kp})");
                let d = aggregated_decoration_count(FLAGGED_FACE, k, kp).unwrap();
                assert_eq!(d, Series::Diamond.coefficient(k as u32, kp as u32), "diamond ({k}, {kp})");
            }
        }
    }

    #[test]
    fn counts_do_not_depend_on_the_interleaving() {
        // Uniform interleaving followed by a uniform decoration is uniform on pairs.
        for kids in [vec![1, 2, 2], vec![2, 1, 2], vec![2, 2, 1], vec![1, 1, 2, 2], vec![2, 1, 2, 1]] {
            let k = kids.iter().filter(|&&t| t == 1).count() as u64;
            let n = kids.len() as u64;
            assert_eq!(decoration_count(FACE, &kids).unwrap(), binomial(2 * k + (n - k) + 1, k + 1));
            assert_eq!(decoration_count(FLAGGED_FACE, &kids).unwrap(), binomial(2 * k + (n - k), k));
        }
    }

    #[test]
    fn single_labelled_child_has_three_decorations() {
        assert_eq!(decoration_count(FACE, &[LABELLED]).unwrap(), 3);
        assert_eq!(decoration_count(FACE, &[]).unwrap(), 1);
        assert!(decoration_count(LABELLED, &[LABELLED]).is_err());
    }

    #[test]
    fn sampled_decorations_are_uniform_and_valid() {
        let kids = [LABELLED, FLAGGED, LABELLED];
        let total = decoration_count(FACE, &kids).unwrap() as usize;
        let mut rng = rng_for(5, "dec", 0);
        let mut seen: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
        let draws = 60_000;
        for _ in 0..draws {
            let a = sample_decoration(FACE, &kids, &mut rng).unwrap();
            assert!(decoration_is_valid(FACE, &kids, &a).unwrap());
            *seen.entry(a).or_default() += 1;
        }
        assert_eq!(seen.len(), total);
        let expect = draws as f64 / total as f64;
        for &c in seen.values() {
            assert!((c as f64 - expect).abs() < 5.0 * expect.sqrt(), "{c} vs {expect}");
        }
    }

    #[test]
    fn face_law_matches_its_pmf() {
        let p = uniform_params();
        let law = FaceLaw::new(Series::Diamond, &p.q, p.x, p.y).unwrap();
        let mut rng = rng_for(3, "face", 0);
        let draws = 200_000;
        let mut counts: BTreeMap<(u32, u32), usize> = BTreeMap::new();
        for _ in 0..draws {
            *counts.entry(law.sample_pair(&mut rng)).or_default() += 1;
        }
        for (&(k, kp), &c) in counts.iter().take(6) {
            let prob = law.prob(&OffspringVector::from_pairs(&[(LABELLED, k), (FLAGGED, kp)]));
            let sd = (prob * (1.0 - prob) / draws as f64).sqrt();
            assert!((c as f64 / draws as f64 - prob).abs() < 5.0 * sd, "({k}, {kp})");
        }
        let mean: f64 = counts.iter().map(|(&(k, _), &c)| k as f64 * c as f64).sum::<f64>() / draws as f64;
        assert!((mean - law.mean(LABELLED)).abs() < 0.02);
    }

    #[test]
    fn offspring_model_basics() {
        let p = uniform_params();
        let m = mobile_offspring(&p).unwrap();
        let empty = OffspringVector::empty();
        assert!((m.law(LABELLED).unwrap().prob_f64(&empty) - 1.0 / p.x).abs() < 1e-15);
        assert_eq!(m.law(FLAGGED).unwrap().prob_f64(&OffspringVector::unit(FLAGGED_FACE)), 1.0);
        // Mean matrix entries: the mobile process is critical at these weights.
        let mm = m.mean_matrix_f64();
        assert!((mm[0][2] - (p.x - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn labels_follow_the_rules() {
        let p = uniform_params();
        let s = MobileSampler::new(&p).unwrap();
        let mut rng = rng_for(11, "mob", 0);
        for i in 0..300 {
            let flavor = if i % 2 == 0 { Flavor::Plus } else { Flavor::Zero };
            let m = s.sample(flavor, &mut rng).unwrap();
            m.validate().unwrap();
            assert_eq!(m.labels[0], if flavor == Flavor::Plus { 0 } else { 1 });
            // Shifting the root label shifts every label.
            let shifted = assign_labels_from(&m.tree, &m.decorations, m.labels[0] + 6).unwrap();
            assert!(shifted.iter().zip(&m.labels).all(|(a, b)| a - b == 6));
        }
    }

    #[test]
    fn conditioned_mobiles_have_the_requested_size() {
        let p = uniform_params();
        let s = MobileSampler::new(&p).unwrap();
        let mut rng = rng_for(12, "mob", 0);
        let w = [1, 0, 1, 1];
        for flavor in [Flavor::Plus, Flavor::Zero] {
            let (m, _) = s.sample_conditioned(flavor, &w, 21, 1_000_000, &mut rng).unwrap();
            assert_eq!(weighted_size(&m.tree, &w), 21);
        }
    }
}
