//! Two-type trees in which only the first type reproduces.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use super::hnf::{smallest_lattice, IntLattice};
use crate::error::{Error, Result};
use crate::model::{parse_ratio, ratio_to_f64, FiniteLaw, OffspringLaw, OffspringModel};
use crate::tree::{MultiTypeTree, OffspringVector, TreeBuilder, TypeId, TypeSet};

/// Joint law of `(ξ, ζ)`: fertile and infertile children of a fertile vertex.
#[derive(Clone, Debug)]
pub struct SesquiModel {
    atoms: Vec<((u32, u32), BigRational)>,
    pub fertile: TypeId,
    pub infertile: TypeId,
}

impl SesquiModel {
    pub fn new(atoms: Vec<((u32, u32), BigRational)>) -> Result<Self> {
        let mut merged: BTreeMap<(u32, u32), BigRational> = BTreeMap::new();
        for (k, p) in atoms {
            *merged.entry(k).or_insert_with(BigRational::zero) += p;
        }
        merged.retain(|_, p| !p.is_zero());
        let total: BigRational = merged.values().cloned().sum();
        if !total.is_one() {
            return Err(Error::Model(format!("probabilities sum to {total}")));
        }
        if !merged.keys().any(|&(x, _)| x == 0) {
            return Err(Error::Model("P(ξ = 0) must be positive".into()));
        }
        if !merged.keys().any(|&(x, _)| x >= 2) {
            return Err(Error::Model("P(ξ ≥ 2) must be positive".into()));
        }
        Ok(Self { atoms: merged.into_iter().collect(), fertile: 1, infertile: 2 })
    }

    /// The running example: `P(0,0) = P(0,1) = 1/4`, `P(2,0) = 1/2`.
    pub fn e1() -> Self {
        let p = |s: &str| parse_ratio(s).expect("literal");
        Self::new(vec![((0, 0), p("1/4")), ((0, 1), p("1/4")), ((2, 0), p("1/2"))]).expect("valid model")
    }

    pub fn atoms(&self) -> &[((u32, u32), BigRational)] {
        &self.atoms
    }

    /// Reads a two-type model whose non-root type never reproduces.
    pub fn from_offspring_model(model: &OffspringModel, fertile: TypeId) -> Result<Self> {
        let labels = model.types().labels();
        if labels.len() != 2 || !labels.contains(&fertile) {
            return Err(Error::Model("expected exactly two types including the fertile root type".into()));
        }
        let infertile = *labels.iter().find(|&&t| t != fertile).unwrap();
        match model.law(infertile)? {
            OffspringLaw::Finite(f) if f.atoms().len() == 1 && f.atoms()[0].0.total() == 0 => {}
            _ => return Err(Error::Model(format!("type {infertile} must be infertile"))),
        }
        let OffspringLaw::Finite(f) = model.law(fertile)? else {
            return Err(Error::Model("the fertile law must have finite support".into()));
        };
        let atoms = f.atoms().iter().map(|(v, p)| ((v.get(fertile), v.get(infertile)), p.clone())).collect();
        let mut s = Self::new(atoms)?;
        s.fertile = fertile;
        s.infertile = infertile;
        Ok(s)
    }

    pub fn to_offspring_model(&self) -> OffspringModel {
        let atoms = self
            .atoms
            .iter()
            .map(|&((x, z), ref p)| (OffspringVector::from_pairs(&[(self.fertile, x), (self.infertile, z)]), p.clone()))
            .collect();
        let laws = BTreeMap::from([
            (self.fertile, OffspringLaw::Finite(FiniteLaw::new(atoms).expect("valid law"))),
            (
                self.infertile,
                OffspringLaw::Finite(
                    FiniteLaw::new(vec![(OffspringVector::empty(), BigRational::one())]).expect("valid law"),
                ),
            ),
        ]);
        OffspringModel::new(TypeSet::new(vec![self.fertile, self.infertile]).expect("two types"), laws)
            .expect("consistent model")
    }

    fn expect(&self, f: impl Fn(u32, u32) -> BigRational) -> BigRational {
        self.atoms.iter().map(|&((x, z), ref p)| p * f(x, z)).sum()
    }

    pub fn moments(&self) -> Moments {
        let q = |v: u32| BigRational::from_integer(BigInt::from(v));
        let ex = self.expect(|x, _| q(x));
        let ez = self.expect(|_, z| q(z));
        let var_x = self.expect(|x, _| q(x) * q(x)) - &ex * &ex;
        let var_z = self.expect(|_, z| q(z) * q(z)) - &ez * &ez;
        let cov = self.expect(|x, z| q(x) * q(z)) - &ex * &ez;
        Moments { mean_xi: ex, mean_zeta: ez, var_xi: var_x, var_zeta: var_z, cov }
    }

    pub fn is_critical(&self) -> bool {
        self.moments().mean_xi.is_one()
    }

    /// Shifted steps `(ξ − 1, ζ + 1)` of the atoms.
    pub fn steps(&self) -> Vec<(i64, i64)> {
        self.atoms.iter().map(|&((x, z), _)| (x as i64 - 1, z as i64 + 1)).collect()
    }

    /// Support of the number of vertices, up to `max`.
    pub fn size_support_brute(&self, max: usize) -> BTreeSet<usize> {
        // `sums[k][s]`: s is a sum of k realizable sizes.
        let kmax = self.atoms.iter().map(|a| a.0 .0 as usize).max().unwrap_or(0);
        let mut real = vec![false; max + 1];
        loop {
            let mut sums = vec![vec![false; max + 1]; kmax + 1];
            sums[0][0] = true;
            for k in 1..=kmax {
                for s in 0..=max {
                    if sums[k - 1][s] {
                        for (t, &r) in real.iter().enumerate() {
                            if r && s + t <= max {
                                sums[k][s + t] = true;
                            }
                        }
                    }
                }
            }
            let mut next = vec![false; max + 1];
            for &((x, z), _) in &self.atoms {
                for (s, &ok) in sums[x as usize].iter().enumerate() {
                    let n = s + 1 + z as usize;
                    if ok && n <= max {
                        next[n] = true;
                    }
                }
            }
            if next == real {
                break;
            }
            real = next;
        }
        real.iter().enumerate().filter(|(_, &r)| r).map(|(n, _)| n).collect()
    }

    /// `(a, D)`: smallest possible size and the period of the size support.
    pub fn size_lattice(&self) -> Result<(u64, u64)> {
        let a = self
            .atoms
            .iter()
            .filter(|a| a.0 .0 == 0)
            .map(|a| a.0 .1 as i64 + 1)
            .min()
            .ok_or_else(|| Error::Model("P(ξ = 0) must be positive".into()))?;
        let mut g = 0i64;
        for s in self.s_sets(a).values().flatten() {
            g = g.gcd(s);
        }
        Ok((a as u64, g.max(1) as u64))
    }

    /// `S_k = (k − 1)a + F_k` with `F_k = {ζ + 1 : P(ξ = k, ζ) > 0}`.
    fn s_sets(&self, a: i64) -> BTreeMap<u32, BTreeSet<i64>> {
        let mut s: BTreeMap<u32, BTreeSet<i64>> = BTreeMap::new();
        for &((x, z), _) in &self.atoms {
            s.entry(x).or_default().insert((x as i64 - 1) * a + z as i64 + 1);
        }
        s
    }

    pub fn full_lattice_report(&self) -> Result<LatticeReport> {
        let (a, big_d) = self.size_lattice()?;
        let pts: Vec<Vec<i64>> = self.steps().iter().map(|&(x, y)| vec![x, y]).collect();
        let (_, lat) = smallest_lattice(&pts).expect("non-empty support");
        if lat.rank() < 2 {
            return Err(Error::Model("offspring support lies on a line".into()));
        }
        let m = lat.determinant().expect("full rank").to_u64().ok_or(Error::Overflow("lattice determinant"))?;
        let avec = [-1i64, a as i64];
        let d = (1..=m).find(|&j| lat.contains(&[j as i64 * avec[0], j as i64 * avec[1]])).expect("index bounds order");
        if m != d * big_d {
            return Err(Error::Model(format!("lattice identity fails: |det| = {m}, d = {d}, D = {big_d}")));
        }
        let dmat = lat.basis().iter().map(|r| [r[0].to_i64().unwrap(), r[1].to_i64().unwrap()]).collect::<Vec<_>>();
        Ok(LatticeReport { a, big_d, dmat: [dmat[0], dmat[1]], m, d, lattice: lat })
    }

    /// Explicit positive-probability tree with `n` vertices built by the
    /// chain-growing construction; `None` if `n` has no representation.
    pub fn growth_witness(&self, n: u64) -> Result<Option<MultiTypeTree>> {
        let (a, big_d) = self.size_lattice()?;
        if n < a || (n - a) % big_d != 0 {
            return Ok(None);
        }
        let target = (n - a) as usize;
        let ai = a as i64;
        let s = self.s_sets(ai);
        let f0: Vec<i64> = s.get(&0).map(|v| v.iter().map(|x| x + ai).collect()).unwrap_or_default();
        // Moves: Chain(b) adds (1, b-1) offspring; Branch(k, b, c) adds (k, b-1)
        // with one child getting (0, c-1) and k-2 children getting (0, a-1).
        #[derive(Clone, Copy)]
        enum Move {
            Chain(i64),
            Branch(u32, i64, i64),
        }
        let mut moves: Vec<(usize, Move)> = Vec::new();
        for (&k, set) in &s {
            for &sk in set {
                let b = sk - (k as i64 - 1) * ai;
                if k == 1 {
                    moves.push((sk as usize, Move::Chain(b)));
                } else if k >= 2 {
                    for &c in &f0 {
                        let v = sk + c - ai;
                        if v > 0 {
                            moves.push((v as usize, Move::Branch(k, b, c)));
                        }
                    }
                }
            }
        }
        // Unbounded knapsack with back-pointers.
        let mut back: Vec<Option<usize>> = vec![None; target + 1];
        let mut reach = vec![false; target + 1];
        reach[0] = true;
        for t in 1..=target {
            for (i, &(w, _)) in moves.iter().enumerate() {
                if w <= t && reach[t - w] {
                    reach[t] = true;
                    back[t] = Some(i);
                    break;
                }
            }
        }
        if !reach[target] {
            return Ok(None);
        }
        let (fert, inf) = (self.fertile, self.infertile);
        let mut b = TreeBuilder::new();
        let mut marked = b.root(fert);
        let leaf = |b: &mut TreeBuilder, p: usize, zeta: i64| {
            for _ in 0..zeta {
                b.child(p, inf);
            }
        };
        let mut t = target;
        while t > 0 {
            let i = back[t].unwrap();
            let (w, mv) = moves[i];
            match mv {
                Move::Chain(bb) => {
                    let next = b.child(marked, fert);
                    leaf(&mut b, marked, bb - 1);
                    marked = next;
                }
                Move::Branch(k, bb, c) => {
                    let next = b.child(marked, fert);
                    let second = b.child(marked, fert);
                    leaf(&mut b, second, c - 1);
                    for _ in 2..k {
                        let o = b.child(marked, fert);
                        leaf(&mut b, o, ai - 1);
                    }
                    leaf(&mut b, marked, bb - 1);
                    marked = next;
                }
            }
            t -= w;
        }
        leaf(&mut b, marked, ai - 1);
        Ok(Some(b.build().0))
    }

    /// Probability of a tree under this model (zero if some outdegree is
    /// outside the support).
    pub fn tree_probability(&self, t: &MultiTypeTree) -> BigRational {
        let law: BTreeMap<(u32, u32), &BigRational> = self.atoms.iter().map(|(k, p)| (*k, p)).collect();
        let mut p = BigRational::one();
        for v in 0..t.len() {
            if t.type_of(v) != self.fertile {
                continue;
            }
            let o = t.offspring_vector(v);
            match law.get(&(o.get(self.fertile), o.get(self.infertile))) {
                Some(q) => p *= *q,
                None => return BigRational::zero(),
            }
        }
        p
    }
}

#[derive(Clone, Debug)]
pub struct Moments {
    pub mean_xi: BigRational,
    pub mean_zeta: BigRational,
    pub var_xi: BigRational,
    pub var_zeta: BigRational,
    pub cov: BigRational,
}

/// Lattice data of the size and type-count laws.
#[derive(Clone, Debug, Serialize)]
pub struct LatticeReport {
    pub a: u64,
    #[serde(rename = "D")]
    pub big_d: u64,
    /// Basis vectors of the step lattice.
    pub dmat: [[i64; 2]; 2],
    pub m: u64,
    pub d: u64,
    #[serde(skip)]
    lattice: IntLattice,
}

impl LatticeReport {
    /// Residue `j ∈ {1..d}` with `(−1, n) ∈ j(−1, a) + L`.
    pub fn j_of(&self, n: u64) -> Option<u64> {
        let a = self.a as i64;
        (1..=self.d).find(|&j| {
            let j = j as i64;
            self.lattice.contains(&[-1 + j, n as i64 - j * a])
        })
    }

    /// Whether `v − j(−1, a)` lies in the step lattice.
    pub fn in_coset(&self, v: (i64, i64), j: u64) -> bool {
        let j = j as i64;
        self.lattice.contains(&[v.0 + j, v.1 - j * self.a as i64])
    }

    pub fn lattice(&self) -> &IntLattice {
        &self.lattice
    }
}

/// `μ`, `σ²` and the tail constant of the size law.
#[derive(Clone, Debug, Serialize)]
pub struct CltParams {
    #[serde(serialize_with = "ser_ratio")]
    pub mu: BigRational,
    #[serde(serialize_with = "ser_ratio")]
    pub sigma2: BigRational,
    pub tail_const: f64,
}

fn ser_ratio<S: serde::Serializer>(r: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

impl CltParams {
    pub fn of(model: &SesquiModel) -> Result<Self> {
        let mo = model.moments();
        let one = BigRational::one();
        let denom = &one + &mo.mean_zeta;
        let mu = &one / &denom;
        let det = &mo.var_xi * &mo.var_zeta - &mo.cov * &mo.cov;
        let sigma2 = det / (&mo.var_xi * &denom * &denom * &denom);
        let (_, big_d) = model.size_lattice()?;
        let tail_const =
            big_d as f64 * (ratio_to_f64(&denom) / (2.0 * std::f64::consts::PI * ratio_to_f64(&mo.var_xi))).sqrt();
        Ok(Self { mu, sigma2, tail_const })
    }

    pub fn sigma(&self) -> f64 {
        ratio_to_f64(&self.sigma2).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(s: &str) -> BigRational {
        parse_ratio(s).unwrap()
    }

    #[test]
    fn e1_lattice() {
        let m = SesquiModel::e1();
        assert_eq!(m.size_lattice().unwrap(), (1, 1));
        let rep = m.full_lattice_report().unwrap();
        assert_eq!((rep.a, rep.big_d, rep.m, rep.d), (1, 1, 2, 2));
        for n in 1..40 {
            assert_eq!(rep.j_of(n), Some(1));
        }
        let sup = m.size_support_brute(25);
        assert!(sup.contains(&1) && sup.contains(&2) && sup.contains(&3));
    }

    #[test]
    fn period_three_model() {
        let m = SesquiModel::new(vec![((0, 1), r("1/2")), ((2, 0), r("1/2"))]).unwrap();
        let (a, d) = m.size_lattice().unwrap();
        assert_eq!((a, d), (2, 3));
        let sup = m.size_support_brute(25);
        assert!(sup.iter().all(|&n| (n as u64 - a) % d == 0));
        for n in (15..=25).filter(|n| (n - 2) % 3 == 0) {
            assert!(sup.contains(&n), "size {n} missing");
        }
    }

    #[test]
    fn support_on_a_line_is_degenerate() {
        // Steps (ξ − 1, ζ + 1) = (−1, 1) and (1, 1) are not collinear, but
        // (−1,1),(1,3) from atoms (0,0),(2,2) lie on a line through both.
        let m = SesquiModel::new(vec![((0, 0), r("1/2")), ((2, 2), r("1/2"))]).unwrap();
        assert!(m.full_lattice_report().is_err());
    }

    #[test]
    fn e1_moments_and_clt_params() {
        let m = SesquiModel::e1();
        let mo = m.moments();
        assert_eq!(mo.mean_xi, r("1"));
        assert_eq!(mo.var_xi, r("1"));
        assert_eq!(mo.mean_zeta, r("1/4"));
        assert_eq!(mo.var_zeta, r("3/16"));
        assert_eq!(mo.cov, r("-1/4"));
        let c = CltParams::of(&m).unwrap();
        assert_eq!(c.mu, r("4/5"));
        assert_eq!(c.sigma2, r("8/125"));
        assert!((c.tail_const - (1.25 / (2.0 * std::f64::consts::PI)).sqrt()).abs() < 1e-15);
    }

    fn models() -> Vec<SesquiModel> {
        vec![
            SesquiModel::e1(),
            SesquiModel::new(vec![((0, 1), r("1/2")), ((2, 0), r("1/2"))]).unwrap(),
            SesquiModel::new(vec![((0, 2), r("1/3")), ((1, 1), r("1/3")), ((2, 0), r("1/6")), ((0, 4), r("1/6"))])
                .unwrap(),
            SesquiModel::new(vec![((0, 1), r("2/3")), ((3, 2), r("1/3"))]).unwrap(),
        ]
    }

    #[test]
    fn size_lattice_matches_enumeration() {
        for m in models() {
            let (a, d) = m.size_lattice().unwrap();
            let sup = m.size_support_brute(25);
            assert_eq!(*sup.iter().next().unwrap() as u64, a);
            assert!(sup.iter().all(|&n| (n as u64 - a) % d == 0));
            let g = sup.iter().fold(0u64, |g, &n| g.gcd(&(n as u64 - a)));
            assert_eq!(g, d);
            for n in (15..=25u64).filter(|n| *n >= a && (n - a) % d == 0) {
                assert!(sup.contains(&(n as usize)), "size {n} missing");
            }
        }
    }

    #[test]
    fn lattice_identity_and_witnesses() {
        for m in models() {
            if let Ok(rep) = m.full_lattice_report() {
                assert_eq!(rep.m, rep.d * rep.big_d);
                for (x, y) in m.steps() {
                    assert!(rep.in_coset((x, y), 1));
                }
            }
            let sup = m.size_support_brute(40);
            for n in 1..=40u64 {
                if let Some(t) = m.growth_witness(n).unwrap() {
                    assert_eq!(t.len() as u64, n);
                    assert!(!m.tree_probability(&t).is_zero());
                    assert!(sup.contains(&(n as usize)));
                }
            }
            // The construction covers the tail of the support window.
            for &n in sup.iter().filter(|&&n| n >= 20) {
                assert!(m.growth_witness(n as u64).unwrap().is_some(), "no witness for {n}");
            }
        }
    }
}
