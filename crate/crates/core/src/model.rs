//! Offspring laws and multi-type offspring models.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng as _;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tree::{OffspringVector, TypeId, TypeSet};

/// Offspring law evaluated in floating point, for laws with real parameters.
pub trait CustomLaw: Send + Sync + fmt::Debug {
    /// Appends the ordered child types of one draw to `out`.
    fn sample_into(&self, rng: &mut Rng, out: &mut Vec<TypeId>);
    /// Probability of an offspring count vector.
    fn prob(&self, v: &OffspringVector) -> f64;
    /// Expected number of children of type `t`.
    fn mean(&self, t: TypeId) -> f64;
    /// Types that can appear among the children.
    fn child_types(&self) -> Vec<TypeId>;
}

/// Finite PMF with exact rational probabilities.
#[derive(Clone, Debug)]
pub struct FiniteLaw {
    atoms: Vec<(OffspringVector, BigRational)>,
    cdf: Vec<f64>,
    lists: Vec<Vec<TypeId>>,
}

impl FiniteLaw {
    pub fn new(atoms: Vec<(OffspringVector, BigRational)>) -> Result<Self> {
        let mut merged: BTreeMap<OffspringVector, BigRational> = BTreeMap::new();
        for (v, p) in atoms {
            if p.is_negative() {
                return Err(Error::Model("negative probability".into()));
            }
            *merged.entry(v).or_insert_with(BigRational::zero) += p;
        }
        merged.retain(|_, p| !p.is_zero());
        let total: BigRational = merged.values().cloned().sum();
        if !total.is_one() {
            return Err(Error::Model(format!("probabilities sum to {total}, not 1")));
        }
        let atoms: Vec<_> = merged.into_iter().collect();
        let mut acc = BigRational::zero();
        let mut cdf = Vec::with_capacity(atoms.len());
        for (_, p) in &atoms {
            acc += p;
            cdf.push(ratio_to_f64(&acc));
        }
        let lists = atoms.iter().map(|(v, _)| v.child_types()).collect();
        Ok(Self { atoms, cdf, lists })
    }

    pub fn atoms(&self) -> &[(OffspringVector, BigRational)] {
        &self.atoms
    }

    fn sample_index(&self, rng: &mut Rng) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.atoms.len() - 1)
    }
}

/// `P(k children of one type) = stop · (1 − stop)^k`.
#[derive(Clone, Debug)]
pub struct GeometricLaw {
    pub child: TypeId,
    pub stop: f64,
    pub stop_exact: Option<BigRational>,
}

impl GeometricLaw {
    pub fn exact(child: TypeId, stop: BigRational) -> Result<Self> {
        if !(stop.is_positive() && stop <= BigRational::one()) {
            return Err(Error::Model(format!("geometric stop probability {stop} outside (0, 1]")));
        }
        Ok(Self { child, stop: ratio_to_f64(&stop), stop_exact: Some(stop) })
    }

    pub fn real(child: TypeId, stop: f64) -> Result<Self> {
        if !(stop > 0.0 && stop <= 1.0) {
            return Err(Error::Model(format!("geometric stop probability {stop} outside (0, 1]")));
        }
        Ok(Self { child, stop, stop_exact: None })
    }

    pub fn sample_count(&self, rng: &mut Rng) -> u64 {
        if self.stop >= 1.0 {
            return 0;
        }
        let u: f64 = rng.random();
        // Inversion: P(K ≥ k) = (1 − stop)^k.
        ((1.0 - u).ln() / (1.0 - self.stop).ln()).floor() as u64
    }
}

#[derive(Clone, Debug)]
pub enum OffspringLaw {
    Finite(FiniteLaw),
    Geometric(GeometricLaw),
    Custom(Arc<dyn CustomLaw>),
}

impl OffspringLaw {
    pub fn is_exact(&self) -> bool {
        match self {
            OffspringLaw::Finite(_) => true,
            OffspringLaw::Geometric(g) => g.stop_exact.is_some(),
            OffspringLaw::Custom(_) => false,
        }
    }

    pub fn sample_into(&self, rng: &mut Rng, out: &mut Vec<TypeId>) {
        match self {
            OffspringLaw::Finite(f) => out.extend_from_slice(&f.lists[f.sample_index(rng)]),
            OffspringLaw::Geometric(g) => {
                let k = g.sample_count(rng);
                out.extend(std::iter::repeat_n(g.child, k as usize));
            }
            OffspringLaw::Custom(c) => c.sample_into(rng, out),
        }
    }

    pub fn prob_exact(&self, v: &OffspringVector) -> Result<BigRational> {
        match self {
            OffspringLaw::Finite(f) => Ok(f
                .atoms
                .iter()
                .find(|(a, _)| a == v)
                .map(|(_, p)| p.clone())
                .unwrap_or_else(BigRational::zero)),
            OffspringLaw::Geometric(g) => {
                let s = g.stop_exact.clone().ok_or_else(|| Error::NotExact("real geometric law".into()))?;
                let k = v.get(g.child);
                if v.total() != k as u64 {
                    return Ok(BigRational::zero());
                }
                Ok(s.clone() * num_traits::pow(BigRational::one() - s, k as usize))
            }
            OffspringLaw::Custom(_) => Err(Error::NotExact("real-parameter law".into())),
        }
    }

    pub fn prob_f64(&self, v: &OffspringVector) -> f64 {
        match self {
            OffspringLaw::Custom(c) => c.prob(v),
            OffspringLaw::Geometric(g) if g.stop_exact.is_none() => {
                let k = v.get(g.child);
                if v.total() != k as u64 {
                    0.0
                } else {
                    g.stop * (1.0 - g.stop).powi(k as i32)
                }
            }
            _ => ratio_to_f64(&self.prob_exact(v).expect("exact law")),
        }
    }

    pub fn mean_exact(&self, t: TypeId) -> Result<BigRational> {
        match self {
            OffspringLaw::Finite(f) => Ok(f
                .atoms
                .iter()
                .map(|(v, p)| p * BigRational::from_integer(BigInt::from(v.get(t))))
                .sum()),
            OffspringLaw::Geometric(g) => {
                let s = g.stop_exact.clone().ok_or_else(|| Error::NotExact("real geometric law".into()))?;
                if t == g.child {
                    Ok((BigRational::one() - &s) / s)
                } else {
                    Ok(BigRational::zero())
                }
            }
            OffspringLaw::Custom(_) => Err(Error::NotExact("real-parameter law".into())),
        }
    }

    pub fn mean_f64(&self, t: TypeId) -> f64 {
        match self {
            OffspringLaw::Custom(c) => c.mean(t),
            OffspringLaw::Geometric(g) if g.stop_exact.is_none() => {
                if t == g.child {
                    (1.0 - g.stop) / g.stop
                } else {
                    0.0
                }
            }
            _ => ratio_to_f64(&self.mean_exact(t).expect("exact law")),
        }
    }

    /// Exact atoms with at most `max_total` children.
    pub fn atoms_up_to(&self, max_total: u64) -> Result<Vec<(OffspringVector, BigRational)>> {
        match self {
            OffspringLaw::Finite(f) => Ok(f.atoms.iter().filter(|(v, _)| v.total() <= max_total).cloned().collect()),
            OffspringLaw::Geometric(g) => {
                let s = g.stop_exact.clone().ok_or_else(|| Error::NotExact("real geometric law".into()))?;
                let q = BigRational::one() - &s;
                let mut p = s;
                let mut out = Vec::new();
                for k in 0..=max_total {
                    if p.is_zero() {
                        break;
                    }
                    out.push((OffspringVector::from_pairs(&[(g.child, k as u32)]), p.clone()));
                    p *= &q;
                }
                Ok(out)
            }
            OffspringLaw::Custom(_) => Err(Error::NotExact("real-parameter law".into())),
        }
    }

    /// Largest possible number of type-`t` children, if bounded.
    pub fn max_count(&self, t: TypeId) -> Option<u64> {
        match self {
            OffspringLaw::Finite(f) => Some(f.atoms.iter().map(|(v, _)| v.get(t) as u64).max().unwrap_or(0)),
            OffspringLaw::Geometric(g) => (g.child != t || g.stop >= 1.0).then_some(0),
            OffspringLaw::Custom(c) => (!c.child_types().contains(&t)).then_some(0),
        }
    }

    pub fn child_types(&self) -> BTreeSet<TypeId> {
        match self {
            OffspringLaw::Finite(f) => f.atoms.iter().flat_map(|(v, _)| v.iter().map(|(t, _)| t)).collect(),
            OffspringLaw::Geometric(g) => {
                if g.stop < 1.0 {
                    BTreeSet::from([g.child])
                } else {
                    BTreeSet::new()
                }
            }
            OffspringLaw::Custom(c) => c.child_types().into_iter().collect(),
        }
    }
}

/// Per-type offspring laws `ξ = (ξ_i)`.
#[derive(Clone, Debug)]
pub struct OffspringModel {
    types: TypeSet,
    laws: BTreeMap<TypeId, OffspringLaw>,
}

impl OffspringModel {
    pub fn new(types: TypeSet, laws: BTreeMap<TypeId, OffspringLaw>) -> Result<Self> {
        for &t in types.labels() {
            if !laws.contains_key(&t) {
                return Err(Error::Model(format!("type {t} has no offspring law")));
            }
        }
        for (&t, law) in &laws {
            if !types.contains(t) {
                return Err(Error::UnknownType(t));
            }
            if let Some(&c) = law.child_types().iter().find(|&&c| !types.contains(c)) {
                return Err(Error::UnknownType(c));
            }
        }
        Ok(Self { types, laws })
    }

    pub fn types(&self) -> &TypeSet {
        &self.types
    }

    pub fn law(&self, t: TypeId) -> Result<&OffspringLaw> {
        self.laws.get(&t).ok_or(Error::UnknownType(t))
    }

    pub fn is_exact(&self) -> bool {
        self.laws.values().all(OffspringLaw::is_exact)
    }

    pub fn sample_into(&self, t: TypeId, rng: &mut Rng, out: &mut Vec<TypeId>) {
        self.laws[&t].sample_into(rng, out);
    }

    pub fn prob_exact(&self, t: TypeId, v: &OffspringVector) -> Result<BigRational> {
        self.law(t)?.prob_exact(v)
    }

    /// `M[i][j] = E[number of type-j children of a type-i vertex]`, indexed by
    /// positions in the type set.
    pub fn mean_matrix_exact(&self) -> Result<Vec<Vec<BigRational>>> {
        let labels = self.types.labels();
        labels
            .iter()
            .map(|&i| labels.iter().map(|&j| self.laws[&i].mean_exact(j)).collect())
            .collect()
    }

    pub fn mean_matrix_f64(&self) -> Vec<Vec<f64>> {
        let labels = self.types.labels();
        labels.iter().map(|&i| labels.iter().map(|&j| self.laws[&i].mean_f64(j)).collect()).collect()
    }

    /// Types reachable from `roots` through positive-probability offspring.
    pub fn reachable_from(&self, roots: &[TypeId]) -> BTreeSet<TypeId> {
        let mut seen: BTreeSet<TypeId> = roots.iter().copied().collect();
        let mut queue: VecDeque<TypeId> = roots.iter().copied().collect();
        while let Some(t) = queue.pop_front() {
            if let Some(law) = self.laws.get(&t) {
                for c in law.child_types() {
                    if seen.insert(c) {
                        queue.push_back(c);
                    }
                }
            }
        }
        seen
    }

    /// Every type must occur with positive probability when the root is
    /// drawn from `roots`.
    pub fn check_relevance(&self, roots: &[TypeId]) -> Result<()> {
        let seen = self.reachable_from(roots);
        let missing: Vec<String> =
            self.types.labels().iter().filter(|t| !seen.contains(t)).map(|t| t.to_string()).collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Model(format!("types never occur in the tree: {}", missing.join(", "))))
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        file.into_model()
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Single-type model with an exact finite PMF on the number of children.
    pub fn monotype(pmf: &[(u32, &str)]) -> Result<Self> {
        let atoms = pmf
            .iter()
            .map(|&(k, p)| Ok((OffspringVector::from_pairs(&[(1, k)]), parse_ratio(p)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(TypeSet::new(vec![1])?, BTreeMap::from([(1, OffspringLaw::Finite(FiniteLaw::new(atoms)?))]))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    types: Vec<TypeId>,
    offspring: BTreeMap<String, LawFile>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LawFile {
    Finite(Vec<AtomFile>),
    Parametric(ParamFile),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomFile {
    counts: BTreeMap<String, u32>,
    prob: String,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum ParamFile {
    Geometric {
        #[serde(rename = "type")]
        child: TypeId,
        stop: String,
    },
}

fn parse_type(s: &str) -> Result<TypeId> {
    s.trim().parse().map_err(|_| Error::Model(format!("bad type label {s:?}")))
}

pub fn parse_ratio(s: &str) -> Result<BigRational> {
    BigRational::from_str(s.trim()).map_err(|_| Error::Model(format!("bad rational {s:?}; expected \"p/q\"")))
}

impl ModelFile {
    fn into_model(self) -> Result<OffspringModel> {
        let types = TypeSet::new(self.types)?;
        let mut laws = BTreeMap::new();
        for (key, law) in self.offspring {
            let t = parse_type(&key)?;
            let law = match law {
                LawFile::Finite(atoms) => {
                    let atoms = atoms
                        .into_iter()
                        .map(|a| {
                            let mut v = OffspringVector::empty();
                            for (c, k) in a.counts {
                                v.add(parse_type(&c)?, k);
                            }
                            Ok((v, parse_ratio(&a.prob)?))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    OffspringLaw::Finite(FiniteLaw::new(atoms)?)
                }
                LawFile::Parametric(ParamFile::Geometric { child, stop }) => {
                    OffspringLaw::Geometric(GeometricLaw::exact(child, parse_ratio(&stop)?)?)
                }
            };
            if laws.insert(t, law).is_some() {
                return Err(Error::Model(format!("type {t} listed twice")));
            }
        }
        OffspringModel::new(types, laws)
    }
}

/// Nearest double to an exact rational, robust for huge numerators and
/// denominators.
pub fn ratio_to_f64(r: &BigRational) -> f64 {
    if let Some(x) = r.to_f64() {
        if x.is_finite() && (x != 0.0 || r.is_zero()) {
            return x;
        }
    }
    let num = r.numer();
    let den = r.denom();
    let shift = num.bits() as i64 - den.bits() as i64;
    // Scale so the quotient carries 64 significant bits.
    let (n, d) = if shift > 64 {
        (num.clone(), den.clone() << (shift - 64) as usize)
    } else {
        (num.clone() << (64 - shift) as usize, den.clone())
    };
    let q = (n / d).to_f64().unwrap_or(f64::NAN);
    let e = (shift - 64) as i32;
    // Split the exponent so neither factor underflows on its own.
    q * 2f64.powi(e / 2) * 2f64.powi(e - e / 2)
}
