//! Exhaustive enumeration of small trees with their exact probabilities.

use std::collections::HashMap;

use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::Result;
use crate::model::OffspringModel;
use crate::tree::{MultiTypeTree, TreeBuilder, TypeId};

type Weighted = Vec<(MultiTypeTree, BigRational)>;

struct Enumerator<'a> {
    model: &'a OffspringModel,
    memo: HashMap<(TypeId, usize), Weighted>,
}

impl Enumerator<'_> {
    fn trees(&mut self, t: TypeId, size: usize) -> Result<Weighted> {
        if let Some(v) = self.memo.get(&(t, size)) {
            return Ok(v.clone());
        }
        let mut out = Vec::new();
        if size >= 1 {
            for (vec, p) in self.model.law(t)?.atoms_up_to(size as u64 - 1)? {
                let kids = vec.child_types();
                for (forest, q) in self.forests(&kids, size - 1)? {
                    let mut b = TreeBuilder::new();
                    let r = b.root(t);
                    for sub in &forest {
                        b.graft(r, sub);
                    }
                    out.push((b.build().0, &p * q));
                }
            }
        }
        out.retain(|(_, p)| !p.is_zero());
        self.memo.insert((t, size), out.clone());
        Ok(out)
    }

    /// Sequences of trees with the given root types and total size.
    fn forests(&mut self, types: &[TypeId], size: usize) -> Result<Vec<(Vec<MultiTypeTree>, BigRational)>> {
        let Some((&first, rest)) = types.split_first() else {
            return Ok(if size == 0 { vec![(Vec::new(), BigRational::one())] } else { Vec::new() });
        };
        let mut out = Vec::new();
        if size < types.len() {
            return Ok(out);
        }
        for s in 1..=size - rest.len() {
            let heads = self.trees(first, s)?;
            if heads.is_empty() {
                continue;
            }
            let tails = self.forests(rest, size - s)?;
            for (h, p) in &heads {
                for (tail, q) in &tails {
                    let mut f = Vec::with_capacity(types.len());
                    f.push(h.clone());
                    f.extend(tail.iter().cloned());
                    out.push((f, p * q));
                }
            }
        }
        Ok(out)
    }
}

/// All trees with root type `root` and exactly `size` vertices, with
/// `P(T = tree)`; siblings appear in canonical order.
pub fn trees_of_size(model: &OffspringModel, root: TypeId, size: usize) -> Result<Weighted> {
    Enumerator { model, memo: HashMap::new() }.trees(root, size)
}

/// All trees with at most `max` vertices.
pub fn trees_up_to(model: &OffspringModel, root: TypeId, max: usize) -> Result<Weighted> {
    let mut e = Enumerator { model, memo: HashMap::new() };
    let mut out = Vec::new();
    for s in 1..=max {
        out.extend(e.trees(root, s)?);
    }
    Ok(out)
}

/// Exact `P(T = tree)` for a tree drawn from the model with the given root:
/// the product of the offspring probabilities of its vertices.
pub fn tree_probability(model: &OffspringModel, tree: &MultiTypeTree) -> Result<BigRational> {
    let mut p = BigRational::one();
    for v in 0..tree.len() {
        p *= model.prob_exact(tree.type_of(v), &tree.offspring_vector(v))?;
        if p.is_zero() {
            break;
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::SesquiModel;
    use std::collections::HashSet;

    #[test]
    fn binary_tree_counts() {
        let m = OffspringModel::monotype(&[(0, "1/2"), (2, "1/2")]).unwrap();
        // Catalan numbers of full binary trees, each with probability 2^{-size}.
        for (size, count) in [(1, 1), (3, 1), (5, 2), (7, 5), (9, 14)] {
            let ts = trees_of_size(&m, 1, size).unwrap();
            assert_eq!(ts.len(), count);
            for (t, p) in &ts {
                assert_eq!(*p, BigRational::new(1.into(), num_bigint::BigInt::from(2).pow(size as u32)));
                assert_eq!(tree_probability(&m, t).unwrap(), *p);
            }
        }
        assert!(trees_of_size(&m, 1, 4).unwrap().is_empty());
    }

    #[test]
    fn enumerated_trees_are_distinct_and_consistent() {
        let m = SesquiModel::e1().to_offspring_model();
        let all = trees_up_to(&m, 1, 9).unwrap();
        let keys: HashSet<Vec<u8>> = all.iter().map(|(t, _)| t.canonical_key()).collect();
        assert_eq!(keys.len(), all.len());
        for (t, p) in &all {
            assert_eq!(tree_probability(&m, t).unwrap(), *p);
        }
    }
}
