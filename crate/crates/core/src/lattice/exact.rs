//! Exact sampler for sesqui-type trees conditioned on their total size.
//!
//! A count vector is drawn with its cycle-lemma weight, its steps are
//! shuffled uniformly, the unique rotation satisfying the ballot condition is
//! taken, and the tree is rebuilt from the resulting depth-first sequence.

use rand::Rng as _;

use super::pmf::{count_vectors, log_sum_exp};
use super::sesqui::SesquiModel;
use crate::error::{Error, Result};
use crate::model::ratio_to_f64;
use crate::rng::Rng;
use crate::sampler::shuffle;
use crate::tree::{MultiTypeTree, TreeBuilder, TypeId};

#[derive(Clone, Debug)]
pub struct SesquiExactSampler {
    n: u64,
    atoms: Vec<(u32, u32)>,
    vectors: Vec<Vec<u64>>,
    cdf: Vec<f64>,
    fertile: TypeId,
    infertile: TypeId,
}

impl SesquiExactSampler {
    pub fn new(model: &SesquiModel, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("n must be positive".into()));
        }
        let vectors = count_vectors(model, n);
        let logp: Vec<f64> = model.atoms().iter().map(|(_, p)| ratio_to_f64(p).ln()).collect();
        // log of multinomial(ℓ; c) Π p^c / ℓ
        let logw: Vec<f64> = vectors
            .iter()
            .map(|c| {
                let ell: u64 = c.iter().sum();
                let mut s = statrs::function::gamma::ln_gamma(ell as f64 + 1.0) - (ell as f64).ln();
                for (&k, lp) in c.iter().zip(&logp) {
                    s += k as f64 * lp - statrs::function::gamma::ln_gamma(k as f64 + 1.0);
                }
                s
            })
            .collect();
        if vectors.is_empty() {
            return Err(Error::Unreachable(format!("P(#T = {n}) = 0")));
        }
        let norm = log_sum_exp(&logw);
        let mut acc = 0.0;
        let cdf = logw
            .iter()
            .map(|w| {
                acc += (w - norm).exp();
                acc
            })
            .collect();
        Ok(Self {
            n,
            atoms: model.atoms().iter().map(|(k, _)| *k).collect(),
            vectors,
            cdf,
            fertile: model.fertile,
            infertile: model.infertile,
        })
    }

    pub fn size(&self) -> u64 {
        self.n
    }

    pub fn sample(&self, rng: &mut Rng) -> MultiTypeTree {
        let u: f64 = rng.random::<f64>() * self.cdf.last().copied().unwrap_or(1.0);
        let idx = self.cdf.partition_point(|&c| c <= u).min(self.vectors.len() - 1);
        let c = &self.vectors[idx];
        let mut seq: Vec<usize> = Vec::with_capacity(c.iter().sum::<u64>() as usize);
        for (s, &k) in c.iter().enumerate() {
            seq.extend(std::iter::repeat_n(s, k as usize));
        }
        shuffle(&mut seq, rng);
        let start = ballot_rotation(&seq, &self.atoms);
        seq.rotate_left(start);
        self.build(&seq)
    }

    fn build(&self, seq: &[usize]) -> MultiTypeTree {
        let mut b = TreeBuilder::with_capacity(self.n as usize);
        let mut stack: Vec<(usize, u32)> = Vec::new();
        let mut fertile_ids = Vec::with_capacity(seq.len());
        for &s in seq {
            let (xi, _) = self.atoms[s];
            let id = match stack.last_mut() {
                None => b.root(self.fertile),
                Some((p, rem)) => {
                    *rem -= 1;
                    let p = *p;
                    b.child(p, self.fertile)
                }
            };
            while stack.last().is_some_and(|&(_, rem)| rem == 0) {
                stack.pop();
            }
            if xi > 0 {
                stack.push((id, xi));
            }
            fertile_ids.push(id);
        }
        // Infertile children go after the fertile ones.
        for (&s, &id) in seq.iter().zip(&fertile_ids) {
            for _ in 0..self.atoms[s].1 {
                b.child(id, self.infertile);
            }
        }
        b.build().0
    }
}

/// Start index of the unique rotation whose partial sums of `ξ − 1` stay
/// non-negative before the last step: right after the first global minimum.
fn ballot_rotation(seq: &[usize], atoms: &[(u32, u32)]) -> usize {
    let mut sum = 0i64;
    let mut best = i64::MAX;
    let mut at = 0;
    for (i, &s) in seq.iter().enumerate() {
        sum += atoms[s].0 as i64 - 1;
        if sum < best {
            best = sum;
            at = i;
        }
    }
    (at + 1) % seq.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn size_one_is_a_single_vertex() {
        let s = SesquiExactSampler::new(&SesquiModel::e1(), 1).unwrap();
        let mut rng = rng_for(1, "x", 0);
        for _ in 0..10 {
            assert_eq!(s.sample(&mut rng).len(), 1);
        }
    }

    #[test]
    fn outputs_have_the_requested_size() {
        let s = SesquiExactSampler::new(&SesquiModel::e1(), 57).unwrap();
        let mut rng = rng_for(2, "x", 0);
        for _ in 0..500 {
            let t = s.sample(&mut rng);
            assert_eq!(t.len(), 57);
            assert_eq!(t.count_of(1) % 2, 1);
        }
    }

    #[test]
    fn rotation_is_a_lukasiewicz_path() {
        let atoms = [(0, 0), (2, 0)];
        let seq = vec![0, 1, 0, 0, 1];
        let k = ballot_rotation(&seq, &atoms);
        let mut r = seq.clone();
        r.rotate_left(k);
        let mut s = 0i64;
        for (i, &a) in r.iter().enumerate() {
            s += atoms[a].0 as i64 - 1;
            assert!(if i + 1 < r.len() { s >= 0 } else { s == -1 });
        }
    }
}
