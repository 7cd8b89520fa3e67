//! Exact step-sum and joint size probabilities.
//!
//! By the cycle lemma, `P(#T = n, #_1 T = ℓ) = P(S_ℓ = (−1, n)) / ℓ` where
//! `S_ℓ` sums ℓ independent steps `(ξ − 1, ζ + 1)`.

use std::collections::{BTreeMap, HashMap};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use statrs::function::gamma::ln_gamma;

use super::sesqui::SesquiModel;
use crate::error::{Error, Result};

/// Law of `S_ℓ` over all reachable points.
pub fn step_sum_law(model: &SesquiModel, ell: usize) -> BTreeMap<(i64, i64), BigRational> {
    let steps = model.steps();
    let probs: Vec<&BigRational> = model.atoms().iter().map(|(_, p)| p).collect();
    let mut cur: HashMap<(i64, i64), BigRational> = HashMap::from([((0, 0), BigRational::one())]);
    for _ in 0..ell {
        let mut next: HashMap<(i64, i64), BigRational> = HashMap::new();
        for (&(x, y), p) in &cur {
            for (&(dx, dy), q) in steps.iter().zip(&probs) {
                *next.entry((x + dx, y + dy)).or_insert_with(BigRational::zero) += p * *q;
            }
        }
        cur = next;
    }
    cur.into_iter().collect()
}

/// `P(S_ℓ = (−1, n))` by dynamic programming over the ℓ steps, keeping only
/// states from which the target is still reachable.
pub fn step_sum_pmf(model: &SesquiModel, ell: usize, n: i64) -> Result<BigRational> {
    if ell == 0 {
        return Err(Error::Invalid("ℓ must be positive".into()));
    }
    let steps = model.steps();
    let probs: Vec<&BigRational> = model.atoms().iter().map(|(_, p)| p).collect();
    let (xmin, xmax) = (steps.iter().map(|s| s.0).min().unwrap(), steps.iter().map(|s| s.0).max().unwrap());
    let (ymin, ymax) = (steps.iter().map(|s| s.1).min().unwrap(), steps.iter().map(|s| s.1).max().unwrap());
    let target = (-1i64, n);
    let mut cur: HashMap<(i64, i64), BigRational> = HashMap::from([((0, 0), BigRational::one())]);
    for i in 0..ell {
        let rem = (ell - i - 1) as i64;
        let mut next: HashMap<(i64, i64), BigRational> = HashMap::new();
        for (&(x, y), p) in &cur {
            for (&(dx, dy), q) in steps.iter().zip(&probs) {
                let (nx, ny) = (x + dx, y + dy);
                let dxr = target.0 - nx;
                let dyr = target.1 - ny;
                if dxr < rem * xmin || dxr > rem * xmax || dyr < rem * ymin || dyr > rem * ymax {
                    continue;
                }
                *next.entry((nx, ny)).or_insert_with(BigRational::zero) += p * *q;
            }
        }
        cur = next;
    }
    Ok(cur.remove(&target).unwrap_or_else(BigRational::zero))
}

/// Arithmetic used by [`joint_size_pmf`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    Exact,
    /// Log-space floating point, for sizes where exact numbers get unwieldy.
    Float,
}

/// Count vectors `c` over the atoms with `Σ c_s (ξ_s − 1) = −1` and
/// `Σ c_s (ζ_s + 1) = n`.
pub(crate) fn count_vectors(model: &SesquiModel, n: u64) -> Vec<Vec<u64>> {
    fn rec(steps: &[(i64, i64)], idx: usize, rx: i64, ry: i64, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        let s = steps.len();
        if s - idx == 1 {
            let (x, y) = steps[idx];
            if ry % y == 0 && (ry / y) * x == rx {
                cur.push((ry / y) as u64);
                out.push(cur.clone());
                cur.pop();
            }
            return;
        }
        if s - idx == 2 {
            let ((xa, ya), (xb, yb)) = (steps[idx], steps[idx + 1]);
            let det = xa * yb - xb * ya;
            if det != 0 {
                let na = rx * yb - xb * ry;
                let nb = xa * ry - rx * ya;
                if na % det == 0 && nb % det == 0 && na / det >= 0 && nb / det >= 0 {
                    cur.push((na / det) as u64);
                    cur.push((nb / det) as u64);
                    out.push(cur.clone());
                    cur.truncate(cur.len() - 2);
                }
                return;
            }
        }
        let (x, y) = steps[idx];
        for c in 0..=(ry / y) {
            cur.push(c as u64);
            rec(steps, idx + 1, rx - c * x, ry - c * y, cur, out);
            cur.pop();
        }
    }
    let steps = model.steps();
    let mut out = Vec::new();
    rec(&steps, 0, -1, n as i64, &mut Vec::new(), &mut out);
    out
}

/// Factorials `0!..=n!`.
fn factorials(n: u64) -> Vec<BigUint> {
    let mut f = Vec::with_capacity(n as usize + 1);
    f.push(BigUint::one());
    for k in 1..=n {
        let next = &f[k as usize - 1] * BigUint::from(k);
        f.push(next);
    }
    f
}

/// Exact `P(S_ℓ = (−1, n))` contribution of one count vector.
fn multinomial_term(model: &SesquiModel, c: &[u64], fact: &[BigUint]) -> BigRational {
    let ell: u64 = c.iter().sum();
    let mut num = BigInt::from(fact[ell as usize].clone());
    let mut den = BigInt::one();
    for (&k, (_, p)) in c.iter().zip(model.atoms()) {
        den *= BigInt::from(fact[k as usize].clone());
        num *= num_traits::pow(p.numer().clone(), k as usize);
        den *= num_traits::pow(p.denom().clone(), k as usize);
    }
    BigRational::new(num, den)
}

fn log_multinomial_term(model: &SesquiModel, c: &[u64]) -> f64 {
    let ell: u64 = c.iter().sum();
    let mut s = ln_gamma(ell as f64 + 1.0);
    for (&k, (_, p)) in c.iter().zip(model.atoms()) {
        s -= ln_gamma(k as f64 + 1.0);
        s += k as f64 * crate::model::ratio_to_f64(p).ln();
    }
    s
}

/// `ℓ ↦ P(#T = n, #_1 T = ℓ)` computed as `P(S_ℓ = (−1, n)) / ℓ` by summing
/// multinomial terms over count vectors.
pub fn joint_size_pmf(model: &SesquiModel, n: u64) -> Result<BTreeMap<u64, BigRational>> {
    if n == 0 {
        return Err(Error::Invalid("n must be positive".into()));
    }
    let fact = factorials(n);
    let mut out: BTreeMap<u64, BigRational> = BTreeMap::new();
    for c in count_vectors(model, n) {
        let ell: u64 = c.iter().sum();
        let t = multinomial_term(model, &c, &fact);
        *out.entry(ell).or_insert_with(BigRational::zero) += t;
    }
    for (ell, p) in out.iter_mut() {
        *p /= BigRational::from_integer(BigInt::from(*ell));
    }
    out.retain(|_, p| !p.is_zero());
    Ok(out)
}

/// Floating-point version of [`joint_size_pmf`].
pub fn joint_size_pmf_f64(model: &SesquiModel, n: u64) -> Result<BTreeMap<u64, f64>> {
    if n == 0 {
        return Err(Error::Invalid("n must be positive".into()));
    }
    let mut logs: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for c in count_vectors(model, n) {
        let ell: u64 = c.iter().sum();
        logs.entry(ell).or_default().push(log_multinomial_term(model, &c));
    }
    Ok(logs.into_iter().map(|(ell, ls)| (ell, log_sum_exp(&ls).exp() / ell as f64)).collect())
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Joint law as floats in the requested precision.
pub fn joint_size_pmf_as(model: &SesquiModel, n: u64, precision: Precision) -> Result<BTreeMap<u64, f64>> {
    match precision {
        Precision::Exact => Ok(joint_size_pmf(model, n)?
            .into_iter()
            .map(|(l, p)| (l, crate::model::ratio_to_f64(&p)))
            .collect()),
        Precision::Float => joint_size_pmf_f64(model, n),
    }
}

/// Exact `P(#T = n)`.
pub fn size_pmf(model: &SesquiModel, n: u64) -> Result<BigRational> {
    Ok(joint_size_pmf(model, n)?.into_values().sum())
}
