//! Size tail asymptotics and the conditional central limit theorem for the
//! number of fertile vertices.

use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;
use statrs::function::erf::erf;

use super::pmf::{joint_size_pmf_as, Precision};
use super::sesqui::{CltParams, SesquiModel};
use crate::error::{Error, Result};
use crate::model::ratio_to_f64;

fn check_critical(model: &SesquiModel) -> Result<()> {
    if model.is_critical() {
        Ok(())
    } else {
        Err(Error::Model("the fertile offspring mean must equal 1".into()))
    }
}

/// `P(#T = n) · n^{3/2} / tail_const`, which tends to 1.
pub fn tail_asymptotic_check(model: &SesquiModel, n: u64, precision: Precision) -> Result<f64> {
    check_critical(model)?;
    let (a, big_d) = model.size_lattice()?;
    if n < a || (n - a) % big_d != 0 {
        return Err(Error::Unreachable(format!("size {n} is outside {a} + {big_d}N")));
    }
    let p: f64 = joint_size_pmf_as(model, n, precision)?.values().sum();
    if p == 0.0 {
        return Err(Error::Unreachable(format!("P(#T = {n}) = 0")));
    }
    let c = CltParams::of(model)?;
    Ok(p * (n as f64).powf(1.5) / c.tail_const)
}

/// Conditional law of `#_1 T` given `#T = n`, as `(ℓ, probability)` pairs.
pub fn conditional_fertile_law(model: &SesquiModel, n: u64, precision: Precision) -> Result<Vec<(u64, f64)>> {
    let joint = joint_size_pmf_as(model, n, precision)?;
    let total: f64 = joint.values().sum();
    if total == 0.0 {
        return Err(Error::Unreachable(format!("P(#T = {n}) = 0")));
    }
    Ok(joint.into_iter().map(|(l, p)| (l, p / total)).collect())
}

pub fn normal_cdf(x: f64, sigma: f64) -> f64 {
    0.5 * (1.0 + erf(x / (sigma * std::f64::consts::SQRT_2)))
}

/// Kolmogorov-Smirnov distance between a discrete law on the real line and
/// `N(0, σ²)`.
pub fn ks_to_normal(points: &[(f64, f64)], sigma: f64) -> f64 {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cdf = 0.0;
    let mut ks: f64 = 0.0;
    for (x, p) in pts {
        let phi = normal_cdf(x, sigma);
        ks = ks.max((cdf - phi).abs());
        cdf += p;
        ks = ks.max((cdf - phi).abs());
    }
    ks
}

/// Summary of the conditional CLT at one size.
#[derive(Clone, Debug, Serialize)]
pub struct CltReport {
    pub n: u64,
    pub ks: f64,
    /// `E[#_1 T / n | #T = n]`.
    pub mean_fraction: f64,
    /// Per lattice point: `(x, exact probability / Gaussian lattice density)`.
    pub local_ratios: Vec<(f64, f64)>,
}

pub fn conditional_clt_check(model: &SesquiModel, n: u64, precision: Precision) -> Result<CltReport> {
    check_critical(model)?;
    let params = CltParams::of(model)?;
    let rep = model.full_lattice_report()?;
    let law = conditional_fertile_law(model, n, precision)?;
    let mu = ratio_to_f64(&params.mu);
    let sigma = params.sigma();
    let sq = (n as f64).sqrt();
    let pts: Vec<(f64, f64)> = law.iter().map(|&(l, p)| ((l as f64 - mu * n as f64) / sq, p)).collect();
    let ks = ks_to_normal(&pts, sigma);
    let mean_fraction = law.iter().map(|&(l, p)| p * l as f64 / n as f64).sum();
    let local_ratios = pts
        .iter()
        .map(|&(x, p)| {
            let dens = rep.d as f64 / (sigma * sq) * (-(x * x) / (2.0 * sigma * sigma)).exp()
                / (2.0 * std::f64::consts::PI).sqrt();
            (x, p / dens)
        })
        .collect();
    Ok(CltReport { n, ks, mean_fraction, local_ratios })
}

/// Density of `N(0, Σ)` at `y`.
pub fn gaussian_density(y: &[f64], sigma: &[Vec<f64>]) -> Result<f64> {
    let s = y.len();
    if sigma.len() != s || sigma.iter().any(|r| r.len() != s) {
        return Err(Error::Invalid("covariance shape does not match the point".into()));
    }
    // Cholesky factor L with Σ = L Lᵀ.
    let mut l = vec![vec![0.0; s]; s];
    for i in 0..s {
        for j in 0..=i {
            let mut v = sigma[i][j];
            for k in 0..j {
                v -= l[i][k] * l[j][k];
            }
            if i == j {
                if v <= 0.0 {
                    return Err(Error::Invalid("covariance is not positive definite".into()));
                }
                l[i][i] = v.sqrt();
            } else {
                l[i][j] = v / l[j][j];
            }
        }
    }
    // Solve L z = y; the quadratic form is |z|².
    let mut z = vec![0.0; s];
    for i in 0..s {
        let mut v = y[i];
        for k in 0..i {
            v -= l[i][k] * z[k];
        }
        z[i] = v / l[i][i];
    }
    let q: f64 = z.iter().map(|v| v * v).sum();
    let det_sqrt: f64 = (0..s).map(|i| l[i][i]).product();
    Ok((-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powf(s as f64 / 2.0) * det_sqrt))
}

/// Exact `E[#_1 T | #T = n]` as a rational.
pub fn exact_mean_fertile(model: &SesquiModel, n: u64) -> Result<BigRational> {
    let joint = super::pmf::joint_size_pmf(model, n)?;
    let total: BigRational = joint.values().cloned().sum();
    if total.is_zero() {
        return Err(Error::Unreachable(format!("P(#T = {n}) = 0")));
    }
    let s: BigRational =
        joint.iter().map(|(l, p)| p * BigRational::from_integer((*l).into())).sum();
    Ok(s / total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_density_basics() {
        let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let v = gaussian_density(&[0.0, 0.0], &id).unwrap();
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
        let s = vec![vec![2.0, 0.3], vec![0.3, 0.5]];
        let a = gaussian_density(&[0.4, -1.1], &s).unwrap();
        let b = gaussian_density(&[-0.4, 1.1], &s).unwrap();
        assert!((a - b).abs() < 1e-15);
        let diag = vec![vec![2.0, 0.0], vec![0.0, 0.5]];
        let one = |x: f64, v: f64| (-(x * x) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        let prod = one(0.4, 2.0) * one(-1.1, 0.5);
        assert!((gaussian_density(&[0.4, -1.1], &diag).unwrap() - prod).abs() < 1e-15);
        assert!(gaussian_density(&[0.0, 0.0], &[vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
    }

    #[test]
    fn wrong_residue_is_rejected() {
        let m = SesquiModel::new(vec![
            ((0, 1), crate::model::parse_ratio("1/2").unwrap()),
            ((2, 0), crate::model::parse_ratio("1/2").unwrap()),
        ])
        .unwrap();
        // Sizes are 2 mod 3.
        assert!(tail_asymptotic_check(&m, 30, Precision::Exact).is_err());
    }

    #[test]
    fn ks_of_exact_normal_grid_is_small() {
        // A fine discretization of N(0,1) is close in KS distance.
        let h = 0.001;
        let pts: Vec<(f64, f64)> =
            (-8000..=8000).map(|i| (i as f64 * h, h * (-(i as f64 * h).powi(2) / 2.0).exp() / 2.5066282746310002)).collect();
        assert!(ks_to_normal(&pts, 1.0) < 1e-3);
    }
}
