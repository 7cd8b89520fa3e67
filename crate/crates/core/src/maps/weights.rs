//! Face-weight sequences and the bivariate series `f•`, `f⋄` that drive the
//! mobile offspring laws.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Face weights `q_n`, either an explicit table or `q_n = t·λ^n` for `n ≥ 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum WeightSequence {
    Table(BTreeMap<u32, f64>),
    Power { t: f64, lambda: f64 },
}

impl WeightSequence {
    pub fn table(pairs: &[(u32, f64)]) -> Result<Self> {
        let mut m = BTreeMap::new();
        for &(n, q) in pairs {
            if !(q >= 0.0 && q.is_finite()) {
                return Err(Error::Model(format!("weight q_{n} = {q} is not a non-negative number")));
            }
            if q > 0.0 {
                m.insert(n, q);
            }
        }
        if !m.keys().any(|&n| n >= 3) {
            return Err(Error::Model("some face degree n ≥ 3 needs a positive weight".into()));
        }
        Ok(Self::Table(m))
    }

    pub fn power(t: f64, lambda: f64) -> Result<Self> {
        if !(t > 0.0 && lambda > 0.0 && t.is_finite() && lambda.is_finite()) {
            return Err(Error::Model(format!("need t > 0 and λ > 0, got t = {t}, λ = {lambda}")));
        }
        Ok(Self::Power { t, lambda })
    }

    pub fn q(&self, n: u32) -> f64 {
        match self {
            Self::Table(m) => m.get(&n).copied().unwrap_or(0.0),
            Self::Power { t, lambda } if n >= 1 => t * lambda.powi(n as i32),
            Self::Power { .. } => 0.0,
        }
    }

    /// Largest degree with a positive weight; `None` when unbounded.
    pub fn max_degree(&self) -> Option<u32> {
        match self {
            Self::Table(m) => m.keys().next_back().copied(),
            Self::Power { .. } => None,
        }
    }
}

/// Which of the two series: `f•` (faces hanging off a labelled vertex) or
/// `f⋄` (faces hanging off a flagged vertex).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Series {
    Bullet,
    Diamond,
}

impl Series {
    /// Face degree contributed by the `(k, k′)` term.
    pub fn degree(self, k: u32, kp: u32) -> u32 {
        match self {
            Series::Bullet => 2 + 2 * k + kp,
            Series::Diamond => 1 + 2 * k + kp,
        }
    }

    pub fn min_degree(self) -> u32 {
        self.degree(0, 0)
    }

    /// Exact coefficient of `q_deg x^k y^k′`.
    pub fn coefficient(self, k: u32, kp: u32) -> u128 {
        let (k, kp) = (k as u64, kp as u64);
        let first = match self {
            Series::Bullet => binomial(2 * k + kp + 1, k + 1),
            Series::Diamond => binomial(2 * k + kp, k),
        };
        first * binomial(k + kp, k)
    }

    pub fn ln_coefficient(self, k: u32, kp: u32) -> f64 {
        use statrs::function::factorial::ln_binomial;
        let (k, kp) = (k as u64, kp as u64);
        let first = match self {
            Series::Bullet => ln_binomial(2 * k + kp + 1, k + 1),
            Series::Diamond => ln_binomial(2 * k + kp, k),
        };
        first + ln_binomial(k + kp, k)
    }

    /// `(k, k′)` pairs whose term has the given face degree.
    pub fn pairs_of_degree(self, deg: u32) -> impl Iterator<Item = (u32, u32)> {
        let base = self.min_degree();
        let rest = deg.checked_sub(base);
        (0..=rest.map_or(0, |r| r / 2)).filter_map(move |k| rest.map(|r| (k, r - 2 * k)))
    }
}

/// Exact binomial coefficient; panics on `u128` overflow, which needs
/// arguments far beyond anything used here.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// A series value with its first partial derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    pub dx: f64,
    pub dy: f64,
}

/// Term `(k, k′)` of a series at `(x, y)`, computed in log space.
pub fn term(q: &WeightSequence, s: Series, k: u32, kp: u32, x: f64, y: f64) -> f64 {
    let w = q.q(s.degree(k, kp));
    if w == 0.0 {
        return 0.0;
    }
    let mut ln = s.ln_coefficient(k, kp) + w.ln();
    if k > 0 {
        if x == 0.0 {
            return 0.0;
        }
        ln += k as f64 * x.ln();
    }
    if kp > 0 {
        if y == 0.0 {
            return 0.0;
        }
        ln += kp as f64 * y.ln();
    }
    ln.exp()
}

/// Sum of the terms of one face degree.
pub fn degree_mass(q: &WeightSequence, s: Series, deg: u32, x: f64, y: f64) -> f64 {
    s.pairs_of_degree(deg).map(|(k, kp)| term(q, s, k, kp, x, y)).sum()
}

/// Direct summation over face degrees up to `max_degree`.
pub fn series_truncated(q: &WeightSequence, s: Series, x: f64, y: f64, max_degree: u32) -> f64 {
    (s.min_degree()..=max_degree).map(|d| degree_mass(q, s, d, x, y)).sum()
}

/// Evaluates a series and its gradient. Tables are summed exactly; the
/// power family uses the closed forms.
pub fn evaluate(q: &WeightSequence, s: Series, x: f64, y: f64) -> Result<SeriesValue> {
    if !(x >= 0.0 && y >= 0.0) {
        return Err(Error::Invalid(format!("series need x, y ≥ 0, got ({x}, {y})")));
    }
    match q {
        WeightSequence::Table(m) => {
            let mut out = SeriesValue { value: 0.0, dx: 0.0, dy: 0.0 };
            let top = m.keys().next_back().copied().unwrap_or(0);
            for deg in s.min_degree()..=top {
                for (k, kp) in s.pairs_of_degree(deg) {
                    let c = s.coefficient(k, kp) as f64 * q.q(deg);
                    if c == 0.0 {
                        continue;
                    }
                    out.value += c * x.powi(k as i32) * y.powi(kp as i32);
                    if k > 0 {
                        out.dx += c * k as f64 * x.powi(k as i32 - 1) * y.powi(kp as i32);
                    }
                    if kp > 0 {
                        out.dy += c * kp as f64 * x.powi(k as i32) * y.powi(kp as i32 - 1);
                    }
                }
            }
            Ok(out)
        }
        &WeightSequence::Power { t, lambda } => closed_form(s, t, lambda, x, y),
    }
}

fn closed_form(s: Series, t: f64, l: f64, x: f64, y: f64) -> Result<SeriesValue> {
    let u = 1.0 - l * y;
    let disc = 1.0 - 4.0 * l * l * x / (u * u);
    if u <= 0.0 || disc <= 0.0 {
        return Err(Error::Divergence { x, y });
    }
    let z = disc.sqrt();
    let zx = -2.0 * l * l / (u * u * z);
    let zy = -4.0 * l * l * l * x / (u * u * u * z);
    Ok(match s {
        Series::Bullet => {
            if x == 0.0 {
                // Limit of t(1 − Z)/(2xZ) as x → 0 and its derivatives.
                let a = l * l / (u * u);
                return Ok(SeriesValue { value: t * a, dx: 3.0 * t * a * a, dy: 2.0 * t * l * a / u });
            }
            let g = 1.0 / z - 1.0;
            SeriesValue {
                value: t * g / (2.0 * x),
                dx: -t * g / (2.0 * x * x) - t / (2.0 * x) * zx / (z * z),
                dy: -t / (2.0 * x) * zy / (z * z),
            }
        }
        Series::Diamond => SeriesValue {
            value: t * l / (u * z),
            dx: -t * l / u * zx / (z * z),
            dy: t * l * (l / (u * u * z) - zy / (u * z * z)),
        },
    })
}

pub fn f_bullet(q: &WeightSequence, x: f64, y: f64) -> Result<f64> {
    Ok(evaluate(q, Series::Bullet, x, y)?.value)
}

pub fn f_diamond(q: &WeightSequence, x: f64, y: f64) -> Result<f64> {
    Ok(evaluate(q, Series::Diamond, x, y)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_degree_three_table() {
        let q = WeightSequence::table(&[(3, 0.5)]).unwrap();
        let (x, y) = (1.3, 0.7);
        // Degree 3: bullet has (k, k′) = (0, 1) only, diamond (1, 0) and (0, 2).
        let b = f_bullet(&q, x, y).unwrap();
        assert!((b - 0.5 * 2.0 * y).abs() < 1e-15);
        let d = f_diamond(&q, x, y).unwrap();
        assert!((d - 0.5 * (2.0 * x + y * y)).abs() < 1e-15);
    }

    #[test]
    fn origin_keeps_only_the_constant_term() {
        let q = WeightSequence::table(&[(2, 0.25), (3, 0.5), (4, 0.1)]).unwrap();
        assert_eq!(f_bullet(&q, 0.0, 0.0).unwrap(), 0.25);
        let p = WeightSequence::power(2.0, 0.3).unwrap();
        assert!((f_bullet(&p, 0.0, 0.0).unwrap() - 2.0 * 0.09).abs() < 1e-15);
        assert!((f_diamond(&p, 0.0, 0.0).unwrap() - 2.0 * 0.3).abs() < 1e-15);
    }

    #[test]
    fn closed_forms_match_truncated_series() {
        for &(t, l, x, y) in &[(1.0, 0.2, 1.2, 0.5), (0.5, 0.25, 1.1, 0.3), (2.0, 0.15, 1.5, 0.9)] {
            let q = WeightSequence::power(t, l).unwrap();
            for s in [Series::Bullet, Series::Diamond] {
                let closed = evaluate(&q, s, x, y).unwrap().value;
                let series = series_truncated(&q, s, x, y, 400);
                assert!((closed - series).abs() < 1e-9, "{s:?}: {closed} vs {series}");
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let q = WeightSequence::power(1.0, 0.28).unwrap();
        let tab = WeightSequence::table(&[(2, 0.1), (3, 0.2), (4, 0.05), (6, 0.01)]).unwrap();
        for q in [q, tab] {
            for s in [Series::Bullet, Series::Diamond] {
                let (x, y) = (1.25, 0.6);
                let v = evaluate(&q, s, x, y).unwrap();
                let h = 1e-6;
                let fx = (evaluate(&q, s, x + h, y).unwrap().value - evaluate(&q, s, x - h, y).unwrap().value) / (2.0 * h);
                let fy = (evaluate(&q, s, x, y + h).unwrap().value - evaluate(&q, s, x, y - h).unwrap().value) / (2.0 * h);
                assert!((v.dx - fx).abs() < 1e-6 * (1.0 + fx.abs()), "{s:?} dx {} vs {fx}", v.dx);
                assert!((v.dy - fy).abs() < 1e-6 * (1.0 + fy.abs()), "{s:?} dy {} vs {fy}", v.dy);
            }
        }
    }

    #[test]
    fn divergence_is_reported() {
        let q = WeightSequence::power(1.0, 0.5).unwrap();
        assert!(matches!(f_bullet(&q, 2.0, 0.1), Err(Error::Divergence { .. })));
        assert!(matches!(f_diamond(&q, 1.0, 2.5), Err(Error::Divergence { .. })));
    }

    #[test]
    fn coefficients() {
        assert_eq!(Series::Bullet.coefficient(0, 0), 1);
        assert_eq!(Series::Bullet.coefficient(1, 0), 3);
        assert_eq!(Series::Diamond.coefficient(1, 1), 3 * 2);
        assert_eq!(binomial(10, 3), 120);
        let pairs: Vec<_> = Series::Diamond.pairs_of_degree(4).collect();
        assert_eq!(pairs, vec![(0, 3), (1, 1)]);
        assert_eq!(Series::Bullet.pairs_of_degree(1).count(), 0);
    }
}
