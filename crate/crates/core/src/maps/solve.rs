//! Admissibility and criticality of face-weight sequences: the fixed-point
//! system `f•(x,y) = 1 − 1/x`, `f⋄(x,y) = y`, the associated 3×3 mean
//! matrix and the closed-form critical point of the vertex-weighted family.

use num_complex::Complex64;
use serde::Serialize;

use super::weights::{evaluate, Series, SeriesValue, WeightSequence};
use crate::error::{Error, Result};

/// Solution of the fixed-point system together with its diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct BoltzmannParams {
    pub q: WeightSequence,
    /// `Z⁺`, the partition function of positive pointed maps.
    pub x: f64,
    /// `√Z⁰`.
    pub y: f64,
    pub residual_bullet: f64,
    pub residual_diamond: f64,
    pub residual_crit: f64,
    pub spectral_radius: f64,
    pub critical: bool,
}

/// Tolerance on `|ρ − 1|` for the criticality flag.
pub const CRITICAL_TOL: f64 = 1e-6;

struct Point {
    b: SeriesValue,
    d: SeriesValue,
}

fn point(q: &WeightSequence, x: f64, y: f64) -> Result<Point> {
    Ok(Point { b: evaluate(q, Series::Bullet, x, y)?, d: evaluate(q, Series::Diamond, x, y)? })
}

fn residuals(p: &Point, x: f64, y: f64) -> [f64; 3] {
    let jac = p.b.dx * p.d.dy - p.b.dy * p.d.dx;
    [
        p.b.value - (1.0 - 1.0 / x),
        p.d.value - y,
        x * x * jac + 1.0 - x * x * p.b.dx - p.d.dy,
    ]
}

/// Residual of the criticality identity `x²J + 1 = x²∂ₓf• + ∂ᵧf⋄`.
pub fn crit_residual(q: &WeightSequence, x: f64, y: f64) -> Result<f64> {
    Ok(residuals(&point(q, x, y)?, x, y)[2])
}

/// The 3×3 matrix whose spectral radius decides admissibility and
/// criticality.
pub fn mean_matrix(q: &WeightSequence, x: f64, y: f64) -> Result<[[f64; 3]; 3]> {
    let p = point(q, x, y)?;
    Ok([
        [0.0, 0.0, x - 1.0],
        [if y == 0.0 { 0.0 } else { x / y * p.d.dx }, p.d.dy, 0.0],
        [x * x / (x - 1.0) * p.b.dx, x * y / (x - 1.0) * p.b.dy, 0.0],
    ])
}

/// Roots of `μ³ + a μ² + b μ + c`.
pub fn cubic_roots(a: f64, b: f64, c: f64) -> [Complex64; 3] {
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let disc = Complex64::new(q * q / 4.0 + p * p * p / 27.0, 0.0).sqrt();
    let mut u = (Complex64::new(-q / 2.0, 0.0) + disc).cbrt();
    if u.norm() < 1e-300 {
        u = (Complex64::new(-q / 2.0, 0.0) - disc).cbrt();
    }
    let omega = Complex64::new(-0.5, 3f64.sqrt() / 2.0);
    let mut roots = [Complex64::new(0.0, 0.0); 3];
    let mut w = Complex64::new(1.0, 0.0);
    for r in roots.iter_mut() {
        let uk = u * w;
        let vk = if uk.norm() < 1e-300 { Complex64::new(0.0, 0.0) } else { -p / (3.0 * uk) };
        *r = uk + vk - a / 3.0;
        w *= omega;
    }
    // Newton polish against cancellation.
    for r in roots.iter_mut() {
        for _ in 0..3 {
            let f = ((*r + a) * *r + b) * *r + c;
            let df = (3.0 * *r + 2.0 * a) * *r + b;
            if df.norm() > 1e-300 {
                *r -= f / df;
            }
        }
    }
    roots
}

pub fn spectral_radius(m: &[[f64; 3]; 3]) -> f64 {
    let tr = m[0][0] + m[1][1] + m[2][2];
    let minors = m[0][0] * m[1][1] - m[0][1] * m[1][0] + m[0][0] * m[2][2] - m[0][2] * m[2][0] + m[1][1] * m[2][2]
        - m[1][2] * m[2][1];
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    cubic_roots(-tr, minors, -det).iter().map(|r| r.norm()).fold(0.0, f64::max)
}

/// Diagnostics at a given `(x, y)`.
pub fn params_at(q: &WeightSequence, x: f64, y: f64) -> Result<BoltzmannParams> {
    let p = point(q, x, y)?;
    let [r1, r2, r3] = residuals(&p, x, y);
    let m = mean_matrix(q, x, y)?;
    // Without flagged vertices only the labelled/face block matters.
    let rho = if y == 0.0 { (m[0][2] * m[2][0]).max(0.0).sqrt() } else { spectral_radius(&m) };
    Ok(BoltzmannParams {
        q: q.clone(),
        x,
        y,
        residual_bullet: r1,
        residual_diamond: r2,
        residual_crit: r3,
        spectral_radius: rho,
        critical: (rho - 1.0).abs() <= CRITICAL_TOL,
    })
}

const MAX_X: f64 = 1e6;

/// Solves the fixed-point system for the minimal solution with `x > 1`.
///
/// A monotone iteration from `(1, 0)` converges to the minimal fixed point
/// when one exists. Newton's method then polishes it; near a fold (the
/// critical case) the Jacobian degenerates, so the criticality identity is
/// added as a third equation and the overdetermined system is solved by
/// Gauss-Newton.
pub fn solve_admissible(q: &WeightSequence, tol: f64) -> Result<BoltzmannParams> {
    let (mut x, mut y) = (1.0f64, 0.0f64);
    let mut converged = false;
    for _ in 0..2_000_000 {
        let p = point(q, x, y).map_err(|_| not_admissible(x, y))?;
        if p.b.value >= 1.0 {
            return Err(not_admissible(x, y));
        }
        let nx = 1.0 / (1.0 - p.b.value);
        let ny = p.d.value;
        if !(nx.is_finite() && nx < MAX_X) {
            return Err(not_admissible(nx, ny));
        }
        let [r1, r2, _] = residuals(&p, x, y);
        let step = (nx - x).abs().max((ny - y).abs());
        (x, y) = (nx, ny);
        if step < 1e-15 * x || r1.abs().max(r2.abs()) < 1e-7 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(not_admissible(x, y));
    }
    (x, y) = newton(q, x, y)?;
    let base = params_at(q, x, y)?;
    if base.residual_crit.abs() < 1e-3 {
        if let Ok((gx, gy)) = gauss_newton(q, x, y) {
            if let Ok(refined) = params_at(q, gx, gy) {
                let old = base.residual_bullet.abs().max(base.residual_diamond.abs());
                let new = refined.residual_bullet.abs().max(refined.residual_diamond.abs());
                if new <= old.max(tol * 1e-2) && refined.residual_crit.abs() <= base.residual_crit.abs() {
                    return finish(refined, tol);
                }
            }
        }
    }
    finish(base, tol)
}

fn finish(p: BoltzmannParams, tol: f64) -> Result<BoltzmannParams> {
    if p.x > 1.0 && p.residual_bullet.abs() < tol && p.residual_diamond.abs() < tol {
        Ok(p)
    } else {
        Err(Error::NotAdmissible(format!(
            "residuals {:.2e}, {:.2e} at x = {}, y = {} exceed the tolerance {tol:.1e}",
            p.residual_bullet, p.residual_diamond, p.x, p.y
        )))
    }
}

fn not_admissible(x: f64, y: f64) -> Error {
    Error::NotAdmissible(format!("fixed-point iteration left the search box near x = {x}, y = {y}"))
}

fn newton(q: &WeightSequence, mut x: f64, mut y: f64) -> Result<(f64, f64)> {
    let mut p = point(q, x, y)?;
    let mut r = residuals(&p, x, y);
    for _ in 0..200 {
        let norm = r[0].abs().max(r[1].abs());
        if norm < 1e-16 {
            break;
        }
        let j = [[p.b.dx - 1.0 / (x * x), p.b.dy], [p.d.dx, p.d.dy - 1.0]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dx = (r[0] * j[1][1] - r[1] * j[0][1]) / det;
        let dy = (r[1] * j[0][0] - r[0] * j[1][0]) / det;
        // Damped step: stay inside the domain and reduce the residual.
        let mut s = 1.0;
        let mut moved = false;
        while s > 1e-6 {
            let (nx, ny) = (x - s * dx, y - s * dy);
            if let Ok(np) = point(q, nx, ny) {
                let nr = residuals(&np, nx, ny);
                if nr[0].abs().max(nr[1].abs()) < norm {
                    (x, y, p, r) = (nx, ny, np, nr);
                    moved = true;
                    break;
                }
            }
            s /= 2.0;
        }
        if !moved {
            break;
        }
    }
    Ok((x, y))
}

fn gauss_newton(q: &WeightSequence, mut x: f64, mut y: f64) -> Result<(f64, f64)> {
    let res = |x: f64, y: f64| -> Result<[f64; 3]> { Ok(residuals(&point(q, x, y)?, x, y)) };
    for _ in 0..50 {
        let r = res(x, y)?;
        let hx = 1e-7 * x.abs().max(1e-3);
        let hy = 1e-7 * y.abs().max(1e-3);
        let (rxp, rxm) = (res(x + hx, y)?, res(x - hx, y)?);
        let (ryp, rym) = (res(x, y + hy)?, res(x, y - hy)?);
        let jx: Vec<f64> = (0..3).map(|i| (rxp[i] - rxm[i]) / (2.0 * hx)).collect();
        let jy: Vec<f64> = (0..3).map(|i| (ryp[i] - rym[i]) / (2.0 * hy)).collect();
        // Normal equations of the 3×2 least-squares step.
        let a11: f64 = jx.iter().map(|v| v * v).sum();
        let a12: f64 = jx.iter().zip(&jy).map(|(a, b)| a * b).sum();
        let a22: f64 = jy.iter().map(|v| v * v).sum();
        let b1: f64 = jx.iter().zip(&r).map(|(a, b)| a * b).sum();
        let b2: f64 = jy.iter().zip(&r).map(|(a, b)| a * b).sum();
        let det = a11 * a22 - a12 * a12;
        if det.abs() < 1e-300 {
            break;
        }
        let dx = (b1 * a22 - b2 * a12) / det;
        let dy = (b2 * a11 - b1 * a12) / det;
        x -= dx;
        y -= dy;
        if dx.abs() < 1e-16 * x.abs() && dy.abs() < 1e-16 * y.abs().max(1e-16) {
            break;
        }
    }
    Ok((x, y))
}

/// Critical parameters of `q_n = t·λ^n`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct VertexWeightParams {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub lambda: f64,
}

impl VertexWeightParams {
    pub fn weights(&self) -> WeightSequence {
        WeightSequence::Power { t: self.t, lambda: self.lambda }
    }
}

/// Closed-form critical point `x(t)`, evaluated with principal complex
/// roots; the imaginary parts cancel.
pub fn vertex_weight_x(t: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Invalid(format!("t must be positive, got {t}")));
    }
    let c = |v: f64| Complex64::new(v, 0.0);
    let cr2 = 2f64.cbrt();
    let w = c(-(t - 1.0).powi(2) * t * t).cbrt();
    let a = (6.0 * cr2 * w + c(4.0 * (t - 1.0) * t + 4.0)).sqrt();
    let b = (3.0 * w / cr2.powi(2) + c((t - 1.0) * t + 1.0)).sqrt();
    let inner = c(-4.0 * (t + 1.0) * (2.0 * t - 1.0) * (t - 2.0)) / (9.0 * b) - 2.0 / 3.0 * cr2 * w
        + c(8.0 / 9.0 * (t - 2.0).powi(2) + 8.0 * (t - 1.0) / 3.0);
    let x = c(2.0 / 3.0 - t / 3.0) + a / 6.0 + inner.sqrt() / 2.0;
    if x.im.abs() > 1e-9 * x.re.abs().max(1.0) {
        return Err(Error::Invalid(format!("closed form for x({t}) left the real line: {x}")));
    }
    Ok(x.re)
}

pub fn vertex_weight_params(t: f64) -> Result<VertexWeightParams> {
    let x = vertex_weight_x(t)?;
    if x <= 1.0 {
        return Err(Error::Invalid(format!("closed form gave x({t}) = {x} ≤ 1")));
    }
    let y = (x - 1.0).sqrt() * (t + x - 1.0).sqrt() / x.sqrt();
    let lambda = (x - 1.0).sqrt() * x.sqrt() * (t + x - 1.0).sqrt() / (2.0 * (t - 2.0) * x - t + 3.0 * x * x + 1.0);
    if !(y > 0.0 && lambda > 0.0) {
        return Err(Error::Invalid(format!("non-positive y = {y} or λ = {lambda} at t = {t}")));
    }
    Ok(VertexWeightParams { t, x, y, lambda })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_roots_of_known_polynomials() {
        // (μ − 1)(μ − 2)(μ + 3) = μ³ − 7μ + 6.
        let mut r: Vec<f64> = cubic_roots(0.0, -7.0, 6.0).iter().map(|z| z.re).collect();
        r.sort_by(f64::total_cmp);
        for (a, b) in r.iter().zip([-3.0, 1.0, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        // μ³ − 1: radius 1 with a complex pair.
        let r = cubic_roots(0.0, 0.0, -1.0);
        assert!(r.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        let m = [[2.0, 0.0, 0.0], [0.0, -5.0, 0.0], [0.0, 0.0, 1.0]];
        assert!((spectral_radius(&m) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_maps_closed_form() {
        let p = vertex_weight_params(1.0).unwrap();
        assert!((p.x - 4.0 / 3.0).abs() < 1e-14);
        assert!((p.lambda - 1.0 / (2.0 * 3f64.sqrt())).abs() < 1e-14);
        let b = params_at(&p.weights(), p.x, p.y).unwrap();
        assert!(b.residual_bullet.abs() < 1e-12 && b.residual_diamond.abs() < 1e-12);
        assert!(b.residual_crit.abs() < 1e-10);
        assert!((b.spectral_radius - 1.0).abs() < 1e-6);
    }

    #[test]
    fn closed_form_is_critical_for_other_t() {
        for t in [0.5, 2.0, 0.1, 7.0] {
            let p = vertex_weight_params(t).unwrap();
            let b = params_at(&p.weights(), p.x, p.y).unwrap();
            assert!(b.residual_bullet.abs() < 1e-10, "t = {t}: {b:?}");
            assert!(b.residual_diamond.abs() < 1e-10, "t = {t}: {b:?}");
            assert!(b.residual_crit.abs() < 1e-8, "t = {t}: {b:?}");
            assert!(b.critical, "t = {t}: {b:?}");
        }
    }

    #[test]
    fn duality_of_the_critical_point() {
        // Duality swaps vertices and faces, which rescales x − 1 by t.
        for t in [0.5, 3.0] {
            let a = vertex_weight_x(t).unwrap();
            let b = vertex_weight_x(1.0 / t).unwrap();
            assert!(((a - 1.0) - t * (b - 1.0)).abs() < 1e-12, "t = {t}: {a} vs {b}");
        }
    }

    #[test]
    fn solver_recovers_the_closed_form() {
        for t in [0.5, 1.0, 2.0] {
            let p = vertex_weight_params(t).unwrap();
            let s = solve_admissible(&p.weights(), 1e-10).unwrap();
            assert!((s.x - p.x).abs() < 1e-8, "t = {t}: {} vs {}", s.x, p.x);
            assert!((s.y - p.y).abs() < 1e-8, "t = {t}: {} vs {}", s.y, p.y);
            assert!(s.critical);
        }
    }

    #[test]
    fn subcritical_weights_are_flagged() {
        let p = vertex_weight_params(1.0).unwrap();
        let q = WeightSequence::power(1.0, 0.95 * p.lambda).unwrap();
        let s = solve_admissible(&q, 1e-10).unwrap();
        assert!(!s.critical);
        assert!(s.spectral_radius < 1.0);
        assert!(s.x > 1.0 && s.x < p.x);
    }

    #[test]
    fn supercritical_weights_are_not_admissible() {
        let p = vertex_weight_params(1.0).unwrap();
        let q = WeightSequence::power(1.0, 1.05 * p.lambda).unwrap();
        assert!(matches!(solve_admissible(&q, 1e-10), Err(Error::NotAdmissible(_))));
    }

    #[test]
    fn quadrangulation_table() {
        // Critical quadrangulations: q_4 = 1/12 with x = 2 and y = 0.
        let q = WeightSequence::table(&[(4, 1.0 / 12.0)]).unwrap();
        let s = solve_admissible(&q, 1e-10).unwrap();
        assert!((s.x - 2.0).abs() < 1e-7, "{s:?}");
        assert!(s.y.abs() < 1e-12);
        assert!(s.critical, "{s:?}");
    }
}
