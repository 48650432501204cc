//! Quadrature rules: adaptive Simpson, Gauss–Legendre and Gauss–Jacobi.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use libm::{erfc, lgamma as ln_gamma};
use std::f64::consts::{PI, SQRT_2};

/// Default absolute tolerance for envelope integrals.
pub const SIMPSON_TOL: f64 = 1e-9;
const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson on [a, b] with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut ok = true;
    let v = simpson_rec(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH, &mut ok);
    if !v.is_finite() {
        return Err(Error::Numeric(format!("non-finite integrand on [{a}, {b}]")));
    }
    if !ok {
        return Err(Error::Numeric(format!(
            "adaptive Simpson did not reach tolerance {tol:e} on [{a}, {b}]"
        )));
    }
    Ok(v)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    ok: &mut bool,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if diff.abs() <= 15.0 * tol || depth == 0 || (b - a).abs() < 1e-13 * (1.0 + a.abs()) {
        if depth == 0 && diff.abs() > 15.0 * tol {
            *ok = false;
        }
        return left + right + diff / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, ok)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, ok)
}

/// Adaptive Simpson over [a, b] split at the given breakpoints (those outside are ignored).
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
) -> Result<f64> {
    let (lo, hi, sign) = if a <= b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&p| p > lo && p < hi).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let n = pts.len() + 1;
    let mut total = 0.0;
    let mut prev = lo;
    for p in pts.into_iter().chain(std::iter::once(hi)) {
        total += adaptive_simpson(f, prev, p, tol / n as f64)?;
        prev = p;
    }
    Ok(sign * total)
}

/// A Gaussian rule on [-1, 1] for some weight function.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn golub_welsch(diag: &[f64], off: &[f64], mu0: f64) -> GaussRule {
    let n = diag.len();
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = diag[i];
        if i + 1 < n {
            j[(i, i + 1)] = off[i];
            j[(i + 1, i)] = off[i];
        }
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    GaussRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

impl GaussRule {
    pub fn legendre(n: usize) -> Self {
        assert!(n >= 1);
        let off: Vec<f64> = (1..n)
            .map(|k| {
                let k = k as f64;
                k / (4.0 * k * k - 1.0).sqrt()
            })
            .collect();
        golub_welsch(&vec![0.0; n], &off, 2.0)
    }

    /// Weight (1 - x)^a (1 + x)^b on [-1, 1], a, b > -1.
    pub fn jacobi(n: usize, a: f64, b: f64) -> Self {
        assert!(n >= 1 && a > -1.0 && b > -1.0);
        let ab = a + b;
        let diag: Vec<f64> = (0..n)
            .map(|k| {
                let k = k as f64;
                let s = 2.0 * k + ab;
                if k == 0.0 {
                    (b - a) / (ab + 2.0)
                } else {
                    (b * b - a * a) / (s * (s + 2.0))
                }
            })
            .collect();
        let off: Vec<f64> = (1..n)
            .map(|k| {
                let k = k as f64;
                let s = 2.0 * k + ab;
                (4.0 * k * (k + a) * (k + b) * (k + ab) / (s * s * (s + 1.0) * (s - 1.0))).sqrt()
            })
            .collect();
        let mu0 = ((ab + 1.0) * 2f64.ln() + ln_gamma(a + 1.0) + ln_gamma(b + 1.0)
            - ln_gamma(ab + 2.0))
        .exp();
        golub_welsch(&diag, &off, mu0)
    }

    /// ∫_a^b f for a Legendre rule (weights already include the interval map).
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        h * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(c + h * x))
            .sum::<f64>()
    }

    /// Nodes and weights mapped to [a, b] (Legendre scaling).
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (c + h * x, h * w))
    }
}

/// Composite Gauss–Legendre with `panels` equal panels.
pub fn composite<F: FnMut(f64) -> f64>(rule: &GaussRule, mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + i as f64 * h;
            rule.integrate(&mut f, lo, lo + h)
        })
        .sum()
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    (-0.5 * z * z / var).exp() / (2.0 * PI * var).sqrt()
}

pub fn normal_cdf(x: f64, mean: f64, var: f64) -> f64 {
    0.5 * erfc(-(x - mean) / (SQRT_2 * var.sqrt()))
}

/// P(a ≤ N(mean, var) < b), computed on the tail side that avoids cancellation.
pub fn normal_interval(a: f64, b: f64, mean: f64, var: f64) -> f64 {
    let s = SQRT_2 * var.sqrt();
    let (za, zb) = ((a - mean) / s, (b - mean) / s);
    if za > 0.0 {
        0.5 * (erfc(za) - erfc(zb))
    } else if zb < 0.0 {
        0.5 * (erfc(-zb) - erfc(-za))
    } else {
        1.0 - 0.5 * (erfc(-za) + erfc(zb))
    }
}
