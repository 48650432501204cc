use super::flow::FrozenFrame;
use crate::coefficients::CoefficientSet;
use crate::error::{arg, Error, Result};
use crate::quadrature::GaussRule;
use std::f64::consts::PI;

/// Gauss–Jacobi nodes per time convolution.
pub const PARAMETRIX_TIME_NODES: usize = 16;
/// Spatial trapezoid spacing as a fraction of the narrower Gaussian scale.
pub const PARAMETRIX_CELLS_PER_SD: f64 = 8.0;
/// Half-width of the spatial window in standard deviations.
pub const PARAMETRIX_SPAN_SD: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ParametrixValue {
    /// Frozen Gaussian term p̃.
    pub base: f64,
    /// p̃⊗H^{⊗j}, j = 1..=order.
    pub corrections: Vec<f64>,
    pub total: f64,
}

/// 1-D parametrix kernels around the flow through (τ, ξ).
struct Kernels<'a> {
    c: &'a CoefficientSet,
    frame: FrozenFrame,
    rule: GaussRule,
}

/// Time node r of a convolution over (lo, hi) with the moments it needs.
struct Node {
    r: f64,
    w: f64,
    /// ϑ, Σ over (lo, r) and (r, hi).
    m1: f64,
    v1: f64,
    m2: f64,
    v2: f64,
    b_th: f64,
    a_th: f64,
}

impl Kernels<'_> {
    fn moments(&self, a: f64, b: f64) -> (f64, f64) {
        let (m, v) = self.frame.moments(a, b);
        (m[0], v[0])
    }

    fn p_tilde(&self, r2: f64, r1: f64, z: f64, w: f64) -> f64 {
        let (m, v) = self.moments(r1, r2);
        gauss(w - z - m, v)
    }

    /// ∫_lo^hi f(r) dr for f ~ (hi − r)^{−1/2}: Gauss–Jacobi nodes with the weight divided out.
    fn nodes(&self, lo: f64, hi: f64) -> Vec<Node> {
        let half = 0.5 * (hi - lo);
        self.rule
            .nodes
            .iter()
            .zip(&self.rule.weights)
            .map(|(&u, &w)| {
                let r = lo + (u + 1.0) * half;
                let (m1, v1) = self.moments(lo, r);
                let (m2, v2) = self.moments(r, hi);
                let th = self.frame.theta(r)[0];
                let st = self.c.sigma1(r, th);
                Node { r, w: w * (1.0 - u).sqrt() * half, m1, v1, m2, v2, b_th: self.c.b1(r, th), a_th: st * st }
            })
            .collect()
    }

    /// H(hi, r, z, y) = (L_r − L̃_r)_z p̃(hi, r, z, y).
    fn h(&self, n: &Node, z: f64, y: f64) -> f64 {
        let db = self.c.b1(n.r, z) - n.b_th;
        let sz = self.c.sigma1(n.r, z);
        let da = sz * sz - n.a_th;
        let u = (y - z - n.m2) / n.v2;
        let g = gauss(y - z - n.m2, n.v2);
        db * u * g + 0.5 * da * (u * u - 1.0 / n.v2) * g
    }

    /// Trapezoid grid over the overlap of two Gaussian windows.
    fn space_nodes(c1: f64, v1: f64, c2: f64, v2: f64) -> Vec<(f64, f64)> {
        let (s1, s2) = (v1.sqrt(), v2.sqrt());
        let lo = (c1 - PARAMETRIX_SPAN_SD * s1).max(c2 - PARAMETRIX_SPAN_SD * s2);
        let hi = (c1 + PARAMETRIX_SPAN_SD * s1).min(c2 + PARAMETRIX_SPAN_SD * s2);
        if !(hi > lo) {
            return Vec::new();
        }
        let h = s1.min(s2) / PARAMETRIX_CELLS_PER_SD;
        let n = ((hi - lo) / h).ceil().max(2.0) as usize;
        let h = (hi - lo) / n as f64;
        (0..=n).map(|i| (lo + i as f64 * h, if i == 0 || i == n { 0.5 * h } else { h })).collect()
    }

    /// (p̃ ⊗ H)(hi, lo, x, y) over precomputed nodes of (lo, hi).
    fn first(&self, nodes: &[Node], x: f64, y: f64) -> f64 {
        let mut acc = 0.0;
        for n in nodes {
            let mut inner = 0.0;
            for (z, wz) in Self::space_nodes(x + n.m1, n.v1, y - n.m2, n.v2) {
                inner += wz * gauss(z - x - n.m1, n.v1) * self.h(n, z, y);
            }
            acc += n.w * inner;
        }
        acc
    }

    /// ((p̃ ⊗ H) ⊗ H)(t, s, x, y).
    fn second(&self, s: f64, t: f64, x: f64, y: f64) -> f64 {
        let mut acc = 0.0;
        for n in self.nodes(s, t) {
            let inner_nodes = self.nodes(s, n.r);
            let mut inner = 0.0;
            for (z, wz) in Self::space_nodes(x + n.m1, n.v1, y - n.m2, n.v2) {
                inner += wz * self.first(&inner_nodes, x, z) * self.h(&n, z, y);
            }
            acc += n.w * inner;
        }
        acc
    }
}

fn gauss(u: f64, v: f64) -> f64 {
    (-0.5 * u * u / v).exp() / (2.0 * PI * v).sqrt()
}

/// p̃ + Σ_{j ≤ order} p̃ ⊗ H^{⊗j} with the frozen Gaussian proxy around (τ, ξ); d = 1, order ≤ 2.
#[allow(clippy::too_many_arguments)]
pub fn parametrix_iterate(c: &CoefficientSet, tau: f64, xi: f64, s: f64, t: f64, x: f64, y: f64, order: usize) -> Result<ParametrixValue> {
    if c.dim != 1 {
        return Err(Error::Unsupported(format!("parametrix is one-dimensional (got d = {})", c.dim)));
    }
    if order > 2 {
        return Err(Error::Unsupported(format!("parametrix order {order} (at most 2)")));
    }
    if !(s < t) {
        return arg(format!("parametrix needs s < t (s = {s}, t = {t})"));
    }
    let frame = FrozenFrame::new(c, tau, &[xi], s, t)?;
    let base = frame.proxy(s, t)?.density(&[x], &[y])?;
    let k = Kernels { c, frame, rule: GaussRule::jacobi(PARAMETRIX_TIME_NODES, -0.5, 0.0) };
    debug_assert!((k.p_tilde(t, s, x, y) - base).abs() <= 1e-12 * (1.0 + base));
    let mut corrections = Vec::new();
    if order >= 1 {
        corrections.push(k.first(&k.nodes(s, t), x, y));
    }
    if order >= 2 {
        corrections.push(k.second(s, t, x, y));
    }
    let total = base + corrections.iter().sum::<f64>();
    Ok(ParametrixValue { base, corrections, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{self, Params};
    use crate::density::{fp_solve, Boundary, FPGrid};
    use crate::quadrature::normal_pdf;

    #[test]
    fn linear_drift_frozen_on_its_own_flow() {
        let c = catalog::build("ou", &Params::default().with("theta", 0.3)).unwrap();
        let (s, t, x) = (0.0, 0.25, 0.8);
        let theta_t = x * (-0.3f64 * 0.25).exp();
        for dy in [-0.05, 0.0, 0.05] {
            let v = parametrix_iterate(&c, s, x, s, t, x, theta_t + dy, 1).unwrap();
            assert!(v.corrections[0].abs() <= 0.05 * v.base, "{v:?}");
        }
    }

    #[test]
    fn ou_first_order_near_mode() {
        let c = catalog::build("ou", &Params::default()).unwrap();
        let (s, t, x) = (0.0, 0.25, 0.5);
        let e = (-0.25f64).exp();
        let var = 0.5 * (1.0 - e * e);
        for dy in [-0.1, 0.0, 0.1] {
            let y = x * e + dy;
            let exact = normal_pdf(y, x * e, var);
            let v = parametrix_iterate(&c, s, 0.0, s, t, x, y, 1).unwrap();
            assert!(((v.total - exact) / exact).abs() <= 0.05, "y = {y}: {} vs {exact}", v.total);
            assert!(((v.base - exact) / exact).abs() > ((v.total - exact) / exact).abs());
        }
    }

    #[test]
    fn bpsv_second_order_against_fp() {
        let c = catalog::build("bpsv", &Params::default()).unwrap();
        let (s, t, x) = (0.0, 0.25, 0.5);
        let g = FPGrid::with_spacing(-4.0, 4.0, 0.005, 2.5e-4, Boundary::Reflecting).unwrap();
        let fp = fp_solve(&c, s, x, t, &g).unwrap();
        let (mode, _) = fp.density.iter().enumerate().fold((0, 0.0), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        let y = fp.grid.center(mode);
        let v = parametrix_iterate(&c, s, 0.0, s, t, x, y, 2).unwrap();
        let reference = fp.density_at(y);
        assert!(((v.total - reference) / reference).abs() <= 0.1, "{v:?} vs {reference}");
    }

    #[test]
    fn rejects_unsupported() {
        let c = catalog::build("ou", &Params::default()).unwrap();
        assert!(matches!(parametrix_iterate(&c, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 3), Err(Error::Unsupported(_))));
        assert!(parametrix_iterate(&c, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1).is_err());
    }
}
