use crate::coefficients::CoefficientSet;
use crate::error::{arg, Error, Result};
use crate::measures::GaussianMeasure;
use crate::quadrature::GaussRule;

/// Fixed RK4 substep.
pub const FLOW_SUBSTEP: f64 = 1e-3;
pub const FLOW_BLOWUP: f64 = 1e8;

/// θ_{t,τ}(ξ): solution of dθ/dt = b(t, θ) with θ_τ = ξ; t < τ runs backward.
pub fn flow_solve(c: &CoefficientSet, tau: f64, xi: &[f64], t: f64) -> Result<Vec<f64>> {
    Ok(FlowPath::solve(c, tau, xi, t, FLOW_SUBSTEP)?.end().to_vec())
}

/// RK4 trajectory stored at every substep, with Hermite interpolation in between.
#[derive(Debug, Clone)]
pub struct FlowPath {
    pub dim: usize,
    /// Increasing.
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    slopes: Vec<f64>,
    end_is_last: bool,
}

impl FlowPath {
    pub fn solve(c: &CoefficientSet, tau: f64, xi: &[f64], t: f64, substep: f64) -> Result<Self> {
        if xi.len() != c.dim {
            return arg(format!("ξ has dimension {}, coefficients {}", xi.len(), c.dim));
        }
        if !(substep > 0.0) || !tau.is_finite() || !t.is_finite() {
            return arg("flow needs finite times and a positive substep");
        }
        let d = c.dim;
        let n = ((t - tau).abs() / substep).ceil().max(1.0) as usize;
        let h = (t - tau) / n as f64;
        let mut times = Vec::with_capacity(n + 1);
        let mut states = Vec::with_capacity((n + 1) * d);
        let mut slopes = Vec::with_capacity((n + 1) * d);
        let mut x = xi.to_vec();
        let mut k = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
        let mut tmp = vec![0.0; d];
        for i in 0..=n {
            let r = tau + i as f64 * h;
            c.drift.eval(r, &x, &mut k[0]);
            times.push(r);
            states.extend_from_slice(&x);
            slopes.extend_from_slice(&k[0]);
            if i == n {
                break;
            }
            for j in 0..d {
                tmp[j] = x[j] + 0.5 * h * k[0][j];
            }
            c.drift.eval(r + 0.5 * h, &tmp, &mut k[1]);
            for j in 0..d {
                tmp[j] = x[j] + 0.5 * h * k[1][j];
            }
            c.drift.eval(r + 0.5 * h, &tmp, &mut k[2]);
            for j in 0..d {
                tmp[j] = x[j] + h * k[2][j];
            }
            c.drift.eval(r + h, &tmp, &mut k[3]);
            for j in 0..d {
                x[j] += h / 6.0 * (k[0][j] + 2.0 * k[1][j] + 2.0 * k[2][j] + k[3][j]);
            }
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm <= FLOW_BLOWUP) {
                return Err(Error::BlowUp { time: r + h, norm });
            }
        }
        let mut p = FlowPath { dim: d, times, states, slopes, end_is_last: true };
        if h < 0.0 {
            p.reverse();
            p.end_is_last = false;
        }
        Ok(p)
    }

    /// Path over [lo, hi] through θ_τ = ξ (τ may lie outside).
    pub fn covering(c: &CoefficientSet, tau: f64, xi: &[f64], lo: f64, hi: f64, substep: f64) -> Result<Self> {
        if !(lo < hi) {
            return arg("flow window needs lo < hi");
        }
        if tau <= lo {
            return Self::solve(c, tau, xi, hi, substep);
        }
        if tau >= hi {
            return Self::solve(c, tau, xi, lo, substep);
        }
        let back = Self::solve(c, tau, xi, lo, substep)?;
        let fwd = Self::solve(c, tau, xi, hi, substep)?;
        let d = back.dim;
        let mut p = back;
        p.times.pop();
        p.states.truncate(p.states.len() - d);
        p.slopes.truncate(p.slopes.len() - d);
        p.times.extend_from_slice(&fwd.times);
        p.states.extend_from_slice(&fwd.states);
        p.slopes.extend_from_slice(&fwd.slopes);
        p.end_is_last = true;
        Ok(p)
    }

    fn reverse(&mut self) {
        let d = self.dim;
        self.times.reverse();
        let rev = |v: &mut Vec<f64>| {
            let chunks: Vec<Vec<f64>> = v.chunks(d).rev().map(|c| c.to_vec()).collect();
            *v = chunks.concat();
        };
        rev(&mut self.states);
        rev(&mut self.slopes);
    }

    /// State at the integration end point.
    pub fn end(&self) -> &[f64] {
        let d = self.dim;
        if self.end_is_last {
            &self.states[self.states.len() - d..]
        } else {
            &self.states[..d]
        }
    }

    pub fn lo(&self) -> f64 {
        self.times[0]
    }

    pub fn hi(&self) -> f64 {
        *self.times.last().unwrap()
    }

    fn locate(&self, r: f64) -> usize {
        let i = self.times.partition_point(|&x| x <= r);
        i.clamp(1, self.times.len() - 1) - 1
    }

    /// Cubic Hermite interpolation; r is clamped to the covered window.
    pub fn at(&self, r: f64, out: &mut [f64]) {
        let r = r.clamp(self.lo(), self.hi());
        let d = self.dim;
        if self.times.len() == 1 {
            out.copy_from_slice(&self.states[..d]);
            return;
        }
        let i = self.locate(r);
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let u = (r - t0) / h;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u),
            u * (1.0 - u) * (1.0 - u),
            u * u * (3.0 - 2.0 * u),
            u * u * (u - 1.0),
        );
        for j in 0..d {
            out[j] = h00 * self.states[i * d + j]
                + h10 * h * self.slopes[i * d + j]
                + h01 * self.states[(i + 1) * d + j]
                + h11 * h * self.slopes[(i + 1) * d + j];
        }
    }

    pub fn at1(&self, r: f64) -> f64 {
        let mut o = [0.0];
        self.at(r, &mut o);
        o[0]
    }
}

/// Cumulative ∫b(r, θ_r) dr and ∫σσ⊤(r, θ_r) dr along a flow path.
#[derive(Debug, Clone)]
pub struct FrozenFrame {
    pub tau: f64,
    pub xi: Vec<f64>,
    pub path: FlowPath,
    cum_b: Vec<f64>,
    cum_a: Vec<f64>,
    c: CoefficientSet,
    rule: GaussRule,
}

impl FrozenFrame {
    pub fn new(c: &CoefficientSet, tau: f64, xi: &[f64], lo: f64, hi: f64) -> Result<Self> {
        let path = FlowPath::covering(c, tau, xi, lo, hi, FLOW_SUBSTEP)?;
        let d = c.dim;
        let rule = GaussRule::legendre(4);
        let mut f = FrozenFrame {
            tau,
            xi: xi.to_vec(),
            path,
            cum_b: vec![0.0; d],
            cum_a: vec![0.0; d * d],
            c: c.clone(),
            rule,
        };
        let n = f.path.times.len();
        for i in 1..n {
            let (b, a) = f.piece(f.path.times[i - 1], f.path.times[i]);
            let pb = f.cum_b[(i - 1) * d..i * d].to_vec();
            let pa = f.cum_a[(i - 1) * d * d..i * d * d].to_vec();
            f.cum_b.extend(pb.iter().zip(&b).map(|(x, y)| x + y));
            f.cum_a.extend(pa.iter().zip(&a).map(|(x, y)| x + y));
        }
        Ok(f)
    }

    fn piece(&self, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let d = self.c.dim;
        let (mut ib, mut ia) = (vec![0.0; d], vec![0.0; d * d]);
        let mut th = vec![0.0; d];
        for (r, w) in self.rule.mapped(a, b) {
            self.path.at(r, &mut th);
            let bv = self.c.b(r, &th);
            let av = self.c.a(r, &th);
            for j in 0..d {
                ib[j] += w * bv[j];
            }
            for j in 0..d * d {
                ia[j] += w * av[j];
            }
        }
        (ib, ia)
    }

    fn cum(&self, r: f64) -> (Vec<f64>, Vec<f64>) {
        let d = self.c.dim;
        let r = r.clamp(self.path.lo(), self.path.hi());
        let i = self.path.locate(r);
        let (pb, pa) = self.piece(self.path.times[i], r);
        (
            self.cum_b[i * d..(i + 1) * d].iter().zip(&pb).map(|(x, y)| x + y).collect(),
            self.cum_a[i * d * d..(i + 1) * d * d].iter().zip(&pa).map(|(x, y)| x + y).collect(),
        )
    }

    /// (ϑ_{t,s}, ∫_s^t σσ⊤ along the flow).
    pub fn moments(&self, s: f64, t: f64) -> (Vec<f64>, Vec<f64>) {
        let (b0, a0) = self.cum(s);
        let (b1, a1) = self.cum(t);
        (b1.iter().zip(&b0).map(|(x, y)| x - y).collect(), a1.iter().zip(&a0).map(|(x, y)| x - y).collect())
    }

    pub fn theta(&self, r: f64) -> Vec<f64> {
        let mut o = vec![0.0; self.c.dim];
        self.path.at(r, &mut o);
        o
    }

    pub fn proxy(&self, s: f64, t: f64) -> Result<FrozenGaussianProxy> {
        if !(s < t) {
            return arg(format!("frozen proxy needs s < t (s = {s}, t = {t})"));
        }
        if s < self.path.lo() - 1e-12 || t > self.path.hi() + 1e-12 {
            return arg("interval lies outside the frozen frame");
        }
        let (shift, cov) = self.moments(s, t);
        let d = self.c.dim;
        let m = nalgebra::DMatrix::from_row_slice(d, d, &cov);
        let ev = nalgebra::SymmetricEigen::new(m).eigenvalues;
        let scale = ev.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(t - s);
        if ev.min() <= 1e-12 * scale {
            return Err(Error::Degenerate(format!(
                "frozen covariance is singular on [{s}, {t}] (smallest eigenvalue {:.3e}); diffusion degenerates there",
                ev.min()
            )));
        }
        Ok(FrozenGaussianProxy { tau: self.tau, xi: self.xi.clone(), s, t, shift, cov })
    }
}

/// N(x + ϑ_{t,s}^{τ,ξ}, ∫_s^t σσ⊤(r, θ_{r,τ}(ξ)) dr).
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenGaussianProxy {
    pub tau: f64,
    pub xi: Vec<f64>,
    pub s: f64,
    pub t: f64,
    pub shift: Vec<f64>,
    pub cov: Vec<f64>,
}

impl FrozenGaussianProxy {
    pub fn gaussian(&self, x: &[f64]) -> Result<GaussianMeasure> {
        GaussianMeasure::new(x.iter().zip(&self.shift).map(|(a, b)| a + b).collect(), self.cov.clone())
    }

    pub fn density(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(self.gaussian(x)?.pdf(y))
    }
}

pub fn frozen_proxy(c: &CoefficientSet, tau: f64, xi: &[f64], s: f64, t: f64) -> Result<FrozenGaussianProxy> {
    if !(s < t) {
        return arg(format!("frozen proxy needs s < t (s = {s}, t = {t})"));
    }
    FrozenFrame::new(c, tau, xi, s, t)?.proxy(s, t)
}

pub fn frozen_density(c: &CoefficientSet, tau: f64, xi: &[f64], s: f64, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    frozen_proxy(c, tau, xi, s, t)?.density(x, y)
}
