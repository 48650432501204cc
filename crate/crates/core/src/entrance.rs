//! Entrance measures: push initial laws from the far past, Cauchy diagnostics in ρ_β, m_t and α(Δ),
//! and exact Gaussian oracles for linear equations.

use crate::catalog;
use crate::coefficients::{exp_weighted_tail, CoefficientSet, DissipationEnvelope, TimeFunction};
use crate::error::{arg, Error, Result};
use crate::measures::{density_estimate, gaussian_rho_beta_offset, rho_beta, GaussianMeasure, GridMeasure, GridSpec, LyapunovSpec};
use crate::report::{Report, Section};
use crate::simulator::{push_ensemble, InitialLaw, SimConfig};
use rayon::prelude::*;
use std::collections::VecDeque;
use std::path::Path;

/// Tail tolerance for integrals over (−∞, t].
pub const TAIL_TOL: f64 = 1e-10;
/// Longest span marched before declaring such an integral divergent.
pub const MAX_TAIL_SPAN: f64 = 1e5;

/// s_n = t − 2ⁿΔ₀, n = 0..count.
pub fn geometric_ladder(t: f64, count: usize, delta0: f64) -> Vec<f64> {
    (0..count).map(|n| t - delta0 * 2f64.powi(n as i32)).collect()
}

/// The first `count` window ends T_k of the √|t| example lying strictly below t.
pub fn sqrt_example_starts(t: f64, count: usize) -> Vec<f64> {
    (0u32..).map(|k| catalog::sqrt_example_times(k).1).filter(|&tk| tk < t).take(count).collect()
}

#[derive(Debug, Clone)]
pub struct EntranceConfig {
    pub sim: SimConfig,
    pub grid: GridSpec,
    pub lyapunov: LyapunovSpec,
    /// Consecutive-pair ρ_β tolerance.
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMoments {
    pub mean: f64,
    pub variance: f64,
    /// E|X|² and its standard error.
    pub second: f64,
    pub second_se: f64,
}

#[derive(Debug, Clone)]
pub struct EntranceEstimate {
    pub t: f64,
    pub starts: Vec<f64>,
    pub init_id: String,
    pub measures: Vec<GridMeasure>,
    pub moments: Vec<SampleMoments>,
    /// Symmetric matrix of ρ_β between the per-start estimates.
    pub cauchy: Vec<Vec<f64>>,
    pub tol: f64,
    /// Index of the estimate closing the first run of two consecutive pairs below `tol`.
    pub converged_at: Option<usize>,
}

impl EntranceEstimate {
    pub fn converged(&self) -> bool {
        self.converged_at.is_some()
    }

    /// ρ_β(est_n, est_{n+1}).
    pub fn consecutive(&self) -> Vec<f64> {
        (1..self.measures.len()).map(|n| self.cauchy[n - 1][n]).collect()
    }

    /// The converged estimate, or the farthest start when the ladder did not settle.
    pub fn final_index(&self) -> usize {
        self.converged_at.unwrap_or(self.measures.len() - 1)
    }

    pub fn final_estimate(&self) -> &GridMeasure {
        &self.measures[self.final_index()]
    }

    pub fn final_moments(&self) -> SampleMoments {
        self.moments[self.final_index()]
    }

    pub fn report(&self) -> Report {
        let mut r = Report::new("entrance estimate");
        let m = self.final_moments();
        r.push(
            Section::new("summary")
                .num("t", self.t)
                .kv("initial_law", &self.init_id)
                .kv("starts", self.starts.len())
                .num("tolerance", self.tol)
                .kv("converged", self.converged())
                .num("final_start", self.starts[self.final_index()])
                .num("final_mean", m.mean)
                .num("final_variance", m.variance)
                .num("final_second_moment", m.second),
        );
        let mut s = Section::new("cauchy");
        for (n, d) in self.consecutive().iter().enumerate() {
            s = s.num(&format!("rho_beta(s_{n}, s_{})", n + 1), *d);
        }
        r.push(s);
        r
    }
}

fn moments(samples: &[f64], dim: usize) -> SampleMoments {
    let n = (samples.len() / dim) as f64;
    let first: Vec<f64> = samples.chunks_exact(dim).map(|x| x[0]).collect();
    let sq: Vec<f64> = samples.chunks_exact(dim).map(|x| x.iter().map(|v| v * v).sum()).collect();
    let mean = first.iter().sum::<f64>() / n;
    let variance = first.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let second = sq.iter().sum::<f64>() / n;
    let sd = (sq.iter().map(|v| (v - second).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    SampleMoments { mean, variance, second, second_se: sd / n.sqrt() }
}

/// Push `init` from each start to t, histogram, and compare all pairs in ρ_β.
pub fn estimate_entrance(c: &CoefficientSet, t: f64, starts: &[f64], init: &InitialLaw, cfg: &EntranceConfig) -> Result<EntranceEstimate> {
    if starts.is_empty() {
        return arg("no start times");
    }
    if starts.windows(2).any(|w| !(w[1] < w[0])) || starts.iter().any(|&s| !(s <= t)) {
        return arg("start times must be strictly decreasing and not after t");
    }
    if !(cfg.tol > 0.0) {
        return arg("Cauchy tolerance must be positive");
    }
    let pushed: Vec<(GridMeasure, SampleMoments)> = starts
        .par_iter()
        .map(|&s| {
            let e = push_ensemble(c, s, init, t, &cfg.sim)?;
            Ok((density_estimate(&e.samples, e.dim, &cfg.grid)?, moments(&e.samples, e.dim)))
        })
        .collect::<Result<_>>()?;
    let (measures, moments): (Vec<GridMeasure>, Vec<SampleMoments>) = pushed.into_iter().unzip();
    let n = measures.len();
    let mut cauchy = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = rho_beta(&measures[i], &measures[j], &cfg.lyapunov)?;
            cauchy[i][j] = d;
            cauchy[j][i] = d;
        }
    }
    let converged_at = (2..n).find(|&k| cauchy[k - 2][k - 1] < cfg.tol && cauchy[k - 1][k] < cfg.tol);
    Ok(EntranceEstimate { t, starts: starts.to_vec(), init_id: init.id(), measures, moments, cauchy, tol: cfg.tol, converged_at })
}

/// dX = f(t)X dt + σ(t) dW in one dimension; all transitions are Gaussian.
#[derive(Debug, Clone)]
pub struct LinearSde {
    pub f: TimeFunction,
    pub sigma: TimeFunction,
    env: DissipationEnvelope,
    sigma2: TimeFunction,
}

impl LinearSde {
    pub fn new(f: TimeFunction, sigma: TimeFunction) -> Self {
        let (s, sb) = (sigma.clone(), sigma.clone());
        let sigma2 = TimeFunction::new(move |u| s.eval(u).powi(2)).with_breaks(move |a, b| sb.breakpoints(a, b));
        let env = DissipationEnvelope::new(f.clone(), TimeFunction::constant(0.0), |_| 0.0);
        LinearSde { f, sigma, env, sigma2 }
    }

    /// dX = f_ε(t)X dt + dW.
    pub fn f_eps(eps: f64) -> Self {
        Self::new(catalog::f_eps(eps), TimeFunction::constant(1.0))
    }

    /// dX = −|t|^ε X dt + |t|^{ε/2} dW.
    pub fn ou_t_eps(eps: f64) -> Self {
        let at0 = |a: f64, b: f64| if a < 0.0 && b > 0.0 { vec![0.0] } else { Vec::new() };
        Self::new(
            TimeFunction::new(move |t: f64| -t.abs().powf(eps)).with_breaks(at0),
            TimeFunction::new(move |t: f64| t.abs().powf(0.5 * eps)).with_breaks(at0),
        )
    }

    /// P(t, s, x, ·) = N(x e^{∫_s^t f}, ∫_s^t e^{2∫_u^t f} σ²(u) du).
    pub fn transition(&self, s: f64, x: f64, t: f64) -> Result<GaussianMeasure> {
        let m = x * self.env.integral(s, t)?.exp();
        let v = self.env.exp_weighted(s, t, &self.sigma2)?;
        GaussianMeasure::scalar(m, v)
    }

    pub fn entrance(&self, t: f64) -> Result<GaussianMeasure> {
        linear_entrance_exact(&self.f, &self.sigma, t)
    }

    /// (t − s_n, ρ_β(P(t, s_n, x, ·), μ_t)) by quadrature.
    ///
    /// P(t, s, x, ·) − μ_t is parameterized by its exact offsets (x Φ, −Φ² Var μ_s), Φ = e^{∫_s^t f},
    /// so the curve stays accurate long after the two variances agree to machine precision.
    pub fn curve(&self, t: f64, x: f64, starts: &[f64], spec: &LyapunovSpec) -> Result<Vec<(f64, f64)>> {
        let mu = self.entrance(t)?;
        starts
            .par_iter()
            .map(|&s| {
                let phi = self.env.integral(s, t)?.exp();
                let vs = self.entrance(s)?.cov[0];
                Ok((t - s, gaussian_rho_beta_offset(&mu, x * phi, -phi * phi * vs, spec)?))
            })
            .collect()
    }
}

/// μ_t = N(0, ∫_{−∞}^t e^{2∫_u^t f} σ²(u) du).
pub fn linear_entrance_exact(f: &TimeFunction, sigma: &TimeFunction, t: f64) -> Result<GaussianMeasure> {
    if f.as_constant().is_some_and(|c| c >= 0.0) {
        return Err(Error::Divergent("entrance variance diverges for a nonnegative constant rate".into()));
    }
    let lin = LinearSde::new(f.clone(), sigma.clone());
    let v = exp_weighted_tail(f, &lin.sigma2, t, TAIL_TOL, MAX_TAIL_SPAN)?;
    GaussianMeasure::scalar(0.0, v)
}

/// (t − s_n, ρ_β(P(t, s_n, x, ·), reference)) from Monte Carlo histograms on the reference grid.
pub fn convergence_curve(
    c: &CoefficientSet,
    t: f64,
    x: &[f64],
    starts: &[f64],
    reference: &GridMeasure,
    sim: &SimConfig,
    spec: &LyapunovSpec,
) -> Result<Vec<(f64, f64)>> {
    let init = InitialLaw::Dirac(x.to_vec());
    starts
        .par_iter()
        .map(|&s| {
            let e = push_ensemble(c, s, &init, t, sim)?;
            let m = density_estimate(&e.samples, e.dim, &reference.grid)?;
            Ok((t - s, rho_beta(&m, reference, spec)?))
        })
        .collect()
}

/// Whether the last third of a curve sorted by t − s never rises by more than `band`.
pub fn eventually_decreasing(curve: &[(f64, f64)], band: f64) -> bool {
    let mut pts = curve.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let tail = &pts[pts.len() - pts.len().div_ceil(3)..];
    tail.windows(2).all(|w| w[1].1 <= w[0].1 + band)
}

pub fn save_curve(path: &Path, curve: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(crate::measures::csv_err)?;
    w.write_record(["t_minus_s", "rho_beta"]).map_err(crate::measures::csv_err)?;
    for (a, b) in curve {
        w.write_record([format!("{a}"), format!("{b:e}")]).map_err(crate::measures::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// m_t = ∫_{−∞}^t e^{2∫_u^t α}(2Λ_u + dΓ₁) du.
pub fn m_t_integral(env: &DissipationEnvelope, t: f64, gamma1: f64, d: usize) -> Result<f64> {
    if env.alpha.as_constant().is_some_and(|a| a >= 0.0) {
        return Err(Error::Divergent("m_t diverges for a nonnegative constant α".into()));
    }
    let (l, lb) = (env.lambda.clone(), env.lambda.clone());
    let dg = d as f64 * gamma1;
    let w = TimeFunction::new(move |u| 2.0 * l.eval(u) + dg).with_breaks(move |a, b| lb.breakpoints(a, b));
    exp_weighted_tail(&env.alpha, &w, t, TAIL_TOL, MAX_TAIL_SPAN)
}

/// max{sup over windows [s, s'] ⊂ [−horizon, 0] with s' − s ≤ Δ of ∫α, 0}, on a grid with Δ a multiple
/// of the step.
pub fn alpha_delta(env: &DissipationEnvelope, delta: f64, horizon: f64) -> Result<f64> {
    if !(delta > 0.0 && horizon >= delta) {
        return arg("α(Δ) needs 0 < Δ ≤ horizon");
    }
    if let Some(a) = env.alpha.as_constant() {
        return Ok((a * delta).max(0.0));
    }
    let m = ((delta / 0.05).ceil() as usize).clamp(16, 4096);
    let h = delta / m as f64;
    let n = (horizon / h).ceil() as usize;
    let t0 = -(n as f64) * h;
    let incr: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| env.integral(t0 + i as f64 * h, t0 + (i + 1) as f64 * h))
        .collect::<Result<_>>()?;
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    for v in incr {
        cum.push(cum.last().unwrap() + v);
    }
    // max over j of cum[j] − min_{j−m ≤ i < j} cum[i], sliding-window minimum
    let mut best = 0.0f64;
    let mut q: VecDeque<usize> = VecDeque::new();
    for j in 1..=n {
        let i = j - 1;
        while q.back().is_some_and(|&k| cum[k] >= cum[i]) {
            q.pop_back();
        }
        q.push_back(i);
        while q.front().is_some_and(|&k| k + m < j) {
            q.pop_front();
        }
        best = best.max(cum[j] - cum[*q.front().unwrap()]);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Params;
    use crate::measures::total_variation;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn cfg(paths: usize, seed: u64) -> EntranceConfig {
        EntranceConfig {
            sim: SimConfig::new(0.01, paths, seed),
            grid: GridSpec::line(-4.0, 4.0, 40).unwrap(),
            lyapunov: LyapunovSpec::quadratic(0.1).unwrap(),
            tol: 0.05,
        }
    }

    #[test]
    fn ladders() {
        assert_eq!(geometric_ladder(0.0, 4, 1.0), vec![-1.0, -2.0, -4.0, -8.0]);
        let s = sqrt_example_starts(0.0, 3);
        assert_relative_eq!(s[0], -(PI / 6.0).powi(2), epsilon = 1e-12);
        assert!(s.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(sqrt_example_starts(-100.0, 1)[0], catalog::sqrt_example_times(2).1);
    }

    #[test]
    fn ou_entrance_matches_invariant_law() {
        let c = catalog::build("ou", &Params::default()).unwrap();
        let cf = cfg(40_000, 3);
        let est = estimate_entrance(&c, 0.0, &geometric_ladder(0.0, 5, 1.0), &InitialLaw::Dirac(vec![2.0]), &cf).unwrap();
        assert!(est.converged(), "{}", est.report());
        for i in 0..est.cauchy.len() {
            for j in 0..est.cauchy.len() {
                assert_eq!(est.cauchy[i][j], est.cauchy[j][i]);
            }
        }
        let exact = GaussianMeasure::scalar(0.0, 0.5).unwrap().to_grid(&cf.grid).unwrap();
        let d = rho_beta(est.final_estimate(), &exact, &cf.lyapunov).unwrap();
        assert!(d < 0.05, "ρ_β = {d}");
        // uniqueness probe: another start point and a diffuse initial law
        let uni = InitialLaw::Uniform { lo: vec![-3.0], hi: vec![3.0] };
        let other = estimate_entrance(&c, 0.0, &geometric_ladder(0.0, 5, 1.0), &uni, &cfg(40_000, 4)).unwrap();
        assert!(rho_beta(other.final_estimate(), est.final_estimate(), &cf.lyapunov).unwrap() < 0.05);
    }

    #[test]
    fn ou_t_eps_entrance_variance_half() {
        let c = catalog::build("ou_t_eps", &Params::default()).unwrap();
        let est = estimate_entrance(&c, 0.0, &[-8.0, -12.0, -16.0], &InitialLaw::Dirac(vec![1.0]), &cfg(40_000, 5)).unwrap();
        let m = est.final_moments();
        assert!((m.variance - 0.5).abs() < 0.02, "{m:?}");
    }

    #[test]
    fn pushforward_is_consistent_through_an_intermediate_time() {
        let c = catalog::build("bpsv", &Params::default()).unwrap();
        let grid = GridSpec::line(-3.0, 3.0, 30).unwrap();
        let init = InitialLaw::Dirac(vec![0.5]);
        let n = 40_000;
        let direct = push_ensemble(&c, -4.0, &init, 0.0, &SimConfig::new(0.01, n, 1)).unwrap();
        let mid = push_ensemble(&c, -4.0, &init, -2.0, &SimConfig::new(0.01, n, 2)).unwrap();
        let two = push_ensemble(&c, -2.0, &mid.as_initial_law(), 0.0, &SimConfig::new(0.01, n, 3)).unwrap();
        let again = push_ensemble(&c, -4.0, &init, 0.0, &SimConfig::new(0.01, n, 4)).unwrap();
        let h = |e: &crate::simulator::Ensemble| density_estimate(&e.samples, 1, &grid).unwrap();
        let noise = total_variation(&h(&direct), &h(&again)).unwrap();
        let d = total_variation(&h(&direct), &h(&two)).unwrap();
        assert!(d <= 2.0 * noise.max(0.01), "TV {d} vs noise {noise}");
    }

    #[test]
    fn linear_entrance_examples() {
        let v = linear_entrance_exact(&TimeFunction::constant(-1.0), &TimeFunction::constant(1.0), 0.3).unwrap();
        assert_relative_eq!(v.cov[0], 0.5, epsilon = 1e-9);
        let ou = LinearSde::ou_t_eps(0.5);
        for t in [-7.0, -1.0, 0.0, 2.5] {
            assert_relative_eq!(ou.entrance(t).unwrap().cov[0], 0.5, epsilon = 1e-6);
        }
        assert!(matches!(
            linear_entrance_exact(&TimeFunction::constant(0.0), &TimeFunction::constant(1.0), 0.0),
            Err(Error::Divergent(_))
        ));
        let pos = TimeFunction::new(|t: f64| 0.1 + 0.05 * t.sin());
        assert!(matches!(linear_entrance_exact(&pos, &TimeFunction::constant(1.0), 0.0), Err(Error::Divergent(_))));
    }

    /// Σ over constant pieces [a, b] of e^{2G} ∫_a^b e^{2c(b−u)} du, G = ∫_b^t f.
    fn piecewise_variance(eps: f64, t: f64, stop: f64) -> f64 {
        let f = catalog::f_eps(eps);
        let mut pts = catalog::f_eps_breaks(eps, stop, t);
        pts.push(t);
        pts.insert(0, stop);
        let mut g = 0.0f64;
        let mut acc = 0.0;
        for w in pts.windows(2).rev() {
            let (a, b) = (w[0], w[1]);
            let c = f.eval(0.5 * (a + b));
            let piece = if c == 0.0 { b - a } else { ((2.0 * c * (b - a)).exp() - 1.0) / (2.0 * c) };
            acc += (2.0 * g).exp() * piece;
            g += c * (b - a);
        }
        acc
    }

    #[test]
    fn f_eps_variance_matches_piecewise_closed_form() {
        let lin = LinearSde::f_eps(0.5);
        let v = lin.entrance(0.0).unwrap().cov[0];
        let oracle = piecewise_variance(0.5, 0.0, -40_000.0);
        assert!((v - oracle).abs() < 1e-6, "{v} vs {oracle}");
    }

    #[test]
    fn linear_curve_lies_above_mean_bound() {
        let lin = LinearSde::f_eps(0.5);
        let spec = LyapunovSpec::quadratic(0.1).unwrap();
        let x = 1.5;
        let starts: Vec<f64> = (1..=20).map(|k| -(k as f64) * 5.0).collect();
        let curve = lin.curve(0.0, x, &starts, &spec).unwrap();
        for (&(dt, rho), &s) in curve.iter().zip(&starts) {
            let bound = 2.0 * spec.beta.sqrt() * x * lin.env.integral(s, 0.0).unwrap().exp();
            assert!(rho >= bound * (1.0 - 1e-9), "t − s = {dt}: {rho} < {bound}");
        }
        // ρ grows again across each positive-rate stretch of f_ε, so only the overall trend is monotone
        assert!(curve[19].1 < 0.01 * curve[0].1);
        let ou = LinearSde::ou_t_eps(1.0);
        let starts: Vec<f64> = (1..=24).map(|k| -0.25 * k as f64).collect();
        let c2 = ou.curve(0.0, x, &starts, &spec).unwrap();
        assert!(eventually_decreasing(&c2, 0.0), "{c2:?}");
    }

    #[test]
    fn monte_carlo_curve_decreases() {
        let c = catalog::build("ou", &Params::default()).unwrap();
        let grid = GridSpec::line(-4.0, 4.0, 40).unwrap();
        let reference = GaussianMeasure::scalar(0.0, 0.5).unwrap().to_grid(&grid).unwrap();
        let spec = LyapunovSpec::quadratic(0.1).unwrap();
        let curve = convergence_curve(&c, 0.0, &[3.0], &[-0.25, -0.5, -1.0, -1.5, -2.0, -3.0], &reference, &SimConfig::new(0.01, 20_000, 9), &spec).unwrap();
        assert!(eventually_decreasing(&curve, 0.03), "{curve:?}");
        assert!(curve[0].1 > 1.0 && curve[5].1 < 0.25);
    }

    #[test]
    fn m_t_examples() {
        let e = DissipationEnvelope::constant(-1.0, 0.0);
        assert_relative_eq!(m_t_integral(&e, 0.0, 1.0, 1).unwrap(), 0.5, epsilon = 1e-9);
        let c = catalog::build("bpsv", &Params::default()).unwrap();
        assert_relative_eq!(m_t_integral(&c.envelope, -3.0, 1.0, 1).unwrap(), 11.0 / 4.0, epsilon = 1e-8);
        let sp = catalog::build("sin_plus_double_well", &Params::default()).unwrap();
        for t in [-20.0, -3.0, 0.0, 1.7, 4.0] {
            let m = m_t_integral(&sp.envelope, t, 1.0, 1).unwrap();
            assert!(m.is_finite() && m > 0.0);
        }
        assert!(matches!(m_t_integral(&DissipationEnvelope::constant(0.0, 1.0), 0.0, 1.0, 1), Err(Error::Divergent(_))));
    }

    #[test]
    fn alpha_delta_examples() {
        for d in [0.5, 2.0] {
            assert_eq!(alpha_delta(&DissipationEnvelope::constant(-1.0, 0.0), d, 50.0).unwrap(), 0.0);
            assert_relative_eq!(alpha_delta(&DissipationEnvelope::constant(1.0, 0.0), d, 50.0).unwrap(), d);
        }
        let sp = catalog::build("sin_plus_double_well", &Params::default()).unwrap();
        // α = 1 on the off half-periods; a window of length π is best placed on one of them
        assert_relative_eq!(alpha_delta(&sp.envelope, PI, 40.0).unwrap(), PI, epsilon = 1e-6);
        // longer windows also pick up the edges of the on half-periods where α > 0
        let a = (1.0 / (2.0 * PI)).asin();
        let edge = a - 2.0 * PI * (1.0 - a.cos());
        assert_relative_eq!(alpha_delta(&sp.envelope, 2.0 * PI, 40.0).unwrap(), PI + 2.0 * edge, epsilon = 2e-3);
        assert_relative_eq!(alpha_delta(&sp.envelope, 1.0, 40.0).unwrap(), 1.0, epsilon = 1e-6);
        let bp = catalog::build("bpsv", &Params::default()).unwrap();
        let a100 = alpha_delta(&bp.envelope, 1.0, 100.0).unwrap();
        let a200 = alpha_delta(&bp.envelope, 1.0, 200.0).unwrap();
        assert!((a200 - a100).abs() <= 0.05 * a100.max(1e-12));
        let sq = catalog::build("sin_sqrt_double_well", &Params::default()).unwrap();
        let (a1, a2) = (alpha_delta(&sq.envelope, 5.0, 400.0).unwrap(), alpha_delta(&sq.envelope, 5.0, 800.0).unwrap());
        assert!((a2 - a1).abs() <= 0.05 * a1, "{a1} {a2}");
    }
}
