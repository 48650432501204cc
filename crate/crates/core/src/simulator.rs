//! Euler–Maruyama simulation with drift stabilization, and ensemble pushes.

use crate::coefficients::{CoefficientSet, DissipationEnvelope, TimeFunction};
use crate::error::{arg, Error, Result};
use crate::rng::{path_key, CounterRng};
use rayon::prelude::*;
use std::fmt;

/// |X| beyond this aborts the path.
pub const BLOWUP: f64 = 1e8;
/// Paths advanced together so time-dependent coefficients are evaluated once per step.
const CHUNK: usize = 512;
/// Step index reserved for drawing initial states.
const INIT_STEP: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Drift evaluated at the radial projection onto the ball of radius N.
    TruncatedEm,
    /// Drift replaced by b / (1 + h|b|).
    TamedEm,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::TruncatedEm => "truncated-em",
            Scheme::TamedEm => "tamed-em",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "truncated-em" | "truncated" => Ok(Scheme::TruncatedEm),
            "tamed-em" | "tamed" => Ok(Scheme::TamedEm),
            _ => Err(Error::Config(format!("unknown scheme '{s}' (truncated-em | tamed-em)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub step: f64,
    pub scheme: Scheme,
    /// Truncation radius; `None` means 10·(1 + |x₀|).
    pub radius: Option<f64>,
    pub seed: u64,
    pub paths: usize,
}

impl SimConfig {
    pub fn new(step: f64, paths: usize, seed: u64) -> Self {
        SimConfig { step, scheme: Scheme::TruncatedEm, radius: None, seed, paths }
    }

    pub fn tamed(mut self) -> Self {
        self.scheme = Scheme::TamedEm;
        self
    }

    pub fn with_radius(mut self, n: f64) -> Self {
        self.radius = Some(n);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return arg(format!("step must be positive, got {}", self.step));
        }
        if let Some(n) = self.radius {
            if !(n > 0.0) {
                return arg(format!("truncation radius must be positive, got {n}"));
            }
        }
        if self.paths == 0 {
            return arg("paths must be positive");
        }
        Ok(())
    }

    pub fn radius_for(&self, x0_norm: f64) -> f64 {
        self.radius.unwrap_or(10.0 * (1.0 + x0_norm))
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dim: usize,
    pub times: Vec<f64>,
    /// Row-major, one row of `dim` per time.
    pub states: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.len() - 1)
    }
}

/// Initial law sampler.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    Dirac(Vec<f64>),
    /// Independent uniform coordinates on a box.
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
    /// Independent Gaussian coordinates.
    Gaussian { mean: Vec<f64>, var: Vec<f64> },
    /// Empirical law; path i starts from sample i mod n.
    Samples { dim: usize, data: Vec<f64> },
}

impl InitialLaw {
    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::Dirac(x) => x.len(),
            InitialLaw::Uniform { lo, .. } => lo.len(),
            InitialLaw::Gaussian { mean, .. } => mean.len(),
            InitialLaw::Samples { dim, .. } => *dim,
        }
    }

    pub fn id(&self) -> String {
        let v = |x: &[f64]| x.iter().map(|a| format!("{a}")).collect::<Vec<_>>().join(",");
        match self {
            InitialLaw::Dirac(x) => format!("dirac({})", v(x)),
            InitialLaw::Uniform { lo, hi } => format!("uniform([{}],[{}])", v(lo), v(hi)),
            InitialLaw::Gaussian { mean, var } => format!("gaussian([{}],[{}])", v(mean), v(var)),
            InitialLaw::Samples { data, dim } => format!("empirical(n={})", data.len() / dim),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            InitialLaw::Dirac(x) if x.is_empty() => arg("empty initial point"),
            InitialLaw::Uniform { lo, hi } if lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| !(a <= b)) => {
                arg("uniform initial law needs lo <= hi coordinatewise")
            }
            InitialLaw::Gaussian { mean, var } if mean.len() != var.len() || var.iter().any(|v| !(*v >= 0.0)) => {
                arg("gaussian initial law needs nonnegative variances")
            }
            InitialLaw::Samples { dim, data } if *dim == 0 || data.is_empty() || data.len() % dim != 0 => {
                arg("empirical initial law needs a nonempty n×d sample array")
            }
            _ => Ok(()),
        }
    }

    /// Bound on |x₀| used for the default truncation radius.
    fn scale(&self) -> f64 {
        let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
        match self {
            InitialLaw::Dirac(x) => norm(x),
            InitialLaw::Uniform { lo, hi } => {
                let c: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| a.abs().max(b.abs())).collect();
                norm(&c)
            }
            InitialLaw::Gaussian { mean, var } => {
                let c: Vec<f64> = mean.iter().zip(var).map(|(m, v)| m.abs() + 6.0 * v.sqrt()).collect();
                norm(&c)
            }
            InitialLaw::Samples { dim, data } => data.chunks(*dim).map(norm).fold(0.0, f64::max),
        }
    }

    fn draw(&self, seed: u64, path: u64, out: &mut [f64]) {
        let mut rng = CounterRng::new(seed, path, INIT_STEP);
        match self {
            InitialLaw::Dirac(x) => out.copy_from_slice(x),
            InitialLaw::Uniform { lo, hi } => {
                for i in 0..out.len() {
                    out[i] = lo[i] + (hi[i] - lo[i]) * rng.uniform();
                }
            }
            InitialLaw::Gaussian { mean, var } => {
                for i in 0..out.len() {
                    out[i] = mean[i] + var[i].sqrt() * rng.normal();
                }
            }
            InitialLaw::Samples { dim, data } => {
                let n = data.len() / dim;
                let k = (path as usize) % n;
                out.copy_from_slice(&data[k * dim..(k + 1) * dim]);
            }
        }
    }
}

/// Empirical surrogate of P*(t, s)μ.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub s: f64,
    pub t: f64,
    pub dim: usize,
    /// Row-major n × d.
    pub samples: Vec<f64>,
    pub init_id: String,
    pub config: SimConfig,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    /// Mean and standard error of a per-sample statistic.
    pub fn stat(&self, f: impl Fn(&[f64]) -> f64) -> (f64, f64) {
        mean_se(self.samples.chunks_exact(self.dim).map(f))
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.stat(|x| x[i]).0).collect()
    }

    /// Unbiased sample variance of coordinate i.
    pub fn variance(&self, i: usize) -> f64 {
        let n = self.len() as f64;
        let m = self.stat(|x| x[i]).0;
        self.samples.chunks_exact(self.dim).map(|x| (x[i] - m).powi(2)).sum::<f64>() / (n - 1.0)
    }

    pub fn as_initial_law(&self) -> InitialLaw {
        InitialLaw::Samples { dim: self.dim, data: self.samples.clone() }
    }
}

/// Mean and standard error (sample sd / √n).
pub fn mean_se(it: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut n, mut m, mut m2) = (0.0, 0.0, 0.0);
    for v in it {
        n += 1.0;
        let d = v - m;
        m += d / n;
        m2 += d * (v - m);
    }
    if n < 2.0 {
        return (m, 0.0);
    }
    (m, (m2 / (n - 1.0) / n).sqrt())
}

fn step_count(s: f64, t: f64, h: f64) -> usize {
    if t <= s {
        0
    } else {
        ((t - s) / h - 1e-9).ceil().max(1.0) as usize
    }
}

struct Kernel<'a> {
    c: &'a CoefficientSet,
    s: f64,
    t: f64,
    h: f64,
    steps: usize,
    radius: f64,
    scheme: Scheme,
    seed: u64,
}

impl Kernel<'_> {
    #[inline]
    fn time(&self, k: usize) -> (f64, f64) {
        let tk = self.s + k as f64 * self.h;
        let dt = if k + 1 == self.steps { self.t - tk } else { self.h };
        (tk, dt)
    }

    /// Advance the paths `first..first + x.len()/d` from s to t in place.
    fn run(&self, first: u64, x: &mut [f64], mut record: Option<&mut dyn FnMut(usize, f64, &[f64])>) -> Result<()> {
        let d = self.c.dim;
        let m = x.len() / d;
        let keys: Vec<u64> = (0..m as u64).map(|i| path_key(self.seed, first + i)).collect();
        let mut ys = vec![0.0; x.len()];
        let mut bs = vec![0.0; x.len()];
        let sig_const = self.c.diffusion.state_independent();
        let mut ss = vec![0.0; if sig_const { d * d } else { m * d * d }];
        let mut z = vec![0.0; d];
        for k in 0..self.steps {
            let (tk, dt) = self.time(k);
            match self.scheme {
                Scheme::TruncatedEm if d == 1 => {
                    let r = self.radius;
                    for (y, v) in ys.iter_mut().zip(x.iter()) {
                        *y = v.clamp(-r, r);
                    }
                    self.c.drift.eval_batch(tk, &ys, &mut bs);
                }
                Scheme::TruncatedEm => {
                    ys.copy_from_slice(x);
                    for y in ys.chunks_exact_mut(d) {
                        let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if r > self.radius {
                            let f = self.radius / r;
                            y.iter_mut().for_each(|v| *v *= f);
                        }
                    }
                    self.c.drift.eval_batch(tk, &ys, &mut bs);
                }
                Scheme::TamedEm => {
                    self.c.drift.eval_batch(tk, x, &mut bs);
                    for b in bs.chunks_exact_mut(d) {
                        let f = 1.0 / (1.0 + dt * b.iter().map(|v| v * v).sum::<f64>().sqrt());
                        b.iter_mut().for_each(|v| *v *= f);
                    }
                }
            }
            if sig_const {
                self.c.diffusion.eval(tk, &x[..d], &mut ss);
            } else {
                self.c.diffusion.eval_batch(tk, x, &mut ss);
            }
            let sq = dt.sqrt();
            if d == 1 {
                for p in 0..m {
                    let sig = if sig_const { ss[0] } else { ss[p] };
                    let zn = CounterRng::from_key(keys[p], k as u64).normal();
                    let v = x[p] + bs[p] * dt + sig * zn * sq;
                    if !(v.abs() <= BLOWUP) {
                        return Err(Error::BlowUp { time: tk + dt, norm: v.abs() });
                    }
                    x[p] = v;
                }
            } else {
                for p in 0..m {
                    let mut rng = CounterRng::from_key(keys[p], k as u64);
                    z.iter_mut().for_each(|v| *v = rng.normal());
                    let sig = if sig_const { &ss[..] } else { &ss[p * d * d..(p + 1) * d * d] };
                    let xp = &mut x[p * d..(p + 1) * d];
                    let mut r2 = 0.0;
                    for i in 0..d {
                        let noise: f64 = (0..d).map(|j| sig[i * d + j] * z[j]).sum();
                        xp[i] += bs[p * d + i] * dt + noise * sq;
                        r2 += xp[i] * xp[i];
                    }
                    if !(r2.sqrt() <= BLOWUP) {
                        return Err(Error::BlowUp { time: tk + dt, norm: r2.sqrt() });
                    }
                }
            }
            if let Some(r) = record.as_mut() {
                r(k, tk + dt, x);
            }
        }
        Ok(())
    }
}

fn check_window(s: f64, t: f64) -> Result<()> {
    if !(s <= t) {
        return arg(format!("need s <= t (s = {s}, t = {t})"));
    }
    Ok(())
}

/// One path (index 0) recording every step.
pub fn simulate_path(c: &CoefficientSet, s: f64, x: &[f64], t: f64, cfg: &SimConfig) -> Result<Trajectory> {
    simulate_path_indexed(c, s, x, t, cfg, 0, 1)
}

/// Path number `path`, recording every `every`-th step (and the final state).
pub fn simulate_path_indexed(
    c: &CoefficientSet,
    s: f64,
    x: &[f64],
    t: f64,
    cfg: &SimConfig,
    path: u64,
    every: usize,
) -> Result<Trajectory> {
    check_window(s, t)?;
    cfg.validate()?;
    if x.len() != c.dim {
        return arg(format!("initial state has dimension {}, coefficients have {}", x.len(), c.dim));
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let steps = step_count(s, t, cfg.step);
    let kern = Kernel {
        c,
        s,
        t,
        h: cfg.step,
        steps,
        radius: cfg.radius_for(norm),
        scheme: cfg.scheme,
        seed: cfg.seed,
    };
    let every = every.max(1);
    let mut times = vec![s];
    let mut states = x.to_vec();
    let mut cur = x.to_vec();
    let mut rec = |k: usize, tk: f64, st: &[f64]| {
        if (k + 1) % every == 0 || k + 1 == steps {
            times.push(tk);
            states.extend_from_slice(st);
        }
    };
    kern.run(path, &mut cur, Some(&mut rec))?;
    Ok(Trajectory { dim: c.dim, times, states })
}

/// Push `cfg.paths` draws of `init` from s to t.
pub fn push_ensemble(c: &CoefficientSet, s: f64, init: &InitialLaw, t: f64, cfg: &SimConfig) -> Result<Ensemble> {
    check_window(s, t)?;
    cfg.validate()?;
    init.validate()?;
    let d = c.dim;
    if init.dim() != d {
        return arg(format!("initial law has dimension {}, coefficients have {d}", init.dim()));
    }
    let mut x = vec![0.0; cfg.paths * d];
    for (p, xp) in x.chunks_exact_mut(d).enumerate() {
        init.draw(cfg.seed, p as u64, xp);
    }
    let kern = Kernel {
        c,
        s,
        t,
        h: cfg.step,
        steps: step_count(s, t, cfg.step),
        radius: cfg.radius_for(init.scale()),
        scheme: cfg.scheme,
        seed: cfg.seed,
    };
    let results: Vec<Result<()>> = x
        .par_chunks_mut(CHUNK * d)
        .enumerate()
        .map(|(i, xs)| kern.run((i * CHUNK) as u64, xs, None))
        .collect();
    // first failure by path order, independent of scheduling
    results.into_iter().collect::<Result<Vec<()>>>()?;
    Ok(Ensemble { s, t, dim: d, samples: x, init_id: init.id(), config: cfg.clone() })
}

/// e^{2∫_s^t α}|x|² + ∫_s^t e^{2∫_u^t α}(2Λ_u + dΓ₁) du.
pub fn second_moment_bound(env: &DissipationEnvelope, s: f64, t: f64, x: &[f64], gamma1: f64, d: usize) -> Result<f64> {
    check_window(s, t)?;
    let a = env.integral(s, t)?;
    let x2: f64 = x.iter().map(|v| v * v).sum();
    let lam = env.lambda.clone();
    let dg = d as f64 * gamma1;
    let w = match lam.as_constant() {
        Some(l) => TimeFunction::constant(2.0 * l + dg),
        None => {
            let l2 = lam.clone();
            TimeFunction::new(move |u| 2.0 * lam.eval(u) + dg).with_breaks(move |a, b| l2.breakpoints(a, b))
        }
    };
    let tail = env.exp_weighted(s, t, &w)?;
    let v = (2.0 * a).exp() * x2 + tail;
    if !v.is_finite() {
        return Err(Error::Numeric(format!("moment bound is not finite on [{s}, {t}]")));
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentCheck {
    pub mean: f64,
    pub se: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Pass iff the sample mean of |X|² is at most bound + 3·SE.
pub fn check_moment_bound(e: &Ensemble, bound: f64) -> MomentCheck {
    let (mean, se) = e.stat(|x| x.iter().map(|v| v * v).sum());
    MomentCheck { mean, se, bound, pass: mean <= bound + 3.0 * se }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{build, Params};
    use crate::coefficients::{constant_diffusion, FieldRef, Poly1d};
    use std::sync::Arc;

    fn ou() -> CoefficientSet {
        build("ou", &Params::default()).unwrap()
    }

    #[test]
    fn zero_coefficients_constant_path() {
        let drift: FieldRef = Arc::new(Poly1d::new(vec![]));
        let c = CoefficientSet::new("zero", drift, constant_diffusion(1, 0.0), DissipationEnvelope::constant(0.0, 0.0)).unwrap();
        let tr = simulate_path(&c, 0.0, &[1.0], 1.0, &SimConfig::new(0.1, 1, 3)).unwrap();
        assert_eq!(tr.len(), 11);
        assert!(tr.states.iter().all(|&v| v == 1.0));
        assert!((tr.times[10] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn path_matches_ensemble_member() {
        let c = build("bpsv", &Params::default()).unwrap();
        let cfg = SimConfig::new(0.01, 700, 11);
        let e = push_ensemble(&c, -2.0, &InitialLaw::Dirac(vec![0.3]), 1.0, &cfg).unwrap();
        for p in [0u64, 513, 699] {
            let tr = simulate_path_indexed(&c, -2.0, &[0.3], 1.0, &cfg, p, 1000).unwrap();
            assert_eq!(tr.last()[0], e.sample(p as usize)[0]);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = SimConfig::new(0.01, 1000, 5);
        let a = push_ensemble(&ou(), 0.0, &InitialLaw::Dirac(vec![1.0]), 2.0, &cfg).unwrap();
        let b = push_ensemble(&ou(), 0.0, &InitialLaw::Dirac(vec![1.0]), 2.0, &cfg).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = push_ensemble(&ou(), 0.0, &InitialLaw::Dirac(vec![1.0]), 2.0, &SimConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn zero_duration_push() {
        let e = push_ensemble(&ou(), 1.0, &InitialLaw::Dirac(vec![0.7]), 1.0, &SimConfig::new(0.1, 10, 0)).unwrap();
        assert!(e.samples.iter().all(|&v| v == 0.7));
        assert!(push_ensemble(&ou(), 1.0, &InitialLaw::Dirac(vec![0.7]), 0.0, &SimConfig::new(0.1, 10, 0)).is_err());
    }

    #[test]
    fn ou_variance() {
        let e = push_ensemble(&ou(), 0.0, &InitialLaw::Dirac(vec![0.0]), 10.0, &SimConfig::new(1e-3, 20_000, 1)).unwrap();
        let v = e.variance(0);
        let exact = (1.0 - (-20f64).exp()) / 2.0;
        // se of a sample variance ≈ v √(2/n)
        let se = exact * (2.0 / e.len() as f64).sqrt();
        assert!((v - exact).abs() < 3.0 * se + 0.5e-3, "{v} vs {exact}");
    }

    #[test]
    fn plain_drift_blows_up_without_stabilization() {
        let drift: FieldRef = Arc::new(Poly1d::new(vec![
            TimeFunction::constant(0.0),
            TimeFunction::constant(0.0),
            TimeFunction::constant(0.0),
            TimeFunction::constant(-1.0),
        ]));
        let c = CoefficientSet::new("cubic", drift, constant_diffusion(1, 0.0), DissipationEnvelope::constant(0.0, 0.0)).unwrap();
        let cfg = SimConfig::new(0.5, 1, 0).with_radius(1e9);
        match simulate_path(&c, 0.0, &[10.0], 10.0, &cfg) {
            Err(Error::BlowUp { time, .. }) => assert!(time > 0.0 && time <= 10.0),
            other => panic!("{other:?}"),
        }
        assert!(simulate_path(&c, 0.0, &[10.0], 10.0, &SimConfig::new(0.5, 1, 0)).is_ok());
        assert!(simulate_path(&c, 0.0, &[10.0], 10.0, &SimConfig::new(0.5, 1, 0).tamed()).is_ok());
    }

    #[test]
    fn moment_bound_examples() {
        let env = DissipationEnvelope::constant(0.0, 0.0);
        assert!((second_moment_bound(&env, 0.0, 2.0, &[1.0], 1.0, 1).unwrap() - 3.0).abs() < 1e-12);
        let lam = 1.0 + 4.0;
        let env = DissipationEnvelope::constant(-2.0, lam);
        let b = second_moment_bound(&env, 0.0, 5.0, &[0.0], 1.0, 1).unwrap();
        assert!((b - (2.0 * lam + 1.0) * (1.0 - (-20f64).exp()) / 4.0).abs() < 1e-8);
    }

    #[test]
    fn moment_check_cases() {
        let cfg = SimConfig::new(0.1, 4, 0);
        let e = Ensemble { s: 0.0, t: 0.0, dim: 1, samples: vec![0.0; 4], init_id: "x".into(), config: cfg.clone() };
        assert!(check_moment_bound(&e, 0.0).pass);
        let e = Ensemble { samples: vec![10.0, 10.1, 9.9, 10.0], ..e };
        assert!(!check_moment_bound(&e, 0.5).pass);
    }
}
