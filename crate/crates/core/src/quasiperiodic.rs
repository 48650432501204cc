//! Two-time semigroup K^{r₁,r₂}, its torus × ℝ^d lift, the cylinder invariant measure and Birkhoff checks.

use crate::coefficients::QuasiPeriodicParent;
use crate::error::{arg, Error, Result};
use crate::measures::{density_estimate, rho_beta, GridMeasure, GridSpec, LyapunovSpec};
use crate::rng::mix64;
use crate::simulator::{push_ensemble, simulate_path_indexed, Ensemble, InitialLaw, SimConfig};
use rayon::prelude::*;
use std::io::Write;
use std::path::Path;

/// [0, τ₁) × [0, τ₂) with d₀ = d₁ + d₂, d_i(a, b) = min(|a − b|, τ_i − |a − b|).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Torus {
    pub tau1: f64,
    pub tau2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusPoint {
    pub r1: f64,
    pub r2: f64,
}

impl Torus {
    pub fn new(tau1: f64, tau2: f64) -> Result<Self> {
        if !(tau1 > 0.0 && tau2 > 0.0 && tau1.is_finite() && tau2.is_finite()) {
            return arg(format!("periods must be positive (got {tau1}, {tau2})"));
        }
        Ok(Torus { tau1, tau2 })
    }

    pub fn of(parent: &QuasiPeriodicParent) -> Self {
        Torus { tau1: parent.tau1, tau2: parent.tau2 }
    }

    pub fn point(&self, r1: f64, r2: f64) -> TorusPoint {
        TorusPoint { r1: r1.rem_euclid(self.tau1), r2: r2.rem_euclid(self.tau2) }
    }

    pub fn rotate(&self, p: TorusPoint, t: f64) -> TorusPoint {
        self.point(p.r1 + t, p.r2 + t)
    }

    pub fn distance(&self, p: TorusPoint, q: TorusPoint) -> f64 {
        let di = |a: f64, b: f64, tau: f64| {
            let d = (a - b).abs().rem_euclid(tau);
            d.min(tau - d)
        };
        di(p.r1, q.r1, self.tau1) + di(p.r2, q.r2, self.tau2)
    }
}

pub fn torus_rotate(torus: &Torus, p: TorusPoint, t: f64) -> TorusPoint {
    torus.rotate(p, t)
}

/// n₁ × n₂ cells, row-major with r₂ fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusGrid {
    pub torus: Torus,
    pub n1: usize,
    pub n2: usize,
}

impl TorusGrid {
    pub fn new(torus: Torus, n1: usize, n2: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return arg("torus grid needs at least one cell per axis");
        }
        Ok(TorusGrid { torus, n1, n2 })
    }

    pub fn cells(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn widths(&self) -> (f64, f64) {
        (self.torus.tau1 / self.n1 as f64, self.torus.tau2 / self.n2 as f64)
    }

    pub fn center(&self, idx: usize) -> TorusPoint {
        let (h1, h2) = self.widths();
        TorusPoint { r1: ((idx / self.n2) as f64 + 0.5) * h1, r2: ((idx % self.n2) as f64 + 0.5) * h2 }
    }

    pub fn locate(&self, p: TorusPoint) -> usize {
        let (h1, h2) = self.widths();
        let p = self.torus.point(p.r1, p.r2);
        let i = ((p.r1 / h1) as usize).min(self.n1 - 1);
        let j = ((p.r2 / h2) as usize).min(self.n2 - 1);
        i * self.n2 + j
    }

    /// Cells overlapped by the cell-sized box centred at p, with area fractions summing to 1.
    fn overlaps(&self, p: TorusPoint) -> Vec<(usize, f64)> {
        let (h1, h2) = self.widths();
        let split = |x: f64, h: f64, n: usize| {
            let lo = x / h - 0.5;
            let k = lo.floor();
            let f = lo - k;
            let k = (k as i64).rem_euclid(n as i64) as usize;
            [(k, 1.0 - f), ((k + 1) % n, f)]
        };
        let mut out = Vec::with_capacity(4);
        for (i, a) in split(p.r1, h1, self.n1) {
            for (j, b) in split(p.r2, h2, self.n2) {
                if a * b > 0.0 {
                    out.push((i * self.n2 + j, a * b));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct QuasiConfig {
    pub sim: SimConfig,
    pub grid: GridSpec,
    pub lyapunov: LyapunovSpec,
    pub x0: Vec<f64>,
    /// First burn-in length; doubled until consecutive estimates are ρ_β-close.
    pub burn: f64,
    pub max_doublings: usize,
    pub tol: f64,
}

impl QuasiConfig {
    pub fn new(sim: SimConfig, grid: GridSpec) -> Result<Self> {
        Ok(QuasiConfig {
            x0: vec![0.0; grid.dim()],
            sim,
            grid,
            lyapunov: LyapunovSpec::quadratic(0.1)?,
            burn: 10.0,
            max_doublings: 5,
            tol: 0.1,
        })
    }

    fn seeded(&self, tag: u64) -> SimConfig {
        let mut s = self.sim.clone();
        s.seed = mix64(self.sim.seed ^ mix64(tag));
        s
    }
}

/// Torus average of α̃ must be negative.
pub fn screen_parent(parent: &QuasiPeriodicParent) -> Result<f64> {
    let a = parent.torus_average_alpha(16);
    if !(a < 0.0) {
        return Err(Error::Precondition(format!("torus average of α̃ is {a}, not negative")));
    }
    Ok(a)
}

/// Draws of K^{r₁,r₂}(t, s, ·) started from `init`.
pub fn k_simulate(parent: &QuasiPeriodicParent, r1: f64, r2: f64, s: f64, init: &InitialLaw, t: f64, sim: &SimConfig) -> Result<Ensemble> {
    push_ensemble(&parent.shifted(r1, r2), s, init, t, sim)
}

#[derive(Debug, Clone)]
pub struct MuTilde {
    pub at: TorusPoint,
    pub burn: f64,
    pub measure: GridMeasure,
    pub samples: Vec<f64>,
    /// ρ_β between consecutive burn levels.
    pub cauchy: Vec<f64>,
}

fn point_tag(r1: f64, r2: f64, level: u64) -> u64 {
    mix64(r1.to_bits()) ^ mix64(r2.to_bits().rotate_left(17)) ^ level
}

/// Law of K^{r₁,r₂}(0, −burn, x₀), burn doubled until ρ_β-Cauchy.
pub fn mu_tilde(parent: &QuasiPeriodicParent, r1: f64, r2: f64, cfg: &QuasiConfig) -> Result<MuTilde> {
    screen_parent(parent)?;
    mu_tilde_unscreened(parent, r1, r2, cfg)
}

fn mu_tilde_unscreened(parent: &QuasiPeriodicParent, r1: f64, r2: f64, cfg: &QuasiConfig) -> Result<MuTilde> {
    if !(cfg.burn > 0.0 && cfg.tol > 0.0) {
        return arg("burn-in and tolerance must be positive");
    }
    let c = parent.shifted(r1, r2);
    let init = InitialLaw::Dirac(cfg.x0.clone());
    let run = |level: usize| -> Result<(GridMeasure, Vec<f64>)> {
        let burn = cfg.burn * 2f64.powi(level as i32);
        let e = push_ensemble(&c, -burn, &init, 0.0, &cfg.seeded(point_tag(r1, r2, level as u64)))?;
        Ok((density_estimate(&e.samples, e.dim, &cfg.grid)?, e.samples))
    };
    let mut prev = run(0)?;
    let mut cauchy = Vec::new();
    for level in 1..=cfg.max_doublings {
        let next = run(level)?;
        let d = rho_beta(&prev.0, &next.0, &cfg.lyapunov)?;
        cauchy.push(d);
        if d < cfg.tol {
            let at = Torus::of(parent).point(r1, r2);
            return Ok(MuTilde { at, burn: cfg.burn * 2f64.powi(level as i32), measure: next.0, samples: next.1, cauchy });
        }
        prev = next;
    }
    Err(Error::Convergence(format!(
        "μ̃ at ({r1:.4}, {r2:.4}) not Cauchy after {} doublings (last ρ_β = {:.4})",
        cfg.max_doublings,
        cauchy.last().copied().unwrap_or(f64::NAN)
    )))
}

/// Uniform torus weights times a spatial grid measure per torus cell.
#[derive(Debug, Clone)]
pub struct CylinderMeasure {
    pub torus: TorusGrid,
    pub weights: Vec<f64>,
    pub cells: Vec<GridMeasure>,
    /// Spatial draws behind each cell's measure (empty for derived measures).
    pub samples: Vec<Vec<f64>>,
}

impl CylinderMeasure {
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().zip(&self.cells).map(|(w, m)| w * (m.in_box_mass() + m.leak)).sum()
    }

    pub fn torus_marginal(&self) -> &[f64] {
        &self.weights
    }

    pub fn spatial_marginal(&self) -> Result<GridMeasure> {
        let g = self.cells[0].grid.clone();
        let mut masses = vec![0.0; g.cells()];
        let mut leak = 0.0;
        for (w, m) in self.weights.iter().zip(&self.cells) {
            for (a, b) in masses.iter_mut().zip(&m.masses) {
                *a += w * b;
            }
            leak += w * m.leak;
        }
        GridMeasure::new(g, masses, leak)
    }

    /// ∫ f d(cylinder) with f evaluated at torus and spatial cell centers.
    pub fn integrate(&self, f: &(dyn Fn(f64, f64, &[f64]) -> f64 + Sync)) -> f64 {
        let mut acc = 0.0;
        for (k, (w, m)) in self.weights.iter().zip(&self.cells).enumerate() {
            let p = self.torus.center(k);
            acc += w * m.integrate(|x| f(p.r1, p.r2, x));
        }
        acc
    }

    /// ½ Σ over (torus cell, spatial cell) of |joint mass difference|, leaks included.
    pub fn total_variation(&self, other: &CylinderMeasure) -> Result<f64> {
        if self.torus != other.torus || self.cells[0].grid != other.cells[0].grid {
            return arg("cylinder measures live on different grids");
        }
        let mut s = 0.0;
        for k in 0..self.cells.len() {
            let (w, v) = (self.weights[k], other.weights[k]);
            let (a, b) = (&self.cells[k], &other.cells[k]);
            s += a.masses.iter().zip(&b.masses).map(|(x, y)| (w * x - v * y).abs()).sum::<f64>();
            s += (w * a.leak - v * b.leak).abs();
        }
        Ok(0.5 * s)
    }

    /// Columns r1_cell, r2_cell, x_cell, mass (joint mass; spatial leak omitted).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let g = &self.cells[0].grid;
        let header: Vec<String> = (0..g.dim()).map(|i| format!("x{}_cell", i + 1)).collect();
        writeln!(f, "r1_cell,r2_cell,{},mass", header.join(","))?;
        for (k, (w, m)) in self.weights.iter().zip(&self.cells).enumerate() {
            let (i, j) = (k / self.torus.n2, k % self.torus.n2);
            for (c, mass) in m.masses.iter().enumerate() {
                let x: Vec<String> = g.center(c).iter().map(|v| format!("{v}")).collect();
                writeln!(f, "{i},{j},{},{:e}", x.join(","), w * mass)?;
            }
        }
        f.flush()?;
        Ok(())
    }
}

/// μ̃ at every torus cell center with uniform weights (midpoint rule for the torus integral).
pub fn cylinder_invariant(parent: &QuasiPeriodicParent, grid: &TorusGrid, cfg: &QuasiConfig) -> Result<CylinderMeasure> {
    screen_parent(parent)?;
    let cells: Vec<MuTilde> = (0..grid.cells())
        .into_par_iter()
        .map(|k| {
            let p = grid.center(k);
            mu_tilde_unscreened(parent, p.r1, p.r2, cfg).map_err(|e| match e {
                Error::Convergence(m) => Error::Convergence(format!("torus cell {k}: {m}")),
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    let w = 1.0 / grid.cells() as f64;
    let (measures, samples) = cells.into_iter().map(|m| (m.measure, m.samples)).unzip();
    Ok(CylinderMeasure { torus: *grid, weights: vec![w; grid.cells()], cells: measures, samples })
}

/// Push a cylinder measure by the lift for time t: each cell's draws go through K^{r₁,r₂}(t, 0, ·) and the
/// rotated cell is spread over the cells it overlaps by area.
pub fn push_cylinder(parent: &QuasiPeriodicParent, cyl: &CylinderMeasure, t: f64, cfg: &QuasiConfig) -> Result<CylinderMeasure> {
    if cyl.samples.iter().any(|s| s.is_empty()) {
        return arg("pushing needs the draws behind every cell");
    }
    let g = &cyl.cells[0].grid;
    let d = g.dim();
    let pushed: Vec<GridMeasure> = (0..cyl.torus.cells())
        .into_par_iter()
        .map(|k| {
            let p = cyl.torus.center(k);
            let init = InitialLaw::Samples { dim: d, data: cyl.samples[k].clone() };
            let sim = SimConfig { paths: cyl.samples[k].len() / d, ..cfg.seeded(point_tag(p.r1, p.r2, 1 << 40)) };
            let e = k_simulate(parent, p.r1, p.r2, 0.0, &init, t, &sim)?;
            density_estimate(&e.samples, d, g)
        })
        .collect::<Result<_>>()?;
    let n = cyl.torus.cells();
    let mut joint = vec![vec![0.0; g.cells()]; n];
    let mut leak = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for (k, m) in pushed.iter().enumerate() {
        let q = cyl.torus.torus.rotate(cyl.torus.center(k), t);
        for (cell, frac) in cyl.torus.overlaps(q) {
            let w = frac * cyl.weights[k];
            weights[cell] += w;
            for (a, b) in joint[cell].iter_mut().zip(&m.masses) {
                *a += w * b;
            }
            leak[cell] += w * m.leak;
        }
    }
    let cells = (0..n)
        .map(|k| {
            let w = weights[k];
            if w > 0.0 {
                GridMeasure::normalized(g.clone(), joint[k].iter().map(|v| v / w).collect(), leak[k] / w)
            } else {
                GridMeasure::new(g.clone(), vec![0.0; g.cells()], 1.0)
            }
        })
        .collect::<Result<_>>()?;
    Ok(CylinderMeasure { torus: cyl.torus, weights, cells, samples: vec![Vec::new(); n] })
}

pub type CylinderFn<'a> = &'a (dyn Fn(f64, f64, &[f64]) -> f64 + Sync);

/// Time averages (1/T)Σ f(Φ̂(kh)) along one lifted trajectory from (start, x), sampled every `h_avg`.
pub fn birkhoff_averages(
    parent: &QuasiPeriodicParent,
    fs: &[CylinderFn],
    start: TorusPoint,
    x: &[f64],
    horizon: f64,
    h_avg: f64,
    sim: &SimConfig,
) -> Result<Vec<f64>> {
    if !(horizon > 0.0 && h_avg > 0.0) {
        return arg("Birkhoff average needs T > 0 and h_avg > 0");
    }
    let torus = Torus::of(parent);
    let start = torus.point(start.r1, start.r2);
    let every = ((h_avg / sim.step).round() as usize).max(1);
    let path = simulate_path_indexed(&parent.shifted(start.r1, start.r2), 0.0, x, horizon, sim, 0, every)?;
    let mut acc = vec![0.0; fs.len()];
    // skip the initial state so the samples are the right endpoints of each averaging step
    let n = path.len() - 1;
    for i in 1..=n {
        let p = torus.rotate(start, path.times[i]);
        let xi = path.state(i);
        for (a, f) in acc.iter_mut().zip(fs) {
            *a += f(p.r1, p.r2, xi);
        }
    }
    Ok(acc.into_iter().map(|a| a / n as f64).collect())
}

pub fn birkhoff_average(parent: &QuasiPeriodicParent, f: CylinderFn, start: TorusPoint, x: &[f64], horizon: f64, h_avg: f64, sim: &SimConfig) -> Result<f64> {
    Ok(birkhoff_averages(parent, &[f], start, x, horizon, h_avg, sim)?[0])
}

/// Time average of f along the pure rotation orbit of `start`.
pub fn rotation_average(torus: &Torus, f: &dyn Fn(f64, f64) -> f64, start: TorusPoint, horizon: f64, h: f64) -> f64 {
    let n = (horizon / h).round().max(1.0) as usize;
    (1..=n).map(|k| {
        let p = torus.rotate(start, k as f64 * h);
        f(p.r1, p.r2)
    })
    .sum::<f64>()
        / n as f64
}

/// Local maxima of a moving-average smoothed 1-D density whose prominence exceeds `min_prominence` × peak.
pub fn count_modes(m: &GridMeasure, smooth: usize, min_prominence: f64) -> Result<usize> {
    if m.grid.dim() != 1 {
        return Err(Error::Unsupported("mode counting is one-dimensional".into()));
    }
    let p = &m.masses;
    let n = p.len();
    let sm: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(smooth), (i + smooth).min(n - 1));
            p[a..=b].iter().sum::<f64>() / (b - a + 1) as f64
        })
        .collect();
    let top = sm.iter().copied().fold(0.0, f64::max);
    let mut modes = 0;
    for i in 0..n {
        let left = sm[..i].iter().rev().take_while(|&&v| v <= sm[i]).count();
        let right = sm[i + 1..].iter().take_while(|&&v| v < sm[i]).count();
        let is_max = (i == 0 || sm[i - 1] <= sm[i]) && (i + 1 == n || sm[i + 1] < sm[i]);
        if !is_max || sm[i] <= 0.0 {
            continue;
        }
        // prominence: drop to the lowest point before a higher value on either side
        let lmin = if left == i { 0.0 } else { sm[i - left..i].iter().copied().fold(f64::INFINITY, f64::min) };
        let rmin = if i + right + 1 >= n { 0.0 } else { sm[i + 1..=i + right].iter().copied().fold(f64::INFINITY, f64::min) };
        if sm[i] - lmin.max(rmin) >= min_prominence * top {
            modes += 1;
        }
    }
    Ok(modes)
}
