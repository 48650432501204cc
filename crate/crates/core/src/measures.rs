//! Grid, sample and Gaussian measures; total variation, Wasserstein-1 and ρ_β.
//!
//! Total variation is the half-sum ½Σ|Δ| (bounded by 1), i.e. half the Jordan mass |μ₁ − μ₂|(ℝ^d).
//! Consequently ρ_β ≥ 2·TV.

use crate::error::{arg, Error, Result};
use crate::quadrature::{normal_interval, normal_pdf, GaussRule};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

/// Mass conservation tolerance for grid measures.
pub const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n: Vec<usize>,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, n: Vec<usize>) -> Result<Self> {
        let d = lo.len();
        if !(d == 1 || d == 2) || hi.len() != d || n.len() != d {
            return arg(format!("grid needs matching lo/hi/n of dimension 1 or 2 (got {d})"));
        }
        for i in 0..d {
            if !(hi[i] > lo[i]) || !lo[i].is_finite() || !hi[i].is_finite() || n[i] == 0 {
                return arg(format!("degenerate box on axis {i}: [{}, {}] with {} cells", lo[i], hi[i], n[i]));
            }
        }
        Ok(GridSpec { lo, hi, n })
    }

    pub fn line(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(vec![lo], vec![hi], vec![n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn cells(&self) -> usize {
        self.n.iter().product()
    }

    pub fn width(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.n[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }

    /// Center of cell `idx` (row-major, last axis fastest).
    pub fn center(&self, idx: usize) -> Vec<f64> {
        match self.dim() {
            1 => vec![self.lo[0] + (idx as f64 + 0.5) * self.width(0)],
            _ => {
                let (i, j) = (idx / self.n[1], idx % self.n[1]);
                vec![
                    self.lo[0] + (i as f64 + 0.5) * self.width(0),
                    self.lo[1] + (j as f64 + 0.5) * self.width(1),
                ]
            }
        }
    }

    /// Cell holding x; cells are left-closed, right-open, so x = hi is outside.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0;
        for a in 0..self.dim() {
            let u = (x[a] - self.lo[a]) / self.width(a);
            if !(u >= 0.0) || x[a] >= self.hi[a] {
                return None;
            }
            let k = (u.floor() as usize).min(self.n[a] - 1);
            idx = idx * self.n[a] + k;
        }
        Some(idx)
    }

    /// Corner of the box with the largest |x|², used as the V-proxy for leaked mass.
    pub fn far_corner(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|a| if self.lo[a].abs() > self.hi[a].abs() { self.lo[a] } else { self.hi[a] })
            .collect()
    }
}

/// Probability measure stored as cell masses on a box plus mass leaked outside.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    pub grid: GridSpec,
    pub masses: Vec<f64>,
    pub leak: f64,
}

impl GridMeasure {
    pub fn new(grid: GridSpec, masses: Vec<f64>, leak: f64) -> Result<Self> {
        if masses.len() != grid.cells() {
            return arg(format!("{} masses for {} cells", masses.len(), grid.cells()));
        }
        if masses.iter().any(|m| !(*m >= 0.0)) || !(leak >= 0.0) {
            return arg("masses must be nonnegative");
        }
        let tot: f64 = masses.iter().sum::<f64>() + leak;
        if (tot - 1.0).abs() > MASS_TOL {
            return arg(format!("total mass {tot} differs from 1"));
        }
        Ok(GridMeasure { grid, masses, leak })
    }

    /// Normalizes nonnegative weights (leak included) to total mass 1.
    pub fn normalized(grid: GridSpec, mut masses: Vec<f64>, mut leak: f64) -> Result<Self> {
        let tot: f64 = masses.iter().sum::<f64>() + leak;
        if !(tot > 0.0) {
            return arg("cannot normalize a zero measure");
        }
        masses.iter_mut().for_each(|m| *m /= tot);
        leak /= tot;
        Self::new(grid, masses, leak)
    }

    pub fn dirac(grid: GridSpec, x: &[f64]) -> Result<Self> {
        density_estimate(x, x.len(), &grid)
    }

    pub fn in_box_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Cell density values (mass / cell volume).
    pub fn density(&self) -> Vec<f64> {
        let v = self.grid.cell_volume();
        self.masses.iter().map(|m| m / v).collect()
    }

    /// ∫ f dμ over the in-box cells, f evaluated at centers.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.masses
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(i, m)| m * f(&self.grid.center(i)))
            .sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.grid.dim()).map(|a| self.integrate(|x| x[a]) / self.in_box_mass()).collect()
    }

    fn same_grid(&self, o: &GridMeasure) -> Result<()> {
        if self.grid != o.grid {
            return arg("measures live on different grids");
        }
        Ok(())
    }

    /// CSV with one row per cell (centers then mass) plus a `.meta` sidecar (box, resolution, leak).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut head: Vec<String> = (1..=self.grid.dim()).map(|i| format!("x{i}")).collect();
        head.push("mass".into());
        w.write_record(&head).map_err(csv_err)?;
        for (i, m) in self.masses.iter().enumerate() {
            let mut row: Vec<String> = self.grid.center(i).iter().map(|c| format!("{c:.12e}")).collect();
            row.push(format!("{m:.17e}"));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        let mut meta = std::fs::File::create(meta_path(path))?;
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:.17e}")).collect::<Vec<_>>().join(" ");
        writeln!(meta, "dim = {}", self.grid.dim())?;
        writeln!(meta, "lo = {}", list(&self.grid.lo))?;
        writeln!(meta, "hi = {}", list(&self.grid.hi))?;
        writeln!(meta, "n = {}", self.grid.n.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" "))?;
        writeln!(meta, "leak = {:.17e}", self.leak)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let meta = BufReader::new(std::fs::File::open(meta_path(path))?);
        let (mut lo, mut hi, mut n, mut leak) = (None, None, None, None);
        for line in meta.lines() {
            let line = line?;
            let Some((k, v)) = line.split_once('=') else { continue };
            let nums = |v: &str| -> Result<Vec<f64>> {
                v.split_whitespace()
                    .map(|x| x.parse::<f64>().map_err(|e| Error::Config(format!("bad number '{x}': {e}"))))
                    .collect()
            };
            match k.trim() {
                "lo" => lo = Some(nums(v)?),
                "hi" => hi = Some(nums(v)?),
                "n" => n = Some(nums(v)?.into_iter().map(|x| x as usize).collect()),
                "leak" => leak = nums(v)?.first().copied(),
                _ => {}
            }
        }
        let missing = |f: &str| Error::Config(format!("measure header lacks '{f}'"));
        let grid = GridSpec::new(lo.ok_or_else(|| missing("lo"))?, hi.ok_or_else(|| missing("hi"))?, n.ok_or_else(|| missing("n"))?)?;
        let mut rd = csv::Reader::from_path(path).map_err(csv_err)?;
        let mut masses = Vec::with_capacity(grid.cells());
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            let m = rec.get(grid.dim()).ok_or_else(|| missing("mass column"))?;
            masses.push(m.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad mass '{m}': {e}")))?);
        }
        GridMeasure::new(grid, masses, leak.ok_or_else(|| missing("leak"))?)
    }
}

fn meta_path(p: &Path) -> std::path::PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".meta");
    s.into()
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Histogram of row-major samples (n × d) with half-open cells; outside mass goes to the leak.
pub fn density_estimate(samples: &[f64], dim: usize, grid: &GridSpec) -> Result<GridMeasure> {
    if samples.is_empty() || dim == 0 || samples.len() % dim != 0 {
        return arg("density estimate needs a nonempty n×d sample array");
    }
    if dim != grid.dim() {
        return arg(format!("samples have dimension {dim}, grid has {}", grid.dim()));
    }
    let n = samples.len() / dim;
    let mut counts = vec![0u64; grid.cells()];
    let mut out = 0u64;
    for x in samples.chunks_exact(dim) {
        match grid.locate(x) {
            Some(i) => counts[i] += 1,
            None => out += 1,
        }
    }
    let w = 1.0 / n as f64;
    Ok(GridMeasure { grid: grid.clone(), masses: counts.iter().map(|&c| c as f64 * w).collect(), leak: out as f64 * w })
}

/// ½Σ|Δmass| + ½|Δleak|.
pub fn total_variation(a: &GridMeasure, b: &GridMeasure) -> Result<f64> {
    a.same_grid(b)?;
    let s: f64 = a.masses.iter().zip(&b.masses).map(|(x, y)| (x - y).abs()).sum();
    Ok((0.5 * (s + (a.leak - b.leak).abs())).min(1.0))
}

/// Lyapunov weight V with the scale β.
#[derive(Clone)]
pub struct LyapunovSpec {
    pub v: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub beta: f64,
    pub id: String,
}

impl fmt::Debug for LyapunovSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LyapunovSpec({}, β = {})", self.id, self.beta)
    }
}

impl LyapunovSpec {
    /// V(x) = |x|².
    pub fn quadratic(beta: f64) -> Result<Self> {
        Self::new(Arc::new(|x: &[f64]| x.iter().map(|v| v * v).sum()), beta, "|x|^2")
    }

    pub fn new(v: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>, beta: f64, id: &str) -> Result<Self> {
        if !(beta > 0.0) {
            return arg(format!("β must be positive, got {beta}"));
        }
        Ok(LyapunovSpec { v, beta, id: id.into() })
    }

    pub fn weight(&self, x: &[f64]) -> f64 {
        1.0 + self.beta * (self.v)(x)
    }
}

/// Σ (1 + βV(center))|Δmass| + (1 + βV(far corner))|Δleak|.
pub fn rho_beta(a: &GridMeasure, b: &GridMeasure, spec: &LyapunovSpec) -> Result<f64> {
    a.same_grid(b)?;
    let mut s = 0.0;
    for (i, (x, y)) in a.masses.iter().zip(&b.masses).enumerate() {
        let d = (x - y).abs();
        if d > 0.0 {
            s += spec.weight(&a.grid.center(i)) * d;
        }
    }
    Ok(s + spec.weight(&a.grid.far_corner()) * (a.leak - b.leak).abs())
}

/// Entropic regularization strength and iteration count for the 2-D transport diagnostic.
pub const SINKHORN_EPS: f64 = 1e-2;
pub const SINKHORN_ITERS: usize = 500;
const SINKHORN_MAX_SUPPORT: usize = 4096;

/// W₁ between grid measures: exact CDF formula in 1D, entropic (diagnostic) in 2D.
/// In-box masses are renormalized when the leaks differ.
pub fn wasserstein1(a: &GridMeasure, b: &GridMeasure) -> Result<f64> {
    a.same_grid(b)?;
    let (ma, mb) = (a.in_box_mass(), b.in_box_mass());
    if !(ma > 0.0 && mb > 0.0) {
        return arg("W1 needs in-box mass in both measures");
    }
    match a.grid.dim() {
        1 => {
            let w = a.grid.width(0);
            let (mut fa, mut fb, mut acc) = (0.0, 0.0, 0.0);
            for (x, y) in a.masses.iter().zip(&b.masses) {
                fa += x / ma;
                fb += y / mb;
                acc += (fa - fb).abs();
            }
            // the last term is |1 − 1| and lies beyond the final center
            Ok((acc - (fa - fb).abs()) * w)
        }
        2 => sinkhorn(a, b, ma, mb),
        d => arg(format!("W1 unsupported in dimension {d}")),
    }
}

fn sinkhorn(a: &GridMeasure, b: &GridMeasure, ma: f64, mb: f64) -> Result<f64> {
    let sup = |m: &GridMeasure, tot: f64| -> Vec<(Vec<f64>, f64)> {
        m.masses.iter().enumerate().filter(|(_, v)| **v > 0.0).map(|(i, v)| (m.grid.center(i), v / tot)).collect()
    };
    let (pa, pb) = (sup(a, ma), sup(b, mb));
    if pa.len() > SINKHORN_MAX_SUPPORT || pb.len() > SINKHORN_MAX_SUPPORT {
        return Err(Error::Unsupported(format!(
            "2-D W1 diagnostic limited to {SINKHORN_MAX_SUPPORT} support cells per measure"
        )));
    }
    let cost = |x: &[f64], y: &[f64]| ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
    let c: Vec<Vec<f64>> = pa.iter().map(|(x, _)| pb.iter().map(|(y, _)| cost(x, y)).collect()).collect();
    let (la, lb): (Vec<f64>, Vec<f64>) = (pa.iter().map(|p| p.1.ln()).collect(), pb.iter().map(|p| p.1.ln()).collect());
    let eps = SINKHORN_EPS;
    let mut f = vec![0.0; pa.len()];
    let mut g = vec![0.0; pb.len()];
    let lse = |v: &mut dyn Iterator<Item = f64>| {
        let xs: Vec<f64> = v.collect();
        let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
    };
    for _ in 0..SINKHORN_ITERS {
        for i in 0..f.len() {
            f[i] = -eps * lse(&mut (0..g.len()).map(|j| (g[j] - c[i][j]) / eps + lb[j]));
        }
        for j in 0..g.len() {
            g[j] = -eps * lse(&mut (0..f.len()).map(|i| (f[i] - c[i][j]) / eps + la[i]));
        }
    }
    let mut total = 0.0;
    for i in 0..f.len() {
        for j in 0..g.len() {
            let p = ((f[i] + g[j] - c[i][j]) / eps + la[i] + lb[j]).exp();
            total += p * c[i][j];
        }
    }
    Ok(total)
}

/// Exact 1-D W₁ between two empirical samples: ∫|F₁ − F₂|.
pub fn wasserstein1_samples(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return arg("W1 needs nonempty samples");
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut prev = xa[0].min(xb[0]);
    let mut acc = 0.0;
    while i < xa.len() || j < xb.len() {
        let next = match (xa.get(i), xb.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            _ => unreachable!(),
        };
        acc += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < xa.len() && xa[i] == next {
            i += 1;
        }
        while j < xb.len() && xb[j] == next {
            j += 1;
        }
        prev = next;
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    pub mean: Vec<f64>,
    /// Row-major d × d.
    pub cov: Vec<f64>,
}

impl GaussianMeasure {
    pub fn new(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.len() != d * d {
            return arg("covariance must be d×d");
        }
        for i in 0..d {
            for j in 0..d {
                if (cov[i * d + j] - cov[j * d + i]).abs() > 1e-12 * (1.0 + cov[i * d + j].abs()) {
                    return arg("covariance is not symmetric");
                }
            }
        }
        let m = nalgebra::DMatrix::from_row_slice(d, d, &cov);
        let emin = nalgebra::SymmetricEigen::new(m).eigenvalues.min();
        if emin < -1e-12 {
            return arg(format!("covariance is not positive semi-definite (eigenvalue {emin})"));
        }
        Ok(GaussianMeasure { mean, cov })
    }

    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::new(vec![mean], vec![var])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        match self.dim() {
            1 => normal_pdf(x[0], self.mean[0], self.cov[0]),
            _ => {
                let d = self.dim();
                let m = nalgebra::DMatrix::from_row_slice(d, d, &self.cov);
                let Some(inv) = m.clone().try_inverse() else { return f64::NAN };
                let z = nalgebra::DVector::from_iterator(d, x.iter().zip(&self.mean).map(|(a, b)| a - b));
                let q = (z.transpose() * inv * &z)[0];
                (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powi(d as i32) * m.determinant()).sqrt()
            }
        }
    }

    /// Exact cell masses in 1D (error function), tensor Gauss–Legendre per cell in 2D.
    pub fn to_grid(&self, grid: &GridSpec) -> Result<GridMeasure> {
        if grid.dim() != self.dim() {
            return arg("grid and Gaussian dimensions differ");
        }
        let masses: Vec<f64> = match self.dim() {
            1 => {
                let w = grid.width(0);
                (0..grid.cells())
                    .map(|i| {
                        let a = grid.lo[0] + i as f64 * w;
                        normal_interval(a, a + w, self.mean[0], self.cov[0])
                    })
                    .collect()
            }
            _ => {
                let rule = GaussRule::legendre(8);
                let (w0, w1) = (grid.width(0), grid.width(1));
                (0..grid.cells())
                    .map(|i| {
                        let c = grid.center(i);
                        let mut acc = 0.0;
                        for (u, wu) in rule.mapped(c[0] - 0.5 * w0, c[0] + 0.5 * w0) {
                            for (v, wv) in rule.mapped(c[1] - 0.5 * w1, c[1] + 0.5 * w1) {
                                acc += wu * wv * self.pdf(&[u, v]);
                            }
                        }
                        acc
                    })
                    .collect()
            }
        };
        let leak = (1.0 - masses.iter().sum::<f64>()).max(0.0);
        GridMeasure::normalized(grid.clone(), masses, leak)
    }
}

/// Zeros of log φ₂ − log φ₁ in z = y − m₁, with φ₂ = N(m₁ + dm, v₁ + dv).
fn crossings(v1: f64, dm: f64, dv: f64) -> Vec<f64> {
    // dv z² + 2 v₁ dm z − v₁ dm² − v₁ v₂ ln(1 + dv/v₁) = 0
    let v2 = v1 + dv;
    let (a, b, c) = (dv, 2.0 * v1 * dm, -v1 * dm * dm - v1 * v2 * (dv / v1).ln_1p());
    if a == 0.0 {
        return if b == 0.0 { vec![] } else { vec![-c / b] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let q = -0.5 * (b + if b < 0.0 { -disc.sqrt() } else { disc.sqrt() });
    let mut r = vec![q / a];
    if q != 0.0 {
        r.push(c / q);
    }
    r.sort_by(f64::total_cmp);
    r
}

/// Relative/absolute tolerance of the Gaussian ρ_β quadrature.
pub const GAUSSIAN_RHO_TOL: f64 = 1e-8;

/// ∫(1 + βV)|φ₁ − φ₂| for 1-D Gaussians, integrated piecewise between density crossings.
pub fn gaussian_rho_beta(g1: &GaussianMeasure, g2: &GaussianMeasure, spec: &LyapunovSpec) -> Result<f64> {
    if g1.dim() != 1 || g2.dim() != 1 {
        return arg("gaussian_rho_beta is one-dimensional");
    }
    if !(g2.cov[0] > 0.0) {
        return arg("gaussian_rho_beta needs positive variances");
    }
    gaussian_rho_beta_offset(g1, g2.mean[0] - g1.mean[0], g2.cov[0] - g1.cov[0], spec)
}

/// ρ_β(N(m, v), N(m + dm, v + dv)) with the offsets given directly.
///
/// The integrand is φ₁|expm1(log φ₂ − log φ₁)|, so distances far below the rounding level of the
/// densities themselves stay accurate when dm and dv are known analytically.
pub fn gaussian_rho_beta_offset(base: &GaussianMeasure, dm: f64, dv: f64, spec: &LyapunovSpec) -> Result<f64> {
    if base.dim() != 1 {
        return arg("gaussian_rho_beta is one-dimensional");
    }
    let (m1, v1) = (base.mean[0], base.cov[0]);
    let v2 = v1 + dv;
    if !(v1 > 0.0 && v2 > 0.0) || !dm.is_finite() {
        return arg("gaussian_rho_beta needs positive variances");
    }
    if dm == 0.0 && dv == 0.0 {
        return Ok(0.0);
    }
    let (s1, s2) = (v1.sqrt(), v2.sqrt());
    let lo = (-40.0 * s1).min(dm - 40.0 * s2);
    let hi = (40.0 * s1).max(dm + 40.0 * s2);
    let mut pts = vec![lo];
    pts.extend(crossings(v1, dm, dv).into_iter().filter(|&p| p > lo && p < hi));
    pts.push(hi);
    let rule = GaussRule::legendre(20);
    let smin = s1.min(s2);
    let half_log = 0.5 * (dv / v1).ln_1p();
    let f = |z: f64| {
        let dl = (dv * z * z + 2.0 * v1 * dm * z - v1 * dm * dm) / (2.0 * v1 * v2) - half_log;
        let top = if dl > 0.0 { normal_pdf(z, dm, v2) } else { normal_pdf(z, 0.0, v1) };
        spec.weight(&[m1 + z]) * top * -(-dl.abs()).exp_m1()
    };
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mut panels = (((b - a) / smin).ceil() as usize).max(1);
        let mut prev = composite_panels(&rule, &f, a, b, panels);
        loop {
            panels *= 2;
            let cur = composite_panels(&rule, &f, a, b, panels);
            let err = (cur - prev).abs();
            prev = cur;
            if err <= GAUSSIAN_RHO_TOL * cur.abs().max(1e-300) || err <= 1e-300 {
                break;
            }
            if panels > 1 << 16 {
                return Err(Error::Numeric("gaussian ρ_β quadrature did not converge".into()));
            }
        }
        total += prev;
    }
    Ok(total)
}

fn composite_panels(rule: &GaussRule, f: &impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels).map(|i| rule.integrate(f, a + i as f64 * h, a + (i + 1) as f64 * h)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_with_breaks, normal_cdf};
    use approx::assert_relative_eq;

    fn line() -> GridSpec {
        GridSpec::line(-6.0, 6.0, 1200).unwrap()
    }

    #[test]
    fn histogram_examples() {
        let g = GridSpec::line(0.0, 1.0, 10).unwrap();
        let m = density_estimate(&[0.55; 7], 1, &g).unwrap();
        assert_eq!(m.masses[5], 1.0);
        let m = density_estimate(&[0.5, 2.0, -1.0, 1.0], 1, &g).unwrap();
        assert_eq!(m.leak, 0.75);
        assert_eq!(m.masses[5], 0.25);
        assert!(density_estimate(&[], 1, &g).is_err());
        assert!(GridSpec::line(1.0, 1.0, 10).is_err());
        assert!(GridSpec::line(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn left_closed_cells() {
        let g = GridSpec::line(0.0, 1.0, 4).unwrap();
        assert_eq!(g.locate(&[0.25]), Some(1));
        assert_eq!(g.locate(&[0.0]), Some(0));
        assert_eq!(g.locate(&[1.0]), None);
        assert_eq!(g.locate(&[f64::NAN]), None);
    }

    #[test]
    fn tv_examples() {
        let g = GridSpec::line(0.0, 2.0, 2).unwrap();
        let a = density_estimate(&[0.5], 1, &g).unwrap();
        let b = density_estimate(&[1.5], 1, &g).unwrap();
        assert_eq!(total_variation(&a, &a).unwrap(), 0.0);
        assert_eq!(total_variation(&a, &b).unwrap(), 1.0);
        let other = GridSpec::line(0.0, 2.0, 3).unwrap();
        assert!(total_variation(&a, &density_estimate(&[0.5], 1, &other).unwrap()).is_err());
    }

    #[test]
    fn tv_of_shifted_gaussians() {
        let a = GaussianMeasure::scalar(0.0, 1.0).unwrap().to_grid(&line()).unwrap();
        let b = GaussianMeasure::scalar(0.5, 1.0).unwrap().to_grid(&line()).unwrap();
        // ½∫|φ₀ − φ_{0.5}| = 2Φ(0.25) − 1
        let exact = 2.0 * normal_cdf(0.25, 0.0, 1.0) - 1.0;
        assert!((total_variation(&a, &b).unwrap() - exact).abs() < 1e-3);
    }

    #[test]
    fn rho_of_diracs() {
        let g = GridSpec::line(-4.0, 4.0, 80).unwrap();
        let spec = LyapunovSpec::quadratic(0.3).unwrap();
        let a = GridMeasure::dirac(g.clone(), &[1.05]).unwrap();
        let b = GridMeasure::dirac(g.clone(), &[-2.05]).unwrap();
        let expected = (1.0 + 0.3 * 1.05f64.powi(2)) + (1.0 + 0.3 * 2.05f64.powi(2));
        assert_relative_eq!(rho_beta(&a, &b, &spec).unwrap(), expected, epsilon = 1e-12);
        assert_eq!(rho_beta(&a, &a, &spec).unwrap(), 0.0);
    }

    #[test]
    fn rho_of_gaussians_grid_and_quadrature() {
        let spec = LyapunovSpec::quadratic(0.1).unwrap();
        let (g0, g1) = (GaussianMeasure::scalar(0.0, 1.0).unwrap(), GaussianMeasure::scalar(1.0, 1.0).unwrap());
        let oracle = integrate_with_breaks(
            &|x: f64| (1.0 + 0.1 * x * x) * (normal_pdf(x, 0.0, 1.0) - normal_pdf(x, 1.0, 1.0)).abs(),
            -30.0,
            30.0,
            &[0.5],
            1e-12,
        )
        .unwrap();
        let q = gaussian_rho_beta(&g0, &g1, &spec).unwrap();
        assert_relative_eq!(q, oracle, epsilon = 1e-9);
        let a = g0.to_grid(&line()).unwrap();
        let b = g1.to_grid(&line()).unwrap();
        assert!((rho_beta(&a, &b, &spec).unwrap() - oracle).abs() < 1e-3);
    }

    #[test]
    fn gaussian_rho_closed_form_unequal_variance() {
        // V = x²: piecewise closed form via normal CDF and truncated second moments
        let spec = LyapunovSpec::quadratic(0.25).unwrap();
        let (m1, v1, m2, v2) = (0.3, 0.7, -0.4, 1.9);
        let pts: Vec<f64> = crossings(v1, m2 - m1, v2 - v1).into_iter().map(|z| z + m1).collect();
        let piece = |a: f64, b: f64, m: f64, v: f64| {
            // ∫_a^b (1 + βy²) φ_{m,v}
            let s = v.sqrt();
            let (za, zb) = ((a - m) / s, (b - m) / s);
            let pa = if za.is_finite() { normal_pdf(za, 0.0, 1.0) } else { 0.0 };
            let pb = if zb.is_finite() { normal_pdf(zb, 0.0, 1.0) } else { 0.0 };
            let mass = normal_cdf(zb, 0.0, 1.0) - normal_cdf(za, 0.0, 1.0);
            let ez = pa - pb;
            let ez2 = mass + (if za.is_finite() { za * pa } else { 0.0 }) - (if zb.is_finite() { zb * pb } else { 0.0 });
            mass + 0.25 * (m * m * mass + 2.0 * m * s * ez + v * ez2)
        };
        let mut bounds = vec![f64::NEG_INFINITY];
        bounds.extend(pts);
        bounds.push(f64::INFINITY);
        let mut exact = 0.0;
        for w in bounds.windows(2) {
            exact += (piece(w[0], w[1], m1, v1) - piece(w[0], w[1], m2, v2)).abs();
        }
        let q = gaussian_rho_beta(&GaussianMeasure::scalar(m1, v1).unwrap(), &GaussianMeasure::scalar(m2, v2).unwrap(), &spec).unwrap();
        assert_relative_eq!(q, exact, max_relative = 1e-9);
    }

    #[test]
    fn gaussian_rho_offset_below_rounding() {
        // β → 0, equal variances: TV distance 2 erf(|dm| / (2 √(2v)))
        let spec = LyapunovSpec::quadratic(1e-14).unwrap();
        let g = GaussianMeasure::scalar(0.2, 0.5).unwrap();
        for dm in [1e-3, 1e-20, -1e-40] {
            let q = gaussian_rho_beta_offset(&g, dm, 0.0, &spec).unwrap();
            assert_relative_eq!(q, 2.0 * libm::erf(dm.abs() / (2.0 * 1.0f64.sqrt())), max_relative = 1e-8);
        }
        let spec = LyapunovSpec::quadratic(0.1).unwrap();
        let small = gaussian_rho_beta_offset(&g, 0.0, -1e-30, &spec).unwrap();
        let big = gaussian_rho_beta_offset(&g, 0.0, -1e-10, &spec).unwrap();
        assert_relative_eq!(big / small, 1e20, max_relative = 1e-6);
    }

    #[test]
    fn gaussian_rho_monotone_and_lower_bound() {
        let spec = LyapunovSpec::quadratic(0.1).unwrap();
        let base = GaussianMeasure::scalar(0.0, 0.8).unwrap();
        assert_eq!(gaussian_rho_beta(&base, &base, &spec).unwrap(), 0.0);
        let mut prev = 0.0;
        for k in 1..=10 {
            let m = 0.1 * k as f64;
            let r = gaussian_rho_beta(&GaussianMeasure::scalar(m, 0.8).unwrap(), &base, &spec).unwrap();
            assert!(r > prev);
            assert!(r >= 2.0 * spec.beta.sqrt() * m);
            prev = r;
        }
        let two = GaussianMeasure::new(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(gaussian_rho_beta(&two, &two, &spec).is_err());
    }

    #[test]
    fn gaussian_rho_tiny_differences_are_resolved() {
        let spec = LyapunovSpec::quadratic(0.1).unwrap();
        let a = GaussianMeasure::scalar(1e-9, 0.5).unwrap();
        let b = GaussianMeasure::scalar(0.0, 0.5).unwrap();
        let r = gaussian_rho_beta(&a, &b, &spec).unwrap();
        // first order: 2 φ(0) Δm (1 + β·v) · ... ≈ linear in Δm
        let r2 = gaussian_rho_beta(&GaussianMeasure::scalar(2e-9, 0.5).unwrap(), &b, &spec).unwrap();
        assert_relative_eq!(r2 / r, 2.0, max_relative = 1e-4);
    }

    #[test]
    fn w1_examples() {
        let g = GridSpec::line(-5.0, 5.0, 1000).unwrap();
        let a = GridMeasure::dirac(g.clone(), &[0.005]).unwrap();
        let b = GridMeasure::dirac(g.clone(), &[2.005]).unwrap();
        assert_relative_eq!(wasserstein1(&a, &b).unwrap(), 2.0, epsilon = 1e-9);
        assert_eq!(wasserstein1(&a, &a).unwrap(), 0.0);
        let n0 = GaussianMeasure::scalar(0.0, 1.0).unwrap().to_grid(&line()).unwrap();
        let n1 = GaussianMeasure::scalar(0.7, 1.0).unwrap().to_grid(&line()).unwrap();
        assert!((wasserstein1(&n0, &n1).unwrap() - 0.7).abs() < 1e-3);
        assert_relative_eq!(wasserstein1_samples(&[0.0, 1.0], &[2.0, 3.0]).unwrap(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(wasserstein1_samples(&[0.0], &[0.0, 1.0]).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn w1_two_dims_diagnostic() {
        let g = GridSpec::new(vec![0.0, 0.0], vec![4.0, 4.0], vec![4, 4]).unwrap();
        let a = GridMeasure::dirac(g.clone(), &[0.5, 0.5]).unwrap();
        let b = GridMeasure::dirac(g.clone(), &[3.5, 0.5]).unwrap();
        assert_relative_eq!(wasserstein1(&a, &b).unwrap(), 3.0, epsilon = 1e-6);
    }

    fn normal_samples(seed: u64, n: u64) -> Vec<f64> {
        use crate::rng::CounterRng;
        (0..n).map(|i| CounterRng::new(seed, i, 0).normal()).collect()
    }

    fn l1(a: &GridMeasure, b: &GridMeasure) -> f64 {
        a.masses.iter().zip(&b.masses).map(|(x, y)| (x - y).abs()).sum::<f64>() + (a.leak - b.leak).abs()
    }

    #[test]
    fn histogram_of_normals() {
        let n = 1_000_000;
        let g = GridSpec::line(-6.0, 6.0, 600).unwrap();
        let h = density_estimate(&normal_samples(42, n), 1, &g).unwrap();
        let exact = GaussianMeasure::scalar(0.0, 1.0).unwrap().to_grid(&g).unwrap();
        // E|p̂ − p| ≈ √(2p(1−p)/(πn)) per cell; summed this is ≈ 0.0127 at n = 10⁶
        let expected: f64 = exact.masses.iter().map(|p| (2.0 * p * (1.0 - p) / (std::f64::consts::PI * n as f64)).sqrt()).sum();
        let err = l1(&h, &exact);
        assert!((err / expected - 1.0).abs() < 0.15, "{err} vs {expected}");
        assert!(total_variation(&h, &exact).unwrap() <= 0.01);
    }

    #[test]
    fn histogram_error_scales_like_root_n() {
        let g = GridSpec::line(-6.0, 6.0, 120).unwrap();
        let exact = GaussianMeasure::scalar(0.0, 1.0).unwrap().to_grid(&g).unwrap();
        let avg = |n: u64| -> f64 {
            (0..16).map(|s| l1(&density_estimate(&normal_samples(1000 + s, n), 1, &g).unwrap(), &exact)).sum::<f64>() / 16.0
        };
        let ratio = avg(40_000) / avg(20_000);
        assert!((0.6..=0.8).contains(&ratio), "{ratio}");
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let g = GridSpec::line(-1.0, 1.0, 8).unwrap();
        let m = GaussianMeasure::scalar(0.1, 0.2).unwrap().to_grid(&g).unwrap();
        m.write_csv(&p).unwrap();
        let back = GridMeasure::read_csv(&p).unwrap();
        assert_eq!(back.grid, m.grid);
        for (a, b) in back.masses.iter().zip(&m.masses) {
            assert_relative_eq!(a, b, max_relative = 1e-15);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn grid() -> GridSpec {
            GridSpec::line(-3.0, 3.0, 24).unwrap()
        }

        fn measure() -> impl Strategy<Value = GridMeasure> {
            (prop::collection::vec(0.0f64..1.0, 24), 0.0f64..0.05).prop_filter_map("zero", |(m, leak)| {
                GridMeasure::normalized(grid(), m, leak).ok()
            })
        }

        proptest! {
            #[test]
            fn metric_axioms(a in measure(), b in measure(), c in measure(), beta in 0.01f64..2.0) {
                let spec = LyapunovSpec::quadratic(beta).unwrap();
                for d in [
                    &|x: &GridMeasure, y: &GridMeasure| total_variation(x, y).unwrap(),
                    &|x: &GridMeasure, y: &GridMeasure| rho_beta(x, y, &spec).unwrap(),
                ] as [&dyn Fn(&GridMeasure, &GridMeasure) -> f64; 2] {
                    prop_assert_eq!(d(&a, &a), 0.0);
                    prop_assert!((d(&a, &b) - d(&b, &a)).abs() <= 1e-12);
                    prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
                }
            }

            #[test]
            fn domination_chain(a in measure(), b in measure(), beta in 0.01f64..2.0) {
                let spec = LyapunovSpec::quadratic(beta).unwrap();
                let r = rho_beta(&a, &b, &spec).unwrap();
                prop_assert!(r + 1e-12 >= 2.0 * total_variation(&a, &b).unwrap());
                // W₁ ignores leaked mass; compare on the in-box parts only
                let inbox = |m: &GridMeasure| GridMeasure::normalized(grid(), m.masses.clone(), 0.0).unwrap();
                let (ai, bi) = (inbox(&a), inbox(&b));
                let w = wasserstein1(&ai, &bi).unwrap();
                let slack = 2.0 * grid().width(0);
                prop_assert!(rho_beta(&ai, &bi, &spec).unwrap() + 1e-12 >= 2.0 * beta.sqrt() * (w - slack));
            }
        }
    }
}
