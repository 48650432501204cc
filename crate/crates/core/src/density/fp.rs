use crate::coefficients::CoefficientSet;
use crate::error::{arg, Error, Result};
use crate::measures::{GridMeasure, GridSpec};

/// Densities below this are a stability failure; values in (−tol, 0) are clipped.
pub const FP_NEGATIVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Absorbing,
    Reflecting,
}

/// Cell-centred grid on [lo, hi] for the implicit Fokker–Planck scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct FPGrid {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
    pub dt: f64,
    pub boundary: Boundary,
    /// Standard deviation of the discrete kernel replacing a point mass, in cells.
    pub init_sd_cells: f64,
}

impl FPGrid {
    pub fn new(lo: f64, hi: f64, cells: usize, dt: f64, boundary: Boundary) -> Result<Self> {
        if !(hi > lo) || cells < 3 || !(dt > 0.0) {
            return arg(format!("FP grid needs lo < hi, ≥ 3 cells and dt > 0 (got [{lo}, {hi}], {cells}, {dt})"));
        }
        Ok(FPGrid { lo, hi, cells, dt, boundary, init_sd_cells: 2.0 })
    }

    /// Grid with spacing close to `dy`.
    pub fn with_spacing(lo: f64, hi: f64, dy: f64, dt: f64, boundary: Boundary) -> Result<Self> {
        if !(dy > 0.0) {
            return arg("spacing must be positive");
        }
        Self::new(lo, hi, ((hi - lo) / dy).round().max(3.0) as usize, dt, boundary)
    }

    pub fn dy(&self) -> f64 {
        (self.hi - self.lo) / self.cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.dy()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells).map(|i| self.center(i)).collect()
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec::line(self.lo, self.hi, self.cells).expect("validated grid")
    }

    /// Normalized discrete Gaussian around x₀ (density values).
    pub fn point_kernel(&self, x0: f64) -> Result<Vec<f64>> {
        if !(x0 >= self.lo && x0 <= self.hi) {
            return arg(format!("start {x0} lies outside the FP box [{}, {}]", self.lo, self.hi));
        }
        let sd = self.init_sd_cells * self.dy();
        let mut p: Vec<f64> = self.centers().iter().map(|y| (-0.5 * ((y - x0) / sd).powi(2)).exp()).collect();
        let mass: f64 = p.iter().sum::<f64>() * self.dy();
        p.iter_mut().for_each(|v| *v /= mass);
        Ok(p)
    }
}

#[derive(Debug, Clone)]
pub struct FpSolution {
    pub grid: FPGrid,
    pub t: f64,
    /// Density values at cell centres.
    pub density: Vec<f64>,
    pub measure: GridMeasure,
    /// 1 − in-box mass (absorbed or leaked).
    pub mass_deficit: f64,
    /// Largest per-step change of the in-box mass.
    pub max_step_drift: f64,
    /// Largest cell Péclet number |b*|Δy/a (central differences are monotone below 2).
    pub max_peclet: f64,
    /// Largest Δt·|b*|/Δy.
    pub cfl: f64,
    pub steps: usize,
}

impl FpSolution {
    /// Linear interpolation between cell centres (0 outside the box).
    pub fn density_at(&self, y: f64) -> f64 {
        let g = &self.grid;
        let u = (y - g.lo) / g.dy() - 0.5;
        if !(y >= g.lo && y <= g.hi) {
            return 0.0;
        }
        let i = (u.floor().max(0.0) as usize).min(g.cells - 2);
        let w = (u - i as f64).clamp(0.0, 1.0);
        (1.0 - w) * self.density[i] + w * self.density[i + 1]
    }
}

/// Bernoulli function z / (e^z − 1).
fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-10 {
        1.0 - 0.5 * z
    } else {
        z / z.exp_m1()
    }
}

/// Scharfetter–Gummel coefficients of J = b p − D ∂_y p across one face.
fn sg_flux(b: f64, d: f64, dy: f64) -> (f64, f64) {
    if d <= 0.0 {
        return (b.max(0.0), b.min(0.0));
    }
    let pe = b * dy / d;
    (d / dy * bernoulli(-pe), -d / dy * bernoulli(pe))
}

pub fn fp_solve(c: &CoefficientSet, s: f64, x0: f64, t: f64, grid: &FPGrid) -> Result<FpSolution> {
    let p0 = grid.point_kernel(x0)?;
    fp_solve_from(c, s, &p0, t, grid)
}

/// Implicit Euler on ∂_t p = −∂_y(b* p − ½a ∂_y p), b* = b − ½∂_y a, from density values `init`.
pub fn fp_solve_from(c: &CoefficientSet, s: f64, init: &[f64], t: f64, grid: &FPGrid) -> Result<FpSolution> {
    if c.dim != 1 {
        return Err(Error::Unsupported(format!("FP solver is one-dimensional (got d = {})", c.dim)));
    }
    if !(t > s) {
        return arg(format!("FP solve needs s < t (s = {s}, t = {t})"));
    }
    let n = grid.cells;
    if init.len() != n {
        return arg(format!("initial density has {} values for {n} cells", init.len()));
    }
    let dy = grid.dy();
    let steps = ((t - s) / grid.dt).ceil().max(1.0) as usize;
    let dt = (t - s) / steps as f64;
    let ys = grid.centers();
    let faces: Vec<f64> = (1..n).map(|i| grid.lo + i as f64 * dy).collect();
    let mut p = init.to_vec();
    let (mut sig, mut a, mut bf) = (vec![0.0; n], vec![0.0; n], vec![0.0; n - 1]);
    let (mut lower, mut diag, mut upper, mut rhs) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut cp, mut dp) = (vec![0.0; n], vec![0.0; n]);
    let (mut max_drift, mut max_peclet, mut cfl) = (0.0f64, 0.0f64, 0.0f64);
    let lam = dt / dy;
    let mut mass = p.iter().sum::<f64>() * dy;
    for k in 1..=steps {
        let tk = s + k as f64 * dt;
        c.diffusion.eval_batch(tk, &ys, &mut sig);
        for (ai, si) in a.iter_mut().zip(&sig) {
            *ai = si * si;
        }
        c.drift.eval_batch(tk, &faces, &mut bf);
        // J_{i+½} = α_i p_i + β_i p_{i+1}, exponentially fitted so α ≥ 0 ≥ β
        lower.fill(0.0);
        upper.fill(0.0);
        diag.fill(1.0);
        for i in 0..n - 1 {
            let af = 0.5 * (a[i] + a[i + 1]);
            let bstar = bf[i] - 0.5 * (a[i + 1] - a[i]) / dy;
            if af > 0.0 {
                max_peclet = max_peclet.max(bstar.abs() * dy / af);
            } else if bstar != 0.0 {
                max_peclet = f64::INFINITY;
            }
            cfl = cfl.max(lam * bstar.abs());
            let (alpha, beta) = sg_flux(bstar, 0.5 * af, dy);
            // row i gains +λJ_{i+½}, row i+1 gains −λJ_{i+½}
            diag[i] += lam * alpha;
            upper[i] += lam * beta;
            lower[i + 1] -= lam * alpha;
            diag[i + 1] -= lam * beta;
        }
        if grid.boundary == Boundary::Absorbing {
            // zero density on the outer faces: J = ∓a p/Δy
            diag[0] += lam * a[0] / dy;
            diag[n - 1] += lam * a[n - 1] / dy;
        }
        rhs.copy_from_slice(&p);
        // Thomas
        cp[0] = upper[0] / diag[0];
        dp[0] = rhs[0] / diag[0];
        for i in 1..n {
            let m = diag[i] - lower[i] * cp[i - 1];
            cp[i] = upper[i] / m;
            dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / m;
        }
        p[n - 1] = dp[n - 1];
        for i in (0..n - 1).rev() {
            p[i] = dp[i] - cp[i] * p[i + 1];
        }
        for (i, v) in p.iter_mut().enumerate() {
            if !v.is_finite() || *v < -FP_NEGATIVE_TOL {
                return Err(Error::Numeric(format!(
                    "FP step at t = {tk} produced density {v:.3e} at y = {:.4}; reduce the time step or refine the grid",
                    ys[i]
                )));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let m = p.iter().sum::<f64>() * dy;
        max_drift = max_drift.max((m - mass).abs());
        mass = m;
    }
    let total: f64 = p.iter().sum::<f64>() * dy;
    let masses: Vec<f64> = p.iter().map(|v| v * dy).collect();
    let measure = if total > 1.0 {
        GridMeasure::normalized(grid.spec(), masses, 0.0)?
    } else {
        GridMeasure::new(grid.spec(), masses, (1.0 - total).max(0.0))?
    };
    Ok(FpSolution {
        grid: grid.clone(),
        t,
        density: p,
        measure,
        mass_deficit: 1.0 - total,
        max_step_drift: max_drift,
        max_peclet,
        cfl,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{self, Params};
    use crate::measures::GaussianMeasure;

    fn l1_vs(sol: &FpSolution, g: &GaussianMeasure) -> f64 {
        let exact = g.to_grid(&sol.grid.spec()).unwrap();
        sol.measure.masses.iter().zip(&exact.masses).map(|(a, b)| (a - b).abs()).sum()
    }

    fn ou() -> CoefficientSet {
        catalog::build("ou", &Params::default()).unwrap()
    }

    #[test]
    fn brownian_motion() {
        let bm = catalog::build("ou", &Params::default().with("theta", 0.0)).unwrap();
        let x0 = 0.7;
        let g = FPGrid::with_spacing(x0 - 6.0, x0 + 6.0, 0.01, 1e-3, Boundary::Reflecting).unwrap();
        let sol = fp_solve(&bm, 0.0, x0, 1.0, &g).unwrap();
        assert!(l1_vs(&sol, &GaussianMeasure::scalar(x0, 1.0).unwrap()) <= 1e-2);
        assert!(sol.max_step_drift <= 1e-8);
    }

    #[test]
    fn ou_density() {
        let x0 = 1.5;
        let g = FPGrid::with_spacing(-6.0, 6.0, 0.01, 1e-3, Boundary::Reflecting).unwrap();
        let sol = fp_solve(&ou(), 0.0, x0, 1.0, &g).unwrap();
        let e = (-1f64).exp();
        let exact = GaussianMeasure::scalar(x0 * e, 0.5 * (1.0 - e * e)).unwrap();
        assert!(l1_vs(&sol, &exact) <= 1e-2, "{}", l1_vs(&sol, &exact));
        assert!(sol.mass_deficit.abs() < 1e-9);
    }

    #[test]
    fn chapman_kolmogorov() {
        let c = catalog::build("bpsv", &Params::default()).unwrap();
        let g = FPGrid::with_spacing(-5.0, 5.0, 0.01, 1e-3, Boundary::Reflecting).unwrap();
        let direct = fp_solve(&c, 0.0, 0.5, 1.0, &g).unwrap();
        let mid = fp_solve(&c, 0.0, 0.5, 0.4, &g).unwrap();
        let two = fp_solve_from(&c, 0.4, &mid.density, 1.0, &g).unwrap();
        let l1: f64 = direct.measure.masses.iter().zip(&two.measure.masses).map(|(a, b)| (a - b).abs()).sum();
        assert!(l1 <= 2e-2, "{l1}");
    }

    #[test]
    fn absorbing_loses_mass() {
        let bm = catalog::build("ou", &Params::default().with("theta", 0.0)).unwrap();
        let g = FPGrid::with_spacing(-1.0, 1.0, 0.01, 1e-3, Boundary::Absorbing).unwrap();
        let sol = fp_solve(&bm, 0.0, 0.0, 1.0, &g).unwrap();
        // survival of BM in (−1, 1) up to time 1 ≈ 0.3708
        assert!(sol.mass_deficit > 0.5 && sol.mass_deficit < 0.75, "{}", sol.mass_deficit);
        assert!((sol.measure.leak - sol.mass_deficit).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let g = FPGrid::with_spacing(-1.0, 1.0, 0.01, 1e-3, Boundary::Reflecting).unwrap();
        assert!(fp_solve(&ou(), 0.0, 3.0, 1.0, &g).is_err());
        assert!(fp_solve(&ou(), 1.0, 0.0, 1.0, &g).is_err());
        assert!(FPGrid::new(1.0, 0.0, 10, 0.1, Boundary::Reflecting).is_err());
        let q = catalog::build("quasi_double_well", &Params::default());
        if let Ok(q) = q {
            if q.dim != 1 {
                assert!(matches!(fp_solve(&q, 0.0, 0.0, 1.0, &g), Err(Error::Unsupported(_))));
            }
        }
    }

    #[test]
    fn positivity_and_interpolation() {
        let c = catalog::build("bpsv", &Params::default()).unwrap();
        let g = FPGrid::with_spacing(-6.0, 6.0, 0.01, 1e-3, Boundary::Reflecting).unwrap();
        let sol = fp_solve(&c, 0.0, 2.0, 0.5, &g).unwrap();
        assert!(sol.density.iter().all(|v| *v >= 0.0));
        let y = sol.grid.center(700);
        assert_eq!(sol.density_at(y), sol.density[700]);
        assert_eq!(sol.density_at(100.0), 0.0);
        // cubic drift on a wide coarse grid: cell Péclet numbers far above 2
        let wide = FPGrid::with_spacing(-12.0, 12.0, 0.05, 1e-3, Boundary::Reflecting).unwrap();
        let sol = fp_solve(&c, 0.0, 8.0, 1.0, &wide).unwrap();
        assert!(sol.max_peclet > 50.0, "{}", sol.max_peclet);
        assert!(sol.density.iter().all(|v| *v >= 0.0));
        assert!(sol.mass_deficit.abs() < 1e-9);
    }
}
