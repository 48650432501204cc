use super::fp::{fp_solve, Boundary, FPGrid};
use crate::coefficients::CoefficientSet;
use crate::error::{arg, Error, Result};
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct MinorizationOptions {
    /// Starting points across {|x|² ≤ R}, endpoints included.
    pub nx: usize,
    pub fp_dy: f64,
    pub fp_dt: f64,
    pub pad: f64,
    /// Interior times at which ellipticity is screened.
    pub screen_times: usize,
}

impl Default for MinorizationOptions {
    fn default() -> Self {
        MinorizationOptions { nx: 25, fp_dy: 0.01, fp_dt: 1e-3, pad: 6.0, screen_times: 16 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinorizationResult {
    pub r: f64,
    pub rho_b: f64,
    /// η = 2ρ_B · min density.
    pub eta: f64,
    pub min_density: f64,
    pub argmin_x: f64,
    pub argmin_y: f64,
    /// ν = normalized Lebesgue measure on [−ρ_B, ρ_B].
    pub nu: String,
    pub per_x: Vec<(f64, f64)>,
}

fn screen(c: &CoefficientSet, s: f64, t: f64, xs: &[f64], n: usize) -> Result<()> {
    for k in 0..n {
        let r = s + (k as f64 + 0.5) * (t - s) / n as f64;
        for &x in xs {
            let sg = c.sigma1(r, x);
            if !(sg * sg > 1e-12) {
                return Err(Error::Degenerate(format!("diffusion vanishes at t = {r:.4}, x = {x:.4}")));
            }
        }
    }
    Ok(())
}

/// min over y ∈ [−ρ_B, ρ_B] of the FP density from each x; all grids share the same starts.
fn per_start(c: &CoefficientSet, s: f64, t: f64, xs: &[f64], rho_b: f64, opts: &MinorizationOptions) -> Result<Vec<(f64, f64, f64)>> {
    let reach = xs.iter().fold(rho_b, |a, x| a.max(x.abs()));
    let grid = FPGrid::with_spacing(-reach - opts.pad, reach + opts.pad, opts.fp_dy, opts.fp_dt, Boundary::Reflecting)?;
    xs.par_iter()
        .map(|&x| {
            let sol = fp_solve(c, s, x, t, &grid)?;
            let mut best = (f64::INFINITY, 0.0);
            let mut probe = |y: f64| {
                let v = sol.density_at(y);
                if v < best.0 {
                    best = (v, y);
                }
            };
            probe(-rho_b);
            probe(rho_b);
            for &y in sol.grid.centers().iter().filter(|y| y.abs() <= rho_b) {
                probe(y);
            }
            Ok((x, best.0, best.1))
        })
        .collect()
}

fn starts(r: f64, nx: usize) -> Vec<f64> {
    let h = r.sqrt();
    if nx <= 1 {
        return vec![0.0];
    }
    (0..nx).map(|i| -h + 2.0 * h * i as f64 / (nx - 1) as f64).collect()
}

fn validate(c: &CoefficientSet, s: f64, t: f64, rho_b: f64) -> Result<()> {
    if c.dim != 1 {
        return Err(Error::Unsupported("minorization sweep is one-dimensional".into()));
    }
    if !(s < t) || !(rho_b > 0.0) {
        return arg("minorization needs s < t and ρ_B > 0");
    }
    Ok(())
}

/// Local Doeblin constant on {|x|² ≤ R} towards the uniform law on the ball of radius ρ_B.
pub fn minorization(c: &CoefficientSet, s: f64, t: f64, r: f64, rho_b: f64, opts: &MinorizationOptions) -> Result<MinorizationResult> {
    Ok(minorization_sweep(c, s, t, &[r], rho_b, opts)?.remove(0))
}

/// η for several levels R sharing one set of FP solves (starts of the largest R, nested), so η is
/// nonincreasing in R by construction.
pub fn minorization_sweep(c: &CoefficientSet, s: f64, t: f64, rs: &[f64], rho_b: f64, opts: &MinorizationOptions) -> Result<Vec<MinorizationResult>> {
    validate(c, s, t, rho_b)?;
    if rs.is_empty() || rs.iter().any(|r| !(*r >= 0.0)) {
        return arg("levels R must be nonnegative");
    }
    let rmax = rs.iter().copied().fold(0.0, f64::max);
    let mut xs = starts(rmax, opts.nx);
    for &r in rs {
        xs.extend([-r.sqrt(), r.sqrt()]);
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    screen(c, s, t, &xs, opts.screen_times)?;
    let rows = per_start(c, s, t, &xs, rho_b, opts)?;
    Ok(rs
        .iter()
        .map(|&r| {
            let inside: Vec<&(f64, f64, f64)> = rows.iter().filter(|q| q.0 * q.0 <= r * (1.0 + 1e-12) + 1e-12).collect();
            let m = inside.iter().fold(&(0.0, f64::INFINITY, 0.0), |a, b| if b.1 < a.1 { b } else { a });
            MinorizationResult {
                r,
                rho_b,
                eta: 2.0 * rho_b * m.1.max(0.0),
                min_density: m.1,
                argmin_x: m.0,
                argmin_y: m.2,
                nu: format!("uniform on [{}, {}]", -rho_b, rho_b),
                per_x: inside.iter().map(|q| (q.0, q.1)).collect(),
            }
        })
        .collect())
}
