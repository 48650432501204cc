use super::fp::{fp_solve, Boundary, FPGrid};
use crate::coefficients::CoefficientSet;
use crate::error::{arg, Error, Result};
use crate::report::{Report, Section};
use rayon::prelude::*;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Calibrated,
    UserSupplied,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Calibrated => "calibrated",
            Provenance::UserSupplied => "user-supplied",
        })
    }
}

/// η₁Δt^{−d/2} exp{−η₂(1 + |x|^{2(d+1)κ})(1 + |x−y|^{2κ}) − η₃Δt^{−1}(1 + |x−y|²)}.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundParams {
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub d: usize,
    pub kappa: f64,
    pub provenance: Provenance,
}

impl LowerBoundParams {
    pub fn new(eta1: f64, eta2: f64, eta3: f64, d: usize, kappa: f64) -> Result<Self> {
        if !(eta1 > 0.0 && eta2 > 0.0 && eta3 > 0.0 && kappa > 0.0) || d == 0 {
            return arg("lower-bound constants must be positive");
        }
        Ok(LowerBoundParams { eta1, eta2, eta3, d, kappa, provenance: Provenance::UserSupplied })
    }
}

/// Exponent and prefactor shape with η₁ = 1.
fn shape(eta2: f64, eta3: f64, d: usize, kappa: f64, dt: f64, x: &[f64], y: &[f64]) -> f64 {
    let nx2: f64 = x.iter().map(|v| v * v).sum();
    let dxy2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let e = eta2 * (1.0 + nx2.powf((d as f64 + 1.0) * kappa)) * (1.0 + dxy2.powf(kappa)) + eta3 / dt * (1.0 + dxy2);
    dt.powf(-0.5 * d as f64) * (-e).exp()
}

pub fn lower_bound_eval(p: &LowerBoundParams, dt: f64, x: &[f64], y: &[f64]) -> f64 {
    if !(dt > 0.0) {
        return 0.0;
    }
    p.eta1 * shape(p.eta2, p.eta3, p.d, p.kappa, dt, x, y)
}

/// Sampled (x, y, density) triple at a fixed Δt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensitySample {
    pub x: f64,
    pub y: f64,
    pub p: f64,
}

#[derive(Debug, Clone)]
pub struct CalibrationOptions {
    pub nx: usize,
    pub ny: usize,
    pub margin: f64,
    pub eta2_grid: Vec<f64>,
    pub eta3_grid: Vec<f64>,
    pub fp_dy: f64,
    pub fp_dt: f64,
    /// Box padding beyond the x/y ranges.
    pub pad: f64,
    /// Samples also cover the ranges widened by this fraction of their half-widths, so the fit
    /// extrapolates a little past the reported range.
    pub guard: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            nx: 7,
            ny: 21,
            margin: 0.1,
            eta2_grid: (0..=24).map(|i| 10f64.powf(-12.0 + 0.5 * i as f64)).collect(),
            eta3_grid: (0..=16).map(|i| 10f64.powf(-2.0 + 0.25 * i as f64)).collect(),
            fp_dy: 0.01,
            fp_dt: 1e-3,
            pad: 6.0,
            guard: 0.25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub params: LowerBoundParams,
    pub dt: f64,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub samples: Vec<DensitySample>,
    /// min over samples of density / bound (≥ 1 + margin by construction).
    pub min_ratio: f64,
}

impl Calibration {
    pub fn report(&self) -> Report {
        let p = &self.params;
        let mut r = Report::new("lower-bound calibration");
        r.push(
            Section::new("params")
                .num("eta1", p.eta1)
                .num("eta2", p.eta2)
                .num("eta3", p.eta3)
                .kv("d", p.d)
                .num("kappa", p.kappa)
                .kv("provenance", p.provenance),
        );
        r.push(
            Section::new("fit")
                .num("dt", self.dt)
                .kv("x_range", format!("[{}, {}]", self.x_range.0, self.x_range.1))
                .kv("y_range", format!("[{}, {}]", self.y_range.0, self.y_range.1))
                .kv("samples", self.samples.len())
                .num("min_density_over_bound", self.min_ratio),
        );
        r
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.5 * (a + b)];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Largest η₁ under the samples with the safety margin, for the (η₂, η₃) pair that is tightest on average.
pub fn calibrate_from_samples(samples: &[DensitySample], dt: f64, d: usize, kappa: f64, opts: &CalibrationOptions) -> Result<LowerBoundParams> {
    if samples.is_empty() || !(dt > 0.0) {
        return arg("calibration needs samples and Δt > 0");
    }
    if let Some(s) = samples.iter().find(|s| !(s.p > 1e-300)) {
        return Err(Error::Degenerate(format!("density vanishes at x = {}, y = {}", s.x, s.y)));
    }
    let mut best: Option<(f64, LowerBoundParams)> = None;
    for &e2 in &opts.eta2_grid {
        for &e3 in &opts.eta3_grid {
            let logs: Vec<f64> = samples.iter().map(|s| (s.p / shape(e2, e3, d, kappa, dt, &[s.x], &[s.y])).ln()).collect();
            let lmin = logs.iter().copied().fold(f64::INFINITY, f64::min);
            if !lmin.is_finite() {
                continue;
            }
            let eta1 = lmin.exp() / (1.0 + opts.margin);
            if !(eta1 > 0.0) || !eta1.is_finite() {
                continue;
            }
            // mean log(bound/density): closer to 0 is tighter
            let score = logs.iter().map(|l| eta1.ln() - l).sum::<f64>() / logs.len() as f64;
            if best.as_ref().is_none_or(|b| score > b.0) {
                let p = LowerBoundParams { eta1, eta2: e2, eta3: e3, d, kappa, provenance: Provenance::Calibrated };
                best = Some((score, p));
            }
        }
    }
    best.map(|b| b.1).ok_or_else(|| Error::Numeric("no (η₂, η₃) pair produced a positive η₁".into()))
}

/// FP-based calibration of (η₁, η₂, η₃) on x- and y-ranges at a start time s.
pub fn calibrate_lower_bound(
    c: &CoefficientSet,
    s: f64,
    dt: f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
    opts: &CalibrationOptions,
) -> Result<Calibration> {
    if c.dim != 1 {
        return Err(Error::Unsupported("lower-bound calibration is one-dimensional".into()));
    }
    let widen = |(a, b): (f64, f64)| {
        let h = 0.5 * (b - a) * opts.guard;
        (a - h, b + h)
    };
    let (gx, gy) = (widen(x_range), widen(y_range));
    let xs = linspace(gx.0, gx.1, opts.nx);
    let ys = linspace(gy.0, gy.1, opts.ny);
    let lo = gx.0.min(gy.0) - opts.pad;
    let hi = gx.1.max(gy.1) + opts.pad;
    let grid = FPGrid::with_spacing(lo, hi, opts.fp_dy, opts.fp_dt, Boundary::Reflecting)?;
    let rows: Vec<Vec<DensitySample>> = xs
        .par_iter()
        .map(|&x| {
            let sol = fp_solve(c, s, x, s + dt, &grid)?;
            Ok(ys.iter().map(|&y| DensitySample { x, y, p: sol.density_at(y) }).collect())
        })
        .collect::<Result<_>>()?;
    let samples: Vec<DensitySample> = rows.concat();
    let params = calibrate_from_samples(&samples, dt, 1, c.kappa, opts)?;
    let min_ratio = samples
        .iter()
        .map(|q| q.p / lower_bound_eval(&params, dt, &[q.x], &[q.y]))
        .fold(f64::INFINITY, f64::min);
    Ok(Calibration { params, dt, x_range, y_range, samples, min_ratio })
}
