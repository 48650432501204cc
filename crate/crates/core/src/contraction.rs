//! One-step ρ_β factors, partition analysis, certificate construction and rate fits.

use crate::catalog::sqrt_example_times;
use crate::coefficients::{CoefficientSet, TimeFunction};
use crate::error::{arg, Error, Result};
use crate::measures::csv_err;
use crate::report::{Report, Section};
use crate::rng::CounterRng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

/// Tolerance for exact finite-chain checks.
pub const CHAIN_TOL: f64 = 1e-12;

/// One interval (t_next, t_prev] of a decreasing partition with its Lyapunov/minorization constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub t_prev: f64,
    pub t_next: f64,
    pub gamma: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub eta: f64,
}

impl ScheduleEntry {
    pub fn new(t_prev: f64, t_next: f64, gamma: f64, k: f64, eta: f64) -> Result<Self> {
        let e = ScheduleEntry { t_prev, t_next, gamma, k, eta };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_next <= self.t_prev) {
            return arg(format!("interval endpoints out of order: {} > {}", self.t_next, self.t_prev));
        }
        if !(self.gamma >= 0.0) || !(self.k >= 0.0) {
            return arg("gamma and K must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.eta) {
            return arg(format!("eta must lie in [0, 1), got {}", self.eta));
        }
        Ok(())
    }
}

/// max{1 − η + βK, (2 + β(γR + 2K))/(2 + βR)}.
pub fn one_step_zeta(gamma: f64, k: f64, eta: f64, r: f64, beta: f64) -> f64 {
    let a = 1.0 - eta + beta * k;
    let b = (2.0 + beta * (gamma * r + 2.0 * k)) / (2.0 + beta * r);
    a.max(b)
}

fn validate_schedule(s: &[ScheduleEntry]) -> Result<()> {
    if s.is_empty() {
        return arg("empty schedule");
    }
    for (i, e) in s.iter().enumerate() {
        e.validate()?;
        if !(e.t_next < e.t_prev) {
            return arg(format!("interval {} is empty", i + 1));
        }
    }
    for (i, w) in s.windows(2).enumerate() {
        let gap = (w[0].t_next - w[1].t_prev).abs();
        if gap > 1e-9 * (1.0 + w[0].t_next.abs()) {
            return arg(format!("schedule is not contiguous after interval {}", i + 1));
        }
    }
    Ok(())
}

/// Tail share of the computed horizon used for the lim inf / lim sup estimates.
pub const TAIL_FRACTION: f64 = 0.5;

pub const HORIZON_WARNING: &str =
    "asymptotic lim inf / lim sup conditions are only sampled over the computed horizon";

#[derive(Debug, Clone)]
pub struct PartitionAnalysis {
    pub gamma: f64,
    pub k: f64,
    pub delta: f64,
    /// t_0 > t_1 > … > t_N.
    pub points: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Membership of interval i (1-based) in A^δ, stored at i − 1.
    pub in_a: Vec<bool>,
    /// n^δ for n = 1..N, stored at n − 1.
    pub n_delta: Vec<usize>,
    /// γ̄_n^δ; None while A_n^δ is empty.
    pub gamma_bar: Vec<Option<f64>>,
    /// Chosen subsequence n_k.
    pub subsequence: Vec<usize>,
    /// inf / sup over the tail of the subsequence.
    pub liminf_ratio: f64,
    pub limsup_gamma_bar: f64,
    /// inf / sup over the whole subsequence.
    pub inf_ratio: f64,
    pub sup_gamma_bar: f64,
}

impl PartitionAnalysis {
    pub fn horizon(&self) -> usize {
        self.gammas.len()
    }

    pub fn ratio(&self, n: usize) -> f64 {
        self.n_delta[n - 1] as f64 / n as f64
    }
}

pub fn analyze_partition(schedule: &[ScheduleEntry], delta: f64) -> Result<PartitionAnalysis> {
    analyze_partition_with(schedule, delta, None)
}

/// As `analyze_partition` with an explicit subsequence {n_k} (1-based, increasing).
pub fn analyze_partition_with(schedule: &[ScheduleEntry], delta: f64, subsequence: Option<&[usize]>) -> Result<PartitionAnalysis> {
    validate_schedule(schedule)?;
    if !(delta > 0.0) {
        return arg("δ must be positive");
    }
    let n = schedule.len();
    let sub: Vec<usize> = match subsequence {
        Some(s) => {
            if s.is_empty() || s.windows(2).any(|w| w[0] >= w[1]) || s[0] == 0 || *s.last().unwrap() > n {
                return arg(format!("subsequence must be increasing within 1..={n}"));
            }
            s.to_vec()
        }
        None => (1..=n).collect(),
    };
    let mut points = vec![schedule[0].t_prev];
    points.extend(schedule.iter().map(|e| e.t_next));
    let gammas: Vec<f64> = schedule.iter().map(|e| e.gamma).collect();
    let in_a: Vec<bool> = schedule.iter().map(|e| e.eta >= delta).collect();
    let (mut cnt, mut sum) = (0usize, 0.0);
    let mut n_delta = Vec::with_capacity(n);
    let mut gamma_bar = Vec::with_capacity(n);
    for i in 0..n {
        if in_a[i] {
            cnt += 1;
            sum += gammas[i];
        }
        n_delta.push(cnt);
        gamma_bar.push((cnt > 0).then(|| sum / cnt as f64));
    }
    let ratio = |m: usize| n_delta[m - 1] as f64 / m as f64;
    let gb = |m: usize| gamma_bar[m - 1].unwrap_or(f64::INFINITY);
    let tail = &sub[((sub.len() as f64 * TAIL_FRACTION) as usize).min(sub.len() - 1)..];
    Ok(PartitionAnalysis {
        gamma: gammas.iter().copied().fold(0.0, f64::max),
        k: schedule.iter().map(|e| e.k).fold(0.0, f64::max),
        delta,
        points,
        liminf_ratio: tail.iter().map(|&m| ratio(m)).fold(f64::INFINITY, f64::min),
        limsup_gamma_bar: tail.iter().map(|&m| gb(m)).fold(f64::NEG_INFINITY, f64::max),
        inf_ratio: sub.iter().map(|&m| ratio(m)).fold(f64::INFINITY, f64::min),
        sup_gamma_bar: sub.iter().map(|&m| gb(m)).fold(f64::NEG_INFINITY, f64::max),
        gammas,
        in_a,
        n_delta,
        gamma_bar,
        subsequence: sub,
    })
}

#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub gamma_star_ok: bool,
    pub varpi_ok: bool,
    pub liminf_ok: bool,
    pub limsup_ok: bool,
    /// ((γ−1)⁺R + 2K)/((γ−1)⁺R + (1−γ*)R).
    pub varpi_threshold: f64,
    pub diagnostics: Vec<String>,
    pub warning: &'static str,
}

impl ConditionReport {
    pub fn pass(&self) -> bool {
        self.gamma_star_ok && self.varpi_ok && self.liminf_ok && self.limsup_ok
    }
}

pub fn check_theorem_conditions(a: &PartitionAnalysis, r: f64, varpi: f64, gamma_star: f64) -> ConditionReport {
    let (g, k) = (a.gamma, a.k);
    let mut diag = Vec::new();
    let bound = 1.0 - 2.0 * k / r;
    let gamma_star_ok = gamma_star > 0.0 && gamma_star < 1.0 && r > 0.0 && gamma_star < bound;
    if !gamma_star_ok {
        diag.push(format!("γ* < 1 − 2K/R fails: γ* = {gamma_star}, 1 − 2K/R = {bound}"));
    }
    let gp = (g - 1.0).max(0.0) * r;
    let thr = (gp + 2.0 * k) / (gp + (1.0 - gamma_star) * r);
    let varpi_ok = varpi > 0.0 && varpi < 1.0 && varpi > thr;
    if !varpi_ok {
        diag.push(format!("ϖ > ((γ−1)⁺R + 2K)/((γ−1)⁺R + (1−γ*)R) fails: ϖ = {varpi}, threshold = {thr}"));
    }
    let liminf_ok = a.liminf_ratio > varpi;
    if !liminf_ok {
        diag.push(format!("lim inf n_k^δ/n_k > ϖ fails over the horizon: {} ≤ {varpi}", a.liminf_ratio));
    }
    let limsup_ok = a.limsup_gamma_bar < gamma_star;
    if !limsup_ok {
        diag.push(format!("lim sup γ̄_(n_k)^δ < γ* fails over the horizon: {} ≥ {gamma_star}", a.limsup_gamma_bar));
    }
    ConditionReport { gamma_star_ok, varpi_ok, liminf_ok, limsup_ok, varpi_threshold: thr, diagnostics: diag, warning: HORIZON_WARNING }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionCertificate {
    pub beta: f64,
    pub r: f64,
    pub c1: f64,
    pub c2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub varpi: f64,
    pub gamma_star: f64,
    pub big_r: f64,
    pub delta: f64,
    pub gamma: f64,
    pub k: f64,
}

impl ContractionCertificate {
    /// φ(x) = (1 + c₁x)^{1−ϖ}(1 − c₂x)^ϖ.
    pub fn phi(&self, x: f64) -> f64 {
        phi(self.c1, self.c2, self.varpi, x)
    }

    /// φ′(0) = (1−ϖ)c₁ − ϖc₂.
    pub fn phi_prime0(&self) -> f64 {
        (1.0 - self.varpi) * self.c1 - self.varpi * self.c2
    }

    pub fn report(&self, conds: Option<&ConditionReport>) -> Report {
        let mut r = Report::new("contraction certificate");
        r.push(
            Section::new("inputs")
                .num("gamma", self.gamma)
                .num("K", self.k)
                .num("R", self.big_r)
                .num("delta", self.delta)
                .num("varpi", self.varpi)
                .num("gamma_star", self.gamma_star),
        );
        r.push(
            Section::new("constants")
                .num("beta1", self.beta1)
                .num("beta2", self.beta2)
                .num("c1", self.c1)
                .num("c2", self.c2)
                .num("beta", self.beta)
                .num("r", self.r)
                .num("phi_prime0", self.phi_prime0()),
        );
        if let Some(c) = conds {
            let mut s = Section::new("conditions")
                .kv("gamma_star_below_1_minus_2K_over_R", c.gamma_star_ok)
                .kv("varpi_above_threshold", c.varpi_ok)
                .num("varpi_threshold", c.varpi_threshold)
                .kv("liminf_ratio_above_varpi", c.liminf_ok)
                .kv("limsup_gamma_bar_below_gamma_star", c.limsup_ok)
                .kv("warning", c.warning);
            for (i, d) in c.diagnostics.iter().enumerate() {
                s = s.kv(&format!("failure_{}", i + 1), d);
            }
            r.push(s);
        }
        r
    }
}

fn phi(c1: f64, c2: f64, varpi: f64, x: f64) -> f64 {
    (1.0 + c1 * x).powf(1.0 - varpi) * (1.0 - c2 * x).powf(varpi)
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (b - a) <= 1e-15 * b.abs().max(1e-300) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// β₁, β₂, c₁, c₂ and the minimizer of φ over (0, β₂].
pub fn select_beta(gamma: f64, k: f64, big_r: f64, delta: f64, varpi: f64, gamma_star: f64) -> Result<ContractionCertificate> {
    let pre = |m: String| Err(Error::Precondition(m));
    if !(big_r > 0.0) || !(gamma >= 0.0) || !(k >= 0.0) {
        return pre(format!("need R > 0, γ ≥ 0, K ≥ 0 (R = {big_r}, γ = {gamma}, K = {k})"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return pre(format!("δ must lie in (0, 1), got {delta}"));
    }
    if !(varpi > 0.0 && varpi < 1.0) || !(gamma_star > 0.0 && gamma_star < 1.0) {
        return pre("ϖ and γ* must lie in (0, 1)".into());
    }
    if !(gamma_star < 1.0 - 2.0 * k / big_r) {
        return pre(format!("γ* < 1 − 2K/R fails ({gamma_star} ≥ {})", 1.0 - 2.0 * k / big_r));
    }
    let gp = (gamma - 1.0).max(0.0) * big_r;
    let thr = (gp + 2.0 * k) / (gp + (1.0 - gamma_star) * big_r);
    if !(varpi > thr) {
        return pre(format!("ϖ > ((γ−1)⁺R + 2K)/((γ−1)⁺R + (1−γ*)R) fails ({varpi} ≤ {thr})"));
    }
    let b_r = 2.0 * delta / (big_r * (2.0 - delta));
    let beta1 = if k > 0.0 { b_r.min(delta / (2.0 * k)) } else { b_r };
    let c1 = 0.5 * (gp + 2.0 * k);
    let c2num = (1.0 - gamma_star) * big_r - 2.0 * k;
    // c₁(1−ϖ) < c2num·ϖ/(2 + β₂R)  ⇔  β₂ < (c2num·ϖ/(c₁(1−ϖ)) − 2)/R
    let bmax = if c1 > 0.0 { (c2num * varpi / (c1 * (1.0 - varpi)) - 2.0) / big_r } else { f64::INFINITY };
    let beta2 = if beta1 < bmax { beta1 } else { bmax * (1.0 - 1e-9) };
    let c2 = c2num / (2.0 + beta2 * big_r);
    let f = |x: f64| phi(c1, c2, varpi, x);
    let (mut beta, mut r) = golden_min(f, 0.0, beta2);
    if f(beta2) <= r {
        beta = beta2;
        r = f(beta2);
    }
    let cert = ContractionCertificate { beta, r, c1, c2, beta1, beta2, varpi, gamma_star, big_r, delta, gamma, k };
    if !(cert.phi_prime0() < 0.0) {
        return Err(Error::Numeric(format!("φ′(0) = {} is not negative", cert.phi_prime0())));
    }
    if !(r < 1.0 && beta > 0.0) {
        return Err(Error::Numeric(format!("no β in (0, β₂] gives φ < 1 (best {r})")));
    }
    Ok(cert)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtEvaluation {
    pub i0: usize,
    pub k0: usize,
    pub n_k0: usize,
    pub zeta_head: f64,
    pub ct: f64,
}

/// C_t = ζ_β(t, t_{i₀})(1 + c₁β)^{n_{k₀} − i₀} r^{−n_{k₀}}.
///
/// `head` supplies (γ, K, η) on [t_{i₀}, t] when t is not itself a partition point.
pub fn ct_constant(cert: &ContractionCertificate, a: &PartitionAnalysis, t: f64, head: Option<&ScheduleEntry>) -> Result<CtEvaluation> {
    let last = *a.points.last().unwrap();
    if t < last {
        return arg(format!("t = {t} lies below the schedule horizon {last}"));
    }
    let i0 = a.points.iter().position(|&p| t >= p).unwrap();
    let zeta_head = match head {
        Some(h) => {
            h.validate()?;
            let scale = 1e-9 * (1.0 + t.abs());
            if (h.t_prev - t).abs() > scale || (h.t_next - a.points[i0]).abs() > scale {
                return arg(format!("head interval must be [{}, {t}]", a.points[i0]));
            }
            one_step_zeta(h.gamma, h.k, h.eta, cert.big_r, cert.beta)
        }
        None if t == a.points[i0] => 1.0,
        None => return arg("t is not a partition point; the head interval factors are required"),
    };
    // conditions restricted to indices i₀ < i ≤ n_k
    let mut k0 = None;
    for (idx, &n) in a.subsequence.iter().enumerate() {
        if n <= i0 {
            continue;
        }
        let (mut cnt, mut sum) = (0usize, 0.0);
        for i in i0..n {
            if a.in_a[i] {
                cnt += 1;
                sum += a.gammas[i];
            }
        }
        let ok = cnt as f64 >= cert.varpi * n as f64 && cnt > 0 && sum / cnt as f64 <= cert.gamma_star;
        match (ok, k0) {
            (true, None) => k0 = Some(idx),
            (false, _) => k0 = None,
            _ => {}
        }
    }
    let Some(k0) = k0 else {
        return Err(Error::Precondition("counting conditions do not hold at the end of the horizon".into()));
    };
    let n_k0 = a.subsequence[k0];
    let ct = zeta_head * (1.0 + cert.c1 * cert.beta).powi((n_k0 - i0) as i32) * cert.r.powi(-(n_k0 as i32));
    Ok(CtEvaluation { i0, k0, n_k0, zeta_head, ct })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformCertificate {
    pub beta: f64,
    pub zeta: f64,
    pub zeta0: f64,
    pub lambda: f64,
    pub c: f64,
}

/// Uniform-in-time certificate from Δ-step constants (γ_Δ, h_Δ, η_Δ) and level R.
pub fn uniform_certificate(delta_t: f64, gamma: f64, h: f64, eta: f64, big_r: f64) -> Result<UniformCertificate> {
    let pre = |m: String| Err(Error::Precondition(m));
    if !(delta_t > 0.0) || !(h > 0.0) {
        return pre(format!("need Δ > 0 and h_Δ > 0 (Δ = {delta_t}, h = {h})"));
    }
    if !(gamma < 1.0) || !(gamma >= 0.0) {
        return pre(format!("γ_Δ < 1 fails (γ_Δ = {gamma})"));
    }
    if !(big_r > 2.0 * h / (1.0 - gamma)) {
        return pre(format!("R > 2h_Δ/(1 − γ_Δ) fails ({big_r} ≤ {})", 2.0 * h / (1.0 - gamma)));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return pre(format!("η_Δ > 0 fails (η_Δ = {eta})"));
    }
    let beta = eta / (2.0 * h);
    let zeta = one_step_zeta(gamma, h, eta, big_r, beta);
    if !(zeta < 1.0) {
        return Err(Error::Numeric(format!("ζ = {zeta} is not below 1")));
    }
    let zeta0 = (1.0 + beta * h).max((2.0 + beta * h * (2.0 + big_r)) / (2.0 + beta * big_r));
    Ok(UniformCertificate { beta, zeta, zeta0, lambda: -zeta.ln() / delta_t, c: zeta0 / zeta })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub alpha: f64,
    pub lambda: f64,
    pub prefactor: f64,
    pub residual: f64,
    pub used: usize,
    pub warnings: Vec<String>,
}

/// α ∈ {0.05, 0.055, …, 3}.
pub fn default_exponent_grid() -> Vec<f64> {
    (10..=600).map(|i| i as f64 * 0.005).collect()
}

/// Least-squares fit of log ρ ≈ c − λ Δt^α for each α in the grid; smallest residual wins.
pub fn fit_rate(points: &[(f64, f64)], grid: &[f64]) -> Result<RateFit> {
    let mut warnings = Vec::new();
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(x, y)| {
            let keep = x > 0.0 && x.is_finite() && y > 0.0 && y.is_finite();
            if !keep {
                warnings.push(format!("dropped point (Δt = {x}, ρ = {y})"));
            }
            keep
        })
        .map(|&(x, y)| (x, y.ln()))
        .collect();
    if pts.len() < 5 {
        return arg(format!("rate fit needs at least 5 usable points, got {}", pts.len()));
    }
    if grid.is_empty() || grid.iter().any(|a| !(*a > 0.0)) {
        return arg("exponent grid must be nonempty and positive");
    }
    let n = pts.len() as f64;
    let mut best: Option<RateFit> = None;
    for &alpha in grid {
        let us: Vec<f64> = pts.iter().map(|p| p.0.powf(alpha)).collect();
        let mu = us.iter().sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = us.iter().map(|u| (u - mu).powi(2)).sum();
        if !(sxx > 0.0) || !sxx.is_finite() {
            continue;
        }
        let sxy: f64 = us.iter().zip(&pts).map(|(u, p)| (u - mu) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        let c = my - slope * mu;
        let residual: f64 = us.iter().zip(&pts).map(|(u, p)| (p.1 - c - slope * u).powi(2)).sum();
        if best.as_ref().is_none_or(|b| residual < b.residual) {
            best = Some(RateFit { alpha, lambda: -slope, prefactor: c.exp(), residual, used: pts.len(), warnings: Vec::new() });
        }
    }
    let mut fit = best.ok_or_else(|| Error::Numeric("no exponent produced a usable fit".into()))?;
    fit.warnings = warnings;
    Ok(fit)
}

pub fn save_schedule(path: &Path, s: &[ScheduleEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for e in s {
        w.serialize(e).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_schedule(path: &Path) -> Result<Vec<ScheduleEntry>> {
    let mut rd = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for (i, rec) in rd.deserialize::<ScheduleEntry>().enumerate() {
        let e = rec.map_err(|e| Error::Config(format!("schedule row {}: {e}", i + 1)))?;
        e.validate().map_err(|e| Error::Config(format!("schedule row {}: {e}", i + 1)))?;
        out.push(e);
    }
    validate_schedule(&out).map_err(|e| Error::Config(e.to_string()))?;
    Ok(out)
}

/// γ(t,s) = e^{2∫_s^t α} and K(t,s) = ∫_s^t e^{2∫_u^t α}(2Λ_u + dΓ₁) du for V = |x|².
pub fn lyapunov_factors(c: &CoefficientSet, s: f64, t: f64) -> Result<(f64, f64)> {
    let env = &c.envelope;
    let gamma = (2.0 * env.integral(s, t)?).exp();
    let shift = c.dim as f64 * c.gamma1;
    let w = match env.lambda.as_constant() {
        Some(l) => TimeFunction::constant(2.0 * l + shift),
        None => {
            let lam = env.lambda.clone();
            let br = env.lambda.clone();
            TimeFunction::new(move |u| 2.0 * lam.eval(u) + shift).with_breaks(move |a, b| br.breakpoints(a, b))
        }
    };
    Ok((gamma, env.exp_weighted(s, t, &w)?))
}

/// Step length π²/3 of the √|t| partition.
pub const SQRT_EXAMPLE_STEP: f64 = PI * PI / 3.0;

/// Partition of [T_{k+1}, T_k], k = 1..=blocks: t^k_j = T_k − jΔ (j ≤ 4k+1), then T_{k+1}.
/// Δ-steps carry η = `eta_bar`, the closing long step η = 0.
pub fn sqrt_example_schedule(c: &CoefficientSet, blocks: u32, eta_bar: f64) -> Result<Vec<ScheduleEntry>> {
    if blocks == 0 {
        return arg("need at least one block");
    }
    let mut out = Vec::new();
    for k in 1..=blocks {
        let (_, tk) = sqrt_example_times(k);
        let (_, tk1) = sqrt_example_times(k + 1);
        let mut pts: Vec<f64> = (0..=4 * k + 1).map(|j| tk - j as f64 * SQRT_EXAMPLE_STEP).collect();
        pts.push(tk1);
        for (j, w) in pts.windows(2).enumerate() {
            let (g, kk) = lyapunov_factors(c, w[1], w[0])?;
            let eta = if j < 4 * k as usize + 1 { eta_bar } else { 0.0 };
            out.push(ScheduleEntry::new(w[0], w[1], g, kk, eta)?);
        }
    }
    Ok(out)
}

/// Finite-state kernel with Lyapunov function V, minorizing measure ν and constants (γ, K, η, R).
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChain {
    pub p: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    pub nu: Vec<f64>,
    pub gamma: f64,
    pub k: f64,
    pub eta: f64,
    pub r: f64,
}

pub fn chain_rho_beta(m1: &[f64], m2: &[f64], v: &[f64], beta: f64) -> f64 {
    m1.iter().zip(m2).zip(v).map(|((a, b), vv)| (1.0 + beta * vv) * (a - b).abs()).sum()
}

impl FiniteChain {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// Builds the chain with the smallest K and largest η compatible with the given γ and R.
    pub fn tight(p: Vec<Vec<f64>>, v: Vec<f64>, nu: Vec<f64>, gamma: f64, r: f64) -> Result<Self> {
        let pv: Vec<f64> = p.iter().map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
        let k = pv.iter().zip(&v).map(|(a, b)| a - gamma * b).fold(0.0, f64::max);
        let mut eta = f64::INFINITY;
        for (x, row) in p.iter().enumerate() {
            if v[x] <= r {
                for (y, &n) in nu.iter().enumerate() {
                    if n > 0.0 {
                        eta = eta.min(row[y] / n);
                    }
                }
            }
        }
        let eta = if eta.is_finite() { eta.min(1.0 - 1e-9) } else { 0.0 };
        let c = FiniteChain { p, v, nu, gamma, k, eta, r };
        c.check_hypotheses()?;
        Ok(c)
    }

    /// Random n-state chain with tight constants.
    pub fn random(seed: u64, n: usize) -> Result<Self> {
        let mut rng = CounterRng::new(seed, 0, 0);
        let mut v: Vec<f64> = (0..n).map(|_| 10.0 * rng.uniform()).collect();
        v[0] = 0.0;
        let p: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let row: Vec<f64> = (0..n).map(|_| if rng.uniform() < 0.2 { 0.0 } else { rng.uniform() }).collect();
                let s: f64 = row.iter().sum();
                if s > 0.0 {
                    row.iter().map(|x| x / s).collect()
                } else {
                    vec![1.0 / n as f64; n]
                }
            })
            .collect();
        let nu = random_prob(&mut rng, n);
        let gamma = 0.1 + 1.4 * rng.uniform();
        let r = 1.0 + 9.0 * rng.uniform();
        FiniteChain::tight(p, v, nu, gamma, r)
    }

    /// Exact enumeration of PV ≤ γV + K and P(x, ·) ≥ ην(·) on {V ≤ R}.
    pub fn check_hypotheses(&self) -> Result<()> {
        let n = self.len();
        let bad = |m: String| Err(Error::Precondition(m));
        if n == 0 || n > 20 || self.p.len() != n || self.nu.len() != n {
            return bad(format!("chain needs 1..=20 states with matching P, V, ν (got {n})"));
        }
        if self.v.iter().any(|x| !(*x >= 0.0)) {
            return bad("V must be nonnegative".into());
        }
        if !(self.gamma >= 0.0 && self.k >= 0.0 && (0.0..1.0).contains(&self.eta) && self.r > 0.0) {
            return bad("need γ ≥ 0, K ≥ 0, η ∈ [0, 1), R > 0".into());
        }
        let prob = |w: &[f64]| w.len() == n && w.iter().all(|x| *x >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() <= CHAIN_TOL;
        if !prob(&self.nu) {
            return bad("ν is not a probability vector".into());
        }
        for (x, row) in self.p.iter().enumerate() {
            if !prob(row) {
                return bad(format!("row {x} of P is not a probability vector"));
            }
            let pv: f64 = row.iter().zip(&self.v).map(|(a, b)| a * b).sum();
            if pv > self.gamma * self.v[x] + self.k + CHAIN_TOL {
                return bad(format!("PV ≤ γV + K fails at state {x}: {pv} > {}", self.gamma * self.v[x] + self.k));
            }
            if self.v[x] <= self.r {
                for (y, (&pxy, &n)) in row.iter().zip(&self.nu).enumerate() {
                    if pxy + CHAIN_TOL < self.eta * n {
                        return bad(format!("P(x, ·) ≥ ην(·) on {{V ≤ R}} fails at ({x}, {y}): {pxy} < {}", self.eta * n));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn push(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (x, row) in self.p.iter().enumerate() {
            for (o, pxy) in out.iter_mut().zip(row) {
                *o += mu[x] * pxy;
            }
        }
        out
    }

    pub fn zeta(&self, beta: f64) -> f64 {
        one_step_zeta(self.gamma, self.k, self.eta, self.r, beta)
    }
}

fn random_prob(rng: &mut CounterRng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.uniform()).ln()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

/// Pair generator mixing diffuse, point-mass and sparse probability vectors.
fn random_pair(rng: &mut CounterRng, n: usize, trial: usize) -> (Vec<f64>, Vec<f64>) {
    let point = |i: usize| {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    };
    let pick = |rng: &mut CounterRng| ((rng.uniform() * n as f64) as usize).min(n - 1);
    match trial % 3 {
        0 => (random_prob(rng, n), random_prob(rng, n)),
        1 => (point(pick(rng)), point(pick(rng))),
        _ => {
            let mut a = random_prob(rng, n);
            let i = pick(rng);
            a[i] = 0.0;
            let s: f64 = a.iter().sum();
            a.iter_mut().for_each(|x| *x /= s);
            (a, point(i))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainContractionReport {
    pub trials: usize,
    pub zeta: f64,
    pub max_ratio: f64,
    pub violations: usize,
}

/// Checks ρ_β(μ₁P, μ₂P) ≤ ζ ρ_β(μ₁, μ₂) on random pairs (μ₁ = μ₂ included as trial 0).
pub fn verify_lemma_finite_chain(chain: &FiniteChain, beta: f64, trials: usize, seed: u64) -> Result<ChainContractionReport> {
    chain.check_hypotheses()?;
    if !(beta >= 0.0) {
        return arg("β must be nonnegative");
    }
    let n = chain.len();
    let zeta = chain.zeta(beta);
    let mut rng = CounterRng::new(seed, 1, 0);
    let (mut max_ratio, mut violations) = (0.0f64, 0);
    for trial in 0..trials {
        let (m1, m2) = if trial == 0 {
            let m = random_prob(&mut rng, n);
            (m.clone(), m)
        } else {
            random_pair(&mut rng, n, trial)
        };
        let before = chain_rho_beta(&m1, &m2, &chain.v, beta);
        let after = chain_rho_beta(&chain.push(&m1), &chain.push(&m2), &chain.v, beta);
        if after > zeta * before + CHAIN_TOL * (1.0 + before) {
            violations += 1;
        }
        if before > 0.0 {
            max_ratio = max_ratio.max(after / before);
        }
    }
    Ok(ChainContractionReport { trials, zeta, max_ratio, violations })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TelescopeReport {
    pub trials: usize,
    pub bound: f64,
    pub max_ratio: f64,
    pub violations: usize,
}

/// Multi-step ρ_β ratio against ∏ζ over a sequence of chains sharing V (applied first to last).
pub fn verify_telescoping(chains: &[FiniteChain], beta: f64, trials: usize, tol: f64, seed: u64) -> Result<TelescopeReport> {
    let Some(first) = chains.first() else { return arg("empty chain sequence") };
    for c in chains {
        c.check_hypotheses()?;
        if c.v != first.v {
            return arg("all chains must share the state space and V");
        }
    }
    let bound: f64 = chains.iter().map(|c| c.zeta(beta)).product();
    let n = first.len();
    let mut rng = CounterRng::new(seed, 2, 0);
    let (mut max_ratio, mut violations) = (0.0f64, 0);
    for trial in 0..trials {
        let (mut m1, mut m2) = random_pair(&mut rng, n, trial + 1);
        let before = chain_rho_beta(&m1, &m2, &first.v, beta);
        for c in chains {
            m1 = c.push(&m1);
            m2 = c.push(&m2);
        }
        let after = chain_rho_beta(&m1, &m2, &first.v, beta);
        if after > bound * before + tol * (1.0 + before) {
            violations += 1;
        }
        if before > 0.0 {
            max_ratio = max_ratio.max(after / before);
        }
    }
    Ok(TelescopeReport { trials, bound, max_ratio, violations })
}

/// Random sequence of chains on a common V (γ, K, η tight per step).
pub fn random_chain_sequence(seed: u64, n: usize, len: usize) -> Result<Vec<FiniteChain>> {
    let base = FiniteChain::random(seed, n)?;
    (0..len)
        .map(|i| {
            let c = FiniteChain::random(mix_seed(seed, i as u64 + 1), n)?;
            FiniteChain::tight(c.p, base.v.clone(), c.nu, c.gamma, c.r)
        })
        .collect()
}

fn mix_seed(seed: u64, i: u64) -> u64 {
    crate::rng::path_key(seed, i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zeta_examples() {
        assert_eq!(one_step_zeta(3.0, 2.0, 0.0, 5.0, 0.0), 1.0);
        assert_relative_eq!(one_step_zeta(0.5, 1.0, 0.3, 20.0, 0.05), 2.6 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(one_step_zeta(2.0, 1.0, 0.0, 10.0, 0.1), 1.4, epsilon = 1e-15);
    }

    fn entries(gs: &[(f64, f64, f64)]) -> Vec<ScheduleEntry> {
        gs.iter()
            .enumerate()
            .map(|(i, &(g, k, e))| ScheduleEntry::new(-(i as f64), -(i as f64) - 1.0, g, k, e).unwrap())
            .collect()
    }

    #[test]
    fn partition_counts() {
        let s = entries(&[(0.5, 1.0, 0.0); 8]);
        let a = analyze_partition(&s, 0.1).unwrap();
        assert!(a.n_delta.iter().all(|&c| c == 0));
        let s: Vec<_> = (1..=40).map(|i| (0.5, 1.0, 1.0 / i as f64 - 1e-12)).collect();
        let s = entries(&s);
        let a = analyze_partition(&s, 0.1 - 1e-12).unwrap();
        for n in 10..=40 {
            assert_eq!(a.n_delta[n - 1], 10);
        }
        assert!(analyze_partition(&[], 0.1).is_err());
        let mut broken = entries(&[(0.5, 1.0, 0.2); 3]);
        broken[1].t_prev = 5.0;
        assert!(analyze_partition(&broken, 0.1).is_err());
    }

    #[test]
    fn gamma_bar_is_the_mean_over_a() {
        let s = entries(&[(0.2, 1.0, 0.5), (3.0, 1.0, 0.0), (0.4, 1.0, 0.5)]);
        let a = analyze_partition(&s, 0.1).unwrap();
        assert_eq!(a.gamma_bar, vec![Some(0.2), Some(0.2), Some(0.30000000000000004)]);
        assert_eq!(a.gamma, 3.0);
    }

    #[test]
    fn condition_examples() {
        let s = entries(&[(0.5, 1.0, 0.5); 4]);
        let a = analyze_partition(&s, 0.1).unwrap();
        let c = check_theorem_conditions(&a, 10.0, 0.5, 0.9);
        assert!(!c.gamma_star_ok && !c.pass());
        assert!(c.diagnostics[0].contains("γ*"));
        let s = entries(&[(1.0, 0.0, 0.3); 6]);
        let a = analyze_partition(&s, 0.3).unwrap();
        let c = check_theorem_conditions(&a, 1.0, 0.9, 0.5);
        assert_eq!(c.varpi_threshold, 0.0);
        assert!(c.varpi_ok);
        assert!(!c.limsup_ok);
    }

    #[test]
    fn select_beta_matches_dense_grid() {
        let cert = select_beta(1.0, 1.0, 20.0, 0.2, 0.8, 0.5).unwrap();
        assert_eq!(cert.c1, 1.0);
        assert!(cert.r < 1.0 && cert.beta <= cert.beta2 && cert.beta2 <= cert.beta1);
        assert!(cert.phi_prime0() < 0.0);
        let grid_min = (1..=10_000).map(|i| cert.phi(cert.beta2 * i as f64 / 10_000.0)).fold(f64::INFINITY, f64::min);
        assert!((cert.r - grid_min).abs() <= 1e-6);
    }

    #[test]
    fn select_beta_monotone_case() {
        let cert = select_beta(1.0, 0.0, 4.0, 0.4, 0.5, 0.5).unwrap();
        assert_eq!(cert.c1, 0.0);
        assert_eq!(cert.beta, cert.beta2);
        assert_relative_eq!(cert.r, (1.0 - cert.c2 * cert.beta2).sqrt(), max_relative = 1e-15);
        assert!(matches!(select_beta(1.0, 1.0, 10.0, 0.2, 0.5, 0.9), Err(Error::Precondition(_))));
    }

    #[test]
    fn select_beta_expanding_gamma_caps_beta2() {
        // γ > 1 makes c₁ large enough that the linear inequality binds below β₁
        let cert = select_beta(3.0, 0.5, 10.0, 0.9, 0.73, 0.1).unwrap();
        assert!(cert.beta2 < cert.beta1);
        assert!(cert.r < 1.0 && cert.phi_prime0() < 0.0);
        let lhs = cert.c1 * (1.0 - cert.varpi);
        let rhs = ((1.0 - cert.gamma_star) * cert.big_r - 2.0 * cert.k) / (2.0 + cert.beta2 * cert.big_r) * cert.varpi;
        assert!(lhs < rhs);
    }

    #[test]
    fn ct_examples() {
        let s = entries(&[(0.5, 0.0, 0.5)]);
        let a = analyze_partition(&s, 0.4).unwrap();
        let cert = select_beta(a.gamma, a.k, 10.0, 0.4, 0.5, 0.6).unwrap();
        let e = ct_constant(&cert, &a, 0.0, None).unwrap();
        assert_eq!((e.i0, e.n_k0, e.zeta_head), (0, 1, 1.0));
        assert_relative_eq!(e.ct, 1.0 / cert.r, max_relative = 1e-15);
        assert!(ct_constant(&cert, &a, -2.0, None).is_err());
        assert!(ct_constant(&cert, &a, 0.5, None).is_err());
        let head = ScheduleEntry::new(0.5, 0.0, 2.0, 0.0, 0.0).unwrap();
        let e2 = ct_constant(&cert, &a, 0.5, Some(&head)).unwrap();
        assert!(e2.zeta_head > 1.0 && e2.ct > e.ct);
    }

    #[test]
    fn ct_grows_with_c1() {
        let s = entries(&[(0.2, 1.0, 0.0), (0.2, 1.0, 0.5), (0.2, 1.0, 0.5), (0.2, 1.0, 0.5)]);
        let a = analyze_partition(&s, 0.4).unwrap();
        let cert = select_beta(a.gamma, a.k, 40.0, 0.4, 0.6, 0.5).unwrap();
        let e = ct_constant(&cert, &a, 0.0, None).unwrap();
        assert!(e.n_k0 > e.i0);
        let doubled = ContractionCertificate { c1: 2.0 * cert.c1, ..cert.clone() };
        assert!(ct_constant(&doubled, &a, 0.0, None).unwrap().ct > e.ct);
    }

    #[test]
    fn uniform_examples() {
        let u = uniform_certificate(1.0, 0.5, 1.0, 0.5, 10.0).unwrap();
        assert_eq!(u.beta, 0.25);
        assert_relative_eq!(u.zeta, 3.75 / 4.5, epsilon = 1e-15);
        assert_relative_eq!(u.lambda, -(3.75f64 / 4.5).ln(), epsilon = 1e-15);
        assert_relative_eq!(u.c, u.zeta0 / u.zeta);
        let far = uniform_certificate(1.0, 0.5, 1.0, 0.5, 1e12).unwrap();
        assert!((far.zeta - 0.75).abs() < 1e-9);
        assert!(matches!(uniform_certificate(1.0, 1.2, 1.0, 0.5, 10.0), Err(Error::Precondition(m)) if m.contains("γ_Δ < 1")));
        assert!(matches!(uniform_certificate(1.0, 0.5, 1.0, 0.5, 3.0), Err(Error::Precondition(m)) if m.contains("R >")));
        assert!(matches!(uniform_certificate(1.0, 0.5, 1.0, 0.0, 10.0), Err(Error::Precondition(m)) if m.contains("η_Δ")));
    }

    #[test]
    fn rate_fit_synthetic() {
        let xs: Vec<f64> = (1..=20).map(|i| 0.5 * i as f64).collect();
        let f = fit_rate(&xs.iter().map(|&x| (x, (-2.0 * x).exp())).collect::<Vec<_>>(), &default_exponent_grid()).unwrap();
        assert!((f.alpha - 1.0).abs() <= 0.05 && (f.lambda - 2.0).abs() <= 0.1);
        let f = fit_rate(&xs.iter().map(|&x| (x, 3.0 * (-0.5 * x.powf(0.75)).exp())).collect::<Vec<_>>(), &default_exponent_grid()).unwrap();
        assert!((f.alpha - 0.75).abs() <= 0.05);
        assert_relative_eq!(f.prefactor, 3.0, max_relative = 1e-6);
        let mut pts: Vec<(f64, f64)> = xs.iter().take(5).map(|&x| (x, (-x).exp())).collect();
        pts.push((1.0, 0.0));
        let f = fit_rate(&pts, &default_exponent_grid()).unwrap();
        assert_eq!((f.used, f.warnings.len()), (5, 1));
        pts.truncate(4);
        assert!(fit_rate(&pts, &default_exponent_grid()).is_err());
    }

    #[test]
    fn schedule_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let s = entries(&[(0.5, 1.0, 0.25), (1.5, 0.0, 0.0)]);
        save_schedule(&p, &s).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("t_prev,t_next,gamma,K,eta"));
        assert_eq!(load_schedule(&p).unwrap(), s);
        std::fs::write(&p, "t_prev,t_next,gamma,K,eta\n0,1,0.5,1,0.2\n").unwrap();
        assert!(matches!(load_schedule(&p), Err(Error::Config(_))));
    }

    #[test]
    fn lemma_on_random_chains() {
        for seed in 0..20 {
            let c = FiniteChain::random(seed, 5).unwrap();
            for beta in [0.01, 0.1, 1.0] {
                let rep = verify_lemma_finite_chain(&c, beta, 1000, seed).unwrap();
                assert_eq!(rep.violations, 0, "seed {seed} β {beta}: {rep:?}");
                assert!(rep.max_ratio <= rep.zeta + 1e-12);
            }
        }
    }

    #[test]
    fn lemma_doubly_stochastic_minorization_branch() {
        let n = 4;
        let p = vec![
            vec![0.4, 0.3, 0.2, 0.1],
            vec![0.1, 0.4, 0.3, 0.2],
            vec![0.2, 0.1, 0.4, 0.3],
            vec![0.3, 0.2, 0.1, 0.4],
        ];
        // V ≡ 0 reduces ρ_β to the total variation, where the Doeblin rate 1 − η applies
        let c = FiniteChain::tight(p.clone(), vec![0.0; n], vec![0.25; n], 0.0, 10.0).unwrap();
        assert_relative_eq!(c.eta, 0.4, epsilon = 1e-12);
        assert_eq!(c.k, 0.0);
        // the second branch 2/(2 + βR) tends to 1 as β → 0, so 1 − η is active only for β ≥ 2η/((1−η)R)
        assert!(c.zeta(1e-3) > 1.0 - c.eta);
        let beta = 1.0;
        assert_eq!(c.zeta(beta), 1.0 - c.eta);
        let rep = verify_lemma_finite_chain(&c, beta, 1000, 7).unwrap();
        assert_eq!(rep.violations, 0);
        assert!(rep.max_ratio <= 1.0 - c.eta + 1e-12);
        let c = FiniteChain::tight(p, vec![0.0, 1.0, 2.0, 3.0], vec![0.25; n], 1.0, 10.0).unwrap();
        assert_eq!(verify_lemma_finite_chain(&c, beta, 1000, 8).unwrap().violations, 0);
        let rep = verify_lemma_finite_chain(&c, beta, 1, 8).unwrap();
        assert_eq!(rep.max_ratio, 0.0);
    }

    #[test]
    fn zeta_bound_can_fail_when_gamma_exceeds_one_plus_beta_k() {
        let mut p = vec![vec![0.0; 5]; 5];
        p[0][0] = 1.0;
        p[1][3] = 1.0;
        p[2][4] = 1.0;
        p[3][0] = 1.0;
        p[4][0] = 1.0;
        let v = vec![0.0, 100.0, 100.0, 200.0, 200.0];
        let mut nu = vec![0.0; 5];
        nu[0] = 1.0;
        let c = FiniteChain { p, v, nu, gamma: 2.0, k: 0.0, eta: 1.0 - 1e-12, r: 1.0 };
        c.check_hypotheses().unwrap();
        let before = chain_rho_beta(&[0.0, 1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 0.0, 0.0], &c.v, 0.1);
        let after = chain_rho_beta(&c.push(&[0.0, 1.0, 0.0, 0.0, 0.0]), &c.push(&[0.0, 0.0, 1.0, 0.0, 0.0]), &c.v, 0.1);
        assert!(after / before > 1.9 && c.zeta(0.1) < 1.1);
        assert!(verify_lemma_finite_chain(&c, 0.1, 300, 3).unwrap().violations > 0);
    }

    #[test]
    fn lemma_rejects_broken_hypotheses() {
        let mut c = FiniteChain::random(3, 5).unwrap();
        c.k *= 0.5;
        c.k -= 1.0;
        c.k = c.k.max(0.0);
        let e = c.check_hypotheses();
        if let Err(Error::Precondition(m)) = e {
            assert!(m.contains("PV"));
        }
        let mut c = FiniteChain::random(4, 5).unwrap();
        c.eta = 0.99;
        assert!(matches!(verify_lemma_finite_chain(&c, 0.1, 10, 0), Err(Error::Precondition(m)) if m.contains("ην")));
    }

    #[test]
    fn telescoping_on_random_sequences() {
        for seed in 0..10 {
            let cs = random_chain_sequence(seed, 5, 10).unwrap();
            let rep = verify_telescoping(&cs, 0.1, 500, 1e-10, seed).unwrap();
            assert_eq!(rep.violations, 0, "{rep:?}");
        }
    }

    #[test]
    fn sqrt_example_partition_is_well_controlled() {
        let c = crate::catalog::build("sin_sqrt_double_well", &Default::default()).unwrap();
        let s = sqrt_example_schedule(&c, 4, 0.02).unwrap();
        assert_eq!(s.len(), 6 + 10 + 14 + 18);
        let gstar = (-14.0 * SQRT_EXAMPLE_STEP).exp();
        for e in &s {
            assert!(e.gamma < gstar && e.k <= 10.0, "{e:?}");
        }
        let a = analyze_partition(&s, 0.01).unwrap();
        assert!(a.inf_ratio > 0.5);
        let big_r = 1.01 * 40.0 / (1.0 - gstar);
        let conds = check_theorem_conditions(&a, big_r, 0.5, gstar);
        assert!(conds.pass(), "{:?}", conds.diagnostics);
        let cert = select_beta(a.gamma, a.k, big_r, a.delta, 0.5, gstar).unwrap();
        assert!(cert.r < 1.0);
        let (g, k) = lyapunov_factors(&c, s[0].t_prev, 0.0).unwrap();
        let head = ScheduleEntry::new(0.0, s[0].t_prev, g, k, 0.0).unwrap();
        let e = ct_constant(&cert, &a, 0.0, Some(&head)).unwrap();
        assert!(e.ct.is_finite() && e.ct > 0.0);
        let text = cert.report(Some(&conds)).to_string();
        assert!(text.contains("beta2 = ") && text.contains("c2 = "));
    }
}
