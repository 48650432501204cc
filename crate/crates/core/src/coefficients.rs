//! SDE coefficients, dissipation envelopes, and the transformations applied to them.

use crate::error::{arg, Error, Result};
use crate::expr::Expr;
use crate::quadrature::{integrate_with_breaks, GaussRule, SIMPSON_TOL};
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock, RwLock};

pub type ScalarEval = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type BreakFn = Arc<dyn Fn(f64, f64) -> Vec<f64> + Send + Sync>;

/// A scalar function of time with optional kink locations.
#[derive(Clone)]
pub struct TimeFunction {
    f: ScalarEval,
    constant: Option<f64>,
    breaks: Option<BreakFn>,
}

impl fmt::Debug for TimeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.constant {
            Some(c) => write!(f, "TimeFunction(const {c})"),
            None => write!(f, "TimeFunction(..)"),
        }
    }
}

impl TimeFunction {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        TimeFunction { f: Arc::new(f), constant: None, breaks: None }
    }

    pub fn constant(c: f64) -> Self {
        TimeFunction { f: Arc::new(move |_| c), constant: Some(c), breaks: None }
    }

    /// Attach a function listing the kinks inside (a, b).
    pub fn with_breaks(mut self, b: impl Fn(f64, f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.breaks = Some(Arc::new(b));
        self
    }

    /// Kinks at `offset + k·period` (and optionally the time map's image).
    pub fn with_periodic_breaks(self, offset: f64, period: f64) -> Self {
        self.with_breaks(move |a, b| {
            let k0 = ((a - offset) / period).floor() as i64;
            let k1 = ((b - offset) / period).ceil() as i64;
            (k0..=k1).map(|k| offset + k as f64 * period).filter(|&p| p > a && p < b).collect()
        })
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    pub fn as_constant(&self) -> Option<f64> {
        self.constant
    }

    pub fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        self.breaks.as_ref().map_or_else(Vec::new, |f| f(a, b))
    }

    pub fn has_breaks(&self) -> bool {
        self.breaks.is_some()
    }

    pub fn from_expr(e: Expr) -> Result<Self> {
        if e.depends_on_state() {
            return Err(Error::Config("time function may not depend on x".into()));
        }
        Ok(TimeFunction::new(move |t| e.eval(t, &[])))
    }
}

/// Union of breakpoints of several time functions inside (a, b).
pub fn merged_breaks(fs: &[&TimeFunction], a: f64, b: f64) -> Vec<f64> {
    let mut v: Vec<f64> = fs.iter().flat_map(|f| f.breakpoints(a, b)).collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|x, y| (*x - *y).abs() < 1e-14 * (1.0 + x.abs()));
    v
}

/// A coefficient evaluator: drift (output d) or diffusion (output d×d, row-major).
pub trait Field: Send + Sync {
    fn dim(&self) -> usize;
    fn out_len(&self) -> usize;
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]);

    /// Evaluate at many states sharing one time; `xs` is n·dim, `out` is n·out_len.
    fn eval_batch(&self, t: f64, xs: &[f64], out: &mut [f64]) {
        let (d, m) = (self.dim(), self.out_len());
        for (x, o) in xs.chunks_exact(d).zip(out.chunks_exact_mut(m)) {
            self.eval(t, x, o);
        }
    }

    fn state_independent(&self) -> bool {
        false
    }
}

pub type FieldRef = Arc<dyn Field>;

/// One-dimensional field Σ_k c_k(t) x^k.
pub struct Poly1d {
    pub coefs: Vec<TimeFunction>,
}

impl Poly1d {
    pub fn new(coefs: Vec<TimeFunction>) -> Self {
        Poly1d { coefs }
    }
}

impl Field for Poly1d {
    fn dim(&self) -> usize {
        1
    }
    fn out_len(&self) -> usize {
        1
    }
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let mut acc = 0.0;
        for c in self.coefs.iter().rev() {
            acc = acc * x[0] + c.eval(t);
        }
        out[0] = acc;
    }
    fn eval_batch(&self, t: f64, xs: &[f64], out: &mut [f64]) {
        let mut cs = self.coefs.iter().rev().map(|c| c.eval(t));
        let Some(top) = cs.next() else {
            out.fill(0.0);
            return;
        };
        out.fill(top);
        // loop over states innermost so it vectorizes
        for c in cs {
            for (o, x) in out.iter_mut().zip(xs) {
                *o = *o * x + c;
            }
        }
    }
    fn state_independent(&self) -> bool {
        self.coefs.len() <= 1
    }
}

/// Field given by parsed expressions, one per output component.
pub struct ExprField {
    dim: usize,
    exprs: Vec<Expr>,
}

impl ExprField {
    pub fn new(dim: usize, exprs: Vec<Expr>) -> Result<Self> {
        if let Some(e) = exprs.iter().find(|e| e.state_dim() > dim) {
            return Err(Error::Config(format!("expression uses x{} but d = {dim}", e.state_dim())));
        }
        Ok(ExprField { dim, exprs })
    }
}

impl Field for ExprField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn out_len(&self) -> usize {
        self.exprs.len()
    }
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.exprs) {
            *o = e.eval(t, x);
        }
    }
    fn state_independent(&self) -> bool {
        self.exprs.iter().all(|e| !e.depends_on_state())
    }
}

type FieldFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// Field backed by an arbitrary closure.
pub struct FnField {
    dim: usize,
    out_len: usize,
    state_independent: bool,
    f: Arc<FieldFn>,
}

impl FnField {
    pub fn new(
        dim: usize,
        out_len: usize,
        f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        FnField { dim, out_len, state_independent: false, f: Arc::new(f) }
    }

    pub fn state_independent(mut self) -> Self {
        self.state_independent = true;
        self
    }
}

impl Field for FnField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn out_len(&self) -> usize {
        self.out_len
    }
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.f)(t, x, out)
    }
    fn state_independent(&self) -> bool {
        self.state_independent
    }
}

/// σ ≡ s·I.
pub fn constant_diffusion(dim: usize, s: f64) -> FieldRef {
    Arc::new(
        FnField::new(dim, dim * dim, move |_, _, out| {
            out.fill(0.0);
            for i in 0..dim {
                out[i * dim + i] = s;
            }
        })
        .state_independent(),
    )
}

/// Drift evaluated at the radial projection onto the ball of radius N.
pub struct Truncated {
    inner: FieldRef,
    radius: f64,
}

impl Field for Truncated {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn out_len(&self) -> usize {
        self.inner.out_len()
    }
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r > self.radius {
            let y: Vec<f64> = x.iter().map(|v| v * self.radius / r).collect();
            self.inner.eval(t, &y, out)
        } else {
            self.inner.eval(t, x, out)
        }
    }
    fn eval_batch(&self, t: f64, xs: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let mut ys = xs.to_vec();
        for y in ys.chunks_exact_mut(d) {
            let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r > self.radius {
                y.iter_mut().for_each(|v| *v *= self.radius / r);
            }
        }
        self.inner.eval_batch(t, &ys, out)
    }
    fn state_independent(&self) -> bool {
        self.inner.state_independent()
    }
}

/// Number of Gauss–Legendre nodes per axis for mollification.
pub const MOLLIFY_NODES: usize = 32;

/// Spatial convolution with the bump kernel of radius ε.
pub struct Mollified {
    inner: FieldRef,
    offsets: Vec<f64>,
    weights: Vec<f64>,
}

/// Tensor-product nodes (flattened offsets) and normalized weights of ρ_ε on [−ε, ε]^d.
pub fn bump_kernel_rule(dim: usize, eps: f64, nodes: usize) -> (Vec<f64>, Vec<f64>) {
    let rule = GaussRule::legendre(nodes);
    let bump = |r2: f64| if r2 < 1.0 { (1.0 / (r2 - 1.0)).exp() } else { 0.0 };
    let mut offs = Vec::new();
    let mut ws = Vec::new();
    match dim {
        1 => {
            for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
                offs.push(eps * u);
                ws.push(w * bump(u * u));
            }
        }
        2 => {
            for (&u, &wu) in rule.nodes.iter().zip(&rule.weights) {
                for (&v, &wv) in rule.nodes.iter().zip(&rule.weights) {
                    offs.push(eps * u);
                    offs.push(eps * v);
                    ws.push(wu * wv * bump(u * u + v * v));
                }
            }
        }
        _ => unreachable!(),
    }
    let s: f64 = ws.iter().sum();
    ws.iter_mut().for_each(|w| *w /= s);
    (offs, ws)
}

impl Field for Mollified {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn out_len(&self) -> usize {
        self.inner.out_len()
    }
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        out.fill(0.0);
        let mut y = vec![0.0; d];
        let mut v = vec![0.0; out.len()];
        for (off, w) in self.offsets.chunks_exact(d).zip(&self.weights) {
            for i in 0..d {
                y[i] = x[i] - off[i];
            }
            self.inner.eval(t, &y, &mut v);
            for (o, vi) in out.iter_mut().zip(&v) {
                *o += w * vi;
            }
        }
    }
    fn state_independent(&self) -> bool {
        self.inner.state_independent()
    }
}

/// Coefficient seen in the changed clock: scale(t)^power · inner(φ⁻¹(t), x).
struct Reparameterized {
    inner: FieldRef,
    tc: TimeChange,
    power: f64,
}

impl Field for Reparameterized {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn out_len(&self) -> usize {
        self.inner.out_len()
    }
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let s = self.tc.dinv(t).powf(self.power);
        self.inner.eval(self.tc.inv(t), x, out);
        out.iter_mut().for_each(|o| *o *= s);
    }
    fn eval_batch(&self, t: f64, xs: &[f64], out: &mut [f64]) {
        let s = self.tc.dinv(t).powf(self.power);
        self.inner.eval_batch(self.tc.inv(t), xs, out);
        out.iter_mut().for_each(|o| *o *= s);
    }
    fn state_independent(&self) -> bool {
        self.inner.state_independent()
    }
}

/// α_t, Λ_t and the dominating function g with ∫_s^t (α⁺ + Λ) ≤ g(t − s).
#[derive(Clone)]
pub struct DissipationEnvelope {
    pub alpha: TimeFunction,
    pub lambda: TimeFunction,
    pub g: ScalarEval,
    cache: Arc<AlphaCache>,
}

impl fmt::Debug for DissipationEnvelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DissipationEnvelope")
            .field("alpha", &self.alpha)
            .field("lambda", &self.lambda)
            .finish_non_exhaustive()
    }
}

/// Unit-panel integrals of α, filled lazily.
#[derive(Default)]
struct AlphaCache {
    panels: RwLock<HashMap<i64, f64>>,
}

impl DissipationEnvelope {
    pub fn new(alpha: TimeFunction, lambda: TimeFunction, g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        DissipationEnvelope { alpha, lambda, g: Arc::new(g), cache: Arc::default() }
    }

    /// Constant α, Λ with g(Δ) = (α⁺ + Λ)Δ.
    pub fn constant(alpha: f64, lambda: f64) -> Self {
        let slope = alpha.max(0.0) + lambda;
        Self::new(TimeFunction::constant(alpha), TimeFunction::constant(lambda), move |d| slope * d)
    }

    fn panel(&self, k: i64) -> Result<f64> {
        if let Some(v) = self.cache.panels.read().unwrap().get(&k) {
            return Ok(*v);
        }
        let (a, b) = (k as f64, k as f64 + 1.0);
        let v = integrate_with_breaks(&|t| self.alpha.eval(t), a, b, &self.alpha.breakpoints(a, b), SIMPSON_TOL)?;
        self.cache.panels.write().unwrap().insert(k, v);
        Ok(v)
    }

    fn raw_integral(&self, a: f64, b: f64) -> Result<f64> {
        integrate_with_breaks(&|t| self.alpha.eval(t), a, b, &self.alpha.breakpoints(a, b), SIMPSON_TOL)
    }

    /// ∫_s^t α_r dr.
    pub fn integral(&self, s: f64, t: f64) -> Result<f64> {
        if s > t {
            return arg(format!("dissipation integral needs s <= t (s = {s}, t = {t})"));
        }
        if let Some(c) = self.alpha.as_constant() {
            return Ok(c * (t - s));
        }
        let (ks, kt) = (s.ceil(), t.floor());
        if kt - ks < 2.0 {
            return self.raw_integral(s, t);
        }
        let mut acc = self.raw_integral(s, ks)? + self.raw_integral(kt, t)?;
        for k in (ks as i64)..(kt as i64) {
            acc += self.panel(k)?;
        }
        Ok(acc)
    }

    /// ∫_s^t e^{2∫_u^t α} w(u) du, marched backward from t in short panels.
    pub fn exp_weighted(&self, s: f64, t: f64, w: &TimeFunction) -> Result<f64> {
        if s > t {
            return arg(format!("need s <= t (s = {s}, t = {t})"));
        }
        let mut st = ExpMarch::new(&self.alpha, w, t);
        while st.lo > s {
            st.step(s)?;
        }
        Ok(st.acc)
    }

    /// ∫_{−∞}^t e^{2∫_u^t α} w(u) du, stopped once the remaining tail is below `tail_tol`.
    pub fn exp_weighted_tail(&self, t: f64, w: &TimeFunction, tail_tol: f64, max_span: f64) -> Result<f64> {
        exp_weighted_tail(&self.alpha, w, t, tail_tol, max_span)
    }

    /// ∫_s^t (α⁺ + Λ) dr.
    pub fn alpha_plus_lambda_integral(&self, s: f64, t: f64) -> Result<f64> {
        let br = zero_crossings(&self.alpha, s, t, merged_breaks(&[&self.alpha, &self.lambda], s, t));
        integrate_with_breaks(&|r| self.alpha.eval(r).max(0.0) + self.lambda.eval(r), s, t, &br, SIMPSON_TOL)
    }
}

// Add approximate zero crossings of α so that α⁺ has its kinks on panel boundaries.
fn zero_crossings(alpha: &TimeFunction, s: f64, t: f64, mut br: Vec<f64>) -> Vec<f64> {
    let n = (((t - s) * 64.0).ceil() as usize).clamp(1, 1 << 16);
    let h = (t - s) / n as f64;
    let mut prev = alpha.eval(s);
    for i in 1..=n {
        let u = s + i as f64 * h;
        let cur = alpha.eval(u);
        if prev * cur < 0.0 {
            let (mut a, mut b) = (u - h, u);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if alpha.eval(m) * prev > 0.0 {
                    a = m
                } else {
                    b = m
                }
            }
            br.push(0.5 * (a + b));
        }
        prev = cur;
    }
    br
}

const MARCH_PANEL: f64 = 0.25;

fn gl16() -> &'static GaussRule {
    static R: OnceLock<GaussRule> = OnceLock::new();
    R.get_or_init(|| GaussRule::legendre(16))
}

/// Backward march state for ∫ e^{2∫_u^t α} w(u) du.
struct ExpMarch<'a> {
    alpha: &'a TimeFunction,
    w: &'a TimeFunction,
    lo: f64,
    log_factor: f64,
    acc: f64,
    last: f64,
}

impl<'a> ExpMarch<'a> {
    fn new(alpha: &'a TimeFunction, w: &'a TimeFunction, t: f64) -> Self {
        ExpMarch { alpha, w, lo: t, log_factor: 0.0, acc: 0.0, last: 0.0 }
    }

    fn step(&mut self, floor: f64) -> Result<()> {
        let b = self.lo;
        let mut a = (b - MARCH_PANEL).max(floor);
        let br = merged_breaks(&[self.alpha, self.w], a, b);
        if let Some(&p) = br.last() {
            a = p;
        }
        let rule = gl16();
        let mut contrib = 0.0;
        for (u, wu) in rule.mapped(a, b) {
            let inner = rule.integrate(|r| self.alpha.eval(r), u, b);
            contrib += wu * (2.0 * inner).exp() * self.w.eval(u);
        }
        let panel_alpha = rule.integrate(|r| self.alpha.eval(r), a, b);
        let scale = (2.0 * self.log_factor).exp();
        self.last = scale * contrib;
        self.acc += self.last;
        self.log_factor += panel_alpha;
        self.lo = a;
        if !self.acc.is_finite() {
            return Err(Error::Numeric(format!("non-finite weighted integral near u = {a}")));
        }
        Ok(())
    }
}

/// ∫_{−∞}^t e^{2∫_u^t α} w(u) du for a general α.
pub fn exp_weighted_tail(alpha: &TimeFunction, w: &TimeFunction, t: f64, tail_tol: f64, max_span: f64) -> Result<f64> {
    let mut st = ExpMarch::new(alpha, w, t);
    // window over which the tail is judged negligible
    let window = 64.0;
    let mut window_acc = 0.0;
    let mut window_start = t;
    while t - st.lo < max_span {
        st.step(f64::NEG_INFINITY)?;
        if 2.0 * st.log_factor > 600.0 {
            return Err(Error::Divergent(format!("e^(2∫α) exceeds e^600 within {:.1} below t = {t}", t - st.lo)));
        }
        window_acc += st.last;
        if window_start - st.lo >= window {
            if window_acc < tail_tol && 2.0 * st.log_factor < tail_tol.ln() {
                return Ok(st.acc);
            }
            window_acc = 0.0;
            window_start = st.lo;
        }
    }
    Err(Error::Divergent(format!(
        "∫ e^(2∫α) w did not settle within a span of {max_span} below t = {t} (accumulated {:.6e}, log-factor {:.3})",
        st.acc, st.log_factor
    )))
}

/// Strictly increasing time map φ on ℝ⁺ with φ(0) = 0, extended oddly.
#[derive(Clone)]
pub struct TimeChange {
    phi: ScalarEval,
    inv: ScalarEval,
    dinv: ScalarEval,
    omega: ScalarEval,
    pub label: String,
}

impl fmt::Debug for TimeChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TimeChange({})", self.label)
    }
}

fn odd(f: &ScalarEval, t: f64) -> f64 {
    if t < 0.0 {
        -f(-t)
    } else {
        f(t)
    }
}

impl TimeChange {
    pub fn identity() -> Self {
        TimeChange {
            phi: Arc::new(|t| t),
            inv: Arc::new(|t| t),
            dinv: Arc::new(|_| 1.0),
            omega: Arc::new(|d| d),
            label: "identity".into(),
        }
    }

    /// φ(t) = t^p on ℝ⁺.
    pub fn power(p: f64) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::Config(format!("power time change needs p > 0, got {p}")));
        }
        let q = 1.0 / p;
        let inv: ScalarEval = Arc::new(move |t: f64| t.powf(q));
        let inv2 = inv.clone();
        Ok(TimeChange {
            phi: Arc::new(move |t: f64| t.powf(p)),
            inv,
            dinv: Arc::new(move |t: f64| q * t.abs().powf(q - 1.0)),
            omega: Arc::new(move |d: f64| if q <= 1.0 { 2.0 * inv2(0.5 * d) } else { f64::INFINITY }),
            label: format!("t^{p}"),
        })
    }

    /// Numerical time change from φ on ℝ⁺, checked for monotonicity on [0, window].
    pub fn from_fn(phi: impl Fn(f64) -> f64 + Send + Sync + 'static, window: f64, samples: usize) -> Result<Self> {
        let phi: ScalarEval = Arc::new(phi);
        if phi(0.0).abs() > 1e-12 {
            return Err(Error::Config(format!("time change needs φ(0) = 0, got {}", phi(0.0))));
        }
        let n = samples.max(2);
        let mut prev = phi(0.0);
        for i in 1..=n {
            let t = window * i as f64 / n as f64;
            let v = phi(t);
            if !(v > prev) {
                return Err(Error::Config(format!("time change is not strictly increasing near t = {t}")));
            }
            prev = v;
        }
        let p1 = phi.clone();
        let inv: ScalarEval = Arc::new(move |y: f64| {
            let mut hi = 1.0;
            while p1(hi) < y {
                hi *= 2.0;
                if hi > 1e300 {
                    return f64::NAN;
                }
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let m = 0.5 * (lo + hi);
                if p1(m) < y {
                    lo = m
                } else {
                    hi = m
                }
                if hi - lo <= 1e-15 * hi.max(1e-300) {
                    break;
                }
            }
            0.5 * (lo + hi)
        });
        let (p2, i2) = (phi.clone(), inv.clone());
        let dinv: ScalarEval = Arc::new(move |y: f64| {
            let u = i2(y.abs());
            let h = 1e-6 * (1.0 + u);
            let lo = (u - h).max(0.0);
            1.0 / ((p2(u + h) - p2(lo)) / (u + h - lo))
        });
        let i3 = inv.clone();
        let omega: ScalarEval = Arc::new(move |d: f64| {
            // largest increment of the odd inverse over windows of length d inside [−window, window]
            let m = 256;
            (0..=m)
                .map(|k| {
                    let a = -window + (2.0 * window - d).max(0.0) * k as f64 / m as f64;
                    odd(&i3, a + d) - odd(&i3, a)
                })
                .fold(0.0, f64::max)
        });
        Ok(TimeChange { phi, inv, dinv, omega, label: "numeric".into() })
    }

    pub fn phi(&self, t: f64) -> f64 {
        odd(&self.phi, t)
    }

    pub fn inv(&self, t: f64) -> f64 {
        odd(&self.inv, t)
    }

    /// (φ⁻¹)′(t); even in t.
    pub fn dinv(&self, t: f64) -> f64 {
        (self.dinv)(t.abs())
    }

    /// Round-trip and monotonicity check on [lo, hi].
    pub fn validate(&self, lo: f64, hi: f64, n: usize) -> Result<()> {
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=n {
            let t = lo + (hi - lo) * i as f64 / n as f64;
            let u = self.inv(t);
            if !(u > prev) && i > 0 {
                return Err(Error::Config(format!("φ⁻¹ not monotone near t = {t}")));
            }
            let back = self.phi(u);
            if (back - t).abs() > 1e-8 * (1.0 + t.abs()) {
                return Err(Error::Config(format!("φ(φ⁻¹({t})) = {back}")));
            }
            prev = u;
        }
        Ok(())
    }
}

/// Drift, diffusion and growth/dissipation metadata of an SDE on ℝ^d.
#[derive(Clone)]
pub struct CoefficientSet {
    pub name: String,
    pub dim: usize,
    pub drift: FieldRef,
    pub diffusion: FieldRef,
    pub gamma1: f64,
    pub gamma2: f64,
    pub kappa: f64,
    pub envelope: DissipationEnvelope,
    /// Lipschitz constant of the (truncated) drift, when the user supplies one.
    pub lipschitz: Option<f64>,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("gamma1", &self.gamma1)
            .field("gamma2", &self.gamma2)
            .field("kappa", &self.kappa)
            .finish_non_exhaustive()
    }
}

impl CoefficientSet {
    pub fn new(
        name: impl Into<String>,
        drift: FieldRef,
        diffusion: FieldRef,
        envelope: DissipationEnvelope,
    ) -> Result<Self> {
        let dim = drift.dim();
        if dim == 0 || drift.out_len() != dim {
            return Err(Error::Config(format!("drift must map ℝ^{dim} to ℝ^{dim}")));
        }
        if diffusion.dim() != dim || diffusion.out_len() != dim * dim {
            return Err(Error::Config("diffusion must be a d×d matrix field".into()));
        }
        Ok(CoefficientSet {
            name: name.into(),
            dim,
            drift,
            diffusion,
            gamma1: 1.0,
            gamma2: 1.0,
            kappa: 1.0,
            envelope,
            lipschitz: None,
        })
    }

    pub fn with_growth(mut self, gamma1: f64, gamma2: f64, kappa: f64) -> Self {
        self.gamma1 = gamma1;
        self.gamma2 = gamma2;
        self.kappa = kappa;
        self
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn b(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut o = vec![0.0; self.dim];
        self.drift.eval(t, x, &mut o);
        o
    }

    pub fn sigma(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut o = vec![0.0; self.dim * self.dim];
        self.diffusion.eval(t, x, &mut o);
        o
    }

    /// a = σσ⊤ (row-major).
    pub fn a(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let s = self.sigma(t, x);
        let d = self.dim;
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                a[i * d + j] = (0..d).map(|k| s[i * d + k] * s[j * d + k]).sum();
            }
        }
        a
    }

    pub fn b1(&self, t: f64, x: f64) -> f64 {
        let mut o = [0.0];
        self.drift.eval(t, &[x], &mut o);
        o[0]
    }

    pub fn sigma1(&self, t: f64, x: f64) -> f64 {
        let mut o = [0.0];
        self.diffusion.eval(t, &[x], &mut o);
        o[0]
    }
}

/// Drift replaced by b(t, N x/|x|) outside the ball of radius N.
pub fn truncate_drift(c: &CoefficientSet, n: f64) -> Result<CoefficientSet> {
    if !(n > 0.0) {
        return arg(format!("truncation radius must be positive, got {n}"));
    }
    let env = &c.envelope;
    let lambda = env.lambda.clone();
    let (a, l) = (env.alpha.clone(), env.lambda.clone());
    let alpha = TimeFunction::new(move |t| a.eval(t).max(0.0) + l.eval(t));
    let alpha = match (env.alpha.has_breaks(), env.lambda.has_breaks()) {
        (false, false) => alpha,
        _ => {
            let (a2, l2) = (env.alpha.clone(), env.lambda.clone());
            alpha.with_breaks(move |s, t| merged_breaks(&[&a2, &l2], s, t))
        }
    };
    let g = env.g.clone();
    let mut out = c.clone();
    out.drift = Arc::new(Truncated { inner: c.drift.clone(), radius: n });
    out.envelope = DissipationEnvelope::new(alpha, lambda, move |d| 2.0 * g(d));
    out.name = format!("{}|N={n}", c.name);
    Ok(out)
}

/// Spatial mollification of drift and diffusion by the bump kernel of radius ε.
pub fn mollify(c: &CoefficientSet, eps: f64) -> Result<CoefficientSet> {
    if !(eps > 0.0 && eps <= 1.0) {
        return arg(format!("mollification radius must lie in (0, 1], got {eps}"));
    }
    if c.dim > 2 {
        return Err(Error::Unsupported(format!("mollification in dimension {}", c.dim)));
    }
    let (offsets, weights) = bump_kernel_rule(c.dim, eps, MOLLIFY_NODES);
    let mut out = c.clone();
    out.drift = Arc::new(Mollified { inner: c.drift.clone(), offsets: offsets.clone(), weights: weights.clone() });
    if !c.diffusion.state_independent() {
        out.diffusion = Arc::new(Mollified { inner: c.diffusion.clone(), offsets, weights });
    }
    if let Some(l) = c.lipschitz {
        // ⟨x, b^ε − b⟩ ≤ ℓε|x| ≤ ℓε(|x|² + 1)/2
        let shift = 0.5 * l * eps;
        let (a, lam, g) = (c.envelope.alpha.clone(), c.envelope.lambda.clone(), c.envelope.g.clone());
        let (ab, lb) = (a.clone(), lam.clone());
        let alpha = TimeFunction::new(move |t| a.eval(t) + shift).with_breaks(move |s, t| ab.breakpoints(s, t));
        let lambda = TimeFunction::new(move |t| lam.eval(t) + shift).with_breaks(move |s, t| lb.breakpoints(s, t));
        out.envelope = DissipationEnvelope::new(alpha, lambda, move |d| g(d) + 2.0 * shift * d);
    }
    out.name = format!("{}|eps={eps}", c.name);
    Ok(out)
}

/// Sup-norm drift error bound ℓ_N·ε of the mollified drift, if ℓ_N is known.
pub fn mollify_error_bound(c: &CoefficientSet, eps: f64) -> Option<f64> {
    c.lipschitz.map(|l| l * eps)
}

/// Coefficients of Y_t = X_{φ⁻¹(t)}.
pub fn reparameterize(c: &CoefficientSet, tc: &TimeChange) -> Result<CoefficientSet> {
    tc.validate(-100.0, 100.0, 2000)?;
    let env = &c.envelope;
    let scaled = |f: &TimeFunction| {
        let (f, tc2, tc3, fb) = (f.clone(), tc.clone(), tc.clone(), f.clone());
        TimeFunction::new(move |t| tc2.dinv(t) * f.eval(tc2.inv(t))).with_breaks(move |a, b| {
            let mut v: Vec<f64> = fb.breakpoints(tc3.inv(a), tc3.inv(b)).into_iter().map(|u| tc3.phi(u)).collect();
            if a < 0.0 && b > 0.0 {
                v.push(0.0);
            }
            v
        })
    };
    let (g, tco) = (env.g.clone(), tc.clone());
    let envelope = DissipationEnvelope::new(scaled(&env.alpha), scaled(&env.lambda), move |d| g((tco.omega)(d)));
    let mut out = c.clone();
    out.drift = Arc::new(Reparameterized { inner: c.drift.clone(), tc: tc.clone(), power: 1.0 });
    out.diffusion = Arc::new(Reparameterized { inner: c.diffusion.clone(), tc: tc.clone(), power: 0.5 });
    out.envelope = envelope;
    out.name = format!("{}∘{}", c.name, tc.label);
    Ok(out)
}

/// ∫_s^t α_r dr.
pub fn dissipation_integral(env: &DissipationEnvelope, s: f64, t: f64) -> Result<f64> {
    env.integral(s, t)
}

/// Two-time parent coefficient b̃(t₁, t₂, x).
pub trait ParentField: Send + Sync {
    fn dim(&self) -> usize;
    fn out_len(&self) -> usize;
    fn eval(&self, t1: f64, t2: f64, x: &[f64], out: &mut [f64]);
    /// The one-time field v ↦ b̃(v + r₁, v + r₂, ·).
    fn shifted(self: Arc<Self>, r1: f64, r2: f64) -> FieldRef;
}

pub type TwoTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// One-dimensional parent Σ_k c_k(t₁, t₂) x^k.
pub struct ParentPoly1d {
    pub coefs: Vec<TwoTimeFn>,
}

impl ParentField for ParentPoly1d {
    fn dim(&self) -> usize {
        1
    }
    fn out_len(&self) -> usize {
        1
    }
    fn eval(&self, t1: f64, t2: f64, x: &[f64], out: &mut [f64]) {
        let mut acc = 0.0;
        for c in self.coefs.iter().rev() {
            acc = acc * x[0] + c(t1, t2);
        }
        out[0] = acc;
    }
    fn shifted(self: Arc<Self>, r1: f64, r2: f64) -> FieldRef {
        let coefs = self
            .coefs
            .iter()
            .map(|c| {
                let c = c.clone();
                TimeFunction::new(move |v| c(v + r1, v + r2))
            })
            .collect();
        Arc::new(Poly1d::new(coefs))
    }
}

/// Parent with periods τ₁, τ₂ (reciprocals declared rationally independent).
#[derive(Clone)]
pub struct QuasiPeriodicParent {
    pub name: String,
    pub tau1: f64,
    pub tau2: f64,
    pub drift: Arc<dyn ParentField>,
    pub diffusion: Arc<dyn ParentField>,
    pub alpha: TwoTimeFn,
    pub lambda: TwoTimeFn,
    pub gamma1: f64,
    pub gamma2: f64,
    pub kappa: f64,
    pub g: ScalarEval,
}

impl fmt::Debug for QuasiPeriodicParent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuasiPeriodicParent")
            .field("name", &self.name)
            .field("tau1", &self.tau1)
            .field("tau2", &self.tau2)
            .finish_non_exhaustive()
    }
}

impl QuasiPeriodicParent {
    pub fn dim(&self) -> usize {
        self.drift.dim()
    }

    /// Coefficients of K^{r₁,r₂}: v ↦ b̃(v + r₁, v + r₂, ·).
    pub fn shifted(&self, r1: f64, r2: f64) -> CoefficientSet {
        let (a, l) = (self.alpha.clone(), self.lambda.clone());
        let env = DissipationEnvelope {
            alpha: TimeFunction::new(move |v| a(v + r1, v + r2)),
            lambda: TimeFunction::new(move |v| l(v + r1, v + r2)),
            g: self.g.clone(),
            cache: Arc::default(),
        };
        CoefficientSet {
            name: format!("{}[{r1:.4},{r2:.4}]", self.name),
            dim: self.dim(),
            drift: self.drift.clone().shifted(r1, r2),
            diffusion: self.diffusion.clone().shifted(r1, r2),
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            kappa: self.kappa,
            envelope: env,
            lipschitz: None,
        }
    }

    /// Base coefficients b(t, x) = b̃(t, t, x).
    pub fn diagonal(&self) -> CoefficientSet {
        let mut c = self.shifted(0.0, 0.0);
        c.name = self.name.clone();
        c
    }

    /// (1/(τ₁τ₂)) ∫₀^{τ₁}∫₀^{τ₂} α̃ by tensor Gauss–Legendre on `panels`² panels.
    pub fn torus_average_alpha(&self, panels: usize) -> f64 {
        let rule = GaussRule::legendre(16);
        let (h1, h2) = (self.tau1 / panels as f64, self.tau2 / panels as f64);
        let mut acc = 0.0;
        for i in 0..panels {
            for j in 0..panels {
                let (a1, a2) = (i as f64 * h1, j as f64 * h2);
                for (u, wu) in rule.mapped(a1, a1 + h1) {
                    for (v, wv) in rule.mapped(a2, a2 + h2) {
                        acc += wu * wv * (self.alpha)(u, v);
                    }
                }
            }
        }
        acc / (self.tau1 * self.tau2)
    }
}

/// Sampling grid for the assumption screen; x-grid is tensor product in d = 2.
#[derive(Debug, Clone)]
pub struct SamplingGrid {
    pub t_range: (f64, f64),
    pub nt: usize,
    pub x_range: (f64, f64),
    pub nx: usize,
}

#[derive(Debug, Clone, Default)]
pub struct AssumptionReport {
    /// max of λ_max(σσ⊤) − Γ₁.
    pub ellipticity_upper: f64,
    /// max of ‖σ(x) − σ(y)‖ − Γ₁|x − y| over neighbouring grid points.
    pub sigma_lipschitz: f64,
    /// max of |b| − Γ₂(1 + |x|^κ).
    pub growth: f64,
    /// max of ⟨x, b⟩ − (α|x|² + Λ).
    pub coercivity: f64,
    /// max of ∫_s^t (α⁺ + Λ) − g(t − s).
    pub envelope: f64,
    /// Time intervals on which λ_min(σσ⊤) < 1/Γ₁ somewhere in x.
    pub degenerate_intervals: Vec<(f64, f64)>,
    /// Largest sampled (1/T)∫_{t₁−T}^{t₁} α over the second half of the horizon.
    pub limsup_alpha_average: f64,
}

/// Slack allowed in the screened inequalities.
pub const SCREEN_TOL: f64 = 1e-9;

impl AssumptionReport {
    pub fn regularity_ok(&self) -> bool {
        self.ellipticity_upper <= SCREEN_TOL
            && self.sigma_lipschitz <= SCREEN_TOL
            && self.growth <= SCREEN_TOL
            && self.coercivity <= SCREEN_TOL
            && self.envelope <= 1e-6
    }

    pub fn nondegenerate(&self) -> bool {
        self.degenerate_intervals.is_empty()
    }

    pub fn dissipative_on_average(&self) -> bool {
        self.limsup_alpha_average < -SCREEN_TOL
    }

    pub fn all_pass(&self) -> bool {
        self.regularity_ok() && self.nondegenerate() && self.dissipative_on_average()
    }
}

fn eig_sym(a: &[f64], d: usize) -> (f64, f64) {
    match d {
        1 => (a[0], a[0]),
        2 => {
            let (p, q, r) = (a[0], 0.5 * (a[1] + a[2]), a[3]);
            let m = 0.5 * (p + r);
            let s = (0.25 * (p - r) * (p - r) + q * q).sqrt();
            (m - s, m + s)
        }
        _ => {
            let m = nalgebra::DMatrix::from_row_slice(d, d, a);
            let e = nalgebra::SymmetricEigen::new(m).eigenvalues;
            (e.min(), e.max())
        }
    }
}

/// Screen the regularity, growth, coercivity, envelope, non-degeneracy and average-dissipation
/// inequalities on a grid. Violations are reported, never raised.
pub fn verify_assumptions(c: &CoefficientSet, grid: &SamplingGrid) -> Result<AssumptionReport> {
    let d = c.dim;
    if grid.nt < 2 || grid.nx < 2 || grid.t_range.0 >= grid.t_range.1 || grid.x_range.0 >= grid.x_range.1 {
        return arg("sampling grid needs nt, nx ≥ 2 and nondegenerate ranges");
    }
    let ts: Vec<f64> = (0..grid.nt)
        .map(|i| grid.t_range.0 + (grid.t_range.1 - grid.t_range.0) * i as f64 / (grid.nt - 1) as f64)
        .collect();
    let xs1: Vec<f64> = (0..grid.nx)
        .map(|i| grid.x_range.0 + (grid.x_range.1 - grid.x_range.0) * i as f64 / (grid.nx - 1) as f64)
        .collect();
    let pts: Vec<Vec<f64>> = match d {
        1 => xs1.iter().map(|&x| vec![x]).collect(),
        2 => xs1.iter().flat_map(|&x| xs1.iter().map(move |&y| vec![x, y])).collect(),
        _ => return Err(Error::Unsupported(format!("assumption screen in dimension {d}"))),
    };
    let mut rep = AssumptionReport {
        ellipticity_upper: f64::NEG_INFINITY,
        sigma_lipschitz: f64::NEG_INFINITY,
        growth: f64::NEG_INFINITY,
        coercivity: f64::NEG_INFINITY,
        envelope: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut degenerate_at = Vec::with_capacity(ts.len());
    for &t in &ts {
        let (al, la) = (c.envelope.alpha.eval(t), c.envelope.lambda.eval(t));
        let mut deg = false;
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        for x in &pts {
            let b = c.b(t, x);
            let s = c.sigma(t, x);
            let a = c.a(t, x);
            let (lmin, lmax) = eig_sym(&a, d);
            let r2: f64 = x.iter().map(|v| v * v).sum();
            let r = r2.sqrt();
            rep.ellipticity_upper = rep.ellipticity_upper.max(lmax - c.gamma1);
            if lmin < 1.0 / c.gamma1 - SCREEN_TOL {
                deg = true;
            }
            let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            rep.growth = rep.growth.max(bn - c.gamma2 * (1.0 + r.powf(c.kappa)));
            let xb: f64 = x.iter().zip(&b).map(|(u, v)| u * v).sum();
            rep.coercivity = rep.coercivity.max(xb - (al * r2 + la));
            if let Some((px, ps)) = &prev {
                let dx = px.iter().zip(x).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
                let ds = ps.iter().zip(&s).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
                rep.sigma_lipschitz = rep.sigma_lipschitz.max(ds - c.gamma1 * dx);
            }
            prev = Some((x.clone(), s));
        }
        degenerate_at.push(deg);
    }
    // merge degenerate sample times into intervals
    let mut i = 0;
    while i < ts.len() {
        if degenerate_at[i] {
            let st = i;
            while i + 1 < ts.len() && degenerate_at[i + 1] {
                i += 1;
            }
            rep.degenerate_intervals.push((ts[st], ts[i]));
        }
        i += 1;
    }
    let (t0, t1) = grid.t_range;
    let horizon = t1 - t0;
    let lags = [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 0.25 * horizon, horizon];
    for &s in ts.iter().step_by((ts.len() / 16).max(1)) {
        for &lag in &lags {
            let t = s + lag;
            if t > t1 + 1e-12 {
                continue;
            }
            let v = c.envelope.alpha_plus_lambda_integral(s, t)?;
            rep.envelope = rep.envelope.max(v - (c.envelope.g)(t - s));
        }
    }
    let mut best = f64::NEG_INFINITY;
    for k in 0..=32 {
        let len = 0.5 * horizon * (1.0 + k as f64 / 32.0);
        best = best.max(c.envelope.integral(t1 - len, t1)? / len);
    }
    rep.limsup_alpha_average = best;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn double_well() -> CoefficientSet {
        let drift = Arc::new(Poly1d::new(vec![
            TimeFunction::constant(0.0),
            TimeFunction::constant(1.0),
            TimeFunction::constant(0.0),
            TimeFunction::constant(-1.0),
        ]));
        CoefficientSet::new("dw", drift, constant_diffusion(1, 1.0), DissipationEnvelope::constant(-2.0, 4.0))
            .unwrap()
            .with_growth(1.0, 2.0, 3.0)
    }

    #[test]
    fn truncation_examples() {
        let c = truncate_drift(&double_well(), 2.0).unwrap();
        assert_eq!(c.b1(0.0, 3.0), -6.0);
        assert_eq!(c.b1(0.0, 1.0), 0.0);
        assert_eq!(c.b1(0.0, -3.0), 6.0);
        let mut out = [0.0; 2];
        c.drift.eval_batch(0.0, &[3.0, 1.0], &mut out);
        assert_eq!(out, [-6.0, 0.0]);
        assert!(truncate_drift(&double_well(), 0.0).is_err());
    }

    #[test]
    fn truncation_idempotent_and_nested() {
        let c = double_well();
        let t1 = truncate_drift(&c, 2.0).unwrap();
        let t2 = truncate_drift(&t1, 2.0).unwrap();
        let t3 = truncate_drift(&t1, 5.0).unwrap();
        for i in 0..=200 {
            let x = -10.0 + 0.1 * i as f64;
            assert_eq!(t1.b1(0.0, x), t2.b1(0.0, x));
            if x.abs() <= 2.0 {
                assert_eq!(t3.b1(0.0, x), c.b1(0.0, x));
            }
        }
    }

    #[test]
    fn mollify_linear_and_constant() {
        let drift = Arc::new(Poly1d::new(vec![TimeFunction::constant(0.0), TimeFunction::constant(1.0)]));
        let c = CoefficientSet::new("lin", drift, constant_diffusion(1, 1.0), DissipationEnvelope::constant(1.0, 0.0)).unwrap();
        let m = mollify(&c, 0.3).unwrap();
        for x in [-2.0, 0.1, 5.0] {
            assert_relative_eq!(m.b1(1.0, x), x, epsilon = 1e-12);
            assert_relative_eq!(m.sigma1(1.0, x), 1.0, epsilon = 1e-15);
        }
        assert!(mollify(&c, 0.0).is_err());
        assert!(mollify(&c, 1.5).is_err());
    }

    #[test]
    fn mollify_matches_higher_order_rule() {
        let c = truncate_drift(&double_well(), 5.0).unwrap();
        let m = mollify(&c, 0.1).unwrap();
        let (offs, ws) = bump_kernel_rule(1, 0.1, 64);
        let oracle: f64 = offs.iter().zip(&ws).map(|(o, w)| w * c.b1(0.0, 0.5 - o)).sum();
        assert!((m.b1(0.0, 0.5) - oracle).abs() < 1e-8);
    }

    #[test]
    fn mollify_two_dims_preserves_affine() {
        let drift: FieldRef = Arc::new(FnField::new(2, 2, |_, x, o| {
            o[0] = 2.0 * x[0] - x[1];
            o[1] = x[1] + 1.0;
        }));
        let c = CoefficientSet::new("aff", drift, constant_diffusion(2, 1.0), DissipationEnvelope::constant(2.0, 1.0)).unwrap();
        let m = mollify(&c, 0.5).unwrap();
        let b = m.b(0.0, &[0.3, -0.7]);
        assert_relative_eq!(b[0], 1.3, epsilon = 1e-12);
        assert_relative_eq!(b[1], 0.3, epsilon = 1e-12);
    }

    #[test]
    fn identity_reparameterization() {
        let c = double_well();
        let r = reparameterize(&c, &TimeChange::identity()).unwrap();
        for x in [-1.5, 0.0, 0.7] {
            assert_eq!(r.b1(3.0, x), c.b1(3.0, x));
            assert_eq!(r.sigma1(3.0, x), c.sigma1(3.0, x));
        }
    }

    #[test]
    fn power_time_change_round_trip() {
        let tc = TimeChange::power(1.5).unwrap();
        tc.validate(-50.0, 50.0, 1000).unwrap();
        assert_relative_eq!(tc.inv(-8.0), -4.0, epsilon = 1e-12);
        let num = TimeChange::from_fn(|t| t.powf(1.5), 100.0, 1000).unwrap();
        assert_relative_eq!(num.inv(8.0), 4.0, epsilon = 1e-9);
        assert_relative_eq!(num.dinv(8.0), tc.dinv(8.0), epsilon = 1e-6);
        assert!(TimeChange::from_fn(|t: f64| t.sin(), 10.0, 100).is_err());
    }

    #[test]
    fn dissipation_integral_examples() {
        let env = DissipationEnvelope::constant(-1.0, 0.0);
        assert_eq!(dissipation_integral(&env, 0.0, 2.0).unwrap(), -2.0);
        assert!(dissipation_integral(&env, 2.0, 0.0).is_err());
        let env = DissipationEnvelope::new(TimeFunction::new(f64::cos), TimeFunction::constant(0.0), |d| d);
        assert!(env.integral(0.0, 2.0 * std::f64::consts::PI).unwrap().abs() < 1e-9);
        assert_relative_eq!(env.integral(-7.3, 12.1).unwrap(), 12.1f64.sin() - (-7.3f64).sin(), epsilon = 1e-8);
    }

    #[test]
    fn exp_weighted_constant_case() {
        let env = DissipationEnvelope::constant(-2.0, 9.0);
        let w = TimeFunction::constant(19.0);
        let v = env.exp_weighted(0.0, 5.0, &w).unwrap();
        assert_relative_eq!(v, 19.0 * (1.0 - (-20f64).exp()) / 4.0, epsilon = 1e-10);
        let tail = env.exp_weighted_tail(3.0, &w, 1e-12, 1e4).unwrap();
        assert_relative_eq!(tail, 19.0 / 4.0, epsilon = 1e-10);
        let flat = DissipationEnvelope::constant(0.0, 0.0);
        assert!(matches!(flat.exp_weighted_tail(0.0, &w, 1e-10, 500.0), Err(Error::Divergent(_))));
    }

    #[test]
    fn screen_flags_zero_drift_average() {
        let drift: FieldRef = Arc::new(Poly1d::new(vec![]));
        let c = CoefficientSet::new("zero", drift, constant_diffusion(1, 1.0), DissipationEnvelope::constant(0.0, 0.0)).unwrap();
        let rep = verify_assumptions(
            &c,
            &SamplingGrid { t_range: (-20.0, 0.0), nt: 21, x_range: (-5.0, 5.0), nx: 21 },
        )
        .unwrap();
        assert!(rep.regularity_ok());
        assert_eq!(rep.limsup_alpha_average, 0.0);
        assert!(!rep.dissipative_on_average());
    }
}
