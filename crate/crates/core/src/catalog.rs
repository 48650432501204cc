//! Built-in example families.

use crate::coefficients::{
    constant_diffusion, CoefficientSet, DissipationEnvelope, ParentPoly1d, Poly1d, QuasiPeriodicParent,
    TimeFunction, TwoTimeFn,
};
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

#[inline]
pub fn sin_plus(t: f64) -> f64 {
    t.sin().max(0.0)
}

/// Where an expected value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    /// Follows by direct substitution or a closed-form computation.
    ClosedForm,
    /// Stated in the source literature for the example.
    Published,
    /// Obtained from an independent numerical oracle.
    Computed,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::ClosedForm => "closed-form",
            Basis::Published => "published",
            Basis::Computed => "computed",
        })
    }
}

#[derive(Debug, Clone)]
pub struct KnownTruth {
    pub label: &'static str,
    pub expected: String,
    pub basis: Basis,
}

fn truth(label: &'static str, expected: impl Into<String>, basis: Basis) -> KnownTruth {
    KnownTruth { label, expected: expected.into(), basis }
}

/// Numeric parameters by name, with defaults supplied by the family.
#[derive(Debug, Clone, Default)]
pub struct Params(pub BTreeMap<String, f64>);

impl Params {
    pub fn get(&self, key: &str, default: f64) -> f64 {
        self.0.get(key).copied().unwrap_or(default)
    }

    pub fn with(mut self, key: &str, v: f64) -> Self {
        self.0.insert(key.to_string(), v);
        self
    }
}

type Builder = fn(&Params) -> Result<CoefficientSet>;
type ParentBuilder = fn(&Params) -> Result<QuasiPeriodicParent>;

pub struct ExampleSpec {
    pub name: &'static str,
    pub summary: &'static str,
    pub defaults: &'static [(&'static str, f64)],
    build: Builder,
    parent: Option<ParentBuilder>,
    truths: fn(&Params) -> Vec<KnownTruth>,
}

impl ExampleSpec {
    fn merged(&self, p: &Params) -> Result<Params> {
        for k in p.0.keys() {
            if !self.defaults.iter().any(|(d, _)| d == k) {
                return Err(Error::Config(format!("example '{}' has no parameter '{k}'", self.name)));
            }
        }
        let mut m = Params::default();
        for (k, v) in self.defaults {
            m.0.insert(k.to_string(), p.get(k, *v));
        }
        Ok(m)
    }

    pub fn build(&self, p: &Params) -> Result<CoefficientSet> {
        (self.build)(&self.merged(p)?)
    }

    pub fn parent(&self, p: &Params) -> Result<Option<QuasiPeriodicParent>> {
        match self.parent {
            Some(f) => f(&self.merged(p)?).map(Some),
            None => Ok(None),
        }
    }

    pub fn truths(&self, p: &Params) -> Result<Vec<KnownTruth>> {
        Ok((self.truths)(&self.merged(p)?))
    }
}

fn poly(coefs: Vec<TimeFunction>) -> Arc<Poly1d> {
    Arc::new(Poly1d::new(coefs))
}

fn c(v: f64) -> TimeFunction {
    TimeFunction::constant(v)
}

/// Drift x − x³ + f(t), unit noise; x·b ≤ −2x² + |f|∞² + 4.
pub fn bpsv_with(name: &str, f: TimeFunction, f_sup: f64) -> Result<CoefficientSet> {
    let lam = f_sup * f_sup + 4.0;
    let drift = poly(vec![f, c(1.0), c(0.0), c(-1.0)]);
    Ok(CoefficientSet::new(name, drift, constant_diffusion(1, 1.0), DissipationEnvelope::constant(-2.0, lam))?
        .with_growth(1.0, 2.0 + f_sup, 3.0))
}

fn bpsv(p: &Params) -> Result<CoefficientSet> {
    let a = p.get("amplitude", 1.0);
    let w = p.get("omega", 1.0);
    bpsv_with("bpsv", TimeFunction::new(move |t| a * (w * t).cos()), a.abs())
}

fn bpsv_quasi(p: &Params) -> Result<CoefficientSet> {
    let a = p.get("amplitude", 1.0);
    bpsv_with("bpsv_quasi", TimeFunction::new(move |t| a * (t.cos() + (SQRT_2 * t).cos())), 2.0 * a.abs())
}

fn bpsv_almost(p: &Params) -> Result<CoefficientSet> {
    let a = p.get("amplitude", 1.0);
    bpsv_with(
        "bpsv_almost",
        TimeFunction::new(move |t| a * (1.0 / (2.0 + t.cos() + (SQRT_2 * t).cos())).sin()),
        a.abs(),
    )
}

fn ou(p: &Params) -> Result<CoefficientSet> {
    let (th, s) = (p.get("theta", 1.0), p.get("sigma", 1.0));
    let drift = poly(vec![c(0.0), c(-th)]);
    Ok(CoefficientSet::new("ou", drift, constant_diffusion(1, s), DissipationEnvelope::constant(-th, 0.0))?
        .with_growth((s * s).max(1.0).max(1.0 / (s * s)), th.abs().max(1e-12), 1.0)
        .with_lipschitz(th.abs()))
}

fn sin_plus_cubic(
    name: &str,
    scale: impl Fn(f64) -> f64 + Send + Sync + Copy + 'static,
    breaks: impl Fn(f64, f64) -> Vec<f64> + Send + Sync + Copy + 'static,
    alpha_k: f64,
    lambda: f64,
    sigma: TimeFunction,
) -> Result<CoefficientSet> {
    let cube = TimeFunction::new(move |t| -scale(t)).with_breaks(breaks);
    let drift = poly(vec![c(0.0), c(1.0), c(0.0), cube]);
    let alpha = TimeFunction::new(move |t| 1.0 - alpha_k * scale(t)).with_breaks(breaks);
    let env = DissipationEnvelope::new(alpha, c(lambda), move |d| (1.0 + lambda) * d);
    let diffusion = if let Some(v) = sigma.as_constant() {
        constant_diffusion(1, v)
    } else {
        poly(vec![sigma])
    };
    Ok(CoefficientSet::new(name, drift, diffusion, env)?.with_growth(1.0, 1.0, 3.0))
}

fn pi_breaks(a: f64, b: f64) -> Vec<f64> {
    let (k0, k1) = ((a / PI).floor() as i64, (b / PI).ceil() as i64);
    (k0..=k1).map(|k| k as f64 * PI).filter(|&p| p > a && p < b).collect()
}

/// Kinks of sin⁺(√|t|): t = ±(kπ)².
pub fn sqrt_breaks(a: f64, b: f64) -> Vec<f64> {
    let m = a.abs().max(b.abs()).sqrt() / PI + 1.0;
    let mut v = Vec::new();
    for k in 0..=(m as i64) {
        let p = (k as f64 * PI).powi(2);
        for q in [p, -p] {
            if q > a && q < b {
                v.push(q);
            }
        }
    }
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn sin_plus_double_well(_: &Params) -> Result<CoefficientSet> {
    sin_plus_cubic("sin_plus_double_well", sin_plus, pi_breaks, 2.0 * PI, PI * PI, c(1.0))
}

fn sin_plus_degenerate(_: &Params) -> Result<CoefficientSet> {
    let sigma = TimeFunction::new(|t| sin_plus(0.25 * t)).with_periodic_breaks(0.0, 4.0 * PI);
    sin_plus_cubic("sin_plus_degenerate", sin_plus, pi_breaks, 2.0 * PI, PI * PI, sigma)
}

fn sqrt_scale(t: f64) -> f64 {
    sin_plus(t.abs().sqrt())
}

fn sin_sqrt_double_well(_: &Params) -> Result<CoefficientSet> {
    sin_sqrt(c(1.0), "sin_sqrt_double_well")
}

fn sin_sqrt_degenerate(_: &Params) -> Result<CoefficientSet> {
    sin_sqrt(TimeFunction::new(sqrt_scale).with_breaks(sqrt_breaks), "sin_sqrt_degenerate")
}

fn sin_sqrt(sigma: TimeFunction, name: &str) -> Result<CoefficientSet> {
    sin_plus_cubic(name, sqrt_scale, sqrt_breaks, 16.0, 64.0, sigma)
}

/// f_ε: −1 on [−i² − i^ε, −i²], 1/i on (−(i+1)², −i² − i^ε), i ≥ 1; −1 for t > −1.
pub fn f_eps(eps: f64) -> TimeFunction {
    TimeFunction::new(move |t| {
        if t > -1.0 {
            return -1.0;
        }
        let i = (-t).sqrt().floor();
        // t ∈ [−(i+1)², −i²]; the endpoint −(i+1)² belongs to the next block's −1 piece
        let i = if -t >= (i + 1.0).powi(2) { i + 1.0 } else { i };
        if t >= -i * i - i.powf(eps) {
            -1.0
        } else {
            1.0 / i
        }
    })
    .with_breaks(move |a, b| f_eps_breaks(eps, a, b))
}

pub fn f_eps_breaks(eps: f64, a: f64, b: f64) -> Vec<f64> {
    let mut v = Vec::new();
    if a < -1.0 && b > -1.0 {
        v.push(-1.0);
    }
    let lo = (-a).max(0.0).sqrt().ceil() as i64 + 1;
    let hi = ((-b).max(1.0).sqrt().floor() as i64 - 1).max(1);
    for i in hi..=lo {
        let fi = i as f64;
        for p in [-fi * fi, -fi * fi - fi.powf(eps)] {
            if p > a && p < b {
                v.push(p);
            }
        }
    }
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn linear_f_eps(p: &Params) -> Result<CoefficientSet> {
    let eps = p.get("eps", 0.5);
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Config(format!("linear_f_eps needs eps in (0, 1), got {eps}")));
    }
    let f = f_eps(eps);
    let drift = poly(vec![c(0.0), f.clone()]);
    let env = DissipationEnvelope::new(f, c(0.0), |d| d);
    Ok(CoefficientSet::new("linear_f_eps", drift, constant_diffusion(1, 1.0), env)?
        .with_growth(1.0, 1.0, 1.0)
        .with_lipschitz(1.0))
}

fn ou_t_eps(p: &Params) -> Result<CoefficientSet> {
    let eps = p.get("eps", 0.5);
    if !(eps > -1.0) {
        return Err(Error::Config(format!("ou_t_eps needs eps > -1, got {eps}")));
    }
    let rate = TimeFunction::new(move |t: f64| -t.abs().powf(eps));
    let drift = poly(vec![c(0.0), rate.clone()]);
    let diffusion = poly(vec![TimeFunction::new(move |t: f64| t.abs().powf(0.5 * eps))]);
    let env = DissipationEnvelope::new(rate, c(0.0), |_| 0.0);
    Ok(CoefficientSet::new("ou_t_eps", drift, diffusion, env)?.with_growth(1.0, 1.0, 1.0))
}

fn quasi_parent_double_well(p: &Params) -> Result<QuasiPeriodicParent> {
    let (c1, c2) = (p.get("c1", 0.5), p.get("c2", 0.5));
    let (w1, w2) = (p.get("w1", 1.0), p.get("w2", SQRT_2));
    if !(w1 > 0.0 && w2 > 0.0) {
        return Err(Error::Config("quasi_double_well needs positive frequencies".into()));
    }
    let lam = (c1.abs() + c2.abs()).powi(2) + 4.0;
    let k = |v: f64| -> TwoTimeFn { Arc::new(move |_, _| v) };
    let forcing: TwoTimeFn = Arc::new(move |t1, t2| c1 * (w1 * t1).cos() + c2 * (w2 * t2).cos());
    Ok(QuasiPeriodicParent {
        name: "quasi_double_well".into(),
        tau1: 2.0 * PI / w1,
        tau2: 2.0 * PI / w2,
        drift: Arc::new(ParentPoly1d { coefs: vec![forcing, k(1.0), k(0.0), k(-1.0)] }),
        diffusion: Arc::new(ParentPoly1d { coefs: vec![k(1.0)] }),
        alpha: k(-2.0),
        lambda: k(lam),
        gamma1: 1.0,
        gamma2: 2.0 + c1.abs() + c2.abs(),
        kappa: 3.0,
        g: Arc::new(move |d| lam * d),
    })
}

fn quasi_double_well(p: &Params) -> Result<CoefficientSet> {
    let mut c = quasi_parent_double_well(p)?.diagonal();
    c.name = "quasi_double_well".into();
    Ok(c)
}

fn quasi_parent_cubic(p: &Params) -> Result<QuasiPeriodicParent> {
    let (c1, c2, c3) = (p.get("c1", 1.0), p.get("c2", 1.0), p.get("c3", 1.0));
    let (w1, w2) = (p.get("w1", 1.0), p.get("w2", SQRT_2));
    if !(c1 > 0.0 && c2 > 0.0 && c3 > 0.0 && w1 > 0.0 && w2 > 0.0) {
        return Err(Error::Config("quasi_cubic needs positive constants and frequencies".into()));
    }
    let k = |v: f64| -> TwoTimeFn { Arc::new(move |_, _| v) };
    let a = (c1 + c3 + 1.0) * PI;
    let lam = (c1 + c3 + 1.0).powi(2) * PI * PI / c2 + c3;
    Ok(QuasiPeriodicParent {
        name: "quasi_cubic".into(),
        tau1: 2.0 * PI / w1,
        tau2: 2.0 * PI / w2,
        drift: Arc::new(ParentPoly1d {
            coefs: vec![
                k(c3),
                Arc::new(move |t1, _| c1 * (w1 * t1).sin().abs()),
                k(0.0),
                Arc::new(move |_, t2| -c2 * sin_plus(w2 * t2)),
            ],
        }),
        diffusion: Arc::new(ParentPoly1d { coefs: vec![k(1.0)] }),
        alpha: Arc::new(move |_, t2| c1 + c3 - a * sin_plus(w2 * t2)),
        lambda: k(lam),
        gamma1: 1.0,
        gamma2: c1 + c2 + c3,
        kappa: 3.0,
        g: Arc::new(move |d| (c1 + c3 + lam) * d),
    })
}

fn quasi_cubic(p: &Params) -> Result<CoefficientSet> {
    let par = quasi_parent_cubic(p)?;
    let w2 = 2.0 * PI / par.tau2;
    let mut c = par.diagonal();
    // the diagonal α inherits the sin⁺(w₂t) kinks
    let a = c.envelope.alpha.clone();
    let alpha = TimeFunction::new(move |t| a.eval(t)).with_periodic_breaks(0.0, PI / w2);
    c.envelope = DissipationEnvelope::new(alpha, c.envelope.lambda.clone(), {
        let g = par.g.clone();
        move |d| g(d)
    });
    c.name = "quasi_cubic".into();
    Ok(c)
}

fn no_truths(_: &Params) -> Vec<KnownTruth> {
    Vec::new()
}

pub static CATALOG: &[ExampleSpec] = &[
    ExampleSpec {
        name: "ou",
        summary: "Ornstein–Uhlenbeck dX = −θX dt + σ dW",
        defaults: &[("theta", 1.0), ("sigma", 1.0)],
        build: ou,
        parent: None,
        truths: |p| {
            let (th, s) = (p.get("theta", 1.0), p.get("sigma", 1.0));
            vec![truth("invariant variance", format!("{}", s * s / (2.0 * th)), Basis::ClosedForm)]
        },
    },
    ExampleSpec {
        name: "bpsv",
        summary: "double well x − x³ + C cos(ωt), unit noise",
        defaults: &[("amplitude", 1.0), ("omega", 1.0)],
        build: bpsv,
        parent: None,
        truths: |p| {
            let a = p.get("amplitude", 1.0);
            vec![
                truth("dissipation", format!("x·b ≤ −2x² + {}", a * a + 4.0), Basis::Published),
                truth("convergence", "geometric (exponent 1)", Basis::Published),
                truth("m_t", format!("{}", (2.0 * (a * a + 4.0) + 1.0) / 4.0), Basis::ClosedForm),
            ]
        },
    },
    ExampleSpec {
        name: "bpsv_quasi",
        summary: "double well with forcing C(cos t + cos √2 t)",
        defaults: &[("amplitude", 1.0)],
        build: bpsv_quasi,
        parent: None,
        truths: |_| vec![truth("convergence", "geometric (exponent 1)", Basis::Published)],
    },
    ExampleSpec {
        name: "bpsv_almost",
        summary: "double well with almost-periodic forcing C sin(1/(2 + cos t + cos √2 t))",
        defaults: &[("amplitude", 1.0)],
        build: bpsv_almost,
        parent: None,
        truths: |_| vec![truth("convergence", "geometric (exponent 1)", Basis::Published)],
    },
    ExampleSpec {
        name: "sin_plus_double_well",
        summary: "x − sin⁺(t)x³, unit noise; periodic with period 2π",
        defaults: &[],
        build: sin_plus_double_well,
        parent: None,
        truths: |_| {
            vec![
                truth("∫ α over one period", format!("{}", -2.0 * PI), Basis::Published),
                truth("convergence", "geometric (exponent 1)", Basis::Published),
            ]
        },
    },
    ExampleSpec {
        name: "sin_plus_degenerate",
        summary: "x − sin⁺(t)x³ with noise sin⁺(t/4), degenerate on [−4π − 8kπ, −8kπ]",
        defaults: &[],
        build: sin_plus_degenerate,
        parent: None,
        truths: |_| vec![truth("period of the entrance measure", format!("{}", 8.0 * PI), Basis::Published)],
    },
    ExampleSpec {
        name: "sin_sqrt_double_well",
        summary: "x − sin⁺(√|t|)x³, unit noise; expanding intervals of growing length",
        defaults: &[],
        build: sin_sqrt_double_well,
        parent: None,
        truths: |_| {
            vec![
                truth("α on [S_k, T_k]", "≤ −7", Basis::Published),
                truth("partition ratio n^δ/n", "> 1/2", Basis::Published),
            ]
        },
    },
    ExampleSpec {
        name: "sin_sqrt_degenerate",
        summary: "x − sin⁺(√|t|)x³ with noise sin⁺(√|t|)",
        defaults: &[],
        build: sin_sqrt_degenerate,
        parent: None,
        truths: no_truths,
    },
    ExampleSpec {
        name: "linear_f_eps",
        summary: "dX = f_ε(t)X dt + dW with the block forcing f_ε; subgeometric",
        defaults: &[("eps", 0.5)],
        build: linear_f_eps,
        parent: None,
        truths: |p| {
            let e = p.get("eps", 0.5);
            vec![truth("convergence exponent", format!("{}", (1.0 + e) / 2.0), Basis::Published)]
        },
    },
    ExampleSpec {
        name: "ou_t_eps",
        summary: "dX = −|t|^ε X dt + |t|^{ε/2} dW; invariant N(0, 1/2)",
        defaults: &[("eps", 0.5)],
        build: ou_t_eps,
        parent: None,
        truths: |p| {
            let e = p.get("eps", 0.5);
            vec![
                truth("invariant variance", "0.5", Basis::Published),
                truth("convergence exponent", format!("{}", 1.0 + e), Basis::Published),
            ]
        },
    },
    ExampleSpec {
        name: "quasi_double_well",
        summary: "x − x³ + C₁cos(w₁t) + C₂cos(w₂t); quasi-periodic",
        defaults: &[("c1", 0.5), ("c2", 0.5), ("w1", 1.0), ("w2", SQRT_2)],
        build: quasi_double_well,
        parent: Some(quasi_parent_double_well),
        truths: |p| {
            let l = (p.get("c1", 0.5).abs() + p.get("c2", 0.5).abs()).powi(2) + 4.0;
            vec![truth("dissipation", format!("x·b ≤ −2x² + {l}"), Basis::Published)]
        },
    },
    ExampleSpec {
        name: "quasi_cubic",
        summary: "C₁|sin w₁t|x − C₂sin⁺(w₂t)x³ + C₃; not weakly dissipative",
        defaults: &[("c1", 1.0), ("c2", 1.0), ("c3", 1.0), ("w1", 1.0), ("w2", SQRT_2)],
        build: quasi_cubic,
        parent: Some(quasi_parent_cubic),
        truths: |p| {
            let (w1, w2) = (p.get("w1", 1.0), p.get("w2", SQRT_2));
            vec![truth("torus integral of α̃", format!("{}", -4.0 * PI * PI / (w1 * w2)), Basis::Published)]
        },
    },
];

pub fn lookup(name: &str) -> Result<&'static ExampleSpec> {
    CATALOG.iter().find(|e| e.name == name).ok_or_else(|| {
        let names: Vec<&str> = CATALOG.iter().map(|e| e.name).collect();
        Error::Config(format!("unknown example '{name}' (known: {})", names.join(", ")))
    })
}

pub fn build(name: &str, p: &Params) -> Result<CoefficientSet> {
    lookup(name)?.build(p)
}

/// Window endpoints of the √|t| example: S_k = −(5π/6 + 2kπ)², T_k = −(π/6 + 2kπ)².
pub fn sqrt_example_times(k: u32) -> (f64, f64) {
    let k = k as f64;
    (-(5.0 * PI / 6.0 + 2.0 * k * PI).powi(2), -(PI / 6.0 + 2.0 * k * PI).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{verify_assumptions, SamplingGrid};
    use approx::assert_relative_eq;

    #[test]
    fn names_unique_and_buildable() {
        for (i, e) in CATALOG.iter().enumerate() {
            assert!(CATALOG[i + 1..].iter().all(|o| o.name != e.name));
            let c = e.build(&Params::default()).unwrap();
            assert_eq!(c.dim, 1);
            assert!(c.b1(-3.3, 0.7).is_finite());
        }
        assert!(lookup("nope").is_err());
        assert!(lookup("bpsv").unwrap().build(&Params::default().with("bogus", 1.0)).is_err());
    }

    #[test]
    fn f_eps_pieces() {
        let f = f_eps(0.5);
        assert_eq!(f.eval(0.0), -1.0);
        assert_eq!(f.eval(-1.0), -1.0);
        assert_eq!(f.eval(-1.5), -1.0);
        assert_eq!(f.eval(-2.5), 1.0);
        assert_eq!(f.eval(-4.0), -1.0);
        assert_eq!(f.eval(-4.0 - 2f64.sqrt() + 1e-9), -1.0);
        assert_eq!(f.eval(-4.0 - 2f64.sqrt() - 1e-9), 0.5);
        assert_eq!(f.eval(-9.0), -1.0);
        assert_eq!(f.eval(-8.999), 0.5);
        let br = f_eps_breaks(0.5, -10.0, 0.0);
        for p in [-9.0, -4.0 - 2f64.sqrt(), -4.0, -2.0, -1.0] {
            assert!(br.iter().any(|b| (b - p).abs() < 1e-12), "{p} missing from {br:?}");
        }
    }

    #[test]
    fn sin_plus_period_integral() {
        let c = build("sin_plus_double_well", &Params::default()).unwrap();
        for t in [-13.0, -2.0, 0.5] {
            assert_relative_eq!(c.envelope.integral(t, t + 2.0 * PI).unwrap(), -2.0 * PI, epsilon = 1e-8);
        }
    }

    #[test]
    fn sqrt_example_alpha_bound() {
        let c = build("sin_sqrt_double_well", &Params::default()).unwrap();
        let (s1, t1) = sqrt_example_times(1);
        let v = c.envelope.integral(s1, t1).unwrap();
        assert!(v <= -7.0 * (t1 - s1), "{v}");
    }

    #[test]
    fn bpsv_screen_passes() {
        let c = build("bpsv", &Params::default()).unwrap();
        let rep = verify_assumptions(&c, &SamplingGrid { t_range: (-20.0, 0.0), nt: 81, x_range: (-5.0, 5.0), nx: 101 }).unwrap();
        assert!(rep.all_pass(), "{rep:?}");
    }

    #[test]
    fn degenerate_noise_reported() {
        let c = build("sin_plus_degenerate", &Params::default()).unwrap();
        let rep = verify_assumptions(&c, &SamplingGrid { t_range: (-40.0, 0.0), nt: 401, x_range: (-2.0, 2.0), nx: 5 }).unwrap();
        assert!(!rep.nondegenerate());
        // [−4π, 0] lies inside a reported interval
        assert!(rep.degenerate_intervals.iter().any(|&(a, b)| a <= -4.0 * PI + 0.1 && b >= -0.1));
        assert!(rep.regularity_ok(), "{rep:?}");
    }

    #[test]
    fn quasi_parents_periodic_and_diagonal() {
        for name in ["quasi_double_well", "quasi_cubic"] {
            let e = lookup(name).unwrap();
            let par = e.parent(&Params::default()).unwrap().unwrap();
            let base = e.build(&Params::default()).unwrap();
            let mut o1 = [0.0];
            let mut o2 = [0.0];
            for &(t1, t2, x) in &[(0.3, 1.7, -0.4), (5.0, -2.0, 1.3), (-7.1, 3.3, 0.0)] {
                par.drift.eval(t1, t2, &[x], &mut o1);
                par.drift.eval(t1 + par.tau1, t2, &[x], &mut o2);
                assert_relative_eq!(o1[0], o2[0], epsilon = 1e-12);
                par.drift.eval(t1, t2 + par.tau2, &[x], &mut o2);
                assert_relative_eq!(o1[0], o2[0], epsilon = 1e-12);
                par.drift.eval(t1, t1, &[x], &mut o1);
                assert_relative_eq!(o1[0], base.b1(t1, x), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn quasi_cubic_torus_average() {
        let par = lookup("quasi_cubic").unwrap().parent(&Params::default()).unwrap().unwrap();
        let avg = par.torus_average_alpha(16);
        assert_relative_eq!(avg * par.tau1 * par.tau2, -4.0 * PI * PI / SQRT_2, epsilon = 1e-6);
        let c = lookup("quasi_cubic").unwrap().build(&Params::default()).unwrap();
        let rep = verify_assumptions(&c, &SamplingGrid { t_range: (-400.0, 0.0), nt: 50, x_range: (-3.0, 3.0), nx: 7 }).unwrap();
        assert!(rep.dissipative_on_average());
    }
}
