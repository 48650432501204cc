//! Experiment configuration (TOML key-value tree) with per-command sections.
//!
//! Every field has a default, and the resolved configuration is echoed into each report.

use crate::catalog::{self, Params};
use crate::coefficients::{CoefficientSet, DissipationEnvelope, ExprField, TimeFunction};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::measures::GridSpec;
use crate::simulator::{Scheme, SimConfig};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Environment variable overriding the output directory.
pub const OUTPUT_ENV: &str = "ENTRANCE_OUT";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExampleRef {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

/// Coefficients given as expression strings in t, x (= x1), x2.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InlineCoefficients {
    #[serde(default = "one_usize")]
    pub dim: usize,
    pub drift: Vec<String>,
    /// Row-major d × d.
    pub diffusion: Vec<String>,
    pub alpha: String,
    pub lambda: String,
    #[serde(default = "one")]
    pub gamma1: f64,
    #[serde(default = "one")]
    pub gamma2: f64,
    #[serde(default = "one")]
    pub kappa: f64,
    /// g(Δ) = g_slope·Δ; sampled sup of α⁺ + Λ over [−100, 100] when absent.
    pub g_slope: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridOpts {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl GridOpts {
    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::line(self.lo, self.hi, self.n)
    }
}

impl Default for GridOpts {
    fn default() -> Self {
        GridOpts { lo: -4.0, hi: 4.0, n: 80 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateOpts {
    pub s: f64,
    pub t: f64,
    pub x0: Vec<f64>,
    pub paths: usize,
    pub step: f64,
    pub scheme: String,
    pub radius: Option<f64>,
    pub grid: GridOpts,
}

impl Default for SimulateOpts {
    fn default() -> Self {
        SimulateOpts { s: -10.0, t: 0.0, x0: vec![1.0], paths: 10_000, step: 0.01, scheme: "truncated-em".into(), radius: None, grid: GridOpts::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EntranceOpts {
    pub t: f64,
    /// Explicit start times; a geometric ladder t − 2ⁿΔ₀ when empty.
    pub starts: Vec<f64>,
    pub ladder: usize,
    pub delta0: f64,
    pub x0: Vec<f64>,
    pub paths: usize,
    pub step: f64,
    pub beta: f64,
    pub tol: f64,
    pub grid: GridOpts,
    /// Window for α(Δ) and its scan horizon.
    pub alpha_window: f64,
    pub alpha_horizon: f64,
}

impl Default for EntranceOpts {
    fn default() -> Self {
        EntranceOpts {
            t: 0.0,
            starts: Vec::new(),
            ladder: 6,
            delta0: 1.0,
            x0: vec![1.0],
            paths: 20_000,
            step: 0.01,
            beta: 0.1,
            tol: 0.1,
            grid: GridOpts { lo: -4.0, hi: 4.0, n: 40 },
            alpha_window: 1.0,
            alpha_horizon: 100.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ContractOpts {
    /// CSV schedule (t_prev,t_next,gamma,K,eta); the √|t| example partition when absent.
    pub schedule: Option<PathBuf>,
    pub blocks: u32,
    pub eta_bar: f64,
    pub delta: f64,
    #[serde(rename = "R")]
    pub big_r: Option<f64>,
    pub varpi: Option<f64>,
    pub gamma_star: Option<f64>,
    /// Uniform-in-time certificate from Δ-step constants, reported alongside.
    pub uniform: Option<UniformOpts>,
}

impl Default for ContractOpts {
    fn default() -> Self {
        ContractOpts { schedule: None, blocks: 4, eta_bar: 0.02, delta: 0.01, big_r: None, varpi: None, gamma_star: None, uniform: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct UniformOpts {
    pub step: f64,
    pub gamma: f64,
    pub h: f64,
    pub eta: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DensityOpts {
    pub s: f64,
    pub t: f64,
    pub x0: f64,
    pub lo: f64,
    pub hi: f64,
    pub dy: f64,
    pub dt: f64,
    /// Levels R of {|x|² ≤ R} for the minorization sweep.
    #[serde(rename = "R")]
    pub levels: Vec<f64>,
    pub rho_b: f64,
    pub starts: usize,
    pub calibrate: bool,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
}

impl Default for DensityOpts {
    fn default() -> Self {
        DensityOpts {
            s: 0.0,
            t: 1.0,
            x0: 0.0,
            lo: -6.0,
            hi: 6.0,
            dy: 0.01,
            dt: 1e-3,
            levels: vec![1.0, 4.0, 9.0],
            rho_b: 1.0,
            starts: 25,
            calibrate: true,
            x_range: [-3.0, 3.0],
            y_range: [-1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct QuasiOpts {
    /// (τ₁, τ₂); required.
    pub periods: Option<[f64; 2]>,
    pub n1: usize,
    pub n2: usize,
    pub paths: usize,
    pub step: f64,
    pub burn: f64,
    pub tol: f64,
    pub grid: GridOpts,
    pub birkhoff_horizon: f64,
    pub birkhoff_step: f64,
    pub birkhoff_tol: f64,
    pub push_time: f64,
    /// Joint TV allowed between the cylinder measure and its push-forward.
    pub probe_tol: f64,
}

impl Default for QuasiOpts {
    fn default() -> Self {
        QuasiOpts {
            periods: None,
            n1: 8,
            n2: 8,
            paths: 5_000,
            step: 0.01,
            burn: 10.0,
            tol: 0.15,
            grid: GridOpts { lo: -3.0, hi: 3.0, n: 30 },
            birkhoff_horizon: 1e4,
            birkhoff_step: 0.1,
            birkhoff_tol: 0.05,
            push_time: 1.0,
            probe_tol: 0.15,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output: PathBuf,
    /// Worker threads; 0 = one per core.
    pub workers: usize,
    pub example: Option<ExampleRef>,
    pub coefficients: Option<InlineCoefficients>,
    pub simulate: SimulateOpts,
    pub entrance: EntranceOpts,
    pub contract: ContractOpts,
    pub density: DensityOpts,
    pub quasi: QuasiOpts,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            output: PathBuf::from("out"),
            workers: 0,
            example: None,
            coefficients: None,
            simulate: SimulateOpts::default(),
            entrance: EntranceOpts::default(),
            contract: ContractOpts::default(),
            density: DensityOpts::default(),
            quasi: QuasiOpts::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        // relative file references resolve against the config file
        if let (Some(s), Some(dir)) = (cfg.contract.schedule.as_mut(), path.parent()) {
            if s.is_relative() {
                *s = dir.join(&*s);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    /// Output directory with the environment override applied.
    pub fn output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_ENV).map(PathBuf::from).unwrap_or_else(|| self.output.clone())
    }

    pub fn example_name(&self, default: &str) -> String {
        self.example.as_ref().map_or_else(|| default.to_string(), |e| e.name.clone())
    }

    pub fn params(&self) -> Params {
        Params(self.example.as_ref().map(|e| e.params.clone()).unwrap_or_default())
    }

    /// Inline coefficients when given, else the named example (or `default`).
    pub fn coefficients(&self, default: &str) -> Result<CoefficientSet> {
        match &self.coefficients {
            Some(ic) => ic.build(),
            None => catalog::build(&self.example_name(default), &self.params()),
        }
    }

    pub fn sim(&self, step: f64, paths: usize, scheme: &str, radius: Option<f64>) -> Result<SimConfig> {
        let mut s = SimConfig::new(step, paths, self.seed);
        s.scheme = scheme.parse::<Scheme>()?;
        s.radius = radius;
        s.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(s)
    }
}

fn parse_field(what: &str, src: &str) -> Result<Expr> {
    Expr::parse(src).map_err(|e| Error::Config(format!("{what}: {e}")))
}

impl InlineCoefficients {
    pub fn build(&self) -> Result<CoefficientSet> {
        let d = self.dim;
        if !(d == 1 || d == 2) {
            return Err(Error::Config(format!("coefficients.dim must be 1 or 2, got {d}")));
        }
        if self.drift.len() != d {
            return Err(Error::Config(format!("coefficients.drift needs {d} expressions, got {}", self.drift.len())));
        }
        if self.diffusion.len() != d * d {
            return Err(Error::Config(format!("coefficients.diffusion needs {} expressions, got {}", d * d, self.diffusion.len())));
        }
        let exprs = |v: &[String], what: &str| -> Result<Vec<Expr>> {
            v.iter().enumerate().map(|(i, s)| parse_field(&format!("coefficients.{what}[{i}]"), s)).collect()
        };
        let drift = ExprField::new(d, exprs(&self.drift, "drift")?)?;
        let diffusion = ExprField::new(d, exprs(&self.diffusion, "diffusion")?)?;
        let alpha = TimeFunction::from_expr(parse_field("coefficients.alpha", &self.alpha)?)
            .map_err(|e| Error::Config(format!("coefficients.alpha: {e}")))?;
        let lambda = TimeFunction::from_expr(parse_field("coefficients.lambda", &self.lambda)?)
            .map_err(|e| Error::Config(format!("coefficients.lambda: {e}")))?;
        let slope = self.g_slope.unwrap_or_else(|| {
            (0..=2000).map(|i| -100.0 + 0.1 * i as f64).map(|t| alpha.eval(t).max(0.0) + lambda.eval(t)).fold(0.0, f64::max)
        });
        let env = DissipationEnvelope::new(alpha, lambda, move |dt| slope * dt);
        Ok(CoefficientSet::new("inline", Arc::new(drift), Arc::new(diffusion), env)?.with_growth(self.gamma1, self.gamma2, self.kappa))
    }
}
