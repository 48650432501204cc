//! Experiment runner behind the `entrance` binary: subcommands, reports, CSV artifacts, exit codes.

use crate::catalog::{self, Basis, Params, CATALOG};
use crate::coefficients::{CoefficientSet, QuasiPeriodicParent};
use crate::config::{ExperimentConfig, GridOpts};
use crate::contraction::{
    analyze_partition, check_theorem_conditions, ct_constant, default_exponent_grid, fit_rate, load_schedule, lyapunov_factors,
    one_step_zeta, save_schedule, select_beta, sqrt_example_schedule, uniform_certificate, ScheduleEntry,
};
use crate::density::{calibrate_lower_bound, fp_solve, lower_bound_eval, minorization_sweep, Boundary, CalibrationOptions, FPGrid, MinorizationOptions};
use crate::entrance::{alpha_delta, estimate_entrance, geometric_ladder, m_t_integral, EntranceConfig};
use crate::error::Error;
use crate::measures::{GridSpec, LyapunovSpec};
use crate::quasiperiodic::{birkhoff_averages, cylinder_invariant, push_cylinder, screen_parent, CylinderFn, QuasiConfig, Torus, TorusGrid};
use crate::report::{fmt_num, Report, Section};
use crate::simulator::{check_moment_bound, push_ensemble, second_moment_bound, simulate_path_indexed, InitialLaw};
use clap::{Args, Parser, Subcommand};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "entrance", version, about = "Entrance measures of nonautonomous SDEs: simulation, certificates, densities")]
pub struct Cli {
    /// TOML experiment file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config file and ENTRANCE_OUT).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Push an ensemble from s to t and check the second-moment bound.
    Simulate(SimulateArgs),
    /// Estimate the entrance measure at t from a ladder of start times.
    Entrance(EntranceArgs),
    /// Contraction certificate for a partition schedule.
    Contract(ContractArgs),
    /// Fokker–Planck density, minorization sweep and lower-bound calibration.
    Density(DensityArgs),
    /// Quasi-periodic lift: cylinder invariant measure and Birkhoff averages.
    Quasi(QuasiArgs),
    /// Built-in example catalog.
    Examples {
        #[command(subcommand)]
        action: ExamplesCmd,
    },
}

#[derive(Debug, Subcommand)]
pub enum ExamplesCmd {
    List,
    /// Entrance estimate, rate fit and moment checks for one example.
    Run { name: String },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub example: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub t: Option<f64>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub scheme: Option<String>,
}

#[derive(Debug, Args)]
pub struct EntranceArgs {
    #[arg(long)]
    pub example: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub t: Option<f64>,
    #[arg(long)]
    pub ladder: Option<usize>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ContractArgs {
    /// CSV with columns t_prev,t_next,gamma,K,eta.
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long = "R")]
    pub big_r: Option<f64>,
    #[arg(long)]
    pub varpi: Option<f64>,
    #[arg(long)]
    pub gamma_star: Option<f64>,
    #[arg(long)]
    pub blocks: Option<u32>,
    #[arg(long)]
    pub eta_bar: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[arg(long)]
    pub example: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub t: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
    /// Skip the lower-bound calibration.
    #[arg(long)]
    pub no_calibrate: bool,
}

#[derive(Debug, Args)]
pub struct QuasiArgs {
    #[arg(long)]
    pub example: Option<String>,
    #[arg(long, num_args = 2, value_names = ["TAU1", "TAU2"])]
    pub periods: Option<Vec<f64>>,
    #[arg(long)]
    pub paths: Option<usize>,
}

/// One checked claim: observed value, acceptance rule, and where the expected value comes from.
#[derive(Debug, Clone)]
pub struct Assertion {
    pub name: String,
    pub observed: String,
    pub rule: String,
    pub basis: Basis,
    pub pass: bool,
}

impl Assertion {
    pub fn new(name: &str, observed: f64, rule: impl Into<String>, basis: Basis, pass: bool) -> Self {
        Assertion { name: name.into(), observed: fmt_num(observed), rule: rule.into(), basis, pass }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub report: Report,
    pub assertions: Vec<Assertion>,
    pub artifacts: Vec<PathBuf>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    fn check(&mut self, a: Assertion) {
        self.assertions.push(a);
    }

    pub fn render(&self) -> String {
        let mut s = self.report.to_string();
        s.push_str("\n[assertions]\n");
        for a in &self.assertions {
            let _ = writeln!(
                s,
                "{} = {} (observed {}; {}; basis {})",
                a.name,
                if a.pass { "PASS" } else { "FAIL" },
                a.observed,
                a.rule,
                a.basis
            );
        }
        if !self.artifacts.is_empty() {
            s.push_str("\n[artifacts]\n");
            for p in &self.artifacts {
                let _ = writeln!(s, "{}", p.display());
            }
        }
        s
    }
}

/// Either a configuration problem (exit 2) or a module failure at run time (exit 3).
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime { module: &'static str, err: Error },
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config: {m}"),
            Failure::Runtime { module, err } => write!(f, "{module}: {err}"),
        }
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Runtime { .. } => EXIT_RUNTIME,
        }
    }
}

type Run<T> = std::result::Result<T, Failure>;

fn cfg_err(e: Error) -> Failure {
    match e {
        Error::Config(m) => Failure::Config(m),
        other => Failure::Config(other.to_string()),
    }
}

/// Runtime errors keep their module name; configuration errors raised deep inside still exit 2.
fn in_mod(module: &'static str) -> impl Fn(Error) -> Failure {
    move |e| match e {
        Error::Config(m) => Failure::Config(m),
        err => Failure::Runtime { module, err },
    }
}

fn io(module: &'static str) -> impl Fn(std::io::Error) -> Failure {
    move |e| Failure::Runtime { module, err: Error::Io(e) }
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{}", out.render());
            let _ = std::io::stdout().flush();
            if out.passed() {
                EXIT_OK
            } else {
                EXIT_ASSERTION
            }
        }
        Err(f) => {
            eprintln!("error [{f}]");
            f.exit_code()
        }
    }
}

/// Resolve the configuration, run the command in its own worker pool, write report.txt.
pub fn run(cli: Cli) -> Run<Outcome> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).map_err(cfg_err)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    let out_root = cli.out.clone().unwrap_or_else(|| cfg.output_dir());
    let (label, section) = apply_overrides(&mut cfg, &cli.command)?;
    let dir = out_root.join(&label);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Failure::Runtime { module: "cli", err: Error::Numeric(format!("worker pool: {e}")) })?;
    let mut out = pool.install(|| -> Run<Outcome> {
        if let Command::Examples { action: ExamplesCmd::List } = &cli.command {
            return Ok(examples_list());
        }
        std::fs::create_dir_all(&dir).map_err(io("cli"))?;
        match &cli.command {
            Command::Simulate(_) => cmd_simulate(&cfg, &dir),
            Command::Entrance(_) => cmd_entrance(&cfg, &dir, "bpsv"),
            Command::Contract(_) => cmd_contract(&cfg, &dir),
            Command::Density(_) => cmd_density(&cfg, &dir),
            Command::Quasi(_) => cmd_quasi(&cfg, &dir),
            Command::Examples { action: ExamplesCmd::Run { name } } => cmd_example_run(&cfg, &dir, name),
            Command::Examples { .. } => unreachable!(),
        }
    })?;
    if let Some(sec) = section {
        out.report.sections.insert(0, inputs_section(&cfg, sec));
    }
    if !matches!(&cli.command, Command::Examples { action: ExamplesCmd::List }) {
        let path = dir.join("report.txt");
        out.artifacts.push(path.clone());
        std::fs::write(&path, out.render()).map_err(io("cli"))?;
    }
    Ok(out)
}

fn apply_overrides(cfg: &mut ExperimentConfig, cmd: &Command) -> Run<(String, Option<&'static str>)> {
    let set_example = |cfg: &mut ExperimentConfig, name: &Option<String>| {
        if let Some(n) = name {
            cfg.example = Some(crate::config::ExampleRef { name: n.clone(), params: Default::default() });
            cfg.coefficients = None;
        }
    };
    Ok(match cmd {
        Command::Simulate(a) => {
            set_example(cfg, &a.example);
            let o = &mut cfg.simulate;
            a.s.map(|v| o.s = v);
            a.t.map(|v| o.t = v);
            a.paths.map(|v| o.paths = v);
            a.step.map(|v| o.step = v);
            if let Some(s) = &a.scheme {
                o.scheme = s.clone();
            }
            ("simulate".into(), Some("simulate"))
        }
        Command::Entrance(a) => {
            set_example(cfg, &a.example);
            let o = &mut cfg.entrance;
            a.t.map(|v| o.t = v);
            a.ladder.map(|v| o.ladder = v);
            a.paths.map(|v| o.paths = v);
            a.step.map(|v| o.step = v);
            a.tol.map(|v| o.tol = v);
            ("entrance".into(), Some("entrance"))
        }
        Command::Contract(a) => {
            let o = &mut cfg.contract;
            if a.schedule.is_some() {
                o.schedule = a.schedule.clone();
            }
            a.delta.map(|v| o.delta = v);
            a.big_r.map(|v| o.big_r = Some(v));
            a.varpi.map(|v| o.varpi = Some(v));
            a.gamma_star.map(|v| o.gamma_star = Some(v));
            a.blocks.map(|v| o.blocks = v);
            a.eta_bar.map(|v| o.eta_bar = v);
            ("contract".into(), Some("contract"))
        }
        Command::Density(a) => {
            set_example(cfg, &a.example);
            let o = &mut cfg.density;
            a.s.map(|v| o.s = v);
            a.t.map(|v| o.t = v);
            a.x0.map(|v| o.x0 = v);
            if a.no_calibrate {
                o.calibrate = false;
            }
            ("density".into(), Some("density"))
        }
        Command::Quasi(a) => {
            set_example(cfg, &a.example);
            if let Some(p) = &a.periods {
                cfg.quasi.periods = Some([p[0], p[1]]);
            }
            a.paths.map(|v| cfg.quasi.paths = v);
            ("quasi".into(), Some("quasi"))
        }
        Command::Examples { action: ExamplesCmd::Run { name } } => {
            cfg.example = Some(crate::config::ExampleRef {
                name: name.clone(),
                params: cfg.example.as_ref().filter(|e| &e.name == name).map(|e| e.params.clone()).unwrap_or_default(),
            });
            cfg.coefficients = None;
            catalog::lookup(name).map_err(cfg_err)?;
            (format!("examples/{name}"), Some("entrance"))
        }
        Command::Examples { action: ExamplesCmd::List } => ("examples".into(), None),
    })
}

fn flatten(prefix: &str, v: &toml::Value, out: &mut Vec<(String, String)>) {
    match v {
        toml::Value::Table(t) => {
            for (k, x) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Resolved inputs: globals, the model source and the command's own section, every default spelled out.
fn inputs_section(cfg: &ExperimentConfig, command: &str) -> Section {
    let mut sec = Section::new("inputs");
    let Ok(toml::Value::Table(t)) = toml::Value::try_from(cfg) else {
        return sec;
    };
    let mut rows = Vec::new();
    for (k, v) in &t {
        let keep = matches!(k.as_str(), "seed" | "output" | "workers" | "example" | "coefficients") || k == command;
        if keep {
            flatten(k, v, &mut rows);
        }
    }
    if cfg.example.is_none() && cfg.coefficients.is_none() {
        rows.push(("example".into(), "(default)".into()));
    }
    for (k, v) in rows {
        sec = sec.kv(&k, v);
    }
    sec
}

fn examples_list() -> Outcome {
    let mut r = Report::new("example catalog");
    for e in CATALOG {
        let defaults: Vec<String> = e.defaults.iter().map(|(k, v)| format!("{k}={v}")).collect();
        r.push(
            Section::new(e.name)
                .kv("summary", e.summary)
                .kv("params", if defaults.is_empty() { "-".into() } else { defaults.join(", ") })
                .kv("quasi_periodic_parent", e.parent(&Params::default()).ok().flatten().is_some()),
        );
    }
    Outcome { report: r, ..Default::default() }
}

fn grid_for(g: &GridOpts, dim: usize) -> Run<GridSpec> {
    GridSpec::new(vec![g.lo; dim], vec![g.hi; dim], vec![g.n; dim]).map_err(cfg_err)
}

fn start_point(x0: &[f64], dim: usize, field: &str) -> Run<Vec<f64>> {
    match x0.len() {
        n if n == dim => Ok(x0.to_vec()),
        1 => Ok(vec![x0[0]; dim]),
        n => Err(Failure::Config(format!("{field}: expected {dim} coordinates, got {n}"))),
    }
}

fn write_csv_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Run<()> {
    let csv_err = |e: csv::Error| Failure::Runtime { module: "cli", err: Error::Numeric(format!("{}: {e}", path.display())) };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush().map_err(io("cli"))
}

fn artifact(out: &mut Outcome, dir: &Path, name: &str) -> PathBuf {
    let p = dir.join(name);
    out.artifacts.push(p.clone());
    p
}

fn cmd_simulate(cfg: &ExperimentConfig, dir: &Path) -> Run<Outcome> {
    let o = &cfg.simulate;
    let c = cfg.coefficients("bpsv").map_err(cfg_err)?;
    let sim = cfg.sim(o.step, o.paths, &o.scheme, o.radius).map_err(cfg_err)?;
    let x0 = start_point(&o.x0, c.dim, "simulate.x0")?;
    let grid = grid_for(&o.grid, c.dim)?;
    if !(o.s < o.t) {
        return Err(Failure::Config(format!("simulate: need s < t (s = {}, t = {})", o.s, o.t)));
    }
    let mut out = Outcome { report: Report::new(&format!("simulate {}", c.name)), ..Default::default() };
    let ens = push_ensemble(&c, o.s, &InitialLaw::Dirac(x0.clone()), o.t, &sim).map_err(in_mod("simulator"))?;
    let m = crate::measures::density_estimate(&ens.samples, ens.dim, &grid).map_err(in_mod("measures"))?;
    m.write_csv(&artifact(&mut out, dir, "measure.csv")).map_err(in_mod("measures"))?;
    let n_steps = ((o.t - o.s) / o.step).ceil() as usize;
    let path = simulate_path_indexed(&c, o.s, &x0, o.t, &sim, 0, (n_steps / 1000).max(1)).map_err(in_mod("simulator"))?;
    let rows = (0..path.len()).map(|i| {
        let mut r = vec![path.times[i].to_string()];
        r.extend(path.state(i).iter().map(|v| v.to_string()));
        r
    });
    let header: Vec<String> = std::iter::once("t".to_string()).chain((1..=c.dim).map(|i| format!("x{i}"))).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv_rows(&artifact(&mut out, dir, "trajectory.csv"), &header, rows)?;

    let bound = second_moment_bound(&c.envelope, o.s, o.t, &x0, c.gamma1, c.dim).map_err(in_mod("simulator"))?;
    let chk = check_moment_bound(&ens, bound);
    out.report.push(
        Section::new("ensemble")
            .kv("paths", ens.len())
            .kv("mean", format!("{:?}", ens.mean()))
            .num("second_moment", chk.mean)
            .num("second_moment_se", chk.se)
            .num("leak", m.leak),
    );
    out.report.push(Section::new("constants").num("moment_bound", bound));
    out.check(Assertion::new("moment bound E|X_t|^2", chk.mean, format!("<= {} + 3 SE ({})", fmt_num(bound), fmt_num(chk.se)), Basis::ClosedForm, chk.pass));
    Ok(out)
}

fn entrance_core(cfg: &ExperimentConfig, c: &CoefficientSet, dir: &Path, out: &mut Outcome) -> Run<()> {
    let o = &cfg.entrance;
    let sim = cfg.sim(o.step, o.paths, "truncated-em", None).map_err(cfg_err)?;
    let grid = grid_for(&o.grid, c.dim)?;
    let x0 = start_point(&o.x0, c.dim, "entrance.x0")?;
    let starts = if o.starts.is_empty() { geometric_ladder(o.t, o.ladder, o.delta0) } else { o.starts.clone() };
    let ecfg = EntranceConfig { sim, grid, lyapunov: LyapunovSpec::quadratic(o.beta).map_err(cfg_err)?, tol: o.tol };
    let est = estimate_entrance(c, o.t, &starts, &InitialLaw::Dirac(x0.clone()), &ecfg).map_err(in_mod("entrance"))?;
    for s in est.report().sections {
        out.report.push(s);
    }
    est.final_estimate().write_csv(&artifact(out, dir, "entrance_measure.csv")).map_err(in_mod("measures"))?;
    let cons = est.consecutive();
    let curve: Vec<(f64, f64)> = cons.iter().enumerate().map(|(n, &r)| (o.t - starts[n], r)).collect();
    write_csv_rows(
        &artifact(out, dir, "cauchy_curve.csv"),
        &["t_minus_s", "rho_beta_next"],
        curve.iter().map(|(a, b)| vec![a.to_string(), b.to_string()]),
    )?;

    let mut rate = Section::new("rate_fit");
    match fit_rate(&curve, &default_exponent_grid()) {
        Ok(f) => {
            rate = rate.num("exponent", f.alpha).num("lambda", f.lambda).num("prefactor", f.prefactor).num("residual", f.residual).kv("points", f.used);
            for w in &f.warnings {
                rate = rate.kv("warning", w);
            }
            rate = rate.kv("note", "Cauchy distances level off at the Monte Carlo noise floor; the fit is descriptive");
        }
        Err(e) => rate = rate.kv("unavailable", e),
    }
    out.report.push(rate);

    let mut consts = Section::new("constants");
    let m_t = match m_t_integral(&c.envelope, o.t, c.gamma1, c.dim) {
        Ok(v) => {
            consts = consts.num("m_t", v);
            Some(v)
        }
        Err(Error::Divergent(m)) => {
            consts = consts.kv("m_t", format!("divergent ({m})"));
            None
        }
        Err(e) => return Err(in_mod("entrance")(e)),
    };
    match alpha_delta(&c.envelope, o.alpha_window, o.alpha_horizon) {
        Ok(a) => consts = consts.num(&format!("alpha(Delta = {})", o.alpha_window), a),
        Err(e) => consts = consts.kv("alpha(Delta)", format!("unavailable ({e})")),
    }
    let far = *starts.last().unwrap();
    let bound = second_moment_bound(&c.envelope, far, o.t, &x0, c.gamma1, c.dim).map_err(in_mod("simulator"))?;
    consts = consts.num("moment_bound_farthest_start", bound);
    out.report.push(consts);

    out.check(Assertion::new(
        "entrance ladder converged",
        est.consecutive().iter().cloned().fold(f64::INFINITY, f64::min),
        format!("two consecutive rho_beta < {}", fmt_num(o.tol)),
        Basis::Computed,
        est.converged(),
    ));
    let fm = est.final_moments();
    if let Some(m) = m_t {
        out.check(Assertion::new(
            "entrance estimate in M_t",
            fm.second,
            format!("E|X|^2 <= m_t = {} + 3 SE ({})", fmt_num(m), fmt_num(fm.second_se)),
            Basis::ClosedForm,
            fm.second <= m + 3.0 * fm.second_se,
        ));
    }
    let last = *est.moments.last().unwrap();
    out.check(Assertion::new(
        "moment bound from farthest start",
        last.second,
        format!("<= {} + 3 SE ({})", fmt_num(bound), fmt_num(last.second_se)),
        Basis::ClosedForm,
        last.second <= bound + 3.0 * last.second_se,
    ));
    Ok(())
}

fn cmd_entrance(cfg: &ExperimentConfig, dir: &Path, default: &str) -> Run<Outcome> {
    let c = cfg.coefficients(default).map_err(cfg_err)?;
    let mut out = Outcome { report: Report::new(&format!("entrance {}", c.name)), ..Default::default() };
    entrance_core(cfg, &c, dir, &mut out)?;
    Ok(out)
}

fn cmd_example_run(cfg: &ExperimentConfig, dir: &Path, name: &str) -> Run<Outcome> {
    let spec = catalog::lookup(name).map_err(cfg_err)?;
    let params = cfg.params();
    let c = spec.build(&params).map_err(cfg_err)?;
    let mut out = Outcome { report: Report::new(&format!("example {name}")), ..Default::default() };
    out.report.push(Section::new("example").kv("name", name).kv("summary", spec.summary));
    let truths = spec.truths(&params).map_err(cfg_err)?;
    let mut tsec = Section::new("known_values");
    for t in &truths {
        tsec = tsec.kv(t.label, format!("{} [{}]", t.expected, t.basis));
    }
    out.report.push(tsec);
    entrance_core(cfg, &c, dir, &mut out)?;
    for t in &truths {
        let Ok(expected) = t.expected.parse::<f64>() else { continue };
        match t.label {
            "m_t" => {
                let got = m_t_integral(&c.envelope, cfg.entrance.t, c.gamma1, c.dim).map_err(in_mod("entrance"))?;
                let tol = 1e-6 * expected.abs().max(1.0);
                out.check(Assertion::new("m_t matches closed form", got, format!("|m_t - {expected}| <= {}", fmt_num(tol)), t.basis, (got - expected).abs() <= tol));
            }
            "invariant variance" => {
                // pick the converged estimate's sample variance; 5 standard errors of a Gaussian variance
                let sec = out.report.section("summary").and_then(|s| s.get("final_variance")).and_then(|v| v.parse::<f64>().ok());
                if let Some(v) = sec {
                    let tol = 5.0 * expected * (2.0 / cfg.entrance.paths as f64).sqrt() + 0.01 * expected;
                    out.check(Assertion::new("entrance variance", v, format!("|var - {expected}| <= {}", fmt_num(tol)), t.basis, (v - expected).abs() <= tol));
                }
            }
            _ => {}
        }
    }
    Ok(out)
}

fn midpoint(a: f64, b: f64) -> f64 {
    0.5 * (a + b)
}

fn cmd_contract(cfg: &ExperimentConfig, dir: &Path) -> Run<Outcome> {
    let o = &cfg.contract;
    let mut out = Outcome { report: Report::new("contraction certificate"), ..Default::default() };
    let (schedule, head_model) = match &o.schedule {
        Some(p) => (load_schedule(p).map_err(cfg_err)?, None),
        None => {
            let c = cfg.coefficients("sin_sqrt_double_well").map_err(cfg_err)?;
            let s = sqrt_example_schedule(&c, o.blocks, o.eta_bar).map_err(in_mod("contraction"))?;
            (s, Some(c))
        }
    };
    save_schedule(&artifact(&mut out, dir, "schedule.csv"), &schedule).map_err(in_mod("contraction"))?;
    let a = analyze_partition(&schedule, o.delta).map_err(in_mod("contraction"))?;

    // Unset levels: γ* halfway between lim sup γ̄ and its cap, R twice the smallest level making
    // ϖ₀ = (lim inf ratio)/2 admissible, then ϖ halfway between its threshold and the lim inf.
    let lim_g = a.limsup_gamma_bar.clamp(0.0, 1.0);
    let varpi0 = 0.5 * a.liminf_ratio.clamp(0.0, 1.0);
    let (gamma_star, big_r) = match (o.gamma_star, o.big_r) {
        (Some(g), Some(r)) => (g, r),
        (Some(g), None) => (g, 4.0 * a.k / (varpi0 * (1.0 - g))),
        (None, Some(r)) => (midpoint(lim_g, (1.0 - 2.0 * a.k / r).max(lim_g)), r),
        (None, None) => {
            let g = midpoint(lim_g, 1.0);
            (g, 4.0 * a.k / (varpi0 * (1.0 - g)))
        }
    };
    let thr = check_theorem_conditions(&a, big_r, 0.5, gamma_star).varpi_threshold;
    let varpi = o.varpi.unwrap_or_else(|| {
        if thr < a.liminf_ratio {
            midpoint(thr.max(0.0), a.liminf_ratio.min(1.0))
        } else {
            midpoint(thr.clamp(0.0, 1.0), 1.0)
        }
    });
    let conds = check_theorem_conditions(&a, big_r, varpi, gamma_star);
    out.report.push(
        Section::new("partition")
            .kv("intervals", a.horizon())
            .num("gamma", a.gamma)
            .num("K", a.k)
            .num("delta", a.delta)
            .kv("subsequence_length", a.subsequence.len())
            .num("liminf_ratio", a.liminf_ratio)
            .num("limsup_gamma_bar", a.limsup_gamma_bar)
            .num("inf_ratio", a.inf_ratio)
            .num("sup_gamma_bar", a.sup_gamma_bar)
            .kv("warning", conds.warning),
    );
    out.report.push(Section::new("levels").num("R", big_r).num("gamma_star", gamma_star).num("varpi", varpi).num("varpi_threshold", conds.varpi_threshold));
    let basis = Basis::Computed;
    out.check(Assertion::new("gamma_star < 1 - 2K/R", gamma_star, format!("< {}", fmt_num(1.0 - 2.0 * a.k / big_r)), basis, conds.gamma_star_ok));
    out.check(Assertion::new("varpi above threshold", varpi, format!("> {}", fmt_num(conds.varpi_threshold)), basis, conds.varpi_ok));
    out.check(Assertion::new("liminf n^delta/n > varpi", a.liminf_ratio, format!("> {}", fmt_num(varpi)), basis, conds.liminf_ok));
    out.check(Assertion::new("limsup gamma_bar < gamma_star", a.limsup_gamma_bar, format!("< {}", fmt_num(gamma_star)), basis, conds.limsup_ok));
    if !conds.pass() {
        let mut d = Section::new("diagnostics");
        for m in &conds.diagnostics {
            d = d.kv("fails", m);
        }
        out.report.push(d);
        return Ok(out);
    }
    let cert = select_beta(a.gamma, a.k, big_r, a.delta, varpi, gamma_star).map_err(in_mod("contraction"))?;
    for s in cert.report(None).sections.into_iter().filter(|s| s.name == "constants") {
        out.report.push(s);
    }
    out.check(Assertion::new("contraction rate r < 1", cert.r, "< 1", basis, cert.r < 1.0));

    let zetas: Vec<f64> = schedule.iter().map(|e| one_step_zeta(e.gamma, e.k, e.eta, big_r, cert.beta)).collect();
    write_csv_rows(
        &artifact(&mut out, dir, "partition.csv"),
        &["n", "t_prev", "t_next", "gamma", "K", "eta", "in_A", "ratio", "gamma_bar", "zeta"],
        schedule.iter().enumerate().map(|(i, e)| {
            vec![
                (i + 1).to_string(),
                e.t_prev.to_string(),
                e.t_next.to_string(),
                e.gamma.to_string(),
                e.k.to_string(),
                e.eta.to_string(),
                a.in_a[i].to_string(),
                a.ratio(i + 1).to_string(),
                a.gamma_bar[i].map_or_else(String::new, |g| g.to_string()),
                zetas[i].to_string(),
            ]
        }),
    )?;
    let mut zsec = Section::new("zeta").num("max_step_zeta", zetas.iter().cloned().fold(0.0, f64::max)).num("product", zetas.iter().product());

    // C_t at t = 0 for model schedules (head interval [t_0, 0]), else at the first partition point.
    let t0 = a.points[0];
    let (t_eval, head) = match &head_model {
        Some(c) if t0 < 0.0 => {
            let (g, k) = lyapunov_factors(c, t0, 0.0).map_err(in_mod("contraction"))?;
            (0.0, Some(ScheduleEntry::new(0.0, t0, g, k, 0.0).map_err(in_mod("contraction"))?))
        }
        _ => (t0, None),
    };
    match ct_constant(&cert, &a, t_eval, head.as_ref()) {
        Ok(e) => zsec = zsec.num("t", t_eval).kv("i0", e.i0).kv("k0", e.k0).kv("n_k0", e.n_k0).num("zeta_head", e.zeta_head).num("C_t", e.ct),
        Err(e) => zsec = zsec.kv("C_t", format!("unavailable ({e})")),
    }
    out.report.push(zsec);

    let mut rows = vec![
        ("beta", cert.beta),
        ("r", cert.r),
        ("c1", cert.c1),
        ("c2", cert.c2),
        ("beta1", cert.beta1),
        ("beta2", cert.beta2),
        ("R", big_r),
        ("varpi", varpi),
        ("gamma_star", gamma_star),
        ("delta", a.delta),
    ];
    if let Some(u) = &o.uniform {
        let uc = uniform_certificate(u.step, u.gamma, u.h, u.eta, u.big_r).map_err(in_mod("contraction"))?;
        out.report.push(Section::new("uniform").num("beta", uc.beta).num("zeta", uc.zeta).num("zeta0", uc.zeta0).num("lambda", uc.lambda).num("C", uc.c));
        out.check(Assertion::new("uniform zeta < 1", uc.zeta, "< 1", basis, uc.zeta < 1.0));
        rows.extend([("uniform_zeta", uc.zeta), ("uniform_lambda", uc.lambda), ("uniform_C", uc.c)]);
    }
    write_csv_rows(&artifact(&mut out, dir, "certificate.csv"), &["name", "value"], rows.iter().map(|(k, v)| vec![k.to_string(), v.to_string()]))?;
    Ok(out)
}

fn cmd_density(cfg: &ExperimentConfig, dir: &Path) -> Run<Outcome> {
    let o = &cfg.density;
    let c = cfg.coefficients("bpsv").map_err(cfg_err)?;
    if c.dim != 1 {
        return Err(Failure::Config(format!("density: model '{}' is {}-dimensional; the density tools are one-dimensional", c.name, c.dim)));
    }
    if !(o.s < o.t) {
        return Err(Failure::Config(format!("density: need s < t (s = {}, t = {})", o.s, o.t)));
    }
    let grid = FPGrid::with_spacing(o.lo, o.hi, o.dy, o.dt, Boundary::Reflecting).map_err(cfg_err)?;
    let mut out = Outcome { report: Report::new(&format!("density {}", c.name)), ..Default::default() };
    let sol = fp_solve(&c, o.s, o.x0, o.t, &grid).map_err(in_mod("density"))?;
    let ys = grid.centers();
    write_csv_rows(&artifact(&mut out, dir, "density.csv"), &["y", "p"], ys.iter().zip(&sol.density).map(|(y, p)| vec![y.to_string(), p.to_string()]))?;
    let mass: f64 = sol.density.iter().sum::<f64>() * grid.dy();
    let min_p = sol.density.iter().cloned().fold(f64::INFINITY, f64::min);
    out.report.push(
        Section::new("fokker_planck")
            .kv("cells", grid.cells)
            .kv("steps", sol.steps)
            .num("mass", mass)
            .num("mass_deficit", sol.mass_deficit)
            .num("min_density", min_p)
            .num("max_peclet", sol.max_peclet)
            .num("cfl", sol.cfl),
    );
    out.check(Assertion::new("FP mass conserved", mass, "|mass - 1| <= 1e-6", Basis::ClosedForm, (mass - 1.0).abs() <= 1e-6));
    out.check(Assertion::new("FP density nonnegative", min_p, ">= -1e-10", Basis::ClosedForm, min_p >= -1e-10));

    let opts = MinorizationOptions { nx: o.starts, fp_dy: o.dy, fp_dt: o.dt, ..Default::default() };
    let sweep = minorization_sweep(&c, o.s, o.t, &o.levels, o.rho_b, &opts).map_err(in_mod("density"))?;
    let mut msec = Section::new("minorization").num("rho_B", o.rho_b).kv("nu", &sweep[0].nu);
    for m in &sweep {
        msec = msec.num(&format!("eta(R = {})", m.r), m.eta);
        out.check(Assertion::new(&format!("minorization eta > 0 at R = {}", m.r), m.eta, "> 0", Basis::Computed, m.eta > 0.0));
    }
    out.report.push(msec);
    write_csv_rows(
        &artifact(&mut out, dir, "minorization.csv"),
        &["R", "eta", "min_density", "argmin_x", "argmin_y"],
        sweep.iter().map(|m| vec![m.r.to_string(), m.eta.to_string(), m.min_density.to_string(), m.argmin_x.to_string(), m.argmin_y.to_string()]),
    )?;

    if o.calibrate {
        let copts = CalibrationOptions { fp_dy: o.dy, fp_dt: o.dt, ..Default::default() };
        let cal = calibrate_lower_bound(&c, o.s, o.t - o.s, (o.x_range[0], o.x_range[1]), (o.y_range[0], o.y_range[1]), &copts)
            .map_err(in_mod("density"))?;
        for s in cal.report().sections {
            out.report.push(s);
        }
        out.check(Assertion::new(
            "lower bound under FP density",
            cal.min_ratio,
            format!("min p/bound >= 1 + margin ({})", copts.margin),
            Basis::Computed,
            cal.min_ratio >= 1.0 + copts.margin - 1e-12,
        ));
        write_csv_rows(
            &artifact(&mut out, dir, "calibration.csv"),
            &["x", "y", "p", "bound"],
            cal.samples.iter().map(|s| {
                let b = lower_bound_eval(&cal.params, cal.dt, &[s.x], &[s.y]);
                vec![s.x.to_string(), s.y.to_string(), s.p.to_string(), b.to_string()]
            }),
        )?;
    }
    Ok(out)
}

fn quasi_parent(cfg: &ExperimentConfig, periods: [f64; 2]) -> Run<QuasiPeriodicParent> {
    let name = cfg.example_name("quasi_double_well");
    let spec = catalog::lookup(&name).map_err(cfg_err)?;
    let mut p = cfg.params();
    if !(periods[0] > 0.0 && periods[1] > 0.0) {
        return Err(Failure::Config(format!("quasi.periods must be positive, got {periods:?}")));
    }
    p = p.with("w1", 2.0 * PI / periods[0]).with("w2", 2.0 * PI / periods[1]);
    spec.parent(&p)
        .map_err(cfg_err)?
        .ok_or_else(|| Failure::Config(format!("example '{name}' has no quasi-periodic parent")))
}

fn cmd_quasi(cfg: &ExperimentConfig, dir: &Path) -> Run<Outcome> {
    let o = &cfg.quasi;
    let periods = o.periods.ok_or_else(|| Failure::Config("quasi.periods: missing field; set periods = [tau1, tau2]".into()))?;
    let parent = quasi_parent(cfg, periods)?;
    let sim = cfg.sim(o.step, o.paths, "truncated-em", None).map_err(cfg_err)?;
    let grid = grid_for(&o.grid, 1)?;
    let mut qc = QuasiConfig::new(sim.clone(), grid).map_err(cfg_err)?;
    qc.burn = o.burn;
    qc.tol = o.tol;
    let torus = Torus::new(periods[0], periods[1]).map_err(cfg_err)?;
    let tg = TorusGrid::new(torus, o.n1, o.n2).map_err(cfg_err)?;
    let mut out = Outcome { report: Report::new(&format!("quasi-periodic {}", parent.name)), ..Default::default() };

    let avg = screen_parent(&parent).map_err(in_mod("quasiperiodic"))?;
    out.report.push(Section::new("constants").num("tau1", periods[0]).num("tau2", periods[1]).num("torus_average_alpha", avg));
    let cyl = cylinder_invariant(&parent, &tg, &qc).map_err(in_mod("quasiperiodic"))?;
    cyl.write_csv(&artifact(&mut out, dir, "cylinder.csv")).map_err(in_mod("quasiperiodic"))?;
    let pushed = push_cylinder(&parent, &cyl, o.push_time, &qc).map_err(in_mod("quasiperiodic"))?;
    let tv = cyl.total_variation(&pushed).map_err(in_mod("quasiperiodic"))?;
    out.report.push(Section::new("cylinder").kv("cells", tg.cells()).num("total_mass", cyl.total_mass()).num("push_time", o.push_time).num("tv_after_push", tv));
    out.check(Assertion::new("cylinder measure invariant under push", tv, format!("TV <= {}", fmt_num(o.probe_tol)), Basis::Computed, tv <= o.probe_tol));

    let (w1, w2) = (2.0 * PI / periods[0], 2.0 * PI / periods[1]);
    let f_sq = |_: f64, _: f64, x: &[f64]| x[0] * x[0];
    let f_mix = move |r1: f64, _: f64, x: &[f64]| (w1 * r1).cos() * x[0];
    let f_bnd = move |_: f64, r2: f64, x: &[f64]| (w2 * r2).sin() * x[0].tanh();
    let fs: [CylinderFn; 3] = [&f_sq, &f_mix, &f_bnd];
    let names = ["x^2", "cos(w1 r1) x", "sin(w2 r2) tanh(x)"];
    let x0 = start_point(&[0.0], 1, "quasi")?;
    let time = birkhoff_averages(&parent, &fs, torus.point(0.0, 0.0), &x0, o.birkhoff_horizon, o.birkhoff_step, &sim).map_err(in_mod("quasiperiodic"))?;
    let mut bsec = Section::new("birkhoff").num("horizon", o.birkhoff_horizon);
    let mut rows = Vec::new();
    for ((f, n), tavg) in fs.iter().zip(names).zip(&time) {
        let savg = cyl.integrate(*f);
        bsec = bsec.kv(n, format!("time {} space {}", fmt_num(*tavg), fmt_num(savg)));
        out.check(Assertion::new(&format!("Birkhoff average of {n}"), tavg - savg, format!("|time - space| <= {}", fmt_num(o.birkhoff_tol)), Basis::Computed, (tavg - savg).abs() <= o.birkhoff_tol));
        rows.push(vec![n.to_string(), tavg.to_string(), savg.to_string()]);
    }
    out.report.push(bsec);
    write_csv_rows(&artifact(&mut out, dir, "birkhoff.csv"), &["function", "time_average", "space_average"], rows)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(extra: &[&str], out: &Path) -> Vec<String> {
        let mut v = vec!["entrance".to_string(), "--out".into(), out.display().to_string()];
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    }

    #[test]
    fn quasi_without_periods_is_config_error() {
        let d = tempfile::tempdir().unwrap();
        assert_eq!(main_with(args(&["quasi"], d.path())), EXIT_CONFIG);
        let cli = Cli::try_parse_from(args(&["quasi"], d.path())).unwrap();
        let f = run(cli).unwrap_err();
        assert!(f.to_string().contains("quasi.periods"), "{f}");
    }

    #[test]
    fn bad_flags_and_unknown_example() {
        let d = tempfile::tempdir().unwrap();
        assert_eq!(main_with(args(&["contract", "--delta", "abc"], d.path())), EXIT_CONFIG);
        assert_eq!(main_with(args(&["examples", "run", "nope"], d.path())), EXIT_CONFIG);
        assert_eq!(main_with(args(&["examples", "list"], d.path())), EXIT_OK);
    }

    #[test]
    fn runtime_errors_name_the_module() {
        let d = tempfile::tempdir().unwrap();
        let cfg = d.path().join("c.toml");
        std::fs::write(&cfg, "[coefficients]\ndrift = [\"x\"]\ndiffusion = [\"1\"]\nalpha = \"1\"\nlambda = \"0\"\n[entrance]\nladder = 3\npaths = 200\n").unwrap();
        let cli = Cli::try_parse_from(args(&["--config", cfg.to_str().unwrap(), "entrance"], d.path())).unwrap();
        match run(cli) {
            Err(Failure::Runtime { module, .. }) => assert!(["entrance", "simulator"].contains(&module)),
            Ok(o) => assert!(!o.passed()),
            Err(f) => panic!("{f}"),
        }
    }

    #[test]
    fn simulate_is_replayable() {
        let d = tempfile::tempdir().unwrap();
        let run_once = |sub: &str| {
            let out = d.path().join(sub);
            let code = main_with(args(&["--seed", "7", "simulate", "--example", "ou", "--paths", "500", "--s", "-2", "--t", "0"], &out));
            assert_eq!(code, EXIT_OK);
            (std::fs::read(out.join("simulate/measure.csv")).unwrap(), std::fs::read_to_string(out.join("simulate/report.txt")).unwrap())
        };
        let (a, rep) = run_once("a");
        let (b, _) = run_once("b");
        assert_eq!(a, b);
        assert!(rep.contains("[inputs]") && rep.contains("simulate.paths = 500") && rep.contains("basis closed-form"), "{rep}");
    }
}
