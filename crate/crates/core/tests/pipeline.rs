//! Cross-module checks: time change, truncation, simulator against exact and FP laws.

use entrance_core::catalog::{self, Params};
use entrance_core::coefficients::{reparameterize, truncate_drift, TimeChange};
use entrance_core::density::{fp_solve, Boundary, FPGrid};
use entrance_core::entrance::{estimate_entrance, geometric_ladder, EntranceConfig, LinearSde};
use entrance_core::measures::{density_estimate, total_variation, GridSpec, LyapunovSpec};
use entrance_core::simulator::{push_ensemble, InitialLaw, SimConfig};

#[test]
fn time_change_makes_t_eps_ou_homogeneous() {
    for eps in [0.5, 1.0] {
        let c = catalog::build("ou_t_eps", &Params::default().with("eps", eps)).unwrap();
        let y = reparameterize(&c, &TimeChange::power(1.0 + eps).unwrap()).unwrap();
        for t in [-7.3, -1.0, -0.2, 0.4, 3.0, 25.0] {
            for x in [-2.0, 0.5, 1.7] {
                assert!((y.b1(t, x) + x / (1.0 + eps)).abs() < 1e-9, "eps {eps} t {t} x {x}");
                assert!((y.sigma1(t, x) - (1.0 / (1.0 + eps)).sqrt()).abs() < 1e-9);
            }
            assert!((y.envelope.alpha.eval(t) + 1.0 / (1.0 + eps)).abs() < 1e-9);
        }
    }
    let c = catalog::build("ou_t_eps", &Params::default().with("eps", 0.5)).unwrap();
    let y = reparameterize(&c, &TimeChange::power(1.5).unwrap()).unwrap();
    assert!((y.envelope.alpha.eval(4.0) + 2.0 / 3.0).abs() < 1e-10);
}

#[test]
fn reparameterized_process_has_the_homogeneous_invariant_law() {
    // dY = −Y/(1+ε) dt + (1+ε)^{−1/2} dW is stationary at N(0, 1/2)
    let c = catalog::build("ou_t_eps", &Params::default().with("eps", 1.0)).unwrap();
    let y = reparameterize(&c, &TimeChange::power(2.0).unwrap()).unwrap();
    let e = push_ensemble(&y, -20.0, &InitialLaw::Dirac(vec![2.0]), 0.0, &SimConfig::new(0.01, 40_000, 5)).unwrap();
    let v = e.variance(0);
    assert!((v - 0.5).abs() < 0.02, "{v}");
    // and agrees with the exact law of the original equation at the matching time
    let exact = LinearSde::ou_t_eps(1.0).entrance(0.0).unwrap();
    assert!((exact.cov[0] - 0.5).abs() < 1e-6);
}

#[test]
fn truncated_bpsv_is_coercive() {
    let c = catalog::build("bpsv", &Params::default()).unwrap();
    for n in [2.0, 5.0] {
        let tr = truncate_drift(&c, n).unwrap();
        for i in 0..=1000 {
            let x = -10.0 + 0.02 * i as f64;
            for k in 0..16 {
                let t = -20.0 + 1.3 * k as f64;
                let (a, l) = (c.envelope.alpha.eval(t), c.envelope.lambda.eval(t));
                let lhs = x * tr.b1(t, x);
                let rhs = (a.max(0.0) + l) * x * x + l;
                assert!(lhs <= rhs + 1e-12, "N {n} t {t} x {x}: {lhs} > {rhs}");
                assert!((tr.envelope.alpha.eval(t) - (a.max(0.0) + l)).abs() < 1e-12);
            }
            if x.abs() <= n {
                assert_eq!(tr.b1(0.3, x), c.b1(0.3, x));
            }
        }
    }
}

#[test]
fn simulator_matches_fokker_planck_for_bpsv() {
    let c = catalog::build("bpsv", &Params::default()).unwrap();
    let grid = FPGrid::with_spacing(-5.0, 5.0, 0.01, 1e-3, Boundary::Reflecting).unwrap();
    let fp = fp_solve(&c, 0.0, 0.5, 1.0, &grid).unwrap();
    let hist = GridSpec::line(-5.0, 5.0, 50).unwrap();
    // coarsen the FP density to the histogram cells
    let per = grid.cells / 50;
    let masses: Vec<f64> = fp.density.chunks(per).map(|ch| ch.iter().sum::<f64>() * grid.dy()).collect();
    let fp_m = entrance_core::measures::GridMeasure::normalized(hist.clone(), masses, 0.0).unwrap();
    let e = push_ensemble(&c, 0.0, &InitialLaw::Dirac(vec![0.5]), 1.0, &SimConfig::new(1e-3, 100_000, 9)).unwrap();
    let mc = density_estimate(&e.samples, 1, &hist).unwrap();
    let tv = total_variation(&fp_m, &mc).unwrap();
    assert!(tv < 0.02, "{tv}");
}

#[test]
fn entrance_ladder_forgets_the_initial_law() {
    let c = catalog::build("bpsv", &Params::default()).unwrap();
    let cfg = EntranceConfig {
        sim: SimConfig::new(0.01, 20_000, 4),
        grid: GridSpec::line(-4.0, 4.0, 40).unwrap(),
        lyapunov: LyapunovSpec::quadratic(0.1).unwrap(),
        tol: 0.1,
    };
    let starts = geometric_ladder(0.0, 5, 1.0);
    let a = estimate_entrance(&c, 0.0, &starts, &InitialLaw::Dirac(vec![2.0]), &cfg).unwrap();
    let b = estimate_entrance(&c, 0.0, &starts, &InitialLaw::Uniform { lo: vec![-3.0], hi: vec![3.0] }, &cfg).unwrap();
    let d = entrance_core::measures::rho_beta(a.measures.last().unwrap(), b.measures.last().unwrap(), &cfg.lyapunov).unwrap();
    assert!(d < 0.1, "{d}");
}
