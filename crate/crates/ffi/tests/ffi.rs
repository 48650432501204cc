use entrance_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn last_error() -> String {
    let p = entrance_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn model(name: &str, params: &[(&str, f64)]) -> *mut EntranceModel {
    let name = CString::new(name).unwrap();
    let keys: Vec<CString> = params.iter().map(|(k, _)| CString::new(*k).unwrap()).collect();
    let kp: Vec<*const std::ffi::c_char> = keys.iter().map(|k| k.as_ptr()).collect();
    let vals: Vec<f64> = params.iter().map(|p| p.1).collect();
    let mut m = ptr::null_mut();
    let st = unsafe { entrance_model_from_example(name.as_ptr(), kp.as_ptr(), vals.as_ptr(), params.len(), &mut m) };
    assert_eq!(st, EntranceStatus::Ok);
    m
}

#[test]
fn ou_simulation_matches_variance() {
    let m = model("ou", &[("theta", 2.0)]);
    assert_eq!(unsafe { entrance_model_dim(m) }, 1);
    let mut e = ptr::null_mut();
    let x0 = [0.0];
    let st = unsafe { entrance_simulate(m, -5.0, x0.as_ptr(), 1, 0.0, 0.01, 20_000, 3, EntranceScheme::TruncatedEm, &mut e) };
    assert_eq!(st, EntranceStatus::Ok);
    let (mut mean, mut se) = (0.0, 0.0);
    unsafe {
        assert_eq!(entrance_ensemble_len(e), 20_000);
        assert_eq!(entrance_ensemble_dim(e), 1);
        assert!(!entrance_ensemble_samples(e).is_null());
        assert_eq!(entrance_ensemble_second_moment(e, &mut mean, &mut se), EntranceStatus::Ok);
        entrance_ensemble_free(e);
        entrance_model_free(m);
    }
    // stationary variance σ²/(2θ) = 0.25
    assert!((mean - 0.25).abs() < 4.0 * se + 0.005, "{mean} ± {se}");
}

#[test]
fn errors_set_status_and_message() {
    let bad = CString::new("no_such_model").unwrap();
    let mut m = ptr::null_mut();
    let st = unsafe { entrance_model_from_example(bad.as_ptr(), ptr::null(), ptr::null(), 0, &mut m) };
    assert_eq!(st, EntranceStatus::Config);
    assert!(last_error().contains("no_such_model"));
    assert!(m.is_null());

    let mut z = 0.0;
    assert_eq!(unsafe { entrance_zeta(0.5, 1.0, 0.5, 10.0, 0.1, ptr::null_mut()) }, EntranceStatus::NullPointer);
    assert_eq!(unsafe { entrance_zeta(0.5, 1.0, 1.5, 10.0, 0.1, &mut z) }, EntranceStatus::InvalidArgument);
    assert_eq!(unsafe { entrance_zeta(0.5, 1.0, 0.5, 10.0, 0.1, &mut z) }, EntranceStatus::Ok);
    assert!(entrance_last_error_message().is_null());

    let mut u = EntranceUniformCertificate::default();
    assert_eq!(unsafe { entrance_uniform_certificate(1.0, 1.5, 1.0, 0.5, 10.0, &mut u) }, EntranceStatus::Precondition);
    assert!(last_error().contains("γ_Δ < 1"));

    let m = model("ou", &[]);
    let mut e = ptr::null_mut();
    let x0 = [0.0, 0.0];
    let st = unsafe { entrance_simulate(m, -1.0, x0.as_ptr(), 2, 0.0, 0.01, 10, 0, EntranceScheme::TamedEm, &mut e) };
    assert_eq!(st, EntranceStatus::InvalidArgument);
    unsafe { entrance_model_free(m) };
}

#[test]
fn zeta_and_uniform_certificate_closed_forms() {
    let (g, k, eta, r, b) = (0.4, 2.0, 0.3, 20.0, 0.05);
    let mut z = 0.0;
    assert_eq!(unsafe { entrance_zeta(g, k, eta, r, b, &mut z) }, EntranceStatus::Ok);
    let want = f64::max(1.0 - eta + b * k, (2.0 + b * (g * r + 2.0 * k)) / (2.0 + b * r));
    assert!((z - want).abs() < 1e-15);

    let mut u = EntranceUniformCertificate::default();
    let (dt, h) = (0.5, 1.0);
    assert_eq!(unsafe { entrance_uniform_certificate(dt, g, h, eta, r, &mut u) }, EntranceStatus::Ok);
    let beta = eta / (2.0 * h);
    assert!((u.beta - beta).abs() < 1e-15);
    let zeta = f64::max(1.0 - eta + beta * h, (2.0 + beta * (g * r + 2.0 * h)) / (2.0 + beta * r));
    assert!((u.zeta - zeta).abs() < 1e-14);
    assert!((u.lambda + zeta.ln() / dt).abs() < 1e-12);
    assert!((u.c - u.zeta0 / u.zeta).abs() < 1e-12);
}

#[test]
fn rho_beta_equal_and_shifted() {
    let mut v = -1.0;
    assert_eq!(unsafe { entrance_gaussian_rho_beta(0.0, 1.0, 0.0, 1.0, 0.1, &mut v) }, EntranceStatus::Ok);
    assert!(v.abs() < 1e-12);
    assert_eq!(unsafe { entrance_gaussian_rho_beta(0.0, 1.0, 1.0, 1.0, 0.0, &mut v) }, EntranceStatus::InvalidArgument);
    assert_eq!(unsafe { entrance_gaussian_rho_beta(0.0, 1.0, 1.0, 1.0, 0.1, &mut v) }, EntranceStatus::Ok);
    // total-variation part alone: 2·(2Φ(1/2) − 1)
    assert!(v > 2.0 * 0.382_924_922 && v < 2.5, "{v}");

    // two point masses at cells 0 and 3 of [-2, 2] with 4 cells: centres -1.5 and 1.5
    let a = [1.0, 0.0, 0.0, 0.0];
    let b = [0.0, 0.0, 0.0, 1.0];
    assert_eq!(unsafe { entrance_rho_beta_grid(-2.0, 2.0, 4, a.as_ptr(), 0.0, b.as_ptr(), 0.0, 0.1, &mut v) }, EntranceStatus::Ok);
    assert!((v - 2.0 * (1.0 + 0.1 * 2.25)).abs() < 1e-12, "{v}");
}

#[test]
fn fp_density_of_ou_is_gaussian() {
    let m = model("ou", &[]);
    let mut d = ptr::null_mut();
    let st = unsafe { entrance_fp_solve(m, 0.0, 0.0, 1.0, -6.0, 6.0, 1200, 1e-3, EntranceBoundary::Reflecting, &mut d) };
    assert_eq!(st, EntranceStatus::Ok);
    let n = unsafe { entrance_density_cells(d) };
    assert_eq!(n, 1200);
    let (c, p) = unsafe { (std::slice::from_raw_parts(entrance_density_centers(d), n), std::slice::from_raw_parts(entrance_density_values(d), n)) };
    // N(0, (1 − e^{−2})/2)
    let var = 0.5 * (1.0 - (-2.0f64).exp());
    let l1: f64 = c.iter().zip(p).map(|(y, v)| (v - (-y * y / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()).abs() * 0.01).sum();
    assert!(l1 < 1e-2, "{l1}");
    let at0 = unsafe { entrance_density_at(d, 0.0) };
    assert!((at0 - 1.0 / (2.0 * std::f64::consts::PI * var).sqrt()).abs() < 0.02);
    unsafe {
        entrance_density_free(d);
        entrance_model_free(m);
        assert!(entrance_density_at(ptr::null(), 0.0).is_nan());
    }
}

#[test]
fn header_is_generated_and_compiles() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/entrance_ffi.h")).unwrap();
    for f in ["entrance_simulate", "entrance_zeta", "entrance_uniform_certificate", "entrance_gaussian_rho_beta", "entrance_fp_solve", "entrance_last_error_message", "typedef struct EntranceModel EntranceModel"] {
        assert!(header.contains(f), "{f} missing from header");
    }
    let src = "#include \"entrance_ffi.h\"\nint main(void){ EntranceUniformCertificate u; double z; \
               EntranceStatus s = entrance_zeta(0.5, 1.0, 0.5, 10.0, 0.1, &z); \
               (void)entrance_uniform_certificate(1.0, 0.5, 1.0, 0.5, 10.0, &u); return s == ENTRANCE_STATUS_OK ? 0 : 1; }\n";
    let tmp = tempfile::tempdir().unwrap();
    let c = tmp.path().join("smoke.c");
    std::fs::write(&c, src).unwrap();
    match std::process::Command::new("cc").arg("-fsyntax-only").arg("-Wall").arg("-Werror").arg("-I").arg(dir.join("include")).arg(&c).output() {
        Ok(o) => assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr)),
        Err(e) => eprintln!("no C compiler available, header compile check skipped: {e}"),
    }
}
