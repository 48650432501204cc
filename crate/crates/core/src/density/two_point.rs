use crate::error::{arg, Result};

/// Densities p(r, s, x, y₀) and p(t, s, x, y) from one start (s, x), s < r < t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPointSample {
    pub s: f64,
    pub r: f64,
    pub t: f64,
    pub y0: f64,
    pub y: f64,
    pub p_r_y0: f64,
    pub p_t_y: f64,
}

impl TwoPointSample {
    /// 1 + ((t−r)/(r−s))(1 + |y−y₀|^{2κ}) + |y−y₀|²/(t−r).
    pub fn exponent(&self, kappa: f64) -> f64 {
        let d = (self.y - self.y0).abs();
        1.0 + (self.t - self.r) / (self.r - self.s) * (1.0 + d.powf(2.0 * kappa)) + d * d / (self.t - self.r)
    }

    fn validate(&self) -> Result<()> {
        if !(self.s < self.r && self.r < self.t) {
            return arg(format!("two-point check needs s < r < t (got {}, {}, {})", self.s, self.r, self.t));
        }
        Ok(())
    }
}

/// p(t, s, x, y) ≥ p(r, s, x, y₀)·exp{−𝒦·exponent}.
pub fn two_point_check(smp: &TwoPointSample, big_k: f64, kappa: f64) -> Result<bool> {
    smp.validate()?;
    Ok(smp.p_t_y >= smp.p_r_y0 * (-big_k * smp.exponent(kappa)).exp() * (1.0 - 1e-12))
}

/// Smallest 𝒦 ≥ 0 for which every sample passes.
pub fn calibrate_two_point(samples: &[TwoPointSample], kappa: f64) -> Result<f64> {
    if samples.is_empty() {
        return arg("no samples to calibrate on");
    }
    let mut k = 0.0f64;
    for smp in samples {
        smp.validate()?;
        if !(smp.p_t_y > 0.0) {
            return arg("target density must be positive");
        }
        k = k.max((smp.p_r_y0 / smp.p_t_y).ln() / smp.exponent(kappa));
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::normal_pdf;

    fn ou(x: f64, y: f64, dt: f64) -> f64 {
        let e = (-dt).exp();
        normal_pdf(y, x * e, 0.5 * (1.0 - e * e))
    }

    fn sample(x: f64, r: f64, t: f64, y0: f64, y: f64) -> TwoPointSample {
        TwoPointSample { s: 0.0, r, t, y0, y, p_r_y0: ou(x, y0, r), p_t_y: ou(x, y, t) }
    }

    #[test]
    fn equal_densities_pass_for_any_k() {
        let smp = TwoPointSample { s: 0.0, r: 0.5, t: 0.5 + 1e-9, y0: 0.2, y: 0.2, p_r_y0: 0.3, p_t_y: 0.3 };
        for k in [0.0, 0.5, 10.0] {
            assert!(two_point_check(&smp, k, 1.0).unwrap());
        }
        let bad = TwoPointSample { r: 0.0, ..smp };
        assert!(two_point_check(&bad, 1.0, 1.0).is_err());
    }

    #[test]
    fn ou_train_and_test_grids() {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, x) in [-1.0, -0.3, 0.4, 1.1].into_iter().enumerate() {
            for (j, (r, t)) in [(0.3, 0.8), (0.5, 1.0), (0.6, 1.5)].into_iter().enumerate() {
                for y0 in [-0.8, 0.0, 0.7] {
                    for dyy in [-0.6, 0.0, 0.5] {
                        let smp = sample(x, r, t, y0, y0 + dyy);
                        if (i + j) % 2 == 0 {
                            train.push(smp);
                        } else {
                            test.push(sample(x + 0.05, r + 0.02, t + 0.03, y0 + 0.1, y0 + dyy + 0.1));
                        }
                    }
                }
            }
        }
        let k = calibrate_two_point(&train, 1.0).unwrap();
        assert!(k > 0.0);
        assert!(train.iter().all(|s| two_point_check(s, k, 1.0).unwrap()));
        // headroom for the held-out grid
        assert!(test.iter().all(|s| two_point_check(s, 1.5 * k, 1.0).unwrap()));
        let fails = train.iter().filter(|s| s.y != s.y0 && !two_point_check(s, 0.0, 1.0).unwrap()).count();
        assert!(fails > 0);
    }
}
