//! Special functions and the closed-form constants of the fBm model.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hurst index. Formula paths require `0 < h < 1/2`; `h = 1/2` (Brownian
/// motion) is only admitted through [`HurstParam::with_brownian`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurstParam(f64);

impl HurstParam {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h < 0.5 {
            Ok(HurstParam(h))
        } else {
            Err(Error::InvalidParam(format!("Hurst index must lie in (0, 1/2), got {h}")))
        }
    }

    /// Like [`HurstParam::new`] but also accepts the Brownian limit `h = 1/2`.
    pub fn with_brownian(h: f64) -> Result<Self> {
        if h > 0.0 && h <= 0.5 {
            Ok(HurstParam(h))
        } else {
            Err(Error::InvalidParam(format!("Hurst index must lie in (0, 1/2], got {h}")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_brownian(self) -> bool {
        self.0 == 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub theta: f64,
    pub sigma: f64,
    pub h: HurstParam,
    pub t_horizon: f64,
}

impl ModelParams {
    pub fn new(theta: f64, sigma: f64, h: HurstParam, t_horizon: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::InvalidParam(format!("theta must be positive, got {theta}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParam(format!("sigma must be positive, got {sigma}")));
        }
        if !(t_horizon > 0.0 && t_horizon.is_finite()) {
            return Err(Error::InvalidParam(format!("horizon must be positive, got {t_horizon}")));
        }
        Ok(ModelParams { theta, sigma, h, t_horizon })
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// sin(pi x) with exact argument reduction, accurate near the integers.
fn sin_pi(x: f64) -> f64 {
    let n = x.round();
    let r = x - n;
    let s = (PI * r).sin();
    if (n as i64) % 2 == 0 {
        s
    } else {
        -s
    }
}

/// Gamma function (Lanczos, g = 7, with reflection below 1/2).
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::InvalidParam(format!("gamma of non-finite {x}")));
    }
    if x <= 0.0 && x == x.floor() {
        return Err(Error::Pole(x));
    }
    Ok(gamma_unchecked(x))
}

fn gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        PI / (sin_pi(x) * gamma_unchecked(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut a = LANCZOS[0];
        for (i, c) in LANCZOS.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}

/// `alpha_H = H(2H - 1)`, the prefactor of the far-field kernel `|t-s|^{2H-2}`.
pub fn alpha_h(h: HurstParam) -> f64 {
    let h = h.value();
    h * (2.0 * h - 1.0)
}

/// Asymptotic variance constant of the least-squares estimator.
///
/// At `h = 1/2` the two Gamma poles cancel and the limit 2 is returned.
pub fn sigma_h_sq(h: HurstParam) -> f64 {
    let hv = h.value();
    if h.is_brownian() {
        return 2.0;
    }
    let g = gamma_unchecked;
    (4.0 * hv - 1.0) + 2.0 * g(2.0 - 4.0 * hv) * g(4.0 * hv) / (g(2.0 * hv) * g(1.0 - 2.0 * hv))
}

/// The leading slope `2 (H Gamma(2H))^2 sigma_H^2` of `||f_T||^2` at theta = 1.
pub fn ft_norm_slope(h: HurstParam) -> f64 {
    let hv = h.value();
    let hg = hv * gamma_unchecked(2.0 * hv);
    2.0 * hg * hg * sigma_h_sq(h)
}

/// Stationary second moment `H Gamma(2H)` of the fOU process (theta = sigma = 1).
pub fn fou_second_moment(h: HurstParam) -> f64 {
    let hv = h.value();
    hv * gamma_unchecked(2.0 * hv)
}

/// fBm covariance `R(t, s)`.
pub fn fbm_cov(t: f64, s: f64, h: HurstParam) -> f64 {
    let two_h = 2.0 * h.value();
    0.5 * (t.abs().powf(two_h) + s.abs().powf(two_h) - (t - s).abs().powf(two_h))
}

/// `dR/dt (t, s) = H (t^{2H-1} - sgn(t-s) |t-s|^{2H-1})`.
pub fn fbm_cov_dt(t: f64, s: f64, h: HurstParam) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::Singular(format!("dR/dt needs t > 0, got t = {t}")));
    }
    if t == s {
        return Err(Error::Singular(format!("dR/dt is singular on the diagonal t = s = {t}")));
    }
    let hv = h.value();
    let q = 2.0 * hv - 1.0;
    let d = t - s;
    Ok(hv * (t.powf(q) - d.signum() * d.abs().powf(q)))
}

/// Autocovariance of fractional Gaussian noise with step `delta` at lag `k`.
pub fn fgn_autocov(k: usize, h: HurstParam, delta: f64) -> f64 {
    let two_h = 2.0 * h.value();
    let k = k as f64;
    let p = |x: f64| x.abs().powf(two_h);
    0.5 * delta.powf(two_h) * (p(k + 1.0) - 2.0 * p(k) + p(k - 1.0))
}

/// Complementary error function, absolute error well below 1e-14.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 2.5 {
        // erf(x) = 2/sqrt(pi) e^{-x^2} sum 2^n x^{2n+1} / (2n+1)!!
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        while term > 1e-17 * sum {
            term *= 2.0 * x2 / (2.0 * n + 3.0);
            sum += term;
            n += 1.0;
        }
        1.0 - 2.0 / PI.sqrt() * (-x2).exp() * sum
    } else if x > 27.0 {
        0.0
    } else {
        // continued fraction x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))
        let mut f = x;
        for k in (1..=80).rev() {
            f = x + 0.5 * k as f64 / f;
        }
        (-x * x).exp() / (PI.sqrt() * f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    fn hp(h: f64) -> HurstParam {
        HurstParam::with_brownian(h).unwrap()
    }

    #[test]
    fn gamma_known_values() {
        assert!((gamma_fn(1.0).unwrap() - 1.0).abs() < TOL);
        assert!((gamma_fn(0.5).unwrap() - PI.sqrt()).abs() < TOL);
        assert!((gamma_fn(4.0).unwrap() - 6.0).abs() < 6.0 * TOL);
        assert!((gamma_fn(-0.5).unwrap() + 2.0 * PI.sqrt()).abs() < 4.0 * TOL);
    }

    #[test]
    fn gamma_poles() {
        for x in [0.0, -1.0, -2.0, -7.0] {
            assert!(matches!(gamma_fn(x), Err(Error::Pole(_))));
        }
    }

    #[test]
    fn alpha_values() {
        assert!((alpha_h(hp(0.25)) + 0.125).abs() < TOL);
        assert_eq!(alpha_h(hp(0.5)), 0.0);
        assert!((alpha_h(hp(0.1)) + 0.08).abs() < TOL);
    }

    #[test]
    fn sigma_quarter_is_two_over_pi() {
        assert!((sigma_h_sq(hp(0.25)) - 2.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn sigma_brownian_limit() {
        assert!((sigma_h_sq(hp(0.4999)) - 2.0).abs() < 1e-2);
        assert_eq!(sigma_h_sq(hp(0.5)), 2.0);
    }

    #[test]
    fn cov_examples() {
        let h = hp(0.3);
        assert!((fbm_cov(1.0, 2.0, h) - 0.757_858_283_3).abs() < 1e-9);
        assert_eq!(fbm_cov(3.0, 0.0, h), 0.0);
        assert!((fbm_cov(2.0, 2.0, h) - 2f64.powf(0.6)).abs() < TOL);
    }

    #[test]
    fn cov_dt_brownian_and_singular() {
        let h = hp(0.5);
        assert!((fbm_cov_dt(0.3, 0.9, h).unwrap() - 1.0).abs() < TOL);
        assert!(fbm_cov_dt(2.0, 2.0, hp(0.3)).is_err());
        assert!(fbm_cov_dt(0.0, 1.0, hp(0.3)).is_err());
    }

    #[test]
    fn cov_dt_matches_finite_difference() {
        let h = hp(0.3);
        let (t, s) = (1.5, 0.5);
        let step = 1e-4;
        let fd = (fbm_cov(t + step, s, h) - fbm_cov(t - step, s, h)) / (2.0 * step);
        assert!((fbm_cov_dt(t, s, h).unwrap() - fd).abs() < 1e-6);
    }

    #[test]
    fn fgn_autocov_examples() {
        assert!((fgn_autocov(0, hp(0.3), 1.0) - 1.0).abs() < TOL);
        assert!(fgn_autocov(3, hp(0.5), 1.0).abs() < TOL);
        assert!((fgn_autocov(1, hp(0.25), 1.0) + 0.292_893_2).abs() < 1e-7);
        assert!((fgn_autocov(0, hp(0.3), 0.25) - 0.25f64.powf(0.6)).abs() < TOL);
    }

    #[test]
    fn erfc_reference_points() {
        assert!((erfc(0.0) - 1.0).abs() < 1e-15);
        // erfc(1) and erfc(3) reference values
        assert!((erfc(1.0) - 0.157_299_207_050_285_13).abs() < 1e-15);
        assert!((erfc(3.0) - 2.209_049_699_858_544e-5).abs() < 1e-17);
        assert!((erfc(-1.0) - 1.842_700_792_949_715).abs() < 1e-15);
    }
}
