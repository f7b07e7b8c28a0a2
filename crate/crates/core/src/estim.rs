//! Monte Carlo study of the least squares and moment estimators of the drift
//! of a fractional Ornstein-Uhlenbeck process: per-replication estimators,
//! Kolmogorov distances of their normalised errors to the standard normal,
//! and the decay rate of those distances in the horizon.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbmsim::{derive_seed, fou_into, trapezoid_sq, ChaosWorkspace, FgnGenerator, ToeplitzKernel};
use crate::hinner::grid_cov;
use crate::specfun::{erfc, gamma_fn, sigma_h_sq, HurstParam, ModelParams};

/// Monte Carlo noise floor factor: `d_K` below `MC_FLOOR_FACTOR / sqrt(n)`
/// is indistinguishable from sampling error.
pub const MC_FLOOR_FACTOR: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSample {
    pub theta_hat: f64,
    pub theta_tilde: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub seed: u64,
}

/// Number of grid cells for horizon `t` and step `delta`, which must divide.
pub fn grid_size(t: f64, delta: f64) -> Result<usize> {
    if !(t > 0.0 && delta > 0.0) {
        return Err(Error::InvalidParam(format!("horizon {t} and step {delta} must be positive")));
    }
    let r = t / delta;
    let n = r.round();
    if (r - n).abs() > 1e-9 * r.max(1.0) || n < 1.0 {
        return Err(Error::InvalidParam(format!("step {delta} does not divide horizon {t}")));
    }
    Ok(n as usize)
}

/// Everything that can be shared between replications with the same
/// parameters and grid.
pub struct SampleEngine {
    params: ModelParams,
    n: usize,
    delta: f64,
    gen: FgnGenerator,
    kern: ToeplitzKernel,
    cov: crate::hinner::GridCovariance,
    /// `sigma^2 H Gamma(2H) T`
    mm_scale: f64,
}

/// Per-thread buffers for [`SampleEngine::draw_with`].
pub struct SampleBuffers {
    fgn_scratch: Vec<Complex64>,
    z: Vec<f64>,
    x: Vec<f64>,
    chaos: ChaosWorkspace,
}

impl SampleEngine {
    pub fn new(params: ModelParams, n_grid: usize) -> Result<Self> {
        if n_grid == 0 {
            return Err(Error::InvalidParam("grid needs at least one cell".into()));
        }
        let h = params.h;
        let delta = params.t_horizon / n_grid as f64;
        let gen = FgnGenerator::new(h, n_grid, delta)?;
        let kern = ToeplitzKernel::exponential(n_grid, delta, params.theta)?;
        let cov = grid_cov(h, n_grid, delta)?;
        let hv = h.value();
        let mm_scale = params.sigma * params.sigma * hv * gamma_fn(2.0 * hv)? * params.t_horizon;
        Ok(SampleEngine { params, n: n_grid, delta, gen, kern, cov, mm_scale })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn buffers(&self) -> Result<SampleBuffers> {
        Ok(SampleBuffers {
            fgn_scratch: vec![Complex64::new(0.0, 0.0); self.gen.embedding_size()],
            z: vec![0.0; self.n],
            x: Vec::with_capacity(self.n + 1),
            chaos: ChaosWorkspace::new(&self.kern, &self.cov)?,
        })
    }

    pub fn draw(&self, seed: u64) -> Result<EstimatorSample> {
        self.draw_with(seed, &mut self.buffers()?)
    }

    pub fn draw_with(&self, seed: u64, buf: &mut SampleBuffers) -> Result<EstimatorSample> {
        let p = &self.params;
        self.gen.sample_into(seed, &mut buf.fgn_scratch, &mut buf.z);
        fou_into(&buf.z, p.theta, p.sigma, self.delta, &mut buf.x);
        let denominator = trapezoid_sq(&buf.x, self.delta);
        if !(denominator > 0.0) {
            return Err(Error::NonPositiveDenominator(denominator));
        }
        let numerator = 0.5 * p.sigma * buf.chaos.eval(&self.kern, &buf.z)?;
        Ok(EstimatorSample {
            theta_hat: p.theta - numerator / denominator,
            theta_tilde: moment_estimate(denominator, self.mm_scale, p.h),
            numerator,
            denominator,
            seed,
        })
    }
}

/// `(den / (sigma^2 H Gamma(2H) T))^{-1/(2H)}`, with `scale` the bracketed normaliser.
pub fn moment_estimate(denominator: f64, scale: f64, h: HurstParam) -> f64 {
    (denominator / scale).powf(-1.0 / (2.0 * h.value()))
}

/// One replication: fGn draw, fOU path, both estimators.
pub fn draw_sample(params: ModelParams, n_grid: usize, seed: u64) -> Result<EstimatorSample> {
    SampleEngine::new(params, n_grid)?.draw(seed)
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `sup_z |F_N(z) - cdf(z)|` for the empirical distribution of `sorted`.
pub fn kolmogorov_distance<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    if sorted.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParam("samples must be sorted".into()));
    }
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max(((i + 1) as f64 / n - f).abs()).max((i as f64 / n - f).abs());
    }
    Ok(d)
}

/// Two-sample Kolmogorov distance between empirical distributions.
pub fn two_sample_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Dvoretzky-Kiefer-Wolfowitz radius: `P(d_K > eps) <= alpha` for `n` iid draws.
pub fn dkw_band(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub var: f64,
    /// standard error of the mean
    pub se: f64,
}

pub fn moments(x: &[f64]) -> Moments {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Moments { mean, var, se: (var / n).sqrt() }
}

/// Normalisers for `theta_hat - theta` and `theta_tilde - theta`.
pub fn normalizers(params: &ModelParams) -> (f64, f64) {
    let h = params.h;
    let hv = h.value();
    let s2 = sigma_h_sq(h);
    let t = params.t_horizon;
    let lse = (t / (params.theta * s2)).sqrt();
    let mm = (4.0 * hv * hv * t / (params.theta * s2)).sqrt();
    (lse, mm)
}

/// JSON has no NaN; undefined fit values travel as `null`.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    /// decay exponent: `d_K ~ T^{-beta}`
    #[serde(with = "nan_as_null")]
    pub beta: f64,
    #[serde(with = "nan_as_null")]
    pub stderr: f64,
    pub n_points: usize,
    pub reliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BERow {
    pub t: f64,
    pub n_grid: usize,
    pub dk_lse: f64,
    pub dk_mm: f64,
    pub mean_norm_lse: f64,
    pub var_norm_lse: f64,
    pub mean_norm_mm: f64,
    pub var_norm_mm: f64,
    /// replications that failed (non-positive denominator), excluded
    pub failed_reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BESummary {
    pub h: f64,
    pub theta: f64,
    pub sigma: f64,
    pub delta: f64,
    pub n_reps: usize,
    pub master_seed: u64,
    pub rows: Vec<BERow>,
    /// horizons whose experiment failed, with the reason
    pub failures: Vec<(f64, String)>,
    pub beta_lse: BetaFit,
    pub beta_mm: BetaFit,
    pub mc_floor: f64,
}

impl BESummary {
    pub fn t_grid(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }
    pub fn dk_lse(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.dk_lse).collect()
    }
    pub fn dk_mm(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.dk_mm).collect()
    }
    pub fn var_norm_lse(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.var_norm_lse).collect()
    }
    /// `d_K` never increases by more than `2 mc_floor` from one horizon to the next.
    pub fn dk_lse_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].dk_lse <= w[0].dk_lse + 2.0 * self.mc_floor)
    }
}

/// Exponent of `d_K ~ C T^{-beta}` by least squares on `log d_K` against
/// `log T`, using only points above `2 mc_floor`. Fewer than three usable
/// points flag the fit as unreliable.
pub fn fit_beta(t: &[f64], dk: &[f64], mc_floor: f64) -> BetaFit {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(dk)
        .filter(|(_, &d)| d >= 2.0 * mc_floor && d > 0.0)
        .map(|(&t, &d)| (t.ln(), d.ln()))
        .collect();
    let n = pts.len();
    if n < 2 {
        return BetaFit { beta: f64::NAN, stderr: f64::NAN, n_points: n, reliable: false };
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let stderr = if n > 2 {
        let sse: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
        (sse / (nf - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    BetaFit { beta: -slope, stderr, n_points: n, reliable: n >= 3 }
}

fn run_horizon(
    theta: f64,
    sigma: f64,
    h: HurstParam,
    t: f64,
    delta: f64,
    n_reps: usize,
    seed_base: u64,
) -> Result<BERow> {
    let params = ModelParams::new(theta, sigma, h, t)?;
    let n_grid = grid_size(t, delta)?;
    let engine = SampleEngine::new(params, n_grid)?;
    let draws: Vec<Result<EstimatorSample>> = (0..n_reps)
        .into_par_iter()
        .map_init(
            || engine.buffers(),
            |buf, i| match buf {
                Ok(b) => engine.draw_with(derive_seed(seed_base, i as u64), b),
                Err(e) => Err(e.clone()),
            },
        )
        .collect();
    let mut ok = Vec::with_capacity(n_reps);
    let mut failed = 0;
    for d in draws {
        match d {
            Ok(s) => ok.push(s),
            Err(Error::NonPositiveDenominator(_)) => failed += 1,
            Err(e) => return Err(e),
        }
    }
    if ok.len() < 2 {
        return Err(Error::TooFewSamples { need: 2, got: ok.len() });
    }
    let (c_lse, c_mm) = normalizers(&params);
    let mut lse: Vec<f64> = ok.iter().map(|s| c_lse * (s.theta_hat - theta)).collect();
    let mut mm: Vec<f64> = ok.iter().map(|s| c_mm * (s.theta_tilde - theta)).collect();
    let ml = moments(&lse);
    let mmm = moments(&mm);
    lse.sort_by(f64::total_cmp);
    mm.sort_by(f64::total_cmp);
    Ok(BERow {
        t,
        n_grid,
        dk_lse: kolmogorov_distance(&lse, normal_cdf)?,
        dk_mm: kolmogorov_distance(&mm, normal_cdf)?,
        mean_norm_lse: ml.mean,
        var_norm_lse: ml.var,
        mean_norm_mm: mmm.mean,
        var_norm_mm: mmm.var,
        failed_reps: failed,
    })
}

/// Kolmogorov distances of both normalised estimators over a horizon grid.
pub fn be_experiment(
    theta: f64,
    sigma: f64,
    h: HurstParam,
    t_grid: &[f64],
    n_reps: usize,
    delta: f64,
    master_seed: u64,
) -> Result<BESummary> {
    if n_reps < 2 {
        return Err(Error::TooFewSamples { need: 2, got: n_reps });
    }
    for &t in t_grid {
        ModelParams::new(theta, sigma, h, t)?;
        grid_size(t, delta)?;
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (k, &t) in t_grid.iter().enumerate() {
        match run_horizon(theta, sigma, h, t, delta, n_reps, derive_seed(master_seed, k as u64)) {
            Ok(r) => rows.push(r),
            Err(e) => failures.push((t, e.to_string())),
        }
    }
    let mc_floor = MC_FLOOR_FACTOR / (n_reps as f64).sqrt();
    let ts: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let beta_lse = fit_beta(&ts, &rows.iter().map(|r| r.dk_lse).collect::<Vec<_>>(), mc_floor);
    let beta_mm = fit_beta(&ts, &rows.iter().map(|r| r.dk_mm).collect::<Vec<_>>(), mc_floor);
    Ok(BESummary { h: h.value(), theta, sigma, delta, n_reps, master_seed, rows, failures, beta_lse, beta_mm, mc_floor })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub t: f64,
    pub dk_lse: f64,
    /// `d_K sqrt(T)`: flat under the `T^{-1/2}` rate
    pub dk_sqrt_t: f64,
    /// `d_K T^{1-2H}`: flat under the `T^{2H-1}` rate
    pub dk_t_pow: f64,
}

pub fn rate_table(summary: &BESummary) -> Vec<RateRow> {
    let p = 1.0 - 2.0 * summary.h;
    summary
        .rows
        .iter()
        .map(|r| RateRow { t: r.t, dk_lse: r.dk_lse, dk_sqrt_t: r.dk_lse * r.t.sqrt(), dk_t_pow: r.dk_lse * r.t.powf(p) })
        .collect()
}

/// Spread of a column relative to its mean (max minus min over mean).
pub fn column_flatness(col: &[f64]) -> f64 {
    let mean = col.iter().sum::<f64>() / col.len() as f64;
    let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo) / mean.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(h: f64) -> HurstParam {
        HurstParam::new(h).unwrap()
    }

    #[test]
    fn cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.959963985) - 0.975).abs() < 1e-9);
        assert!((normal_cdf(40.0) - 1.0).abs() < 1e-16);
        assert!(normal_cdf(-40.0) < 1e-300);
    }

    #[test]
    fn distance_single_point() {
        assert!((kolmogorov_distance(&[0.0], normal_cdf).unwrap() - 0.5).abs() < 1e-15);
        assert!(kolmogorov_distance(&[], normal_cdf).is_err());
        assert!(kolmogorov_distance(&[1.0, 0.0], normal_cdf).is_err());
    }

    #[test]
    fn distance_of_uniform_quantiles() {
        let n = 200;
        let s: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = kolmogorov_distance(&s, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((d - 0.5 / n as f64).abs() < 1e-14);
    }

    #[test]
    fn moment_inversion() {
        let h = hp(0.3);
        let theta0: f64 = 1.7;
        let scale = 2.5;
        let den = scale * theta0.powf(-2.0 * h.value());
        assert!((moment_estimate(den, scale, h) - theta0).abs() < 1e-12);
    }

    #[test]
    fn lse_identity_per_sample() {
        let p = ModelParams::new(1.0, 1.0, hp(0.3), 8.0).unwrap();
        let s = draw_sample(p, 128, 11).unwrap();
        assert_eq!(s.theta_hat, 1.0 - s.numerator / s.denominator);
        assert!(s.denominator > 0.0);
    }

    #[test]
    fn grid_divisibility() {
        assert_eq!(grid_size(25.0, 1.0 / 16.0).unwrap(), 400);
        assert!(grid_size(1.0, 0.3).is_err());
    }

    #[test]
    fn beta_of_exact_power() {
        let t = [25.0, 50.0, 100.0, 200.0];
        let dk: Vec<f64> = t.iter().map(|t: &f64| 0.4 / t.sqrt()).collect();
        let b = fit_beta(&t, &dk, 0.001);
        assert!((b.beta - 0.5).abs() < 1e-12 && b.reliable);
        let b = fit_beta(&t, &dk, 0.025);
        assert!(!b.reliable);
    }

    #[test]
    fn two_sample_identical() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(two_sample_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(two_sample_distance(&[0.0], &[1.0]).unwrap(), 1.0);
    }
}
