//! Fractional Gaussian noise by circulant embedding (with a dense Cholesky
//! fallback), fractional Ornstein-Uhlenbeck paths on a uniform grid, and
//! centred quadratic forms of the noise with Toeplitz kernels.

use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hinner::{GridCovariance, SymToeplitz};
use crate::specfun::{fgn_autocov, HurstParam};

/// Largest size accepted by [`cholesky_fgn`].
pub const CHOLESKY_MAX_N: usize = 4096;

/// Relative size of negative circulant eigenvalues treated as rounding.
const EMBEDDING_SLACK: f64 = 1e-9;

/// Seed for replication `index` of a run with `master` seed (splitmix64 finaliser).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn rng_for(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FgnSample {
    pub increments: Vec<f64>,
    pub h: HurstParam,
    pub delta: f64,
    pub seed: u64,
}

impl FgnSample {
    pub fn n(&self) -> usize {
        self.increments.len()
    }

    /// `B^H` at the grid points `0, delta, ..., n delta`.
    pub fn path(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.n() + 1);
        let mut acc = 0.0;
        b.push(0.0);
        for &z in &self.increments {
            acc += z;
            b.push(acc);
        }
        b
    }

    pub fn endpoint(&self) -> f64 {
        self.increments.iter().sum()
    }
}

fn check_grid(n: usize, delta: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParam("need at least one increment".into()));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParam(format!("step must be positive, got {delta}")));
    }
    Ok(())
}

/// Circulant-embedding sampler for a stationary Gaussian sequence, reusable
/// across draws of the same size and covariance.
pub struct FgnGenerator {
    n: usize,
    h: HurstParam,
    delta: f64,
    /// `sqrt(lambda_k / m)`
    amp: Vec<f64>,
    fft: Option<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for FgnGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FgnGenerator").field("n", &self.n).field("h", &self.h).field("m", &self.amp.len()).finish()
    }
}

impl FgnGenerator {
    pub fn new(h: HurstParam, n: usize, delta: f64) -> Result<Self> {
        check_grid(n, delta)?;
        let acov = |k: usize| fgn_autocov(k, h, delta);
        Self::from_autocov(acov, n).map(|(amp, fft)| FgnGenerator { n, h, delta, amp, fft })
    }

    /// Embedding for an arbitrary autocovariance; fails when the circulant
    /// extension is not positive semidefinite.
    fn from_autocov<A: Fn(usize) -> f64>(acov: A, n: usize) -> Result<(Vec<f64>, Option<Arc<dyn Fft<f64>>>)> {
        if n == 1 {
            return Ok((vec![acov(0).sqrt()], None));
        }
        let m = (2 * (n - 1)).next_power_of_two();
        let half = m / 2;
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for k in 0..=half {
            let c = acov(k);
            buf[k].re = c;
            if k > 0 && k < half {
                buf[m - k].re = c;
            }
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        fft.process(&mut buf);
        let max = buf.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
        let min = buf.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
        if min < -EMBEDDING_SLACK * max.abs() {
            return Err(Error::Embedding(min / max));
        }
        let amp = buf.iter().map(|c| (c.re.max(0.0) / m as f64).sqrt()).collect();
        Ok((amp, Some(fft)))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Size of the circulant embedding (1 when `n = 1`).
    pub fn embedding_size(&self) -> usize {
        self.amp.len()
    }

    pub fn sample(&self, seed: u64) -> FgnSample {
        let mut out = vec![0.0; self.n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.amp.len()];
        self.sample_into(seed, &mut scratch, &mut out);
        FgnSample { increments: out, h: self.h, delta: self.delta, seed }
    }

    /// Allocation-free draw; `scratch` must have length [`Self::embedding_size`].
    pub fn sample_into(&self, seed: u64, scratch: &mut [Complex64], out: &mut [f64]) {
        let mut rng = rng_for(seed);
        let Some(fft) = &self.fft else {
            let z: f64 = StandardNormal.sample(&mut rng);
            out[0] = self.amp[0] * z;
            return;
        };
        for (s, &a) in scratch.iter_mut().zip(&self.amp) {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *s = Complex64::new(a * re, a * im);
        }
        fft.process(scratch);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o = s.re;
        }
    }
}

/// One fGn draw of `n` increments with step `delta`.
pub fn sample_fgn(h: HurstParam, n: usize, delta: f64, seed: u64) -> Result<FgnSample> {
    Ok(FgnGenerator::new(h, n, delta)?.sample(seed))
}

/// Like [`sample_fgn`], falling back to [`cholesky_fgn`] when the embedding fails.
pub fn sample_fgn_or_cholesky(h: HurstParam, n: usize, delta: f64, seed: u64) -> Result<FgnSample> {
    match FgnGenerator::new(h, n, delta) {
        Ok(g) => Ok(g.sample(seed)),
        Err(Error::Embedding(_)) => cholesky_fgn(h, n, delta, seed),
        Err(e) => Err(e),
    }
}

/// Checks that a stationary autocovariance admits a nonnegative circulant
/// embedding of the size [`sample_fgn`] would use.
pub fn embedding_check<A: Fn(usize) -> f64>(acov: A, n: usize) -> Result<usize> {
    FgnGenerator::from_autocov(acov, n).map(|(amp, _)| amp.len())
}

/// Lower Cholesky factor of a dense symmetric matrix stored row-major.
pub fn cholesky_lower(a: &[f64], n: usize) -> Result<Vec<f64>> {
    if a.len() != n * n {
        return Err(Error::Dimension(format!("expected {n}x{n} matrix")));
    }
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite(j));
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
    }
    Ok(l)
}

/// fGn by dense Cholesky factorisation of the covariance.
pub fn cholesky_fgn(h: HurstParam, n: usize, delta: f64, seed: u64) -> Result<FgnSample> {
    check_grid(n, delta)?;
    if n > CHOLESKY_MAX_N {
        return Err(Error::InvalidParam(format!("dense sampler limited to n <= {CHOLESKY_MAX_N}, got {n}")));
    }
    let row: Vec<f64> = (0..n).map(|k| fgn_autocov(k, h, delta)).collect();
    let cov: Vec<f64> = (0..n * n).map(|ij| row[(ij / n).abs_diff(ij % n)]).collect();
    let l = cholesky_lower(&cov, n)?;
    let mut rng = rng_for(seed);
    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let increments = (0..n).map(|i| (0..=i).map(|k| l[i * n + k] * z[k]).sum()).collect();
    Ok(FgnSample { increments, h, delta, seed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FouPath {
    /// `X_0, ..., X_n`
    pub values: Vec<f64>,
    pub theta: f64,
    pub sigma: f64,
    pub h: HurstParam,
    pub delta: f64,
}

impl FouPath {
    pub fn t_horizon(&self) -> f64 {
        self.delta * (self.values.len() - 1) as f64
    }

    /// Trapezoid rule for `int_0^T X_t^2 dt`.
    pub fn square_integral(&self) -> f64 {
        trapezoid_sq(&self.values, self.delta)
    }
}

pub(crate) fn trapezoid_sq(x: &[f64], delta: f64) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = x[1..n - 1].iter().map(|v| v * v).sum();
    delta * (inner + 0.5 * (x[0] * x[0] + x[n - 1] * x[n - 1]))
}

/// `X_{k+1} = e^{-theta delta} X_k + sigma dB_k`, `X_0 = 0`.
pub fn build_fou(fgn: &FgnSample, theta: f64, sigma: f64) -> Result<FouPath> {
    if !(theta >= 0.0 && theta.is_finite() && sigma.is_finite()) {
        return Err(Error::InvalidParam(format!("bad drift or scale ({theta}, {sigma})")));
    }
    let mut values = Vec::with_capacity(fgn.n() + 1);
    fou_into(&fgn.increments, theta, sigma, fgn.delta, &mut values);
    Ok(FouPath { values, theta, sigma, h: fgn.h, delta: fgn.delta })
}

pub(crate) fn fou_into(dz: &[f64], theta: f64, sigma: f64, delta: f64, out: &mut Vec<f64>) {
    let decay = (-theta * delta).exp();
    out.clear();
    out.push(0.0);
    let mut x = 0.0;
    for &z in dz {
        x = decay * x + sigma * z;
        out.push(x);
    }
}

/// Symmetric Toeplitz kernel matrix `F_ij = f(|i - j| delta)`.
#[derive(Debug, Clone)]
pub struct ToeplitzKernel {
    op: SymToeplitz,
}

impl ToeplitzKernel {
    pub fn new(first_row: Vec<f64>) -> Result<Self> {
        Ok(ToeplitzKernel { op: SymToeplitz::new(first_row)? })
    }

    /// Kernel `f` sampled at the lags between cell midpoints.
    pub fn from_fn<F: Fn(f64) -> f64>(n: usize, delta: f64, f: F) -> Result<Self> {
        Self::new((0..n).map(|k| f(k as f64 * delta)).collect())
    }

    /// `e^{-theta |t - s|}` on a grid of `n` cells.
    pub fn exponential(n: usize, delta: f64, theta: f64) -> Result<Self> {
        Self::from_fn(n, delta, |d| (-theta * d).exp())
    }

    pub fn n(&self) -> usize {
        self.op.n()
    }

    pub fn first_row(&self) -> &[f64] {
        self.op.first_row()
    }

    pub fn operator(&self) -> &SymToeplitz {
        &self.op
    }
}

/// `tr(F C) = sum_k (n - |k|) f_k c_k` for symmetric Toeplitz `F`, `C`.
pub fn toeplitz_trace_product(f: &[f64], c: &[f64]) -> Result<f64> {
    let n = f.len();
    if c.len() != n {
        return Err(Error::Dimension(format!("trace needs equal sizes, got {n} and {}", c.len())));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut s = n as f64 * f[0] * c[0];
    for k in 1..n {
        s += 2.0 * (n - k) as f64 * f[k] * c[k];
    }
    Ok(s)
}

/// Reusable buffers for [`chaos2_form`].
pub struct ChaosWorkspace {
    scratch: Vec<Complex64>,
    y: Vec<f64>,
    trace: f64,
}

impl ChaosWorkspace {
    pub fn new(kern: &ToeplitzKernel, cov: &GridCovariance) -> Result<Self> {
        let n = kern.n();
        if cov.n != n {
            return Err(Error::Dimension(format!("kernel has {n} cells, covariance {}", cov.n)));
        }
        Ok(ChaosWorkspace {
            scratch: vec![Complex64::new(0.0, 0.0); 2 * n],
            y: vec![0.0; n],
            trace: toeplitz_trace_product(kern.first_row(), cov.c.first_row())?,
        })
    }

    /// `z^T F z - tr(F C)`.
    pub fn eval(&mut self, kern: &ToeplitzKernel, z: &[f64]) -> Result<f64> {
        kern.op.matvec_into(z, &mut self.scratch, &mut self.y)?;
        let quad: f64 = z.iter().zip(&self.y).map(|(a, b)| a * b).sum();
        Ok(quad - self.trace)
    }
}

/// Centred quadratic form `z^T F z - tr(F C)` of the increments: the grid
/// version of a double Wiener integral with kernel `F`.
pub fn chaos2_form(kern: &ToeplitzKernel, fgn: &FgnSample, cov: &GridCovariance) -> Result<f64> {
    if fgn.n() != kern.n() {
        return Err(Error::Dimension(format!("kernel has {} cells, sample {}", kern.n(), fgn.n())));
    }
    ChaosWorkspace::new(kern, cov)?.eval(kern, &fgn.increments)
}

/// Same as [`chaos2_form`] by direct O(n^2) summation.
pub fn chaos2_form_direct(kern: &ToeplitzKernel, fgn: &FgnSample, cov: &GridCovariance) -> Result<f64> {
    let n = kern.n();
    if fgn.n() != n || cov.n != n {
        return Err(Error::Dimension("size mismatch in quadratic form".into()));
    }
    let f = kern.first_row();
    let z = &fgn.increments;
    let mut quad = 0.0;
    let mut trace = 0.0;
    for i in 0..n {
        for j in 0..n {
            let fij = f[i.abs_diff(j)];
            quad += z[i] * fij * z[j];
            trace += fij * cov.entry(i, j);
        }
    }
    Ok(quad - trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hinner::grid_cov;

    fn hp(h: f64) -> HurstParam {
        HurstParam::new(h).unwrap()
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
        assert_ne!(derive_seed(7, 3), derive_seed(7, 4));
        assert_ne!(derive_seed(7, 3), derive_seed(8, 3));
    }

    #[test]
    fn determinism() {
        let a = sample_fgn(hp(0.3), 100, 0.1, 5).unwrap();
        let b = sample_fgn(hp(0.3), 100, 0.1, 5).unwrap();
        let c = sample_fgn(hp(0.3), 100, 0.1, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.increments, c.increments);
    }

    #[test]
    fn single_increment() {
        let s = sample_fgn(hp(0.3), 1, 0.25, 1).unwrap();
        assert_eq!(s.n(), 1);
        let c = cholesky_fgn(hp(0.3), 1, 0.25, 1).unwrap();
        assert_eq!(c.n(), 1);
    }

    #[test]
    fn embedding_sizes() {
        assert_eq!(FgnGenerator::new(hp(0.3), 65, 1.0).unwrap().embedding_size(), 128);
        assert_eq!(FgnGenerator::new(hp(0.3), 100, 1.0).unwrap().embedding_size(), 256);
    }

    #[test]
    fn non_embeddable_rejected() {
        // a sharp negative lag-1 correlation with long positive tail
        let acov = |k: usize| match k {
            0 => 1.0,
            1 => -0.9,
            _ => 0.4,
        };
        assert!(matches!(embedding_check(acov, 16), Err(Error::Embedding(_))));
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let l = cholesky_lower(&a, 2).unwrap();
        assert!((l[0] - 2.0).abs() < 1e-15 && (l[2] - 1.0).abs() < 1e-15 && (l[3] - 2f64.sqrt()).abs() < 1e-15);
        assert!(cholesky_lower(&[1.0, 2.0, 2.0, 1.0], 2).is_err());
    }

    #[test]
    fn fou_limits() {
        let s = sample_fgn(hp(0.3), 50, 0.1, 9).unwrap();
        let zero = build_fou(&s, 1.0, 0.0).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
        let b = build_fou(&s, 0.0, 2.0).unwrap();
        for (x, p) in b.values.iter().zip(s.path()) {
            assert!((x - 2.0 * p).abs() < 1e-12);
        }
        assert_eq!(b.values[0], 0.0);
    }

    #[test]
    fn diagonal_kernel_form() {
        let n = 32;
        let s = sample_fgn(hp(0.25), n, 0.5, 2).unwrap();
        let cov = grid_cov(hp(0.25), n, 0.5).unwrap();
        let mut row = vec![0.0; n];
        row[0] = 1.0;
        let k = ToeplitzKernel::new(row).unwrap();
        let v = chaos2_form(&k, &s, &cov).unwrap();
        let want: f64 = s.increments.iter().map(|z| z * z - cov.entry(0, 0)).sum();
        assert!((v - want).abs() < 1e-12);
    }

    #[test]
    fn fft_form_matches_direct() {
        for n in [1usize, 7, 64, 513] {
            let s = sample_fgn(hp(0.3), n, 0.05, n as u64).unwrap();
            let cov = grid_cov(hp(0.3), n, 0.05).unwrap();
            let k = ToeplitzKernel::exponential(n, 0.05, 1.0).unwrap();
            let a = chaos2_form(&k, &s, &cov).unwrap();
            let b = chaos2_form_direct(&k, &s, &cov).unwrap();
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{n}: {a} {b}");
        }
    }

    #[test]
    fn dimension_mismatch() {
        let s = sample_fgn(hp(0.3), 8, 0.1, 1).unwrap();
        let cov = grid_cov(hp(0.3), 8, 0.1).unwrap();
        let k = ToeplitzKernel::exponential(9, 0.1, 1.0).unwrap();
        assert!(matches!(chaos2_form(&k, &s, &cov), Err(Error::Dimension(_))));
    }
}
