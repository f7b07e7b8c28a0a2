//! Inner products on the Hilbert space of fBm for `H < 1/2`, computed four
//! independent ways, plus step-function grid oracles for the space and its
//! tensor square.
//!
//! * measure form: `-int nu_f(ds) int g(t) dR/dt(s, t) dt`
//! * disjoint supports: `alpha_H int int f(s) g(t) |t-s|^{2H-2}`
//! * window form: far-field kernel outside a band `|t-s| > eps`, one
//!   integration by parts inside it
//! * spectral form: `c_H int F f conj(F g) |xi|^{1-2H}`

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::bvfunc::{BVFunction, SignedMeasure};
use crate::error::{Error, Result};
use crate::quad::{try_integrate_1d, try_integrate_anchored, QuadConfig, SingularityHint};
use crate::specfun::{alpha_h, fgn_autocov, gamma_fn, HurstParam};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IPMethod {
    JolisMeasure,
    WindowDecomposed,
    DisjointSupport,
    FourierSpectral,
    GridOracle,
}

impl IPMethod {
    pub const ALL: [IPMethod; 5] = [
        IPMethod::JolisMeasure,
        IPMethod::WindowDecomposed,
        IPMethod::DisjointSupport,
        IPMethod::FourierSpectral,
        IPMethod::GridOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IPMethod::JolisMeasure => "jolis",
            IPMethod::WindowDecomposed => "window",
            IPMethod::DisjointSupport => "disjoint",
            IPMethod::FourierSpectral => "fourier",
            IPMethod::GridOracle => "grid",
        }
    }

    pub fn parse(s: &str) -> Result<IPMethod> {
        IPMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParam(format!("unknown inner-product method '{s}'")))
    }
}

/// Cell count used by [`inner_product`] for the grid oracle.
pub const DEFAULT_GRID_CELLS: usize = 8192;

pub fn inner_product(f: &BVFunction, g: &BVFunction, h: HurstParam, method: IPMethod, cfg: &QuadConfig) -> Result<f64> {
    match method {
        IPMethod::JolisMeasure => ip_jolis(f, g, h, cfg),
        IPMethod::WindowDecomposed => ip_window(f, g, h, 1.0, 1.0, cfg),
        IPMethod::DisjointSupport => ip_disjoint(f, g, h, cfg),
        IPMethod::FourierSpectral => ip_fourier(f, g, h, cfg),
        IPMethod::GridOracle => ip_grid_oracle(f, g, h, DEFAULT_GRID_CELLS),
    }
}

fn require_rough(h: HurstParam) -> Result<()> {
    if h.is_brownian() {
        return Err(Error::InvalidParam("formula paths require H < 1/2".into()));
    }
    Ok(())
}

/// `sgn(x) |x|^q`
#[inline]
fn spow(x: f64, q: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(q)
    }
}

/// Measure form with `g` supplied as a closure supported on `g_range`; `g_breaks`
/// are the points where `g` jumps or kinks.
pub fn ip_jolis_general<G: Fn(f64) -> f64>(
    nu_f: &SignedMeasure,
    g: G,
    g_range: (f64, f64),
    g_breaks: &[f64],
    h: HurstParam,
    cfg: &QuadConfig,
) -> Result<f64> {
    require_rough(h)?;
    let hv = h.value();
    let q = 2.0 * hv - 1.0;
    let (lo, hi) = g_range;
    let inner_cfg = cfg.scaled(0.1);
    let mut inner_hints: Vec<SingularityHint> = g_breaks.iter().map(|&c| SingularityHint::breakpoint(c)).collect();
    inner_hints.push(SingularityHint::new(0.0, q));
    let origin_term = try_integrate_anchored(|n| Ok(g(n.x) * n.x.powf(q)), lo, hi, &inner_hints, &inner_cfg)?.value;
    let inner = |s: f64| -> Result<f64> {
        let mut hints = inner_hints.clone();
        hints.push(SingularityHint::new(s, q));
        let e = try_integrate_anchored(|n| Ok(g(n.x) * spow(n.diff(s), q)), lo, hi, &hints, &inner_cfg)?;
        Ok(hv * (origin_term - e.value))
    };
    let outer_hints: Vec<SingularityHint> = g_breaks.iter().map(|&c| SingularityHint::breakpoint(c)).collect();
    Ok(-nu_f.try_integrate_against(inner, &outer_hints, cfg)?)
}

/// `-int nu_f(ds) int g(t) dR/dt(s, t) dt`.
pub fn ip_jolis(f: &BVFunction, g: &BVFunction, h: HurstParam, cfg: &QuadConfig) -> Result<f64> {
    let Some(range) = g.support() else { return Ok(0.0) };
    if f.pieces().is_empty() {
        return Ok(0.0);
    }
    ip_jolis_general(&f.to_measure(), |t| g.eval(t), range, &g.breakpoints(), h, cfg)
        .map_err(|e| e.context("measure-form inner product"))
}

/// `alpha_H int int f(s) g(t) |t-s|^{2H-2}` for supports meeting in at most a point.
pub fn ip_disjoint(f: &BVFunction, g: &BVFunction, h: HurstParam, cfg: &QuadConfig) -> Result<f64> {
    require_rough(h)?;
    let (Some((fa, fb)), Some((ga, gb))) = (f.support(), g.support()) else { return Ok(0.0) };
    let (left, right) = if fb <= ga {
        (f, g)
    } else if gb <= fa {
        (g, f)
    } else {
        return Err(Error::Overlap(fa.max(ga), fb.min(gb)));
    };
    let (la, lb) = left.support().unwrap();
    let (ra, rb) = right.support().unwrap();
    let p = 2.0 * h.value() - 2.0;
    let q = 2.0 * h.value() - 1.0;
    let inner_cfg = cfg.scaled(0.1);
    let rbreaks = right.breakpoints();
    // inner integral in the offset u = t - s, given the gap ra - s exactly
    let inner = |s: f64, gap: f64| -> Result<f64> {
        let mut hints: Vec<SingularityHint> =
            rbreaks.iter().map(|&c| SingularityHint::breakpoint((c - ra) + gap)).collect();
        hints.push(SingularityHint::new(0.0, p));
        let e = try_integrate_1d(|u| Ok(right.eval(s + u) * u.powf(p)), gap, gap + (rb - ra), &hints, &inner_cfg)?;
        Ok(e.value)
    };
    let mut outer_hints: Vec<SingularityHint> = left.breakpoints().into_iter().map(SingularityHint::breakpoint).collect();
    if lb == ra {
        outer_hints.push(SingularityHint::new(lb, q));
    }
    let e = try_integrate_anchored(|n| Ok(left.eval(n.x) * inner(n.x, -n.diff(ra))?), la, lb, &outer_hints, cfg)
        .map_err(|e| e.context("disjoint-support inner product"))?;
    Ok(alpha_h(h) * e.value)
}

/// Window form with band half-widths `eps1` (left) and `eps2` (right).
pub fn ip_window(f: &BVFunction, g: &BVFunction, h: HurstParam, eps1: f64, eps2: f64, cfg: &QuadConfig) -> Result<f64> {
    require_rough(h)?;
    let t_hor = f.t_horizon().max(g.t_horizon());
    if !(eps1 > 0.0 && eps2 > 0.0 && eps1 < t_hor && eps2 < t_hor) {
        return Err(Error::InvalidParam(format!("window widths must lie in (0, T), got ({eps1}, {eps2})")));
    }
    let (Some((fa, fb)), Some((ga, gb))) = (f.support(), g.support()) else { return Ok(0.0) };
    let hv = h.value();
    let q = 2.0 * hv - 1.0;
    let p = 2.0 * hv - 2.0;
    let alpha = alpha_h(h);
    let inner_cfg = cfg.scaled(0.1);
    let fbreaks = f.breakpoints();
    let gbreaks = g.breakpoints();

    // alpha int_{eps}^T v(t) int_0^{t-eps} u(s) (t-s)^{2H-2} ds dt
    let far = |u: &BVFunction, (ua, ub): (f64, f64), v: &BVFunction, (va, vb): (f64, f64), ubr: &[f64], vbr: &[f64], eps: f64| -> Result<f64> {
        let lo = va.max(ua + eps);
        let hi = vb;
        if lo >= hi {
            return Ok(0.0);
        }
        let inner_hints: Vec<SingularityHint> = ubr.iter().map(|&c| SingularityHint::breakpoint(c)).collect();
        let mut outer_hints: Vec<SingularityHint> = vbr.iter().map(|&c| SingularityHint::breakpoint(c)).collect();
        outer_hints.extend(ubr.iter().map(|&c| SingularityHint::breakpoint(c + eps)));
        let e = try_integrate_1d(
            |t| {
                let top = (t - eps).min(ub);
                if top <= ua {
                    return Ok(0.0);
                }
                let inner = try_integrate_1d(|s| Ok(u.eval(s) * (t - s).powf(p)), ua, top, &inner_hints, &inner_cfg)?;
                Ok(v.eval(t) * inner.value)
            },
            lo,
            hi,
            &outer_hints,
            cfg,
        )?;
        Ok(alpha * e.value)
    };
    let t1 = far(f, (fa, fb), g, (ga, gb), &fbreaks, &gbreaks, eps1).map_err(|e| e.context("window form, left band"))?;
    let t2 = far(g, (ga, gb), f, (fa, fb), &gbreaks, &fbreaks, eps2).map_err(|e| e.context("window form, right band"))?;

    let mut outer_hints: Vec<SingularityHint> = gbreaks.iter().map(|&c| SingularityHint::breakpoint(c)).collect();
    for &c in &fbreaks {
        outer_hints.push(SingularityHint::new(c, q));
        outer_hints.push(SingularityHint::breakpoint(c + eps1));
        outer_hints.push(SingularityHint::breakpoint(c - eps2));
    }
    outer_hints.push(SingularityHint::new(0.0, q));
    outer_hints.push(SingularityHint::new(t_hor, q));
    outer_hints.push(SingularityHint::breakpoint(eps1));
    outer_hints.push(SingularityHint::breakpoint(t_hor - eps2));
    let near = try_integrate_anchored(
        |n| {
            let t = n.x;
            let gt = g.eval(t);
            if gt == 0.0 {
                return Ok(0.0);
            }
            let nu = f.restrict_window(t, eps1, eps2).to_measure();
            let tq = t.powf(q);
            let mut v = 0.0;
            for atom in &nu.atoms {
                v += atom.mass * (tq - spow(n.diff(atom.location), q));
            }
            for piece in &nu.density {
                // offsets u = s - t; sgn(t - s)|t - s|^q = -sgn(u)|u|^q
                let ua = -n.diff(piece.a);
                let ub = -n.diff(piece.b);
                let e = try_integrate_1d(
                    |u| Ok(piece.eval(t + u) * spow(u, q)),
                    ua,
                    ub,
                    &[SingularityHint::new(0.0, q)],
                    &inner_cfg,
                )?;
                v += tq * piece.integral()? + e.value;
            }
            Ok(gt * v)
        },
        ga,
        gb,
        &outer_hints,
        cfg,
    )
    .map_err(|e| e.context("window form, near band"))?;
    Ok(t1 + t2 - hv * near.value)
}

/// `c * e^{-i xi e} (r - i xi)^{-m}`: one endpoint contribution to a Fourier transform.
#[derive(Debug, Clone, Copy)]
struct SpectralItem {
    e: f64,
    r: f64,
    m: i32,
    c: f64,
}

fn spectral_items(f: &BVFunction) -> Result<Vec<SpectralItem>> {
    let mut items = Vec::new();
    for piece in f.pieces() {
        for term in &piece.terms {
            if !term.is_integer_power() {
                return Err(Error::InvalidParam(format!(
                    "spectral form needs integer powers, got s^{}",
                    term.power
                )));
            }
            let k = term.power as i32;
            for (x, sign) in [(piece.b, 1.0), (piece.a, -1.0)] {
                let base = sign * term.coef * (term.rate * (x - term.shift)).exp();
                let mut falling = 1.0;
                for j in 0..=k {
                    let c = base * falling * if j % 2 == 0 { 1.0 } else { -1.0 } * x.powi(k - j);
                    if c != 0.0 {
                        items.push(SpectralItem { e: x, r: term.rate, m: j + 1, c });
                    }
                    falling *= (k - j) as f64;
                }
            }
        }
    }
    Ok(items)
}

/// `F f(xi) = int f(s) e^{-i xi s} ds`, stable for small `|xi|`.
fn fourier_transform(f: &BVFunction, xi: f64, gl: &(Vec<f64>, Vec<f64>)) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for piece in f.pieces() {
        let (a, b) = (piece.a, piece.b);
        for term in &piece.terms {
            let z = Complex64::new(term.rate, -xi);
            let k = term.power as i32;
            if z.norm() * (b - a) < 2.0 {
                let half = 0.5 * (b - a);
                let mid = 0.5 * (a + b);
                for (y, w) in gl.0.iter().zip(&gl.1) {
                    let s = mid + half * y;
                    acc += Complex64::from_polar(w * half * term.eval(s), -xi * s);
                }
            } else {
                let anti = |x: f64| -> Complex64 {
                    let mut sum = Complex64::new(0.0, 0.0);
                    let mut falling = 1.0;
                    let mut zp = z;
                    for j in 0..=k {
                        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                        sum += sign * falling * x.powi(k - j) / zp;
                        falling *= (k - j) as f64;
                        zp *= z;
                    }
                    sum * Complex64::from_polar((term.rate * (x - term.shift)).exp(), -xi * x)
                };
                acc += term.coef * (anti(b) - anti(a));
            }
        }
    }
    acc
}

/// Spectral form: `c_H int_R F f conj(F g) |xi|^{1-2H} d xi`.
///
/// `[0, Xi]` is integrated on the real axis; the tail `[Xi, inf)` is integrated
/// exactly along rays `Xi + kappa y` on which each oscillatory endpoint product
/// decays exponentially.
pub fn ip_fourier(f: &BVFunction, g: &BVFunction, h: HurstParam, cfg: &QuadConfig) -> Result<f64> {
    require_rough(h)?;
    if f.pieces().is_empty() || g.pieces().is_empty() {
        return Ok(0.0);
    }
    let hv = h.value();
    let expo = 1.0 - 2.0 * hv;
    let c_h = gamma_fn(2.0 * hv + 1.0)? * (std::f64::consts::PI * hv).sin() / (2.0 * std::f64::consts::PI);
    let fi = spectral_items(f)?;
    let gi = spectral_items(g)?;
    let max_rate = fi.iter().chain(gi.iter()).map(|it| it.r.abs()).fold(0.0, f64::max);
    let xi_cut = (10.0 * max_rate).max(20.0);
    let span = {
        let (fa, fb) = f.support().unwrap();
        let (ga, gb) = g.support().unwrap();
        fb.max(gb) - fa.min(ga)
    };
    let gl = crate::quad::gauss_legendre(24)?;

    let step = (std::f64::consts::PI / span.max(1e-3)).min(1.0);
    let mut hints = vec![SingularityHint::breakpoint(0.0)];
    let mut x = step;
    while x < xi_cut {
        hints.push(SingularityHint::breakpoint(x));
        x += step;
    }
    let body = try_integrate_1d(
        |xi| {
            let v = fourier_transform(f, xi, &gl) * fourier_transform(g, xi, &gl).conj();
            Ok(v.re * xi.powf(expo))
        },
        0.0,
        xi_cut,
        &hints,
        cfg,
    )
    .map_err(|e| e.context("spectral form, body"))?;

    let mut groups: Vec<(f64, Vec<(SpectralItem, SpectralItem)>)> = Vec::new();
    for a in &fi {
        for b in &gi {
            let d = a.e - b.e;
            match groups.iter_mut().find(|(dd, _)| *dd == d) {
                Some((_, v)) => v.push((*a, *b)),
                None => groups.push((d, vec![(*a, *b)])),
            }
        }
    }
    let i = Complex64::new(0.0, 1.0);
    let mut tail = Complex64::new(0.0, 0.0);
    let tail_hint = [SingularityHint::new(0.0, 2.0 * hv - 1.0)];
    for (d, pairs) in &groups {
        let kappa = if *d > 0.0 {
            -i
        } else if *d < 0.0 {
            i
        } else {
            Complex64::new(1.0, 0.0)
        };
        let eval = |u: f64| -> Complex64 {
            let y = xi_cut * (1.0 - u) / u;
            let xi = xi_cut + kappa * y;
            let osc = (-i * xi * *d).exp();
            if osc.norm() == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let mut r = Complex64::new(0.0, 0.0);
            for (a, b) in pairs {
                r += a.c * b.c * (Complex64::new(a.r, 0.0) - i * xi).powi(-a.m) * (Complex64::new(b.r, 0.0) + i * xi).powi(-b.m);
            }
            r * osc * xi.powf(expo) * kappa * xi_cut / (u * u)
        };
        let re = try_integrate_1d(|u| Ok(eval(u).re), 0.0, 1.0, &tail_hint, cfg);
        let im = try_integrate_1d(|u| Ok(eval(u).im), 0.0, 1.0, &tail_hint, cfg);
        let (re, im) = (
            re.map_err(|e| e.context("spectral form, tail"))?,
            im.map_err(|e| e.context("spectral form, tail"))?,
        );
        tail += Complex64::new(re.value, im.value);
    }
    Ok(2.0 * c_h * (body.value + tail.re))
}

/// Symmetric Toeplitz operator with an FFT (circulant embedding) mat-vec.
#[derive(Clone)]
pub struct SymToeplitz {
    first_row: Vec<f64>,
    spectrum: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SymToeplitz {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymToeplitz").field("n", &self.first_row.len()).finish()
    }
}

impl SymToeplitz {
    pub fn new(first_row: Vec<f64>) -> Result<Self> {
        let n = first_row.len();
        if n == 0 {
            return Err(Error::Dimension("empty Toeplitz row".into()));
        }
        let m = 2 * n;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(m);
        let inv = planner.plan_fft_inverse(m);
        let mut spectrum = vec![Complex64::new(0.0, 0.0); m];
        for (k, &v) in first_row.iter().enumerate() {
            spectrum[k].re = v;
            if k > 0 {
                spectrum[m - k].re = v;
            }
        }
        fwd.process(&mut spectrum);
        Ok(SymToeplitz { first_row, spectrum, fwd, inv })
    }

    pub fn n(&self) -> usize {
        self.first_row.len()
    }

    pub fn first_row(&self) -> &[f64] {
        &self.first_row
    }

    #[inline]
    pub fn entry(&self, i: usize, k: usize) -> f64 {
        self.first_row[i.abs_diff(k)]
    }

    /// `y = A x` in O(n log n); `scratch` must have length `2n`.
    pub fn matvec_into(&self, x: &[f64], scratch: &mut [Complex64], y: &mut [f64]) -> Result<()> {
        let n = self.n();
        if x.len() != n || y.len() != n || scratch.len() != 2 * n {
            return Err(Error::Dimension(format!("Toeplitz mat-vec expects length {n}")));
        }
        for (k, s) in scratch.iter_mut().enumerate() {
            *s = Complex64::new(if k < n { x[k] } else { 0.0 }, 0.0);
        }
        self.fwd.process(scratch);
        for (s, l) in scratch.iter_mut().zip(&self.spectrum) {
            *s *= l;
        }
        self.inv.process(scratch);
        let scale = 1.0 / (2 * n) as f64;
        for (yk, s) in y.iter_mut().zip(scratch.iter()) {
            *yk = s.re * scale;
        }
        Ok(())
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut scratch = vec![Complex64::new(0.0, 0.0); 2 * self.n()];
        let mut y = vec![0.0; self.n()];
        self.matvec_into(x, &mut scratch, &mut y)?;
        Ok(y)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.n();
        Array2::from_shape_fn((n, n), |(i, k)| self.entry(i, k))
    }
}

/// Covariance of fBm increments on a uniform grid of `n` cells of width `delta`.
#[derive(Debug, Clone)]
pub struct GridCovariance {
    pub n: usize,
    pub delta: f64,
    pub h: HurstParam,
    pub c: SymToeplitz,
}

impl GridCovariance {
    pub fn entry(&self, i: usize, k: usize) -> f64 {
        self.c.entry(i, k)
    }
}

pub fn grid_cov(h: HurstParam, n: usize, delta: f64) -> Result<GridCovariance> {
    if n == 0 || !(delta > 0.0) {
        return Err(Error::InvalidParam(format!("grid needs n >= 1 and delta > 0, got n = {n}, delta = {delta}")));
    }
    let row = (0..n).map(|k| fgn_autocov(k, h, delta)).collect();
    Ok(GridCovariance { n, delta, h, c: SymToeplitz::new(row)? })
}

/// Cell averages of `f` over `n` uniform cells of `[0, T]`.
pub fn cell_averages(f: &BVFunction, n: usize) -> Result<Vec<f64>> {
    let t = f.t_horizon();
    let delta = t / n as f64;
    let mut out = vec![0.0; n];
    for p in f.pieces() {
        let i0 = ((p.a / delta).floor() as usize).min(n - 1);
        let i1 = ((p.b / delta).ceil() as usize).min(n);
        for (i, slot) in out.iter_mut().enumerate().take(i1).skip(i0) {
            let lo = (i as f64 * delta).max(p.a);
            let hi = ((i + 1) as f64 * delta).min(p.b);
            if hi > lo {
                for term in &p.terms {
                    *slot += term.integral(lo, hi)? / delta;
                }
            }
        }
    }
    Ok(out)
}

/// Step-function oracle: `sum_{i,k} fbar_i gbar_k C_{ik}` on `n` cells.
pub fn ip_grid_oracle(f: &BVFunction, g: &BVFunction, h: HurstParam, n: usize) -> Result<f64> {
    let t = f.t_horizon().max(g.t_horizon());
    let f = BVFunction::new(f.pieces().to_vec(), t)?;
    let g = BVFunction::new(g.pieces().to_vec(), t)?;
    let cov = grid_cov(h, n, t / n as f64)?;
    let fa = cell_averages(&f, n)?;
    let ga = cell_averages(&g, n)?;
    let cg = cov.c.matvec(&ga)?;
    Ok(fa.iter().zip(&cg).map(|(x, y)| x * y).sum())
}

/// `sum F_ij G_kl C_ik C_jl = trace(C F C G^T)`.
pub fn tensor_ip_grid_oracle(f: &Array2<f64>, g: &Array2<f64>, cov: &GridCovariance) -> Result<f64> {
    let n = cov.n;
    if f.dim() != (n, n) || g.dim() != (n, n) {
        return Err(Error::Dimension(format!("tensor oracle expects {n}x{n} grids")));
    }
    let c = cov.c.to_dense();
    let cfc = c.dot(f).dot(&c);
    Ok((&cfc * g).sum())
}

/// Fixed battery of twelve function pairs on `[0, 4]` used for cross-method checks.
pub fn reference_battery() -> Vec<(&'static str, BVFunction, BVFunction)> {
    use crate::bvfunc::{ExpPolyTerm as E, Piece};
    let t = 4.0;
    let ind = |a: f64, b: f64| BVFunction::indicator(a, b, t).unwrap();
    let one = |a: f64, b: f64, terms: Vec<E>| BVFunction::single(a, b, terms, t).unwrap();
    vec![
        ("disjoint indicators", ind(0.0, 1.0), ind(2.0, 3.0)),
        ("same indicator", ind(0.0, 2.0), ind(0.0, 2.0)),
        ("overlapping indicators", ind(0.0, 1.0), ind(0.5, 2.5)),
        ("decay vs growth", one(0.0, 2.0, vec![E::new(1.0, 0.0, -1.0)]), one(1.0, 3.0, vec![E::new(1.0, 0.0, 1.0)])),
        (
            "exp kernel slices",
            one(0.0, 3.0, vec![E::new(1.0, 0.0, -1.0)]),
            one(0.0, 3.0, vec![E::exp_shifted(1.0, 1.0, 3.0)]),
        ),
        ("ramp vs middle", one(0.0, 3.0, vec![E::new(1.0, 1.0, 0.0)]), ind(1.0, 2.0)),
        (
            "quadratic vs fast decay",
            one(0.5, 2.0, vec![E::constant(1.0), E::new(1.0, 2.0, 0.0)]),
            one(0.0, 3.0, vec![E::new(1.0, 0.0, -2.0)]),
        ),
        (
            "two pieces vs full",
            BVFunction::new(
                vec![Piece::new(0.0, 1.0, vec![E::constant(2.0)]), Piece::new(1.0, 3.0, vec![E::new(1.0, 0.0, -1.0)])],
                t,
            )
            .unwrap(),
            ind(0.0, 3.0),
        ),
        ("gamma bumps", one(0.0, 3.0, vec![E::new(1.0, 1.0, -1.0)]), one(0.0, 3.0, vec![E::new(1.0, 1.0, -1.0)])),
        ("growth vs negative step", one(0.25, 1.75, vec![E::new(1.0, 0.0, 0.5)]), one(1.25, 2.875, vec![E::constant(-1.0)])),
        ("touching indicators", ind(0.0, 1.0), ind(1.0, 2.0)),
        ("separated exp pieces", one(1.5, 3.0, vec![E::exp_shifted(1.0, -1.0, 1.0)]), ind(0.0, 0.5).scale(3.0)),
    ]
}
