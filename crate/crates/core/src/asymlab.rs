//! The tensor norm of `f_T(t, s) = e^{-theta|t-s|}` on `[0, T]^2`, its split
//! into far-field, mixed and near-diagonal terms, the linear asymptotes of
//! those terms in `T`, and the cross term against `h_T = phi_T (x) phi_T`.
//!
//! Every four-fold term has the shape
//!
//! ```text
//! int ds1 dt1 e^{-|s1-t1|} int K_s(s1, ds2) int K_t(t1, dt2) C(s2 - t2)
//! ```
//!
//! with side kernels `K` drawn from {far below, far above, near band, band
//! edge atoms} and coupling `C(z) = e^{-|z|}` or `sgn(z) e^{-|z|}`. Writing
//! the four points relative to `s1` as offsets, the position integral is a
//! piecewise exponential-linear function integrated exactly; the two kernel
//! offsets are integrated by quadrature. Atoms clipped at `0` or `T` live on
//! unit strips and are added as three-level corrections.

use std::f64::consts::E;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bvfunc::{BVFunction, ExpPolyTerm, Piece};
use crate::error::{Error, Result};
use crate::hinner::{grid_cov, ip_jolis, tensor_ip_grid_oracle};
use crate::quad::{integrate_semi_inf, try_integrate_1d, try_integrate_anchored, ExpDecay, QuadConfig, SingularityHint};
use crate::specfun::{alpha_h, ft_norm_slope, gamma_fn, HurstParam};

/// Strip corrections decay like `e^{-distance}`; beyond this they are below
/// double precision.
const STRIP_REACH: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FtKernelParams {
    pub t_horizon: f64,
    pub theta: f64,
    pub h: HurstParam,
}

impl FtKernelParams {
    pub fn new(t_horizon: f64, theta: f64, h: HurstParam) -> Result<Self> {
        if !(t_horizon > 0.0 && t_horizon.is_finite()) {
            return Err(Error::InvalidParam(format!("horizon must be positive, got {t_horizon}")));
        }
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::InvalidParam(format!("theta must be positive, got {theta}")));
        }
        Ok(FtKernelParams { t_horizon, theta, h })
    }

    /// Horizon after rescaling time so that theta = 1.
    pub fn unit_horizon(&self) -> f64 {
        self.theta * self.t_horizon
    }

    /// Factor `theta^{-4H}` relating the tensor norms at theta and at 1.
    pub fn tensor_scale(&self) -> f64 {
        self.theta.powf(-4.0 * self.h.value())
    }

    fn require_unit_horizon(&self, min: f64) -> Result<f64> {
        let t = self.unit_horizon();
        if t < min {
            return Err(Error::InvalidParam(format!("theta * T must be at least {min}, got {t}")));
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MTermBreakdown {
    pub m11: f64,
    pub m12: f64,
    pub m31: f64,
    pub m32: f64,
    pub m33: f64,
    pub total: f64,
}

impl MTermBreakdown {
    pub fn compose(h: HurstParam, m11: f64, m12: f64, m31: f64, m32: f64, m33: f64) -> Self {
        let a = alpha_h(h);
        let total = m33 + 2.0 * (a * a * (m11 + m12) - a * (m31 + m32));
        MTermBreakdown { m11, m12, m31, m32, m33, total }
    }

    pub fn scaled(&self, c: f64) -> Self {
        MTermBreakdown {
            m11: self.m11 * c,
            m12: self.m12 * c,
            m31: self.m31 * c,
            m32: self.m32 * c,
            m33: self.m33 * c,
            total: self.total * c,
        }
    }
}

/// The four-fold integrals making up the norm. `Diag` is the diagonal line
/// part of the mixed derivative of `e^{-|s2-t2|}` inside the near band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AppendixIntegralId {
    M11,
    M12,
    N,
    Ntilde,
    U,
    Utilde,
    L,
    P,
    Q,
    Diag,
}

impl AppendixIntegralId {
    pub const ALL: [AppendixIntegralId; 10] = [
        AppendixIntegralId::M11,
        AppendixIntegralId::M12,
        AppendixIntegralId::N,
        AppendixIntegralId::Ntilde,
        AppendixIntegralId::U,
        AppendixIntegralId::Utilde,
        AppendixIntegralId::L,
        AppendixIntegralId::P,
        AppendixIntegralId::Q,
        AppendixIntegralId::Diag,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AppendixIntegralId::M11 => "M11",
            AppendixIntegralId::M12 => "M12",
            AppendixIntegralId::N => "N",
            AppendixIntegralId::Ntilde => "Ntilde",
            AppendixIntegralId::U => "U",
            AppendixIntegralId::Utilde => "Utilde",
            AppendixIntegralId::L => "L",
            AppendixIntegralId::P => "P",
            AppendixIntegralId::Q => "Q",
            AppendixIntegralId::Diag => "Diag",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        AppendixIntegralId::ALL
            .into_iter()
            .find(|id| id.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParam(format!("unknown integral id '{s}'")))
    }

    fn layout(self) -> Option<(Side, Side, Coupling)> {
        use Coupling::*;
        use Side::*;
        Some(match self {
            AppendixIntegralId::M11 => (Below, Below, Plain),
            AppendixIntegralId::M12 => (Below, Above, Plain),
            AppendixIntegralId::N => (Near, Below, Signed),
            AppendixIntegralId::Ntilde => (Atoms, Below, Plain),
            AppendixIntegralId::U => (Near, Above, Signed),
            AppendixIntegralId::Utilde => (Atoms, Above, Plain),
            AppendixIntegralId::L => (Near, Near, Plain),
            AppendixIntegralId::P => (Atoms, Near, Signed),
            AppendixIntegralId::Q => (Atoms, Atoms, Plain),
            AppendixIntegralId::Diag => return None,
        })
    }
}

impl std::fmt::Display for AppendixIntegralId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Partner kernel of one side, in the offset `a = s1 - s2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    /// `a >= 1`, weight `a^{2H-2}`
    Below,
    /// `a <= -1`, weight `|a|^{2H-2}`
    Above,
    /// `|a| <= 1`, weight `sgn(a)|a|^{2H-1}`
    Near,
    /// unit masses at `a = 1` and `a = -1` (band edges), clipped to `[0, T]`
    Atoms,
}

impl Side {
    fn reflect(self) -> Side {
        match self {
            Side::Below => Side::Above,
            Side::Above => Side::Below,
            s => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Coupling {
    Plain,
    Signed,
}

impl Coupling {
    #[inline]
    fn eval(self, z: f64) -> f64 {
        let e = (-z.abs()).exp();
        match self {
            Coupling::Plain => e,
            Coupling::Signed => sgn0(z) * e,
        }
    }
}

#[inline]
fn sgn0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn spow(x: f64, q: f64) -> f64 {
    sgn0(x) * x.abs().powf(q)
}

// ---------------------------------------------------------------------------
// position integral

/// `(e^z - 1)/z`
fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        1.0 + z / 2.0 + z * z / 6.0
    } else {
        z.exp_m1() / z
    }
}

/// `int_0^1 t e^{zt} dt`
fn phi2(z: f64) -> f64 {
    if z.abs() < 0.5 {
        // sum z^n / (n! (n+2))
        let mut term = 1.0;
        let mut sum = 0.5;
        for n in 1..30 {
            term *= z / n as f64;
            sum += term / (n as f64 + 2.0);
        }
        sum
    } else {
        (z.exp() * (z - 1.0) + 1.0) / (z * z)
    }
}

/// `int_0^w e^{e0 + k y} (l0 + (l1 - l0) y / w) dy`, stable for any sign of `k`.
fn exp_lin(e0: f64, k: f64, w: f64, l0: f64, l1: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    if k > 0.0 {
        return exp_lin(e0 + k * w, -k, w, l1, l0);
    }
    let z = k * w;
    e0.exp() * w * (l0 * phi1(z) + (l1 - l0) * phi2(z))
}

/// Spread of the points `{0, -x, -a, -x-b}`.
#[inline]
fn spread4(x: f64, a: f64, b: f64) -> f64 {
    let p = [0.0, -x, -a, -x - b];
    let mut lo = p[0];
    let mut hi = p[0];
    for &v in &p[1..] {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    hi - lo
}

/// `int dx e^{-|x|} C(x - a + b) (T - spread4(x, a, b))_+`: the integral over
/// where the configuration sits in `[0, T]` and over the relative shift of
/// the two pairs.
fn position_integral(a: f64, b: f64, t: f64, coupling: Coupling) -> f64 {
    let c = a - b;
    let mut bps = [0.0, a, -b, c];
    bps.sort_by(|x, y| x.total_cmp(y));
    let sp = |x: f64| spread4(x, a, b);
    let (im, _) = bps
        .iter()
        .enumerate()
        .map(|(i, &x)| (i, sp(x)))
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .unwrap();
    if sp(bps[im]) >= t {
        return 0.0;
    }
    // spread is convex and piecewise linear with slopes -1 / +1 outside the kinks
    let mut xr = None;
    for w in bps[im..].windows(2) {
        let (s0, s1) = (sp(w[0]), sp(w[1]));
        if s1 >= t {
            xr = Some(w[0] + (w[1] - w[0]) * (t - s0) / (s1 - s0));
            break;
        }
    }
    let xr = xr.unwrap_or_else(|| bps[3] + (t - sp(bps[3])));
    let mut xl = None;
    for w in bps[..=im].windows(2).rev() {
        let (s0, s1) = (sp(w[0]), sp(w[1]));
        if s0 >= t {
            xl = Some(w[1] - (w[1] - w[0]) * (t - s1) / (s0 - s1));
            break;
        }
    }
    let xl = xl.unwrap_or_else(|| bps[0] - (t - sp(bps[0])));

    let mut nodes = Vec::with_capacity(6);
    nodes.push(xl);
    nodes.extend(bps.iter().copied().filter(|&x| x > xl && x < xr));
    nodes.push(xr);
    let mut total = 0.0;
    for w in nodes.windows(2) {
        let (u, v) = (w[0], w[1]);
        if v <= u {
            continue;
        }
        let m = 0.5 * (u + v);
        let k = -sgn0(m) - sgn0(m - c);
        let e0 = -u.abs() - (u - c).abs();
        let sign = match coupling {
            Coupling::Plain => 1.0,
            Coupling::Signed => sgn0(m - c),
        };
        let l0 = (t - sp(u)).max(0.0);
        let l1 = (t - sp(v)).max(0.0);
        total += sign * exp_lin(e0, k, v - u, l0, l1);
    }
    total
}

// ---------------------------------------------------------------------------
// kernel-offset quadrature

struct Exps {
    /// `2H - 1`
    q: f64,
    /// `2H - 2`
    p: f64,
}

impl Exps {
    fn new(h: HurstParam) -> Self {
        let hv = h.value();
        Exps { q: 2.0 * hv - 1.0, p: 2.0 * hv - 2.0 }
    }
}

fn breakpoints_in(points: &[f64], lo: f64, hi: f64) -> Vec<SingularityHint> {
    points.iter().filter(|&&x| x > lo && x < hi).map(|&x| SingularityHint::breakpoint(x)).collect()
}

/// `int K(da) f(a)` over the offset range of one side kernel.
fn offset_integral<F: FnMut(f64) -> Result<f64>>(
    side: Side,
    t: f64,
    ex: &Exps,
    kinks: &[f64],
    cfg: &QuadConfig,
    mut f: F,
) -> Result<f64> {
    match side {
        Side::Below => {
            let hints = breakpoints_in(kinks, 1.0, t);
            Ok(try_integrate_1d(|a| Ok(a.powf(ex.p) * f(a)?), 1.0, t, &hints, cfg)?.value)
        }
        Side::Above => {
            let hints = breakpoints_in(kinks, -t, -1.0);
            Ok(try_integrate_1d(|a| Ok((-a).powf(ex.p) * f(a)?), -t, -1.0, &hints, cfg)?.value)
        }
        Side::Near => {
            let mut hints = breakpoints_in(kinks, -1.0, 1.0);
            hints.retain(|h| h.location != 0.0);
            hints.push(SingularityHint::new(0.0, ex.q));
            Ok(try_integrate_1d(|a| Ok(spow(a, ex.q) * f(a)?), -1.0, 1.0, &hints, cfg)?.value)
        }
        Side::Atoms => Ok(f(1.0)? + f(-1.0)?),
    }
}

/// Term with every atom kept at its unclipped band edge.
fn interior_term(s: Side, tside: Side, coupling: Coupling, t: f64, ex: &Exps, cfg: &QuadConfig) -> Result<f64> {
    let a_kinks = [0.0, 1.0, -1.0, t, -t, t - 1.0, 1.0 - t, t + 1.0, -t - 1.0, t / 2.0, -t / 2.0];
    let inner_cfg = cfg.scaled(0.1);
    offset_integral(s, t, ex, &a_kinks, cfg, |a| {
        let b_kinks = [0.0, a, -a, t, -t, t + a, t - a, -t + a, -t - a];
        offset_integral(tside, t, ex, &b_kinks, &inner_cfg, |b| Ok(position_integral(a, b, t, coupling)))
    })
}

/// `int K(p, dq) psi(q)` for the side kernel anchored at position `p` in
/// `[0, T]`. With `clip` the band-edge atoms are clipped to `[0, T]` with the
/// matching weights; without it atoms that would leave `[0, T]` are dropped.
#[allow(clippy::too_many_arguments)]
fn side_sum<F: FnMut(f64) -> Result<f64>>(
    side: Side,
    clip: bool,
    p: f64,
    t: f64,
    ex: &Exps,
    kinks: &[f64],
    cfg: &QuadConfig,
    mut psi: F,
) -> Result<f64> {
    match side {
        Side::Below => {
            if p <= 1.0 {
                return Ok(0.0);
            }
            let local: Vec<f64> = kinks.iter().map(|k| p - k).collect();
            let hints = breakpoints_in(&local, 1.0, p);
            Ok(try_integrate_1d(|u| Ok(u.powf(ex.p) * psi(p - u)?), 1.0, p, &hints, cfg)?.value)
        }
        Side::Above => {
            if p >= t - 1.0 {
                return Ok(0.0);
            }
            let local: Vec<f64> = kinks.iter().map(|k| k - p).collect();
            let hints = breakpoints_in(&local, 1.0, t - p);
            Ok(try_integrate_1d(|u| Ok(u.powf(ex.p) * psi(p + u)?), 1.0, t - p, &hints, cfg)?.value)
        }
        Side::Near => {
            let lo = (-1.0f64).max(-p);
            let hi = 1.0f64.min(t - p);
            let local: Vec<f64> = kinks.iter().map(|k| k - p).collect();
            let mut hints = breakpoints_in(&local, lo, hi);
            hints.retain(|h| h.location != 0.0);
            hints.push(SingularityHint::new(0.0, ex.q));
            // sgn(p - q)|p - q|^{2H-1} with q = p + u
            Ok(try_integrate_1d(|u| Ok(-spow(u, ex.q) * psi(p + u)?), lo, hi, &hints, cfg)?.value)
        }
        Side::Atoms => {
            let mut v = 0.0;
            if p >= 1.0 {
                v += psi(p - 1.0)?;
            } else if clip && p > 0.0 {
                v += p.powf(ex.q) * psi(0.0)?;
            }
            if p <= t - 1.0 {
                v += psi(p + 1.0)?;
            } else if clip && p < t {
                v += (t - p).powf(ex.q) * psi(t)?;
            }
            Ok(v)
        }
    }
}

/// `int_0^T e^{-|x - p|} (side kernel at p applied to psi) dp`, truncated
/// where the exponential has died out.
#[allow(clippy::too_many_arguments)]
fn strip_inner<F: Fn(f64) -> f64 + Copy>(
    side: Side,
    clip: bool,
    x: f64,
    t: f64,
    ex: &Exps,
    cfg: &QuadConfig,
    kernel_cfg: &QuadConfig,
    psi: F,
) -> Result<f64> {
    let hi = t.min(x + STRIP_REACH);
    let body = |p: f64| -> Result<f64> {
        let w = (-(x - p).abs()).exp();
        Ok(w * side_sum(side, clip, p, t, ex, &[0.0], kernel_cfg, |z| Ok(psi(z)))?)
    };
    let mut pts = vec![x, 1.0, 2.0, t - 1.0, t];
    pts.retain(|&v| v > 0.0 && v < hi);
    match side {
        Side::Near => {
            // value near p = 0 is smooth plus a multiple of p^{2H}; p = r^4 smooths it
            let mid = hi.min(1.0);
            let rmid = mid.powf(0.25);
            let head_hints: Vec<SingularityHint> =
                pts.iter().filter(|&&v| v < mid).map(|&v| SingularityHint::breakpoint(v.powf(0.25))).collect();
            let head = try_integrate_1d(|r| Ok(4.0 * r.powi(3) * body(r.powi(4))?), 0.0, rmid, &head_hints, cfg)?;
            let tail = try_integrate_1d(body, mid, hi, &breakpoints_in(&pts, mid, hi), cfg)?;
            Ok(head.value + tail.value)
        }
        _ => {
            let mut hints = breakpoints_in(&pts, 0.0, hi);
            if side == Side::Atoms && clip {
                hints.push(SingularityHint::new(0.0, ex.q));
                if hi == t {
                    hints.push(SingularityHint::new(t, ex.q));
                }
            }
            Ok(try_integrate_1d(body, 0.0, hi, &hints, cfg)?.value)
        }
    }
}

/// Contribution of the `s`-side atom clipped to `0` (for `s1 < 1`), against
/// the full `t`-side kernel.
fn strip_s(tside: Side, coupling: Coupling, t: f64, ex: &Exps, cfg: &QuadConfig) -> Result<f64> {
    let c1 = cfg.scaled(0.1);
    let c2 = cfg.scaled(0.01);
    let outer_hints = [SingularityHint::new(0.0, ex.q)];
    let e = try_integrate_1d(
        |s1| {
            let inner = strip_inner(tside, true, s1, t, ex, &c1, &c2, |t2| coupling.eval(-t2))?;
            Ok(s1.powf(ex.q) * inner)
        },
        0.0,
        1.0,
        &outer_hints,
        cfg,
    )?;
    Ok(e.value)
}

/// Contribution of the `t`-side atom clipped to `0` (for `t1 < 1`), against
/// the `s`-side kernel with unclipped atoms only.
fn strip_t(sside: Side, coupling: Coupling, t: f64, ex: &Exps, cfg: &QuadConfig) -> Result<f64> {
    let c1 = cfg.scaled(0.1);
    let c2 = cfg.scaled(0.01);
    let outer_hints = [SingularityHint::new(0.0, ex.q)];
    let clip = sside != Side::Atoms;
    let e = try_integrate_1d(
        |t1| {
            let inner = strip_inner(sside, clip, t1, t, ex, &c1, &c2, |s2| coupling.eval(s2))?;
            Ok(t1.powf(ex.q) * inner)
        },
        0.0,
        1.0,
        &outer_hints,
        cfg,
    )?;
    Ok(e.value)
}

/// Parity of a term under `x -> T - x`.
fn reflection_sign(s: Side, tside: Side, coupling: Coupling) -> f64 {
    let mut sign = 1.0;
    if s == Side::Near {
        sign = -sign;
    }
    if tside == Side::Near {
        sign = -sign;
    }
    if coupling == Coupling::Signed {
        sign = -sign;
    }
    sign
}

fn clipped_corrections(s: Side, tside: Side, coupling: Coupling, t: f64, ex: &Exps, cfg: &QuadConfig) -> Result<f64> {
    let sign = reflection_sign(s, tside, coupling);
    let mut v = 0.0;
    if s == Side::Atoms {
        v += strip_s(tside, coupling, t, ex, cfg)?;
        v += sign * strip_s(tside.reflect(), coupling, t, ex, cfg)?;
    }
    if tside == Side::Atoms {
        v += strip_t(s, coupling, t, ex, cfg)?;
        v += sign * strip_t(s.reflect(), coupling, t, ex, cfg)?;
    }
    Ok(v)
}

/// Diagonal part: `2 int int sgn(a)|a|^q sgn(b)|b|^q e^{-|a-b|} (T - spread{0,a,b})_+`.
fn diag_term(t: f64, ex: &Exps, cfg: &QuadConfig) -> Result<f64> {
    let inner_cfg = cfg.scaled(0.1);
    let v = offset_integral(Side::Near, t, ex, &[], cfg, |a| {
        offset_integral(Side::Near, t, ex, &[a], &inner_cfg, |b| {
            let spread = a.max(b).max(0.0) - a.min(b).min(0.0);
            Ok((-(a - b).abs()).exp() * (t - spread).max(0.0))
        })
    })?;
    Ok(2.0 * v)
}

fn default_term_cfg() -> QuadConfig {
    QuadConfig { abs_tol: 1e-11, rel_tol: 1e-10, max_panels: 4000, nodes_per_panel: 16 }
}

/// Value of one four-fold integral at horizon `T` (theta = 1).
pub fn eval_appendix_integral(id: AppendixIntegralId, t_horizon: f64, h: HurstParam) -> Result<f64> {
    eval_appendix_integral_with(id, t_horizon, h, &default_term_cfg())
}

pub fn eval_appendix_integral_with(id: AppendixIntegralId, t: f64, h: HurstParam, cfg: &QuadConfig) -> Result<f64> {
    if !(t >= 2.0 && t.is_finite()) {
        return Err(Error::InvalidParam(format!("appendix integrals need T >= 2, got {t}")));
    }
    if h.is_brownian() {
        return Err(Error::InvalidParam("appendix integrals require H < 1/2".into()));
    }
    let ex = Exps::new(h);
    let run = || -> Result<f64> {
        match id.layout() {
            None => diag_term(t, &ex, cfg),
            Some((s, tside, coupling)) => {
                let core = interior_term(s, tside, coupling, t, &ex, cfg)?;
                Ok(core + clipped_corrections(s, tside, coupling, t, &ex, cfg)?)
            }
        }
    };
    run().map_err(|e| e.context(format!("integral {id} at T = {t}")))
}

/// Direct four-level quadrature of the defining integral, for small `T`.
/// Slow; meant as an independent check of [`eval_appendix_integral`].
pub fn raw_appendix_integral(id: AppendixIntegralId, t: f64, h: HurstParam, cfg: &QuadConfig) -> Result<f64> {
    let Some((s, tside, coupling)) = id.layout() else {
        return raw_diag(t, h, cfg);
    };
    let ex = Exps::new(h);
    let c1 = cfg.scaled(0.1);
    let c2 = cfg.scaled(0.01);
    let c3 = cfg.scaled(0.001);
    let edge_pts = [0.0, 1.0, t - 1.0, t];
    let outer_hints: Vec<SingularityHint> = [1.0, t - 1.0]
        .into_iter()
        .map(SingularityHint::breakpoint)
        .chain([SingularityHint::new(0.0, ex.q), SingularityHint::new(t, ex.q)])
        .collect();
    try_integrate_1d(
        |s1| {
            let mut pts = vec![s1, s1 - 1.0, s1 + 1.0];
            pts.extend(edge_pts);
            let mut hints = breakpoints_in(&pts, 0.0, t);
            hints.push(SingularityHint::new(0.0, ex.q));
            hints.push(SingularityHint::new(t, ex.q));
            let inner = try_integrate_1d(
                |t1| {
                    let w = (-(s1 - t1).abs()).exp();
                    let v = side_sum(s, true, s1, t, &ex, &[t1, t1 - 1.0, t1 + 1.0], &c2, |s2| {
                        side_sum(tside, true, t1, t, &ex, &[s2], &c3, |t2| Ok(coupling.eval(s2 - t2)))
                    })?;
                    Ok(w * v)
                },
                0.0,
                t,
                &hints,
                &c1,
            )?;
            Ok(inner.value)
        },
        0.0,
        t,
        &outer_hints,
        cfg,
    )
    .map(|e| e.value)
    .map_err(|e| e.context(format!("raw quadrature of {id} at T = {t}")))
}

fn raw_diag(t: f64, h: HurstParam, cfg: &QuadConfig) -> Result<f64> {
    let ex = Exps::new(h);
    let c1 = cfg.scaled(0.1);
    let c2 = cfg.scaled(0.01);
    // common point u of the two bands, then s1 and t1 around it
    let v = try_integrate_1d(
        |u| {
            let lo = (u - 1.0).max(0.0);
            let hi = (u + 1.0).min(t);
            let hints = vec![SingularityHint::new(u, ex.q)];
            let e = try_integrate_anchored(
                |n1| {
                    let inner = try_integrate_anchored(
                        |n2| Ok(spow(n2.diff(u), ex.q) * (-(n1.x - n2.x).abs()).exp()),
                        lo,
                        hi,
                        &[SingularityHint::new(u, ex.q), SingularityHint::breakpoint(n1.x)],
                        &c2,
                    )?;
                    Ok(spow(n1.diff(u), ex.q) * inner.value)
                },
                lo,
                hi,
                &hints,
                &c1,
            )?;
            Ok(e.value)
        },
        0.0,
        t,
        &breakpoints_in(&[1.0, t - 1.0], 0.0, t),
        cfg,
    )?;
    Ok(2.0 * v.value)
}

// ---------------------------------------------------------------------------
// closed-form slopes

/// The one- and two-dimensional constants the slopes are built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeConstants {
    /// `int_1^inf e^{-u} u^{2H-2} du`
    pub g: f64,
    /// `int_0^1 (e^x - e^{-x}) x^{2H-1} dx`
    pub em: f64,
    /// `int_0^1 e^{-u} u^{2H-1} du`
    pub i0: f64,
    /// `int_0^1 e^{-u} u^{2H-1} int_0^u e^v v^{2H-1} dv du`
    pub k0: f64,
    /// `int_1^inf e^{-v} v^{2H-2} int_1^v e^u u^{2H-2} du dv`
    pub far_pair: f64,
    /// `int_0^1 (e^{x-1} - e^{-x-1}) x^{2H-1} dx`
    pub edge_odd: f64,
}

fn slope_cfg() -> QuadConfig {
    QuadConfig { abs_tol: 1e-14, rel_tol: 1e-13, max_panels: 4000, nodes_per_panel: 16 }
}

pub fn slope_constants(h: HurstParam) -> Result<SlopeConstants> {
    let cfg = slope_cfg();
    let ex = Exps::new(h);
    let (q, p) = (ex.q, ex.p);
    let at0 = [SingularityHint::new(0.0, q)];
    let g = integrate_semi_inf(|u| (-u).exp() * u.powf(p), 1.0, ExpDecay { k: 1.0, alpha: 0.0 }, &[], &cfg)?.value;
    let em = try_integrate_1d(|x| Ok((x.exp() - (-x).exp()) * x.powf(q)), 0.0, 1.0, &at0, &cfg)?.value;
    let i0 = try_integrate_1d(|u| Ok((-u).exp() * u.powf(q)), 0.0, 1.0, &at0, &cfg)?.value;
    let edge_odd = try_integrate_1d(|x| Ok(((x - 1.0).exp() - (-x - 1.0).exp()) * x.powf(q)), 0.0, 1.0, &at0, &cfg)?.value;
    let inner_cfg = cfg.scaled(0.1);
    let k0 = try_integrate_1d(
        |u| {
            let inner = try_integrate_1d(|v| Ok(v.exp() * v.powf(q)), 0.0, u, &at0, &inner_cfg)?;
            Ok((-u).exp() * u.powf(q) * inner.value)
        },
        0.0,
        1.0,
        &[SingularityHint::new(0.0, 4.0 * h.value() - 1.0)],
        &cfg,
    )?
    .value;
    // v = 1/tau folds the algebraic tail onto (0, 1]
    let far_pair = try_integrate_1d(
        |tau| {
            if tau == 0.0 {
                return Ok(0.0);
            }
            let v = 1.0 / tau;
            let reach = (v - 1.0).min(STRIP_REACH);
            // e^{-v} int_1^v e^u u^{2H-2} du = int_0^{v-1} e^{-w} (v-w)^{2H-2} dw
            let inner = try_integrate_1d(|w| Ok((-w).exp() * (v - w).powf(p)), 0.0, reach, &[], &inner_cfg)?;
            Ok(v.powf(p) * inner.value * v * v)
        },
        0.0,
        1.0,
        &[SingularityHint::breakpoint(1.0 / (1.0 + STRIP_REACH))],
        &cfg,
    )?
    .value;
    Ok(SlopeConstants { g, em, i0, k0, far_pair, edge_odd })
}

/// `int_1^inf e^{-u} u^{2H-2} du` and `int_0^1 (e^x - e^{-x}) x^{2H-1} dx`
/// from their power series (incomplete gamma expansions).
pub fn series_constants(h: HurstParam) -> (f64, f64) {
    let hv = h.value();
    let s = 2.0 * hv - 1.0;
    // Gamma(s, 1) = Gamma(s) - sum_k (-1)^k / (k! (s + k))
    let mut lower = 0.0;
    let mut fact = 1.0;
    for k in 0..40 {
        if k > 0 {
            fact *= k as f64;
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        lower += sign / (fact * (s + k as f64));
    }
    let g = gamma_fn(s).unwrap_or(f64::NAN) - lower;
    // 2 sum_j 1 / ((2j+1)! (2j+1+2H))
    let mut em = 0.0;
    let mut fact = 1.0;
    for j in 0..20 {
        let n = 2 * j + 1;
        if n > 1 {
            fact *= (n - 1) as f64 * n as f64;
        }
        em += 2.0 / (fact * (n as f64 + 2.0 * hv));
    }
    (g, em)
}

/// Slope of `N` from the series constants; the quadrature route is
/// [`closed_form_slope`].
pub fn n_slope_series(h: HurstParam) -> f64 {
    let (g, em) = series_constants(h);
    let hv = h.value();
    g * ((-1.0f64).exp() - E + (4.0 * hv - 1.0) * em) + (-1.0f64).exp() * em
}

fn slope_from(id: AppendixIntegralId, hv: f64, c: &SlopeConstants) -> f64 {
    let ei = (-1.0f64).exp();
    let e2 = (-2.0f64).exp();
    match id {
        AppendixIntegralId::M11 => 2.0 * ((4.0 * hv - 1.0) * c.far_pair + E * c.g),
        AppendixIntegralId::M12 => (4.0 * hv - 1.0) * c.g * c.g + 2.0 * ei * c.g,
        AppendixIntegralId::N | AppendixIntegralId::U => c.g * (ei - E + (4.0 * hv - 1.0) * c.em) + c.edge_odd,
        AppendixIntegralId::Ntilde | AppendixIntegralId::Utilde => {
            (1.0 + e2) + ((2.0 * hv + 1.0) * ei + (2.0 * hv - 1.0) * E) * c.g
        }
        AppendixIntegralId::L => {
            4.0 * ((4.0 * hv + 1.0) * c.k0 - (2.0 * hv + 0.5) * c.i0 * c.i0 - c.edge_odd)
        }
        AppendixIntegralId::P => 2.0 * (1.0 - e2 - (2.0 * hv + 1.0) * c.edge_odd),
        AppendixIntegralId::Q => Q_SLOPE,
        AppendixIntegralId::Diag => 4.0 * (2.0 * c.k0 - c.i0 * c.i0),
    }
}

/// Slope of the `Q` term, `6 e^{-2} + 2`.
pub const Q_SLOPE: f64 = 6.0 * 0.135_335_283_236_612_7 + 2.0;

/// Slope of the linear asymptote of one four-fold integral (theta = 1).
pub fn closed_form_slope(id: AppendixIntegralId, h: HurstParam) -> Result<f64> {
    let c = slope_constants(h)?;
    Ok(slope_from(id, h.value(), &c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeSlopes {
    /// slope of `M11 + M12`
    pub a1: f64,
    /// slope of `M31 + M32`, combined formula
    pub a2: f64,
    /// slope of `M33`, combined formula plus the diagonal part
    pub a3: f64,
    /// `H (N - Ntilde + U - Utilde)` from the individual slopes
    pub a2_from_terms: f64,
    /// `H^2 (-L + 2P + Q + Diag)` from the individual slopes
    pub a3_from_terms: f64,
}

pub fn composite_slopes(h: HurstParam) -> Result<CompositeSlopes> {
    use AppendixIntegralId::*;
    let c = slope_constants(h)?;
    let hv = h.value();
    let s = |id| slope_from(id, hv, &c);
    let ei = (-1.0f64).exp();
    let e2 = (-2.0f64).exp();
    let a1 = s(M11) + s(M12);
    let a2 = 2.0 * hv * (c.g * (-2.0 * hv * (ei + E) + (4.0 * hv - 1.0) * c.em) + ei * c.em - (1.0 + e2));
    let a2_from_terms = hv * (s(N) - s(Ntilde) + s(U) - s(Utilde));
    let four_h1 = 4.0 * hv + 1.0;
    let near_odd = -c.edge_odd; // int_0^1 (e^{-1-u} - e^{-1+u}) u^{2H-1} du
    let printed = 2.0
        * hv
        * hv
        * (-2.0 * four_h1 * c.k0 + four_h1 * c.i0 * c.i0 + 4.0 * hv * near_odd + e2 + 3.0);
    let a3 = printed + hv * hv * s(Diag);
    let a3_from_terms = hv * hv * (-s(L) + 2.0 * s(P) + s(Q) + s(Diag));
    Ok(CompositeSlopes { a1, a2, a3, a2_from_terms, a3_from_terms })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
}

/// Compares `2 (H Gamma(2H))^2 sigma_H^2` with `a3 + 2 alpha_H (alpha_H a1 - a2)`.
pub fn identity_check(h: HurstParam) -> Result<IdentityCheck> {
    let c = composite_slopes(h)?;
    let a = alpha_h(h);
    let lhs = ft_norm_slope(h);
    let rhs = c.a3 + 2.0 * a * (a * c.a1 - c.a2);
    Ok(IdentityCheck { lhs, rhs, rel_err: (lhs - rhs).abs() / lhs.abs() })
}

// ---------------------------------------------------------------------------
// asymptote fitting

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearAsymptote {
    pub slope: f64,
    pub intercept: f64,
    pub t_grid: Vec<f64>,
    pub residuals: Vec<f64>,
    pub slope_stderr: f64,
}

/// Slope from successive differences averaged over the tail half, intercept
/// from the mean residual over the tail.
pub fn fit_asymptote(samples: &[(f64, f64)]) -> Result<LinearAsymptote> {
    let n = samples.len();
    if n < 4 {
        return Err(Error::TooFewSamples { need: 4, got: n });
    }
    for w in samples.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::InvalidParam("sample horizons must be strictly increasing".into()));
        }
    }
    let diffs: Vec<f64> = samples.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
    let start = diffs.len() / 2;
    for w in &samples[start..].windows(2).collect::<Vec<_>>() {
        if w[1].0 - w[0].0 < 1.0 {
            return Err(Error::InvalidParam("tail spacing must be at least 1".into()));
        }
    }
    let tail = &diffs[start..];
    let m = tail.len() as f64;
    let slope = tail.iter().sum::<f64>() / m;
    let slope_stderr = if tail.len() >= 2 {
        let var = tail.iter().map(|d| (d - slope).powi(2)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    } else {
        0.0
    };
    let raw: Vec<f64> = samples.iter().map(|&(t, v)| v - slope * t).collect();
    let tail_from = n / 2;
    let intercept = raw[tail_from..].iter().sum::<f64>() / (n - tail_from) as f64;
    Ok(LinearAsymptote {
        slope,
        intercept,
        t_grid: samples.iter().map(|s| s.0).collect(),
        residuals: raw.iter().map(|r| r - intercept).collect(),
        slope_stderr,
    })
}

/// Ordinary least-squares line through `samples`: `(slope, intercept, slope_stderr)`.
pub fn ols_line(samples: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::TooFewSamples { need: 3, got: n });
    }
    let nf = n as f64;
    let mx = samples.iter().map(|s| s.0).sum::<f64>() / nf;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / nf;
    let sxx: f64 = samples.iter().map(|s| (s.0 - mx).powi(2)).sum();
    let sxy: f64 = samples.iter().map(|s| (s.0 - mx) * (s.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidParam("regression needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = samples.iter().map(|s| (s.1 - intercept - slope * s.0).powi(2)).sum();
    let stderr = (sse / (nf - 2.0) / sxx).sqrt();
    Ok((slope, intercept, stderr))
}

// ---------------------------------------------------------------------------
// the norm and the cross term

/// `||f_T||^2` in the tensor square, assembled from the four-fold integrals.
/// Other values of theta go through the time-scaling identity.
pub fn norm_ft_sq(p: &FtKernelParams) -> Result<MTermBreakdown> {
    norm_ft_sq_with(p, &default_term_cfg())
}

pub fn norm_ft_sq_with(p: &FtKernelParams, cfg: &QuadConfig) -> Result<MTermBreakdown> {
    let t = p.require_unit_horizon(2.0)?;
    let h = p.h;
    let vals: Vec<Result<f64>> = AppendixIntegralId::ALL
        .par_iter()
        .map(|&id| eval_appendix_integral_with(id, t, h, cfg).map_err(|e| e.context(id.name())))
        .collect();
    let mut out = [0.0; 10];
    for (slot, v) in out.iter_mut().zip(vals) {
        *slot = v?;
    }
    Ok(assemble_norm(p, &out))
}

/// Combines the ten integral values at horizon `theta T`, ordered as
/// [`AppendixIntegralId::ALL`], into the norm breakdown.
pub fn assemble_norm(p: &FtKernelParams, vals: &[f64; 10]) -> MTermBreakdown {
    let h = p.h;
    let hv = h.value();
    let get = |id: AppendixIntegralId| vals[AppendixIntegralId::ALL.iter().position(|&x| x == id).unwrap()];
    use AppendixIntegralId::*;
    let m31 = hv * (get(N) - get(Ntilde));
    let m32 = hv * (get(U) - get(Utilde));
    let m33 = hv * hv * (-get(L) + 2.0 * get(P) + get(Q) + get(Diag));
    let b = MTermBreakdown::compose(h, get(M11), get(M12), m31, m32, m33);
    b.scaled(p.tensor_scale())
}

/// Cell averages of `f_T` on an `n x n` grid of `[0, T]^2`.
pub fn ft_cell_matrix(p: &FtKernelParams, n: usize) -> Array2<f64> {
    let th = p.theta;
    let d = p.t_horizon / n as f64;
    let x = th * d;
    let diag = 2.0 / (x * x) * (x + (-x).exp_m1());
    let a = -(-x).exp_m1() / x;
    let b = x.exp_m1() / x;
    Array2::from_shape_fn((n, n), |(i, j)| {
        let k = i.abs_diff(j);
        if k == 0 {
            diag
        } else {
            (-x * k as f64).exp() * a * b
        }
    })
}

/// Cell averages of `h_T` on an `n x n` grid of `[0, T]^2`.
pub fn ht_cell_matrix(p: &FtKernelParams, n: usize) -> Array2<f64> {
    let th = p.theta;
    let d = p.t_horizon / n as f64;
    let x = th * d;
    let avg: Vec<f64> = (0..n)
        .map(|i| {
            let right = (i + 1) as f64 * d;
            (-th * (p.t_horizon - right)).exp() * (-(-x).exp_m1() / x)
        })
        .collect();
    Array2::from_shape_fn((n, n), |(i, j)| avg[i] * avg[j])
}

/// Grid oracle for `||f_T||^2`.
pub fn norm_ft_sq_grid(p: &FtKernelParams, n: usize) -> Result<f64> {
    let cov = grid_cov(p.h, n, p.t_horizon / n as f64)?;
    let f = ft_cell_matrix(p, n);
    tensor_ip_grid_oracle(&f, &f, &cov)
}

/// Grid oracle for `<f_T, h_T>`.
pub fn cross_ip_grid(p: &FtKernelParams, n: usize) -> Result<f64> {
    let cov = grid_cov(p.h, n, p.t_horizon / n as f64)?;
    tensor_ip_grid_oracle(&ft_cell_matrix(p, n), &ht_cell_matrix(p, n), &cov)
}

fn ft_slice(t: f64, horizon: f64) -> Result<BVFunction> {
    let mut pieces = Vec::with_capacity(2);
    if t > 0.0 {
        pieces.push(Piece::new(0.0, t, vec![ExpPolyTerm::exp_shifted(1.0, 1.0, t)]));
    }
    if t < horizon {
        pieces.push(Piece::new(t, horizon, vec![ExpPolyTerm::exp_shifted(1.0, -1.0, t)]));
    }
    BVFunction::new(pieces, horizon)
}

fn phi_t(horizon: f64) -> Result<BVFunction> {
    BVFunction::single(0.0, horizon, vec![ExpPolyTerm::exp_shifted(1.0, 1.0, horizon)], horizon)
}

/// Which argument of the inner `H` product carries the measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NestingOrder {
    /// `<f_T(t, .), phi_T>` with the measure of the slice
    SliceMeasure,
    /// `<phi_T, f_T(., s)>` with the measure of `phi_T`
    WeightMeasure,
}

fn cross_cfg() -> QuadConfig {
    QuadConfig { abs_tol: 1e-11, rel_tol: 1e-10, max_panels: 4000, nodes_per_panel: 16 }
}

/// Kernel integrals for the cross term, all of the form
/// `int e^{+-(t - shift)} sgn(t - c)|t - c|^q dt` with exponents `<= 0`.
struct CrossKernel {
    t: f64,
    q: f64,
    cfg: QuadConfig,
    /// `int_0^T e^{t-T} t^q dt`
    origin: f64,
}

impl CrossKernel {
    fn new(t: f64, h: HurstParam, cfg: QuadConfig) -> Result<Self> {
        let q = 2.0 * h.value() - 1.0;
        let mut k = CrossKernel { t, q, cfg, origin: 0.0 };
        k.origin = k.exp_pow(1.0, t, 0.0, 0.0, t)?;
        Ok(k)
    }

    /// `int_lo^hi e^{rate (t - shift)} sgn(t - c)|t - c|^q dt` for `c` outside `(lo, hi)`.
    fn exp_pow(&self, rate: f64, shift: f64, c: f64, lo: f64, hi: f64) -> Result<f64> {
        if hi <= lo {
            return Ok(0.0);
        }
        // t = c + dir * u with u >= 0
        let (dir, u0, u1) = if c <= lo { (1.0, lo - c, hi - c) } else { (-1.0, c - hi, c - lo) };
        let base = rate * (c - shift);
        let k = rate * dir;
        let (u0, u1) = if k < 0.0 { (u0, u1.min(u0 + STRIP_REACH)) } else { (u0.max(u1 - STRIP_REACH), u1) };
        let hints = if u0 == 0.0 { vec![SingularityHint::new(0.0, self.q)] } else { Vec::new() };
        let e = try_integrate_1d(|u| Ok((base + k * u).exp() * u.powf(self.q)), u0, u1, &hints, &self.cfg)?;
        Ok(dir * e.value)
    }

    /// `int_0^T e^{s-T} sgn(x-s)|x-s|^q ds`
    fn k(&self, x: f64) -> Result<f64> {
        Ok(-self.exp_pow(1.0, self.t, x, 0.0, x)? - self.exp_pow(1.0, self.t, x, x, self.t)?)
    }

    /// `int_0^T phi_T(t) (t^q - sgn(t-s)|t-s|^q) dt`
    fn weight_kernel(&self, s: f64) -> Result<f64> {
        Ok(self.origin + self.k(s)?)
    }

    /// `int_0^T e^{-|x-t|} (t^q - sgn(t-s)|t-s|^q) dt`
    fn slice_kernel(&self, x: f64, s: f64) -> Result<f64> {
        let t = self.t;
        let part = |c: f64, lo: f64, hi: f64| -> Result<f64> {
            let mut cuts = vec![lo];
            if c > lo && c < hi {
                cuts.push(c);
            }
            cuts.push(hi);
            let mut v = 0.0;
            for w in cuts.windows(2) {
                let rate = if w[1] <= x { 1.0 } else { -1.0 };
                v += self.exp_pow(rate, x, c, w[0], w[1])?;
            }
            Ok(v)
        };
        let origin = part(0.0, 0.0, x)? + part(0.0, x, t)?;
        let shifted = part(s, 0.0, x)? + part(s, x, t)?;
        Ok(origin - shifted)
    }

    /// `<f_T(x, .), phi_T>_H` with the measure taken on the slice.
    fn psi_slice(&self, x: f64, h: f64) -> Result<f64> {
        let t = self.t;
        let c = self.cfg.scaled(10.0);
        let mut v = (-x).exp() * self.weight_kernel(0.0)? - (x - t).exp() * self.weight_kernel(t)?;
        if x > 0.0 {
            let lo = (x - STRIP_REACH).max(0.0);
            v += try_integrate_1d(|s| Ok((s - x).exp() * self.weight_kernel(s)?), lo, x, &breakpoints_in(&[1.0], lo, x), &c)?.value;
        }
        if x < t {
            let hi = (x + STRIP_REACH).min(t);
            v -= try_integrate_1d(|s| Ok((x - s).exp() * self.weight_kernel(s)?), x, hi, &breakpoints_in(&[t - 1.0], x, hi), &c)?.value;
        }
        Ok(-h * v)
    }

    /// `<phi_T, f_T(., x)>_H` with the measure taken on `phi_T`.
    fn psi_weight(&self, x: f64, h: f64) -> Result<f64> {
        let t = self.t;
        let c = self.cfg.scaled(10.0);
        let mut v = (-t).exp() * self.slice_kernel(x, 0.0)? - self.slice_kernel(x, t)?;
        let lo = (t - STRIP_REACH).max(0.0);
        let hints = breakpoints_in(&[x, 1.0, t - 1.0], lo, t);
        v += try_integrate_1d(|s| Ok((s - t).exp() * self.slice_kernel(x, s)?), lo, t, &hints, &c)?.value;
        Ok(-h * v)
    }
}

/// `int_0^T f(x, x, T - x) dx` for integrands carrying fractional powers of
/// the distance to either end: within unit distance of an end the distance is
/// written as `r^m`, which turns those powers into smooth ones.
fn graded_integral<F: FnMut(f64, f64, f64) -> Result<f64>>(mut f: F, t: f64, m: f64, cfg: &QuadConfig) -> Result<f64> {
    let edge = (t / 2.0).min(1.0);
    let redge = edge.powf(1.0 / m);
    let head = try_integrate_1d(
        |r| {
            let d = r.powf(m);
            Ok(m * r.powf(m - 1.0) * f(d, d, t - d)?)
        },
        0.0,
        redge,
        &[],
        cfg,
    )?;
    let tail = try_integrate_1d(
        |r| {
            let d = r.powf(m);
            Ok(m * r.powf(m - 1.0) * f(t - d, t - d, d)?)
        },
        0.0,
        redge,
        &[],
        cfg,
    )?;
    let mid = if t > 2.0 * edge {
        try_integrate_1d(|x| f(x, x, t - x), edge, t - edge, &[], cfg)?.value
    } else {
        0.0
    };
    Ok(head.value + mid + tail.value)
}

/// `<f_T(x, .), phi_T>_H` (theta = 1) computed in the given order.
pub fn cross_slice_ip(x: f64, t: f64, h: HurstParam, order: NestingOrder) -> Result<f64> {
    if !(0.0..=t).contains(&x) {
        return Err(Error::InvalidParam(format!("slice position {x} outside [0, {t}]")));
    }
    let k = CrossKernel::new(t, h, cross_cfg().scaled(0.01))?;
    match order {
        NestingOrder::SliceMeasure => k.psi_slice(x, h.value()),
        NestingOrder::WeightMeasure => k.psi_weight(x, h.value()),
    }
}

/// Reference value of [`cross_slice_ip`] from the general measure-form product.
pub fn cross_slice_ip_general(x: f64, t: f64, h: HurstParam, order: NestingOrder, cfg: &QuadConfig) -> Result<f64> {
    let slice = ft_slice(x, t)?;
    let phi = phi_t(t)?;
    match order {
        NestingOrder::SliceMeasure => ip_jolis(&slice, &phi, h, cfg),
        NestingOrder::WeightMeasure => ip_jolis(&phi, &slice, h, cfg),
    }
}

/// `<f_T, h_T>` in the tensor square (theta = 1 natively, otherwise scaled).
pub fn cross_ip_ft_ht(p: &FtKernelParams) -> Result<f64> {
    cross_ip_ft_ht_ordered(p, NestingOrder::SliceMeasure)
}

/// `<<f_T(x, .), phi_T>_H, phi_T>_H` with the inner products computed in the
/// given order and the outer one against the measure of `phi_T`.
pub fn cross_ip_ft_ht_ordered(p: &FtKernelParams, order: NestingOrder) -> Result<f64> {
    let t = p.require_unit_horizon(1e-9)?;
    let h = p.h;
    let hv = h.value();
    let q = 2.0 * hv - 1.0;
    let cfg = cross_cfg();
    let kern = CrossKernel::new(t, h, cfg.scaled(0.01))?;
    let psi = |x: f64| match order {
        NestingOrder::SliceMeasure => kern.psi_slice(x, hv),
        NestingOrder::WeightMeasure => kern.psi_weight(x, hv),
    };
    // <psi, phi_T> = H int psi(x) [e^{-T} x^q + k(x) + (T - x)^q] dx
    let m = (3.0 / (2.0 * hv)).ceil().max(4.0);
    let e = graded_integral(
        |x, head, tail| Ok(psi(x)? * ((-t).exp() * head.powf(q) + kern.k(x)? + tail.powf(q))),
        t,
        m,
        &cfg,
    )
    .map_err(|e| e.context(format!("cross term at T = {t}")))?;
    Ok(hv * e * p.tensor_scale())
}

// ---------------------------------------------------------------------------
// reports

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub t: f64,
    /// `(||f_T||^2 - slope * T) / T`
    pub residual_over_t: f64,
    /// `T^{2H-1}`
    pub old_rate: f64,
    /// `T^{-1}`
    pub new_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem11Report {
    pub h: f64,
    pub theta: f64,
    pub target_slope: f64,
    pub fit: LinearAsymptote,
    pub slope_rel_err: f64,
    pub breakdowns: Vec<(f64, MTermBreakdown)>,
    /// `||f_T||^2 - target_slope * T`
    pub residuals: Vec<f64>,
    /// `|r(T_{k+1}) - r(T_k)|`
    pub residual_steps: Vec<f64>,
    pub scaling: Vec<ScalingRow>,
}

impl Theorem11Report {
    pub fn residual_steps_decreasing(&self) -> bool {
        self.residual_steps.windows(2).all(|w| w[1] < w[0])
    }
}

/// Slope of `||f_T^{(theta)}||^2` implied by time scaling.
pub fn target_slope(h: HurstParam, theta: f64) -> f64 {
    ft_norm_slope(h) * theta.powf(1.0 - 4.0 * h.value())
}

pub fn theorem11_report(h: HurstParam, theta: f64, t_grid: &[f64]) -> Result<Theorem11Report> {
    if t_grid.last().copied().unwrap_or(0.0) < 100.0 {
        return Err(Error::InvalidParam("the horizon grid must reach at least T = 100".into()));
    }
    let breakdowns = t_grid
        .iter()
        .map(|&t| norm_ft_sq(&FtKernelParams::new(t, theta, h)?).map(|b| (t, b)))
        .collect::<Result<Vec<_>>>()?;
    theorem11_from_breakdowns(h, theta, breakdowns)
}

/// Same report from norms already evaluated on the horizon grid.
pub fn theorem11_from_breakdowns(
    h: HurstParam,
    theta: f64,
    breakdowns: Vec<(f64, MTermBreakdown)>,
) -> Result<Theorem11Report> {
    let samples: Vec<(f64, f64)> = breakdowns.iter().map(|(t, b)| (*t, b.total)).collect();
    let fit = fit_asymptote(&samples)?;
    let target = target_slope(h, theta);
    let residuals: Vec<f64> = samples.iter().map(|(t, v)| v - target * t).collect();
    let residual_steps = residuals.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let q = 2.0 * h.value() - 1.0;
    let scaling = samples
        .iter()
        .zip(&residuals)
        .map(|(&(t, _), &r)| ScalingRow { t, residual_over_t: r / t, old_rate: t.powf(q), new_rate: 1.0 / t })
        .collect();
    Ok(Theorem11Report {
        h: h.value(),
        theta,
        target_slope: target,
        slope_rel_err: (fit.slope - target).abs() / target,
        fit,
        breakdowns,
        residuals,
        residual_steps,
        scaling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(h: f64) -> HurstParam {
        HurstParam::new(h).unwrap()
    }

    #[test]
    fn exp_lin_matches_quadrature() {
        for &(e0, k, w, l0, l1) in &[(-0.3, -2.0, 1.7, 2.0, 0.5), (-1.0, 2.0, 0.4, 1.0, 3.0), (0.0, 0.0, 2.0, 1.0, -1.0), (-0.2, 1e-7, 0.3, 1.0, 2.0)] {
            let direct = crate::quad::integrate_1d(
                |y| (e0 + k * y).exp() * (l0 + (l1 - l0) * y / w),
                0.0,
                w,
                &[],
                &QuadConfig::default(),
            )
            .unwrap()
            .value;
            assert!((exp_lin(e0, k, w, l0, l1) - direct).abs() < 1e-13, "{e0} {k} {w}");
        }
    }

    #[test]
    fn position_integral_matches_quadrature() {
        let cases = [(1.5, 2.5, 6.0), (-0.4, 0.7, 3.0), (2.0, -3.0, 7.0), (0.3, 0.3, 2.0), (4.0, 4.5, 5.0)];
        for &(a, b, t) in &cases {
            for coupling in [Coupling::Plain, Coupling::Signed] {
                let c = a - b;
                let direct = crate::quad::integrate_1d(
                    |x| (-x.abs()).exp() * coupling.eval(x - c) * (t - spread4(x, a, b)).max(0.0),
                    -3.0 * t,
                    3.0 * t,
                    &[0.0, a, -b, c].map(SingularityHint::breakpoint),
                    &QuadConfig { max_panels: 20000, ..QuadConfig::default() },
                )
                .unwrap()
                .value;
                let fast = position_integral(a, b, t, coupling);
                assert!((fast - direct).abs() < 1e-10, "{a} {b} {t} {coupling:?}: {fast} vs {direct}");
            }
        }
    }

    #[test]
    fn fit_exact_line() {
        let s: Vec<(f64, f64)> = [10.0, 20.0, 40.0, 80.0].iter().map(|&t| (t, 3.0 * t + 5.0)).collect();
        let fit = fit_asymptote(&s).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-12);
        assert!((fit.intercept - 5.0).abs() < 1e-10);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-10));
    }

    #[test]
    fn fit_decaying_perturbation() {
        let s: Vec<(f64, f64)> = [10.0f64, 20.0, 40.0, 80.0].iter().map(|&t| (t, 3.0 * t + 5.0 + (-t).exp())).collect();
        assert!((fit_asymptote(&s).unwrap().slope - 3.0).abs() < 1e-6);
    }

    #[test]
    fn fit_needs_four_samples() {
        let s = [(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)];
        assert!(matches!(fit_asymptote(&s), Err(Error::TooFewSamples { need: 4, got: 3 })));
    }

    #[test]
    fn q_slope_constant() {
        assert!((Q_SLOPE - (6.0 * (-2.0f64).exp() + 2.0)).abs() < 1e-15);
        assert_eq!(closed_form_slope(AppendixIntegralId::Q, hp(0.3)).unwrap(), Q_SLOPE);
    }

    #[test]
    fn n_slope_two_routes() {
        for h in [0.1, 0.25, 0.3, 0.4, 0.45] {
            let quad = closed_form_slope(AppendixIntegralId::N, hp(h)).unwrap();
            let series = n_slope_series(hp(h));
            assert!((quad - series).abs() < 1e-10, "{h}: {quad} vs {series}");
        }
    }

    #[test]
    fn u_slopes_equal_n_slopes() {
        let h = hp(0.35);
        let s = |id| closed_form_slope(id, h).unwrap();
        assert_eq!(s(AppendixIntegralId::U), s(AppendixIntegralId::N));
        assert_eq!(s(AppendixIntegralId::Utilde), s(AppendixIntegralId::Ntilde));
    }

    #[test]
    fn identity_reference_values() {
        let cases = [(0.3, 0.338_194_823_3), (0.35, 0.446_052_076_6), (0.4, 0.581_920_409_6), (0.45, 0.759_035_701_8)];
        for (h, lhs) in cases {
            let c = identity_check(hp(h)).unwrap();
            assert!((c.lhs - lhs).abs() < 1e-9, "{h}: {}", c.lhs);
            assert!(c.rel_err < 1e-8, "{h}: {c:?}");
        }
    }

    #[test]
    fn composite_dual_routes() {
        for h in [0.2, 0.3, 0.45] {
            let c = composite_slopes(hp(h)).unwrap();
            assert!((c.a2 - c.a2_from_terms).abs() < 1e-10);
            assert!((c.a3 - c.a3_from_terms).abs() < 1e-10);
        }
    }

    #[test]
    fn breakdown_total_identity() {
        let h = hp(0.3);
        let b = MTermBreakdown::compose(h, 1.0, 2.0, 3.0, 4.0, 5.0);
        let a = alpha_h(h);
        assert_eq!(b.total, 5.0 + 2.0 * (a * a * 3.0 - a * 7.0));
    }

    #[test]
    fn short_horizon_rejected() {
        assert!(eval_appendix_integral(AppendixIntegralId::L, 1.5, hp(0.3)).is_err());
    }
}
