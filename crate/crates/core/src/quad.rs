//! Deterministic quadrature: adaptive Gauss-Legendre on graded meshes with
//! algebraic endpoint singularities, certified truncation of exponentially
//! decaying tails, and iterated integrals with variable limits.
//!
//! Panels touching a hinted singularity `|x - x0|^beta` use a Jacobi-weight rule
//! for the factor `|x - x0|^beta`; every other panel is plain Gauss-Legendre.
//! Refinement bisects the panel with the largest error estimate, so the mesh
//! grades geometrically (ratio 1/2) toward whatever the integrand needs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::specfun::gamma_fn;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
    pub nodes_per_panel: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig { abs_tol: 1e-12, rel_tol: 1e-10, max_panels: 4000, nodes_per_panel: 16 }
    }
}

impl QuadConfig {
    pub fn new(abs_tol: f64, rel_tol: f64, max_panels: usize, nodes_per_panel: usize) -> Result<Self> {
        let cfg = QuadConfig { abs_tol, rel_tol, max_panels, nodes_per_panel };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::InvalidParam("quadrature tolerances must be positive".into()));
        }
        if self.max_panels < 8 {
            return Err(Error::InvalidParam("max_panels must be at least 8".into()));
        }
        if !(4..=64).contains(&self.nodes_per_panel) {
            return Err(Error::InvalidParam("nodes_per_panel must lie in 4..=64".into()));
        }
        Ok(())
    }

    /// Same configuration with both tolerances multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        QuadConfig { abs_tol: self.abs_tol * factor, rel_tol: self.rel_tol * factor, ..*self }
    }
}

/// Location of an integrable singularity `|x - location|^exponent`, or of a
/// kink/jump when `exponent == 0`.
///
/// A hint that lies just outside the integration interval grades the mesh
/// toward the nearest endpoint; this is how near-singular kernels such as
/// `(t - s)^{2H-2}` with `s` slightly left of the interval are handled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularityHint {
    pub location: f64,
    pub exponent: f64,
}

impl SingularityHint {
    pub fn new(location: f64, exponent: f64) -> Self {
        SingularityHint { location, exponent }
    }

    pub fn breakpoint(location: f64) -> Self {
        SingularityHint { location, exponent: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub err: f64,
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(2..=64).contains(&n) {
        return Err(Error::InvalidParam(format!("Gauss-Legendre order must lie in 2..=64, got {n}")));
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    Ok((x, w))
}

/// Gauss-Jacobi nodes and weights on [-1, 1] for the weight
/// `(1 - x)^alpha (1 + x)^beta` (Golub-Welsch).
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(1..=64).contains(&n) {
        return Err(Error::InvalidParam(format!("Gauss-Jacobi order must lie in 1..=64, got {n}")));
    }
    if !(alpha > -1.0 && beta > -1.0) {
        return Err(Error::InvalidParam("Jacobi exponents must exceed -1".into()));
    }
    let ab = alpha + beta;
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    d[0] = (beta - alpha) / (ab + 2.0);
    for k in 1..n {
        let s = 2.0 * k as f64 + ab;
        d[k] = (beta * beta - alpha * alpha) / (s * (s + 2.0));
    }
    if n > 1 {
        e[0] = (4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + ab).powi(2) * (3.0 + ab))).sqrt();
    }
    for k in 2..n {
        let kf = k as f64;
        let s = 2.0 * kf + ab;
        let num = 4.0 * kf * (kf + alpha) * (kf + beta) * (kf + ab);
        e[k - 1] = (num / (s * s * (s + 1.0) * (s - 1.0))).sqrt();
    }
    let mu0 = 2f64.powf(ab + 1.0) * gamma_fn(alpha + 1.0)? * gamma_fn(beta + 1.0)? / gamma_fn(ab + 2.0)?;
    let mut z = vec![0.0; n];
    z[0] = 1.0;
    tridiagonal_ql(&mut d, &mut e, &mut z)?;
    let mut pairs: Vec<(f64, f64)> = d.iter().zip(&z).map(|(&x, &v)| (x, mu0 * v * v)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

/// Implicit QL on a symmetric tridiagonal matrix; tracks only the first row
/// of the eigenvector matrix.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], z: &mut [f64]) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(Error::InvalidParam("tridiagonal eigen-solver did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let fz = z[i + 1];
                z[i + 1] = s * z[i] + c * fz;
                z[i] = c * z[i] - s * fz;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug)]
enum Kind {
    Regular,
    Left(usize),
    Right(usize),
}

struct Rules {
    gl_x: Vec<f64>,
    gl_w: Vec<f64>,
    jacobi: Vec<(f64, Vec<f64>, Vec<f64>)>,
}

impl Rules {
    fn jacobi_index(&mut self, beta: f64, n: usize) -> Result<usize> {
        if let Some(i) = self.jacobi.iter().position(|(b, _, _)| *b == beta) {
            return Ok(i);
        }
        let (x, w) = gauss_jacobi(n, 0.0, beta)?;
        self.jacobi.push((beta, x, w));
        Ok(self.jacobi.len() - 1)
    }

    fn apply<F: FnMut(f64) -> Result<f64>>(&self, kind: Kind, a: f64, b: f64, f: &mut F) -> Result<f64> {
        let half = 0.5 * (b - a);
        let mut sum = 0.0;
        match kind {
            Kind::Regular => {
                let mid = 0.5 * (a + b);
                for (x, w) in self.gl_x.iter().zip(&self.gl_w) {
                    let xi = mid + half * x;
                    let v = f(xi)?;
                    if !v.is_finite() {
                        return Err(Error::NonFinite(xi));
                    }
                    sum += w * v;
                }
            }
            Kind::Left(k) | Kind::Right(k) => {
                let (beta, ref ys, ref ws) = self.jacobi[k];
                let left = matches!(kind, Kind::Left(_));
                for (y, w) in ys.iter().zip(ws) {
                    let (xi, off) = if left {
                        let xi = a + half * (1.0 + y);
                        (xi, xi - a)
                    } else {
                        let xi = b - half * (1.0 + y);
                        (xi, b - xi)
                    };
                    let r = if off > 0.0 { off / half } else { 1.0 + y };
                    let v = f(xi)?;
                    if !v.is_finite() {
                        return Err(Error::NonFinite(xi));
                    }
                    sum += w * v / r.powf(beta);
                }
            }
        }
        Ok(sum * half)
    }
}

struct Panel {
    a: f64,
    b: f64,
    kind: Kind,
    left: f64,
    right: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn halves(kind: Kind, a: f64, b: f64) -> ((f64, f64, Kind), (f64, f64, Kind)) {
    let m = 0.5 * (a + b);
    match kind {
        Kind::Regular => ((a, m, Kind::Regular), (m, b, Kind::Regular)),
        Kind::Left(k) => ((a, m, Kind::Left(k)), (m, b, Kind::Regular)),
        Kind::Right(k) => ((a, m, Kind::Regular), (m, b, Kind::Right(k))),
    }
}

fn process<F: FnMut(f64) -> Result<f64>>(
    rules: &Rules,
    a: f64,
    b: f64,
    kind: Kind,
    coarse: f64,
    f: &mut F,
) -> Result<Panel> {
    let ((la, lb, lk), (ra, rb, rk)) = halves(kind, a, b);
    let left = rules.apply(lk, la, lb, f)?;
    let right = rules.apply(rk, ra, rb, f)?;
    Ok(Panel { a, b, kind, left, right, err: (left + right - coarse).abs() })
}

/// Adaptive integral of `f` over `[a, b]`.
pub fn integrate_1d<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    hints: &[SingularityHint],
    cfg: &QuadConfig,
) -> Result<Estimate> {
    try_integrate_1d(|x| Ok(f(x)), a, b, hints, cfg)
}

/// [`integrate_1d`] for integrands that can themselves fail (nested integrals).
pub fn try_integrate_1d<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    a: f64,
    b: f64,
    hints: &[SingularityHint],
    cfg: &QuadConfig,
) -> Result<Estimate> {
    cfg.validate()?;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParam(format!("integration limits must be finite, got [{a}, {b}]")));
    }
    if a == b {
        return Ok(Estimate { value: 0.0, err: 0.0 });
    }
    if a > b {
        let e = try_integrate_1d(f, b, a, hints, cfg)?;
        return Ok(Estimate { value: -e.value, err: e.err });
    }

    let (gl_x, gl_w) = gauss_legendre(cfg.nodes_per_panel)?;
    let mut rules = Rules { gl_x, gl_w, jacobi: Vec::new() };
    let len = b - a;
    let scale = a.abs().max(b.abs());
    let snap = 1e-14 * scale.max(len);

    let mut pts = vec![a, b];
    let mut sing: Vec<(f64, f64)> = Vec::new();
    for hint in hints {
        let x0 = hint.location;
        let beta = hint.exponent;
        if !x0.is_finite() {
            continue;
        }
        if x0 < a - snap || x0 > b + snap {
            let (edge, delta, dir) = if x0 < a { (a, a - x0, 1.0) } else { (b, x0 - b, -1.0) };
            if delta < len {
                let mut k = 1;
                loop {
                    let p = edge + dir * delta * ((1u64 << k) as f64 - 1.0);
                    if (dir > 0.0 && p >= b) || (dir < 0.0 && p <= a) || k > 60 {
                        break;
                    }
                    pts.push(p);
                    k += 1;
                }
            }
            continue;
        }
        let x0 = x0.clamp(a, b);
        if beta <= -1.0 {
            return Err(Error::InvalidParam(format!("non-integrable singularity exponent {beta} at {x0}")));
        }
        if beta < 0.0 {
            sing.push((x0, beta));
        }
        pts.push(x0);
    }
    pts.sort_by(|x, y| x.total_cmp(y));
    let mut mesh: Vec<f64> = Vec::with_capacity(pts.len());
    for p in pts {
        match mesh.last() {
            Some(&last) if p - last <= snap => {
                if p == b {
                    *mesh.last_mut().unwrap() = b;
                }
            }
            _ => mesh.push(p),
        }
    }
    if mesh.len() < 2 {
        mesh = vec![a, b];
    }
    *mesh.first_mut().unwrap() = a;
    *mesh.last_mut().unwrap() = b;

    let exponent_at = |x: f64| -> Option<f64> {
        sing.iter()
            .filter(|(s, _)| (s - x).abs() <= snap)
            .map(|&(_, beta)| beta)
            .min_by(|p, q| p.total_cmp(q))
    };

    let mut initial: Vec<(f64, f64, Kind)> = Vec::new();
    for w in mesh.windows(2) {
        let (p, q) = (w[0], w[1]);
        let ls = exponent_at(p);
        let rs = exponent_at(q);
        match (ls, rs) {
            (Some(bl), Some(br)) => {
                let m = 0.5 * (p + q);
                let kl = rules.jacobi_index(bl, cfg.nodes_per_panel)?;
                let kr = rules.jacobi_index(br, cfg.nodes_per_panel)?;
                initial.push((p, m, Kind::Left(kl)));
                initial.push((m, q, Kind::Right(kr)));
            }
            (Some(bl), None) => {
                let kl = rules.jacobi_index(bl, cfg.nodes_per_panel)?;
                initial.push((p, q, Kind::Left(kl)));
            }
            (None, Some(br)) => {
                let kr = rules.jacobi_index(br, cfg.nodes_per_panel)?;
                initial.push((p, q, Kind::Right(kr)));
            }
            (None, None) => initial.push((p, q, Kind::Regular)),
        }
    }

    let mut heap = BinaryHeap::new();
    let mut frozen: Vec<Panel> = Vec::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    for (p, q, kind) in initial {
        let coarse = rules.apply(kind, p, q, &mut f)?;
        let node = process(&rules, p, q, kind, coarse, &mut f)?;
        total += node.left + node.right;
        total_err += node.err;
        heap.push(node);
    }

    loop {
        let tol = cfg.abs_tol.max(cfg.rel_tol * total.abs());
        if total_err <= tol {
            break;
        }
        if heap.len() + frozen.len() >= cfg.max_panels {
            return Err(Error::BudgetExceeded { value: total, err: total_err, panels: heap.len() + frozen.len() });
        }
        let Some(node) = heap.pop() else {
            return Err(Error::BudgetExceeded { value: total, err: total_err, panels: frozen.len() });
        };
        let width = node.b - node.a;
        let min_width = 64.0 * f64::EPSILON * node.a.abs().max(node.b.abs()) + f64::MIN_POSITIVE;
        if width <= min_width {
            frozen.push(node);
            continue;
        }
        total -= node.left + node.right;
        total_err -= node.err;
        let ((la, lb, lk), (ra, rb, rk)) = halves(node.kind, node.a, node.b);
        let ln = process(&rules, la, lb, lk, node.left, &mut f)?;
        let rn = process(&rules, ra, rb, rk, node.right, &mut f)?;
        for child in [ln, rn] {
            total += child.left + child.right;
            total_err += child.err;
            heap.push(child);
        }
        total_err = total_err.max(0.0);
    }

    let value: f64 = heap.iter().chain(frozen.iter()).map(|n| n.left + n.right).sum();
    let err: f64 = heap.iter().chain(frozen.iter()).map(|n| n.err).sum();
    let mass: f64 = heap.iter().chain(frozen.iter()).map(|n| n.left.abs() + n.right.abs()).sum();
    Ok(Estimate { value, err: err.max(50.0 * f64::EPSILON * mass) })
}

/// Quadrature node handed to anchored integrands: `x = anchor + off`, with
/// `off` exact even when `x` itself is rounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub x: f64,
    pub anchor: f64,
    pub off: f64,
}

impl Node {
    /// `x - c`, exact when `c` is the anchor.
    #[inline]
    pub fn diff(&self, c: f64) -> f64 {
        if c == self.anchor {
            self.off
        } else {
            self.x - c
        }
    }
}

/// Like [`try_integrate_1d`], but every panel is evaluated in coordinates
/// centred on the nearest singular hint (exponent < 0), so the integrand can
/// form `x - x0` without cancellation through [`Node::diff`]. Needed whenever a
/// singularity sits away from the origin and the integrand is not a pure
/// power there.
pub fn try_integrate_anchored<F: FnMut(Node) -> Result<f64>>(
    mut f: F,
    a: f64,
    b: f64,
    hints: &[SingularityHint],
    cfg: &QuadConfig,
) -> Result<Estimate> {
    if a > b {
        let e = try_integrate_anchored(f, b, a, hints, cfg)?;
        return Ok(Estimate { value: -e.value, err: e.err });
    }
    if a == b {
        return Ok(Estimate { value: 0.0, err: 0.0 });
    }
    let len = b - a;
    let mut anchors: Vec<f64> = hints
        .iter()
        .filter(|h| h.exponent < 0.0 && h.location.is_finite())
        .map(|h| h.location)
        .filter(|&c| c >= a - len && c <= b + len)
        .collect();
    anchors.sort_by(|x, y| x.total_cmp(y));
    anchors.dedup();
    let mut cuts = vec![a];
    cuts.extend(anchors.iter().copied().filter(|&c| c > a && c < b));
    cuts.push(b);

    let mut pieces: Vec<(f64, f64, Option<f64>)> = Vec::new();
    for w in cuts.windows(2) {
        let (p, q) = (w[0], w[1]);
        let left = anchors.iter().rev().find(|&&c| c <= p).copied();
        let right = anchors.iter().find(|&&c| c >= q).copied();
        match (left, right) {
            (Some(l), Some(r)) => {
                let m = 0.5 * (l + r);
                if m <= p {
                    pieces.push((p, q, Some(r)));
                } else if m >= q {
                    pieces.push((p, q, Some(l)));
                } else {
                    pieces.push((p, m, Some(l)));
                    pieces.push((m, q, Some(r)));
                }
            }
            (Some(l), None) => pieces.push((p, q, Some(l))),
            (None, Some(r)) => pieces.push((p, q, Some(r))),
            (None, None) => pieces.push((p, q, None)),
        }
    }

    let mut value = 0.0;
    let mut err = 0.0;
    for (p, q, anchor) in pieces {
        let e = match anchor {
            None => try_integrate_1d(|x| f(Node { x, anchor: f64::NAN, off: f64::NAN }), p, q, hints, cfg)?,
            Some(c) if c <= p => {
                let local: Vec<SingularityHint> =
                    hints.iter().map(|h| SingularityHint::new(h.location - c, h.exponent)).collect();
                try_integrate_1d(|u| f(Node { x: c + u, anchor: c, off: u }), p - c, q - c, &local, cfg)?
            }
            Some(c) => {
                let local: Vec<SingularityHint> =
                    hints.iter().map(|h| SingularityHint::new(c - h.location, h.exponent)).collect();
                try_integrate_1d(|v| f(Node { x: c - v, anchor: c, off: -v }), c - q, c - p, &local, cfg)?
            }
        };
        value += e.value;
        err += e.err;
    }
    Ok(Estimate { value, err })
}

/// Decay envelope `|f(u)| <= k e^{-u} u^alpha` supplied by the caller of
/// [`integrate_semi_inf`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpDecay {
    pub k: f64,
    pub alpha: f64,
}

impl ExpDecay {
    /// Upper bound on the tail mass beyond `c` (requires `c > alpha`).
    pub fn tail_bound(&self, c: f64) -> f64 {
        let base = self.k * (-c).exp() * c.powf(self.alpha);
        if self.alpha <= 0.0 {
            base
        } else {
            base / (1.0 - self.alpha / c)
        }
    }
}

/// Integral over `[a, inf)` by certified truncation followed by [`integrate_1d`].
pub fn integrate_semi_inf<F: FnMut(f64) -> f64>(
    f: F,
    a: f64,
    decay: ExpDecay,
    hints: &[SingularityHint],
    cfg: &QuadConfig,
) -> Result<Estimate> {
    let mut cut = (a + 1.0).max(2.0 * decay.alpha.max(0.0) + 2.0).max(1.0);
    while decay.tail_bound(cut) >= cfg.abs_tol / 10.0 {
        cut += 1.0;
        if cut > a + 2000.0 {
            return Err(Error::InvalidParam("decay envelope too weak for truncation".into()));
        }
    }
    let body = integrate_1d(f, a, cut, hints, cfg)?;
    Ok(Estimate { value: body.value, err: body.err + decay.tail_bound(cut) })
}

type LimitFn<'a> = Box<dyn Fn(&[f64]) -> f64 + 'a>;
type HintFn<'a> = Box<dyn Fn(&[f64]) -> Vec<SingularityHint> + 'a>;

/// One level of an iterated integral. Limits and hints see the values of all
/// enclosing (outer) variables, outermost first.
pub struct Level<'a> {
    pub lo: LimitFn<'a>,
    pub hi: LimitFn<'a>,
    pub hints: HintFn<'a>,
}

impl<'a> Level<'a> {
    pub fn new(
        lo: impl Fn(&[f64]) -> f64 + 'a,
        hi: impl Fn(&[f64]) -> f64 + 'a,
        hints: impl Fn(&[f64]) -> Vec<SingularityHint> + 'a,
    ) -> Self {
        Level { lo: Box::new(lo), hi: Box::new(hi), hints: Box::new(hints) }
    }

    pub fn fixed(lo: f64, hi: f64) -> Self {
        Level::new(move |_| lo, move |_| hi, |_| Vec::new())
    }
}

/// Iterated integral over up to three levels; `f` receives the variables
/// outermost first. Errors are tagged with the level at which they arose.
pub fn integrate_iterated(levels: &[Level<'_>], f: &dyn Fn(&[f64]) -> f64, cfg: &QuadConfig) -> Result<Estimate> {
    if levels.is_empty() || levels.len() > 3 {
        return Err(Error::InvalidParam(format!("iterated integrals take 1..=3 levels, got {}", levels.len())));
    }
    let mut prefix = Vec::with_capacity(levels.len());
    nested(levels, 0, &mut prefix, f, cfg)
}

fn nested(
    levels: &[Level<'_>],
    depth: usize,
    prefix: &mut Vec<f64>,
    f: &dyn Fn(&[f64]) -> f64,
    cfg: &QuadConfig,
) -> Result<Estimate> {
    let level = &levels[depth];
    let lo = (level.lo)(prefix);
    let hi = (level.hi)(prefix);
    let hints = (level.hints)(prefix);
    let last = depth + 1 == levels.len();
    let inner_cfg = cfg.scaled(0.1);
    let mut inner_err: f64 = 0.0;
    let est = try_integrate_1d(
        |x| {
            prefix.push(x);
            let r = if last {
                Ok(f(prefix))
            } else {
                nested(levels, depth + 1, prefix, f, &inner_cfg).map(|e| {
                    inner_err = inner_err.max(e.err);
                    e.value
                })
            };
            prefix.pop();
            r
        },
        lo,
        hi,
        &hints,
        cfg,
    )
    .map_err(|e| match e {
        Error::AtLevel { .. } => e,
        e => e.at_level(depth),
    })?;
    Ok(Estimate { value: est.value, err: est.err + (hi - lo).abs() * inner_err })
}
