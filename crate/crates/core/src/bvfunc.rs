//! Piecewise exponential-polynomial functions of bounded variation on `[0, T]`
//! and their Lebesgue-Stieltjes measures.
//!
//! A function is stored as a list of pieces `[a, b]` with disjoint interiors,
//! each carrying a sum of [`ExpPolyTerm`]s. It is extended by zero outside its
//! pieces, so its measure has a density on each piece interior plus atoms
//! `+f(a+)` at every left end and `-f(b-)` at every right end.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate_1d, try_integrate_1d, QuadConfig, SingularityHint};

/// `coef * s^power * exp(rate * (s - shift))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpPolyTerm {
    pub coef: f64,
    pub power: f64,
    pub rate: f64,
    pub shift: f64,
}

impl ExpPolyTerm {
    pub fn new(coef: f64, power: f64, rate: f64) -> Self {
        ExpPolyTerm { coef, power, rate, shift: 0.0 }
    }

    pub fn constant(c: f64) -> Self {
        ExpPolyTerm::new(c, 0.0, 0.0)
    }

    /// `coef * exp(rate * (s - shift))`; keeps the exponent small on long horizons.
    pub fn exp_shifted(coef: f64, rate: f64, shift: f64) -> Self {
        ExpPolyTerm { coef, power: 0.0, rate, shift }
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        let p = if self.power == 0.0 { 1.0 } else { s.powf(self.power) };
        let e = if self.rate == 0.0 { 1.0 } else { (self.rate * (s - self.shift)).exp() };
        self.coef * p * e
    }

    pub fn is_integer_power(&self) -> bool {
        self.power >= 0.0 && self.power == self.power.floor() && self.power <= 64.0
    }

    /// Derivative as a list of terms (one or two).
    pub fn derivative(&self) -> Vec<ExpPolyTerm> {
        let mut out = Vec::with_capacity(2);
        if self.power != 0.0 {
            out.push(ExpPolyTerm { coef: self.coef * self.power, power: self.power - 1.0, ..*self });
        }
        if self.rate != 0.0 {
            out.push(ExpPolyTerm { coef: self.coef * self.rate, ..*self });
        }
        out
    }

    fn scaled(&self, c: f64) -> Self {
        ExpPolyTerm { coef: self.coef * c, ..*self }
    }

    /// `int_a^b` of the term.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        if self.coef == 0.0 || a == b {
            return Ok(0.0);
        }
        if self.rate == 0.0 {
            if self.power <= -1.0 && a <= 0.0 {
                return Err(Error::Singular(format!("s^{} is not integrable at 0", self.power)));
            }
            let p1 = self.power + 1.0;
            return Ok(self.coef * (b.powf(p1) - a.powf(p1)) / p1);
        }
        let r = self.rate;
        if self.power == 0.0 {
            let ea = (r * (a - self.shift)).exp();
            return Ok(self.coef * ea * (r * (b - a)).exp_m1() / r);
        }
        if self.is_integer_power() && (r * (b - a)).abs() > 0.5 {
            // I_k = [s^k e / r] - (k / r) I_{k-1}
            let k = self.power as i32;
            let eb = (r * (b - self.shift)).exp();
            let ea = (r * (a - self.shift)).exp();
            let mut acc = (eb - ea) / r;
            for j in 1..=k {
                acc = (b.powi(j) * eb - a.powi(j) * ea) / r - j as f64 / r * acc;
            }
            return Ok(self.coef * acc);
        }
        let hints = if a <= 0.0 && self.power < 0.0 {
            vec![SingularityHint::new(0.0, self.power)]
        } else {
            Vec::new()
        };
        let e = integrate_1d(|s| self.eval(s), a, b, &hints, &QuadConfig::default())?;
        Ok(e.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub a: f64,
    pub b: f64,
    pub terms: Vec<ExpPolyTerm>,
}

impl Piece {
    pub fn new(a: f64, b: f64, terms: Vec<ExpPolyTerm>) -> Self {
        Piece { a, b, terms }
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        self.terms.iter().map(|t| t.eval(s)).sum()
    }

    pub fn min_power(&self) -> f64 {
        self.terms.iter().map(|t| t.power).fold(f64::INFINITY, f64::min)
    }

    pub fn integral(&self) -> Result<f64> {
        let mut s = 0.0;
        for t in &self.terms {
            s += t.integral(self.a, self.b)?;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BVFunction {
    pieces: Vec<Piece>,
    t_horizon: f64,
}

impl BVFunction {
    pub fn new(mut pieces: Vec<Piece>, t_horizon: f64) -> Result<Self> {
        if !(t_horizon > 0.0 && t_horizon.is_finite()) {
            return Err(Error::InvalidParam(format!("horizon must be positive, got {t_horizon}")));
        }
        pieces.sort_by(|p, q| p.a.total_cmp(&q.a));
        for p in &pieces {
            if !(p.a < p.b) {
                return Err(Error::InvalidParam(format!("empty piece [{}, {}]", p.a, p.b)));
            }
            if p.a < 0.0 || p.b > t_horizon {
                return Err(Error::InvalidParam(format!(
                    "piece [{}, {}] leaves [0, {t_horizon}]",
                    p.a, p.b
                )));
            }
            for t in &p.terms {
                if !(t.power >= 0.0) || !t.coef.is_finite() || !t.rate.is_finite() || !t.shift.is_finite() {
                    return Err(Error::InvalidParam(format!("bad term {t:?}")));
                }
            }
        }
        for w in pieces.windows(2) {
            if w[1].a < w[0].b {
                return Err(Error::InvalidParam(format!(
                    "pieces [{}, {}] and [{}, {}] overlap",
                    w[0].a, w[0].b, w[1].a, w[1].b
                )));
            }
        }
        Ok(BVFunction { pieces, t_horizon })
    }

    pub fn zero(t_horizon: f64) -> Result<Self> {
        BVFunction::new(Vec::new(), t_horizon)
    }

    pub fn indicator(a: f64, b: f64, t_horizon: f64) -> Result<Self> {
        BVFunction::new(vec![Piece::new(a, b, vec![ExpPolyTerm::constant(1.0)])], t_horizon)
    }

    /// Single piece `sum(terms)` on `[a, b]`.
    pub fn single(a: f64, b: f64, terms: Vec<ExpPolyTerm>, t_horizon: f64) -> Result<Self> {
        BVFunction::new(vec![Piece::new(a, b, terms)], t_horizon)
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn t_horizon(&self) -> f64 {
        self.t_horizon
    }

    /// Value at `s`; on a boundary shared by two pieces the left piece wins,
    /// and outside every piece the value is 0.
    pub fn eval(&self, s: f64) -> f64 {
        self.pieces.iter().find(|p| p.a <= s && s <= p.b).map_or(0.0, |p| p.eval(s))
    }

    /// Smallest closed interval containing all pieces.
    pub fn support(&self) -> Option<(f64, f64)> {
        let first = self.pieces.first()?;
        let last = self.pieces.iter().map(|p| p.b).fold(first.b, f64::max);
        Some((first.a, last))
    }

    /// Piece endpoints, sorted and deduplicated.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.pieces.iter().flat_map(|p| [p.a, p.b]).collect();
        v.sort_by(|x, y| x.total_cmp(y));
        v.dedup();
        v
    }

    pub fn scale(&self, c: f64) -> BVFunction {
        let pieces = self
            .pieces
            .iter()
            .map(|p| Piece::new(p.a, p.b, p.terms.iter().map(|t| t.scaled(c)).collect()))
            .collect();
        BVFunction { pieces, t_horizon: self.t_horizon }
    }

    /// Pointwise sum; overlapping pieces are split at every breakpoint.
    pub fn add(&self, other: &BVFunction) -> Result<BVFunction> {
        let t_horizon = self.t_horizon.max(other.t_horizon);
        let mut cuts: Vec<f64> = self.breakpoints();
        cuts.extend(other.breakpoints());
        cuts.sort_by(|x, y| x.total_cmp(y));
        cuts.dedup();
        let mut pieces = Vec::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            let mut terms = Vec::new();
            for p in self.pieces.iter().chain(other.pieces.iter()) {
                if p.a <= mid && mid <= p.b {
                    terms.extend(p.terms.iter().copied());
                }
            }
            if !terms.is_empty() {
                pieces.push(Piece::new(a, b, terms));
            }
        }
        BVFunction::new(pieces, t_horizon)
    }

    /// `f * 1_[lo, hi]` (pieces clipped to the interval).
    pub fn clip(&self, lo: f64, hi: f64) -> BVFunction {
        let pieces = self
            .pieces
            .iter()
            .filter_map(|p| {
                let a = p.a.max(lo);
                let b = p.b.min(hi);
                (a < b).then(|| Piece::new(a, b, p.terms.clone()))
            })
            .collect();
        BVFunction { pieces, t_horizon: self.t_horizon }
    }

    /// `f * 1_[(t - eps1) v 0, (t + eps2) ^ T]`.
    pub fn restrict_window(&self, t: f64, eps1: f64, eps2: f64) -> BVFunction {
        self.clip((t - eps1).max(0.0), (t + eps2).min(self.t_horizon))
    }

    /// Lebesgue-Stieltjes measure of the zero extension.
    pub fn to_measure(&self) -> SignedMeasure {
        let mut density = Vec::with_capacity(self.pieces.len());
        let mut atoms = Vec::with_capacity(2 * self.pieces.len());
        for p in &self.pieces {
            let d: Vec<ExpPolyTerm> = p.terms.iter().flat_map(|t| t.derivative()).collect();
            if !d.is_empty() {
                density.push(Piece::new(p.a, p.b, d));
            }
            atoms.push(Atom { location: p.a, mass: p.eval(p.a) });
            atoms.push(Atom { location: p.b, mass: -p.eval(p.b) });
        }
        SignedMeasure::from_parts(density, atoms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedMeasure {
    pub density: Vec<Piece>,
    pub atoms: Vec<Atom>,
}

const ATOM_PRUNE: f64 = 1e-15;

impl SignedMeasure {
    /// Canonical form: atoms sorted, coincident atoms merged, negligible ones dropped.
    pub fn from_parts(density: Vec<Piece>, mut atoms: Vec<Atom>) -> Self {
        atoms.sort_by(|x, y| x.location.total_cmp(&y.location));
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for at in atoms {
            match merged.last_mut() {
                Some(last) if last.location == at.location => last.mass += at.mass,
                _ => merged.push(at),
            }
        }
        merged.retain(|a| a.mass.abs() > ATOM_PRUNE);
        SignedMeasure { density, atoms: merged }
    }

    pub fn add(&self, other: &SignedMeasure) -> SignedMeasure {
        let mut density = self.density.clone();
        density.extend(other.density.iter().cloned());
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().copied());
        SignedMeasure::from_parts(density, atoms)
    }

    pub fn scale(&self, c: f64) -> SignedMeasure {
        let density = self
            .density
            .iter()
            .map(|p| Piece::new(p.a, p.b, p.terms.iter().map(|t| t.scaled(c)).collect()))
            .collect();
        let atoms = self.atoms.iter().map(|a| Atom { location: a.location, mass: a.mass * c }).collect();
        SignedMeasure::from_parts(density, atoms)
    }

    pub fn total_mass(&self) -> Result<f64> {
        let mut m: f64 = self.atoms.iter().map(|a| a.mass).sum();
        for p in &self.density {
            m += p.integral()?;
        }
        Ok(m)
    }

    /// `int phi dnu`; `hints` locate singularities or kinks of `phi`.
    pub fn integrate_against<F: Fn(f64) -> f64>(
        &self,
        phi: F,
        hints: &[SingularityHint],
        cfg: &QuadConfig,
    ) -> Result<f64> {
        self.try_integrate_against(|s| Ok(phi(s)), hints, cfg)
    }

    /// [`SignedMeasure::integrate_against`] for test functions that can fail.
    pub fn try_integrate_against<F: FnMut(f64) -> Result<f64>>(
        &self,
        mut phi: F,
        hints: &[SingularityHint],
        cfg: &QuadConfig,
    ) -> Result<f64> {
        let mut total = 0.0;
        for p in &self.density {
            let mut h = hints.to_vec();
            let mp = p.min_power();
            if mp < 0.0 && p.a <= 0.0 {
                h.push(SingularityHint::new(0.0, mp));
            }
            total += try_integrate_1d(|s| Ok(p.eval(s) * phi(s)?), p.a, p.b, &h, cfg)?.value;
        }
        for a in &self.atoms {
            total += a.mass * phi(a.location)?;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_measure_is_two_atoms() {
        let f = BVFunction::indicator(0.5, 2.0, 3.0).unwrap();
        let m = f.to_measure();
        assert!(m.density.is_empty());
        assert_eq!(m.atoms, vec![Atom { location: 0.5, mass: 1.0 }, Atom { location: 2.0, mass: -1.0 }]);
    }

    #[test]
    fn exp_piece_measure() {
        let f = BVFunction::single(0.0, 2.0, vec![ExpPolyTerm::new(1.0, 0.0, -1.0)], 2.0).unwrap();
        let m = f.to_measure();
        assert_eq!(m.atoms.len(), 2);
        assert!((m.atoms[0].mass - 1.0).abs() < 1e-15);
        assert!((m.atoms[1].mass + (-2f64).exp()).abs() < 1e-15);
        assert!((m.density[0].eval(1.0) + (-1f64).exp()).abs() < 1e-15);
        assert!(m.total_mass().unwrap().abs() < 1e-15);
    }

    #[test]
    fn adjacent_indicators_merge() {
        let f = BVFunction::indicator(0.0, 1.0, 3.0).unwrap();
        let g = BVFunction::indicator(1.0, 3.0, 3.0).unwrap();
        let sum = f.add(&g).unwrap().to_measure();
        let whole = BVFunction::indicator(0.0, 3.0, 3.0).unwrap().to_measure();
        assert_eq!(sum.atoms, whole.atoms);
        let lin = f.to_measure().add(&g.to_measure());
        assert_eq!(lin.atoms, whole.atoms);
    }

    #[test]
    fn window_clipping() {
        let f = BVFunction::indicator(0.0, 4.0, 4.0).unwrap();
        assert_eq!(f.restrict_window(0.0, 1.0, 1.0).pieces()[0], Piece::new(0.0, 1.0, vec![ExpPolyTerm::constant(1.0)]));
        let w = f.restrict_window(4.0, 1.0, 1.0);
        assert_eq!((w.pieces()[0].a, w.pieces()[0].b), (3.0, 4.0));
        let w = f.restrict_window(2.0, 1.0, 1.0);
        assert_eq!((w.pieces()[0].a, w.pieces()[0].b), (1.0, 3.0));
    }

    #[test]
    fn eval_conventions() {
        let f = BVFunction::indicator(0.0, 1.0, 2.0).unwrap();
        assert_eq!(f.eval(0.5), 1.0);
        assert_eq!(f.eval(1.5), 0.0);
        let g = BVFunction::single(0.0, 2.0, vec![ExpPolyTerm::new(1.0, 0.0, -1.0)], 2.0).unwrap();
        assert!((g.eval(1.0) - (-1f64).exp()).abs() < 1e-16);
        let two = BVFunction::new(
            vec![
                Piece::new(0.0, 1.0, vec![ExpPolyTerm::constant(2.0)]),
                Piece::new(1.0, 2.0, vec![ExpPolyTerm::constant(5.0)]),
            ],
            2.0,
        )
        .unwrap();
        assert_eq!(two.eval(1.0), 2.0);
    }

    #[test]
    fn constant_test_function_gives_zero() {
        let f = BVFunction::single(0.3, 1.7, vec![ExpPolyTerm::new(2.0, 2.0, 0.7)], 2.0).unwrap();
        let v = f.to_measure().integrate_against(|_| 1.0, &[], &QuadConfig::default()).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn atoms_only_against_smooth() {
        let m = BVFunction::indicator(0.2, 0.9, 1.0).unwrap().to_measure();
        let v = m.integrate_against(|s| s.sin(), &[], &QuadConfig::default()).unwrap();
        assert!((v - (0.2f64.sin() - 0.9f64.sin())).abs() < 1e-15);
    }

    #[test]
    fn integration_by_parts_round_trip() {
        let cfg = QuadConfig::default();
        let f = BVFunction::single(0.0, 2.0, vec![ExpPolyTerm::new(1.0, 0.0, -1.0)], 2.0).unwrap();
        let lhs = f.to_measure().integrate_against(|s| s * s, &[], &cfg).unwrap();
        let rhs = integrate_1d(|s| f.eval(s) * 2.0 * s, 0.0, 2.0, &[], &cfg).unwrap().value;
        assert!((lhs + rhs).abs() < 1e-10);
    }

    #[test]
    fn term_integrals() {
        let t = ExpPolyTerm::new(3.0, 2.0, 1.5);
        let direct = integrate_1d(|s| t.eval(s), 0.2, 2.5, &[], &QuadConfig::default()).unwrap().value;
        assert!((t.integral(0.2, 2.5).unwrap() - direct).abs() < 1e-11 * direct.abs());
        let t = ExpPolyTerm::exp_shifted(1.0, 1.0, 300.0);
        assert!((t.integral(0.0, 300.0).unwrap() - (1.0 - (-300f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_pieces() {
        assert!(BVFunction::indicator(1.0, 1.0, 2.0).is_err());
        assert!(BVFunction::indicator(0.0, 3.0, 2.0).is_err());
        let overlap = vec![
            Piece::new(0.0, 1.0, vec![ExpPolyTerm::constant(1.0)]),
            Piece::new(0.5, 2.0, vec![ExpPolyTerm::constant(1.0)]),
        ];
        assert!(BVFunction::new(overlap, 2.0).is_err());
    }
}
