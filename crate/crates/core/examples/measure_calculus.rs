//! Piecewise exp-polynomial functions and their Lebesgue-Stieltjes measures.

use fbmlab::bvfunc::{BVFunction, ExpPolyTerm, Piece};
use fbmlab::quad::QuadConfig;

fn main() -> fbmlab::Result<()> {
    let t = 4.0;
    // 2 on [0,1), e^{-s} on [1,3]
    let f = BVFunction::new(
        vec![
            Piece::new(0.0, 1.0, vec![ExpPolyTerm::constant(2.0)]),
            Piece::new(1.0, 3.0, vec![ExpPolyTerm::new(1.0, 0.0, -1.0)]),
        ],
        t,
    )?;
    let nu = f.to_measure();
    println!("atoms:");
    for a in &nu.atoms {
        println!("  {:>5.2}  {:+.6}", a.location, a.mass);
    }
    println!("density pieces: {}", nu.density.len());
    // the measure of the zero extension has total mass 0
    println!("total mass: {:.3e}", nu.total_mass()?);

    // int phi dnu = -int f phi' for smooth phi
    let cfg = QuadConfig::default();
    let lhs = nu.integrate_against(|s| s * s, &[], &cfg)?;
    let g = BVFunction::single(0.0, 3.0, vec![ExpPolyTerm::new(-2.0, 1.0, 0.0)], t)?;
    let rhs: f64 = f
        .pieces()
        .iter()
        .map(|p| {
            fbmlab::quad::integrate_1d(|s| p.eval(s) * g.eval(s), p.a, p.b, &[], &cfg).map(|e| e.value)
        })
        .sum::<fbmlab::Result<f64>>()?;
    println!("int s^2 dnu = {lhs:.12}, -int 2 s f(s) ds = {rhs:.12}");

    let sum = f.add(&BVFunction::indicator(0.5, 2.0, t)?)?;
    println!("f + 1[0.5,2] breakpoints: {:?}", sum.breakpoints());
    Ok(())
}
