//! Adaptive Gauss quadrature on integrands with algebraic endpoint
//! singularities, with and without a singularity hint.

use fbmlab::quad::{gauss_jacobi, integrate_1d, integrate_semi_inf, ExpDecay, QuadConfig, SingularityHint};
use fbmlab::specfun::gamma_fn;

fn main() -> fbmlab::Result<()> {
    let cfg = QuadConfig::default();

    // int_0^1 x^{-0.4} e^{-x} dx = lower incomplete gamma(0.6, 1)
    let q = -0.4;
    let plain = integrate_1d(|x| x.powf(q) * (-x).exp(), 0.0, 1.0, &[], &cfg);
    let hinted = integrate_1d(|x| x.powf(q) * (-x).exp(), 0.0, 1.0, &[SingularityHint::new(0.0, q)], &cfg)?;
    match plain {
        Ok(e) => println!("no hint:   {:.15}  (err est {:.1e})", e.value, e.err),
        Err(e) => println!("no hint:   {e}"),
    }
    println!("with hint: {:.15}  (err est {:.1e})", hinted.value, hinted.err);

    // int_0^inf x^{-0.4} e^{-x} dx = Gamma(0.6)
    let full = integrate_semi_inf(
        |x| x.powf(q) * (-x).exp(),
        0.0,
        ExpDecay { k: 1.0, alpha: q },
        &[SingularityHint::new(0.0, q)],
        &cfg,
    )?;
    println!("Gamma(0.6): quadrature {:.15}, Lanczos {:.15}", full.value, gamma_fn(0.6)?);

    // a bare Gauss-Jacobi rule integrates (1+x)^{-0.4} p(x) exactly
    let (x, w) = gauss_jacobi(8, 0.0, q)?;
    let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
    let exact = {
        // int_{-1}^{1} x^2 (1+x)^q dx with u = 1 + x
        let b = |k: f64| 2f64.powf(k + q + 1.0) / (k + q + 1.0);
        b(2.0) - 2.0 * b(1.0) + b(0.0)
    };
    println!("Gauss-Jacobi 8 points: {s:.15} vs {exact:.15}");
    Ok(())
}
