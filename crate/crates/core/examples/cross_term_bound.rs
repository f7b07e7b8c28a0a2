//! The cross inner product between the exponential kernel and the separable
//! endpoint kernel stays bounded as the horizon grows.

use fbmlab::asymlab::{cross_ip_ft_ht, cross_ip_grid, ols_line, FtKernelParams};
use fbmlab::specfun::HurstParam;

fn main() -> fbmlab::Result<()> {
    let h = HurstParam::new(0.3)?;
    let p = FtKernelParams::new(4.0, 1.0, h)?;
    println!("T = 4: quadrature {:.10}, grid {:.10}", cross_ip_ft_ht(&p)?, cross_ip_grid(&p, 512)?);
    let mut pts = Vec::new();
    for t in [10.0, 25.0, 50.0, 100.0] {
        let v = cross_ip_ft_ht(&FtKernelParams::new(t, 1.0, h)?)?;
        println!("T = {t:>5}: {v:.10}");
        pts.push((t, v));
    }
    let (slope, _, se) = ols_line(&pts)?;
    println!("trend slope {slope:.2e} +- {se:.1e}");
    Ok(())
}
