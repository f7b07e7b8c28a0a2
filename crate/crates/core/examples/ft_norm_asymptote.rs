//! Norm of the exponential kernel `e^{-theta|t-s|}` in the tensor square and
//! its linear growth in the horizon.

use fbmlab::asymlab::{norm_ft_sq, norm_ft_sq_grid, theorem11_report, FtKernelParams};
use fbmlab::specfun::HurstParam;

fn main() -> fbmlab::Result<()> {
    let h = HurstParam::new(std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.3))?;

    let p = FtKernelParams::new(4.0, 1.0, h)?;
    let b = norm_ft_sq(&p)?;
    println!("T = 4: {b:#?}");
    println!("grid oracle (512 cells): {:.8}", norm_ft_sq_grid(&p, 512)?);

    let r = theorem11_report(h, 1.0, &[50.0, 100.0, 200.0, 400.0])?;
    println!("\n{:>6} {:>16} {:>14}", "T", "norm", "residual");
    for (k, (t, b)) in r.breakdowns.iter().enumerate() {
        println!("{t:>6} {:>16.10} {:>14.8}", b.total, r.residuals[k]);
    }
    println!("fitted slope {:.10}, predicted {:.10}, rel err {:.2e}", r.fit.slope, r.target_slope, r.slope_rel_err);
    println!("residual steps {:?} decreasing: {}", r.residual_steps, r.residual_steps_decreasing());
    Ok(())
}
