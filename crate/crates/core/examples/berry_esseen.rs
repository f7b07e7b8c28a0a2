//! Kolmogorov distance of the normalised drift estimators from the standard
//! normal over a horizon grid. Optional arguments: H, replications, grid step.

use fbmlab::estim::{be_experiment, column_flatness, rate_table};
use fbmlab::specfun::HurstParam;

fn main() -> fbmlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let h = HurstParam::new(args.next().and_then(|s| s.parse().ok()).unwrap_or(0.3))?;
    let reps = args.next().and_then(|s| s.parse().ok()).unwrap_or(5000);
    let delta = args.next().and_then(|s| s.parse().ok()).unwrap_or(1.0 / 16.0);
    let s = be_experiment(1.0, 1.0, h, &[25.0, 50.0, 100.0, 200.0], reps, delta, 42)?;
    println!("{:>6} {:>8} {:>8} {:>9} {:>9} {:>9}", "T", "dk lse", "dk mm", "mean lse", "var lse", "mean mm");
    for r in &s.rows {
        println!(
            "{:>6} {:>8.4} {:>8.4} {:>9.4} {:>9.4} {:>9.4}",
            r.t, r.dk_lse, r.dk_mm, r.mean_norm_lse, r.var_norm_lse, r.mean_norm_mm
        );
    }
    println!("beta lse {:.3} +- {:.3} (reliable: {}), mc floor {:.4}", s.beta_lse.beta, s.beta_lse.stderr, s.beta_lse.reliable, s.mc_floor);
    let rt = rate_table(&s);
    let a: Vec<f64> = rt.iter().map(|r| r.dk_sqrt_t).collect();
    let b: Vec<f64> = rt.iter().map(|r| r.dk_t_pow).collect();
    println!("spread of dk sqrt(T): {:.3}, of dk T^(1-2H): {:.3}", column_flatness(&a), column_flatness(&b));
    Ok(())
}
