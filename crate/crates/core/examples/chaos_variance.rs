//! The least-squares numerator is a second-chaos quadratic form of the noise;
//! its variance approaches half the squared kernel norm.

use fbmlab::asymlab::{norm_ft_sq, FtKernelParams};
use fbmlab::estim::{grid_size, moments, SampleEngine};
use fbmlab::fbmsim::derive_seed;
use fbmlab::specfun::{HurstParam, ModelParams};
use rayon::prelude::*;

fn main() -> fbmlab::Result<()> {
    let h = HurstParam::new(0.3)?;
    let t = 10.0;
    let n = grid_size(t, 1.0 / 16.0)?;
    let engine = SampleEngine::new(ModelParams::new(1.0, 1.0, h, t)?, n)?;
    let nums: Vec<f64> = (0..20_000u64)
        .into_par_iter()
        .map(|i| engine.draw(derive_seed(7, i)).map(|s| s.numerator))
        .collect::<fbmlab::Result<_>>()?;
    let m = moments(&nums);
    let half = 0.5 * norm_ft_sq(&FtKernelParams::new(t, 1.0, h)?)?.total;
    println!("mean {:+.4}, variance {:.4}, half norm {:.4}", m.mean, m.var, half);
    Ok(())
}
