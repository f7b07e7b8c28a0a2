//! Exact fractional Gaussian noise by circulant embedding, checked against
//! the model autocovariance and against a Cholesky sampler.

use fbmlab::estim::{dkw_band, two_sample_distance};
use fbmlab::fbmsim::{cholesky_fgn, derive_seed, FgnGenerator};
use fbmlab::specfun::{fgn_autocov, HurstParam};

fn main() -> fbmlab::Result<()> {
    let h = HurstParam::new(0.3)?;
    let (n, delta, reps) = (64, 0.25, 20_000u64);
    let gen = FgnGenerator::new(h, n, delta)?;
    println!("embedding size {}", gen.embedding_size());
    let mut acc = vec![0.0; 4];
    let mut ends_c = Vec::new();
    let mut ends_k = Vec::new();
    for r in 0..reps {
        let s = gen.sample(derive_seed(1, r));
        for (k, a) in acc.iter_mut().enumerate() {
            *a += (0..n - k).map(|i| s.increments[i] * s.increments[i + k]).sum::<f64>() / (n - k) as f64;
        }
        if r < 4000 {
            ends_c.push(s.endpoint());
            ends_k.push(cholesky_fgn(h, n, delta, derive_seed(2, r))?.endpoint());
        }
    }
    for (k, a) in acc.iter().enumerate() {
        println!("lag {k}: empirical {:+.5}, model {:+.5}", a / reps as f64, fgn_autocov(k, h, delta));
    }
    let d = two_sample_distance(&ends_c, &ends_k)?;
    let band = dkw_band(ends_c.len(), 0.01) * 2f64.sqrt();
    println!("endpoint two-sample distance {d:.4} (99% band {band:.4})");
    Ok(())
}
