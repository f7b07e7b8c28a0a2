//! Inner products on the fBm Hilbert space by every available method, over
//! the built-in battery of function pairs.

use fbmlab::hinner::{inner_product, reference_battery, IPMethod};
use fbmlab::quad::QuadConfig;
use fbmlab::specfun::HurstParam;

fn main() -> fbmlab::Result<()> {
    let h = HurstParam::new(std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.3))?;
    let cfg = QuadConfig::default();
    println!("H = {}", h.value());
    println!("{:<26} {:>14} {:>10} {:>10} {:>10} {:>10}", "pair", "measure", "window", "spectral", "grid", "disjoint");
    for (name, f, g) in reference_battery() {
        let j = inner_product(&f, &g, h, IPMethod::JolisMeasure, &cfg)?;
        let d = |m| inner_product(&f, &g, h, m, &cfg).map(|v| format!("{:+.1e}", v - j));
        let disjoint = d(IPMethod::DisjointSupport).unwrap_or_else(|_| "overlap".into());
        println!(
            "{name:<26} {j:>14.10} {:>10} {:>10} {:>10} {disjoint:>10}",
            d(IPMethod::WindowDecomposed)?,
            d(IPMethod::FourierSpectral)?,
            d(IPMethod::GridOracle)?,
        );
    }
    Ok(())
}
