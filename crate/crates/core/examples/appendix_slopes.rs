//! The four-fold integrals behind the kernel norm: values on a horizon grid,
//! fitted slopes and their closed forms.

use fbmlab::asymlab::{closed_form_slope, eval_appendix_integral, fit_asymptote, AppendixIntegralId};
use fbmlab::specfun::HurstParam;

fn main() -> fbmlab::Result<()> {
    let h = HurstParam::new(std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.3))?;
    let grid = [50.0, 100.0, 200.0, 400.0];
    println!("{:<7} {:>14} {:>14} {:>10}", "id", "fitted", "closed", "rel err");
    for id in AppendixIntegralId::ALL {
        let samples = grid
            .iter()
            .map(|&t| eval_appendix_integral(id, t, h).map(|v| (t, v)))
            .collect::<fbmlab::Result<Vec<_>>>()?;
        let fit = fit_asymptote(&samples)?;
        let closed = closed_form_slope(id, h)?;
        println!("{:<7} {:>14.9} {:>14.9} {:>10.2e}", id.name(), fit.slope, closed, (fit.slope - closed).abs() / closed.abs());
    }
    Ok(())
}
