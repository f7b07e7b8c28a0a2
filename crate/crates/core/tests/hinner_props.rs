mod common;

use common::{bv_function, rel_close, HORIZON};
use fbmlab::bvfunc::BVFunction;
use fbmlab::hinner::*;
use fbmlab::quad::QuadConfig;
use fbmlab::specfun::HurstParam;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn hp(h: f64) -> HurstParam {
    HurstParam::new(h).unwrap()
}

fn tight() -> QuadConfig {
    QuadConfig::new(1e-13, 1e-12, 20_000, 16).unwrap()
}

fn ind(a: f64, b: f64) -> BVFunction {
    BVFunction::indicator(a, b, HORIZON).unwrap()
}

/// Increment covariance `E[(B_b - B_a)(B_d - B_c)]`.
fn increment_cov(a: f64, b: f64, c: f64, d: f64, h: f64) -> f64 {
    let p = |x: f64| x.abs().powf(2.0 * h);
    0.5 * (p(d - a) + p(c - b) - p(d - b) - p(c - a))
}

#[test]
fn indicator_pairs_match_increment_covariance() {
    let cfg = QuadConfig::default();
    // high-precision values at H = 0.3
    assert!((ip_jolis(&ind(0.0, 1.0), &ind(0.5, 2.5), hp(0.3), &cfg).unwrap() - 0.228_718_803_631_037_57).abs() < 1e-11);
    assert!((ip_jolis(&ind(0.0, 1.0), &ind(2.0, 3.0), hp(0.3), &cfg).unwrap() + 0.049_125_544_044_516_707).abs() < 1e-12);
    for h in [0.1, 0.25, 0.4] {
        for &(a, b, c, d) in &[(0.0, 1.5, 0.25, 3.0), (1.0, 2.0, 2.0, 4.0), (0.5, 3.5, 1.0, 1.5)] {
            let want = increment_cov(a, b, c, d, h);
            for m in [IPMethod::JolisMeasure, IPMethod::WindowDecomposed, IPMethod::FourierSpectral] {
                let got = inner_product(&ind(a, b), &ind(c, d), hp(h), m, &cfg).unwrap();
                assert!((got - want).abs() < 1e-8, "{m:?} H={h}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn window_width_is_irrelevant() {
    let cfg = QuadConfig::default();
    for (name, f, g) in reference_battery() {
        let base = ip_window(&f, &g, hp(0.3), 1.0, 1.0, &cfg).unwrap();
        for &(e1, e2) in &[(0.1, 0.1), (0.3, 2.0), (2.5, 0.05)] {
            let v = ip_window(&f, &g, hp(0.3), e1, e2, &cfg).unwrap();
            assert!((v - base).abs() <= 1e-7 * base.abs().max(1.0), "{name} eps=({e1},{e2}): {v} vs {base}");
        }
    }
}

#[test]
fn grid_oracle_converges_on_battery() {
    let h = hp(0.35);
    let cfg = QuadConfig::default();
    for (name, f, g) in reference_battery() {
        let exact = ip_jolis(&f, &g, h, &cfg).unwrap();
        let coarse = (ip_grid_oracle(&f, &g, h, 512).unwrap() - exact).abs();
        let fine = (ip_grid_oracle(&f, &g, h, 2048).unwrap() - exact).abs();
        assert!(fine <= coarse + 1e-12 && fine <= 2e-3 * exact.abs().max(1.0), "{name}: {coarse} -> {fine}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn symmetry(f in bv_function(), g in bv_function(), h in 0.1..0.45f64) {
        let cfg = tight();
        for m in [IPMethod::JolisMeasure, IPMethod::WindowDecomposed, IPMethod::FourierSpectral] {
            let a = inner_product(&f, &g, hp(h), m, &cfg).unwrap();
            let b = inner_product(&g, &f, hp(h), m, &cfg).unwrap();
            prop_assert!(rel_close(a, b, 1e-10), "{:?}: {} vs {}", m, a, b);
        }
    }

    #[test]
    fn bilinearity(f in bv_function(), g in bv_function(), k in bv_function(), a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let cfg = tight();
        let h = hp(0.3);
        let combo = f.scale(a).add(&g.scale(b)).unwrap();
        for m in [IPMethod::JolisMeasure, IPMethod::WindowDecomposed, IPMethod::FourierSpectral] {
            let lhs = inner_product(&combo, &k, h, m, &cfg).unwrap();
            let x = inner_product(&f, &k, h, m, &cfg).unwrap();
            let y = inner_product(&g, &k, h, m, &cfg).unwrap();
            let scale = 1.0f64.max((a * x).abs()).max((b * y).abs());
            prop_assert!((lhs - a * x - b * y).abs() <= 1e-10 * scale, "{:?}: {} vs {}", m, lhs, a * x + b * y);
        }
    }

    #[test]
    fn disjoint_formula_on_separated_pairs(f in bv_function(), g in bv_function(), h in 0.1..0.45f64) {
        let cfg = QuadConfig::default();
        let f = f.clip(0.0, 1.75);
        let g = g.clip(2.0, HORIZON);
        let a = ip_disjoint(&f, &g, hp(h), &cfg).unwrap();
        let b = ip_jolis(&f, &g, hp(h), &cfg).unwrap();
        prop_assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "{} vs {}", a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn gram_is_psd(fs in proptest::collection::vec(bv_function(), 6), h in 0.1..0.45f64) {
        let cfg = QuadConfig::default();
        let mut g = DMatrix::zeros(6, 6);
        for i in 0..6 {
            for j in i..6 {
                let v = ip_jolis(&fs[i], &fs[j], hp(h), &cfg).unwrap();
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        let min = g.clone().symmetric_eigenvalues().min();
        prop_assert!(min >= -1e-6 * g.trace().abs(), "min eigenvalue {} trace {}", min, g.trace());
    }
}
