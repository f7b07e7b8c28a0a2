use fbmlab::asymlab::*;
use fbmlab::quad::QuadConfig;
use fbmlab::specfun::HurstParam;
use proptest::prelude::*;

fn hp(h: f64) -> HurstParam {
    HurstParam::new(h).unwrap()
}

#[test]
fn fast_integrals_match_direct_quadrature() {
    let cfg = QuadConfig::new(1e-8, 1e-7, 4000, 16).unwrap();
    let cases = [
        (AppendixIntegralId::Q, 0.3),
        (AppendixIntegralId::Q, 0.1),
        (AppendixIntegralId::Ntilde, 0.3),
        (AppendixIntegralId::Diag, 0.3),
    ];
    for (id, h) in cases {
        let fast = eval_appendix_integral(id, 2.5, hp(h)).unwrap();
        let raw = raw_appendix_integral(id, 2.5, hp(h), &cfg).unwrap();
        assert!((fast - raw).abs() <= 1e-6 * raw.abs().max(1.0), "{id} at {h}: {fast} vs {raw}");
    }
}

#[test]
fn norm_matches_grid_oracle() {
    let p = FtKernelParams::new(4.0, 1.0, hp(0.3)).unwrap();
    let b = norm_ft_sq(&p).unwrap();
    assert!((b.total - 1.60728792362944).abs() < 1e-9, "{}", b.total);
    let grid = norm_ft_sq_grid(&p, 512).unwrap();
    assert!((grid - b.total).abs() / b.total < 1e-3, "{grid} vs {}", b.total);
}

#[test]
fn theta_scaling_matches_grid() {
    let p = FtKernelParams::new(2.0, 2.0, hp(0.35)).unwrap();
    let b = norm_ft_sq(&p).unwrap();
    let grid = norm_ft_sq_grid(&p, 512).unwrap();
    assert!((grid - b.total).abs() / b.total < 2e-3, "{grid} vs {}", b.total);
}

#[test]
fn cross_term_two_routes() {
    let p = FtKernelParams::new(4.0, 1.0, hp(0.3)).unwrap();
    let fast = cross_ip_ft_ht(&p).unwrap();
    let other = cross_ip_ft_ht_ordered(&p, NestingOrder::WeightMeasure).unwrap();
    assert!((fast - 0.28364133).abs() < 1e-7, "{fast}");
    assert!((fast - other).abs() < 1e-8, "{fast} vs {other}");
    let grid = cross_ip_grid(&p, 512).unwrap();
    assert!((grid - fast).abs() / fast < 2e-3, "{grid} vs {fast}");
}

#[test]
fn cross_slices_match_general_product() {
    let cfg = QuadConfig::new(1e-11, 1e-10, 4000, 16).unwrap();
    let h = hp(0.35);
    for order in [NestingOrder::SliceMeasure, NestingOrder::WeightMeasure] {
        for x in [0.0, 0.7, 2.5, 5.0] {
            let fast = cross_slice_ip(x, 5.0, h, order).unwrap();
            let general = cross_slice_ip_general(x, 5.0, h, order, &cfg).unwrap();
            assert!((fast - general).abs() < 1e-8 * general.abs().max(1.0), "{order:?} {x}: {fast} vs {general}");
        }
    }
}

#[test]
fn small_horizon_norm_positive() {
    for t in [2.0, 2.5, 3.0] {
        for h in [0.1, 0.45] {
            let b = norm_ft_sq(&FtKernelParams::new(t, 1.0, hp(h)).unwrap()).unwrap();
            assert!(b.total > 0.0, "{t} {h}: {b:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn breakdown_composition(
        h in 0.05..0.49f64,
        vals in proptest::array::uniform10(-10.0..10.0f64),
        theta in 0.2..4.0f64,
    ) {
        let p = FtKernelParams::new(10.0, theta, hp(h)).unwrap();
        let b = assemble_norm(&p, &vals);
        let again = MTermBreakdown::compose(p.h, b.m11, b.m12, b.m31, b.m32, b.m33);
        prop_assert!((again.total - b.total).abs() <= 1e-12 * (1.0 + b.total.abs() + b.m33.abs() + b.m11.abs()) * 100.0);
        let unit = assemble_norm(&FtKernelParams::new(10.0 * theta, 1.0, hp(h)).unwrap(), &vals);
        prop_assert!((unit.total * p.tensor_scale() - b.total).abs() <= 1e-12 * (1.0 + unit.total.abs()) * 100.0);
    }
}
