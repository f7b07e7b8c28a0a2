#![allow(dead_code)]

use fbmlab::bvfunc::{BVFunction, ExpPolyTerm, Piece};
use proptest::prelude::*;

pub const HORIZON: f64 = 4.0;

pub fn term() -> impl Strategy<Value = ExpPolyTerm> {
    (-2.0..2.0f64, 0u8..3, -1.5..1.5f64).prop_map(|(c, p, r)| ExpPolyTerm::new(c, p as f64, r))
}

/// Piecewise exp-polynomial functions on `[0, 4]` with integer powers and
/// breakpoints on a grid of step 1/4.
pub fn bv_function() -> impl Strategy<Value = BVFunction> {
    (1usize..=3)
        .prop_flat_map(|k| {
            (
                proptest::sample::subsequence((0..=16).collect::<Vec<u32>>(), 2 * k),
                proptest::collection::vec(proptest::collection::vec(term(), 1..=2), k),
            )
        })
        .prop_map(|(cuts, terms)| {
            let pieces = cuts
                .chunks(2)
                .zip(terms)
                .map(|(c, t)| Piece::new(c[0] as f64 * 0.25, c[1] as f64 * 0.25, t))
                .collect();
            BVFunction::new(pieces, HORIZON).unwrap()
        })
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
