//! Shared fixtures for the criterion benches.

use gw_core::mmspace::standin::{spiral, Focus};
use gw_core::mmspace::{arc_length_space_at, even_indices};
use gw_core::{GwProblem, MetricMeasureSpace};

/// Arc-length spaces with `m` and `n` points on the two stand-in spirals.
pub fn curve_pair(m: usize, n: usize) -> (MetricMeasureSpace, MetricMeasureSpace) {
    let cx = spiral(Focus::Unstable, 400, 40.0).expect("valid curve");
    let cy = spiral(Focus::Stable, 400, 40.0).expect("valid curve");
    let x = arc_length_space_at(&cx, &even_indices(cx.len(), m).unwrap(), None).unwrap();
    let y = arc_length_space_at(&cy, &even_indices(cy.len(), n).unwrap(), None).unwrap();
    (x, y)
}

pub fn curve_problem(m: usize, n: usize, p: f64) -> GwProblem {
    let (x, y) = curve_pair(m, n);
    GwProblem::new(&x, &y, p).unwrap()
}
