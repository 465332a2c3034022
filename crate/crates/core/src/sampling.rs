//! Seeded randomness: random feasible couplings and random test instances.
//!
//! All randomness comes from [`GwRng`], xoshiro256++ seeded through
//! SplitMix64 (`seed_from_u64`), so a seed reproduces the same stream on every
//! platform.

use rand::{RngExt, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::Result;
use crate::matrix::Matrix;
use crate::mmspace::{point_cloud_space, MetricMeasureSpace};
use crate::problem::Coupling;
use crate::transport::sinkhorn_scale;

pub type GwRng = Xoshiro256PlusPlus;

/// Scaling passes used to project random kernels onto the coupling polytope.
pub const PROJECTION_PASSES: usize = 200;

pub fn rng_from_seed(seed: u64) -> GwRng {
    GwRng::seed_from_u64(seed)
}

/// A random coupling: an entrywise-positive random kernel, Sinkhorn-projected
/// onto the polytope with [`PROJECTION_PASSES`] passes.
pub fn random_coupling(mu_x: &[f64], mu_y: &[f64], rng: &mut GwRng) -> Coupling {
    let (m, n) = (mu_x.len(), mu_y.len());
    let kernel = Matrix::from_fn(m, n, |_, _| 0.05 + rng.random::<f64>());
    let plan = sinkhorn_scale(&kernel, mu_x, mu_y, PROJECTION_PASSES);
    Coupling::new(m, n, plan.as_slice().to_vec()).expect("shape matches")
}

/// A random strictly positive probability vector.
pub fn random_measure(n: usize, rng: &mut GwRng) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| 0.1 + rng.random::<f64>()).collect();
    let total: f64 = w.iter().sum();
    let mut w: Vec<f64> = w.iter().map(|x| x / total).collect();
    // push the rounding residue into the largest entry
    let residue = 1.0 - w.iter().sum::<f64>();
    let imax = (0..n).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap_or(0);
    w[imax] += residue;
    w
}

/// Euclidean space of `n` uniform random points in `[0, 1]^dim` with a
/// random positive measure.
pub fn random_space(n: usize, dim: usize, rng: &mut GwRng) -> Result<MetricMeasureSpace> {
    let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
    let space = point_cloud_space(&pts)?;
    space.with_measure(random_measure(n, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mmspace::check_simplex;

    #[test]
    fn seeded_streams_repeat() {
        let a = random_coupling(&[0.3, 0.7], &[0.2, 0.2, 0.6], &mut rng_from_seed(7));
        let b = random_coupling(&[0.3, 0.7], &[0.2, 0.2, 0.6], &mut rng_from_seed(7));
        assert_eq!(a, b);
        assert!(a.is_feasible(&[0.3, 0.7], &[0.2, 0.2, 0.6], 1e-14));
        assert!(a.as_slice().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn measures_are_on_the_simplex() {
        let mut rng = rng_from_seed(1);
        for n in 1..40 {
            check_simplex(&random_measure(n, &mut rng)).unwrap();
        }
    }
}
