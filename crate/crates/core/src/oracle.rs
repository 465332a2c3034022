//! Desk-scale global minimization of the GW program.
//!
//! The minimum of an indefinite quadratic over a polytope need not sit at a
//! vertex, so the oracle either solves the one-parameter case in closed form
//! or searches a dense grid over the free coordinates of the plan and then
//! polishes the best grid point with Frank-Wolfe.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GwError, Result};
use crate::matrix::dot;
use crate::problem::{objective, Coupling, GwProblem};
use crate::solvers::{frank_wolfe, FwOptions};

/// Largest polytope dimension `(m−1)(n−1)` the grid oracle accepts.
pub const MAX_GRID_DOF: usize = 4;
pub const MIN_RESOLUTION: usize = 10;
/// Reconstructed plan entries below this are infeasible.
const FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    #[serde(rename = "closed-form-1dof")]
    ClosedForm1Dof,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    pub coupling: Coupling,
    pub method: OracleMethod,
    pub grid_resolution: Option<usize>,
    /// Bound on `value − true minimum`. For the closed form this is only the
    /// rounding in evaluating the objective.
    pub error_bound: f64,
}

/// Dimension of the coupling polytope.
pub fn polytope_dof(m: usize, n: usize) -> usize {
    (m - 1) * (n - 1)
}

/// Exact minimum for `m = n = 2`, where the polytope is the segment
/// `t = μ_11 ∈ [max(0, a + b − 1), min(a, b)]` and the objective is a
/// quadratic in `t`. Ties go to the smaller `t`.
pub fn oracle_1dof(problem: &GwProblem) -> Result<OracleResult> {
    let (m, n) = (problem.m(), problem.n());
    if m != 2 || n != 2 {
        return Err(GwError::WrongDimension { m, n });
    }
    let (a, b) = (problem.mu_x()[0], problem.mu_y()[0]);
    let lo = (a + b - 1.0).max(0.0);
    let hi = a.min(b);
    let plan_at = |t: f64| {
        let mu = vec![t, (a - t).max(0.0), (b - t).max(0.0), (1.0 - a - b + t).max(0.0)];
        Coupling::new(2, 2, mu).expect("2x2")
    };

    let base = plan_at(lo);
    let d = [1.0, -1.0, -1.0, 1.0];
    let gamma_d = problem.gamma_times(&d);
    let curvature = dot(&d, &gamma_d);
    let slope = 2.0 * dot(base.as_slice(), &gamma_d);

    let mut candidates = vec![lo, hi];
    if curvature > 0.0 {
        let t = lo - slope / (2.0 * curvature);
        if t > lo && t < hi {
            candidates.push(t);
        }
    }
    candidates.sort_by(f64::total_cmp);
    let mut best: Option<(f64, Coupling)> = None;
    for t in candidates {
        let c = plan_at(t);
        let v = objective(problem, &c)?;
        if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
            best = Some((v, c));
        }
    }
    let (value, coupling) = best.expect("at least one candidate");
    let error_bound = evaluation_bound(problem);
    Ok(OracleResult { value, coupling, method: OracleMethod::ClosedForm1Dof, grid_resolution: None, error_bound })
}

/// Rounding bound for `μᵀΓμ` summed over `dim` terms.
fn evaluation_bound(problem: &GwProblem) -> f64 {
    problem.dim() as f64 * f64::EPSILON * problem.gamma_dense().frobenius_norm()
}

/// Grid search over the `(m−1)(n−1)` free plan entries `μ_ij`, `i < m−1`,
/// `j < n−1`, each ranging over `resolution + 1` evenly spaced values in
/// `[0, min(μ_X(i), μ_Y(j))]`. The last row and column are reconstructed from
/// the marginals. The best feasible point (ties: lexicographically smallest
/// grid index) is polished with Frank-Wolfe at tolerance `1e-12`.
///
/// `error_bound = 2‖Γ‖_F · h` with `h` the grid-cell diagonal, plus rounding.
pub fn oracle_grid(problem: &GwProblem, resolution: usize) -> Result<OracleResult> {
    let (m, n) = (problem.m(), problem.n());
    let dof = polytope_dof(m, n);
    if dof > MAX_GRID_DOF {
        return Err(GwError::TooManyDof { dof, max: MAX_GRID_DOF });
    }
    if resolution < MIN_RESOLUTION {
        return Err(GwError::ResolutionTooSmall { resolution, min: MIN_RESOLUTION });
    }
    let (mu_x, mu_y) = (problem.mu_x(), problem.mu_y());
    let (fm, fn_) = (m - 1, n - 1);
    let upper: Vec<f64> = (0..dof).map(|k| mu_x[k / fn_].min(mu_y[k % fn_])).collect();
    let points = resolution + 1;

    // fills `plan` from grid coordinates; false if some entry is negative
    let reconstruct = |coords: &[usize], plan: &mut [f64]| -> bool {
        for i in 0..fm {
            let mut row = 0.0;
            for j in 0..fn_ {
                let k = i * fn_ + j;
                let v = upper[k] * coords[k] as f64 / resolution as f64;
                plan[i * n + j] = v;
                row += v;
            }
            plan[i * n + fn_] = mu_x[i] - row;
        }
        for j in 0..n {
            let col: f64 = (0..fm).map(|i| plan[i * n + j]).sum();
            plan[fm * n + j] = mu_y[j] - col;
        }
        for v in plan.iter_mut() {
            if *v < -FEASIBILITY_SLACK {
                return false;
            }
            *v = v.max(0.0);
        }
        true
    };

    let total = points.checked_pow(dof as u32).ok_or(GwError::TooManyDof { dof, max: MAX_GRID_DOF })?;
    let outer = if dof == 0 { 1 } else { points };
    let inner = total / outer;
    let best = (0..outer)
        .into_par_iter()
        .filter_map(|first| {
            let mut coords = vec![0usize; dof];
            let mut plan = vec![0.0; m * n];
            let mut best: Option<(f64, usize)> = None;
            for rest in 0..inner {
                let index = first * inner + rest;
                let mut r = index;
                for c in coords.iter_mut().rev() {
                    *c = r % points;
                    r /= points;
                }
                if !reconstruct(&coords, &mut plan) {
                    continue;
                }
                let v = dot(&plan, &problem.gamma_times(&plan));
                if best.is_none_or(|(bv, _)| v < bv) {
                    best = Some((v, index));
                }
            }
            best
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (_, index) = best.ok_or_else(|| GwError::InternalInconsistency("no feasible grid point".into()))?;

    let mut coords = vec![0usize; dof];
    let mut r = index;
    for c in coords.iter_mut().rev() {
        *c = r % points;
        r /= points;
    }
    let mut plan = vec![0.0; m * n];
    reconstruct(&coords, &mut plan);
    let start = Coupling::new(m, n, plan)?;
    let polished = frank_wolfe(problem, &start, FwOptions { max_iter: 1000, tol: 1e-12 })?;

    let h = upper.iter().map(|u| (u / resolution as f64).powi(2)).sum::<f64>().sqrt();
    let lipschitz = 2.0 * problem.gamma_dense().frobenius_norm();
    Ok(OracleResult {
        value: polished.value,
        coupling: polished.coupling,
        method: OracleMethod::Grid,
        grid_resolution: Some(resolution),
        error_bound: lipschitz * h + evaluation_bound(problem),
    })
}

/// Closed form when `m = n = 2`, grid search otherwise.
pub fn oracle(problem: &GwProblem, resolution: usize) -> Result<OracleResult> {
    if problem.m() == 2 && problem.n() == 2 {
        oracle_1dof(problem)
    } else {
        oracle_grid(problem, resolution)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::mmspace::{delta_space, make_space};

    fn two_point(d: f64, w: f64) -> crate::mmspace::MetricMeasureSpace {
        make_space(Matrix::from_rows(&[[0.0, d], [d, 0.0]]).unwrap(), vec![w, 1.0 - w]).unwrap()
    }

    #[test]
    fn example_closed_form() {
        let pr = GwProblem::new(&delta_space(2).unwrap(), &two_point(1.0, 0.25), 1.0).unwrap();
        let r = oracle_1dof(&pr).unwrap();
        assert_eq!(r.value, 0.375);
        // both endpoints tie; the smaller t wins
        assert_eq!(r.coupling.as_slice(), &[0.0, 0.5, 0.25, 0.25]);
        assert_eq!(r.method, OracleMethod::ClosedForm1Dof);
    }

    #[test]
    fn isomorphic_pair() {
        let d2 = delta_space(2).unwrap();
        let r = oracle_1dof(&GwProblem::new(&d2, &d2, 1.0).unwrap()).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn wrong_dimension() {
        let pr = GwProblem::new(&delta_space(2).unwrap(), &delta_space(3).unwrap(), 1.0).unwrap();
        assert!(matches!(oracle_1dof(&pr), Err(GwError::WrongDimension { m: 2, n: 3 })));
    }

    #[test]
    fn grid_guards() {
        let pr = GwProblem::new(&delta_space(3).unwrap(), &delta_space(4).unwrap(), 1.0).unwrap();
        assert!(matches!(oracle_grid(&pr, 50), Err(GwError::TooManyDof { dof: 6, .. })));
        let pr = GwProblem::new(&delta_space(2).unwrap(), &delta_space(2).unwrap(), 1.0).unwrap();
        assert!(matches!(oracle_grid(&pr, 5), Err(GwError::ResolutionTooSmall { .. })));
    }

    #[test]
    fn grid_agrees_with_closed_form_on_example() {
        let pr = GwProblem::new(&delta_space(2).unwrap(), &two_point(1.0, 0.25), 1.0).unwrap();
        let g = oracle_grid(&pr, 1000).unwrap();
        assert!((g.value - 0.375).abs() <= g.error_bound);
        assert!(g.value >= 0.375 - 1e-12);
    }

    #[test]
    fn grid_self_distance() {
        let d3 = delta_space(3).unwrap();
        let r = oracle_grid(&GwProblem::new(&d3, &d3, 1.0).unwrap(), 50).unwrap();
        assert!(r.value.abs() < 1e-15);
    }

    #[test]
    fn single_point_side() {
        let pr = GwProblem::new(&delta_space(1).unwrap(), &delta_space(3).unwrap(), 1.0).unwrap();
        let r = oracle_grid(&pr, 10).unwrap();
        assert!(r.coupling.is_feasible(pr.mu_x(), pr.mu_y(), 1e-15));
    }
}
