//! Discrete optimal transport on the coupling polytope: an exact
//! transportation-simplex solver (the Frank-Wolfe linear minimization oracle)
//! and Sinkhorn matrix scaling.

use crate::error::{GwError, Result};
use crate::matrix::Matrix;
use crate::mmspace::check_simplex;
use crate::problem::Coupling;

/// Consecutive degenerate pivots tolerated under Dantzig's rule before the
/// solver switches to Bland's rule.
const DEGENERATE_SWITCH: usize = 50;

/// A spanning-tree basis of the transportation problem: `m + n - 1` cells.
struct Basis {
    m: usize,
    n: usize,
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
}

impl Basis {
    /// North-west corner rule. Exactly one of `i`, `j` advances per step, so
    /// degenerate allocations still yield a spanning tree.
    fn north_west(mu_x: &[f64], mu_y: &[f64]) -> Self {
        let (m, n) = (mu_x.len(), mu_y.len());
        let mut ra = mu_x.to_vec();
        let mut rb = mu_y.to_vec();
        let mut cells = Vec::with_capacity(m + n - 1);
        let mut flow = Vec::with_capacity(m + n - 1);
        let (mut i, mut j) = (0, 0);
        loop {
            let x = ra[i].min(rb[j]).max(0.0);
            cells.push((i, j));
            flow.push(x);
            ra[i] -= x;
            rb[j] -= x;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if i == m - 1 {
                j += 1;
            } else if j == n - 1 || ra[i] <= rb[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self { m, n, cells, flow }
    }

    /// Adjacency over `m + n` nodes (rows, then columns): `(neighbor, cell)`.
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.m + self.n];
        for (c, &(i, j)) in self.cells.iter().enumerate() {
            adj[i].push((self.m + j, c));
            adj[self.m + j].push((i, c));
        }
        adj
    }

    /// Dual potentials with `u_0 = 0` and `u_i + v_j = cost_ij` on the basis.
    fn potentials(&self, cost: &Matrix, adj: &[Vec<(usize, usize)>]) -> (Vec<f64>, Vec<f64>) {
        let m = self.m;
        let mut pot = vec![f64::NAN; m + self.n];
        pot[0] = 0.0;
        let mut stack = vec![0];
        while let Some(node) = stack.pop() {
            for &(next, c) in &adj[node] {
                if pot[next].is_nan() {
                    let (i, j) = self.cells[c];
                    pot[next] = cost[(i, j)] - pot[node];
                    stack.push(next);
                }
            }
        }
        let v = pot.split_off(m);
        (pot, v)
    }

    /// Basis cells on the tree path from row node `i` to column node `j`,
    /// listed from the column end.
    fn path(&self, adj: &[Vec<(usize, usize)>], i: usize, j: usize) -> Vec<usize> {
        let target = self.m + j;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; self.m + self.n];
        let mut seen = vec![false; self.m + self.n];
        seen[i] = true;
        let mut queue = std::collections::VecDeque::from([i]);
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &(next, c) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((node, c));
                    queue.push_back(next);
                }
            }
        }
        let mut out = Vec::new();
        let mut node = target;
        while let Some((prev, c)) = parent[node] {
            out.push(c);
            node = prev;
        }
        out
    }
}

/// Exact minimizer of `Σ cost_ij μ_ij` over couplings of `mu_x` and `mu_y`,
/// returned as a vertex of the transportation polytope.
///
/// Transportation simplex from a north-west-corner basis. Entering cells use
/// the most negative reduced cost; ties on entering and leaving cells go to
/// the lowest flat index.
pub fn ot_linear(cost: &Matrix, mu_x: &[f64], mu_y: &[f64]) -> Result<Coupling> {
    check_simplex(mu_x)?;
    check_simplex(mu_y)?;
    let (m, n) = (mu_x.len(), mu_y.len());
    if cost.rows() != m || cost.cols() != n {
        return Err(GwError::DimensionMismatch {
            expected: format!("{m}x{n} cost"),
            found: format!("{}x{}", cost.rows(), cost.cols()),
        });
    }
    if cost.as_slice().iter().any(|c| !c.is_finite()) {
        return Err(GwError::InvalidParameter("cost matrix has non-finite entries".into()));
    }
    let tol = 1e-13 * cost.max_abs().max(1e-300);
    let mut basis = Basis::north_west(mu_x, mu_y);
    let mut in_basis = vec![false; m * n];
    for &(i, j) in &basis.cells {
        in_basis[i * n + j] = true;
    }

    let max_pivots = 100 * (m * n) + 1000;
    let mut degenerate_run = 0;
    for _ in 0..max_pivots {
        let adj = basis.adjacency();
        let (u, v) = basis.potentials(cost, &adj);
        let bland = degenerate_run >= DEGENERATE_SWITCH;
        let mut entering: Option<(usize, f64)> = None;
        for idx in 0..m * n {
            if in_basis[idx] {
                continue;
            }
            let (i, j) = (idx / n, idx % n);
            let r = cost[(i, j)] - u[i] - v[j];
            if r < -tol && entering.is_none_or(|(_, best)| r < best) {
                entering = Some((idx, r));
                if bland {
                    break;
                }
            }
        }
        let Some((enter_idx, _)) = entering else {
            let mut mu = vec![0.0; m * n];
            for (&(i, j), &f) in basis.cells.iter().zip(&basis.flow) {
                mu[i * n + j] = f;
            }
            return Coupling::new(m, n, mu);
        };
        let (ei, ej) = (enter_idx / n, enter_idx % n);
        let path = basis.path(&adj, ei, ej);
        debug_assert!(path.len() % 2 == 1);
        // from the column end, even positions lose flow, odd positions gain
        let mut leave: Option<usize> = None;
        for &c in path.iter().step_by(2) {
            let better = match leave {
                None => true,
                Some(l) => {
                    let (fc, fl) = (basis.flow[c], basis.flow[l]);
                    let (ci, cj) = basis.cells[c];
                    let (li, lj) = basis.cells[l];
                    fc < fl || (fc == fl && ci * n + cj < li * n + lj)
                }
            };
            if better {
                leave = Some(c);
            }
        }
        let leave = leave.expect("cycle has a decreasing cell");
        let theta = basis.flow[leave];
        for (pos, &c) in path.iter().enumerate() {
            if pos % 2 == 0 {
                basis.flow[c] -= theta;
            } else {
                basis.flow[c] += theta;
            }
        }
        let (li, lj) = basis.cells[leave];
        in_basis[li * n + lj] = false;
        in_basis[enter_idx] = true;
        basis.cells[leave] = (ei, ej);
        basis.flow[leave] = theta;
        degenerate_run = if theta == 0.0 { degenerate_run + 1 } else { 0 };
    }
    Err(GwError::InternalInconsistency(format!("transportation simplex exceeded {max_pivots} pivots")))
}

/// Alternating row/column scaling of a nonnegative kernel towards the
/// marginals `mu_x`, `mu_y`. Each pass rescales rows, then columns.
pub fn sinkhorn_scale(kernel: &Matrix, mu_x: &[f64], mu_y: &[f64], passes: usize) -> Matrix {
    let (m, n) = (kernel.rows(), kernel.cols());
    let mut plan = kernel.clone();
    for _ in 0..passes {
        for i in 0..m {
            let s: f64 = plan.row(i).iter().sum();
            if s > 0.0 {
                let f = mu_x[i] / s;
                for j in 0..n {
                    plan[(i, j)] *= f;
                }
            }
        }
        let mut col = vec![0.0; n];
        for i in 0..m {
            for (c, v) in col.iter_mut().zip(plan.row(i)) {
                *c += v;
            }
        }
        for i in 0..m {
            for j in 0..n {
                if col[j] > 0.0 {
                    plan[(i, j)] *= mu_y[j] / col[j];
                }
            }
        }
    }
    plan
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log-domain Sinkhorn: returns the plan `exp(L_ij + f_i + g_j)` after
/// `passes` alternating dual updates. `log_kernel` may contain `-inf`.
pub fn sinkhorn_log(log_kernel: &Matrix, mu_x: &[f64], mu_y: &[f64], passes: usize) -> Option<Matrix> {
    let (m, n) = (log_kernel.rows(), log_kernel.cols());
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    for _ in 0..passes {
        for i in 0..m {
            let lse = log_sum_exp((0..n).map(|j| log_kernel[(i, j)] + g[j]));
            f[i] = mu_x[i].ln() - lse;
        }
        for j in 0..n {
            let lse = log_sum_exp((0..m).map(|i| log_kernel[(i, j)] + f[i]));
            g[j] = mu_y[j].ln() - lse;
        }
        if f.iter().chain(&g).any(|x| !x.is_finite()) {
            return None;
        }
    }
    Some(Matrix::from_fn(m, n, |i, j| (log_kernel[(i, j)] + f[i] + g[j]).exp()))
}

/// Projects a nonnegative plan onto the couplings of `mu_x` and `mu_y`:
/// rows and columns are scaled down to their targets, then the missing mass
/// is added back as a rank-one correction.
pub fn round_to_marginals(plan: &Matrix, mu_x: &[f64], mu_y: &[f64]) -> Matrix {
    let (m, n) = (plan.rows(), plan.cols());
    let mut out = plan.clone();
    for i in 0..m {
        let row: f64 = out.row(i).iter().sum();
        if row > mu_x[i] {
            let s = mu_x[i] / row;
            out.as_mut_slice()[i * n..(i + 1) * n].iter_mut().for_each(|v| *v *= s);
        }
    }
    for j in 0..n {
        let col: f64 = (0..m).map(|i| out[(i, j)]).sum();
        if col > mu_y[j] {
            let s = mu_y[j] / col;
            (0..m).for_each(|i| out.as_mut_slice()[i * n + j] *= s);
        }
    }
    let err_x: Vec<f64> = (0..m).map(|i| (mu_x[i] - out.row(i).iter().sum::<f64>()).max(0.0)).collect();
    let err_y: Vec<f64> = (0..n).map(|j| (mu_y[j] - (0..m).map(|i| out[(i, j)]).sum::<f64>()).max(0.0)).collect();
    let total: f64 = err_x.iter().sum();
    if total > 0.0 {
        for (row, ex) in out.as_mut_slice().chunks_mut(n).zip(&err_x) {
            for (v, ey) in row.iter_mut().zip(&err_y) {
                *v += ex * ey / total;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::dot;

    fn cost(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn zero_cost_is_feasible() {
        let c = Matrix::zeros(3, 4);
        let mx = [0.2, 0.3, 0.5];
        let my = [0.25; 4];
        let s = ot_linear(&c, &mx, &my).unwrap();
        assert!(s.is_feasible(&mx, &my, 1e-15));
    }

    #[test]
    fn two_by_two_uniform() {
        let c = cost(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let s = ot_linear(&c, &[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert_eq!(s.as_slice(), &[0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn two_by_two_skewed() {
        let c = cost(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let s = ot_linear(&c, &[0.5, 0.5], &[0.25, 0.75]).unwrap();
        assert_eq!(s.as_slice(), &[0.25, 0.25, 0.0, 0.5]);
        assert_eq!(dot(s.as_slice(), c.as_slice()), 0.25);
    }

    #[test]
    fn needs_pivots() {
        // north-west corner is the worst plan here
        let c = cost(&[&[9.0, 1.0, 1.0], &[1.0, 9.0, 1.0], &[1.0, 1.0, 9.0]]);
        let w = [1.0 / 3.0; 3];
        let s = ot_linear(&c, &w, &w).unwrap();
        let v = dot(s.as_slice(), c.as_slice());
        assert!((v - 1.0).abs() < 1e-14, "{v}");
        assert!(s.is_feasible(&w, &w, 1e-15));
    }

    #[test]
    fn sinkhorn_projects_positive_kernels() {
        let k = Matrix::from_fn(3, 4, |i, j| 1.0 + (i * 4 + j) as f64);
        let mx = [0.2, 0.3, 0.5];
        let my = [0.1, 0.2, 0.3, 0.4];
        let plan = sinkhorn_scale(&k, &mx, &my, 200);
        let c = Coupling::new(3, 4, plan.as_slice().to_vec()).unwrap();
        assert!(c.is_feasible(&mx, &my, 1e-14));
        let logk = Matrix::from_fn(3, 4, |i, j| k[(i, j)].ln());
        let lp = sinkhorn_log(&logk, &mx, &my, 200).unwrap();
        for (a, b) in lp.as_slice().iter().zip(plan.as_slice()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(
            ot_linear(&Matrix::zeros(2, 3), &[0.5, 0.5], &[0.5, 0.5]),
            Err(GwError::DimensionMismatch { .. })
        ));
    }
}
