//! The flattened GW quadratic program `min μ'Γ_p μ  s.t.  Aμ = b, μ ≥ 0`.
//!
//! Flattening is row-major over the product space: the pair `(i, j)` with
//! `i < m`, `j < n` maps to `i * n + j`. Block `(i, k)` of Γ is the `n × n`
//! matrix over `(j, l)`. Every module shares this convention.

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GwError, Result};
use crate::matrix::{dot, Matrix};
use crate::mmspace::{check_simplex, MetricMeasureSpace};

/// Tolerance on coupling marginals.
pub const MARGINAL_TOL: f64 = 1e-9;

/// Row-major index of `(i, j)` (both 0-based) in an `m × n` plan.
pub fn flat_index(i: usize, j: usize, m: usize, n: usize) -> Result<usize> {
    if i >= m || j >= n {
        return Err(GwError::IndexOutOfRange { i, j, m, n });
    }
    Ok(i * n + j)
}

/// `|a - b|^p`, with the common exponents special-cased so that every
/// evaluation path produces identical bits.
#[inline]
pub fn loss(a: f64, b: f64, p: f64) -> f64 {
    let d = (a - b).abs();
    if p == 1.0 {
        d
    } else if p == 2.0 {
        d * d
    } else {
        d.powf(p)
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(GwError::InvalidExponent(p))
    }
}

/// Dense `(m·n) × (m·n)` objective matrix with entries
/// `|d_X(x_i, x_k) - d_Y(y_j, y_l)|^p` at `(i*n + j, k*n + l)`.
pub fn build_gamma(x: &MetricMeasureSpace, y: &MetricMeasureSpace, p: f64) -> Result<Matrix> {
    check_exponent(p)?;
    let (m, n) = (x.n_points(), y.n_points());
    let (dx, dy) = (x.dist(), y.dist());
    let dim = m * n;
    let mut gamma = Matrix::zeros(dim, dim);
    gamma.as_mut_slice().par_chunks_mut(dim).enumerate().for_each(|(row, out)| {
        let (i, j) = (row / n, row % n);
        for k in 0..m {
            let dik = dx[(i, k)];
            let dy_j = dy.row(j);
            for (l, &djl) in dy_j.iter().enumerate() {
                out[k * n + l] = loss(dik, djl, p);
            }
        }
    });
    Ok(gamma)
}

/// Marginal constraint system `A μ = b`. Rows `0..m` sum plan rows, rows
/// `m..m+n` sum plan columns. All `m + n` rows are kept even though the
/// system has rank `m + n - 1`.
pub fn build_constraints(mu_x: &[f64], mu_y: &[f64]) -> Result<(Matrix, Vec<f64>)> {
    check_simplex(mu_x)?;
    check_simplex(mu_y)?;
    let (m, n) = (mu_x.len(), mu_y.len());
    let mut a = Matrix::zeros(m + n, m * n);
    for i in 0..m {
        for j in 0..n {
            a[(i, i * n + j)] = 1.0;
            a[(m + j, i * n + j)] = 1.0;
        }
    }
    let b = mu_x.iter().chain(mu_y).copied().collect();
    Ok((a, b))
}

/// A joint probability vector over the `m × n` product space, flattened
/// row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    m: usize,
    n: usize,
    mu: Vec<f64>,
}

impl Coupling {
    pub fn new(m: usize, n: usize, mu: Vec<f64>) -> Result<Self> {
        if mu.len() != m * n {
            return Err(GwError::DimensionMismatch {
                expected: format!("{} entries", m * n),
                found: format!("{} entries", mu.len()),
            });
        }
        if let Some(v) = mu.iter().find(|v| !v.is_finite()) {
            return Err(GwError::InvalidParameter(format!("coupling entry {v} is not finite")));
        }
        Ok(Self { m, n, mu })
    }

    /// The plan that keeps all of `mu_x(i)` at `y_i` (requires `mu_x == mu_y`).
    pub fn diagonal(measure: &[f64]) -> Self {
        let n = measure.len();
        let mut mu = vec![0.0; n * n];
        for (i, &w) in measure.iter().enumerate() {
            mu[i * n + i] = w;
        }
        Self { m: n, n, mu }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.mu
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.mu
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mu[i * self.n + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.mu.chunks(self.n).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for r in self.mu.chunks(self.n) {
            for (o, v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        out
    }

    /// Largest violation of nonnegativity or of either marginal.
    pub fn marginal_error(&self, mu_x: &[f64], mu_y: &[f64]) -> f64 {
        if mu_x.len() != self.m || mu_y.len() != self.n {
            return f64::INFINITY;
        }
        let neg = self.mu.iter().fold(0.0_f64, |acc, &v| acc.max(-v));
        let rows = self.row_sums().iter().zip(mu_x).fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        let cols = self.col_sums().iter().zip(mu_y).fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        neg.max(rows).max(cols)
    }

    pub fn is_feasible(&self, mu_x: &[f64], mu_y: &[f64], tol: f64) -> bool {
        self.marginal_error(mu_x, mu_y) <= tol
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.m, self.n, self.mu.clone()).expect("length checked on construction")
    }
}

/// Product measure `μ_X ⊗ μ_Y`, always feasible.
pub fn independence_coupling(mu_x: &[f64], mu_y: &[f64]) -> Coupling {
    let n = mu_y.len();
    let mu = mu_x.iter().flat_map(|&a| mu_y.iter().map(move |&b| a * b)).collect();
    Coupling { m: mu_x.len(), n, mu }
}

/// The GW program between two spaces for a fixed exponent.
#[derive(Debug, Clone)]
pub struct GwProblem {
    x: MetricMeasureSpace,
    y: MetricMeasureSpace,
    p: f64,
    gamma: Option<Matrix>,
    constraint_matrix: Matrix,
    rhs: Vec<f64>,
}

impl GwProblem {
    /// Builds the program with a dense Γ.
    pub fn new(x: &MetricMeasureSpace, y: &MetricMeasureSpace, p: f64) -> Result<Self> {
        let gamma = build_gamma(x, y, p)?;
        let (constraint_matrix, rhs) = build_constraints(x.measure(), y.measure())?;
        Ok(Self { x: x.clone(), y: y.clone(), p, gamma: Some(gamma), constraint_matrix, rhs })
    }

    /// Builds the program without materializing Γ; objective and gradient
    /// contract the distance matrices directly.
    pub fn matrix_free(x: &MetricMeasureSpace, y: &MetricMeasureSpace, p: f64) -> Result<Self> {
        check_exponent(p)?;
        let (constraint_matrix, rhs) = build_constraints(x.measure(), y.measure())?;
        Ok(Self { x: x.clone(), y: y.clone(), p, gamma: None, constraint_matrix, rhs })
    }

    /// Dense Γ if `m·n <= dense_limit`, matrix-free otherwise.
    pub fn auto(x: &MetricMeasureSpace, y: &MetricMeasureSpace, p: f64, dense_limit: usize) -> Result<Self> {
        if x.n_points() * y.n_points() <= dense_limit {
            Self::new(x, y, p)
        } else {
            Self::matrix_free(x, y, p)
        }
    }

    pub fn m(&self) -> usize {
        self.x.n_points()
    }

    pub fn n(&self) -> usize {
        self.y.n_points()
    }

    pub fn dim(&self) -> usize {
        self.m() * self.n()
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn x(&self) -> &MetricMeasureSpace {
        &self.x
    }

    pub fn y(&self) -> &MetricMeasureSpace {
        &self.y
    }

    pub fn mu_x(&self) -> &[f64] {
        self.x.measure()
    }

    pub fn mu_y(&self) -> &[f64] {
        self.y.measure()
    }

    pub fn gamma(&self) -> Option<&Matrix> {
        self.gamma.as_ref()
    }

    pub fn is_dense(&self) -> bool {
        self.gamma.is_some()
    }

    /// Γ, building it on the fly for matrix-free problems.
    pub fn gamma_dense(&self) -> Cow<'_, Matrix> {
        match &self.gamma {
            Some(g) => Cow::Borrowed(g),
            None => Cow::Owned(build_gamma(&self.x, &self.y, self.p).expect("exponent validated")),
        }
    }

    pub fn constraint_matrix(&self) -> &Matrix {
        &self.constraint_matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// `Γ v` for an arbitrary vector of length `m·n`.
    pub fn gamma_times(&self, v: &[f64]) -> Vec<f64> {
        match &self.gamma {
            Some(g) => g.matvec(v),
            None => self.gamma_times_free(v),
        }
    }

    /// Matrix-free `Γ v`. For `p = 2` this uses the factored form
    /// `D_X²r ⊕ D_Y²c − 2 D_X V D_Y`; otherwise it contracts the 4-index
    /// tensor directly.
    pub fn gamma_times_free(&self, v: &[f64]) -> Vec<f64> {
        let (m, n) = (self.m(), self.n());
        let (dx, dy) = (self.x.dist(), self.y.dist());
        if self.p == 2.0 {
            let vm = Matrix::from_vec(m, n, v.to_vec()).expect("length m*n");
            let r: Vec<f64> = vm.to_rows().iter().map(|row| row.iter().sum()).collect();
            let c = vm.transpose().to_rows().iter().map(|col| col.iter().sum()).collect::<Vec<f64>>();
            let dx2 = Matrix::from_fn(m, m, |i, k| dx[(i, k)] * dx[(i, k)]);
            let dy2 = Matrix::from_fn(n, n, |j, l| dy[(j, l)] * dy[(j, l)]);
            let a = dx2.matvec(&r);
            let b = dy2.matvec(&c);
            let cross = dx.matmul(&vm).matmul(dy);
            return (0..m * n)
                .map(|idx| {
                    let (i, j) = (idx / n, idx % n);
                    a[i] + b[j] - 2.0 * cross[(i, j)]
                })
                .collect();
        }
        (0..m * n)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                let mut acc = 0.0;
                for k in 0..m {
                    let dik = dx[(i, k)];
                    let dy_j = dy.row(j);
                    let vk = &v[k * n..(k + 1) * n];
                    for l in 0..n {
                        acc += loss(dik, dy_j[l], self.p) * vk[l];
                    }
                }
                acc
            })
            .collect()
    }

    /// Gradient `2 Γ μ` of the objective.
    pub fn gradient(&self, coupling: &Coupling) -> Result<Vec<f64>> {
        self.check_dims(coupling)?;
        Ok(self.gamma_times(coupling.as_slice()).into_iter().map(|g| 2.0 * g).collect())
    }

    pub(crate) fn check_dims(&self, coupling: &Coupling) -> Result<()> {
        if coupling.m() != self.m() || coupling.n() != self.n() {
            return Err(GwError::DimensionMismatch {
                expected: format!("{}x{} coupling", self.m(), self.n()),
                found: format!("{}x{}", coupling.m(), coupling.n()),
            });
        }
        Ok(())
    }

    pub fn independence_coupling(&self) -> Coupling {
        independence_coupling(self.mu_x(), self.mu_y())
    }

    pub fn is_feasible(&self, coupling: &Coupling, tol: f64) -> bool {
        coupling.is_feasible(self.mu_x(), self.mu_y(), tol)
    }
}

/// `μ' Γ μ`, through the dense matrix when available.
pub fn objective(problem: &GwProblem, coupling: &Coupling) -> Result<f64> {
    problem.check_dims(coupling)?;
    let mu = coupling.as_slice();
    Ok(dot(mu, &problem.gamma_times(mu)))
}

/// The same value as [`objective`], summed directly over the four indices
/// `Σ_{ijkl} |d_X(i,k) − d_Y(j,l)|^p μ_ij μ_kl` without touching Γ.
pub fn objective_tensor(problem: &GwProblem, coupling: &Coupling) -> Result<f64> {
    problem.check_dims(coupling)?;
    let (m, n, p) = (problem.m(), problem.n(), problem.p());
    let (dx, dy) = (problem.x().dist(), problem.y().dist());
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..n {
            let mij = coupling.get(i, j);
            if mij == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for k in 0..m {
                for l in 0..n {
                    inner += loss(dx[(i, k)], dy[(j, l)], p) * coupling.get(k, l);
                }
            }
            total += mij * inner;
        }
    }
    Ok(total)
}

/// GW distance `½ · value^{1/p}` from an optimal value of the program.
pub fn gw_distance(optimal_value: f64, p: f64) -> Result<f64> {
    check_exponent(p)?;
    if optimal_value.is_nan() || optimal_value < 0.0 {
        return Err(GwError::NegativeValue(optimal_value));
    }
    Ok(0.5 * optimal_value.powf(1.0 / p))
}

/// Squared-loss objective split into a part fixed by the marginals and a
/// QAP-style cross term with flows `f = −d_X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QapSplit {
    /// `Σ d_X(i,k)² μ_X(i) μ_X(k) + Σ d_Y(j,l)² μ_Y(j) μ_Y(l)`
    pub constant: f64,
    /// `2 Σ (−d_X(i,k)) d_Y(j,l) μ_ij μ_kl`
    pub cross_term: f64,
}

impl QapSplit {
    pub fn total(&self) -> f64 {
        self.constant + self.cross_term
    }
}

pub fn qap_decompose(x: &MetricMeasureSpace, y: &MetricMeasureSpace, coupling: &Coupling) -> Result<QapSplit> {
    let (m, n) = (x.n_points(), y.n_points());
    if coupling.m() != m || coupling.n() != n {
        return Err(GwError::DimensionMismatch {
            expected: format!("{m}x{n} coupling"),
            found: format!("{}x{}", coupling.m(), coupling.n()),
        });
    }
    let (dx, dy) = (x.dist(), y.dist());
    let self_term = |d: &Matrix, w: &[f64]| {
        let mut s = 0.0;
        for (i, &wi) in w.iter().enumerate() {
            for (k, &wk) in w.iter().enumerate() {
                s += d[(i, k)] * d[(i, k)] * wi * wk;
            }
        }
        s
    };
    let constant = self_term(dx, x.measure()) + self_term(dy, y.measure());
    let plan = coupling.to_matrix();
    let transported = dx.matmul(&plan).matmul(dy);
    let cross_term = -2.0 * dot(plan.as_slice(), transported.as_slice());
    Ok(QapSplit { constant, cross_term })
}
