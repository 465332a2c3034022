//! Spectral non-convexity certificates for Γ_p.
//!
//! Γ_p has a zero diagonal and, as soon as the second space has two points,
//! a top-left 2×2 principal submatrix `[[0, h^p], [h^p, 0]]` with determinant
//! `−h^{2p} < 0`. By Sylvester's criterion Γ_p is then never positive
//! semidefinite; [`certify_nonconvex`] checks this against the computed
//! spectrum on every call.

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{GwError, Result};
use crate::matrix::Matrix;
use crate::problem::{loss, GwProblem};

/// Matrices up to this order go through the in-repo Jacobi solver.
pub const JACOBI_MAX_DIM: usize = 128;
/// Jacobi stops once the off-diagonal norm drops below this fraction of ‖M‖_F.
pub const JACOBI_REL_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Inputs must be symmetric to this absolute tolerance.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub negative_count: usize,
    pub minor_det: f64,
    #[serde(rename = "psd")]
    pub psd_verdict: bool,
}

impl SpectralReport {
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }
}

fn check_symmetric(m: &Matrix) -> Result<()> {
    if !m.is_square() {
        return Err(GwError::DimensionMismatch {
            expected: "square matrix".into(),
            found: format!("{}x{}", m.rows(), m.cols()),
        });
    }
    if let Some((i, k)) = m.asymmetry(SYMMETRY_TOL) {
        return Err(GwError::NotSymmetric { i, k });
    }
    Ok(())
}

/// Eigenvalues of a symmetric matrix, ascending.
///
/// Orders up to [`JACOBI_MAX_DIM`] use cyclic Jacobi rotations; larger ones
/// use faer's blocked tridiagonal solver, which is also an orthogonal
/// similarity scheme but scales to the 2500-dimensional sweep instances.
pub fn eigenvalues_symmetric(m: &Matrix) -> Result<Vec<f64>> {
    check_symmetric(m)?;
    if m.rows() <= JACOBI_MAX_DIM {
        jacobi_eigenvalues(m)
    } else {
        tridiagonal_eigenvalues(m)
    }
}

/// Cyclic Jacobi eigenvalues (ascending). The input must be symmetric.
pub fn jacobi_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    check_symmetric(m)?;
    let n = m.rows();
    let mut a = m.clone();
    let scale = m.frobenius_norm();
    let target = JACOBI_REL_TOL * scale;

    let off_norm = |a: &Matrix| {
        let mut s = 0.0;
        for i in 0..n {
            for k in (i + 1)..n {
                s += 2.0 * a[(i, k)] * a[(i, k)];
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off_norm(&a) > target {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(GwError::Eigensolver(format!(
                "Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps (off-diagonal norm {:e})",
                off_norm(&a)
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                let tau = s / (1.0 + c);
                a[(p, p)] -= t * apq;
                a[(q, q)] += t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let g = a[(r, p)];
                    let h = a[(r, q)];
                    let new_p = g - s * (h + g * tau);
                    let new_q = h + s * (g - h * tau);
                    a[(r, p)] = new_p;
                    a[(p, r)] = new_p;
                    a[(r, q)] = new_q;
                    a[(q, r)] = new_q;
                }
            }
        }
    }
    log::debug!("jacobi: order {n}, {sweeps} sweeps");
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Eigenvalues via Householder tridiagonalization (faer), ascending.
pub fn tridiagonal_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    check_symmetric(m)?;
    let n = m.rows();
    let mat = Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    let mut eig = mat
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| GwError::Eigensolver(format!("{e:?}")))?;
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Default negativity threshold `1e-8 · max(1, ‖M‖_F)`.
pub fn default_tolerance(m: &Matrix) -> f64 {
    1e-8 * m.frobenius_norm().max(1.0)
}

/// Number of eigenvalues strictly below `-tol` in an ascending spectrum.
pub fn count_below(eigenvalues: &[f64], tol: f64) -> usize {
    eigenvalues.iter().take_while(|&&e| e < -tol).count()
}

/// Number of eigenvalues of `m` strictly below `-tol` (default threshold if `None`).
pub fn count_negative(m: &Matrix, tol: Option<f64>) -> Result<usize> {
    let tol = tol.unwrap_or_else(|| default_tolerance(m));
    if !(tol > 0.0) {
        return Err(GwError::InvalidParameter(format!("tolerance must be > 0, got {tol}")));
    }
    Ok(count_below(&eigenvalues_symmetric(m)?, tol))
}

/// Determinant of the top-left 2×2 principal submatrix of Γ_p, i.e. over the
/// flat indices of `(x_1, y_1)` and `(x_1, y_2)`.
pub fn principal_minor_2x2(problem: &GwProblem) -> Result<f64> {
    if problem.n() < 2 {
        return Err(GwError::TooFewPoints { m: problem.m(), n: problem.n() });
    }
    let (dx, dy, p) = (problem.x().dist(), problem.y().dist(), problem.p());
    let entry = |a: usize, b: usize| match problem.gamma() {
        Some(g) => g[(a, b)],
        // both flat indices 0 and 1 sit in block (0, 0)
        None => loss(dx[(0, 0)], dy[(a, b)], p),
    };
    Ok(entry(0, 0) * entry(1, 1) - entry(0, 1) * entry(1, 0))
}

/// Full spectral report for Γ_p, failing loudly if Γ_p comes out positive
/// semidefinite.
pub fn certify_nonconvex(problem: &GwProblem) -> Result<SpectralReport> {
    certify_with_tolerance(problem, None)
}

pub fn certify_with_tolerance(problem: &GwProblem, tol: Option<f64>) -> Result<SpectralReport> {
    let (m, n) = (problem.m(), problem.n());
    if m < 2 || n < 2 {
        return Err(GwError::TooFewPoints { m, n });
    }
    let gamma = problem.gamma_dense();
    let tol = tol.unwrap_or_else(|| default_tolerance(&gamma));
    let eigenvalues = eigenvalues_symmetric(&gamma)?;
    let negative_count = count_below(&eigenvalues, tol);
    let minor_det = principal_minor_2x2(problem)?;
    let psd_verdict = eigenvalues[0] >= -tol;
    if psd_verdict {
        return Err(GwError::InternalInconsistency(format!(
            "Γ_p judged positive semidefinite (min eigenvalue {:e}, minor {minor_det:e})",
            eigenvalues[0]
        )));
    }
    if minor_det >= 0.0 {
        return Err(GwError::InternalInconsistency(format!("2x2 principal minor is {minor_det:e}, expected < 0")));
    }
    Ok(SpectralReport { eigenvalues, negative_count, minor_det, psd_verdict })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mmspace::{delta_space, make_space};

    fn example_problem(p: f64) -> GwProblem {
        let y = make_space(Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap(), vec![0.25, 0.75]).unwrap();
        GwProblem::new(&delta_space(2).unwrap(), &y, p).unwrap()
    }

    #[test]
    fn example_spectrum() {
        let pr = example_problem(1.0);
        let eig = eigenvalues_symmetric(pr.gamma().unwrap()).unwrap();
        let expected = [-2.0, 0.0, 0.0, 2.0];
        for (a, b) in eig.iter().zip(expected) {
            assert!((a - b).abs() < 1e-10, "{eig:?}");
        }
        assert_eq!(count_negative(pr.gamma().unwrap(), None).unwrap(), 1);
        let rep = certify_nonconvex(&pr).unwrap();
        assert_eq!(rep.negative_count, 1);
        assert_eq!(rep.minor_det, -1.0);
        assert!(!rep.psd_verdict);
    }

    #[test]
    fn trivial_spectra() {
        assert_eq!(eigenvalues_symmetric(&Matrix::identity(3)).unwrap(), vec![1.0, 1.0, 1.0]);
        assert_eq!(eigenvalues_symmetric(&Matrix::from_diag(&[5.0, -1.0, 0.0])).unwrap(), vec![-1.0, 0.0, 5.0]);
        assert_eq!(count_negative(&Matrix::zeros(4, 4), None).unwrap(), 0);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = Matrix::from_rows(&[[0.0, 1.0], [2.0, 0.0]]).unwrap();
        assert!(matches!(eigenvalues_symmetric(&m), Err(GwError::NotSymmetric { i: 0, k: 1 })));
        assert!(matches!(count_negative(&m, None), Err(GwError::NotSymmetric { .. })));
    }

    #[test]
    fn minors() {
        assert_eq!(principal_minor_2x2(&example_problem(1.0)).unwrap(), -1.0);
        let d2 = delta_space(2).unwrap();
        assert_eq!(principal_minor_2x2(&GwProblem::new(&d2, &d2, 2.0).unwrap()).unwrap(), -1.0);
        let y = make_space(Matrix::from_rows(&[[0.0, 3.0], [3.0, 0.0]]).unwrap(), vec![0.5, 0.5]).unwrap();
        let pr = GwProblem::new(&d2, &y, 1.0).unwrap();
        let g = pr.gamma().unwrap();
        let direct = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
        assert_eq!(direct, -9.0);
        assert_eq!(principal_minor_2x2(&pr).unwrap(), -9.0);
        assert_eq!(principal_minor_2x2(&GwProblem::matrix_free(&d2, &y, 1.0).unwrap()).unwrap(), -9.0);
    }

    #[test]
    fn too_few_points() {
        let one = delta_space(1).unwrap();
        let pr = GwProblem::new(&one, &one, 1.0).unwrap();
        assert!(matches!(certify_nonconvex(&pr), Err(GwError::TooFewPoints { .. })));
        assert!(matches!(principal_minor_2x2(&pr), Err(GwError::TooFewPoints { .. })));
    }

    #[test]
    fn delta_2_vs_50() {
        let pr = GwProblem::new(&delta_space(2).unwrap(), &delta_space(50).unwrap(), 1.0).unwrap();
        let rep = certify_nonconvex(&pr).unwrap();
        assert_eq!(rep.negative_count, 49);
        assert!(!rep.psd_verdict);
    }

    #[test]
    fn report_json_shape() {
        let rep = certify_nonconvex(&example_problem(1.0)).unwrap();
        let v: serde_json::Value = serde_json::to_value(&rep).unwrap();
        assert_eq!(v["negative_count"], 1);
        assert_eq!(v["minor_det"], -1.0);
        assert_eq!(v["psd"], false);
        assert_eq!(v["eigenvalues"].as_array().unwrap().len(), 4);
    }
}
