//! Local solvers for the GW program. None of them certifies a global minimum;
//! see [`crate::oracle`] for desk-scale ground truth.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GwError, Result};
use crate::matrix::{dot, Matrix};
use crate::problem::{gw_distance, objective, Coupling, GwProblem, MARGINAL_TOL};
use crate::sampling::{random_coupling, rng_from_seed};
use crate::transport::{ot_linear, round_to_marginals, sinkhorn_log, sinkhorn_scale};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub value: f64,
    /// Frank-Wolfe gap at this iterate (NaN when not computed).
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub coupling: Coupling,
    /// `μ'Γμ` at `coupling`.
    pub value: f64,
    /// `½ · value^{1/p}`.
    pub distance: f64,
    pub iterations: usize,
    pub fw_gap: f64,
    pub history: Vec<HistoryEntry>,
}

impl SolveResult {
    fn finish(problem: &GwProblem, coupling: Coupling, iterations: usize, fw_gap: f64, history: Vec<HistoryEntry>) -> Result<Self> {
        let value = objective(problem, &coupling)?.max(0.0);
        Ok(Self { distance: gw_distance(value, problem.p())?, coupling, value, iterations, fw_gap, history })
    }

    /// Writes the history as `iteration,value,gap` CSV with a header.
    pub fn write_history_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,value,gap")?;
        for h in &self.history {
            writeln!(out, "{},{:e},{:e}", h.iteration, h.value, h.gap)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FwOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for FwOptions {
    fn default() -> Self {
        Self { max_iter: 1000, tol: 1e-8 }
    }
}

/// Gradient reshaped into the `m × n` linearized cost.
fn cost_matrix(problem: &GwProblem, grad: &[f64]) -> Matrix {
    Matrix::from_vec(problem.m(), problem.n(), grad.to_vec()).expect("gradient has m*n entries")
}

/// Linear-minimization step: returns the LMO vertex and the FW gap `g'(μ − s)`.
fn lmo(problem: &GwProblem, mu: &Coupling, grad: &[f64]) -> Result<(Coupling, f64)> {
    let s = ot_linear(&cost_matrix(problem, grad), problem.mu_x(), problem.mu_y())?;
    let gap = dot(grad, mu.as_slice()) - dot(grad, s.as_slice());
    Ok((s, gap))
}

/// Step length minimizing `f + bγ + aγ²` on `[0, 1]`.
pub fn exact_line_search(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        (-b / (2.0 * a)).clamp(0.0, 1.0)
    } else if a == 0.0 {
        if b < 0.0 {
            1.0
        } else {
            0.0
        }
    } else if a + b < 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Frank-Wolfe with the exact transport LMO and exact line search.
///
/// Stops when the FW gap drops to `tol`, when `max_iter` steps have been
/// taken, or when a step no longer lowers the objective in floating point.
pub fn frank_wolfe(problem: &GwProblem, init: &Coupling, opts: FwOptions) -> Result<SolveResult> {
    problem.check_dims(init)?;
    let err = init.marginal_error(problem.mu_x(), problem.mu_y());
    if !(err <= MARGINAL_TOL) {
        return Err(GwError::InfeasibleInit(format!("marginal error {err:e}")));
    }
    let mut mu = init.clone();
    let mut history = Vec::new();
    let mut gamma_mu = problem.gamma_times(mu.as_slice());
    let mut value = dot(mu.as_slice(), &gamma_mu);

    for t in 0..opts.max_iter {
        let grad: Vec<f64> = gamma_mu.iter().map(|g| 2.0 * g).collect();
        let (s, gap) = lmo(problem, &mu, &grad)?;
        history.push(HistoryEntry { iteration: t, value, gap });
        if gap <= opts.tol {
            return SolveResult::finish(problem, mu, t, gap, history);
        }
        let d: Vec<f64> = s.as_slice().iter().zip(mu.as_slice()).map(|(a, b)| a - b).collect();
        let gamma_d = problem.gamma_times(&d);
        let a = dot(&d, &gamma_d);
        let b = dot(&grad, &d);
        let step = exact_line_search(a, b);
        let next: Vec<f64> = if step == 1.0 {
            s.as_slice().to_vec()
        } else {
            mu.as_slice().iter().zip(s.as_slice()).map(|(x, y)| (1.0 - step) * x + step * y).collect()
        };
        let next = Coupling::new(problem.m(), problem.n(), next)?;
        let next_gamma_mu = problem.gamma_times(next.as_slice());
        let next_value = dot(next.as_slice(), &next_gamma_mu);
        if step == 0.0 || next_value > value {
            log::debug!("frank-wolfe: no floating-point descent at iteration {t} (gap {gap:e})");
            return SolveResult::finish(problem, mu, t, gap, history);
        }
        mu = next;
        gamma_mu = next_gamma_mu;
        value = next_value;
    }
    let grad: Vec<f64> = gamma_mu.iter().map(|g| 2.0 * g).collect();
    let (_, gap) = lmo(problem, &mu, &grad)?;
    history.push(HistoryEntry { iteration: opts.max_iter, value, gap });
    SolveResult::finish(problem, mu, opts.max_iter, gap, history)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropicOptions {
    /// Entropic weight; `None` means `0.05 · mean(Γ)`.
    pub epsilon: Option<f64>,
    pub outer_iters: usize,
    pub sinkhorn_iters: usize,
}

impl Default for EntropicOptions {
    fn default() -> Self {
        Self { epsilon: None, outer_iters: 200, sinkhorn_iters: 100 }
    }
}

/// Mean of all entries of Γ_p, computed from the distance matrices.
pub fn gamma_mean(problem: &GwProblem) -> f64 {
    if let Some(g) = problem.gamma() {
        return g.as_slice().iter().sum::<f64>() / g.as_slice().len() as f64;
    }
    let (dx, dy, p) = (problem.x().dist(), problem.y().dist(), problem.p());
    let mut total = 0.0;
    for a in dx.as_slice() {
        for b in dy.as_slice() {
            total += crate::problem::loss(*a, *b, p);
        }
    }
    total / (dx.as_slice().len() * dy.as_slice().len()) as f64
}

/// Entropic mirror descent: each outer step multiplies the current plan by
/// `exp(−C_t/ε)`, with `C_t = 2Γμ_t` reshaped to `m × n`, and rescales the
/// result onto the coupling polytope with Sinkhorn passes. Scaling switches to
/// the log domain when the kernel underflows.
///
/// The returned value is the unregularized objective; `fw_gap` is the FW gap at
/// the final plan.
pub fn entropic_gw(problem: &GwProblem, init: &Coupling, opts: EntropicOptions) -> Result<SolveResult> {
    problem.check_dims(init)?;
    let epsilon = match opts.epsilon {
        Some(e) => e,
        None => 0.05 * gamma_mean(problem),
    };
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(GwError::InvalidParameter(format!("epsilon must be > 0, got {epsilon}")));
    }
    let (m, n) = (problem.m(), problem.n());
    let (mu_x, mu_y) = (problem.mu_x(), problem.mu_y());
    let mut mu = init.clone();
    let mut history = Vec::new();
    if opts.sinkhorn_iters == 0 || opts.outer_iters == 0 {
        let grad = problem.gradient(&mu)?;
        let (_, gap) = lmo(problem, &mu, &grad)?;
        return SolveResult::finish(problem, mu, 0, gap, history);
    }

    for t in 0..opts.outer_iters {
        let gamma_mu = problem.gamma_times(mu.as_slice());
        let value = dot(mu.as_slice(), &gamma_mu);
        history.push(HistoryEntry { iteration: t, value, gap: f64::NAN });
        let log_kernel = Matrix::from_fn(m, n, |i, j| {
            let w = mu.get(i, j);
            if w > 0.0 {
                w.ln() - 2.0 * gamma_mu[i * n + j] / epsilon
            } else {
                f64::NEG_INFINITY
            }
        });
        let shift = log_kernel.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let kernel = Matrix::from_fn(m, n, |i, j| (log_kernel[(i, j)] - shift).exp());
        let underflow = log_kernel
            .as_slice()
            .iter()
            .zip(kernel.as_slice())
            .any(|(l, k)| l.is_finite() && *k < f64::MIN_POSITIVE);
        let plan = if underflow {
            log::debug!("entropic: kernel underflow at outer step {t}, switching to log domain");
            sinkhorn_log(&log_kernel, mu_x, mu_y, opts.sinkhorn_iters)
                .ok_or(GwError::NumericalUnderflow { epsilon })?
        } else {
            sinkhorn_scale(&kernel, mu_x, mu_y, opts.sinkhorn_iters)
        };
        if plan.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(GwError::NumericalUnderflow { epsilon });
        }
        let plan = round_to_marginals(&plan, mu_x, mu_y);
        mu = Coupling::new(m, n, plan.as_slice().to_vec())?;
    }
    let grad = problem.gradient(&mu)?;
    let (_, gap) = lmo(problem, &mu, &grad)?;
    let iterations = opts.outer_iters;
    SolveResult::finish(problem, mu, iterations, gap, history)
}

/// Starting points used by [`multistart`]: the independence coupling, then
/// `k − 1` random couplings drawn from `seed`.
pub fn multistart_inits(problem: &GwProblem, k: usize, seed: u64) -> Vec<Coupling> {
    let mut rng = rng_from_seed(seed);
    let mut inits = Vec::with_capacity(k);
    inits.push(problem.independence_coupling());
    for _ in 1..k {
        inits.push(random_coupling(problem.mu_x(), problem.mu_y(), &mut rng));
    }
    inits
}

/// Best Frank-Wolfe result over `k` starts. Ties go to the lowest start index,
/// so the outcome does not depend on scheduling.
pub fn multistart(problem: &GwProblem, k: usize, seed: u64, opts: FwOptions) -> Result<SolveResult> {
    if k == 0 {
        return Err(GwError::InvalidParameter("multistart needs k >= 1".into()));
    }
    let runs: Vec<SolveResult> = multistart_inits(problem, k, seed)
        .par_iter()
        .map(|init| frank_wolfe(problem, init, opts))
        .collect::<Result<_>>()?;
    let best = runs
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.value.total_cmp(&b.value).then(ia.cmp(ib)))
        .map(|(i, _)| i)
        .expect("k >= 1");
    log::debug!("multistart: best start {best} of {k}");
    Ok(runs.into_iter().nth(best).expect("index in range"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mmspace::{delta_space, make_space};
    use crate::problem::independence_coupling;

    fn example_problem() -> GwProblem {
        let y = make_space(Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap(), vec![0.25, 0.75]).unwrap();
        GwProblem::new(&delta_space(2).unwrap(), &y, 1.0).unwrap()
    }

    #[test]
    fn line_search_cases() {
        assert_eq!(exact_line_search(1.0, -1.0), 0.5);
        assert_eq!(exact_line_search(1.0, -5.0), 1.0);
        assert_eq!(exact_line_search(0.0, -1.0), 1.0);
        assert_eq!(exact_line_search(0.0, 0.0), 0.0);
        assert_eq!(exact_line_search(-1.0, -0.5), 1.0);
        assert_eq!(exact_line_search(-1.0, 2.0), 0.0);
    }

    #[test]
    fn example_from_independence_is_stationary() {
        // The gradient is constant (all ones) at the product measure, so the
        // FW gap is exactly zero there even though it is the worst feasible
        // point along the one-dimensional polytope.
        let pr = example_problem();
        let r = frank_wolfe(&pr, &pr.independence_coupling(), FwOptions::default()).unwrap();
        assert_eq!(r.value, 0.5);
        assert_eq!(r.fw_gap, 0.0);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn example_from_off_center_start() {
        let pr = example_problem();
        for t in [0.01, 0.1, 0.2] {
            let init = Coupling::new(2, 2, vec![t, 0.5 - t, 0.25 - t, 0.25 + t]).unwrap();
            let r = frank_wolfe(&pr, &init, FwOptions::default()).unwrap();
            assert!((r.value - 0.375).abs() < 1e-12, "t={t}: {}", r.value);
            assert!(r.history.windows(2).all(|w| w[1].value <= w[0].value));
        }
    }

    #[test]
    fn zero_iterations_returns_init() {
        let pr = example_problem();
        let init = pr.independence_coupling();
        let r = frank_wolfe(&pr, &init, FwOptions { max_iter: 0, tol: 1e-8 }).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.coupling, init);
        assert_eq!(r.value, 0.5);
    }

    #[test]
    fn infeasible_init() {
        let pr = example_problem();
        let bad = independence_coupling(&[0.5, 0.5], &[0.5, 0.5]);
        assert!(matches!(frank_wolfe(&pr, &bad, FwOptions::default()), Err(GwError::InfeasibleInit(_))));
    }

    #[test]
    fn self_distance_is_immediate() {
        let x = make_space(
            Matrix::from_rows(&[[0.0, 1.0, 2.0], [1.0, 0.0, 1.5], [2.0, 1.5, 0.0]]).unwrap(),
            vec![0.2, 0.5, 0.3],
        )
        .unwrap();
        let pr = GwProblem::new(&x, &x, 1.0).unwrap();
        let r = frank_wolfe(&pr, &Coupling::diagonal(x.measure()), FwOptions::default()).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.iterations, 0);
        assert!(r.fw_gap.abs() <= 1e-10);
    }

    #[test]
    fn entropic_heavy_regularization_stays_near_independence() {
        let pr = example_problem();
        let opts = EntropicOptions { epsilon: Some(10.0), ..Default::default() };
        let r = entropic_gw(&pr, &pr.independence_coupling(), opts).unwrap();
        assert!((r.value - 0.5).abs() <= 0.05 * 0.5, "{}", r.value);
        assert!(r.coupling.is_feasible(pr.mu_x(), pr.mu_y(), 1e-12));
    }

    #[test]
    fn entropic_zero_passes_returns_init() {
        let pr = example_problem();
        let init = pr.independence_coupling();
        let opts = EntropicOptions { epsilon: Some(1.0), outer_iters: 10, sinkhorn_iters: 0 };
        let r = entropic_gw(&pr, &init, opts).unwrap();
        assert_eq!(r.coupling, init);
        assert_eq!(r.value, 0.5);
    }

    #[test]
    fn entropic_self_distance_concentrates() {
        let x = make_space(
            Matrix::from_rows(&[[0.0, 1.0, 2.0], [1.0, 0.0, 1.5], [2.0, 1.5, 0.0]]).unwrap(),
            vec![0.2, 0.5, 0.3],
        )
        .unwrap();
        let pr = GwProblem::new(&x, &x, 1.0).unwrap();
        let ind = pr.independence_coupling();
        let diag = Coupling::diagonal(x.measure());
        let init: Vec<f64> = diag.as_slice().iter().zip(ind.as_slice()).map(|(d, i)| 0.9 * d + 0.1 * i).collect();
        let init = Coupling::new(3, 3, init).unwrap();
        let opts = EntropicOptions { epsilon: Some(0.01), ..Default::default() };
        let r = entropic_gw(&pr, &init, opts).unwrap();
        let at_ind = objective(&pr, &ind).unwrap();
        assert!(r.value <= 0.05 * at_ind, "{} vs {}", r.value, at_ind);
    }

    #[test]
    fn entropic_tiny_epsilon_uses_log_domain() {
        let pr = example_problem();
        let opts = EntropicOptions { epsilon: Some(1e-4), outer_iters: 20, sinkhorn_iters: 100 };
        let init = Coupling::new(2, 2, vec![0.2, 0.3, 0.05, 0.45]).unwrap();
        let r = entropic_gw(&pr, &init, opts).unwrap();
        assert!(r.coupling.is_feasible(pr.mu_x(), pr.mu_y(), 1e-12));
        assert!(r.value <= 0.5);
    }

    #[test]
    fn multistart_determinism() {
        let pr = example_problem();
        let a = multistart(&pr, 5, 42, FwOptions::default()).unwrap();
        let b = multistart(&pr, 5, 42, FwOptions::default()).unwrap();
        assert_eq!(a, b);
        assert!((a.value - 0.375).abs() < 1e-9);
        let one = multistart(&pr, 1, 3, FwOptions::default()).unwrap();
        let fw = frank_wolfe(&pr, &pr.independence_coupling(), FwOptions::default()).unwrap();
        assert_eq!(one, fw);
    }

    #[test]
    fn history_csv() {
        let pr = example_problem();
        let r = frank_wolfe(&pr, &pr.independence_coupling(), FwOptions::default()).unwrap();
        let mut buf = Vec::new();
        r.write_history_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,value,gap\n0,"));
        assert_eq!(text.lines().count(), r.history.len() + 1);
    }
}
