//! Eigenvalue-count sweeps over families of space pairs, and the numerical
//! check of the squared-loss QAP split.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GwError, Result};
use crate::mmspace::{arc_length_space_at, delta_space, even_indices, Curve3D, MetricMeasureSpace};
use crate::problem::{build_gamma, objective, qap_decompose, GwProblem};
use crate::sampling::{random_coupling, rng_from_seed};
use crate::spectral::{count_below, default_tolerance, eigenvalues_symmetric};

pub const SWEEP_CSV_HEADER: &str = "n,matrix_dim,negative_count,min_eigenvalue";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Size of the varying space.
    pub n: usize,
    pub matrix_dim: usize,
    pub negative_count: usize,
    pub min_eigenvalue: f64,
}

/// Spectrum summary of Γ_p for one pair of spaces.
pub fn sweep_row(x: &MetricMeasureSpace, y: &MetricMeasureSpace, p: f64) -> Result<SweepRow> {
    let gamma = build_gamma(x, y, p)?;
    let eig = eigenvalues_symmetric(&gamma)?;
    let negative_count = count_below(&eig, default_tolerance(&gamma));
    let row = SweepRow {
        n: y.n_points(),
        matrix_dim: gamma.rows(),
        negative_count,
        min_eigenvalue: eig.first().copied().unwrap_or(0.0),
    };
    if x.n_points() >= 2 && y.n_points() >= 2 && negative_count == 0 {
        return Err(GwError::InternalInconsistency(format!(
            "no negative eigenvalue for m = {}, n = {}",
            x.n_points(),
            y.n_points()
        )));
    }
    Ok(row)
}

fn check_range(n_min: usize, n_max: usize, floor: usize) -> Result<()> {
    if n_min < floor || n_min > n_max {
        return Err(GwError::InvalidParameter(format!(
            "need {floor} <= n_min <= n_max, got n_min = {n_min}, n_max = {n_max}"
        )));
    }
    Ok(())
}

/// Δ_m against Δ_n for `n = n_min..=n_max`. Rows are ordered by `n`.
pub fn sweep_delta(m: usize, n_min: usize, n_max: usize, p: f64) -> Result<Vec<SweepRow>> {
    check_range(n_min, n_max, 2)?;
    if m < 2 {
        return Err(GwError::InvalidParameter(format!("m must be >= 2, got {m}")));
    }
    let x = delta_space(m)?;
    (n_min..=n_max).into_par_iter().map(|n| sweep_row(&x, &delta_space(n)?, p)).collect()
}

/// Arc-length spaces on two curves: `m` evenly spaced samples of `curve_x`
/// against `n` evenly spaced samples of `curve_y` for `n = n_min..=n_max`.
pub fn sweep_curves(
    curve_x: &Curve3D,
    curve_y: &Curve3D,
    m: usize,
    n_min: usize,
    n_max: usize,
    p: f64,
) -> Result<Vec<SweepRow>> {
    check_range(n_min, n_max, 2)?;
    if m < 2 {
        return Err(GwError::InvalidParameter(format!("m must be >= 2, got {m}")));
    }
    if curve_x.len() < m || curve_y.len() < n_max {
        return Err(GwError::InvalidSize(format!(
            "curves have {} and {} samples; need at least {m} and {n_max}",
            curve_x.len(),
            curve_y.len()
        )));
    }
    let x = arc_length_space_at(curve_x, &even_indices(curve_x.len(), m)?, None)?;
    (n_min..=n_max)
        .into_par_iter()
        .map(|n| {
            let y = arc_length_space_at(curve_y, &even_indices(curve_y.len(), n)?, None)?;
            sweep_row(&x, &y, p)
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{:e}", r.n, r.matrix_dim, r.negative_count, r.min_eigenvalue)?;
    }
    Ok(())
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            out[idx] = rank;
        }
        start = end;
    }
    out
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let len = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / len, rb.iter().sum::<f64>() / len);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va * vb).sqrt()
}

/// Spearman correlation between `n` and `negative_count` across sweep rows.
pub fn count_trend(rows: &[SweepRow]) -> f64 {
    let n: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let c: Vec<f64> = rows.iter().map(|r| r.negative_count as f64).collect();
    spearman(&n, &c)
}

/// Relative tolerance on `constant + cross_term == objective`.
pub const QAP_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QapTrial {
    pub trial: usize,
    pub objective: f64,
    pub constant: f64,
    pub cross_term: f64,
    /// `|objective − constant − cross_term|` over the largest of the three magnitudes.
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QapCheckReport {
    pub trials: usize,
    pub seed: u64,
    pub max_rel_error: f64,
    pub failures: Vec<QapTrial>,
}

impl QapCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Compares the squared-loss objective with its QAP split on `trials` random
/// couplings drawn from `seed`.
pub fn qap_check(x: &MetricMeasureSpace, y: &MetricMeasureSpace, trials: usize, seed: u64) -> Result<QapCheckReport> {
    let problem = GwProblem::new(x, y, 2.0)?;
    let mut rng = rng_from_seed(seed);
    let mut failures = Vec::new();
    let mut max_rel_error: f64 = 0.0;
    for trial in 0..trials {
        let c = random_coupling(x.measure(), y.measure(), &mut rng);
        let value = objective(&problem, &c)?;
        let split = qap_decompose(x, y, &c)?;
        let scale = value.abs().max(split.constant.abs()).max(split.cross_term.abs());
        let diff = (value - split.total()).abs();
        let rel_error = if scale == 0.0 { diff } else { diff / scale };
        max_rel_error = max_rel_error.max(rel_error);
        if !(rel_error <= QAP_REL_TOL) {
            failures.push(QapTrial { trial, objective: value, constant: split.constant, cross_term: split.cross_term, rel_error });
        }
    }
    Ok(QapCheckReport { trials, seed, max_rel_error, failures })
}
