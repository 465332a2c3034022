//! Finite metric-measure spaces: a distance matrix paired with a probability
//! vector over the same points.
//!
//! Spaces are validated on construction. Triangle-inequality violations do not
//! reject a space; they are recorded as [`ValidationWarning`]s because the GW
//! program only needs a symmetric, nonnegative dissimilarity.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GwError, Result};
use crate::matrix::Matrix;

/// Absolute tolerance on `sum(measure) == 1`.
pub const MEASURE_TOL: f64 = 1e-12;
/// Slack allowed in the triangle inequality before a warning is recorded.
pub const TRIANGLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ValidationWarning {
    /// `dist[i][k] > dist[i][j] + dist[j][k]`
    TriangleViolation { i: usize, j: usize, k: usize, excess: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMeasureSpace {
    dist: Matrix,
    measure: Vec<f64>,
    #[serde(default)]
    warnings: Vec<ValidationWarning>,
}

impl MetricMeasureSpace {
    /// Validates `dist` and `measure` and builds the space.
    pub fn new(dist: Matrix, measure: Vec<f64>) -> Result<Self> {
        check_distance(&dist)?;
        if measure.len() != dist.rows() {
            return Err(GwError::LengthMismatch { points: dist.rows(), measure: measure.len() });
        }
        check_simplex(&measure)?;
        let warnings = triangle_violations(&dist);
        for w in &warnings {
            log::warn!("{w:?}");
        }
        Ok(Self { dist, measure, warnings })
    }

    /// Builds a space whose distance is known to be a metric (Euclidean or arc
    /// length), skipping the cubic triangle scan.
    fn new_metric(dist: Matrix, measure: Vec<f64>) -> Result<Self> {
        check_distance(&dist)?;
        if measure.len() != dist.rows() {
            return Err(GwError::LengthMismatch { points: dist.rows(), measure: measure.len() });
        }
        check_simplex(&measure)?;
        Ok(Self { dist, measure, warnings: Vec::new() })
    }

    pub fn n_points(&self) -> usize {
        self.measure.len()
    }

    pub fn dist(&self) -> &Matrix {
        &self.dist
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    pub fn warnings(&self) -> &[ValidationWarning] {
        &self.warnings
    }

    /// Re-runs every check, returning the triangle warnings on success.
    pub fn validate(&self) -> Result<Vec<ValidationWarning>> {
        check_distance(&self.dist)?;
        check_simplex(&self.measure)?;
        Ok(triangle_violations(&self.dist))
    }

    /// Same measure, distances multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.dist.scale(c), self.measure.clone())
    }

    /// Same points and distances with a different measure.
    pub fn with_measure(&self, measure: Vec<f64>) -> Result<Self> {
        if measure.len() != self.n_points() {
            return Err(GwError::LengthMismatch { points: self.n_points(), measure: measure.len() });
        }
        check_simplex(&measure)?;
        Ok(Self { dist: self.dist.clone(), measure, warnings: self.warnings.clone() })
    }
}

/// `make_space`: validated space from a distance matrix and a measure.
pub fn make_space(dist: Matrix, measure: Vec<f64>) -> Result<MetricMeasureSpace> {
    MetricMeasureSpace::new(dist, measure)
}

fn check_distance(dist: &Matrix) -> Result<()> {
    let n = dist.rows();
    if n == 0 {
        return Err(GwError::InvalidSize("a space needs at least one point".into()));
    }
    if !dist.is_square() {
        return Err(GwError::NotSquare { rows: n, row: 0, len: dist.cols() });
    }
    for i in 0..n {
        let d = dist[(i, i)];
        if d != 0.0 {
            return Err(GwError::NonzeroDiagonal { i, value: d });
        }
    }
    for i in 0..n {
        for k in 0..n {
            let v = dist[(i, k)];
            if !v.is_finite() || v < 0.0 {
                return Err(GwError::NegativeDistance { i, k, value: v });
            }
        }
    }
    for i in 0..n {
        for k in (i + 1)..n {
            let (a, b) = (dist[(i, k)], dist[(k, i)]);
            if a != b {
                return Err(GwError::AsymmetricDistance { i, k, a, b });
            }
            if a == 0.0 {
                return Err(GwError::DuplicatePoints { i, k });
            }
        }
    }
    Ok(())
}

pub(crate) fn check_simplex(measure: &[f64]) -> Result<()> {
    if measure.is_empty() {
        return Err(GwError::MeasureNotSimplex { reason: "empty measure".into() });
    }
    if let Some((i, &w)) = measure.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
        return Err(GwError::MeasureNotSimplex { reason: format!("entry {i} is {w}, must be > 0") });
    }
    let total: f64 = measure.iter().sum();
    if (total - 1.0).abs() > MEASURE_TOL {
        return Err(GwError::MeasureNotSimplex { reason: format!("entries sum to {total}") });
    }
    Ok(())
}

fn triangle_violations(dist: &Matrix) -> Vec<ValidationWarning> {
    let n = dist.rows();
    let mut out = Vec::new();
    for i in 0..n {
        for k in (i + 1)..n {
            let dik = dist[(i, k)];
            for j in 0..n {
                let excess = dik - (dist[(i, j)] + dist[(j, k)]);
                if excess > TRIANGLE_TOL {
                    out.push(ValidationWarning::TriangleViolation { i, j, k, excess });
                }
            }
        }
    }
    out
}

pub fn uniform_measure(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// The space Δ_n: `n` points at mutual distance 1 with the uniform measure.
pub fn delta_space(n: usize) -> Result<MetricMeasureSpace> {
    if n == 0 {
        return Err(GwError::InvalidSize("delta space needs n >= 1".into()));
    }
    let dist = Matrix::from_fn(n, n, |i, k| if i == k { 0.0 } else { 1.0 });
    MetricMeasureSpace::new_metric(dist, uniform_measure(n))
}

/// Euclidean distance matrix of a point cloud, uniform measure.
pub fn point_cloud_space(points: &[Vec<f64>]) -> Result<MetricMeasureSpace> {
    let n = points.len();
    if n == 0 {
        return Err(GwError::InvalidSize("empty point cloud".into()));
    }
    let dist = Matrix::from_fn(n, n, |i, k| euclidean(&points[i], &points[k]));
    MetricMeasureSpace::new_metric(dist, uniform_measure(n))
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Ordered samples of a curve in R³.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve3D {
    samples: Vec<[f64; 3]>,
}

impl Curve3D {
    pub fn new(samples: Vec<[f64; 3]>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(GwError::InvalidSize(format!(
                "a curve needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if let Some(index) = samples.windows(2).position(|w| w[0] == w[1]) {
            return Err(GwError::DuplicateConsecutiveSamples { index });
        }
        if samples.iter().flatten().any(|x| !x.is_finite()) {
            return Err(GwError::InvalidParameter("curve has non-finite coordinates".into()));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[[f64; 3]] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Cumulative arc length at each sample, starting at 0.
    pub fn cumulative_length(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.samples.len());
        let mut acc = 0.0;
        s.push(acc);
        for w in self.samples.windows(2) {
            acc += euclidean(&w[0], &w[1]);
            s.push(acc);
        }
        s
    }
}

/// `count` evenly spaced indices into `0..len`, always including both ends.
pub fn even_indices(len: usize, count: usize) -> Result<Vec<usize>> {
    if count == 0 || count > len {
        return Err(GwError::InvalidSize(format!("cannot pick {count} of {len} samples")));
    }
    if count == 1 {
        return Ok(vec![0]);
    }
    let (span, steps) = (len - 1, count - 1);
    Ok((0..count).map(|k| (k * span + steps / 2) / steps).collect())
}

/// Arc-length space over all samples of `curve`; uniform measure unless one
/// is given.
pub fn arc_length_space(curve: &Curve3D, measure: Option<Vec<f64>>) -> Result<MetricMeasureSpace> {
    let all: Vec<usize> = (0..curve.len()).collect();
    arc_length_space_at(curve, &all, measure)
}

/// Arc-length space over the samples at `indices` (strictly increasing).
/// Distances are measured along the full curve, not along chords between the
/// kept samples.
pub fn arc_length_space_at(
    curve: &Curve3D,
    indices: &[usize],
    measure: Option<Vec<f64>>,
) -> Result<MetricMeasureSpace> {
    if indices.windows(2).any(|w| w[0] >= w[1]) || indices.last().is_some_and(|&i| i >= curve.len()) {
        return Err(GwError::InvalidParameter("sample indices must be increasing and in range".into()));
    }
    let s = curve.cumulative_length();
    let n = indices.len();
    let dist = Matrix::from_fn(n, n, |a, b| (s[indices[a]] - s[indices[b]]).abs());
    let measure = measure.unwrap_or_else(|| uniform_measure(n));
    MetricMeasureSpace::new_metric(dist, measure)
}

/// Input file layouts accepted by [`load_space`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceFormat {
    /// `n` rows of `n` distances, optionally followed by one measure row.
    DistanceMatrixCsv,
    /// One point per row; dimension taken from the first row.
    PointCloudCsv,
    /// One `x,y,z` sample per row.
    CurveCsv,
}

impl FromStr for SpaceFormat {
    type Err = GwError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distance-matrix-csv" | "dist" | "matrix" => Ok(Self::DistanceMatrixCsv),
            "point-cloud-csv" | "points" => Ok(Self::PointCloudCsv),
            "curve-csv" | "curve" => Ok(Self::CurveCsv),
            other => Err(GwError::InvalidParameter(format!("unknown space format '{other}'"))),
        }
    }
}

pub fn load_space(path: impl AsRef<Path>, format: SpaceFormat) -> Result<MetricMeasureSpace> {
    let text = fs::read_to_string(path.as_ref())
        .map_err(|e| GwError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_space(&text, format)
}

pub fn parse_space(text: &str, format: SpaceFormat) -> Result<MetricMeasureSpace> {
    match format {
        SpaceFormat::DistanceMatrixCsv => {
            let rows = parse_rows(text, None)?;
            let n = rows[0].1.len();
            let (dist_rows, measure) = match rows.len() {
                len if len == n => (&rows[..], None),
                len if len == n + 1 => (&rows[..n], Some(rows[n].1.clone())),
                len => {
                    return Err(GwError::Parse {
                        line: rows[len - 1].0,
                        message: format!("expected {n} or {} rows for a {n}-column matrix, got {len}", n + 1),
                    })
                }
            };
            let dist: Vec<&Vec<f64>> = dist_rows.iter().map(|(_, r)| r).collect();
            let dist = Matrix::from_fn(n, n, |i, k| dist[i][k]);
            make_space(dist, measure.unwrap_or_else(|| uniform_measure(n)))
        }
        SpaceFormat::PointCloudCsv => {
            let rows = parse_rows(text, None)?;
            let points: Vec<Vec<f64>> = rows.into_iter().map(|(_, r)| r).collect();
            point_cloud_space(&points)
        }
        SpaceFormat::CurveCsv => arc_length_space(&parse_curve(text)?, None),
    }
}

pub fn load_curve(path: impl AsRef<Path>) -> Result<Curve3D> {
    let text = fs::read_to_string(path.as_ref())
        .map_err(|e| GwError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_curve(&text)
}

pub fn parse_curve(text: &str) -> Result<Curve3D> {
    let rows = parse_rows(text, Some(3))?;
    Curve3D::new(rows.into_iter().map(|(_, r)| [r[0], r[1], r[2]]).collect())
}

/// Parses non-empty lines of comma-separated reals. Every row must have the
/// width of the first (or `width` if given). Returns 1-based line numbers.
fn parse_rows(text: &str, width: Option<usize>) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| GwError::Parse {
                    line: line_no,
                    message: format!("'{}': {e}", f.trim()),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let expected = width.or_else(|| rows.first().map(|r| r.1.len()));
        if let Some(w) = expected {
            if row.len() != w {
                return Err(GwError::Parse {
                    line: line_no,
                    message: format!("expected {w} fields, found {}", row.len()),
                });
            }
        }
        rows.push((line_no, row));
    }
    if rows.is_empty() {
        return Err(GwError::Parse { line: 0, message: "no data rows".into() });
    }
    Ok(rows)
}

/// Stand-in trajectories for curve-comparison experiments.
///
/// These are NOT the trajectories of any particular published model; they are
/// linear spirals around the equilibrium (1, 1, 1), one whose focus is
/// unstable (radius grows) and one whose focus is stable (radius decays), used
/// when no recorded trajectories are at hand.
pub mod standin {
    use super::Curve3D;
    use crate::error::Result;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Focus {
        Unstable,
        Stable,
    }

    /// Samples `samples` points of the spiral at evenly spaced times on `[0, t_max]`.
    pub fn spiral(focus: Focus, samples: usize, t_max: f64) -> Result<Curve3D> {
        let (growth, omega, r0, drift) = match focus {
            Focus::Unstable => (0.08, 1.3, 0.2, 0.05),
            Focus::Stable => (-0.12, 0.9, 1.0, -0.6),
        };
        let denom = samples.saturating_sub(1).max(1) as f64;
        let pts = (0..samples)
            .map(|k| {
                let t = t_max * k as f64 / denom;
                let r = r0 * (growth * t).exp();
                [
                    1.0 + r * (omega * t).cos(),
                    1.0 + r * (omega * t).sin(),
                    1.0 + drift * (1.0 - (-0.3 * t).exp()) + 0.1 * r * (0.5 * omega * t).sin(),
                ]
            })
            .collect();
        Curve3D::new(pts)
    }
}
