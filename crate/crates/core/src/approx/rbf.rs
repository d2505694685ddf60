//! Gaussian radial-basis representation fitted by minimum-norm least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::grid::SimplexGrid;

use super::ApproxError;

pub const DEFAULT_RBF_CENTERS: usize = 49;
pub const DEFAULT_RBF_WIDTH: f64 = 1.0;

/// `M` centers spread over the simplex: the points of the smallest lattice
/// holding at least `M` cells, closest to the centroid first (ties by lattice
/// index).
pub fn lattice_centers(k: usize, m: usize) -> Vec<Vec<f64>> {
    assert!(m >= 1, "need at least one center");
    let mut n = 1;
    while crate::grid::cell_count(k, n) < m {
        n += 1;
    }
    let grid = SimplexGrid::new(k, n).expect("k >= 2");
    let c = 1.0 / k as f64;
    let mut cells: Vec<(f64, usize)> = (0..grid.len())
        .map(|i| (grid.point(i).iter().map(|x| (x - c) * (x - c)).sum::<f64>(), i))
        .collect();
    cells.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    cells.truncate(m);
    cells.sort_by_key(|&(_, i)| i);
    cells.into_iter().map(|(_, i)| grid.point(i)).collect()
}

/// `φ(p) = exp(-‖p - μ‖² / 2σ²) / (σ (2π)^{k/2})`.
pub fn rbf_feature(p: &[f64], center: &[f64], sigma: f64) -> f64 {
    let d2: f64 = p.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
    let norm = sigma * (2.0 * std::f64::consts::PI).powf(p.len() as f64 / 2.0);
    (-d2 / (2.0 * sigma * sigma)).exp() / norm
}

pub fn design_matrix(points: &[Vec<f64>], centers: &[Vec<f64>], sigma: f64) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), centers.len(), |r, c| rbf_feature(&points[r], &centers[c], sigma))
}

/// Weights plus diagnostics of the solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfFit {
    pub weights: Vec<f64>,
    /// Singular values kept.
    pub rank: usize,
    /// `s_max / s_min` over the kept singular values.
    pub condition: f64,
}

/// Minimum-norm least-squares weights for `Φ w ≈ targets`, through a
/// truncated SVD (cutoff `ε · max(m, M) · s_max`).
pub fn rbf_fit(
    centers: &[Vec<f64>],
    sigma: f64,
    points: &[Vec<f64>],
    targets: &[f64],
) -> Result<RbfFit, ApproxError> {
    if centers.is_empty() || points.is_empty() {
        return Err(ApproxError::Empty);
    }
    if points.len() != targets.len() {
        return Err(ApproxError::Shape(format!("{} points, {} targets", points.len(), targets.len())));
    }
    if !(sigma > 0.0) {
        return Err(ApproxError::BadHyper(format!("rbf width {sigma}")));
    }
    let phi = design_matrix(points, centers, sigma);
    let (m, mm) = phi.shape();
    let (u, s, v_t) = thin_svd(phi);
    let s_max = s.max();
    let cutoff = f64::EPSILON * m.max(mm) as f64 * s_max;
    let kept: Vec<usize> = (0..s.len()).filter(|&i| s[i] > cutoff).collect();
    if kept.is_empty() || !s_max.is_finite() {
        return Err(ApproxError::IllConditioned { rank: 0, condition: f64::INFINITY });
    }
    let s_min = kept.iter().map(|&i| s[i]).fold(f64::INFINITY, f64::min);
    let y = DVector::from_column_slice(targets);
    let mut w = DVector::zeros(mm);
    for &i in &kept {
        let coef = u.column(i).dot(&y) / s[i];
        w += v_t.row(i).transpose() * coef;
    }
    Ok(RbfFit { weights: w.iter().copied().collect(), rank: kept.len(), condition: s_max / s_min })
}

/// Thin SVD `A = U diag(s) Vᵀ` via a Householder QR of the tall orientation
/// followed by an SVD of the square triangular factor. nalgebra's direct
/// SVD of a rectangular matrix can return singular vectors that do not
/// reconstruct `A` when singular values cluster.
fn thin_svd(a: DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    if m >= n {
        let qr = a.qr();
        let svd = qr.r().svd(true, true);
        let u = qr.q() * svd.u.unwrap();
        (u, svd.singular_values, svd.v_t.unwrap())
    } else {
        let qr = a.transpose().qr();
        let svd = qr.r().transpose().svd(true, true);
        let v_t = svd.v_t.unwrap() * qr.q().transpose();
        (svd.u.unwrap(), svd.singular_values, v_t)
    }
}

/// Per-fixation RBF value representation sharing one center set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfModel {
    pub centers: Vec<Vec<f64>>,
    pub sigma: f64,
    /// `weights[λ]` has one entry per center.
    pub weights: Vec<Vec<f64>>,
}

impl RbfModel {
    pub fn zeros(centers: Vec<Vec<f64>>, sigma: f64, fixations: usize) -> Self {
        let m = centers.len();
        Self { centers, sigma, weights: vec![vec![0.0; m]; fixations] }
    }

    pub fn basis_count(&self) -> usize {
        self.centers.len()
    }

    pub fn features(&self, p: &[f64]) -> Vec<f64> {
        self.centers.iter().map(|c| rbf_feature(p, c, self.sigma)).collect()
    }

    pub fn eval(&self, p: &[f64], fixation: usize) -> f64 {
        self.centers
            .iter()
            .zip(&self.weights[fixation])
            .map(|(c, w)| w * rbf_feature(p, c, self.sigma))
            .sum()
    }
}
