//! Gaussian-process regression with a squared-exponential ARD kernel.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ApproxError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprHyper {
    pub sigma_f: f64,
    /// One length scale per input dimension.
    pub lengths: Vec<f64>,
    pub sigma_n: f64,
}

impl GprHyper {
    pub fn isotropic(sigma_f: f64, length: f64, sigma_n: f64, dims: usize) -> Self {
        Self { sigma_f, lengths: vec![length; dims], sigma_n }
    }

    /// Unit signal and length, noise 0.1.
    pub fn unit(dims: usize) -> Self {
        Self::isotropic(1.0, 1.0, 0.1, dims)
    }

    fn validate(&self, dims: usize) -> Result<(), ApproxError> {
        let ok = self.sigma_f > 0.0
            && self.sigma_n >= 0.0
            && self.lengths.len() == dims
            && self.lengths.iter().all(|&l| l > 0.0 && l.is_finite());
        if !ok || !self.sigma_f.is_finite() || !self.sigma_n.is_finite() {
            return Err(ApproxError::BadHyper(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let s: f64 = a
            .iter()
            .zip(b)
            .zip(&self.lengths)
            .map(|((x, y), l)| (x - y) * (x - y) / (l * l))
            .sum();
        self.sigma_f * self.sigma_f * (-0.5 * s).exp()
    }
}

/// A fitted regression: training set, hyperparameters and `(K + σ_n² I)^{-1} y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprModel {
    pub points: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub hyper: GprHyper,
    pub alpha: Vec<f64>,
    pub log_marginal_likelihood: f64,
}

fn factor(points: &[Vec<f64>], hyper: &GprHyper) -> Option<Cholesky<f64, Dyn>> {
    let n = points.len();
    let noise = hyper.sigma_n * hyper.sigma_n;
    let k = DMatrix::from_fn(n, n, |i, j| {
        hyper.kernel(&points[i], &points[j]) + if i == j { noise } else { 0.0 }
    });
    Cholesky::new(k)
}

fn lml(chol: &Cholesky<f64, Dyn>, y: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    -0.5 * y.dot(alpha) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

fn check_data(points: &[Vec<f64>], targets: &[f64]) -> Result<usize, ApproxError> {
    if points.is_empty() {
        return Err(ApproxError::Empty);
    }
    if points.len() != targets.len() {
        return Err(ApproxError::Shape(format!("{} points, {} targets", points.len(), targets.len())));
    }
    let dims = points[0].len();
    if points.iter().any(|p| p.len() != dims) {
        return Err(ApproxError::Shape("ragged points".into()));
    }
    Ok(dims)
}

pub fn gpr_fit(points: &[Vec<f64>], targets: &[f64], hyper: &GprHyper) -> Result<GprModel, ApproxError> {
    let dims = check_data(points, targets)?;
    hyper.validate(dims)?;
    let chol = factor(points, hyper).ok_or(ApproxError::NotPositiveDefinite)?;
    let y = DVector::from_column_slice(targets);
    let alpha = chol.solve(&y);
    Ok(GprModel {
        points: points.to_vec(),
        targets: targets.to_vec(),
        hyper: hyper.clone(),
        log_marginal_likelihood: lml(&chol, &y, &alpha),
        alpha: alpha.iter().copied().collect(),
    })
}

impl GprModel {
    /// Predictive mean `k_*ᵀ (K + σ_n² I)^{-1} y`.
    pub fn predict(&self, p: &[f64]) -> f64 {
        self.points.iter().zip(&self.alpha).map(|(x, a)| a * self.hyper.kernel(p, x)).sum()
    }
}

/// Log marginal likelihood of `targets` under `hyper`, or `None` when the
/// kernel matrix is not positive definite.
pub fn log_marginal_likelihood(points: &[Vec<f64>], targets: &[f64], hyper: &GprHyper) -> Option<f64> {
    let chol = factor(points, hyper)?;
    let y = DVector::from_column_slice(targets);
    let alpha = chol.solve(&y);
    Some(lml(&chol, &y, &alpha))
}

/// Candidate values for each hyperparameter; the search is over their
/// Cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArdGrid {
    pub sigma_f: Vec<f64>,
    /// Candidates per input dimension.
    pub lengths: Vec<Vec<f64>>,
    pub sigma_n: Vec<f64>,
}

/// `count` log-spaced values over `[lo, hi]`.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

impl ArdGrid {
    /// Five log-spaced values over `[0.1, 10]` for every hyperparameter.
    pub fn standard(dims: usize) -> Self {
        let v = log_space(0.1, 10.0, 5);
        Self { sigma_f: v.clone(), lengths: vec![v.clone(); dims], sigma_n: v }
    }

    pub fn candidates(&self) -> Vec<GprHyper> {
        let mut out = Vec::new();
        let mut lengths: Vec<Vec<f64>> = vec![Vec::new()];
        for opts in &self.lengths {
            lengths = lengths
                .iter()
                .flat_map(|prefix| {
                    opts.iter().map(move |&l| {
                        let mut v = prefix.clone();
                        v.push(l);
                        v
                    })
                })
                .collect();
        }
        for &sf in &self.sigma_f {
            for ls in &lengths {
                for &sn in &self.sigma_n {
                    out.push(GprHyper { sigma_f: sf, lengths: ls.clone(), sigma_n: sn });
                }
            }
        }
        out
    }
}

/// Exhaustive search of `grid` for the largest log marginal likelihood; ties
/// go to the earliest candidate in product order.
pub fn gpr_fit_ard(points: &[Vec<f64>], targets: &[f64], grid: &ArdGrid) -> Result<GprHyper, ApproxError> {
    let dims = check_data(points, targets)?;
    if grid.lengths.len() != dims {
        return Err(ApproxError::Shape(format!("{} length grids for {dims} dimensions", grid.lengths.len())));
    }
    let cands = grid.candidates();
    if cands.is_empty() {
        return Err(ApproxError::Empty);
    }
    for c in &cands {
        c.validate(dims)?;
    }
    let scores: Vec<Option<f64>> =
        cands.par_iter().map(|h| log_marginal_likelihood(points, targets, h)).collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(s) = *s {
            if s.is_finite() && best.map_or(true, |(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    best.map(|(i, _)| cands[i].clone()).ok_or(ApproxError::NotPositiveDefinite)
}
