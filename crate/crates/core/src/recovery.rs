//! Support estimators for the signal vector μ.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::clusterers::{self, sgn, Solver};
use crate::error::Result;
use crate::spectral::{chi2_scores, select_features};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryMethod {
    SaStar,
    IfStar,
    SaN,
    IfQ,
    SignedIf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    /// Ascending.
    pub support: Vec<usize>,
    pub method: RecoveryMethod,
    /// Nonzero exactly on `support`.
    pub signs: Option<Vec<i8>>,
    /// Labels the estimate was built from, when it used any.
    pub labels: Option<Vec<i8>>,
}

/// `√(2 log p)`.
pub fn universal_threshold(p: usize) -> f64 {
    (2.0 * (p as f64).ln()).sqrt()
}

/// `y = n^{−1/2} Xᵀ ℓ̂`.
pub fn project_labels(x: ArrayView2<f64>, labels: &[i8]) -> Vec<f64> {
    let scale = 1.0 / (x.nrows() as f64).sqrt();
    x.columns()
        .into_iter()
        .map(|col| scale * col.iter().zip(labels).map(|(v, &l)| v * f64::from(l)).sum::<f64>())
        .collect()
}

/// `{j : |y_j| ≥ √(2 log p)}` with `y = n^{−1/2} Xᵀ ℓ̂`.
pub fn threshold_projection(x: ArrayView2<f64>, labels: &[i8]) -> Vec<usize> {
    let t = universal_threshold(x.ncols());
    project_labels(x, labels)
        .iter()
        .enumerate()
        .filter(|(_, y)| y.abs() >= t)
        .map(|(j, _)| j)
        .collect()
}

/// Simple-aggregation labels, then the universal threshold.
pub fn recover_sa_star(x: ArrayView2<f64>) -> RecoveryResult {
    let labels = clusterers::simple_aggregation(x).labels;
    RecoveryResult {
        support: threshold_projection(x, &labels),
        method: RecoveryMethod::SaStar,
        signs: None,
        labels: Some(labels),
    }
}

/// Classical-PCA labels, then the universal threshold.
pub fn recover_if_star(x: ArrayView2<f64>) -> Result<RecoveryResult> {
    let labels = clusterers::classical_pca(x)?.labels;
    Ok(RecoveryResult {
        support: threshold_projection(x, &labels),
        method: RecoveryMethod::IfStar,
        signs: None,
        labels: Some(labels),
    })
}

/// The size-N set maximizing `N^{−1/2} ‖Σ_{j∈S} x_j‖₁`.
pub fn recover_sa_n(x: ArrayView2<f64>, n_select: usize, solver: Solver) -> Result<RecoveryResult> {
    let res = clusterers::sparse_aggregation(x, n_select, solver)?;
    Ok(RecoveryResult {
        support: res.selected.unwrap_or_default(),
        method: RecoveryMethod::SaN,
        signs: None,
        labels: Some(res.labels),
    })
}

/// `{j : Q(j) ≥ √(2 q log p)}`.
pub fn recover_if_q(x: ArrayView2<f64>, q: f64) -> Result<RecoveryResult> {
    let screen = select_features(&chi2_scores(x), x.ncols(), q)?;
    Ok(RecoveryResult {
        support: screen.selected,
        method: RecoveryMethod::IfQ,
        signs: None,
        labels: None,
    })
}

/// Signed support from classical-PCA labels: `sgn(ŷ_j)·1{|ŷ_j| > 2√(log p)}`
/// with `ŷ = n^{−1/2} Xᵀ ℓ̂`.
pub fn recover_signed_pca(x: ArrayView2<f64>) -> Result<RecoveryResult> {
    let labels = clusterers::classical_pca(x)?.labels;
    let t = 2.0 * (x.ncols() as f64).ln().sqrt();
    let signs: Vec<i8> = project_labels(x, &labels)
        .iter()
        .map(|&y| if y.abs() > t { sgn(y) } else { 0 })
        .collect();
    let support = signs
        .iter()
        .enumerate()
        .filter(|(_, &s)| s != 0)
        .map(|(j, _)| j)
        .collect();
    Ok(RecoveryResult {
        support,
        method: RecoveryMethod::SignedIf,
        signs: Some(signs),
        labels: Some(labels),
    })
}
