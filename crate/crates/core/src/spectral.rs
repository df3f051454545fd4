//! χ² screening, the leading left singular vector, and closed-form
//! predictions for the post-selection spectrum.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg;
use crate::model::{ArwParams, Strength};
use crate::numerics::{chisq_sf, noncentral_chisq_sf, std_normal_sf, Probability};
use crate::rng::{stream, Purpose};

/// Outcome of thresholding the χ² scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreenResult {
    pub scores: Vec<f64>,
    /// Ascending column indices with `scores[j] >= threshold`.
    pub selected: Vec<usize>,
    pub q: f64,
    pub threshold: f64,
}

/// Leading left singular pair of a matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularPair {
    /// Unit vector; its first non-negligible coordinate is positive.
    pub vector: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Fat,
    Skinny,
}

/// Predicted selection probabilities, selected count and spectral range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralPrediction {
    pub pi0: Probability,
    pub pi1: Probability,
    pub m_q: f64,
    pub q_tilde: f64,
    pub regime: Regime,
    pub eigen_range: (f64, f64),
}

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 2000;
pub const DEFAULT_RANGE_CONSTANT: f64 = 3.0;

/// `Q(j) = (‖x_j‖² − n)/√(2n)` for every column.
pub fn chi2_scores(x: ArrayView2<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    let scale = (2.0 * n).sqrt();
    linalg::column_sq_norms(x)
        .iter()
        .map(|s| (s - n) / scale)
        .collect()
}

/// `√(2 q log p)`.
pub fn screen_threshold(p: usize, q: f64) -> f64 {
    (2.0 * q * (p as f64).ln()).sqrt()
}

/// Keep `j` iff `Q(j) ≥ √(2 q log p)`. Equality counts as selected.
pub fn select_features(scores: &[f64], p: usize, q: f64) -> Result<ScreenResult> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(invalid(format!("screening level q = {q} must be positive")));
    }
    let threshold = screen_threshold(p, q);
    let selected = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= threshold)
        .map(|(j, _)| j)
        .collect();
    Ok(ScreenResult {
        scores: scores.to_vec(),
        selected,
        q,
        threshold,
    })
}

/// Leading left singular pair by power iteration on the smaller Gram matrix.
///
/// With `δ_k` the step between successive unit iterates and
/// `ρ = δ_k/δ_{k−1}`, iteration stops once `δ_k ρ/(1 − ρ) ≤ tol` holds on
/// two consecutive steps; that quantity estimates the remaining angle.
/// When the top two singular values coincide the estimate stalls and
/// `converged` may come back false.
pub fn leading_left_singular(
    m: ArrayView2<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<SingularPair> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(invalid("leading_left_singular needs a nonempty matrix"));
    }
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance {tol} must be positive")));
    }
    let wide = m.nrows() <= m.ncols();
    let gram = if wide {
        linalg::gram_rows(m)
    } else {
        linalg::gram_cols(m)
    };
    let (v, lambda, iterations, converged) = power_iterate(&gram, tol, max_iter)?;
    let (mut u, value) = if wide {
        (v, lambda.max(0.0).sqrt())
    } else {
        let mv = m.dot(&v);
        let norm = mv.dot(&mv).sqrt();
        (mv / norm, norm)
    };
    orient(&mut u);
    Ok(SingularPair {
        vector: u.to_vec(),
        value,
        iterations,
        converged,
    })
}

fn power_iterate(
    g: &Array2<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(Array1<f64>, f64, usize, bool)> {
    let k = g.nrows();
    let diag_max = (0..k)
        .max_by(|&a, &b| g[[a, a]].total_cmp(&g[[b, b]]))
        .expect("nonempty");
    if g[[diag_max, diag_max]] <= 0.0 {
        return Err(invalid("leading_left_singular needs a nonzero matrix"));
    }
    // Start from the Gram column with the largest diagonal, plus a fixed
    // pseudo-random perturbation so the start is never exactly orthogonal
    // to the top eigenvector.
    let mut v = g.column(diag_max).to_owned();
    let scale = v.dot(&v).sqrt();
    let mut rng = stream(0, Purpose::Start);
    v.mapv_inplace(|x| x / scale);
    for x in v.iter_mut() {
        *x += 1e-3 * (rng.random::<f64>() - 0.5) / (k as f64).sqrt();
    }
    normalize(&mut v);

    let mut prev_delta = f64::INFINITY;
    let mut hits = 0;
    for it in 1..=max_iter {
        let mut next = g.dot(&v);
        let norm = next.dot(&next).sqrt();
        if norm == 0.0 {
            return Err(invalid("power iteration collapsed to zero"));
        }
        next.mapv_inplace(|x| x / norm);
        let delta = (&next - &v).mapv(|x| x * x).sum().sqrt();
        v = next;
        let rho = delta / prev_delta;
        let estimate = if rho < 1.0 { delta * rho / (1.0 - rho) } else { f64::INFINITY };
        prev_delta = delta;
        if delta <= 1e-3 * tol || estimate <= tol {
            hits += 1;
            if hits >= 2 {
                return Ok((v.clone(), rayleigh(g, &v), it, true));
            }
        } else {
            hits = 0;
        }
    }
    let lambda = rayleigh(g, &v);
    Ok((v, lambda, max_iter, false))
}

fn rayleigh(g: &Array2<f64>, v: &Array1<f64>) -> f64 {
    v.dot(&g.dot(v))
}

fn normalize(v: &mut Array1<f64>) {
    let norm = v.dot(v).sqrt();
    v.mapv_inplace(|x| x / norm);
}

/// Flip `u` so its first coordinate above `1e-8·max|u|` is positive.
fn orient(u: &mut Array1<f64>) {
    let big = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if let Some(first) = u.iter().find(|v| v.abs() > 1e-8 * big) {
        if *first < 0.0 {
            u.mapv_inplace(|x| -x);
        }
    }
}

/// Column submatrix `X[:, cols]`.
pub fn select_columns(x: ArrayView2<f64>, cols: &[usize]) -> Array2<f64> {
    x.select(Axis(1), cols)
}

/// Optimal screening level for the log-adjusted calibration.
///
/// `4r` when `r < (β − θ/2)/3`, else `(β − θ/2 + r)²/(4r)`.
pub fn q_star(theta: f64, beta: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(invalid(format!("r = {r} must be positive")));
    }
    let d = beta - theta / 2.0;
    Ok(if r < d / 3.0 {
        4.0 * r
    } else {
        (d + r).powi(2) / (4.0 * r)
    })
}

/// The fat/skinny switch point `q̃(β, θ, r)`.
pub fn q_tilde(theta: f64, beta: f64, r: f64) -> f64 {
    if beta < 1.0 - theta {
        (1.0 - theta).max(((1.0 - beta - theta).sqrt() + r.sqrt()).powi(2))
    } else {
        1.0 - theta
    }
}

/// Shifted-normal approximation of the selection probabilities,
/// `π0 ≈ Φ̄(√(2q log p))` and `π1 ≈ Φ̄((√q − √r)√(2 log p))`.
pub fn approximate_selection_probabilities(p: usize, q: f64, r: f64) -> (Probability, Probability) {
    let lp = (p as f64).ln();
    (
        std_normal_sf((2.0 * q * lp).sqrt()),
        std_normal_sf((q.sqrt() - r.sqrt()) * (2.0 * lp).sqrt()),
    )
}

/// Post-selection predictions for the log-adjusted calibration with the
/// default range constant.
pub fn predict_selection(params: &ArwParams, q: f64) -> Result<SpectralPrediction> {
    predict_selection_with(params, q, DEFAULT_RANGE_CONSTANT)
}

/// As [`predict_selection`] with range constant `c`.
///
/// `π0 = P(χ²_n > n + 2√(q n log p))`, `π1` is the same tail of χ²_n with
/// noncentrality `n τ²`, and the trace-weighted count m* is replaced by m.
pub fn predict_selection_with(params: &ArwParams, q: f64, c: f64) -> Result<SpectralPrediction> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(invalid(format!("screening level q = {q} must be positive")));
    }
    let r = match params.strength {
        Strength::LogAdjusted { r } => r,
        _ => return Err(invalid("predict_selection needs the log-adjusted (r) calibration")),
    };
    let cal = params.calibrate()?;
    let (n, p) = (cal.n as f64, params.p as f64);
    let lp = p.ln();
    let cut = n + 2.0 * (q * n * lp).sqrt();
    let dof = cal.n as u32;
    let pi0 = chisq_sf(cut, dof)?;
    let pi1 = noncentral_chisq_sf(cut, dof, n * cal.tau * cal.tau)?;
    let s = p * cal.epsilon;
    let m_q = (p - s) * pi0.value() + s * pi1.value();
    let q_tilde = q_tilde(params.theta, params.beta, r);
    let regime = if q < q_tilde { Regime::Fat } else { Regime::Skinny };
    let half = c * (n * m_q * lp).sqrt();
    let centre = match regime {
        Regime::Fat => m_q,
        Regime::Skinny => n,
    };
    Ok(SpectralPrediction {
        pi0,
        pi1,
        m_q,
        q_tilde,
        regime,
        eigen_range: (centre - half, centre + half),
    })
}
