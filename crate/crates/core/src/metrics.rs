//! Losses for clustering, support recovery and testing, plus the cosine
//! diagnostic.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Per-replication losses. Fields a method does not produce are `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub clustering_hamming: Option<f64>,
    pub recovery_hamming: Option<f64>,
    pub signed_recovery_hamming: Option<f64>,
    pub cosine: Option<f64>,
    pub test_error_components: Option<(f64, f64)>,
}

/// Mismatch rate minimized over the identity and the global flip.
pub fn hamming_clustering(est: &[i8], truth: &[i8]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            what: "label vectors",
            expected: truth.len(),
            got: est.len(),
        });
    }
    if est.is_empty() {
        return Err(invalid("label vectors are empty"));
    }
    let diff = est.iter().zip(truth).filter(|(a, b)| a != b).count();
    let n = est.len();
    Ok(diff.min(n - diff) as f64 / n as f64)
}

/// Whether recovery losses divide by the calibrated `pε` or by the realized
/// support size.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryNorm {
    #[default]
    Calibrated,
    Realized,
}

/// `|Ŝ Δ S| / expected_signals`. Both index sets must be ascending.
pub fn hamming_recovery(est: &[usize], truth: &[usize], expected_signals: f64) -> Result<f64> {
    if !(expected_signals > 0.0) {
        return Err(invalid(format!(
            "expected signal count {expected_signals} must be positive"
        )));
    }
    Ok(symmetric_difference(est, truth) as f64 / expected_signals)
}

/// [`hamming_recovery`] with the normalization chosen by `norm`.
pub fn hamming_recovery_with(
    est: &[usize],
    truth: &[usize],
    expected_signals: f64,
    norm: RecoveryNorm,
) -> Result<f64> {
    match norm {
        RecoveryNorm::Calibrated => hamming_recovery(est, truth, expected_signals),
        RecoveryNorm::Realized => hamming_recovery(est, truth, truth.len().max(1) as f64),
    }
}

fn symmetric_difference(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                count += 1;
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                count += 1;
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    count + (a.len() - i) + (b.len() - j)
}

/// Sign-mismatch count `#{j : sgn μ̂(j) ≠ sgn μ(j)}` over `expected_signals`,
/// minimized over a global flip of `est`.
pub fn hamming_recovery_signed(est: &[i8], truth: &[f64], expected_signals: f64) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            what: "sign vectors",
            expected: truth.len(),
            got: est.len(),
        });
    }
    if !(expected_signals > 0.0) {
        return Err(invalid(format!(
            "expected signal count {expected_signals} must be positive"
        )));
    }
    let sign = |v: f64| -> i8 {
        if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            0
        }
    };
    let (mut same, mut flipped) = (0usize, 0usize);
    for (&e, &t) in est.iter().zip(truth) {
        let t = sign(t);
        same += usize::from(e != t);
        flipped += usize::from(-e != t);
    }
    Ok(same.min(flipped) as f64 / expected_signals)
}

/// `|⟨x/‖x‖, y/‖y‖⟩|`.
pub fn cos_angle(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "cosine operands",
            expected: x.len(),
            got: y.len(),
        });
    }
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(invalid("cosine of a zero vector is undefined"));
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    Ok((dot / (nx * ny)).abs().min(1.0))
}

/// A proportion with its Wilson 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

/// Wilson score interval at z = 1.96.
pub fn wilson(successes: usize, trials: usize) -> Proportion {
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let phat = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (phat + z * z / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    Proportion {
        estimate: phat,
        low: (centre - half).clamp(0.0, phat),
        high: (centre + half).clamp(phat, 1.0),
        count: trials,
    }
}

/// Type I rate, type II rate and their sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestError {
    pub type1: Proportion,
    pub type2: Proportion,
    pub sum: f64,
}

/// Fraction rejecting under the null plus fraction accepting under the
/// alternative. `true` means reject.
pub fn empirical_test_error(null_decisions: &[bool], alt_decisions: &[bool]) -> Result<TestError> {
    if null_decisions.is_empty() || alt_decisions.is_empty() {
        return Err(invalid("test error needs nonempty null and alternative batches"));
    }
    let type1 = wilson(null_decisions.iter().filter(|&&d| d).count(), null_decisions.len());
    let type2 = wilson(alt_decisions.iter().filter(|&&d| !d).count(), alt_decisions.len());
    Ok(TestError {
        type1,
        type2,
        sum: type1.estimate + type2.estimate,
    })
}
