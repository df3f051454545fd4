//! Global tests of `H0: X = Z` against the rare/weak alternative.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::clusterers::{best_subset, Solver};
use crate::error::{invalid, Result};
use crate::linalg;
use crate::numerics::chisq_sf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    AggChi2,
    SparseAggL1,
    HigherCriticism,
}

/// `reject` holds exactly when `statistic >= threshold`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    #[serde(with = "crate::serde_float")]
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
    pub method: TestMethod,
}

impl TestOutcome {
    fn new(statistic: f64, threshold: f64, method: TestMethod) -> Self {
        Self {
            statistic,
            threshold,
            reject: statistic >= threshold,
            method,
        }
    }
}

/// `(p‖x̄‖² − n)/√(2n)` against `2√(2 log p)`, with `x̄ = p^{−1} Σ_j x_j`.
pub fn test_simple_agg(x: ArrayView2<f64>) -> TestOutcome {
    let (n, p) = (x.nrows() as f64, x.ncols() as f64);
    let sum_sq: f64 = x.rows().into_iter().map(|r| r.sum().powi(2)).sum();
    // p‖x̄‖² = ‖Σ_j x_j‖² / p.
    let statistic = (sum_sq / p - n) / (2.0 * n).sqrt();
    TestOutcome::new(statistic, 2.0 * (2.0 * p.ln()).sqrt(), TestMethod::AggChi2)
}

/// `√(2/π)·n + √(2n(N + 2) log p)`.
pub fn sparse_agg_threshold(n: usize, p: usize, n_select: usize) -> f64 {
    let n = n as f64;
    (2.0 / std::f64::consts::PI).sqrt() * n
        + (2.0 * n * (n_select as f64 + 2.0) * (p as f64).ln()).sqrt()
}

/// `N^{−1/2} max_{|S|=N} ‖Σ_{j∈S} x_j‖₁` against [`sparse_agg_threshold`].
pub fn test_sparse_agg(x: ArrayView2<f64>, n_select: usize, solver: Solver) -> Result<TestOutcome> {
    let sol = best_subset(x, n_select, false, solver)?;
    Ok(TestOutcome::new(
        sol.objective / (n_select as f64).sqrt(),
        sparse_agg_threshold(x.nrows(), x.ncols(), n_select),
        TestMethod::SparseAggL1,
    ))
}

/// `2√(2 log log p)`.
pub fn hc_threshold(p: usize) -> f64 {
    2.0 * (2.0 * (p as f64).ln().ln()).sqrt()
}

/// Column P-values `π_j = P(χ²_n > ‖x_j‖²)`.
pub fn column_pvalues(x: ArrayView2<f64>) -> Result<Vec<f64>> {
    let dof = u32::try_from(x.nrows()).map_err(|_| invalid("too many rows"))?;
    linalg::column_sq_norms(x)
        .iter()
        .map(|&s| chisq_sf(s, dof).map(|v| v.value()))
        .collect()
}

/// Higher Criticism of the column P-values against `2√(2 log log p)`.
pub fn higher_criticism(x: ArrayView2<f64>) -> Result<TestOutcome> {
    if x.ncols() < 8 {
        return Err(invalid("Higher Criticism needs p >= 8"));
    }
    higher_criticism_from_pvalues(&column_pvalues(x)?)
}

/// `max_{i ≤ ⌊p/2⌋} √p (i/p − π₍ᵢ₎)/√(π₍ᵢ₎(1 − π₍ᵢ₎))`.
///
/// Terms with `π₍ᵢ₎ ∈ {0, 1}` are skipped. With every term skipped the
/// statistic is `−∞`.
pub fn higher_criticism_from_pvalues(pvalues: &[f64]) -> Result<TestOutcome> {
    let p = pvalues.len();
    if p < 8 {
        return Err(invalid("Higher Criticism needs p >= 8"));
    }
    if let Some(bad) = pvalues.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(invalid(format!("p-value {bad} outside [0, 1]")));
    }
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pf = p as f64;
    let root = pf.sqrt();
    let statistic = sorted[..p / 2]
        .iter()
        .enumerate()
        .filter(|(_, &pi)| pi > 0.0 && pi < 1.0)
        .map(|(i, &pi)| root * ((i + 1) as f64 / pf - pi) / (pi * (1.0 - pi)).sqrt())
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(TestOutcome::new(statistic, hc_threshold(p), TestMethod::HigherCriticism))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_dataset, gen_white_noise, ArwParams, NoiseSpec, Strength};
    use ndarray::{Array2, Axis};

    #[test]
    fn zero_matrix() {
        let x = Array2::<f64>::zeros((50, 100));
        let t = test_simple_agg(x.view());
        assert_eq!(t.statistic, -(25.0f64).sqrt());
        assert!(!t.reject);
        let s = test_sparse_agg(x.view(), 2, Solver::default()).unwrap();
        assert_eq!(s.statistic, 0.0);
        assert!(!s.reject);
    }

    #[test]
    fn simple_agg_depends_only_on_row_sums() {
        let z = gen_white_noise(30, 40, 2);
        let mut moved = z.clone();
        // Shift mass between columns without changing any row sum.
        for i in 0..30 {
            let d = (i as f64).sin();
            moved[[i, 0]] += d;
            moved[[i, 1]] -= d;
        }
        let a = test_simple_agg(z.view()).statistic;
        let b = test_simple_agg(moved.view()).statistic;
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn simple_agg_detects_strong_signal() {
        let params = ArwParams::new(2000, 0.5, 0.3, Strength::Fixed { tau: 0.5 });
        let ds = gen_dataset(&params, &NoiseSpec::White, 1).unwrap();
        assert!(test_simple_agg(ds.x.view()).reject);
    }

    #[test]
    fn sparse_agg_noiseless_statistic() {
        let params = ArwParams::new(60, 0.8, 0.5, Strength::Fixed { tau: 2.0 });
        let ds = gen_dataset(&params, &NoiseSpec::Noiseless, 2).unwrap();
        let n_sel = ds.support.as_ref().unwrap().len();
        let t = test_sparse_agg(ds.x.view(), n_sel, Solver::default()).unwrap();
        let n = ds.n() as f64;
        let want = n * 2.0 * (n_sel as f64).sqrt();
        assert!((t.statistic - want).abs() < 1e-9 * want);
        assert!(t.statistic >= want / 2.0);
        assert!(t.reject);
    }

    #[test]
    fn sparse_agg_null_is_conservative() {
        let mut rejections = 0;
        for seed in 0..200 {
            let z = gen_white_noise(10, 14, seed);
            if test_sparse_agg(z.view(), 3, Solver::Exact { budget: 1_000_000 }).unwrap().reject {
                rejections += 1;
            }
        }
        assert!(rejections <= 10);
    }

    #[test]
    fn hc_uniform_plugin_sequence() {
        let p = 1000;
        let pv: Vec<f64> = (1..=p).map(|i| i as f64 / (p + 1) as f64).collect();
        let t = higher_criticism_from_pvalues(&pv).unwrap();
        // HC_i = √p·i/(p(p+1))/√(π(1−π)) with π = i/(p+1); maximized at i = p/2.
        let pf = p as f64;
        let want = (1..=p / 2)
            .map(|i| {
                let pi = i as f64 / (pf + 1.0);
                pf.sqrt() * (i as f64 / pf - pi) / (pi * (1.0 - pi)).sqrt()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((t.statistic - want).abs() < 1e-12);
        assert!(t.statistic > 0.0 && t.statistic < 0.1);
        assert!(!t.reject);
    }

    #[test]
    fn hc_skips_degenerate_pvalues() {
        let mut pv = vec![0.0; 3];
        pv.extend(vec![1.0; 7]);
        let t = higher_criticism_from_pvalues(&pv).unwrap();
        assert_eq!(t.statistic, f64::NEG_INFINITY);
        assert!(!t.reject);
        assert!(higher_criticism_from_pvalues(&[0.5; 4]).is_err());
        assert!(higher_criticism_from_pvalues(&[1.5; 10]).is_err());
    }

    #[test]
    fn statistics_are_row_permutation_invariant() {
        let params = ArwParams::alpha(400, 0.6, 0.5, 0.1);
        let ds = gen_dataset(&params, &NoiseSpec::White, 4).unwrap();
        let order: Vec<usize> = (0..ds.n()).rev().collect();
        let perm = ds.x.select(Axis(0), &order);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(1.0);
        assert!(close(test_simple_agg(ds.x.view()).statistic, test_simple_agg(perm.view()).statistic));
        assert!(close(
            higher_criticism(ds.x.view()).unwrap().statistic,
            higher_criticism(perm.view()).unwrap().statistic
        ));
        let s = Solver::Greedy { restarts: 2, seed: 0 };
        assert!(close(
            test_sparse_agg(ds.x.view(), 1, s).unwrap().statistic,
            test_sparse_agg(perm.view(), 1, s).unwrap().statistic
        ));
    }

    proptest::proptest! {
        #[test]
        fn hc_depends_only_on_sorted_pvalues(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng, seq::SliceRandom};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pv: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
            let mut shuffled = pv.clone();
            shuffled.shuffle(&mut rng);
            let a = higher_criticism_from_pvalues(&pv).unwrap().statistic;
            let b = higher_criticism_from_pvalues(&shuffled).unwrap().statistic;
            proptest::prop_assert_eq!(a, b);
        }
    }
}
