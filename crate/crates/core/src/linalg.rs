//! Small dense helpers: Gram products and a cyclic Jacobi eigensolver.

use ndarray::{Array1, Array2, ArrayView2, Axis};

/// `M Mᵀ`.
pub fn gram_rows(m: ArrayView2<f64>) -> Array2<f64> {
    m.dot(&m.t())
}

/// `Mᵀ M`.
pub fn gram_cols(m: ArrayView2<f64>) -> Array2<f64> {
    m.t().dot(&m)
}

/// Squared Euclidean norm of every column.
pub fn column_sq_norms(m: ArrayView2<f64>) -> Array1<f64> {
    m.map_axis(Axis(0), |col| col.iter().map(|v| v * v).sum())
}

/// Eigenvalues of a symmetric matrix, descending, by cyclic Jacobi rotations.
///
/// Meant for matrices up to a few hundred rows. Off-diagonal mass is driven
/// below `1e-14` of the Frobenius norm or 100 sweeps, whichever comes first.
pub fn symmetric_eigenvalues(a: ArrayView2<f64>) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "symmetric_eigenvalues needs a square matrix");
    let mut m = a.to_owned();
    let total: f64 = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    if total == 0.0 {
        return vec![0.0; n];
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-14 * total {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[[k, p]];
                    let akq = m[[k, q]];
                    m[[k, p]] = c * akp - s * akq;
                    m[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[[p, k]];
                    let aqk = m[[q, k]];
                    m[[p, k]] = c * apk - s * aqk;
                    m[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig
}

/// Largest and smallest singular values of a square matrix.
pub fn singular_extremes(a: ArrayView2<f64>) -> (f64, f64) {
    let eig = symmetric_eigenvalues(gram_cols(a).view());
    let top = eig.first().copied().unwrap_or(0.0).max(0.0).sqrt();
    let bottom = eig.last().copied().unwrap_or(0.0).max(0.0).sqrt();
    (top, bottom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn jacobi_on_known_spectrum() {
        let a = array![[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 5.0]];
        let eig = symmetric_eigenvalues(a.view());
        for (got, want) in eig.iter().zip([5.0, 3.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobi_matches_nalgebra_on_random_symmetric() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let n = 30;
        let b = Array2::from_shape_fn((n, n), |_| rng.random::<f64>() - 0.5);
        let a = &b + &b.t();
        let ours = symmetric_eigenvalues(a.view());
        let dm = nalgebra::DMatrix::from_fn(n, n, |i, j| a[[i, j]]);
        let mut theirs: Vec<f64> = dm.symmetric_eigenvalues().iter().copied().collect();
        theirs.sort_by(|x, y| y.total_cmp(x));
        for (x, y) in ours.iter().zip(&theirs) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_extremes_of_diagonal() {
        let a = array![[3.0, 0.0], [0.0, -0.5]];
        let (hi, lo) = singular_extremes(a.view());
        assert!((hi - 3.0).abs() < 1e-12 && (lo - 0.5).abs() < 1e-12);
    }
}
