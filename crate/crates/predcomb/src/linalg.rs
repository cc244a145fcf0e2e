//! Shared dense linear-algebra helpers: Cholesky-first PD solves with
//! symmetric-eigen fallbacks, and the power method used by the denoiser.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

/// Floor applied to eigenvalues when rebuilding a square-root factor from a
/// matrix whose Cholesky decomposition failed.
pub const EIGEN_FLOOR: f64 = 1e-9;

/// Solves `A x = b` for symmetric PD `A` via Cholesky.
pub fn chol_solve_vec(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    Cholesky::new(a.clone()).map(|ch| ch.solve(b))
}

/// Inverse of a symmetric PSD matrix: Cholesky when possible, otherwise a
/// truncated eigen pseudo-inverse (eigenvalues below `1e-10 * lambda_max`
/// are dropped rather than amplified).
pub fn psd_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = Cholesky::new(a.clone()) {
        return ch.inverse();
    }
    let eig = SymmetricEigen::new(a.clone());
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = 1e-10 * lmax.max(1e-300);
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let l = eig.eigenvalues[k];
        if l > cutoff {
            let v = eig.eigenvectors.column(k);
            out += (&v * v.transpose()) / l;
        }
    }
    out
}

/// Square-root factor `F` with `F F^T = T` (up to the eigenvalue floor).
/// Cholesky when `T` is numerically PD; otherwise an eigen decomposition with
/// eigenvalues floored at [`EIGEN_FLOOR`], rebuilt as `E diag(lambda)^(1/2)`.
pub fn sqrt_factor_psd(t: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = Cholesky::new(t.clone()) {
        return ch.l();
    }
    let eig = SymmetricEigen::new(t.clone());
    let mut e = eig.eigenvectors;
    for k in 0..e.ncols() {
        let l = eig.eigenvalues[k].max(EIGEN_FLOOR);
        let s = l.sqrt();
        e.column_mut(k).scale_mut(s);
    }
    e
}

/// Log-determinant of a symmetric PD matrix via Cholesky.
pub fn log_det_pd(a: &DMatrix<f64>) -> Option<f64> {
    Cholesky::new(a.clone()).map(|ch| {
        let l = ch.l();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    })
}

/// Result of a power-method run.
#[derive(Debug, Clone)]
pub struct PowerResult {
    pub vector: DVector<f64>,
    // value/converged are diagnostics; only tests consume them today.
    #[allow(dead_code)]
    pub value: f64,
    #[allow(dead_code)]
    pub converged: bool,
    /// Set when the estimated spectral gap is below 1e-12, i.e. the dominant
    /// eigenvector is not well determined.
    pub gap_small: bool,
}

/// Power iteration on a symmetric PSD matrix, started from `start`.
/// Convergence is measured by the cosine between successive iterates.
pub fn power_iteration(
    m: &DMatrix<f64>,
    start: &DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> PowerResult {
    let n = m.nrows();
    let mut v = start.clone();
    let norm = v.norm();
    if norm <= 0.0 {
        v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    } else {
        v /= norm;
    }
    let mut value = 0.0;
    let mut converged = false;
    for _ in 0..max_iters {
        let mut w = m * &v;
        let wn = w.norm();
        if wn <= 1e-300 {
            // start vector in the null space; restart from a fixed direction
            w = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        } else {
            w /= wn;
        }
        let cosine = v.dot(&w).abs();
        value = wn;
        v = w;
        if 1.0 - cosine <= tol {
            converged = true;
            break;
        }
    }
    // cheap deflated probe for the second eigenvalue
    let gap_small = {
        let mut u = DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
        u -= &v * v.dot(&u);
        let un = u.norm();
        if un <= 1e-12 {
            false
        } else {
            u /= un;
            let mut second = 0.0;
            for _ in 0..50 {
                let mut w = m * &u;
                w -= &v * v.dot(&w);
                let wn = w.norm();
                if wn <= 1e-300 {
                    second = 0.0;
                    break;
                }
                second = wn;
                u = w / wn;
            }
            (value - second) < 1e-12 * value.max(1.0)
        }
    };
    PowerResult {
        vector: v,
        value,
        converged,
        gap_small,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_psd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &b * b.transpose()
    }

    #[test]
    fn power_iteration_matches_dense_eigen() {
        for seed in 0..12u64 {
            let n = 5 + (seed as usize % 46);
            let m = random_psd(n, seed);
            let eig = SymmetricEigen::new(m.clone());
            let (mut top, mut top_val) = (0, f64::MIN);
            let mut second_val = f64::MIN;
            for k in 0..n {
                let l = eig.eigenvalues[k];
                if l > top_val {
                    second_val = top_val;
                    top_val = l;
                    top = k;
                } else if l > second_val {
                    second_val = l;
                }
            }
            if second_val / top_val > 0.99 {
                continue; // gap too small for the property to apply
            }
            let start = DVector::from_element(n, 1.0);
            let res = power_iteration(&m, &start, 1e-14, 10_000);
            assert!(res.converged, "seed {seed}: power iteration did not converge");
            let cos = res.vector.dot(&eig.eigenvectors.column(top).clone_owned()).abs();
            assert!(cos >= 1.0 - 1e-6, "seed {seed}: cos {cos}");
            assert!((res.value - top_val).abs() <= 1e-6 * top_val);
        }
    }

    #[test]
    fn sqrt_factor_reconstructs() {
        let t = random_psd(8, 99);
        let f = sqrt_factor_psd(&t);
        let back = &f * f.transpose();
        assert!((&back - &t).abs().max() <= 1e-8);
    }

    #[test]
    fn sqrt_factor_singular_fallback() {
        // rank-deficient PSD matrix: Cholesky fails, eigen floor path used
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let t = &v * v.transpose();
        let f = sqrt_factor_psd(&t);
        let back = &f * f.transpose();
        assert!((&back - &t).abs().max() <= 1e-6);
    }

    #[test]
    fn psd_inverse_matches_explicit() {
        let mut a = random_psd(6, 5);
        for i in 0..6 {
            a[(i, i)] += 1.0;
        }
        let inv = psd_inverse(&a);
        let explicit = a.clone().try_inverse().unwrap();
        assert!((&inv - &explicit).abs().max() <= 1e-9);
    }
}
