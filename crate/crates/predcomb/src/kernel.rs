//! Covariance functions over reference-matrix rows.
//!
//! Rows of the reference matrix G live in R^R (one coordinate per reference);
//! the kernels below compare two such rows. The anisotropic variants weight
//! each reference coordinate individually, which is how relevance weights
//! enter GP prediction.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Kernel selection plus its hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// `exp(-||a - b||^2 / sigma_k_sq)`
    IsotropicGaussian { sigma_k_sq: f64 },
    /// `exp(-(a - b)^T diag(weights) (a - b))`
    AnisotropicGaussian { weights: DVector<f64> },
    /// `a^T diag(weights) b`
    LinearAnisotropic { weights: DVector<f64> },
}

impl KernelSpec {
    /// Checks hyperparameter validity against the reference count.
    pub fn validate(&self, n_refs: usize) -> Result<()> {
        match self {
            KernelSpec::IsotropicGaussian { sigma_k_sq } => {
                if !(*sigma_k_sq > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "sigma_k_sq must be > 0, got {sigma_k_sq}"
                    )));
                }
            }
            KernelSpec::AnisotropicGaussian { weights }
            | KernelSpec::LinearAnisotropic { weights } => {
                if weights.len() != n_refs {
                    return Err(Error::DimensionMismatch {
                        expected: n_refs,
                        got: weights.len(),
                    });
                }
                if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
                    return Err(Error::InvalidInput("kernel weights must be >= 0".into()));
                }
            }
        }
        Ok(())
    }

    fn eval(&self, rows_a: &DMatrix<f64>, i: usize, rows_b: &DMatrix<f64>, j: usize) -> f64 {
        let cols = rows_a.ncols();
        match self {
            KernelSpec::IsotropicGaussian { sigma_k_sq } => {
                let mut d2 = 0.0;
                for k in 0..cols {
                    let d = rows_a[(i, k)] - rows_b[(j, k)];
                    d2 += d * d;
                }
                (-d2 / sigma_k_sq).exp()
            }
            KernelSpec::AnisotropicGaussian { weights } => {
                let mut d2 = 0.0;
                for k in 0..cols {
                    let d = rows_a[(i, k)] - rows_b[(j, k)];
                    d2 += weights[k] * d * d;
                }
                (-d2).exp()
            }
            KernelSpec::LinearAnisotropic { weights } => {
                let mut s = 0.0;
                for k in 0..cols {
                    s += weights[k] * rows_a[(i, k)] * rows_b[(j, k)];
                }
                s
            }
        }
    }
}

/// Gram matrix between the rows of `rows_a` and `rows_b`.
///
/// Entry `[i, j]` is `k(rows_a[i, :], rows_b[j, :])`; symmetric when both
/// arguments are the same matrix. Accumulation is in index order so results
/// are bitwise-deterministic.
pub fn gram(rows_a: &DMatrix<f64>, rows_b: &DMatrix<f64>, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    if rows_a.ncols() != rows_b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: rows_a.ncols(),
            got: rows_b.ncols(),
        });
    }
    spec.validate(rows_a.ncols())?;
    let mut out = DMatrix::zeros(rows_a.nrows(), rows_b.nrows());
    for i in 0..rows_a.nrows() {
        for j in 0..rows_b.nrows() {
            out[(i, j)] = spec.eval(rows_a, i, rows_b, j);
        }
    }
    Ok(out)
}

/// Median of squared pairwise row distances; a scale-free default for the
/// Gaussian bandwidth. For large matrices a strided subset of rows is used so
/// the cost stays quadratic in at most 200 rows. Deterministic.
pub fn median_heuristic(rows: &DMatrix<f64>) -> f64 {
    let n = rows.nrows();
    let cap = 200usize;
    let stride = n.div_ceil(cap).max(1);
    let idx: Vec<usize> = (0..n).step_by(stride).collect();
    let mut d2s = Vec::with_capacity(idx.len() * (idx.len().saturating_sub(1)) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in idx.iter().skip(a + 1) {
            let mut d2 = 0.0;
            for k in 0..rows.ncols() {
                let d = rows[(i, k)] - rows[(j, k)];
                d2 += d * d;
            }
            d2s.push(d2);
        }
    }
    if d2s.is_empty() {
        return 1.0;
    }
    d2s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = d2s[d2s.len() / 2];
    if med > 0.0 {
        med
    } else {
        // tie-heavy row sets can have a zero median; fall back to the mean
        let mean = d2s.iter().sum::<f64>() / d2s.len() as f64;
        if mean > 0.0 {
            mean
        } else {
            1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn gaussian_unit_diagonal() {
        let rows = DMatrix::from_row_slice(3, 2, &[0.1, 0.2, -0.3, 0.4, 0.5, -0.6]);
        let k = gram(
            &rows,
            &rows,
            &KernelSpec::IsotropicGaussian { sigma_k_sq: 0.7 },
        )
        .unwrap();
        for i in 0..3 {
            assert_eq!(k[(i, i)], 1.0);
        }
        // symmetry
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(k[(i, j)], k[(j, i)]);
            }
        }
    }

    #[test]
    fn zero_weights_give_all_ones() {
        let rows = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let k = gram(
            &rows,
            &rows,
            &KernelSpec::AnisotropicGaussian {
                weights: DVector::zeros(2),
            },
        )
        .unwrap();
        assert!(k.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn matches_scalar_loop_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0));
        let b = DMatrix::from_fn(4, 2, |_, _| rng.gen_range(-1.0..1.0));
        let w = DVector::from_vec(vec![0.5, 2.0]);
        for spec in [
            KernelSpec::IsotropicGaussian { sigma_k_sq: 1.3 },
            KernelSpec::AnisotropicGaussian { weights: w.clone() },
            KernelSpec::LinearAnisotropic { weights: w.clone() },
        ] {
            let k = gram(&a, &b, &spec).unwrap();
            for i in 0..3 {
                for j in 0..4 {
                    // per-entry scalar oracle
                    let expect = match &spec {
                        KernelSpec::IsotropicGaussian { sigma_k_sq } => {
                            let d0 = a[(i, 0)] - b[(j, 0)];
                            let d1 = a[(i, 1)] - b[(j, 1)];
                            (-(d0 * d0 + d1 * d1) / sigma_k_sq).exp()
                        }
                        KernelSpec::AnisotropicGaussian { weights } => {
                            let d0 = a[(i, 0)] - b[(j, 0)];
                            let d1 = a[(i, 1)] - b[(j, 1)];
                            (-(weights[0] * d0 * d0 + weights[1] * d1 * d1)).exp()
                        }
                        KernelSpec::LinearAnisotropic { weights } => {
                            weights[0] * a[(i, 0)] * b[(j, 0)] + weights[1] * a[(i, 1)] * b[(j, 1)]
                        }
                    };
                    assert!((k[(i, j)] - expect).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = DMatrix::zeros(2, 2);
        let b = DMatrix::zeros(2, 3);
        assert!(matches!(
            gram(&a, &b, &KernelSpec::IsotropicGaussian { sigma_k_sq: 1.0 }),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn median_heuristic_positive() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let rows = DMatrix::from_fn(50, 3, |_, _| rng.gen_range(-1.0..1.0));
        let m = median_heuristic(&rows);
        assert!(m > 0.0 && m.is_finite());
    }
}
