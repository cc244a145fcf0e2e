//! Sample-evaluated predictors and their projection onto the model manifold
//! of centered, unit-norm vectors.
//!
//! A predictor is represented by its evaluations on the N test points. Before
//! any relevance assessment the vector is centered and scaled to unit norm,
//! which makes the assessment invariant to positive affine transforms of the
//! raw predictor. The original mean and (population) standard deviation are
//! kept in a [`ScaleShift`] so the denoised result can be mapped back to the
//! original scale.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Variance floor below which a vector counts as constant.
pub const EPS_VAR: f64 = 1e-12;

/// A predictor's evaluations on N test points.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationVector {
    values: DVector<f64>,
}

impl EvaluationVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "evaluation vector needs at least 2 entries, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite entry {bad}")));
        }
        Ok(Self {
            values: DVector::from_vec(values),
        })
    }

    pub fn from_vector(values: DVector<f64>) -> Result<Self> {
        Self::new(values.as_slice().to_vec())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.values
    }
}

/// A centered, unit-norm evaluation vector (a point on the model manifold).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPredictor {
    values: DVector<f64>,
}

impl NormalizedPredictor {
    /// Validates centering and unit norm before wrapping.
    pub fn new(values: DVector<f64>) -> Result<Self> {
        let n = values.len() as f64;
        let sum: f64 = values.iter().sum();
        if sum.abs() > 1e-9 * n {
            return Err(Error::InvalidInput(format!("not centered: sum = {sum}")));
        }
        let norm = values.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("not unit norm: {norm}")));
        }
        Ok(Self { values })
    }

    /// Centers and rescales an arbitrary vector onto the manifold.
    pub fn project(raw: &DVector<f64>) -> Result<Self> {
        let mean = raw.mean();
        let centered = raw.map(|v| v - mean);
        let norm = centered.norm();
        if norm * norm <= EPS_VAR * raw.len() as f64 {
            return Err(Error::ZeroVariance);
        }
        Ok(Self {
            values: centered / norm,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }
}

/// Stored mean and population standard deviation of the raw target, used for
/// inverse normalization after denoising.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleShift {
    pub mean: f64,
    pub std: f64,
}

impl ScaleShift {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0) {
            return Err(Error::InvalidInput(format!("std must be > 0, got {std}")));
        }
        Ok(Self { mean, std })
    }

    /// Identity transform for predictors that enter already normalized.
    pub fn identity(n: usize) -> Self {
        Self {
            mean: 0.0,
            std: 1.0 / (n as f64).sqrt(),
        }
    }
}

/// Subtracts the mean from every entry.
pub fn center(v: &EvaluationVector) -> DVector<f64> {
    let mean = v.as_vector().mean();
    v.as_vector().map(|x| x - mean)
}

/// Projects a raw evaluation vector onto the manifold, recording the mean and
/// population std so the projection can be undone.
///
/// Fails with [`Error::ZeroVariance`] for (numerically) constant vectors.
pub fn center_normalize(v: &EvaluationVector) -> Result<(NormalizedPredictor, ScaleShift)> {
    let n = v.len() as f64;
    let mean = v.as_vector().mean();
    let centered = v.as_vector().map(|x| x - mean);
    let norm = centered.norm();
    // population variance = norm^2 / N
    if norm * norm / n <= EPS_VAR {
        return Err(Error::ZeroVariance);
    }
    let std = norm / n.sqrt();
    Ok((
        NormalizedPredictor {
            values: centered / norm,
        },
        ScaleShift { mean, std },
    ))
}

/// Undoes [`center_normalize`]: rescales by `std * sqrt(N)` and restores the
/// mean. A positive affine map, so orderings are preserved.
pub fn inverse_normalize(p: &NormalizedPredictor, s: &ScaleShift) -> EvaluationVector {
    let n = p.len() as f64;
    let scale = s.std * n.sqrt();
    EvaluationVector {
        values: p.values().map(|x| x * scale + s.mean),
    }
}

/// Normalized reference predictors assembled column-wise into an N x R matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMatrix {
    matrix: DMatrix<f64>,
}

impl ReferenceMatrix {
    pub fn from_columns(columns: &[NormalizedPredictor]) -> Result<Self> {
        let r = columns.len();
        if r == 0 {
            return Err(Error::InvalidInput("need at least one reference".into()));
        }
        let n = columns[0].len();
        for c in columns {
            if c.len() != n {
                return Err(Error::LengthMismatch { a: n, b: c.len() });
            }
        }
        let mut matrix = DMatrix::zeros(n, r);
        for (j, c) in columns.iter().enumerate() {
            matrix.set_column(j, c.values());
        }
        Ok(Self { matrix })
    }

    /// Normalizes raw evaluation vectors and assembles them.
    pub fn from_raw(refs: &[EvaluationVector]) -> Result<Self> {
        let cols = refs
            .iter()
            .map(|v| center_normalize(v).map(|(p, _)| p))
            .collect::<Result<Vec<_>>>()?;
        Self::from_columns(&cols)
    }

    pub fn n_points(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_refs(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn ev(vals: &[f64]) -> EvaluationVector {
        EvaluationVector::new(vals.to_vec()).unwrap()
    }

    #[test]
    fn center_constant_vector() {
        let out = center(&ev(&[1.0, 1.0, 1.0]));
        assert_eq!(out.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn center_analytic() {
        let out = center(&ev(&[1.0, 2.0, 3.0]));
        assert_eq!(out.as_slice(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn center_matches_loop_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let vals: Vec<f64> = (0..57).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let v = ev(&vals);
        let out = center(&v);
        // independent elementwise oracle
        let mut sum = 0.0;
        for x in &vals {
            sum += x;
        }
        let mean = sum / vals.len() as f64;
        for (o, x) in out.iter().zip(&vals) {
            assert_eq!(*o, x - mean);
        }
        assert!(out.iter().sum::<f64>().abs() <= 1e-12);
    }

    #[test]
    fn center_normalize_two_points() {
        let (p, s) = center_normalize(&ev(&[1.0, -1.0])).unwrap();
        let r = 1.0 / 2.0_f64.sqrt();
        assert_abs_diff_eq!(p.as_slice()[0], r, epsilon = 1e-12);
        assert_abs_diff_eq!(p.as_slice()[1], -r, epsilon = 1e-12);
        assert_abs_diff_eq!(s.mean, 0.0);
        assert_abs_diff_eq!(s.std, 1.0);
    }

    #[test]
    fn center_normalize_analytic() {
        let (p, _) = center_normalize(&ev(&[1.0, 2.0, 3.0])).unwrap();
        let r = 1.0 / 2.0_f64.sqrt();
        assert_abs_diff_eq!(p.as_slice()[0], -r, epsilon = 1e-12);
        assert_abs_diff_eq!(p.as_slice()[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.as_slice()[2], r, epsilon = 1e-12);
    }

    #[test]
    fn center_normalize_rejects_constant() {
        assert!(matches!(
            center_normalize(&ev(&[5.0, 5.0, 5.0])),
            Err(Error::ZeroVariance)
        ));
    }

    #[test]
    fn inverse_normalize_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let vals: Vec<f64> = (0..40).map(|_| rng.gen_range(-3.0..9.0)).collect();
        let v = ev(&vals);
        let (p, s) = center_normalize(&v).unwrap();
        let back = inverse_normalize(&p, &s);
        for (a, b) in back.as_slice().iter().zip(&vals) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn inverse_normalize_analytic() {
        let r = 1.0 / 2.0_f64.sqrt();
        let p = NormalizedPredictor::new(DVector::from_vec(vec![r, -r])).unwrap();
        let s = ScaleShift::new(0.0, 1.0).unwrap();
        let out = inverse_normalize(&p, &s);
        assert_abs_diff_eq!(out.as_slice()[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.as_slice()[1], -1.0, epsilon = 1e-12);
    }

    fn argsort(v: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        idx
    }

    proptest! {
        #[test]
        fn idempotent_and_affine_invariant(
            vals in proptest::collection::vec(-100.0f64..100.0, 3..40),
            alpha in 0.01f64..50.0,
            beta in -50.0f64..50.0,
        ) {
            let v = EvaluationVector::new(vals.clone()).unwrap();
            if let Ok((p, _)) = center_normalize(&v) {
                // idempotence
                let again = EvaluationVector::new(p.as_slice().to_vec()).unwrap();
                let (p2, _) = center_normalize(&again).unwrap();
                for (a, b) in p.as_slice().iter().zip(p2.as_slice()) {
                    prop_assert!((a - b).abs() <= 1e-9);
                }
                // affine invariance for alpha > 0
                let scaled: Vec<f64> = vals.iter().map(|x| alpha * x + beta).collect();
                let (p3, _) = center_normalize(&EvaluationVector::new(scaled).unwrap()).unwrap();
                for (a, b) in p.as_slice().iter().zip(p3.as_slice()) {
                    prop_assert!((a - b).abs() <= 1e-9);
                }
            }
        }

        #[test]
        fn inverse_preserves_order(
            vals in proptest::collection::vec(-10.0f64..10.0, 3..20),
            mean in -5.0f64..5.0,
            std in 0.1f64..10.0,
        ) {
            let v = EvaluationVector::new(vals).unwrap();
            if let Ok((p, _)) = center_normalize(&v) {
                let s = ScaleShift::new(mean, std).unwrap();
                let out = inverse_normalize(&p, &s);
                prop_assert_eq!(argsort(p.as_slice()), argsort(out.as_slice()));
            }
        }
    }
}
