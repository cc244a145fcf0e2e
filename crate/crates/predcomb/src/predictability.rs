//! Predictability functionals: how accurately the references reconstruct the
//! target, by linear least squares or by GP regression, plus the Nystrom
//! low-rank factorization that makes the GP path affordable at scale.

use nalgebra::{DMatrix, DVector};

use crate::kernel::{gram, KernelSpec};
use crate::linalg;
use crate::norm::{NormalizedPredictor, ReferenceMatrix};
use crate::{Error, Result};

/// Default ridge added to `G^T G` in the linear path; reference columns can be
/// nearly collinear for correlated attributes.
pub const DEFAULT_RIDGE: f64 = 1e-10;

/// A predictability value, clamped into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictabilityScore {
    value: f64,
}

impl PredictabilityScore {
    fn clamped(raw: f64) -> Self {
        Self {
            value: raw.clamp(0.0, 1.0),
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

fn center_in_place(v: &mut DVector<f64>) {
    let mean = v.mean();
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Centers the rows and columns of a symmetric matrix (`C_N M C_N`).
fn center_both_sides(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut out = m.clone();
    for j in 0..n {
        let mean = out.column(j).mean();
        out.column_mut(j).iter_mut().for_each(|x| *x -= mean);
    }
    for i in 0..n {
        let mean = out.row(i).mean();
        out.row_mut(i).iter_mut().for_each(|x| *x -= mean);
    }
    out
}

/// Fraction of the target's variance explained by the least-squares fit on
/// the reference rows: 1 is a perfect linear reconstruction, 0 no better than
/// the mean.
pub fn linear_predictability(
    f: &NormalizedPredictor,
    g: &ReferenceMatrix,
    ridge: f64,
) -> Result<PredictabilityScore> {
    if f.len() != g.n_points() {
        return Err(Error::LengthMismatch {
            a: f.len(),
            b: g.n_points(),
        });
    }
    let gm = g.matrix();
    let mut gtg = gm.transpose() * gm;
    for i in 0..gtg.nrows() {
        gtg[(i, i)] += ridge;
    }
    let gtf = gm.transpose() * f.values();
    let w = linalg::chol_solve_vec(&gtg, &gtf).ok_or(Error::SingularSystem)?;
    let resid = f.values() - gm * w;
    // f is centered and unit-norm, so the variance normalizer is 1
    Ok(PredictabilityScore::clamped(1.0 - resid.norm_squared()))
}

/// GP posterior mean `m = K (K + sigma^2 I)^-1 f` under the selected kernel,
/// computed with a symmetric-PD solve.
pub fn gp_posterior_mean(
    f: &NormalizedPredictor,
    g: &ReferenceMatrix,
    spec: &KernelSpec,
    sigma_sq: f64,
) -> Result<DVector<f64>> {
    if !(sigma_sq > 0.0) {
        return Err(Error::NonPositiveNoise(sigma_sq));
    }
    if f.len() != g.n_points() {
        return Err(Error::LengthMismatch {
            a: f.len(),
            b: g.n_points(),
        });
    }
    let k = gram(g.matrix(), g.matrix(), spec)?;
    let mut kn = k.clone();
    for i in 0..kn.nrows() {
        kn[(i, i)] += sigma_sq;
    }
    let alpha = linalg::chol_solve_vec(&kn, f.values()).ok_or(Error::SingularSystem)?;
    Ok(&k * alpha)
}

/// The dense matrix behind the nonlinear predictability quadratic form:
/// `C_N (2 S - S^2) C_N` with `S = K (K + sigma^2 I)^-1`.
pub fn dense_q_prime(
    g: &ReferenceMatrix,
    spec: &KernelSpec,
    sigma_sq: f64,
) -> Result<DMatrix<f64>> {
    if !(sigma_sq > 0.0) {
        return Err(Error::NonPositiveNoise(sigma_sq));
    }
    let k = gram(g.matrix(), g.matrix(), spec)?;
    let mut kn = k.clone();
    for i in 0..kn.nrows() {
        kn[(i, i)] += sigma_sq;
    }
    // S = K (K + s I)^-1 = ((K + s I)^-1 K)^T; both factors commute, S is symmetric
    let inv = linalg::psd_inverse(&kn);
    let s = &k * inv;
    let s = (&s + s.transpose()) * 0.5;
    let inner = &s * 2.0 - &s * &s;
    Ok(center_both_sides(&inner))
}

/// Nonlinear predictability: variance fraction of the target explained by the
/// GP posterior mean. Equals the quadratic form `f^T Q' f / f^T C_N f`.
pub fn nonlinear_predictability(
    f: &NormalizedPredictor,
    g: &ReferenceMatrix,
    spec: &KernelSpec,
    sigma_sq: f64,
) -> Result<PredictabilityScore> {
    let m = gp_posterior_mean(f, g, spec, sigma_sq)?;
    // f centered and unit norm: f^T (2S - S^2) f = 2 f.m - |m|^2
    let raw = 2.0 * f.values().dot(&m) - m.norm_squared();
    Ok(PredictabilityScore::clamped(raw))
}

/// Low-rank factorization of the GP predictability operator built from a
/// linearly sampled basis of reference rows.
#[derive(Debug, Clone)]
pub struct NystromFactor {
    basis: DMatrix<f64>,
    k_gb: DMatrix<f64>,
    k_bb: DMatrix<f64>,
    /// Cached `K_GB^T K_GB`.
    ktk: DMatrix<f64>,
    t_half: DMatrix<f64>,
    n_basis: usize,
}

impl NystromFactor {
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn k_gb(&self) -> &DMatrix<f64> {
        &self.k_gb
    }

    pub fn k_bb(&self) -> &DMatrix<f64> {
        &self.k_bb
    }

    pub fn t_half(&self) -> &DMatrix<f64> {
        &self.t_half
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    /// The centered low-rank block `sqrt(lambda_j) * C_N K_GB T^(1/2)` whose
    /// outer product is the low-rank predictability term of the denoising
    /// objective.
    pub fn centered_y_block(&self, lambda_j: f64) -> DMatrix<f64> {
        let mut block = &self.k_gb * &self.t_half;
        let scale = lambda_j.sqrt();
        for j in 0..block.ncols() {
            let mean = block.column(j).mean();
            block
                .column_mut(j)
                .iter_mut()
                .for_each(|x| *x = (*x - mean) * scale);
        }
        block
    }

    /// Quadratic form `f^T Q'' f` with `Q'' = C_N K_GB (lambda_j T) K_GB^T C_N`.
    pub fn q_double_form(&self, f: &DVector<f64>, lambda_j: f64) -> f64 {
        let mut fc = f.clone();
        center_in_place(&mut fc);
        let z = self.t_half.transpose() * (self.k_gb.transpose() * fc);
        lambda_j * z.norm_squared()
    }

    /// Gram matrix `B^T B` of the centered low-rank block
    /// `B = sqrt(lambda_j) C_N K_GB T^(1/2)`, computed in basis coordinates
    /// (`K_GB^T C_N K_GB = K^T K - s s^T / N` with `s` the column sums), so no
    /// N x N' intermediate is materialized.
    pub fn reduced_gram(&self, lambda_j: f64) -> DMatrix<f64> {
        let n = self.k_gb.nrows() as f64;
        let s = self.k_gb.row_sum_tr();
        let m_c = &self.ktk - (&s * s.transpose()) / n;
        let g = self.t_half.transpose() * m_c * &self.t_half * lambda_j;
        (&g + g.transpose()) * 0.5
    }

    /// `B^T f` for a centered `f` (see [`Self::reduced_gram`]).
    pub fn reduced_cross(&self, f_centered: &DVector<f64>, lambda_j: f64) -> DVector<f64> {
        self.t_half.transpose() * (self.k_gb.transpose() * f_centered) * lambda_j.sqrt()
    }

    /// Maps basis-space coefficients back to the evaluation space:
    /// `B coef = sqrt(lambda_j) C_N K_GB T^(1/2) coef`.
    pub fn expand(&self, coef: &DVector<f64>, lambda_j: f64) -> DVector<f64> {
        let mut out = &self.k_gb * (&self.t_half * coef) * lambda_j.sqrt();
        center_in_place(&mut out);
        out
    }
}

/// Builds the Nystrom factorization: basis rows at evenly spaced indices
/// `floor(i * N / N')`, `P = (K_GB^T K_GB + sigma^2 K_BB)^-1` and
/// `T = 2P - P K_GB^T K_GB P`, with `T^(1/2)` from Cholesky or the
/// eigenvalue-floored fallback.
pub fn build_nystrom(
    g: &ReferenceMatrix,
    n_basis: usize,
    spec: &KernelSpec,
    sigma_sq: f64,
) -> Result<NystromFactor> {
    if !(sigma_sq > 0.0) {
        return Err(Error::NonPositiveNoise(sigma_sq));
    }
    let n = g.n_points();
    if n_basis == 0 || n_basis > n {
        return Err(Error::BasisCountOutOfRange {
            requested: n_basis,
            max: n,
        });
    }
    let gm = g.matrix();
    let mut basis = DMatrix::zeros(n_basis, g.n_refs());
    for i in 0..n_basis {
        let row = i * n / n_basis;
        basis.set_row(i, &gm.row(row));
    }
    let k_gb = gram(gm, &basis, spec)?;
    let k_bb = {
        let k = gram(&basis, &basis, spec)?;
        (&k + k.transpose()) * 0.5
    };
    let ktk = k_gb.transpose() * &k_gb;
    let m = &ktk + &k_bb * sigma_sq;
    let p = linalg::psd_inverse(&m);
    let pk = &p * &ktk;
    let t = &p * 2.0 - pk * &p;
    let t = (&t + t.transpose()) * 0.5;
    let t_half = linalg::sqrt_factor_psd(&t);
    Ok(NystromFactor {
        basis,
        k_gb,
        k_bb,
        ktk,
        t_half,
        n_basis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm::{center_normalize, EvaluationVector};
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};

    fn normalized(vals: Vec<f64>) -> NormalizedPredictor {
        center_normalize(&EvaluationVector::new(vals).unwrap())
            .unwrap()
            .0
    }

    fn random_instance(n: usize, r: usize, seed: u64) -> (NormalizedPredictor, ReferenceMatrix) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let refs: Vec<EvaluationVector> = (0..r)
            .map(|_| {
                EvaluationVector::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
            })
            .collect();
        let g = ReferenceMatrix::from_raw(&refs).unwrap();
        let f = normalized((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        (f, g)
    }

    #[test]
    fn linear_predictability_exact_fit() {
        let (_, g) = random_instance(20, 3, 1);
        let col = NormalizedPredictor::new(g.matrix().column(0).clone_owned()).unwrap();
        let p = linear_predictability(&col, &g, DEFAULT_RIDGE).unwrap();
        assert!((p.value() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn linear_predictability_orthogonal_target() {
        // G spans coordinates 0..2 deviations; f lives in the others
        let g1 = normalized(vec![1.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
        let g = ReferenceMatrix::from_columns(&[g1]).unwrap();
        let f = normalized(vec![0.0, 0.0, 1.0, -1.0, 1.0, -1.0]);
        let p = linear_predictability(&f, &g, DEFAULT_RIDGE).unwrap();
        assert!(p.value().abs() <= 1e-9);
    }

    #[test]
    fn linear_predictability_toy1_span() {
        // f_GT = g_1 - g_2 lies in span(G) by construction
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 100;
        let g1: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..2u8))).collect();
        let g2: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..2u8))).collect();
        let fgt: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a - b).collect();
        let g = ReferenceMatrix::from_raw(&[
            EvaluationVector::new(g1).unwrap(),
            EvaluationVector::new(g2).unwrap(),
        ])
        .unwrap();
        let f = normalized(fgt);
        let p = linear_predictability(&f, &g, DEFAULT_RIDGE).unwrap();
        assert!((p.value() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn gp_mean_large_noise_vanishes() {
        let (f, g) = random_instance(12, 2, 2);
        let spec = KernelSpec::IsotropicGaussian { sigma_k_sq: 1.0 };
        let m = gp_posterior_mean(&f, &g, &spec, 1e12).unwrap();
        assert!(m.norm() <= 1e-6);
    }

    #[test]
    fn gp_mean_small_noise_interpolates() {
        let (f, g) = random_instance(5, 2, 3);
        let spec = KernelSpec::IsotropicGaussian { sigma_k_sq: 1.0 };
        let m = gp_posterior_mean(&f, &g, &spec, 1e-9).unwrap();
        assert!((f.values() - m).norm() <= 1e-3);
    }

    #[test]
    fn gp_mean_matches_explicit_inverse_oracle() {
        let (f, g) = random_instance(8, 3, 4);
        let spec = KernelSpec::IsotropicGaussian { sigma_k_sq: 0.8 };
        let m = gp_posterior_mean(&f, &g, &spec, 0.3).unwrap();
        // textbook formula with an explicit inverse
        let k = gram(g.matrix(), g.matrix(), &spec).unwrap();
        let mut kn = k.clone();
        for i in 0..8 {
            kn[(i, i)] += 0.3;
        }
        let oracle = &k * kn.try_inverse().unwrap() * f.values();
        assert!((m - oracle).norm() <= 1e-8);
    }

    #[test]
    fn nonlinear_predictability_noise_limits() {
        let (f, g) = random_instance(10, 2, 6);
        let spec = KernelSpec::IsotropicGaussian { sigma_k_sq: 1.0 };
        let lo = nonlinear_predictability(&f, &g, &spec, 1e-10).unwrap();
        assert!(lo.value() >= 0.999, "got {}", lo.value());
        let hi = nonlinear_predictability(&f, &g, &spec, 1e12).unwrap();
        assert!(hi.value() <= 1e-6, "got {}", hi.value());
    }

    #[test]
    fn quadratic_form_equals_residual_ratio() {
        let (f, g) = random_instance(10, 3, 7);
        let spec = KernelSpec::IsotropicGaussian { sigma_k_sq: 0.9 };
        let sigma_sq = 0.2;
        let p = nonlinear_predictability(&f, &g, &spec, sigma_sq).unwrap();
        // quadratic-form route via the dense Q' matrix
        let q = dense_q_prime(&g, &spec, sigma_sq).unwrap();
        let quad = (f.values().transpose() * &q * f.values())[(0, 0)];
        assert!((p.value() - quad).abs() <= 1e-8);
        // residual-ratio route
        let m = gp_posterior_mean(&f, &g, &spec, sigma_sq).unwrap();
        let mean = f.values().mean();
        let num: f64 = f
            .values()
            .iter()
            .zip(m.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let den: f64 = f.values().iter().map(|a| (a - mean) * (a - mean)).sum();
        let resid_form = 1.0 - num / den;
        assert!((p.value() - resid_form).abs() <= 1e-8);
    }

    #[test]
    fn q_prime_is_psd_and_scores_bounded() {
        for seed in 0..10u64 {
            let n = 8 + (seed as usize % 23);
            let (f, g) = random_instance(n, 3, seed + 100);
            let spec = KernelSpec::IsotropicGaussian { sigma_k_sq: 1.0 };
            let q = dense_q_prime(&g, &spec, 0.1).unwrap();
            let eig = SymmetricEigen::new(q);
            let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
            assert!(min >= -1e-8, "seed {seed}: min eigenvalue {min}");
            let pl = linear_predictability(&f, &g, DEFAULT_RIDGE).unwrap().value();
            let pn = nonlinear_predictability(&f, &g, &spec, 0.1).unwrap().value();
            assert!((0.0..=1.0 + 1e-8).contains(&pl));
            assert!((0.0..=1.0 + 1e-8).contains(&pn));
        }
    }

    #[test]
    fn linear_kernel_degenerates_to_linear_predictability() {
        for seed in 0..5u64 {
            let (f, g) = random_instance(14, 3, seed + 50);
            let weights = DVector::from_element(3, 1.0);
            let spec = KernelSpec::LinearAnisotropic { weights };
            let pn = nonlinear_predictability(&f, &g, &spec, 1e-8).unwrap().value();
            let pl = linear_predictability(&f, &g, 1e-12).unwrap().value();
            assert!((pn - pl).abs() <= 1e-3, "seed {seed}: {pn} vs {pl}");
        }
    }

    #[test]
    fn nystrom_full_rank_matches_dense() {
        let n = 12;
        let (f, g) = random_instance(n, 3, 9);
        let spec = KernelSpec::IsotropicGaussian { sigma_k_sq: 1.2 };
        let sigma_sq = 0.15;
        let ny = build_nystrom(&g, n, &spec, sigma_sq).unwrap();
        let q_dense = dense_q_prime(&g, &spec, sigma_sq).unwrap();
        let dense_form = (f.values().transpose() * &q_dense * f.values())[(0, 0)];
        let low_rank = ny.q_double_form(f.values(), 1.0);
        assert!(
            (low_rank - dense_form).abs() <= 1e-6,
            "{low_rank} vs {dense_form}"
        );
    }

    #[test]
    fn t_half_factorization_identity() {
        let (_, g) = random_instance(15, 2, 10);
        let spec = KernelSpec::IsotropicGaussian { sigma_k_sq: 1.0 };
        let ny = build_nystrom(&g, 6, &spec, 0.2).unwrap();
        // reconstruct T independently
        let ktk = ny.k_gb().transpose() * ny.k_gb();
        let m = &ktk + ny.k_bb() * 0.2;
        let p = m.try_inverse().unwrap();
        let t = &p * 2.0 - &p * &ktk * &p;
        let back = ny.t_half() * ny.t_half().transpose();
        // T's entries can be large when the basis system is ill-conditioned;
        // compare relative to its magnitude
        let scale = t.abs().max().max(1.0);
        assert!((&back - &t).abs().max() <= 1e-10 * scale);
    }

    #[test]
    fn q_double_form_bounded_by_lambda() {
        let (f, g) = random_instance(18, 3, 11);
        let spec = KernelSpec::IsotropicGaussian { sigma_k_sq: 1.0 };
        let ny = build_nystrom(&g, 18, &spec, 0.1).unwrap();
        for lambda_j in [0.5, 1.0, 3.0] {
            let v = ny.q_double_form(f.values(), lambda_j);
            assert!(v >= -1e-10 && v <= lambda_j + 1e-8, "lambda {lambda_j}: {v}");
        }
    }

    #[test]
    fn basis_count_bounds() {
        let (_, g) = random_instance(10, 2, 12);
        let spec = KernelSpec::IsotropicGaussian { sigma_k_sq: 1.0 };
        assert!(matches!(
            build_nystrom(&g, 0, &spec, 0.1),
            Err(Error::BasisCountOutOfRange { .. })
        ));
        assert!(matches!(
            build_nystrom(&g, 11, &spec, 0.1),
            Err(Error::BasisCountOutOfRange { .. })
        ));
        assert!(matches!(
            build_nystrom(&g, 5, &spec, 0.0),
            Err(Error::NonPositiveNoise(_))
        ));
    }
}
