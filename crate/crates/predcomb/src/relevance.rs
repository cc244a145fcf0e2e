//! Automatic relevance determination for reference predictors.
//!
//! Each reference gets a non-negative weight `sigma_i` in a linear anisotropic
//! kernel `K = G diag(sigma) G^T + lambda I`. The weights are found by
//! minimizing the (Woodbury-reduced) negative log marginal likelihood of the
//! target under that GP, with gradient descent in log-space so positivity is
//! structural. Learned linear weights are rescaled by the Gaussian bandwidth
//! to obtain weights for the anisotropic Gaussian kernel used in denoising.

use nalgebra::{DMatrix, DVector};

use crate::linalg;
use crate::norm::{NormalizedPredictor, ReferenceMatrix};
use crate::{Error, Result};

/// Box constraint on log-weights: `theta` outside this range signals a
/// numerically meaningless configuration.
pub const THETA_BOX: f64 = 50.0;

/// Optimizer settings for [`optimize_relevance`].
#[derive(Debug, Clone, Copy)]
pub struct ArdConfig {
    /// GP observation-noise variance (`lambda`).
    pub lambda_noise: f64,
    /// Initial gradient-descent step size before backtracking.
    pub step: f64,
    pub max_iters: usize,
    /// Stop when the gradient infinity-norm drops below this.
    pub grad_tol: f64,
}

impl Default for ArdConfig {
    fn default() -> Self {
        Self {
            lambda_noise: 0.1,
            step: 0.1,
            max_iters: 500,
            grad_tol: 1e-6,
        }
    }
}

/// Learned per-reference relevance weights (linear-kernel scale).
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceWeights {
    sigma_l: DVector<f64>,
}

impl RelevanceWeights {
    pub fn uniform(n_refs: usize) -> Self {
        Self {
            sigma_l: DVector::from_element(n_refs, 1.0),
        }
    }

    pub fn sigma_linear(&self) -> &DVector<f64> {
        &self.sigma_l
    }

    /// Weights for the anisotropic Gaussian kernel: `sigma_i / sigma_k_sq`.
    pub fn scale_to_anisotropic(&self, sigma_k_sq: f64) -> Result<DVector<f64>> {
        if !(sigma_k_sq > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sigma_k_sq must be > 0, got {sigma_k_sq}"
            )));
        }
        Ok(&self.sigma_l / sigma_k_sq)
    }
}

struct EnergyParts {
    energy: f64,
    /// `M^-1` with `M = diag(1/sigma) + G^T G / lambda`
    m_inv: DMatrix<f64>,
    /// `alpha = M^-1 G^T f`
    alpha: DVector<f64>,
    sigma: DVector<f64>,
}

/// Sufficient statistics of the ARD problem; `G` and `f` enter only through
/// `G^T G` and `G^T f`, cached so line searches stay O(R^3) per evaluation.
struct ArdProblem {
    gtg_over_lambda: DMatrix<f64>,
    b: DVector<f64>,
    lambda: f64,
}

impl ArdProblem {
    fn new(f: &NormalizedPredictor, g: &ReferenceMatrix, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::NonPositiveNoise(lambda));
        }
        if f.len() != g.n_points() {
            return Err(Error::LengthMismatch {
                a: f.len(),
                b: g.n_points(),
            });
        }
        let gm = g.matrix();
        Ok(Self {
            gtg_over_lambda: gm.transpose() * gm / lambda,
            b: gm.transpose() * f.values(),
            lambda,
        })
    }

    fn energy_parts(&self, theta: &DVector<f64>) -> Result<EnergyParts> {
        if theta.len() != self.b.len() {
            return Err(Error::DimensionMismatch {
                expected: self.b.len(),
                got: theta.len(),
            });
        }
        if theta.iter().any(|t| t.abs() > THETA_BOX || !t.is_finite()) {
            return Err(Error::NumericalOverflow);
        }
        let sigma = theta.map(f64::exp);
        let mut m = self.gtg_over_lambda.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += 1.0 / sigma[i];
        }
        let log_det = linalg::log_det_pd(&m).ok_or(Error::SingularSystem)?;
        let m_inv = linalg::psd_inverse(&m);
        let alpha = &m_inv * &self.b;
        let energy =
            theta.sum() + log_det - self.b.dot(&alpha) / (self.lambda * self.lambda);
        Ok(EnergyParts {
            energy,
            m_inv,
            alpha,
            sigma,
        })
    }

    fn grad(&self, parts: &EnergyParts) -> DVector<f64> {
        let r = self.b.len();
        let mut grad = DVector::zeros(r);
        for i in 0..r {
            grad[i] = 1.0
                - parts.m_inv[(i, i)] / parts.sigma[i]
                - parts.alpha[i] * parts.alpha[i]
                    / (self.lambda * self.lambda * parts.sigma[i]);
        }
        grad
    }
}

fn energy_parts(
    theta: &DVector<f64>,
    f: &NormalizedPredictor,
    g: &ReferenceMatrix,
    lambda: f64,
) -> Result<EnergyParts> {
    if theta.len() != g.n_refs() {
        return Err(Error::DimensionMismatch {
            expected: g.n_refs(),
            got: theta.len(),
        });
    }
    ArdProblem::new(f, g, lambda)?.energy_parts(theta)
}

/// Woodbury-reduced negative log marginal likelihood (constants in `N` and
/// `lambda` dropped): `sum(theta) + log|M| - b^T M^-1 b / lambda^2`.
pub fn ml_energy(
    theta: &DVector<f64>,
    f: &NormalizedPredictor,
    g: &ReferenceMatrix,
    lambda: f64,
) -> Result<f64> {
    energy_parts(theta, f, g, lambda).map(|p| p.energy)
}

/// Energy plus its analytic gradient with respect to `theta` (log-weights):
/// `dE/dtheta_i = 1 - (M^-1)_ii / sigma_i - alpha_i^2 / (lambda^2 sigma_i)`.
pub fn ml_energy_grad(
    theta: &DVector<f64>,
    f: &NormalizedPredictor,
    g: &ReferenceMatrix,
    lambda: f64,
) -> Result<(f64, DVector<f64>)> {
    if theta.len() != g.n_refs() {
        return Err(Error::DimensionMismatch {
            expected: g.n_refs(),
            got: theta.len(),
        });
    }
    let problem = ArdProblem::new(f, g, lambda)?;
    let parts = problem.energy_parts(theta)?;
    let grad = problem.grad(&parts);
    Ok((parts.energy, grad))
}

/// Minimizes the ARD energy by gradient descent with Armijo backtracking,
/// starting from `theta = 0` (all weights 1). Deterministic.
pub fn optimize_relevance(
    f: &NormalizedPredictor,
    g: &ReferenceMatrix,
    cfg: &ArdConfig,
) -> Result<RelevanceWeights> {
    let r = g.n_refs();
    let problem = ArdProblem::new(f, g, cfg.lambda_noise)?;
    let mut theta = DVector::zeros(r);
    let parts = problem.energy_parts(&theta)?;
    let mut energy = parts.energy;
    let mut grad = problem.grad(&parts);
    const ARMIJO_C: f64 = 1e-4;
    for _ in 0..cfg.max_iters {
        if grad.amax() <= cfg.grad_tol {
            break;
        }
        let g2 = grad.norm_squared();
        let mut step = cfg.step;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = (&theta - &grad * step).map(|t| t.clamp(-THETA_BOX, THETA_BOX));
            match problem.energy_parts(&cand) {
                Ok(p) if p.energy <= energy - ARMIJO_C * step * g2 => {
                    theta = cand;
                    energy = p.energy;
                    grad = problem.grad(&p);
                    accepted = true;
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !accepted {
            break; // no descent direction at machine precision
        }
    }
    Ok(RelevanceWeights {
        sigma_l: theta.map(f64::exp),
    })
}
