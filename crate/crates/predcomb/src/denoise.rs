//! Iterative denoising engine.
//!
//! Each step maximizes a Rayleigh-quotient objective that balances staying
//! close to the current target iterate against being predictable from the
//! references. The quadratic form is factored as `A = Y Y^T` with a thin `Y`,
//! so the dominant eigenvector is found by power iteration on the small
//! `Y^T Y` and mapped back through `Y`. The joint loop applies this update to
//! every ensemble member synchronously (all updates read the iteration-t
//! snapshot), per-member relevance weights are estimated once from the
//! initial ensemble and held fixed.

use nalgebra::{DMatrix, DVector};

use crate::kernel::KernelSpec;
use crate::linalg;
use crate::norm::{
    center_normalize, inverse_normalize, EvaluationVector, NormalizedPredictor, ReferenceMatrix,
    ScaleShift,
};
use crate::predictability::build_nystrom;
use crate::relevance::{optimize_relevance, ArdConfig, RelevanceWeights};
use crate::{Error, Result};

/// Ridge added to `G^T G` in the LPC projector.
const LPC_RIDGE: f64 = 1e-10;

/// Which combination algorithm drives the member updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    /// Nonlinear predictor combination (GP predictability, Nystrom path).
    Npc,
    /// Linear predictor combination (span projector).
    Lpc,
    /// Adapted pairwise baseline; always target-only.
    Opc { sigma_o_sq: f64, lambda_o: f64 },
}

/// Hyperparameters of the denoising loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiseConfig {
    /// GP observation-noise variance.
    pub sigma_sq: f64,
    /// Global Gaussian-kernel scaling.
    pub sigma_k_sq: f64,
    /// Predictability regularization weight.
    pub lambda_j: f64,
    /// Number of denoising iterations S.
    pub n_iters: usize,
    /// Nystrom basis size N' (capped at N).
    pub n_basis: usize,
    pub power_tol: f64,
    pub power_max: usize,
    /// Update every member (true) or only targets (false).
    pub joint: bool,
    /// Use learned anisotropic relevance weights (true) or the isotropic
    /// kernel (false).
    pub use_ard: bool,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            sigma_sq: 0.1,
            sigma_k_sq: 1.0,
            lambda_j: 1.0,
            n_iters: 20,
            n_basis: 300,
            power_tol: 1e-10,
            power_max: 10_000,
            joint: true,
            use_ard: true,
        }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_sq > 0.0) {
            return Err(Error::NonPositiveNoise(self.sigma_sq));
        }
        if !(self.sigma_k_sq > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sigma_k_sq must be > 0, got {}",
                self.sigma_k_sq
            )));
        }
        if !(self.lambda_j >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "lambda_j must be >= 0, got {}",
                self.lambda_j
            )));
        }
        if self.n_basis == 0 {
            return Err(Error::InvalidInput("n_basis must be >= 1".into()));
        }
        if !(self.power_tol > 0.0) || self.power_max == 0 {
            return Err(Error::InvalidInput(
                "power iteration controls must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// The joint set H of predictors being denoised: targets plus references,
/// with their normalization records and (optional) per-member relevance
/// weights over the other members.
#[derive(Debug, Clone)]
pub struct PredictorEnsemble {
    members: Vec<NormalizedPredictor>,
    scale_shifts: Vec<ScaleShift>,
    relevance: Vec<Option<RelevanceWeights>>,
    target_indices: Vec<usize>,
}

impl PredictorEnsemble {
    pub fn new(
        members: Vec<NormalizedPredictor>,
        scale_shifts: Vec<ScaleShift>,
        target_indices: Vec<usize>,
    ) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::InvalidInput(
                "ensemble needs at least 2 members".into(),
            ));
        }
        if scale_shifts.len() != members.len() {
            return Err(Error::LengthMismatch {
                a: members.len(),
                b: scale_shifts.len(),
            });
        }
        let n = members[0].len();
        for m in &members {
            if m.len() != n {
                return Err(Error::LengthMismatch { a: n, b: m.len() });
            }
        }
        if target_indices.is_empty() {
            return Err(Error::InvalidInput("need at least one target index".into()));
        }
        for &i in &target_indices {
            if i >= members.len() {
                return Err(Error::InvalidInput(format!(
                    "target index {i} out of range for {} members",
                    members.len()
                )));
            }
        }
        let relevance = vec![None; members.len()];
        Ok(Self {
            members,
            scale_shifts,
            relevance,
            target_indices,
        })
    }

    /// Normalizes a raw target and raw references into an ensemble with the
    /// target at index 0.
    pub fn from_target_and_refs(
        target: &EvaluationVector,
        refs: &[EvaluationVector],
    ) -> Result<Self> {
        let mut members = Vec::with_capacity(refs.len() + 1);
        let mut shifts = Vec::with_capacity(refs.len() + 1);
        let (p, s) = center_normalize(target)?;
        members.push(p);
        shifts.push(s);
        for r in refs {
            let (p, s) = center_normalize(r)?;
            members.push(p);
            shifts.push(s);
        }
        Self::new(members, shifts, vec![0])
    }

    pub fn members(&self) -> &[NormalizedPredictor] {
        &self.members
    }

    pub fn member(&self, i: usize) -> &NormalizedPredictor {
        &self.members[i]
    }

    pub fn scale_shift(&self, i: usize) -> &ScaleShift {
        &self.scale_shifts[i]
    }

    pub fn target_indices(&self) -> &[usize] {
        &self.target_indices
    }

    pub fn n_points(&self) -> usize {
        self.members[0].len()
    }

    /// Target members in `target_indices` order.
    pub fn targets(&self) -> Vec<NormalizedPredictor> {
        self.target_indices
            .iter()
            .map(|&i| self.members[i].clone())
            .collect()
    }

    /// All members except `target_idx`, as reference columns in index order.
    fn references_for(&self, target_idx: usize) -> Result<ReferenceMatrix> {
        if target_idx >= self.members.len() {
            return Err(Error::InvalidInput(format!(
                "member index {target_idx} out of range"
            )));
        }
        let cols: Vec<NormalizedPredictor> = self
            .members
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != target_idx)
            .map(|(_, m)| m.clone())
            .collect();
        ReferenceMatrix::from_columns(&cols)
    }

    fn kernel_spec(&self, target_idx: usize, cfg: &DenoiseConfig) -> Result<KernelSpec> {
        if cfg.use_ard {
            if let Some(w) = &self.relevance[target_idx] {
                return Ok(KernelSpec::AnisotropicGaussian {
                    weights: w.scale_to_anisotropic(cfg.sigma_k_sq)?,
                });
            }
        }
        Ok(KernelSpec::IsotropicGaussian {
            sigma_k_sq: cfg.sigma_k_sq,
        })
    }

    /// Estimates missing relevance weights from the current member values
    /// (intended to be called on H^0, once), for every member when `all`,
    /// otherwise only for target members.
    pub fn ensure_relevance(&mut self, ard_cfg: &ArdConfig, all: bool) -> Result<()> {
        let idxs: Vec<usize> = if all {
            (0..self.members.len()).collect()
        } else {
            self.target_indices.clone()
        };
        for i in idxs {
            if self.relevance[i].is_some() {
                continue;
            }
            let g = self.references_for(i)?;
            let w = optimize_relevance(&self.members[i], &g, ard_cfg)?;
            self.relevance[i] = Some(w);
        }
        Ok(())
    }

    pub fn set_relevance(&mut self, i: usize, w: RelevanceWeights) -> Result<()> {
        if w.sigma_linear().len() != self.members.len() - 1 {
            return Err(Error::DimensionMismatch {
                expected: self.members.len() - 1,
                got: w.sigma_linear().len(),
            });
        }
        self.relevance[i] = Some(w);
        Ok(())
    }

    pub fn relevance(&self, i: usize) -> Option<&RelevanceWeights> {
        self.relevance[i].as_ref()
    }
}

/// Per-iteration record of a denoising run.
#[derive(Debug, Clone)]
pub struct DenoiseTrace {
    /// Target members (in `target_indices` order) at t = 0..=S.
    pub targets: Vec<Vec<NormalizedPredictor>>,
    /// Validation metric per iteration (same indexing), when a metric was
    /// supplied.
    pub val_metric: Option<Vec<f64>>,
    /// Iterations whose eigen-solve had a near-degenerate spectral gap.
    pub gap_warnings: Vec<usize>,
}

/// Shared tail of all step variants: assemble `Y = [f | block]`, power-iterate
/// on `Y^T Y` from the warm start `Y^T f`, map back and canonicalize.
fn rayleigh_step(
    f: &NormalizedPredictor,
    block: &DMatrix<f64>,
    power_tol: f64,
    power_max: usize,
) -> Result<(NormalizedPredictor, bool)> {
    let n = f.len();
    let cols = 1 + block.ncols();
    let mut y = DMatrix::zeros(n, cols);
    y.set_column(0, f.values());
    y.view_mut((0, 1), (n, block.ncols())).copy_from(block);
    let yty = y.transpose() * &y;
    let start = y.transpose() * f.values();
    let res = linalg::power_iteration(&yty, &start, power_tol, power_max);
    let mut out: DVector<f64> = &y * res.vector;
    let norm = out.norm();
    if norm <= 1e-12 {
        return Err(Error::DegenerateTarget);
    }
    out /= norm;
    if out.dot(f.values()) < 0.0 {
        out = -out;
    }
    Ok((NormalizedPredictor::new(out)?, res.gap_small))
}

fn npc_step(
    target_idx: usize,
    ensemble: &PredictorEnsemble,
    cfg: &DenoiseConfig,
) -> Result<(NormalizedPredictor, bool)> {
    let f = &ensemble.members[target_idx];
    let g = ensemble.references_for(target_idx)?;
    let spec = ensemble.kernel_spec(target_idx, cfg)?;
    let n_basis = cfg.n_basis.min(g.n_points());
    let ny = build_nystrom(&g, n_basis, &spec, cfg.sigma_sq)?;
    // solve the Rayleigh problem in basis coordinates: Y^T Y assembled from
    // the reduced Gram/cross terms, never forming the N x N' block
    let bb = ny.reduced_gram(cfg.lambda_j);
    let bf = ny.reduced_cross(f.values(), cfg.lambda_j);
    let cols = 1 + bb.ncols();
    let mut yty = DMatrix::zeros(cols, cols);
    yty[(0, 0)] = 1.0; // f is unit norm
    for j in 0..bb.ncols() {
        yty[(0, j + 1)] = bf[j];
        yty[(j + 1, 0)] = bf[j];
    }
    yty.view_mut((1, 1), (bb.ncols(), bb.ncols())).copy_from(&bb);
    // warm start Y^T f = (1, B^T f)
    let mut start = DVector::zeros(cols);
    start[0] = 1.0;
    start.rows_mut(1, bb.ncols()).copy_from(&bf);
    let res = linalg::power_iteration(&yty, &start, cfg.power_tol, cfg.power_max);
    let coef = res.vector.rows(1, bb.ncols()).clone_owned();
    let mut out: DVector<f64> = f.values() * res.vector[0] + ny.expand(&coef, cfg.lambda_j);
    let norm = out.norm();
    if norm <= 1e-12 {
        return Err(Error::DegenerateTarget);
    }
    out /= norm;
    if out.dot(f.values()) < 0.0 {
        out = -out;
    }
    Ok((NormalizedPredictor::new(out)?, res.gap_small))
}

fn lpc_step(
    target_idx: usize,
    ensemble: &PredictorEnsemble,
    cfg: &DenoiseConfig,
) -> Result<(NormalizedPredictor, bool)> {
    let f = &ensemble.members[target_idx];
    let g = ensemble.references_for(target_idx)?;
    let gm = g.matrix();
    let mut gtg = gm.transpose() * gm;
    for i in 0..gtg.nrows() {
        gtg[(i, i)] += LPC_RIDGE;
    }
    let inv = linalg::psd_inverse(&gtg);
    let l = linalg::sqrt_factor_psd(&inv);
    // G columns are centered, so the block columns are too
    let block = gm * l * cfg.lambda_j.sqrt();
    rayleigh_step(f, &block, cfg.power_tol, cfg.power_max)
}

fn opc_step(
    target_idx: usize,
    ensemble: &PredictorEnsemble,
    sigma_o_sq: f64,
    lambda_o: f64,
    power_tol: f64,
    power_max: usize,
) -> Result<(NormalizedPredictor, bool)> {
    if !(sigma_o_sq > 0.0) {
        return Err(Error::InvalidInput(format!(
            "sigma_o_sq must be > 0, got {sigma_o_sq}"
        )));
    }
    if !(lambda_o >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "lambda_o must be >= 0, got {lambda_o}"
        )));
    }
    let f = &ensemble.members[target_idx];
    let g = ensemble.references_for(target_idx)?;
    let gm = g.matrix();
    let mut block = gm.clone();
    for j in 0..block.ncols() {
        let d_sq = 2.0 - 2.0 * f.values().dot(&gm.column(j));
        let w = (-d_sq / sigma_o_sq).exp();
        block.column_mut(j).scale_mut((lambda_o * w).sqrt());
    }
    rayleigh_step(f, &block, power_tol, power_max)
}

/// One NPC update of member `target_idx` against the rest of the ensemble.
pub fn denoise_step(
    target_idx: usize,
    ensemble: &PredictorEnsemble,
    cfg: &DenoiseConfig,
) -> Result<NormalizedPredictor> {
    cfg.validate()?;
    npc_step(target_idx, ensemble, cfg).map(|(p, _)| p)
}

/// One LPC update: span projector instead of the GP predictability operator.
pub fn lpc_denoise_step(
    target_idx: usize,
    ensemble: &PredictorEnsemble,
    cfg: &DenoiseConfig,
) -> Result<NormalizedPredictor> {
    cfg.validate()?;
    lpc_step(target_idx, ensemble, cfg).map(|(p, _)| p)
}

/// One step of the adapted pairwise baseline: dominant eigenvector of
/// `f f^T + lambda_o sum_i w_i g_i g_i^T` with `w_i = exp(-d_i^2/sigma_o_sq)`
/// and `d_i^2 = 2 - 2 <f, g_i>`.
pub fn opc_baseline_step(
    target_idx: usize,
    ensemble: &PredictorEnsemble,
    sigma_o_sq: f64,
    lambda_o: f64,
) -> Result<NormalizedPredictor> {
    opc_step(target_idx, ensemble, sigma_o_sq, lambda_o, 1e-10, 10_000).map(|(p, _)| p)
}

/// Worker-thread budget: `PREDCOMB_THREADS` when set (0 = auto), otherwise
/// the available parallelism, clamped to the number of jobs.
fn worker_threads(n_jobs: usize) -> usize {
    let env = std::env::var("PREDCOMB_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok());
    let auto = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let cap = match env {
        Some(0) | None => auto,
        Some(k) => k,
    };
    cap.clamp(1, n_jobs.max(1))
}

/// Runs the denoising loop.
///
/// All member updates within one iteration read the iteration-t snapshot
/// (synchronous/Jacobi). With `cfg.joint == false` (or the OPC baseline) only
/// target members are updated; references stay at their initial values. For
/// NPC with `cfg.use_ard`, missing relevance weights are estimated once from
/// the initial ensemble and held fixed.
pub fn joint_denoise(
    ensemble: &PredictorEnsemble,
    cfg: &DenoiseConfig,
    algorithm: Algorithm,
    val_metric: Option<&dyn Fn(&[NormalizedPredictor]) -> f64>,
) -> Result<(PredictorEnsemble, DenoiseTrace)> {
    cfg.validate()?;
    let mut ens = ensemble.clone();
    let update_all = cfg.joint && !matches!(algorithm, Algorithm::Opc { .. });
    if matches!(algorithm, Algorithm::Npc) && cfg.use_ard {
        let ard_cfg = ArdConfig {
            lambda_noise: cfg.sigma_sq,
            ..ArdConfig::default()
        };
        ens.ensure_relevance(&ard_cfg, update_all)?;
    }
    let mut trace = DenoiseTrace {
        targets: Vec::with_capacity(cfg.n_iters + 1),
        val_metric: val_metric.map(|_| Vec::with_capacity(cfg.n_iters + 1)),
        gap_warnings: Vec::new(),
    };
    let record = |ens: &PredictorEnsemble, trace: &mut DenoiseTrace| {
        let targets = ens.targets();
        if let (Some(vals), Some(metric)) = (trace.val_metric.as_mut(), val_metric) {
            vals.push(metric(&targets));
        }
        trace.targets.push(targets);
    };
    record(&ens, &mut trace);
    let indices: Vec<usize> = if update_all {
        (0..ens.members.len()).collect()
    } else {
        ens.target_indices.clone()
    };
    let n_threads = worker_threads(indices.len());
    for t in 0..cfg.n_iters {
        let step_one = |i: usize, ens: &PredictorEnsemble| match algorithm {
            Algorithm::Npc => npc_step(i, ens, cfg),
            Algorithm::Lpc => lpc_step(i, ens, cfg),
            Algorithm::Opc {
                sigma_o_sq,
                lambda_o,
            } => opc_step(i, ens, sigma_o_sq, lambda_o, cfg.power_tol, cfg.power_max),
        };
        let mut updates: Vec<(usize, (NormalizedPredictor, bool))> =
            Vec::with_capacity(indices.len());
        if n_threads <= 1 {
            for &i in &indices {
                updates.push((i, step_one(i, &ens)?));
            }
        } else {
            // Jacobi updates all read the immutable H^t snapshot, so member
            // updates can fan out across threads; results are keyed by member
            // index, keeping the outcome identical to the sequential path.
            let ens_ref = &ens;
            let chunks: Vec<Vec<usize>> = (0..n_threads)
                .map(|w| indices.iter().copied().skip(w).step_by(n_threads).collect())
                .collect();
            let results: Vec<Result<Vec<(usize, (NormalizedPredictor, bool))>>> =
                std::thread::scope(|scope| {
                    let handles: Vec<_> = chunks
                        .iter()
                        .map(|chunk| {
                            scope.spawn(move || {
                                chunk
                                    .iter()
                                    .map(|&i| step_one(i, ens_ref).map(|r| (i, r)))
                                    .collect()
                            })
                        })
                        .collect();
                    handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
                });
            for r in results {
                updates.extend(r?);
            }
        }
        let mut next = ens.members.clone();
        let mut gap = false;
        for (i, (p, g)) in updates {
            next[i] = p;
            gap |= g;
        }
        ens.members = next;
        if gap {
            trace.gap_warnings.push(t + 1);
        }
        record(&ens, &mut trace);
    }
    Ok((ens, trace))
}

/// Jointly denoises H class-score columns using rank references, returning
/// the class columns mapped back to their original scales. Predicted label =
/// argmax across the returned columns.
pub fn multiclass_denoise(
    class_columns: &[EvaluationVector],
    rank_refs: &[EvaluationVector],
    cfg: &DenoiseConfig,
) -> Result<Vec<EvaluationVector>> {
    if class_columns.len() < 2 {
        return Err(Error::InvalidInput(
            "multiclass denoising needs at least 2 class columns".into(),
        ));
    }
    let mut members = Vec::with_capacity(class_columns.len() + rank_refs.len());
    let mut shifts = Vec::new();
    for c in class_columns.iter().chain(rank_refs.iter()) {
        let (p, s) = center_normalize(c)?;
        members.push(p);
        shifts.push(s);
    }
    let targets: Vec<usize> = (0..class_columns.len()).collect();
    let ens = PredictorEnsemble::new(members, shifts, targets)?;
    let (out, _) = joint_denoise(&ens, cfg, Algorithm::Npc, None)?;
    Ok((0..class_columns.len())
        .map(|i| inverse_normalize(&out.members[i], &out.scale_shifts[i]))
        .collect())
}

/// Hyperparameter grids for [`tune`].
#[derive(Debug, Clone)]
pub struct TuneGrids {
    pub sigma_sq: Vec<f64>,
    pub sigma_k_sq: Vec<f64>,
    pub lambda_j: Vec<f64>,
}

/// Exhaustive grid search over (sigma_sq, sigma_k_sq, lambda_j): runs the
/// denoising loop for every combination, scores each iteration with
/// `val_metric`, and returns the best `(config, iteration, score)`. Ties go
/// to the smallest grid index, then the smallest iteration.
pub fn tune(
    ensemble: &PredictorEnsemble,
    base_cfg: &DenoiseConfig,
    algorithm: Algorithm,
    grids: &TuneGrids,
    val_metric: &dyn Fn(&[NormalizedPredictor]) -> f64,
) -> Result<(DenoiseConfig, usize, f64)> {
    if grids.sigma_sq.is_empty() || grids.sigma_k_sq.is_empty() || grids.lambda_j.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut best: Option<(DenoiseConfig, usize, f64)> = None;
    for &sigma_sq in &grids.sigma_sq {
        for &sigma_k_sq in &grids.sigma_k_sq {
            for &lambda_j in &grids.lambda_j {
                let cfg = DenoiseConfig {
                    sigma_sq,
                    sigma_k_sq,
                    lambda_j,
                    ..*base_cfg
                };
                let (_, trace) = joint_denoise(ensemble, &cfg, algorithm, Some(val_metric))?;
                let vals = trace.val_metric.expect("metric was supplied");
                for (t, &v) in vals.iter().enumerate() {
                    let better = match &best {
                        None => true,
                        Some((_, _, bv)) => v > *bv,
                    };
                    if better {
                        best = Some((cfg, t, v));
                    }
                }
            }
        }
    }
    Ok(best.expect("grids are non-empty"))
}
