//! Benchmark scenario runners: baseline / OPC / LPC / NPC over seeded
//! synthetic datasets with validation-based hyperparameter and iteration
//! selection, reporting test accuracies per seed.
//!
//! Protocol per seed: generate the dataset, split its points into validation
//! and test halves, run each algorithm's configuration grid, score every
//! iteration (including iteration 0 = the untouched baseline) on the
//! validation half, and report the test accuracy of the selected iterate.
//!
//! The toy scenarios denoise the target only (their references are exact
//! binary attributes; updating them jointly can only corrupt them), while the
//! attribute and multi-class scenarios default to joint denoising since their
//! references are themselves noisy.

use nalgebra::DMatrix;
use predcomb::bench::{
    classification_accuracy, gen_attribute_benchmark, gen_multiclass, gen_toy, rank_accuracy,
    Dataset, Split, ToyMode, ToySpec,
};
use predcomb::denoise::{joint_denoise, Algorithm, DenoiseConfig, PredictorEnsemble};
use predcomb::kernel::median_heuristic;
use predcomb::norm::{inverse_normalize, NormalizedPredictor};
use predcomb::{Error, Result};

/// OPC baseline hyperparameters: a sharp weight bandwidth, mirroring the
/// source method's near-zero weights for references that are not already
/// close to the target.
pub const OPC_SIGMA_O_SQ: f64 = 0.1;
pub const OPC_LAMBDA_O: f64 = 1.0;

/// NPC kernel-scale grid, as multiples of the median heuristic.
pub const NPC_SIGMA_K_MULTS: [f64; 2] = [0.3, 1.0];
/// NPC GP-noise variance used by the benchmark grids.
pub const NPC_SIGMA_SQ: f64 = 0.1;

/// Which NPC variant(s) to add alongside the defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    None,
    /// Add the flipped-`joint` NPC variant.
    Joint,
    /// Add the isotropic-kernel (ARD off) NPC variant.
    Ard,
}

impl Ablation {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "joint" => Some(Ablation::Joint),
            "ard" => Some(Ablation::Ard),
            _ => None,
        }
    }
}

/// Test accuracies of one algorithm across seeds.
#[derive(Debug, Clone)]
pub struct AlgoResult {
    pub algorithm: String,
    pub per_seed: Vec<f64>,
}

/// Everything a `bench` invocation reports.
#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub scenario: String,
    pub seeds: Vec<u64>,
    pub baseline: Vec<f64>,
    pub algorithms: Vec<AlgoResult>,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl ScenarioReport {
    /// `scenario,algorithm,seed,accuracy,offset_vs_baseline` rows, baseline
    /// included.
    pub fn per_seed_csv(&self) -> String {
        let mut out = String::from("scenario,algorithm,seed,accuracy,offset_vs_baseline\n");
        for (k, &seed) in self.seeds.iter().enumerate() {
            out.push_str(&format!(
                "{},baseline,{},{},0.0\n",
                self.scenario, seed, self.baseline[k]
            ));
        }
        for algo in &self.algorithms {
            for (k, &seed) in self.seeds.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    self.scenario,
                    algo.algorithm,
                    seed,
                    algo.per_seed[k],
                    algo.per_seed[k] - self.baseline[k]
                ));
            }
        }
        out
    }

    /// `scenario,algorithm,mean_accuracy,std_accuracy,mean_offset,std_offset`.
    pub fn summary_csv(&self) -> String {
        let mut out =
            String::from("scenario,algorithm,mean_accuracy,std_accuracy,mean_offset,std_offset\n");
        let (bm, bs) = mean_std(&self.baseline);
        out.push_str(&format!("{},baseline,{bm},{bs},0.0,0.0\n", self.scenario));
        for algo in &self.algorithms {
            let (m, s) = mean_std(&algo.per_seed);
            let offsets: Vec<f64> = algo
                .per_seed
                .iter()
                .zip(&self.baseline)
                .map(|(a, b)| a - b)
                .collect();
            let (om, os) = mean_std(&offsets);
            out.push_str(&format!(
                "{},{},{m},{s},{om},{os}\n",
                self.scenario, algo.algorithm
            ));
        }
        out
    }

    /// Human-readable table of mean +/- std accuracies and offsets.
    pub fn pretty(&self) -> String {
        let mut out = format!(
            "scenario {} ({} seeds)\n{:<14} {:>18} {:>20}\n",
            self.scenario,
            self.seeds.len(),
            "algorithm",
            "accuracy",
            "offset vs baseline"
        );
        let (bm, bs) = mean_std(&self.baseline);
        out.push_str(&format!(
            "{:<14} {:>10.2} ± {:<5.2} {:>20}\n",
            "baseline", bm, bs, "-"
        ));
        for algo in &self.algorithms {
            let (m, s) = mean_std(&algo.per_seed);
            let offsets: Vec<f64> = algo
                .per_seed
                .iter()
                .zip(&self.baseline)
                .map(|(a, b)| a - b)
                .collect();
            let (om, os) = mean_std(&offsets);
            out.push_str(&format!(
                "{:<14} {:>10.2} ± {:<5.2} {:>12.2} ± {:<5.2}\n",
                algo.algorithm, m, s, om, os
            ));
        }
        out
    }
}

/// Median heuristic over the normalized reference rows of an ensemble
/// (members other than index 0, or a given member set).
fn ensemble_median_heuristic(ens: &PredictorEnsemble, skip: usize) -> f64 {
    let cols: Vec<_> = ens
        .members()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != skip)
        .map(|(_, m)| m.values().clone())
        .collect();
    median_heuristic(&DMatrix::from_columns(&cols))
}

fn subset(vals: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| vals[i]).collect()
}

/// Validation-selected test accuracy: runs every `(config, algorithm)` pair,
/// scores all iterations (t = 0 included) on the validation metric, and
/// returns the test metric of the best-validation iterate. Ties keep the
/// earliest (grid order, then iteration) candidate.
fn select_by_validation(
    ens: &PredictorEnsemble,
    runs: &[(DenoiseConfig, Algorithm)],
    val_metric: &dyn Fn(&[NormalizedPredictor]) -> f64,
    test_metric: &dyn Fn(&[NormalizedPredictor]) -> f64,
) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None; // (val, test)
    for (cfg, algo) in runs {
        let (_, trace) = joint_denoise(ens, cfg, *algo, None)?;
        for targets in &trace.targets {
            let v = val_metric(targets);
            if best.map_or(true, |(bv, _)| v > bv) {
                best = Some((v, test_metric(targets)));
            }
        }
    }
    best.ok_or(Error::EmptyGrid).map(|(_, t)| t)
}

fn npc_grid(
    med: f64,
    joint: bool,
    ard_options: &[bool],
    n_iters: usize,
) -> Vec<(DenoiseConfig, Algorithm)> {
    let mut out = Vec::new();
    for &use_ard in ard_options {
        for mult in NPC_SIGMA_K_MULTS {
            out.push((
                DenoiseConfig {
                    sigma_sq: NPC_SIGMA_SQ,
                    sigma_k_sq: mult * med,
                    joint,
                    use_ard,
                    n_iters,
                    ..DenoiseConfig::default()
                },
                Algorithm::Npc,
            ));
        }
    }
    out
}

fn plain_cfg(joint: bool, n_iters: usize) -> DenoiseConfig {
    DenoiseConfig {
        joint,
        use_ard: false,
        n_iters,
        ..DenoiseConfig::default()
    }
}

struct RankScenario<'a> {
    ds: &'a Dataset,
    val_idx: Vec<usize>,
    test_idx: Vec<usize>,
}

impl<'a> RankScenario<'a> {
    fn new(ds: &'a Dataset) -> Result<Self> {
        if ds.ground_truth.is_none() {
            return Err(Error::InvalidInput("scenario requires ground truth".into()));
        }
        Ok(Self {
            val_idx: ds.split_indices(Split::Val),
            test_idx: ds.split_indices(Split::Test),
            ds,
        })
    }

    fn accuracy(&self, vals: &[f64], idx: &[usize]) -> f64 {
        let gt = self.ds.ground_truth.as_ref().expect("checked in new");
        rank_accuracy(&subset(vals, idx), &subset(gt.as_slice(), idx))
            .expect("subset metrics on generated data")
    }
}

/// Runs a toy scenario (`toy1` = difference, `toy2` = xor).
pub fn run_toy(
    mode: ToyMode,
    n_seeds: u64,
    n_points: usize,
    noise_std: f64,
    ablate: Ablation,
) -> Result<ScenarioReport> {
    let scenario = match mode {
        ToyMode::Difference => "toy1",
        ToyMode::Xor => "toy2",
    };
    let mut report = ScenarioReport {
        scenario: scenario.into(),
        seeds: (0..n_seeds).collect(),
        baseline: Vec::new(),
        algorithms: Vec::new(),
    };
    let mut algo_specs: Vec<(String, AblatedKind)> = vec![
        ("opc".into(), AblatedKind::Opc),
        ("lpc".into(), AblatedKind::Lpc { joint: false }),
        ("npc".into(), AblatedKind::Npc { joint: false, ard_options: vec![true, false] }),
    ];
    match ablate {
        Ablation::None => {}
        Ablation::Joint => algo_specs.push((
            "npc-joint".into(),
            AblatedKind::Npc { joint: true, ard_options: vec![true, false] },
        )),
        Ablation::Ard => algo_specs.push((
            "npc-noard".into(),
            AblatedKind::Npc { joint: false, ard_options: vec![false] },
        )),
    }
    let mut per_algo: Vec<Vec<f64>> = vec![Vec::new(); algo_specs.len()];
    for seed in 0..n_seeds {
        let ds = gen_toy(&ToySpec {
            n_points,
            noise_std,
            mode,
            seed,
        })?;
        let sc = RankScenario::new(&ds)?;
        let ens = PredictorEnsemble::from_target_and_refs(&ds.target, &ds.references)?;
        let med = ensemble_median_heuristic(&ens, 0);
        report
            .baseline
            .push(sc.accuracy(ds.target.as_slice(), &sc.test_idx));
        let val_metric = |t: &[NormalizedPredictor]| sc.accuracy(t[0].as_slice(), &sc.val_idx);
        let test_metric = |t: &[NormalizedPredictor]| sc.accuracy(t[0].as_slice(), &sc.test_idx);
        for (k, (_, kind)) in algo_specs.iter().enumerate() {
            // Toy references are exact and the validation picks the best
            // iterate anyway, so a short iteration budget and a relaxed
            // eigen-solver tolerance suffice.
            let mut runs = kind.runs(med, 10);
            for (cfg, _) in &mut runs {
                cfg.power_tol = 1e-8;
            }
            per_algo[k].push(select_by_validation(&ens, &runs, &val_metric, &test_metric)?);
        }
    }
    for ((name, _), per_seed) in algo_specs.into_iter().zip(per_algo) {
        report.algorithms.push(AlgoResult {
            algorithm: name,
            per_seed,
        });
    }
    Ok(report)
}

enum AblatedKind {
    Opc,
    Lpc { joint: bool },
    Npc { joint: bool, ard_options: Vec<bool> },
}

impl AblatedKind {
    fn runs(&self, med: f64, n_iters: usize) -> Vec<(DenoiseConfig, Algorithm)> {
        match self {
            AblatedKind::Opc => vec![(
                plain_cfg(false, n_iters),
                Algorithm::Opc {
                    sigma_o_sq: OPC_SIGMA_O_SQ,
                    lambda_o: OPC_LAMBDA_O,
                },
            )],
            AblatedKind::Lpc { joint } => vec![(plain_cfg(*joint, n_iters), Algorithm::Lpc)],
            AblatedKind::Npc { joint, ard_options } => {
                npc_grid(med, *joint, ard_options, n_iters)
            }
        }
    }
}

/// Runs the attribute-ranking scenario: 5 informative + 8 random references,
/// 4 latent classes, joint denoising by default.
pub fn run_attr(n_seeds: u64, ablate: Ablation) -> Result<ScenarioReport> {
    let mut report = ScenarioReport {
        scenario: "attr".into(),
        seeds: (0..n_seeds).collect(),
        baseline: Vec::new(),
        algorithms: Vec::new(),
    };
    let mut algo_specs: Vec<(String, AblatedKind)> = vec![
        ("opc".into(), AblatedKind::Opc),
        ("lpc".into(), AblatedKind::Lpc { joint: true }),
        ("npc".into(), AblatedKind::Npc { joint: true, ard_options: vec![true] }),
    ];
    match ablate {
        Ablation::None => {}
        Ablation::Joint => algo_specs.push((
            "npc-nojoint".into(),
            AblatedKind::Npc { joint: false, ard_options: vec![true] },
        )),
        Ablation::Ard => algo_specs.push((
            "npc-noard".into(),
            AblatedKind::Npc { joint: true, ard_options: vec![false] },
        )),
    }
    let mut per_algo: Vec<Vec<f64>> = vec![Vec::new(); algo_specs.len()];
    for seed in 0..n_seeds {
        let (ds, _labels) = gen_attribute_benchmark(150, 4, 5, 8, 0.75, seed)?;
        let sc = RankScenario::new(&ds)?;
        let ens = PredictorEnsemble::from_target_and_refs(&ds.target, &ds.references)?;
        let med = ensemble_median_heuristic(&ens, 0);
        report
            .baseline
            .push(sc.accuracy(ds.target.as_slice(), &sc.test_idx));
        let val_metric = |t: &[NormalizedPredictor]| sc.accuracy(t[0].as_slice(), &sc.val_idx);
        let test_metric = |t: &[NormalizedPredictor]| sc.accuracy(t[0].as_slice(), &sc.test_idx);
        for (k, (_, kind)) in algo_specs.iter().enumerate() {
            let runs = kind.runs(med, DenoiseConfig::default().n_iters);
            per_algo[k].push(select_by_validation(&ens, &runs, &val_metric, &test_metric)?);
        }
    }
    for ((name, _), per_seed) in algo_specs.into_iter().zip(per_algo) {
        report.algorithms.push(AlgoResult {
            algorithm: name,
            per_seed,
        });
    }
    Ok(report)
}

/// Runs the multi-class scenario: 3 class-score columns plus 4 rank
/// references denoised jointly; the metric is classification accuracy of the
/// argmax over inverse-normalized class columns.
pub fn run_multiclass(n_seeds: u64, ablate: Ablation) -> Result<ScenarioReport> {
    let mut report = ScenarioReport {
        scenario: "multiclass".into(),
        seeds: (0..n_seeds).collect(),
        baseline: Vec::new(),
        algorithms: Vec::new(),
    };
    let mut variants: Vec<(String, bool, bool)> = vec![("npc".into(), true, true)]; // (name, joint, ard)
    match ablate {
        Ablation::None => {}
        Ablation::Joint => variants.push(("npc-nojoint".into(), false, true)),
        Ablation::Ard => variants.push(("npc-noard".into(), true, false)),
    }
    let mut per_algo: Vec<Vec<f64>> = vec![Vec::new(); variants.len()];
    for seed in 0..n_seeds {
        let (class_cols, refs, labels, split) = gen_multiclass(150, 3, 4, 0.5, seed)?;
        let n_classes = class_cols.len();
        let mut members = Vec::new();
        let mut shifts = Vec::new();
        for c in class_cols.iter().chain(refs.iter()) {
            let (p, s) = predcomb::center_normalize(c)?;
            members.push(p);
            shifts.push(s);
        }
        let ens = PredictorEnsemble::new(
            members,
            shifts.clone(),
            (0..n_classes).collect(),
        )?;
        let med = ensemble_median_heuristic(&ens, 0);
        let val_idx: Vec<usize> = split
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == Split::Val)
            .map(|(i, _)| i)
            .collect();
        let test_idx: Vec<usize> = split
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == Split::Test)
            .map(|(i, _)| i)
            .collect();
        let acc_cols = |cols: &[predcomb::EvaluationVector], idx: &[usize]| -> f64 {
            let sub: Vec<predcomb::EvaluationVector> = cols
                .iter()
                .map(|c| predcomb::EvaluationVector::new(subset(c.as_slice(), idx)).unwrap())
                .collect();
            let lab: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            classification_accuracy(&sub, &lab).expect("generated labels in range")
        };
        let denorm = |targets: &[NormalizedPredictor]| -> Vec<predcomb::EvaluationVector> {
            targets
                .iter()
                .enumerate()
                .map(|(h, t)| inverse_normalize(t, &shifts[h]))
                .collect()
        };
        report.baseline.push(acc_cols(&class_cols, &test_idx));
        let val_metric = |t: &[NormalizedPredictor]| acc_cols(&denorm(t), &val_idx);
        let test_metric = |t: &[NormalizedPredictor]| acc_cols(&denorm(t), &test_idx);
        for (k, (_, joint, ard)) in variants.iter().enumerate() {
            let runs = npc_grid(med, *joint, &[*ard], DenoiseConfig::default().n_iters);
            per_algo[k].push(select_by_validation(&ens, &runs, &val_metric, &test_metric)?);
        }
    }
    for ((name, _, _), per_seed) in variants.into_iter().zip(per_algo) {
        report.algorithms.push(AlgoResult {
            algorithm: name,
            per_seed,
        });
    }
    Ok(report)
}

/// Dispatch by scenario name.
pub fn run_scenario(name: &str, n_seeds: u64, ablate: Ablation) -> Result<ScenarioReport> {
    match name {
        "toy1" => run_toy(ToyMode::Difference, n_seeds, 100, 1.0, ablate),
        "toy2" => run_toy(ToyMode::Xor, n_seeds, 100, 1.0, ablate),
        "attr" => run_attr(n_seeds, ablate),
        "multiclass" => run_multiclass(n_seeds, ablate),
        other => Err(Error::InvalidInput(format!(
            "unknown scenario {other:?} (expected toy1, toy2, attr, multiclass)"
        ))),
    }
}
