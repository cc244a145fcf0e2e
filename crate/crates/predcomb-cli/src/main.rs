//! `predcomb` command-line interface.
//!
//! Subcommands:
//! - `toygen`: generate a synthetic toy dataset CSV.
//! - `denoise`: run predictor denoising on a dataset CSV.
//! - `ard`: report learned relevance weights for a dataset's references.
//! - `bench`: run a full benchmark scenario over multiple seeds.
//!
//! Exit codes: 0 success, 2 usage error (from clap), 3 I/O or parse error,
//! 4 numerical failure (with a diagnostic naming the failing operation).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use predcomb::bench::{
    gen_toy, load_dataset, rank_accuracy, save_dataset, save_results, Dataset, IterationMetric,
    ResultsSummary, Split, ToyMode, ToySpec,
};
use predcomb::denoise::{
    joint_denoise, tune, Algorithm, DenoiseConfig, PredictorEnsemble, TuneGrids,
};
use predcomb::kernel::median_heuristic;
use predcomb::norm::{inverse_normalize, NormalizedPredictor, ReferenceMatrix};
use predcomb::relevance::{optimize_relevance, ArdConfig};
use predcomb::Error;
use predcomb_cli::manifest::RunManifest;
use predcomb_cli::scenarios::{run_scenario, Ablation};

#[derive(Parser)]
#[command(
    name = "predcomb",
    version,
    about = "Predictor combination: denoise a target predictor using black-box references"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic toy dataset CSV.
    Toygen(ToygenArgs),
    /// Denoise the target column of a dataset CSV.
    Denoise(DenoiseArgs),
    /// Report learned relevance weights for the references of a dataset.
    Ard(ArdArgs),
    /// Run a benchmark scenario over multiple seeds.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Target = ref_1 - ref_2.
    Difference,
    /// Target = XOR(ref_1, ref_2).
    Xor,
}

#[derive(Args)]
struct ToygenArgs {
    /// Toy construction rule.
    #[arg(long, value_enum, default_value = "difference")]
    mode: ModeArg,
    /// Number of data points.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Standard deviation of the additive target noise.
    #[arg(long, default_value_t = 1.0)]
    noise_std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path; a `<output>.manifest.json` is written next to it.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    /// Nonlinear (GP) predictor combination.
    Npc,
    /// Linear predictor combination.
    Lpc,
    /// Pairwise-weighted baseline.
    Opc,
}

#[derive(Args)]
struct DenoiseArgs {
    /// Input dataset CSV (columns: id,split,gt,target,ref_1..ref_R).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "npc")]
    algo: AlgoArg,
    /// GP observation-noise variance.
    #[arg(long, default_value_t = 0.1)]
    sigma_sq: f64,
    /// Gaussian kernel scale; defaults to the median heuristic over the
    /// normalized references.
    #[arg(long)]
    sigma_k_sq: Option<f64>,
    /// Predictability regularization weight.
    #[arg(long, default_value_t = 1.0)]
    lambda_j: f64,
    /// Number of denoising iterations.
    #[arg(long, default_value_t = 20)]
    iters: usize,
    /// Nystrom basis size (capped at the number of points).
    #[arg(long, default_value_t = 300)]
    n_basis: usize,
    /// Update only the target, leaving references fixed.
    #[arg(long)]
    no_joint: bool,
    /// Use the isotropic kernel instead of learned relevance weights.
    #[arg(long)]
    no_ard: bool,
    /// OPC weight bandwidth.
    #[arg(long, default_value_t = 0.1)]
    sigma_o_sq: f64,
    /// OPC regularization weight.
    #[arg(long, default_value_t = 1.0)]
    lambda_o: f64,
    /// Grid-search sigma_sq, sigma_k_sq, lambda_j on the validation split.
    #[arg(long)]
    tune: bool,
    /// Output prefix: writes <prefix>.denoised.csv, <prefix>.metrics.csv,
    /// <prefix>.summary.json, <prefix>.manifest.json.
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args)]
struct ArdArgs {
    /// Input dataset CSV.
    #[arg(long)]
    input: PathBuf,
    /// ARD GP observation-noise variance.
    #[arg(long, default_value_t = 0.1)]
    lambda_noise: f64,
    /// Output CSV (`ref,weight_raw,weight_normalized`).
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Scenario name: toy1, toy2, attr, multiclass.
    scenario: String,
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Optional ablation: add an NPC variant with `joint` or `ard` flipped.
    #[arg(long)]
    ablate: Option<String>,
    /// Output prefix: writes <prefix>.per_seed.csv, <prefix>.summary.csv,
    /// <prefix>.manifest.json.
    #[arg(long)]
    out_prefix: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Toygen(args) => cmd_toygen(&args),
        Command::Denoise(args) => cmd_denoise(&args),
        Command::Ard(args) => cmd_ard(&args),
        Command::Bench(args) => cmd_bench(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Parse { .. } => 3,
        _ => 4,
    }
}

fn manifest_path(prefix: &Path) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_toygen(args: &ToygenArgs) -> predcomb::Result<()> {
    let start = Instant::now();
    let mode = match args.mode {
        ModeArg::Difference => ToyMode::Difference,
        ModeArg::Xor => ToyMode::Xor,
    };
    let spec = ToySpec {
        n_points: args.n,
        noise_std: args.noise_std,
        mode,
        seed: args.seed,
    };
    let ds = gen_toy(&spec)?;
    save_dataset(&args.output, &ds)?;
    let manifest = RunManifest {
        command: "toygen".into(),
        config: serde_json::to_value(&spec).expect("spec serializes"),
        seed: args.seed,
        inputs: vec![],
        outputs: vec![args.output.display().to_string()],
        duration_seconds: start.elapsed().as_secs_f64(),
    };
    manifest.write(&manifest_path(&args.output))?;
    println!(
        "wrote {} ({} points, {} references)",
        args.output.display(),
        ds.n_points(),
        ds.references.len()
    );
    Ok(())
}

/// Per-iteration validation metric for `denoise`: rank accuracy of the first
/// target against ground truth on the validation split, when ground truth is
/// present; otherwise `None` (the last iterate is kept).
fn make_val_metric<'a>(
    ds: &'a Dataset,
    idx: &'a [usize],
) -> Option<impl Fn(&[NormalizedPredictor]) -> f64 + 'a> {
    let gt = ds.ground_truth.as_ref()?;
    if idx.len() < 2 {
        return None;
    }
    Some(move |targets: &[NormalizedPredictor]| {
        let vals = targets[0].as_slice();
        let pred: Vec<f64> = idx.iter().map(|&i| vals[i]).collect();
        let truth: Vec<f64> = idx.iter().map(|&i| gt.as_slice()[i]).collect();
        rank_accuracy(&pred, &truth).unwrap_or(f64::NEG_INFINITY)
    })
}

fn cmd_denoise(args: &DenoiseArgs) -> predcomb::Result<()> {
    let start = Instant::now();
    let ds = load_dataset(&args.input)?;
    let ens = PredictorEnsemble::from_target_and_refs(&ds.target, &ds.references)?;
    let ref_cols: Vec<_> = ens.members()[1..].iter().map(|m| m.values().clone()).collect();
    let med = median_heuristic(&DMatrix::from_columns(&ref_cols));
    let mut cfg = DenoiseConfig {
        sigma_sq: args.sigma_sq,
        sigma_k_sq: args.sigma_k_sq.unwrap_or(med),
        lambda_j: args.lambda_j,
        n_iters: args.iters,
        n_basis: args.n_basis,
        joint: !args.no_joint,
        use_ard: !args.no_ard,
        ..DenoiseConfig::default()
    };
    let algorithm = match args.algo {
        AlgoArg::Npc => Algorithm::Npc,
        AlgoArg::Lpc => Algorithm::Lpc,
        AlgoArg::Opc => Algorithm::Opc {
            sigma_o_sq: args.sigma_o_sq,
            lambda_o: args.lambda_o,
        },
    };
    let val_idx = ds.split_indices(Split::Val);
    let test_idx = ds.split_indices(Split::Test);
    let val_metric = make_val_metric(&ds, &val_idx);

    if args.tune {
        let metric = val_metric
            .as_ref()
            .ok_or_else(|| Error::InvalidInput(
                "--tune requires ground truth and a validation split".into(),
            ))?;
        let grids = TuneGrids {
            sigma_sq: vec![1e-3, 1e-2, 1e-1, 1.0],
            sigma_k_sq: vec![0.1 * med, med, 10.0 * med],
            lambda_j: vec![0.1, 1.0, 10.0],
        };
        let (best_cfg, _, _) = tune(&ens, &cfg, algorithm, &grids, metric)?;
        cfg = best_cfg;
    }

    let metric_ref: Option<&dyn Fn(&[NormalizedPredictor]) -> f64> =
        val_metric.as_ref().map(|m| m as &dyn Fn(&[NormalizedPredictor]) -> f64);
    let (_, trace) = joint_denoise(&ens, &cfg, algorithm, metric_ref)?;

    // Select the iterate: best validation metric (earliest on ties) when a
    // metric exists, else the final iterate.
    let chosen_t = match &trace.val_metric {
        Some(vals) => {
            let mut best = 0usize;
            for (t, &v) in vals.iter().enumerate() {
                if v > vals[best] {
                    best = t;
                }
            }
            best
        }
        None => trace.targets.len() - 1,
    };
    let chosen = &trace.targets[chosen_t][0];
    let denoised = inverse_normalize(chosen, ens.scale_shift(0));

    // <prefix>.denoised.csv: id,value in original target units.
    let denoised_path = with_suffix(&args.out_prefix, ".denoised.csv");
    {
        let mut body = String::from("id,value\n");
        for (i, v) in denoised.as_slice().iter().enumerate() {
            body.push_str(&format!("{i},{v}\n"));
        }
        std::fs::write(&denoised_path, body)?;
    }

    let mut per_iteration = Vec::new();
    if let Some(vals) = &trace.val_metric {
        for (t, &v) in vals.iter().enumerate() {
            per_iteration.push(IterationMetric {
                iteration: t,
                metric: "val_rank_accuracy".into(),
                value: v,
            });
        }
    }
    let mut final_metrics = BTreeMap::new();
    final_metrics.insert("selected_iteration".to_string(), chosen_t as f64);
    if let (Some(gt), true) = (&ds.ground_truth, test_idx.len() >= 2) {
        let pred: Vec<f64> = test_idx.iter().map(|&i| chosen.as_slice()[i]).collect();
        let truth: Vec<f64> = test_idx.iter().map(|&i| gt.as_slice()[i]).collect();
        final_metrics.insert("test_rank_accuracy".to_string(), rank_accuracy(&pred, &truth)?);
    }
    if let Some(vals) = &trace.val_metric {
        final_metrics.insert("val_rank_accuracy".to_string(), vals[chosen_t]);
    }

    let config_json = serde_json::json!({
        "algorithm": match args.algo {
            AlgoArg::Npc => "npc",
            AlgoArg::Lpc => "lpc",
            AlgoArg::Opc => "opc",
        },
        "sigma_sq": cfg.sigma_sq,
        "sigma_k_sq": cfg.sigma_k_sq,
        "lambda_j": cfg.lambda_j,
        "n_iters": cfg.n_iters,
        "n_basis": cfg.n_basis,
        "joint": cfg.joint,
        "use_ard": cfg.use_ard,
        "sigma_o_sq": args.sigma_o_sq,
        "lambda_o": args.lambda_o,
        "tuned": args.tune,
    });
    let summary = ResultsSummary {
        config: config_json.clone(),
        per_iteration,
        final_metrics: final_metrics.clone(),
        seed: 0,
    };
    let metrics_path = with_suffix(&args.out_prefix, ".metrics.csv");
    let summary_path = with_suffix(&args.out_prefix, ".summary.json");
    save_results(&metrics_path, &summary_path, &summary)?;

    let manifest = RunManifest {
        command: "denoise".into(),
        config: config_json,
        seed: 0,
        inputs: vec![args.input.display().to_string()],
        outputs: vec![
            denoised_path.display().to_string(),
            metrics_path.display().to_string(),
            summary_path.display().to_string(),
        ],
        duration_seconds: start.elapsed().as_secs_f64(),
    };
    manifest.write(&manifest_path(&args.out_prefix))?;

    for w in &trace.gap_warnings {
        eprintln!("warning: near-degenerate spectral gap at iteration {w}");
    }
    match final_metrics.get("test_rank_accuracy") {
        Some(acc) => println!(
            "selected iteration {chosen_t}; test rank accuracy {acc:.2}"
        ),
        None => println!("selected iteration {chosen_t} (no ground truth: kept final iterate)"),
    }
    Ok(())
}

fn cmd_ard(args: &ArdArgs) -> predcomb::Result<()> {
    let start = Instant::now();
    let ds = load_dataset(&args.input)?;
    let ens = PredictorEnsemble::from_target_and_refs(&ds.target, &ds.references)?;
    let refs = ReferenceMatrix::from_columns(&ens.members()[1..].to_vec())?;
    let cfg = ArdConfig {
        lambda_noise: args.lambda_noise,
        ..ArdConfig::default()
    };
    let weights = optimize_relevance(ens.member(0), &refs, &cfg)?;
    let raw = weights.sigma_linear();
    let total: f64 = raw.iter().sum();
    let mut body = String::from("ref,weight_raw,weight_normalized\n");
    for (i, w) in raw.iter().enumerate() {
        body.push_str(&format!("ref_{},{},{}\n", i + 1, w, w / total));
    }
    std::fs::write(&args.output, body)?;
    let manifest = RunManifest {
        command: "ard".into(),
        config: serde_json::json!({ "lambda_noise": args.lambda_noise }),
        seed: 0,
        inputs: vec![args.input.display().to_string()],
        outputs: vec![args.output.display().to_string()],
        duration_seconds: start.elapsed().as_secs_f64(),
    };
    manifest.write(&manifest_path(&args.output))?;
    println!("wrote {} ({} references)", args.output.display(), raw.len());
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> predcomb::Result<()> {
    let start = Instant::now();
    let ablate = match &args.ablate {
        None => Ablation::None,
        Some(s) => Ablation::parse(s).ok_or_else(|| {
            Error::InvalidInput(format!("unknown ablation {s:?} (expected joint or ard)"))
        })?,
    };
    if args.seeds == 0 {
        return Err(Error::InvalidInput("--seeds must be >= 1".into()));
    }
    let report = run_scenario(&args.scenario, args.seeds, ablate)?;
    let per_seed_path = with_suffix(&args.out_prefix, ".per_seed.csv");
    let summary_path = with_suffix(&args.out_prefix, ".summary.csv");
    std::fs::write(&per_seed_path, report.per_seed_csv())?;
    std::fs::write(&summary_path, report.summary_csv())?;
    let manifest = RunManifest {
        command: "bench".into(),
        config: serde_json::json!({
            "scenario": args.scenario,
            "seeds": args.seeds,
            "ablate": args.ablate,
        }),
        seed: 0,
        inputs: vec![],
        outputs: vec![
            per_seed_path.display().to_string(),
            summary_path.display().to_string(),
        ],
        duration_seconds: start.elapsed().as_secs_f64(),
    };
    manifest.write(&manifest_path(&args.out_prefix))?;
    print!("{}", report.pretty());
    Ok(())
}
