//! Synthetic benchmark generation, rank/classification metrics, and dataset
//! file I/O.
//!
//! Generators are pure functions of their spec and seed: all randomness comes
//! from seeded ChaCha8 streams (stream 0 = data, 1 = observation noise,
//! 2 = split assignment) and Gaussian draws use an explicit Box-Muller
//! transform of the uniform stream, so outputs are identical across platforms.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::norm::EvaluationVector;
use crate::{Error, Result};

/// Toy-problem target construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyMode {
    /// `f_GT = g_1 - g_2`
    Difference,
    /// `f_GT = XOR(g_1, g_2)`
    Xor,
}

/// Parameters of the two-reference toy problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    pub n_points: usize,
    pub noise_std: f64,
    pub mode: ToyMode,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            n_points: 100,
            noise_std: 1.0,
            mode: ToyMode::Difference,
            seed: 0,
        }
    }
}

/// Per-point dataset split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// A generated or loaded benchmark instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Noisy initial target f^0.
    pub target: EvaluationVector,
    pub references: Vec<EvaluationVector>,
    pub ground_truth: Option<EvaluationVector>,
    pub split: Vec<Split>,
}

impl Dataset {
    pub fn n_points(&self) -> usize {
        self.target.len()
    }

    /// Indices belonging to one split.
    pub fn split_indices(&self, which: Split) -> Vec<usize> {
        self.split
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == which)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Metric results for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub kendall_x100: f64,
    pub classification_accuracy_pct: Option<f64>,
    pub per_iteration: Option<Vec<f64>>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard-normal draw via Box-Muller on the uniform stream (no platform
/// sampling library, for bitwise reproducibility).
pub(crate) fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Evenly shuffled validation/test split (no training points; the toy
/// protocols tune on val and report on test).
fn val_test_split(n: usize, rng: &mut ChaCha8Rng) -> Vec<Split> {
    let mut split: Vec<Split> = (0..n)
        .map(|i| if i < n / 2 { Split::Val } else { Split::Test })
        .collect();
    split.shuffle(rng);
    split
}

/// Generates a toy problem: binary references `g_1, g_2`, ground truth
/// `g_1 - g_2` or `XOR(g_1, g_2)`, and a target observed with i.i.d. Gaussian
/// noise.
pub fn gen_toy(spec: &ToySpec) -> Result<Dataset> {
    if spec.n_points < 2 {
        return Err(Error::InvalidInput(format!(
            "n_points must be >= 2, got {}",
            spec.n_points
        )));
    }
    if !(spec.noise_std >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "noise_std must be >= 0, got {}",
            spec.noise_std
        )));
    }
    let n = spec.n_points;
    let mut data = stream_rng(spec.seed, 0);
    let mut noise = stream_rng(spec.seed, 1);
    let mut split_rng = stream_rng(spec.seed, 2);
    let g1: Vec<f64> = (0..n).map(|_| f64::from(data.gen_range(0..2u8))).collect();
    let g2: Vec<f64> = (0..n).map(|_| f64::from(data.gen_range(0..2u8))).collect();
    let f_gt: Vec<f64> = g1
        .iter()
        .zip(&g2)
        .map(|(a, b)| match spec.mode {
            ToyMode::Difference => a - b,
            ToyMode::Xor => {
                if (*a as u8) ^ (*b as u8) == 1 {
                    1.0
                } else {
                    0.0
                }
            }
        })
        .collect();
    let f0: Vec<f64> = f_gt
        .iter()
        .map(|v| v + spec.noise_std * gaussian(&mut noise))
        .collect();
    Ok(Dataset {
        target: EvaluationVector::new(f0)?,
        references: vec![EvaluationVector::new(g1)?, EvaluationVector::new(g2)?],
        ground_truth: Some(EvaluationVector::new(f_gt)?),
        split: val_test_split(n, &mut split_rng),
    })
}

/// Generates an attribute-style benchmark: latent class labels, informative
/// references that are seeded monotone functions of the class index plus
/// noise, pure-noise random references, and a class-derived target ranking
/// observed with noise. Returns the dataset plus the latent labels.
pub fn gen_attribute_benchmark(
    n_points: usize,
    n_classes: usize,
    n_informative: usize,
    n_random: usize,
    noise_std: f64,
    seed: u64,
) -> Result<(Dataset, Vec<usize>)> {
    if n_points < 2 || n_classes < 2 || n_informative == 0 {
        return Err(Error::InvalidInput(
            "need n_points >= 2, n_classes >= 2, n_informative >= 1".into(),
        ));
    }
    let mut data = stream_rng(seed, 0);
    let mut noise = stream_rng(seed, 1);
    let mut split_rng = stream_rng(seed, 2);
    let labels: Vec<usize> = (0..n_points).map(|_| data.gen_range(0..n_classes)).collect();
    let mut references = Vec::with_capacity(n_informative + n_random);
    for _ in 0..n_informative {
        // a monotone (possibly decreasing) affine map of the class index,
        // observed with mild noise
        let slope: f64 = data.gen_range(0.5..1.5) * if data.gen_bool(0.5) { 1.0 } else { -1.0 };
        let vals: Vec<f64> = labels
            .iter()
            .map(|&c| slope * c as f64 + 0.3 * gaussian(&mut data))
            .collect();
        references.push(EvaluationVector::new(vals)?);
    }
    for _ in 0..n_random {
        let vals: Vec<f64> = (0..n_points).map(|_| gaussian(&mut data)).collect();
        references.push(EvaluationVector::new(vals)?);
    }
    let f_gt: Vec<f64> = labels.iter().map(|&c| c as f64).collect();
    let f0: Vec<f64> = f_gt
        .iter()
        .map(|v| v + noise_std * gaussian(&mut noise))
        .collect();
    Ok((
        Dataset {
            target: EvaluationVector::new(f0)?,
            references,
            ground_truth: Some(EvaluationVector::new(f_gt)?),
            split: val_test_split(n_points, &mut split_rng),
        },
        labels,
    ))
}

/// Generates a multi-class problem: per-class score columns (noisy one-hot
/// indicators of the latent label) plus informative rank references.
pub fn gen_multiclass(
    n_points: usize,
    n_classes: usize,
    n_refs: usize,
    noise_std: f64,
    seed: u64,
) -> Result<(Vec<EvaluationVector>, Vec<EvaluationVector>, Vec<usize>, Vec<Split>)> {
    if n_points < 2 || n_classes < 2 || n_refs == 0 {
        return Err(Error::InvalidInput(
            "need n_points >= 2, n_classes >= 2, n_refs >= 1".into(),
        ));
    }
    let mut data = stream_rng(seed, 0);
    let mut noise = stream_rng(seed, 1);
    let mut split_rng = stream_rng(seed, 2);
    let labels: Vec<usize> = (0..n_points).map(|_| data.gen_range(0..n_classes)).collect();
    let mut refs = Vec::with_capacity(n_refs);
    for _ in 0..n_refs {
        let slope: f64 = data.gen_range(0.5..1.5) * if data.gen_bool(0.5) { 1.0 } else { -1.0 };
        let vals: Vec<f64> = labels
            .iter()
            .map(|&c| slope * c as f64 + 0.2 * gaussian(&mut data))
            .collect();
        refs.push(EvaluationVector::new(vals)?);
    }
    let mut class_cols = Vec::with_capacity(n_classes);
    for h in 0..n_classes {
        let vals: Vec<f64> = labels
            .iter()
            .map(|&c| f64::from(u8::from(c == h)) + noise_std * gaussian(&mut noise))
            .collect();
        class_cols.push(EvaluationVector::new(vals)?);
    }
    Ok((class_cols, refs, labels, val_test_split(n_points, &mut split_rng)))
}

/// Kendall tau times 100 with the raw pair count as denominator: pairs tied
/// in either argument count as neither concordant nor discordant (tau-a).
pub fn kendall_x100(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { a: a.len(), b: b.len() });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidInput("need at least 2 points".into()));
    }
    let mut c = 0i64;
    let mut d = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            let s = da * db;
            if da != 0.0 && db != 0.0 {
                if s > 0.0 {
                    c += 1;
                } else {
                    d += 1;
                }
            }
        }
    }
    let total = (n * (n - 1) / 2) as f64;
    Ok(100.0 * (c - d) as f64 / total)
}

/// Rank accuracy against a (possibly tie-heavy) ground truth: pairs tied in
/// the ground truth are excluded from the comparison but padded into both
/// numerator and denominator at half weight, so an uninformative prediction
/// scores near the tie fraction and a prediction ordering every untied pair
/// correctly scores exactly 100.
pub fn rank_accuracy(pred: &[f64], gt: &[f64]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch { a: pred.len(), b: gt.len() });
    }
    let n = pred.len();
    if n < 2 {
        return Err(Error::InvalidInput("need at least 2 points".into()));
    }
    let mut c = 0i64;
    let mut d = 0i64;
    let mut gt_ties = 0i64;
    let mut strict = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let dg = gt[i] - gt[j];
            if dg == 0.0 {
                gt_ties += 1;
                continue;
            }
            strict += 1;
            let dp = pred[i] - pred[j];
            if dp == 0.0 {
                continue;
            }
            if dp * dg > 0.0 {
                c += 1;
            } else {
                d += 1;
            }
        }
    }
    let half_ties = gt_ties as f64 / 2.0;
    let denom = strict as f64 + half_ties;
    if denom == 0.0 {
        return Err(Error::InvalidInput("ground truth is entirely tied".into()));
    }
    Ok(100.0 * ((c - d) as f64 + half_ties) / denom)
}

/// Percent of points whose argmax column equals the label; argmax ties break
/// to the lowest column index.
pub fn classification_accuracy(pred_columns: &[EvaluationVector], labels: &[usize]) -> Result<f64> {
    let h = pred_columns.len();
    if h == 0 {
        return Err(Error::InvalidInput("need at least one column".into()));
    }
    let n = pred_columns[0].len();
    for col in pred_columns {
        if col.len() != n {
            return Err(Error::LengthMismatch { a: n, b: col.len() });
        }
    }
    if labels.len() != n {
        return Err(Error::LengthMismatch { a: n, b: labels.len() });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= h) {
        return Err(Error::LabelOutOfRange {
            label: bad as i64,
            classes: h,
        });
    }
    let mut correct = 0usize;
    for i in 0..n {
        let mut best = 0usize;
        for k in 1..h {
            if pred_columns[k].as_slice()[i] > pred_columns[best].as_slice()[i] {
                best = k;
            }
        }
        if best == labels[i] {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / n as f64)
}

/// Loads the dataset CSV schema `id,split,gt,target,ref_1,...,ref_R`.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(e, 0))?;
    let headers = reader.headers().map_err(|e| csv_error(e, 0))?.clone();
    let expect_fixed = ["id", "split", "gt", "target"];
    for (i, name) in expect_fixed.iter().enumerate() {
        match headers.get(i) {
            Some(h) if h == *name => {}
            other => {
                return Err(Error::Parse {
                    row: 0,
                    column: name.to_string(),
                    message: format!(
                        "expected header column {i} to be '{name}', found {:?}",
                        other.unwrap_or("<missing>")
                    ),
                })
            }
        }
    }
    let n_refs = headers.len().saturating_sub(4);
    if n_refs == 0 {
        return Err(Error::Parse {
            row: 0,
            column: "ref_1".into(),
            message: "dataset needs at least one reference column".into(),
        });
    }
    for r in 0..n_refs {
        let name = format!("ref_{}", r + 1);
        if headers.get(4 + r) != Some(name.as_str()) {
            return Err(Error::Parse {
                row: 0,
                column: name.clone(),
                message: format!("expected header column {}, found {:?}", name, headers.get(4 + r)),
            });
        }
    }
    let mut target = Vec::new();
    let mut gt: Vec<Option<f64>> = Vec::new();
    let mut refs: Vec<Vec<f64>> = vec![Vec::new(); n_refs];
    let mut split = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 1;
        let record = record.map_err(|e| csv_error(e, row))?;
        let field = |col: usize, name: &str| -> Result<&str> {
            record.get(col).ok_or_else(|| Error::Parse {
                row,
                column: name.to_string(),
                message: "missing field".into(),
            })
        };
        let parse_f64 = |col: usize, name: &str| -> Result<f64> {
            let s = field(col, name)?;
            s.trim().parse::<f64>().map_err(|e| Error::Parse {
                row,
                column: name.to_string(),
                message: format!("invalid number {s:?}: {e}"),
            })
        };
        let split_s = field(1, "split")?;
        split.push(Split::parse(split_s.trim()).ok_or_else(|| Error::Parse {
            row,
            column: "split".into(),
            message: format!("invalid split {split_s:?} (expected train/val/test)"),
        })?);
        let gt_s = field(2, "gt")?;
        if gt_s.trim().is_empty() {
            gt.push(None);
        } else {
            gt.push(Some(parse_f64(2, "gt")?));
        }
        target.push(parse_f64(3, "target")?);
        for (r, dst) in refs.iter_mut().enumerate() {
            dst.push(parse_f64(4 + r, &format!("ref_{}", r + 1))?);
        }
    }
    let ground_truth = if gt.iter().all(Option::is_some) {
        Some(EvaluationVector::new(gt.into_iter().map(Option::unwrap).collect())?)
    } else if gt.iter().all(Option::is_none) {
        None
    } else {
        return Err(Error::Parse {
            row: 0,
            column: "gt".into(),
            message: "gt must be present for all rows or none".into(),
        });
    };
    Ok(Dataset {
        target: EvaluationVector::new(target)?,
        references: refs
            .into_iter()
            .map(EvaluationVector::new)
            .collect::<Result<Vec<_>>>()?,
        ground_truth,
        split,
    })
}

fn csv_error(e: csv::Error, row: usize) -> Error {
    Error::Parse {
        row,
        column: String::new(),
        message: e.to_string(),
    }
}

/// Writes the dataset CSV schema (LF line endings, `.` decimal point).
pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let n = ds.n_points();
    if ds.split.len() != n {
        return Err(Error::LengthMismatch { a: n, b: ds.split.len() });
    }
    let mut w = csv::WriterBuilder::new()
        .from_path(path)
        .map_err(|e| csv_error(e, 0))?;
    let mut header = vec!["id".to_string(), "split".into(), "gt".into(), "target".into()];
    for r in 0..ds.references.len() {
        header.push(format!("ref_{}", r + 1));
    }
    w.write_record(&header).map_err(|e| csv_error(e, 0))?;
    for i in 0..n {
        let mut rec = vec![
            i.to_string(),
            ds.split[i].as_str().to_string(),
            ds.ground_truth
                .as_ref()
                .map(|g| format_num(g.as_slice()[i]))
                .unwrap_or_default(),
            format_num(ds.target.as_slice()[i]),
        ];
        for r in &ds.references {
            rec.push(format_num(r.as_slice()[i]));
        }
        w.write_record(&rec).map_err(|e| csv_error(e, i + 1))?;
    }
    w.flush()?;
    Ok(())
}

fn format_num(v: f64) -> String {
    let mut buf = ryu_style(v);
    if !buf.contains('.') && !buf.contains('e') && !buf.contains("inf") && !buf.contains("NaN") {
        buf.push_str(".0");
    }
    buf
}

fn ryu_style(v: f64) -> String {
    // shortest round-trip formatting, matching Rust's default float Display
    format!("{v}")
}

/// One `(iteration, metric, value)` row of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetric {
    pub iteration: usize,
    pub metric: String,
    pub value: f64,
}

/// JSON results summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsSummary {
    pub config: serde_json::Value,
    pub per_iteration: Vec<IterationMetric>,
    pub final_metrics: BTreeMap<String, f64>,
    pub seed: u64,
}

/// Writes the per-iteration results CSV (`iteration,metric,value`) and the
/// JSON summary next to it.
pub fn save_results(csv_path: &Path, json_path: &Path, summary: &ResultsSummary) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .from_path(csv_path)
        .map_err(|e| csv_error(e, 0))?;
    w.write_record(["iteration", "metric", "value"])
        .map_err(|e| csv_error(e, 0))?;
    for m in &summary.per_iteration {
        w.write_record([m.iteration.to_string(), m.metric.clone(), format_num(m.value)])
            .map_err(|e| csv_error(e, m.iteration + 1))?;
    }
    w.flush()?;
    let mut f = std::fs::File::create(json_path)?;
    let body = serde_json::to_string_pretty(summary).map_err(|e| Error::InvalidInput(e.to_string()))?;
    f.write_all(body.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}
